//! The guide's chapters, included as documentation so that every code sample
//! in the book compiles and runs with `cargo test --doc`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/grids-and-fields.md")]
pub mod grids_and_fields {}

#[doc = include_str!("../../../book/src/tensor-calculus.md")]
pub mod tensor_calculus {}

#[doc = include_str!("../../../book/src/operator-families.md")]
pub mod operator_families {}

#[doc = include_str!("../../../book/src/geodesics.md")]
pub mod geodesics {}

#[doc = include_str!("../../../book/src/exp-log.md")]
pub mod exp_log {}

#[doc = include_str!("../../../book/src/scaling-incompleteness.md")]
pub mod scaling_incompleteness {}

#[doc = include_str!("../../../book/src/ricci-vector-field.md")]
pub mod ricci_vector_field {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/file-formats.md")]
pub mod file_formats {}
