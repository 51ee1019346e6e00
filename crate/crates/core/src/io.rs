//! File formats: the normative JSON field files, trajectory monitor lines,
//! and run manifests.
//!
//! A field file is a single JSON object
//!
//! ```json
//! {"version": "...", "dim": 2, "shape": [16, 16], "lengths": [6.28, 6.28],
//!  "kind": "metric", "components": {"g_00": [...], "g_01": [...], "g_11": [...]}}
//! ```
//!
//! with values row-major, last axis fastest, and numbers written with 18
//! significant digits so round-trips are bit exact. Component names are
//! `g_00/g_01/g_11` for metric and symmetric kinds (`g_00` alone in one
//! dimension), `v_0/v_1` for vectors and `s` for scalars. Readers ignore
//! unknown members.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField, SymTensorField2, TensorField, VectorField};
use crate::geodesic::Trajectory;
use crate::grid::Grid;

/// A field with its interpretation, as stored on disk.
#[derive(Clone, Debug)]
pub enum StoredField {
    Metric(MetricField),
    Sym2(SymTensorField2),
    Scalar(ScalarField),
    Vector(VectorField),
}

impl StoredField {
    pub fn kind(&self) -> &'static str {
        match self {
            StoredField::Metric(_) => "metric",
            StoredField::Sym2(_) => "sym2",
            StoredField::Scalar(_) => "scalar",
            StoredField::Vector(_) => "vector",
        }
    }

    pub fn grid(&self) -> &Grid {
        match self {
            StoredField::Metric(f) => f.grid(),
            StoredField::Sym2(f) => f.grid(),
            StoredField::Scalar(f) => f.grid(),
            StoredField::Vector(f) => f.as_tensor().grid(),
        }
    }

    fn component_names(&self) -> Vec<String> {
        let dim = self.grid().dim();
        match self {
            StoredField::Metric(_) | StoredField::Sym2(_) => match dim {
                1 => vec!["g_00".into()],
                _ => vec!["g_00".into(), "g_01".into(), "g_11".into()],
            },
            StoredField::Scalar(_) => vec!["s".into()],
            StoredField::Vector(_) => (0..dim).map(|i| format!("v_{i}")).collect(),
        }
    }

    fn component(&self, i: usize) -> &[f64] {
        match self {
            StoredField::Metric(f) => f.sym().plane(i),
            StoredField::Sym2(f) => f.plane(i),
            StoredField::Scalar(f) => f.values(),
            StoredField::Vector(f) => f.as_tensor().plane(i),
        }
    }

    pub fn expect_metric(self) -> Result<MetricField> {
        match self {
            StoredField::Metric(f) => Ok(f),
            other => Err(Error::MalformedField(format!(
                "expected a metric field, found kind {}",
                other.kind()
            ))),
        }
    }

    pub fn expect_sym2(self) -> Result<SymTensorField2> {
        match self {
            StoredField::Sym2(f) => Ok(f),
            StoredField::Metric(f) => Ok(f.into_sym()),
            other => Err(Error::MalformedField(format!(
                "expected a symmetric field, found kind {}",
                other.kind()
            ))),
        }
    }
}

fn push_number(out: &mut String, v: f64) {
    // 17 fractional digits in scientific notation: 18 significant digits,
    // enough to reproduce any binary64 value exactly.
    write!(out, "{v:.17e}").expect("writing to string");
}

/// Serializes a field to the normative JSON text.
pub fn field_to_string(field: &StoredField) -> String {
    let grid = field.grid();
    let mut out = String::with_capacity(grid.len() * 26);
    out.push_str("{\"version\": \"");
    out.push_str(env!("CARGO_PKG_VERSION"));
    out.push_str("\", \"dim\": ");
    let _ = write!(out, "{}", grid.dim());
    out.push_str(", \"shape\": [");
    for (i, n) in grid.shape().iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{n}");
    }
    out.push_str("], \"lengths\": [");
    for (i, l) in grid.lengths().iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        push_number(&mut out, *l);
    }
    out.push_str("], \"kind\": \"");
    out.push_str(field.kind());
    out.push_str("\", \"components\": {");
    for (i, name) in field.component_names().iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "\"{name}\": [");
        for (j, v) in field.component(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            push_number(&mut out, *v);
        }
        out.push(']');
    }
    out.push_str("}}\n");
    out
}

pub fn write_field(path: &Path, field: &StoredField) -> Result<()> {
    std::fs::write(path, field_to_string(field))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<StoredField> {
    let text = std::fs::read_to_string(path)?;
    field_from_str(&text)
}

pub fn field_from_str(text: &str) -> Result<StoredField> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::MalformedField("top level must be an object".to_string()))?;
    let dim = obj
        .get("dim")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::MalformedField("missing dim".to_string()))? as usize;
    let shape: Vec<usize> = obj
        .get("shape")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::MalformedField("missing shape".to_string()))?
        .iter()
        .map(|v| v.as_u64().map(|u| u as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::MalformedField("shape entries must be integers".to_string()))?;
    let lengths: Vec<f64> = obj
        .get("lengths")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::MalformedField("missing lengths".to_string()))?
        .iter()
        .map(|v| v.as_f64())
        .collect::<Option<_>>()
        .ok_or_else(|| Error::MalformedField("lengths entries must be numbers".to_string()))?;
    let grid = Grid::new(dim, &shape, &lengths)?;
    let kind = obj
        .get("kind")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::MalformedField("missing kind".to_string()))?;
    let comps = obj
        .get("components")
        .and_then(|v| v.as_object())
        .ok_or_else(|| Error::MalformedField("missing components".to_string()))?;

    let get = |name: &str| -> Result<Vec<f64>> {
        let arr = comps
            .get(name)
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::MalformedField(format!("missing component {name}")))?;
        let vals: Option<Vec<f64>> = arr.iter().map(|v| v.as_f64()).collect();
        let vals =
            vals.ok_or_else(|| Error::MalformedField(format!("component {name} not numeric")))?;
        if vals.len() != grid.len() {
            return Err(Error::MalformedField(format!(
                "component {name} has {} values, grid has {}",
                vals.len(),
                grid.len()
            )));
        }
        Ok(vals)
    };

    match kind {
        "metric" | "sym2" => {
            let mut flat = get("g_00")?;
            if dim == 2 {
                flat.extend(get("g_01")?);
                flat.extend(get("g_11")?);
            }
            let sym = SymTensorField2::from_comps(grid, flat)?;
            if kind == "metric" {
                Ok(StoredField::Metric(MetricField::new(sym)?))
            } else {
                Ok(StoredField::Sym2(sym))
            }
        }
        "scalar" => Ok(StoredField::Scalar(ScalarField::from_values(
            grid,
            get("s")?,
        )?)),
        "vector" => {
            let mut flat = get("v_0")?;
            if dim == 2 {
                flat.extend(get("v_1")?);
            }
            let t = TensorField::from_planes(grid, vec![crate::field::Slot::Upper], flat)?;
            Ok(StoredField::Vector(VectorField::new(t)?))
        }
        other => Err(Error::MalformedField(format!("unknown kind {other}"))),
    }
}

/// Writes the per-step monitor records as JSON lines.
pub fn monitors_to_jsonl(traj: &Trajectory) -> String {
    let mut out = String::new();
    for m in &traj.monitors {
        let _ = writeln!(
            out,
            "{{\"t\": {:.17e}, \"energy\": {:.17e}, \"momentum_drift\": {:.17e}, \"spd_margin\": {:.17e}, \"step_size\": {:.17e}}}",
            m.t, m.energy, m.momentum_drift, m.spd_margin, m.step_size
        );
    }
    out
}

/// Writes a trajectory: monitors, snapshot field files and a manifest that
/// indexes them.
pub fn write_trajectory(dir: &Path, traj: &Trajectory, snapshots: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("monitors.jsonl"), monitors_to_jsonl(traj))?;

    let mut snaps = Vec::new();
    if snapshots {
        for (i, st) in traj.states.iter().enumerate() {
            let gname = format!("state_{i:05}_g.json");
            let hname = format!("state_{i:05}_h.json");
            write_field(&dir.join(&gname), &StoredField::Metric(st.g.clone()))?;
            write_field(&dir.join(&hname), &StoredField::Sym2(st.h.clone()))?;
            snaps.push(serde_json::json!({"index": i, "t": st.t, "g": gname, "h": hname}));
        }
    }
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "operator": traj.op,
        "grid": {
            "dim": traj.grid.dim(),
            "shape": traj.grid.shape(),
            "lengths": traj.grid.lengths(),
        },
        "dt": traj.options.dt,
        "t_final": traj.options.t_final,
        "scheme": traj.options.scheme,
        "halt": traj.halt,
        "boundary_reached": traj.boundary_reached(),
        "steps": traj.monitors.len() - 1,
        "monitors": "monitors.jsonl",
        "snapshots": snaps,
    });
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}
