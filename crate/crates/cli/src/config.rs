//! Run configuration: one JSON file describing the grid, the operator, the
//! initial data generators and the integrator. Seeds are mandatory wherever
//! randomness enters, so identical configurations produce identical artifacts.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use metman::field::{MetricField, SymTensorField2};
use metman::geodesic::{IntegrateOptions, Scheme};
use metman::io;
use metman::synth;
use metman::{Grid, OperatorSpec};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub lengths: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            dim: 2,
            shape: vec![32, 32],
            lengths: vec![std::f64::consts::TAU, std::f64::consts::TAU],
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> anyhow::Result<Grid> {
        Ok(Grid::new(self.dim, &self.shape, &self.lengths)?)
    }
}

fn default_amplitude() -> f64 {
    0.2
}

fn default_max_mode() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

/// Named metric generators.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    /// The flat metric, optionally scaled.
    Identity {
        #[serde(default = "one")]
        scale: f64,
    },
    /// Flat plus a seeded trigonometric perturbation.
    RandomSmooth {
        seed: u64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_max_mode")]
        max_mode: usize,
    },
    /// Conformally flat `exp(2 phi) delta` with a seeded `phi`.
    Conformal {
        seed: u64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_max_mode")]
        max_mode: usize,
    },
    /// Read from a field file.
    File { path: PathBuf },
}

impl Default for MetricSpec {
    fn default() -> Self {
        MetricSpec::Identity { scale: 1.0 }
    }
}

impl MetricSpec {
    pub fn build(&self, grid: &Grid) -> anyhow::Result<MetricField> {
        match self {
            MetricSpec::Identity { scale } => Ok(MetricField::flat(*grid).scale(*scale)?),
            MetricSpec::RandomSmooth {
                seed,
                amplitude,
                max_mode,
            } => Ok(synth::random_smooth_fields(grid, *seed, *amplitude, *max_mode)?.0),
            MetricSpec::Conformal {
                seed,
                amplitude,
                max_mode,
            } => {
                let phi = synth::random_scalar(grid, *seed, *amplitude, *max_mode)?;
                Ok(synth::conformal_metric(&phi)?)
            }
            MetricSpec::File { path } => {
                let field = io::read_field(path)
                    .with_context(|| format!("reading metric from {}", path.display()))?;
                if field.grid() != grid {
                    bail!("metric file grid does not match the configured grid");
                }
                Ok(field.expect_metric()?)
            }
        }
    }
}

/// Named velocity generators.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocitySpec {
    #[default]
    Zero,
    RandomSmooth {
        seed: u64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_max_mode")]
        max_mode: usize,
    },
    /// A multiple of the initial metric (radial launch).
    MetricMultiple { factor: f64 },
    /// A single-site bump: zero except one independent component of one point.
    PointBump {
        point: Vec<usize>,
        comp: usize,
        value: f64,
    },
    File { path: PathBuf },
}

impl VelocitySpec {
    pub fn build(&self, grid: &Grid, g0: &MetricField) -> anyhow::Result<SymTensorField2> {
        match self {
            VelocitySpec::Zero => Ok(SymTensorField2::zeros(*grid)),
            VelocitySpec::RandomSmooth {
                seed,
                amplitude,
                max_mode,
            } => Ok(synth::random_smooth_fields(grid, *seed, *amplitude, *max_mode)?.1),
            VelocitySpec::MetricMultiple { factor } => Ok(g0.sym().scale(*factor)),
            VelocitySpec::PointBump { point, comp, value } => {
                let mut u = SymTensorField2::zeros(*grid);
                let p = match (grid.dim(), point.as_slice()) {
                    (1, [i]) => grid.index(*i, 0),
                    (2, [i, j]) => grid.index(*i, *j),
                    _ => bail!("point must have one index per grid dimension"),
                };
                if *comp >= u.ncomp() {
                    bail!("component index {comp} out of range");
                }
                u.plane_mut(*comp)[p] = *value;
                Ok(u)
            }
            VelocitySpec::File { path } => {
                let field = io::read_field(path)
                    .with_context(|| format!("reading velocity from {}", path.display()))?;
                if field.grid() != grid {
                    bail!("velocity file grid does not match the configured grid");
                }
                Ok(field.expect_sym2()?)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub spd_floor: f64,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec {
            dt: 1e-3,
            t_final: 1.0,
            scheme: Scheme::Rk4,
            spd_floor: 1e-6,
        }
    }
}

impl IntegratorSpec {
    pub fn options(&self) -> IntegrateOptions {
        IntegrateOptions {
            dt: self.dt,
            t_final: self.t_final,
            scheme: self.scheme,
            spd_floor: self.spd_floor,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative agreement of the two curl-identity paths.
    pub curl_rel: f64,
    /// Normalized total-curvature bound for the curvature report.
    pub gauss_bonnet: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            curl_rel: 1e-2,
            gauss_bonnet: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSpec {
    /// Also write state snapshots as field files.
    pub snapshots: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridSpec,
    pub operator: OperatorSpec,
    #[serde(default)]
    pub initial_metric: MetricSpec,
    /// Target metric of the logarithm subcommand.
    #[serde(default)]
    pub target_metric: Option<MetricSpec>,
    #[serde(default)]
    pub initial_velocity: VelocitySpec,
    /// Directions for the curl test; seeded defaults when absent.
    #[serde(default)]
    pub direction_h: Option<VelocitySpec>,
    #[serde(default)]
    pub direction_k: Option<VelocitySpec>,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Applies command-line overrides: a square grid extent and a seed that
    /// replaces every generator seed.
    pub fn with_overrides(mut self, grid_n: Option<usize>, seed: Option<u64>) -> Self {
        if let Some(n) = grid_n {
            self.grid.shape = vec![n; self.grid.dim];
        }
        if let Some(s) = seed {
            let reseed_metric = |m: &mut MetricSpec, offset: u64| {
                match m {
                    MetricSpec::RandomSmooth { seed, .. } | MetricSpec::Conformal { seed, .. } => {
                        *seed = s + offset
                    }
                    _ => {}
                };
            };
            let reseed_velocity = |v: &mut VelocitySpec, offset: u64| {
                if let VelocitySpec::RandomSmooth { seed, .. } = v {
                    *seed = s + offset;
                }
            };
            reseed_metric(&mut self.initial_metric, 0);
            if let Some(t) = self.target_metric.as_mut() {
                reseed_metric(t, 1);
            }
            reseed_velocity(&mut self.initial_velocity, 2);
            if let Some(h) = self.direction_h.as_mut() {
                reseed_velocity(h, 3);
            }
            if let Some(k) = self.direction_k.as_mut() {
                reseed_velocity(k, 4);
            }
        }
        self
    }
}
