//! Configuration-driven experiment runner.
//!
//! A run reads one JSON [`ExperimentConfig`], executes a pipeline and writes
//! every artifact under `output_dir`: `manifest.json`, CSV tables, JSON
//! reports and SVG heatmaps. Outputs depend only on the config and the
//! build, so reruns reproduce them byte for byte.

pub mod corpus;
pub mod expr;
mod pipelines;
pub mod render;

use crate::error::{Error, Result};
use crate::recon::Block;
use corpus::CorpusItem;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub use corpus::{corpus, list_corpus, CorpusEntry};
pub use render::{heatmap_svg, render_heatmap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    CgoSweep,
    CauchyData,
    Extract,
    GaugeCheck,
    SchrodingerCheck,
    DiracReduce,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(rename = "L")]
    pub half_side: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lattice {
    pub step: f64,
    pub radius: f64,
}

/// Critical points, either listed or as a square lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Z0Spec {
    List(Vec<[f64; 2]>),
    Lattice(Lattice),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Block and connection residuals of gauge checks.
    pub gauge: f64,
    /// Scaled high-mode threshold of the boundary agreement check.
    pub boundary: f64,
    /// Pointwise factorization identity.
    pub factorization: f64,
    /// Lifted boundary data against direct traces.
    pub lift: f64,
    /// Relative error marking an extracted point as accurate.
    pub extract: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { gauge: 1e-5, boundary: crate::recon::BOUNDARY_TOL, factorization: 1e-8, lift: 1e-5, extract: 0.1 }
    }
}

/// One experiment. See `docs/config.md` for the schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub pipeline: Pipeline,
    /// Name of a built-in corpus entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<String>,
    /// Inline potential or pair, same schema as corpus items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<CorpusItem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub h_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Z0Spec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    /// Hardy modes per slot and component for Cauchy data.
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_block")]
    pub block: Block,
    #[serde(default)]
    pub entry: [usize; 2],
}

fn default_degree() -> usize {
    crate::cauchydata::DEFAULT_DEGREE
}

fn default_block() -> Block {
    Block::QMinus
}

/// Outcome of a completed run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutcome {
    /// Human-readable reasons the results need attention.
    pub flags: Vec<String>,
    pub artifacts: Vec<String>,
}

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Map a run result to the documented exit code.
pub fn exit_code(r: &Result<RunOutcome>) -> i32 {
    match r {
        Ok(_) => EXIT_OK,
        Err(e) => match e.root() {
            Error::Config(_) | Error::Json(_) => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        },
    }
}

impl ExperimentConfig {
    /// Parse JSON text; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The corpus item the run works on.
    pub fn item(&self) -> Result<CorpusItem> {
        match (&self.corpus, &self.inline) {
            (Some(name), None) => corpus::find(name).map(|e| e.item).ok_or_else(|| Error::Config(format!("corpus: no entry named {name:?}"))),
            (None, Some(item)) => Ok(item.clone()),
            (Some(_), Some(_)) => Err(Error::Config("corpus: give either corpus or inline, not both".into())),
            (None, None) => Err(Error::Config("corpus: a corpus entry or an inline potential is required".into())),
        }
    }

    pub fn z0_points(&self) -> Vec<Complex<f64>> {
        match &self.z0 {
            None => vec![Complex::new(0.0, 0.0)],
            Some(Z0Spec::List(v)) => v.iter().map(|p| Complex::new(p[0], p[1])).collect(),
            Some(Z0Spec::Lattice(l)) => crate::recon::interior_lattice(l.step, l.radius),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.grid.n < 16 || self.grid.n % 2 != 0 {
            return cfg(format!("grid.n: must be an even number ≥ 16, got {}", self.grid.n));
        }
        if !(self.grid.half_side > 1.0) || !self.grid.half_side.is_finite() {
            return cfg(format!("grid.L: must exceed 1, got {}", self.grid.half_side));
        }
        for (k, h) in self.h_list.iter().enumerate() {
            if !(*h > 0.0) || !h.is_finite() {
                return cfg(format!("h_list[{k}]: must be positive, got {h}"));
            }
            if k > 0 && *h >= self.h_list[k - 1] {
                return cfg(format!("h_list[{k}]: must be strictly decreasing"));
            }
        }
        match &self.z0 {
            Some(Z0Spec::List(v)) => {
                for (k, p) in v.iter().enumerate() {
                    if !(p[0].hypot(p[1]) < 1.0) {
                        return cfg(format!("z0.list[{k}]: must lie inside the unit disk"));
                    }
                }
            }
            Some(Z0Spec::Lattice(l)) => {
                if !(l.step > 0.0) {
                    return cfg("z0.lattice.step: must be positive".into());
                }
                if !(l.radius >= 0.0 && l.radius < 1.0) {
                    return cfg("z0.lattice.radius: must lie in [0, 1)".into());
                }
            }
            None => {}
        }
        let t = &self.tolerances;
        for (name, v) in [("gauge", t.gauge), ("boundary", t.boundary), ("factorization", t.factorization), ("lift", t.lift), ("extract", t.extract)] {
            if !(v > 0.0) {
                return cfg(format!("tolerances.{name}: must be positive"));
            }
        }
        if self.degree == 0 {
            return cfg("degree: must be positive".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            return cfg("output_dir: must not be empty".into());
        }
        if self.pipeline != Pipeline::DiracReduce || self.corpus.is_some() || self.inline.is_some() {
            let item = self.item()?;
            item.validate(if self.corpus.is_some() { "corpus" } else { "inline" })?;
            let n = match &item {
                CorpusItem::Potential { potential } => potential.n,
                CorpusItem::Pair { first, .. } => first.n,
                CorpusItem::GaugePair { base, .. } => base.n,
                CorpusItem::ConnectionPair { first, .. } => first.n,
            };
            if self.entry[0] >= n || self.entry[1] >= n {
                return cfg(format!("entry: ({}, {}) out of range for n = {n}", self.entry[0], self.entry[1]));
            }
            let pair = !matches!(item, CorpusItem::Potential { .. });
            let needs_pair = matches!(self.pipeline, Pipeline::Extract | Pipeline::GaugeCheck);
            if needs_pair && !pair {
                return cfg(format!("corpus: pipeline {:?} needs a pair", self.pipeline));
            }
            if self.pipeline == Pipeline::SchrodingerCheck && !matches!(item, CorpusItem::ConnectionPair { .. }) {
                return cfg("corpus: schrodinger-check needs a connection pair".into());
            }
        }
        if self.pipeline == Pipeline::CgoSweep && self.h_list.len() < 2 {
            return cfg("h_list: cgo-sweep needs at least two values".into());
        }
        Ok(())
    }
}

/// Execute a validated config, writing artifacts under its output directory.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    match config.precision {
        Precision::F64 => pipelines::run_typed::<f64>(config),
        Precision::F32 => pipelines::run_typed::<f32>(config),
    }
}

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "GAUGEID_WORKERS";

/// Configure the global thread pool from [`WORKERS_ENV`].
pub fn init_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("{WORKERS_ENV}: expected a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::Config(format!("{WORKERS_ENV}: must be positive")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "grid": {"n": 32, "L": 1.5},
            "pipeline": "cauchy-data",
            "corpus": "zero",
            "output_dir": "out"
        })
    }

    fn check(v: serde_json::Value) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(&v.to_string())
    }

    #[test]
    fn minimal_config_parses() {
        let c = check(base()).unwrap();
        assert_eq!(c.degree, crate::cauchydata::DEFAULT_DEGREE);
        assert_eq!(c.z0_points(), vec![Complex::new(0.0, 0.0)]);
    }

    #[test]
    fn errors_carry_field_paths() {
        let mut v = base();
        v["h_list"] = serde_json::json!([0.1, -0.05]);
        let e = check(v).unwrap_err();
        assert!(e.to_string().contains("h_list[1]"), "{e}");
        assert_eq!(exit_code(&Err(e)), EXIT_CONFIG);

        let mut v = base();
        v["grid"]["n"] = serde_json::json!("many");
        assert!(check(v).unwrap_err().to_string().contains("grid.n"));

        let mut v = base();
        v["pipeline"] = serde_json::json!("fly");
        assert!(check(v).unwrap_err().to_string().contains("pipeline"));

        let mut v = base();
        v["corpus"] = serde_json::json!("missing");
        assert!(check(v).unwrap_err().to_string().contains("missing"));

        let mut v = base();
        v["z0"] = serde_json::json!({"list": [[0.0, 0.0], [1.2, 0.0]]});
        assert!(check(v).unwrap_err().to_string().contains("z0.list[1]"));

        let mut v = base();
        v["pipeline"] = serde_json::json!("extract");
        assert!(check(v).unwrap_err().to_string().contains("pair"));
    }

    #[test]
    fn inline_potentials_are_checked() {
        let mut v = base();
        v.as_object_mut().unwrap().remove("corpus");
        v["inline"] = serde_json::json!({"kind": "potential", "potential": {"layout": "dirac", "n": 1, "q_plus": ["exp(-r2"]}});
        let e = check(v).unwrap_err().to_string();
        assert!(e.contains("inline.potential.q_plus[0]"), "{e}");
    }
}
