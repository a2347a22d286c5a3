//! Experiment configuration: a single JSON document with an explicit
//! schema version. Unknown keys are rejected everywhere.

use nalgebra::{DMatrix, DVector};
use rw_markov::{
    AffineSystem64, AffineSystemDoc, Distribution64, InitialLaw64, ModeSystemDoc,
    TransitionMatrix64,
};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub model: ModelSpec,
    /// Defaults to 0 when absent; the manifest records the value used.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub norm: rw_markov::Norm,
    /// Steps per trajectory (simulate, backward, distribution).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Trajectory count (distribution, prop1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
    /// Product length for a single stability evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Search bound for the stability certificate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    /// Monte-Carlo sample count for stability estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Step count (lyapunov, ergodic).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    /// Initial state law; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitialLawSpec>,
    /// Snapshot times for prop1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<usize>>,
    /// Initial mode distributions compared by prop1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_dists: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Classical conditioning over n coupled agents; modes are i.i.d.
    /// uniform stimulus levels.
    ClassicalRw {
        n: usize,
        alpha: f64,
        stimulus_levels: Vec<f64>,
    },
    /// Decoupled per-agent updates (B = W = I) with per-agent rates.
    Epstein {
        alpha: Vec<f64>,
        stimulus_levels: Vec<f64>,
    },
    /// Opinion dynamics with prejudice anchoring; deterministic single mode.
    FriedkinJohnsen {
        w: Vec<Vec<f64>>,
        lambda: Vec<f64>,
        u: Vec<f64>,
    },
    /// Random attraction / neglect / repulsion over an averaging matrix.
    AttractNeglectRepulse {
        w_avg: Vec<Vec<f64>>,
        beta: f64,
        event_probs: [f64; 3],
    },
    /// Full structured model: per-mode (B, W, r), shared learning rates.
    ModeSystem(ModeSystemDoc),
    /// Reduced switched affine form: per-mode (F, c).
    Affine(AffineSystemDoc),
    /// Scalar shorthand: mode i applies x ← f_i·x + c_i.
    ScalarModes {
        maps: Vec<(f64, f64)>,
        chain: Vec<Vec<f64>>,
        init_dist: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLawSpec {
    Point { coords: Vec<f64> },
    UniformCube { low: f64, high: f64 },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(#[from] rw_markov::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("reports differ: {0}")]
    CompareFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Io(_) => 4,
            CliError::SchemaMismatch(_) => 2,
            CliError::CompareFailed(_) => 1,
        }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.schema != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            cfg.schema
        )));
    }
    Ok(cfg)
}

impl ModelSpec {
    pub fn build(&self) -> Result<AffineSystem64, CliError> {
        let sys = match self {
            ModelSpec::ClassicalRw { n, alpha, stimulus_levels } => {
                rw_markov::classical_rw(*n, *alpha, stimulus_levels)?
                    .to_affine()?
            }
            ModelSpec::Epstein { alpha, stimulus_levels } => {
                rw_markov::epstein(alpha, stimulus_levels)?.to_affine()?
            }
            ModelSpec::FriedkinJohnsen { w, lambda, u } => {
                let n = lambda.len();
                if w.len() != n || w.iter().any(|r| r.len() != n) || u.len() != n {
                    return Err(CliError::Config(
                        "friedkin_johnsen: w, lambda, u dimensions disagree".into(),
                    ));
                }
                let w = DMatrix::from_fn(n, n, |i, j| w[i][j]);
                let u = DVector::from_row_slice(u);
                rw_markov::friedkin_johnsen(w, lambda, u)?.to_affine()?
            }
            ModelSpec::AttractNeglectRepulse { w_avg, beta, event_probs } => {
                let n = w_avg.len();
                if w_avg.iter().any(|r| r.len() != n) {
                    return Err(CliError::Config("attract_neglect_repulse: w_avg not square".into()));
                }
                let w = DMatrix::from_fn(n, n, |i, j| w_avg[i][j]);
                rw_markov::attract_neglect_repulse(w, *beta, *event_probs)?
                    .to_affine()?
            }
            ModelSpec::ModeSystem(doc) => rw_markov::ModeSystem64::from_doc(doc)?.to_affine()?,
            ModelSpec::Affine(doc) => AffineSystem64::from_doc(doc)?,
            ModelSpec::ScalarModes { maps, chain, init_dist } => {
                let chain = TransitionMatrix64::from_rows(chain)?;
                let init = Distribution64::from_weights(init_dist)?;
                AffineSystem64::scalar(maps, chain, init)?
            }
        };
        Ok(sys)
    }
}

impl InitialLawSpec {
    pub fn build(&self, n: usize) -> Result<InitialLaw64, CliError> {
        match self {
            InitialLawSpec::Point { coords } => {
                if coords.len() != n {
                    return Err(CliError::Config(format!(
                        "init.coords has {} entries, model has {n} agents",
                        coords.len()
                    )));
                }
                Ok(InitialLaw64::point(coords))
            }
            InitialLawSpec::UniformCube { low, high } => {
                if low >= high {
                    return Err(CliError::Config("init: low must be below high".into()));
                }
                Ok(InitialLaw64::UniformCube { n, low: *low, high: *high })
            }
        }
    }
}

pub fn initial_law(
    cfg: &ExperimentConfig,
    n: usize,
) -> Result<InitialLaw64, CliError> {
    match &cfg.init {
        Some(spec) => spec.build(n),
        None => Ok(InitialLaw64::point(&vec![0.0; n])),
    }
}

pub fn require(field: Option<usize>, name: &str) -> Result<usize, CliError> {
    match field {
        Some(v) if v > 0 => Ok(v),
        Some(_) => Err(CliError::Config(format!("{name} must be positive"))),
        None => Err(CliError::Config(format!("missing required field {name}"))),
    }
}
