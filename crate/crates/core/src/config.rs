//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/double-well"
//!
//! [potential]
//! kind = "double_well"
//! dim = 10
//! temperature = 0.5
//!
//! [sde]
//! delta = 0.003
//!
//! [training]
//! c = 15.0
//! samples = 150000
//! ```
//!
//! Every other field has a default. The canonical form used for hashing is
//! the JSON serialisation of the fully defaulted config with sorted keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gl_validation::HarvestConfig;
use crate::net::{ArchConfig, SingularitySpec};
use crate::potentials::{GLMinimizers, PotentialSpec, RegionSpec, RuggedMullerParams};
use crate::sde::SdeConfig;
use crate::training::{Method, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialName {
    DoubleWell,
    RuggedMuller,
    GinzburgLandau,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    pub kind: PotentialName,
    /// State dimension; derived from `h` for Ginzburg–Landau.
    #[serde(default)]
    pub dim: Option<usize>,
    pub temperature: f64,
    /// Rugged Müller surface parameters; defaults to the standard set.
    #[serde(default)]
    pub rugged_muller: Option<RuggedMullerParams>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub h: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionBlock {
    #[serde(default)]
    pub dim: Option<usize>,
    /// Ball radius for Ginzburg–Landau.
    #[serde(default)]
    pub radius: Option<f64>,
}

fn d_dt() -> f64 {
    1e-3
}
fn d_burn_in() -> usize {
    100_000
}
fn d_thinning() -> usize {
    10
}
fn d_one() -> usize {
    1
}
fn d_chains() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeBlock {
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_burn_in")]
    pub burn_in: usize,
    #[serde(default = "d_thinning")]
    pub thinning: usize,
    pub delta: f64,
    #[serde(default = "d_one")]
    pub substeps: usize,
    /// Independent equilibrium chains used for sampling.
    #[serde(default = "d_chains")]
    pub chains: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularityName {
    None,
    #[serde(rename = "log_2d")]
    Log2d,
    PowerLaw,
}

fn d_hidden_0() -> Vec<usize> {
    vec![40, 40, 40]
}
fn d_hidden_side() -> Vec<usize> {
    vec![20, 20]
}
fn d_singularity() -> SingularityName {
    SingularityName::None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkBlock {
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default = "d_hidden_0")]
    pub hidden_0: Vec<usize>,
    #[serde(default = "d_hidden_side")]
    pub hidden_side: Vec<usize>,
    #[serde(default = "d_singularity")]
    pub singularity: SingularityName,
}

impl Default for NetworkBlock {
    fn default() -> Self {
        Self {
            dim: None,
            hidden_0: d_hidden_0(),
            hidden_side: d_hidden_side(),
            singularity: d_singularity(),
        }
    }
}

fn d_batch() -> usize {
    1000
}
fn d_steps() -> usize {
    50_000
}
fn d_lr() -> f64 {
    1e-3
}
fn d_betas() -> (f64, f64) {
    (0.9, 0.999)
}
fn d_eps() -> f64 {
    1e-8
}
fn d_boundary_batch() -> usize {
    128
}
fn d_boundary_pool() -> usize {
    2000
}
fn d_log_every() -> usize {
    1000
}
fn d_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingBlock {
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub c_norm: Option<f64>,
    /// Training states drawn from `ρ`.
    pub samples: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_betas")]
    pub adam_betas: (f64, f64),
    #[serde(default = "d_eps")]
    pub adam_epsilon: f64,
    #[serde(default = "d_boundary_batch")]
    pub boundary_batch: usize,
    #[serde(default = "d_boundary_pool")]
    pub boundary_pool: usize,
    #[serde(default = "d_log_every")]
    pub log_every: usize,
    /// 0 disables periodic checkpoints.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default = "d_true")]
    pub refresh_transitions: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceName {
    None,
    #[serde(rename = "double_well_1d")]
    DoubleWell1d,
    #[serde(rename = "rugged_muller_2d")]
    RuggedMuller2d,
}

fn d_reference() -> ReferenceName {
    ReferenceName::None
}
fn d_validation_samples() -> usize {
    100_000
}
fn d_nodes() -> usize {
    4001
}
fn d_resolution() -> usize {
    400
}
fn d_slice() -> usize {
    201
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationBlock {
    #[serde(default = "d_reference")]
    pub reference: ReferenceName,
    #[serde(default = "d_validation_samples")]
    pub validation_samples: usize,
    /// Nodes of the one-dimensional reference.
    #[serde(default = "d_nodes")]
    pub reference_nodes: usize,
    /// Cells per axis of the two-dimensional reference.
    #[serde(default = "d_resolution")]
    pub resolution: usize,
    /// Points per axis of the emitted committor slice.
    #[serde(default = "d_slice")]
    pub slice_points: usize,
}

impl Default for EvaluationBlock {
    fn default() -> Self {
        Self {
            reference: d_reference(),
            validation_samples: d_validation_samples(),
            reference_nodes: d_nodes(),
            resolution: d_resolution(),
            slice_points: d_slice(),
        }
    }
}

fn d_epsilon() -> f64 {
    0.01
}
fn d_m() -> usize {
    120
}
fn d_n() -> usize {
    100
}
fn d_gap() -> usize {
    1000
}
fn d_check_every() -> usize {
    10
}
fn d_harvest_chains() -> usize {
    16
}
fn d_harvest_budget() -> usize {
    10_000_000
}
fn d_max_steps() -> u64 {
    10_000_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationBlock {
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_gap")]
    pub gap_steps: usize,
    #[serde(default = "d_check_every")]
    pub check_every: usize,
    #[serde(default = "d_harvest_chains")]
    pub chains: usize,
    #[serde(default = "d_harvest_budget")]
    pub harvest_steps_per_chain: usize,
    /// Step size of the hitting trajectories; defaults to `sde.dt`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "d_max_steps")]
    pub max_steps: u64,
}

impl Default for ValidationBlock {
    fn default() -> Self {
        Self {
            epsilon: d_epsilon(),
            m: d_m(),
            n: d_n(),
            gap_steps: d_gap(),
            check_every: d_check_every(),
            chains: d_harvest_chains(),
            harvest_steps_per_chain: d_harvest_budget(),
            dt: None,
            max_steps: d_max_steps(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBlock {
    pub c_norm: Vec<f64>,
}

fn d_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "d_output")]
    pub output_dir: PathBuf,
    pub potential: PotentialBlock,
    #[serde(default)]
    pub region: RegionBlock,
    pub sde: SdeBlock,
    #[serde(default)]
    pub network: NetworkBlock,
    pub training: TrainingBlock,
    #[serde(default)]
    pub evaluation: EvaluationBlock,
    #[serde(default)]
    pub validation: ValidationBlock,
    #[serde(default)]
    pub compare: Option<CompareBlock>,
}

/// Everything an experiment needs, built from a validated config.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub spec: PotentialSpec,
    pub region: RegionSpec,
    pub sde: SdeConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive and finite, got {v}")))
    }
}

fn nonzero(path: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::config(path, "must be at least 1"))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { path: p, message } if p == "<file>" => Error::config(path.display().to_string(), message),
            other => other,
        })
    }

    /// State dimension implied by the potential block.
    pub fn dim(&self) -> Result<usize> {
        match self.potential.kind {
            PotentialName::GinzburgLandau => {
                let h = self.potential.h.unwrap_or(0.02);
                let d = (1.0 / h - 1.0).round();
                if d < 1.0 {
                    return Err(Error::config("potential.h", "must be below 1/2"));
                }
                Ok(d as usize)
            }
            _ => self
                .potential
                .dim
                .ok_or_else(|| Error::config("potential.dim", "required for this potential")),
        }
    }

    /// Penalty coefficient `c`, from `c` or `c_norm·δ`.
    pub fn penalty(&self) -> Result<f64> {
        match (self.training.c, self.training.c_norm) {
            (Some(c), None) => Ok(c),
            (None, Some(cn)) => Ok(cn * self.sde.delta),
            (Some(_), Some(_)) => Err(Error::config("training.c", "give exactly one of training.c and training.c_norm")),
            (None, None) => Err(Error::config("training.c", "one of training.c and training.c_norm is required")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim()?;
        if let PotentialName::GinzburgLandau = self.potential.kind {
            if let Some(pd) = self.potential.dim {
                if pd != d {
                    return Err(Error::config(
                        "potential.dim",
                        format!("potential.dim = {pd} disagrees with potential.h, which implies {d}"),
                    ));
                }
            }
        }
        for (path, got) in [("region.dim", self.region.dim), ("network.dim", self.network.dim)] {
            if let Some(got) = got {
                if got != d {
                    return Err(Error::config(
                        path,
                        format!("{path} = {got} disagrees with potential.dim = {d}"),
                    ));
                }
            }
        }
        positive("potential.temperature", self.potential.temperature)?;
        positive("sde.dt", self.sde.dt)?;
        positive("sde.delta", self.sde.delta)?;
        nonzero("sde.thinning", self.sde.thinning)?;
        nonzero("sde.substeps", self.sde.substeps)?;
        nonzero("sde.chains", self.sde.chains)?;
        let c = self.penalty()?;
        if !(c >= 0.0) {
            return Err(Error::config("training.c", "must be nonnegative"));
        }
        nonzero("training.samples", self.training.samples)?;
        nonzero("training.batch_size", self.training.batch_size)?;
        nonzero("training.boundary_batch", self.training.boundary_batch)?;
        nonzero("training.boundary_pool", self.training.boundary_pool)?;
        positive("training.learning_rate", self.training.learning_rate)?;
        positive("validation.epsilon", self.validation.epsilon)?;
        nonzero("validation.m", self.validation.m)?;
        nonzero("validation.n", self.validation.n)?;
        nonzero("evaluation.validation_samples", self.evaluation.validation_samples)?;
        if self.network.hidden_0.is_empty() || self.network.hidden_0.contains(&0) {
            return Err(Error::config("network.hidden_0", "needs at least one nonzero width"));
        }
        if let Some(cmp) = &self.compare {
            if cmp.c_norm.is_empty() {
                return Err(Error::config("compare.c_norm", "the sweep list is empty"));
            }
            if cmp.c_norm.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::config("compare.c_norm", "values must be nonnegative"));
            }
        }
        match (self.potential.kind, self.network.singularity) {
            (PotentialName::DoubleWell, SingularityName::None) => {}
            (PotentialName::DoubleWell, _) => {
                return Err(Error::config("network.singularity", "the double well has no boundary singularity"))
            }
            (PotentialName::RuggedMuller, SingularityName::PowerLaw) => {
                return Err(Error::config("network.singularity", "rugged Muller singularities are two-dimensional"))
            }
            (PotentialName::GinzburgLandau, SingularityName::Log2d) => {
                return Err(Error::config("network.singularity", "Ginzburg-Landau needs power_law or none"))
            }
            _ => {}
        }
        match (self.potential.kind, self.evaluation.reference) {
            (_, ReferenceName::None)
            | (PotentialName::DoubleWell, ReferenceName::DoubleWell1d)
            | (PotentialName::RuggedMuller, ReferenceName::RuggedMuller2d) => {}
            _ => {
                return Err(Error::config(
                    "evaluation.reference",
                    "reference kind does not match the potential",
                ))
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical (sorted-key JSON) serialisation. The output
    /// directory is left out so a run hashes the same wherever it is written.
    pub fn canonical_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        let text = serde_json::to_string(&value).expect("value serialises");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Builds the potential, regions, dynamics, architecture and optimiser settings.
    pub fn build(&self) -> Result<Experiment> {
        self.validate()?;
        let d = self.dim()?;
        let t = self.potential.temperature;
        let (spec, region) = match self.potential.kind {
            PotentialName::DoubleWell => (PotentialSpec::double_well(d)?, RegionSpec::double_well(d, t)?),
            PotentialName::RuggedMuller => {
                let params = self.potential.rugged_muller.clone().unwrap_or_default();
                let sigma = params.sigma;
                (PotentialSpec::rugged_muller(d, params)?, RegionSpec::rugged_muller(d, t, sigma)?)
            }
            PotentialName::GinzburgLandau => {
                let spec = PotentialSpec::ginzburg_landau(self.potential.lambda.unwrap_or(0.03), self.potential.h.unwrap_or(0.02))?;
                let minimizers = GLMinimizers::compute(&spec, 1e-10)?;
                let region = RegionSpec::ginzburg_landau(&minimizers, self.region.radius.unwrap_or(3.0))?;
                (spec, region)
            }
        };
        let sde = SdeConfig {
            beta: 1.0 / t,
            dt_equilibrium: self.sde.dt,
            burn_in_steps: self.sde.burn_in,
            thinning_steps: self.sde.thinning,
            delta: self.sde.delta,
            substeps: self.sde.substeps,
        };
        sde.validate()?;
        let (sing_a, sing_b) = match self.network.singularity {
            SingularityName::None => (SingularitySpec::none(d), SingularitySpec::none(d)),
            SingularityName::Log2d => (
                SingularitySpec::log2d([0, 1], region.center_a.clone())?,
                SingularitySpec::log2d([0, 1], region.center_b.clone())?,
            ),
            SingularityName::PowerLaw => (
                SingularitySpec::power_law(d, region.center_a.clone())?,
                SingularitySpec::power_law(d, region.center_b.clone())?,
            ),
        };
        let arch = ArchConfig {
            dim: d,
            hidden_0: self.network.hidden_0.clone(),
            hidden_side: self.network.hidden_side.clone(),
            sing_a,
            sing_b,
        };
        let tb = &self.training;
        let train = TrainConfig {
            penalty: self.penalty()?,
            batch_size: tb.batch_size,
            steps: tb.steps,
            learning_rate: tb.learning_rate,
            adam_betas: tb.adam_betas,
            adam_epsilon: tb.adam_epsilon,
            boundary_batch: tb.boundary_batch,
            log_every: tb.log_every,
            method: Method::Semigroup,
            refresh_transitions: tb.refresh_transitions,
        };
        train.validate().map_err(|e| Error::config("training", e.to_string()))?;
        Ok(Experiment {
            spec,
            region,
            sde,
            arch,
            train,
        })
    }

    pub fn harvest(&self) -> HarvestConfig {
        HarvestConfig {
            epsilon: self.validation.epsilon,
            m: self.validation.m,
            gap_steps: self.validation.gap_steps,
            check_every: self.validation.check_every,
            chains: self.validation.chains,
            max_steps_per_chain: self.validation.harvest_steps_per_chain,
        }
    }
}
