//! Subcommand implementations behind the `committor` binary.
//!
//! Every command is a pure function of the (already overridden) config, any
//! caches it reads, and the seed. Each writes a JSON manifest carrying the
//! canonical config hash next to its artifacts.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ExperimentConfig, PotentialName, ReferenceName};
use crate::error::{Error, Result};
use crate::gl_validation::{collect_isosurface_states, histogram, hitting_test, HitStatistics};
use crate::io;
use crate::net::CommittorModel;
use crate::potentials::Which;
use crate::reference::{self, Reference1D, Reference2D, ReferenceSolution, RM_BOX};
use crate::sde::{equilibrium_points, transition_samples, TransitionSample};
use crate::training::{train, Dynamics, MetricTrace, Method, TrainingData};

/// Seed tags, one per independent use of randomness.
pub mod tags {
    pub const SAMPLES: u64 = 1;
    pub const BOUNDARY: u64 = 2;
    pub const VALIDATION: u64 = 3;
    pub const INIT: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const HARVEST: u64 = 6;
    pub const HITS: u64 = 7;
}

/// A 64-bit seed for `tag` derived from the master seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng.next_u64()
}

pub const SAMPLE_MANIFEST: &str = "sample_manifest.json";
pub const TRAIN_MANIFEST: &str = "train_manifest.json";
pub const EVAL_MANIFEST: &str = "evaluate_manifest.json";
pub const GL_MANIFEST: &str = "validate_gl_manifest.json";
pub const COMPARE_MANIFEST: &str = "compare_manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    /// Hash of the settings that determine the sample cache.
    pub sampling_hash: String,
    pub counts: BTreeMap<String, usize>,
    pub files: Vec<String>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl Manifest {
    fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.into(),
            seed: cfg.seed,
            config_hash: cfg.canonical_hash(),
            sampling_hash: sampling_hash(cfg),
            counts: BTreeMap::new(),
            files: Vec::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path)?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    fn write(&self, dir: &Path, name: &str) -> Result<()> {
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Fails unless the manifest was produced from exactly `cfg`.
    pub fn verify(&self, cfg: &ExperimentConfig) -> Result<()> {
        let h = cfg.canonical_hash();
        if self.config_hash != h {
            return Err(Error::Validation(format!(
                "manifest config hash {} does not match the config ({h})",
                self.config_hash
            )));
        }
        Ok(())
    }
}

fn sampling_hash(cfg: &ExperimentConfig) -> String {
    let value = serde_json::json!({
        "seed": cfg.seed,
        "potential": cfg.potential,
        "region": cfg.region,
        "sde": cfg.sde,
        "samples": cfg.training.samples,
        "boundary_pool": cfg.training.boundary_pool,
    });
    let digest = Sha256::digest(value.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Training corpus and boundary pools.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<TransitionSample>,
    pub boundary_a: Vec<Vec<f64>>,
    pub boundary_b: Vec<Vec<f64>>,
}

/// Draws the corpus described by the config; no I/O.
pub fn draw_samples(cfg: &ExperimentConfig, exp: &Experiment) -> Result<SampleSet> {
    let samples = transition_samples(
        &exp.spec,
        &exp.region,
        &exp.sde,
        cfg.training.samples,
        cfg.sde.chains,
        derive_seed(cfg.seed, tags::SAMPLES),
        0,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, tags::BOUNDARY));
    let boundary_a = exp.region.sample_boundary(Which::A, cfg.training.boundary_pool, &mut rng);
    let boundary_b = exp.region.sample_boundary(Which::B, cfg.training.boundary_pool, &mut rng);
    Ok(SampleSet {
        samples,
        boundary_a,
        boundary_b,
    })
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn write_with<F: FnOnce(&mut BufWriter<File>) -> Result<()>>(path: &Path, f: F) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// `committor sample`: writes the transition cache, both boundary pools and
/// `sample_manifest.json` into `out`.
pub fn cmd_sample(cfg: &ExperimentConfig, out: &Path, csv: bool) -> Result<Manifest> {
    let exp = cfg.build()?;
    create_dir(out)?;
    let set = draw_samples(cfg, &exp)?;
    let d = exp.spec.dim;
    let sample_file = if csv { "samples.csv" } else { "samples.bin" };
    write_with(&out.join(sample_file), |w| {
        if csv {
            io::write_samples_csv(w, &set.samples, d)
        } else {
            io::write_samples(w, &set.samples, d)
        }
    })?;
    write_with(&out.join("boundary_a.bin"), |w| io::write_points(w, &set.boundary_a, d))?;
    write_with(&out.join("boundary_b.bin"), |w| io::write_points(w, &set.boundary_b, d))?;

    let mut m = Manifest::new("sample", cfg);
    m.counts.insert("dim".into(), d);
    m.counts.insert("interior_samples".into(), set.samples.len());
    m.counts.insert("boundary_a".into(), set.boundary_a.len());
    m.counts.insert("boundary_b".into(), set.boundary_b.len());
    for (name, code) in [("interior", 0u8), ("hit_a", 1), ("hit_b", 2)] {
        let n = set.samples.iter().filter(|s| s.indicator.code() == code).count();
        m.counts.insert(format!("indicator_{name}"), n);
    }
    m.files = vec![sample_file.into(), "boundary_a.bin".into(), "boundary_b.bin".into()];
    m.write(out, SAMPLE_MANIFEST)?;
    Ok(m)
}

/// Reads a cache written by [`cmd_sample`], refusing caches from other settings.
pub fn read_sample_cache(cfg: &ExperimentConfig, dir: &Path) -> Result<SampleSet> {
    let m = Manifest::read(&dir.join(SAMPLE_MANIFEST))?;
    if m.sampling_hash != sampling_hash(cfg) {
        return Err(Error::Validation(format!(
            "sample cache in {} was produced with different sampling settings",
            dir.display()
        )));
    }
    let d = cfg.dim()?;
    let open = |name: &str| -> Result<BufReader<File>> { Ok(BufReader::new(File::open(dir.join(name))?)) };
    let (ds, samples) = if m.files.iter().any(|f| f == "samples.csv") {
        io::read_samples_csv(open("samples.csv")?)?
    } else {
        io::read_samples(open("samples.bin")?)?
    };
    let (da, boundary_a) = io::read_points(open("boundary_a.bin")?)?;
    let (db, boundary_b) = io::read_points(open("boundary_b.bin")?)?;
    for got in [ds, da, db] {
        crate::error::check_dim(d, got)?;
    }
    Ok(SampleSet {
        samples,
        boundary_a,
        boundary_b,
    })
}

/// Validation states drawn from `ρ` for the error metric.
pub fn validation_points(cfg: &ExperimentConfig, exp: &Experiment) -> Result<Vec<Vec<f64>>> {
    equilibrium_points(
        &exp.spec,
        &exp.region,
        &exp.sde,
        cfg.evaluation.validation_samples,
        cfg.sde.chains,
        derive_seed(cfg.seed, tags::VALIDATION),
        0,
    )
}

/// A reference committor for the configured potential.
pub enum BuiltReference {
    OneD(Reference1D),
    TwoD(Reference2D),
}

impl BuiltReference {
    pub fn as_solution(&self) -> &dyn ReferenceSolution {
        match self {
            BuiltReference::OneD(r) => r,
            BuiltReference::TwoD(r) => r,
        }
    }
}

/// Builds (or loads from `cache_dir`) the reference named by the config.
pub fn build_reference(cfg: &ExperimentConfig, cache_dir: Option<&Path>) -> Result<BuiltReference> {
    match (cfg.potential.kind, cfg.evaluation.reference) {
        (PotentialName::GinzburgLandau, _) => Err(Error::NotSupported(
            "no reference committor exists for Ginzburg-Landau; use validate-gl instead".into(),
        )),
        (_, ReferenceName::None) => Err(Error::NotSupported(
            "evaluation.reference is \"none\"; set it to compute the error".into(),
        )),
        (_, ReferenceName::DoubleWell1d) => Ok(BuiltReference::OneD(reference::solve_double_well_1d(
            1.0 / cfg.potential.temperature,
            cfg.evaluation.reference_nodes,
        )?)),
        (_, ReferenceName::RuggedMuller2d) => {
            let params = cfg.potential.rugged_muller.clone().unwrap_or_default();
            let key = serde_json::json!({
                "params": params,
                "temperature": cfg.potential.temperature,
                "resolution": cfg.evaluation.resolution,
            });
            let hash: String = Sha256::digest(key.to_string().as_bytes())
                .iter()
                .take(8)
                .map(|b| format!("{b:02x}"))
                .collect();
            let path = cache_dir.map(|d| d.join(format!("reference_{}_{hash}.bin", cfg.evaluation.resolution)));
            if let Some(p) = &path {
                if p.exists() {
                    return Ok(BuiltReference::TwoD(Reference2D::read_from(BufReader::new(File::open(p)?))?));
                }
            }
            let r = reference::solve_rugged_muller_2d(&params, cfg.potential.temperature, cfg.evaluation.resolution)?;
            if let Some(p) = &path {
                create_dir(p.parent().expect("joined path has a parent"))?;
                write_with(p, |w| r.write_to(w))?;
            }
            Ok(BuiltReference::TwoD(r))
        }
    }
}

/// Result of [`cmd_train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: CommittorModel,
    pub trace: MetricTrace,
    pub manifest: Manifest,
}

/// Trains one model on `set` with the given method and penalty; no I/O
/// except through `on_log`.
pub fn run_training(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    set: SampleSet,
    method: Method,
    penalty: f64,
    error_fn: Option<&(dyn Fn(&CommittorModel) -> Result<f64> + Sync)>,
    on_log: impl FnMut(usize, &CommittorModel) -> Result<()>,
) -> Result<(CommittorModel, MetricTrace)> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, tags::INIT));
    let mut model = CommittorModel::init(&exp.arch, &mut init_rng)?;
    let mut tc = exp.train.clone();
    tc.method = method;
    tc.penalty = penalty;
    let data = TrainingData {
        samples: set.samples,
        boundary_a: set.boundary_a,
        boundary_b: set.boundary_b,
        dynamics: Some(Dynamics {
            spec: exp.spec.clone(),
            region: exp.region.clone(),
            sde: exp.sde.clone(),
        }),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, tags::TRAIN));
    let trace = train(&mut model, &data, &tc, error_fn, on_log, &mut rng)?;
    Ok((model, trace))
}

fn load_or_draw(cfg: &ExperimentConfig, exp: &Experiment, cache: Option<&Path>) -> Result<SampleSet> {
    match cache {
        Some(dir) => read_sample_cache(cfg, dir),
        None => draw_samples(cfg, exp),
    }
}

/// `committor train`: writes `checkpoint.bin`, periodic `checkpoint_<step>.bin`,
/// `trace.csv` and `train_manifest.json`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path, cache: Option<&Path>) -> Result<TrainOutcome> {
    let exp = cfg.build()?;
    create_dir(out)?;
    let set = load_or_draw(cfg, &exp, cache)?;
    let counts = (set.samples.len(), set.boundary_a.len(), set.boundary_b.len());

    let reference = match cfg.evaluation.reference {
        ReferenceName::None => None,
        _ => Some(build_reference(cfg, Some(out))?),
    };
    let validation = match reference {
        Some(_) => validation_points(cfg, &exp)?,
        None => Vec::new(),
    };
    let err_closure = |m: &CommittorModel| {
        let r = reference.as_ref().expect("closure only used with a reference");
        reference::relative_error(m, r.as_solution(), &validation)
    };
    let error_fn: Option<&(dyn Fn(&CommittorModel) -> Result<f64> + Sync)> = match reference {
        Some(_) => Some(&err_closure),
        None => None,
    };

    let every = cfg.training.checkpoint_every;
    let mut files = Vec::new();
    let on_log = |step: usize, m: &CommittorModel| -> Result<()> {
        if every > 0 && step % every == 0 && step != cfg.training.steps {
            let name = format!("checkpoint_{step}.bin");
            io::save_checkpoint(&out.join(&name), m)?;
            files.push(name);
        }
        Ok(())
    };
    let (model, trace) = run_training(cfg, &exp, set, Method::Semigroup, exp.train.penalty, error_fn, on_log)?;

    io::save_checkpoint(&out.join("checkpoint.bin"), &model)?;
    write_with(&out.join("trace.csv"), |w| Ok(trace.write_csv(w)?))?;
    let mut m = Manifest::new("train", cfg);
    m.counts.insert("interior_samples".into(), counts.0);
    m.counts.insert("boundary_a".into(), counts.1);
    m.counts.insert("boundary_b".into(), counts.2);
    m.counts.insert("steps".into(), cfg.training.steps);
    m.counts.insert("parameters".into(), model.num_params());
    if let Some(e) = trace.final_error() {
        m.metrics.insert("final_E".into(), e);
    }
    if let Some(p) = trace.points.last() {
        m.metrics.insert("final_monitor_loss".into(), p.monitor_loss);
        m.metrics.insert("wallclock_seconds".into(), p.wallclock_seconds);
    }
    files.push("checkpoint.bin".into());
    files.push("trace.csv".into());
    m.files = files;
    m.write(out, TRAIN_MANIFEST)?;
    Ok(TrainOutcome {
        model,
        trace,
        manifest: m,
    })
}

/// Result of [`cmd_evaluate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub relative_error: f64,
    pub validation_samples: usize,
}

/// Points and values of the committor slice: double well along `x1` with the
/// other coordinates at 0, rugged Müller on the `(x1, x2)` box.
pub fn committor_slice(
    cfg: &ExperimentConfig,
    model: &CommittorModel,
    reference: &dyn ReferenceSolution,
) -> Result<Vec<(Vec<f64>, f64, f64)>> {
    let d = model.dim();
    let n = cfg.evaluation.slice_points.max(2);
    let mut points = Vec::new();
    match cfg.potential.kind {
        PotentialName::RuggedMuller => {
            let (lo, hi) = RM_BOX;
            for j in 0..n {
                for i in 0..n {
                    let mut x = vec![0.0; d];
                    x[0] = lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64;
                    x[1] = lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64;
                    points.push(x);
                }
            }
        }
        _ => {
            for i in 0..n {
                let mut x = vec![0.0; d];
                x[0] = -1.5 + 3.0 * i as f64 / (n - 1) as f64;
                points.push(x);
            }
        }
    }
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    let q = model.eval_batch(&flat, points.len())?;
    points
        .into_iter()
        .zip(q)
        .map(|(x, qv)| {
            let r = reference.eval(&x)?;
            Ok((x, qv, r))
        })
        .collect()
}

/// `committor evaluate`: writes `metrics.json`, `slice.csv` and
/// `evaluate_manifest.json`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<Evaluation> {
    let exp = cfg.build()?;
    let reference = build_reference(cfg, Some(out))?;
    let model = io::load_checkpoint(checkpoint)?;
    crate::error::check_dim(exp.spec.dim, model.dim())?;
    create_dir(out)?;
    let validation = validation_points(cfg, &exp)?;
    let e = reference::relative_error(&model, reference.as_solution(), &validation)?;
    let eval = Evaluation {
        relative_error: e,
        validation_samples: validation.len(),
    };
    write_with(&out.join("metrics.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &eval).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    })?;
    let slice = committor_slice(cfg, &model, reference.as_solution())?;
    let two_d = cfg.potential.kind == PotentialName::RuggedMuller;
    write_with(&out.join("slice.csv"), |w| {
        if two_d {
            writeln!(w, "x1,x2,q_model,q_reference")?;
        } else {
            writeln!(w, "x1,q_model,q_reference")?;
        }
        for (x, q, r) in &slice {
            if two_d {
                writeln!(w, "{},{},{},{}", x[0], x[1], q, r)?;
            } else {
                writeln!(w, "{},{},{}", x[0], q, r)?;
            }
        }
        Ok(())
    })?;
    let mut m = Manifest::new("evaluate", cfg);
    m.counts.insert("validation_samples".into(), validation.len());
    m.counts.insert("slice_points".into(), slice.len());
    m.metrics.insert("E".into(), e);
    m.files = vec!["metrics.json".into(), "slice.csv".into()];
    m.write(out, EVAL_MANIFEST)?;
    Ok(eval)
}

/// `committor validate-gl`: harvests ½-isosurface states, runs the hitting
/// test and writes `fractions.csv`, `qq.csv`, `histogram.csv`, `ks.json` and
/// `validate_gl_manifest.json`.
pub fn cmd_validate_gl(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<HitStatistics> {
    if cfg.potential.kind != PotentialName::GinzburgLandau {
        return Err(Error::config("potential.kind", "validate-gl needs kind = \"ginzburg_landau\""));
    }
    let exp = cfg.build()?;
    let model = io::load_checkpoint(checkpoint)?;
    crate::error::check_dim(exp.spec.dim, model.dim())?;
    create_dir(out)?;
    let stats = gl_statistics(cfg, &exp, &model)?;

    write_with(&out.join("fractions.csv"), |w| {
        writeln!(w, "state,hits_b,completed,fraction")?;
        for (j, ((f, h), c)) in stats.fractions.iter().zip(&stats.hits_b).zip(&stats.completed).enumerate() {
            writeln!(w, "{j},{h},{c},{f}")?;
        }
        Ok(())
    })?;
    write_with(&out.join("qq.csv"), |w| {
        writeln!(w, "empirical,normal")?;
        for (a, b) in &stats.qq {
            writeln!(w, "{a},{b}")?;
        }
        Ok(())
    })?;
    write_with(&out.join("histogram.csv"), |w| {
        writeln!(w, "lo,hi,count,density,null_density")?;
        for (lo, hi, c, dens, null) in histogram(&stats, 20) {
            writeln!(w, "{lo},{hi},{c},{dens},{null}")?;
        }
        Ok(())
    })?;
    let summary = serde_json::json!({
        "m": stats.fractions.len(),
        "n": stats.n,
        "mean": stats.mean,
        "variance": stats.variance,
        "null_variance": 0.25 / stats.n as f64,
        "ks_statistic": stats.ks_statistic,
        "ks_p_value": stats.ks_p_value,
        "timeouts": stats.timeouts,
    });
    write_with(&out.join("ks.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    })?;
    let mut m = Manifest::new("validate-gl", cfg);
    m.counts.insert("m".into(), stats.fractions.len());
    m.counts.insert("n".into(), stats.n);
    m.counts.insert("timeouts".into(), stats.timeouts);
    m.metrics.insert("mean".into(), stats.mean);
    m.metrics.insert("ks_p_value".into(), stats.ks_p_value);
    m.files = ["fractions.csv", "qq.csv", "histogram.csv", "ks.json"].map(String::from).to_vec();
    m.write(out, GL_MANIFEST)?;
    Ok(stats)
}

/// Harvest plus hitting test for a Ginzburg–Landau model; no I/O.
pub fn gl_statistics(cfg: &ExperimentConfig, exp: &Experiment, model: &CommittorModel) -> Result<HitStatistics> {
    let batch = collect_isosurface_states(
        model,
        &exp.spec,
        &exp.region,
        &cfg.harvest(),
        &exp.sde,
        derive_seed(cfg.seed, tags::HARVEST),
    )?;
    hitting_test(
        &batch,
        &exp.spec,
        &exp.region,
        cfg.validation.n,
        cfg.validation.dt.unwrap_or(cfg.sde.dt),
        exp.sde.beta,
        cfg.validation.max_steps,
        derive_seed(cfg.seed, tags::HITS),
    )
}

/// One row of the comparison report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: Method,
    pub c_norm: f64,
    pub penalty: f64,
    pub final_error: f64,
    pub wallclock_seconds: f64,
    pub trace_file: String,
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Semigroup => "semigroup",
        Method::Baseline => "baseline",
    }
}

/// `committor compare`: trains both methods for every `compare.c_norm` on the
/// same samples, initialisation and minibatch seed. The semigroup penalty is
/// `c = c_norm·δ` and the baseline penalty is `c̃ = c_norm`. Writes one trace
/// per run, `compare.csv` and `compare_manifest.json`.
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path, cache: Option<&Path>) -> Result<Vec<CompareRow>> {
    let sweep = cfg
        .compare
        .as_ref()
        .ok_or_else(|| Error::config("compare.c_norm", "compare needs a [compare] block with a c_norm list"))?
        .c_norm
        .clone();
    if cfg.potential.kind != PotentialName::DoubleWell {
        return Err(Error::config("potential.kind", "compare runs on the double-well problem"));
    }
    let exp = cfg.build()?;
    create_dir(out)?;
    let set = load_or_draw(cfg, &exp, cache)?;
    let reference = build_reference(cfg, Some(out))?;
    let validation = validation_points(cfg, &exp)?;
    let err = |m: &CommittorModel| reference::relative_error(m, reference.as_solution(), &validation);

    let mut rows = Vec::new();
    for &c_norm in &sweep {
        for method in [Method::Semigroup, Method::Baseline] {
            let penalty = match method {
                Method::Semigroup => c_norm * cfg.sde.delta,
                Method::Baseline => c_norm,
            };
            let (_, trace) = run_training(cfg, &exp, set.clone(), method, penalty, Some(&err), |_, _| Ok(()))?;
            let trace_file = format!("trace_{}_cnorm_{c_norm}.csv", method_name(method));
            write_with(&out.join(&trace_file), |w| Ok(trace.write_csv(w)?))?;
            let last = trace.points.last();
            rows.push(CompareRow {
                method,
                c_norm,
                penalty,
                final_error: trace.final_error().unwrap_or(f64::NAN),
                wallclock_seconds: last.map_or(0.0, |p| p.wallclock_seconds),
                trace_file,
            });
        }
    }
    write_with(&out.join("compare.csv"), |w| {
        writeln!(w, "method,c_norm,penalty,final_E,wallclock_seconds,trace")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                method_name(r.method),
                r.c_norm,
                r.penalty,
                r.final_error,
                r.wallclock_seconds,
                r.trace_file
            )?;
        }
        Ok(())
    })?;
    let mut m = Manifest::new("compare", cfg);
    m.counts.insert("interior_samples".into(), set.samples.len());
    m.counts.insert("runs".into(), rows.len());
    m.files = std::iter::once("compare.csv".to_string())
        .chain(rows.iter().map(|r| r.trace_file.clone()))
        .collect();
    m.write(out, COMPARE_MANIFEST)?;
    Ok(rows)
}

/// Applies command-line overrides to a loaded config.
pub fn apply_overrides(mut cfg: ExperimentConfig, seed: Option<u64>, out: Option<PathBuf>) -> ExperimentConfig {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    cfg
}
