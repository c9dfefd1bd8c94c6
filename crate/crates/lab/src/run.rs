//! Dispatching a validated config to the estimators and writing artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rwre_core::conditions::{evaluate_condition, hierarchy_report, standard_specs, Answer, ConditionReport, DecayFit};
use rwre_core::env::{sample_environment_capped, MixingParams, Window};
use rwre_core::geometry::Direction;
use rwre_core::oned::{corollary_experiment, AnnealedOpts};
use rwre_core::renorm::{cascade_experiment, compute_constants, CascadeOpts, Marking, Scale0Opts};
use rwre_core::walk::velocity_annealed;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ExperimentConfig, MarkingSpec};
use crate::diag::{LabError, LabResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REPORT_SCHEMA: &str = "rwre-lab/report/v1";
pub const MANIFEST_SCHEMA: &str = "rwre-lab/manifest/v1";
/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "RWRE_LAB_OUT";
pub const DEFAULT_OUT: &str = "rwre-out";

/// Wall time of one named step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub op: String,
    pub seconds: f64,
}

/// Everything a run produced. `payload` is a pure function of the config.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub payload: Value,
    /// `(file name, contents)` of CSV curves.
    pub csv: Vec<(String, String)>,
    /// Extra files, such as a sampled environment.
    pub files: Vec<(String, Vec<u8>)>,
    pub timings: Vec<Timing>,
    /// Conditions whose verdict came out indeterminate.
    pub indeterminate: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub config_hash: String,
    /// SHA-256 of the report bytes; equal for equal config and seed.
    pub report_hash: String,
    pub experiment: String,
    pub seed: u64,
    pub jobs: usize,
    pub started_unix: u64,
    pub wall_seconds: f64,
    pub timings: Vec<Timing>,
    /// Master seed and the per-row seeds derived from it.
    pub seeds: Value,
}

fn timed<T>(timings: &mut Vec<Timing>, op: &str, f: impl FnOnce() -> LabResult<T>) -> LabResult<T> {
    let t0 = Instant::now();
    let out = f()?;
    timings.push(Timing {
        op: op.to_string(),
        seconds: t0.elapsed().as_secs_f64(),
    });
    Ok(out)
}

fn curve_csv(fit: &DecayFit) -> LabResult<String> {
    let mut buf = Vec::new();
    fit.write_csv(&mut buf)?;
    String::from_utf8(buf).map_err(|e| LabError::Internal(e.to_string()))
}

fn collect_condition(report: &ConditionReport, idx: usize, out: &mut Outcome) -> LabResult<()> {
    let name = report.condition.variant.name();
    if report.verdict == Answer::Indeterminate {
        out.indeterminate.push(format!("{idx}:{name}"));
    }
    if let Some(fit) = &report.curve {
        out.csv.push((format!("curve_{idx}_{name}.csv"), curve_csv(fit)?));
    }
    Ok(())
}

/// Runs the experiment on the current rayon pool.
pub fn execute(cfg: &ExperimentConfig) -> LabResult<Outcome> {
    cfg.validate()?;
    let mut out = Outcome {
        payload: Value::Null,
        csv: Vec::new(),
        files: Vec::new(),
        timings: Vec::new(),
        indeterminate: Vec::new(),
    };
    let opts = cfg.estimator_opts();
    let result = match &cfg.experiment {
        Experiment::Conditions { conditions, grids } => {
            let law = cfg.require_law()?;
            let mut rows = Vec::new();
            for (i, c) in conditions.iter().enumerate() {
                let spec = c.to_spec()?;
                let o = rwre_core::conditions::EstimatorOpts {
                    seed: rwre_core::rng::derive_seed(cfg.seed, &[i as i64]),
                    ..opts
                };
                let r = timed(&mut out.timings, &format!("condition_{i}_{}", spec.variant.name()), || {
                    Ok(evaluate_condition(law, &spec, grids, &o)?)
                })?;
                collect_condition(&r, i, &mut out)?;
                rows.push(r);
            }
            serde_json::to_value(rows)?
        }
        Experiment::Hierarchy {
            direction,
            b,
            gamma,
            m_poly,
            c,
            m_box,
            lambda1,
            grids,
        } => {
            let law = cfg.require_law()?;
            let specs = standard_specs(&Direction::new(direction.clone())?, *b, *gamma, *m_poly, *c, *m_box, *lambda1)?;
            let rep = timed(&mut out.timings, "hierarchy", || Ok(hierarchy_report(law, &specs, grids, &opts)?))?;
            for (i, r) in rep.rows.iter().enumerate() {
                collect_condition(r, i, &mut out)?;
            }
            serde_json::to_value(rep)?
        }
        Experiment::Cascade {
            hierarchy,
            marking,
            samples,
            lambda1,
            mixing,
            scale0_trials,
        } => {
            let h = hierarchy.build()?;
            let marking = match marking {
                MarkingSpec::Independent { p } => Marking::Independent { p: *p },
                MarkingSpec::Environment => Marking::Environment {
                    law: cfg.require_law()?.clone(),
                },
            };
            let copts = CascadeOpts {
                k_max: hierarchy.k_max,
                samples: *samples,
                lambda1: *lambda1,
                mixing: mixing.unwrap_or_else(MixingParams::independent),
                scale0: Scale0Opts {
                    trials: scale0_trials.unwrap_or(Scale0Opts::default().trials),
                    budget: cfg.limits.budget,
                    seed: cfg.seed,
                    z: cfg.limits.z,
                    censor_cap: cfg.limits.censor_cap,
                    ..Scale0Opts::default()
                },
                seed: cfg.seed,
                memory_cap: cfg.limits.memory_cap,
                z: cfg.limits.z,
            };
            let rep = timed(&mut out.timings, "cascade", || Ok(cascade_experiment(&h, &marking, &copts)?))?;
            serde_json::to_value(rep)?
        }
        Experiment::Constants {
            hierarchy,
            mixing,
            lambda1,
        } => {
            let h = hierarchy.build()?;
            let c = timed(&mut out.timings, "constants", || {
                Ok(compute_constants(&h, &mixing.unwrap_or_else(MixingParams::independent), *lambda1)?)
            })?;
            serde_json::to_value(c)?
        }
        Experiment::Corollary { m_grid, l_grid } => {
            let law = cfg.require_law()?;
            let aopts = AnnealedOpts {
                enumeration_cap: cfg.limits.enumeration_cap,
                samples: cfg.limits.env_samples.max(2),
                seed: cfg.seed,
            };
            let rep = timed(&mut out.timings, "corollary", || {
                Ok(corollary_experiment(law, m_grid, l_grid, &aopts)?)
            })?;
            serde_json::to_value(rep)?
        }
        Experiment::Velocity { n_steps } => {
            let law = cfg.require_law()?;
            let v = timed(&mut out.timings, "velocity", || {
                Ok(velocity_annealed(law, *n_steps, cfg.limits.trials, cfg.seed)?)
            })?;
            serde_json::to_value(v)?
        }
        Experiment::Environment { lo, hi, binary } => {
            let law = cfg.require_law()?;
            let w = Window::new(lo.clone(), hi.clone())?;
            let env = timed(&mut out.timings, "sample_environment", || {
                Ok(sample_environment_capped(law, &w, cfg.seed, cfg.limits.memory_cap)?)
            })?;
            if *binary {
                let mut bytes = Vec::new();
                env.write_binary(&mut bytes)?;
                out.files.push(("environment.bin".into(), bytes));
            } else {
                out.files.push(("environment.json".into(), env.to_json()?.into_bytes()));
            }
            serde_json::to_value(env.header())?
        }
    };
    out.payload = json!({
        "schema": REPORT_SCHEMA,
        "tool_version": TOOL_VERSION,
        "name": cfg.name,
        "experiment": cfg.experiment.kind(),
        "seed": cfg.seed,
        "law": cfg.law.as_ref().map(|l| l.law_id()),
        "indeterminate": out.indeterminate,
        "result": result,
    });
    Ok(out)
}

/// Runs on a dedicated pool of `jobs` threads.
pub fn execute_with_jobs(cfg: &ExperimentConfig, jobs: usize) -> LabResult<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| LabError::Internal(e.to_string()))?;
    pool.install(|| execute(cfg))
}

/// The report exactly as written to disk.
pub fn report_bytes(payload: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(payload).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory: explicit flag, then the environment variable, then the
/// config, then `rwre-out`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg_dir: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(v) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(v);
    }
    cfg_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Writes `report.json`, `manifest.json`, CSV curves and extra files.
pub fn write_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    outcome: &Outcome,
    jobs: usize,
    started_unix: u64,
    wall: f64,
) -> LabResult<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let report = report_bytes(&outcome.payload);
    std::fs::write(dir.join("report.json"), &report)?;
    if cfg.output.csv {
        for (name, text) in &outcome.csv {
            std::fs::write(dir.join(name), text)?;
        }
    }
    for (name, bytes) in &outcome.files {
        std::fs::write(dir.join(name), bytes)?;
    }
    let seeds = match &cfg.experiment {
        Experiment::Conditions { conditions, .. } => json!({
            "master": cfg.seed,
            "rows": (0..conditions.len()).map(|i| rwre_core::rng::derive_seed(cfg.seed, &[i as i64])).collect::<Vec<_>>(),
        }),
        Experiment::Hierarchy { .. } => json!({
            "master": cfg.seed,
            "rows": (0..5).map(|i| rwre_core::rng::derive_seed(cfg.seed, &[i as i64])).collect::<Vec<_>>(),
        }),
        _ => json!({ "master": cfg.seed }),
    };
    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        tool_version: TOOL_VERSION.into(),
        config_hash: cfg.hash(),
        report_hash: sha256_hex(&report),
        experiment: cfg.experiment.kind().into(),
        seed: cfg.seed,
        jobs,
        started_unix,
        wall_seconds: wall,
        timings: outcome.timings.clone(),
        seeds,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}
