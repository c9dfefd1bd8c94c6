//! Experiment configuration: strict JSON, validated before anything runs.

use std::path::{Path, PathBuf};

use rwre_core::conditions::{ConditionGrids, ConditionSpec, ConditionVariant, EstimatorOpts};
use rwre_core::env::{window_memory, EnvironmentLaw, MixingParams, Window, DEFAULT_MEMORY_CAP};
use rwre_core::geometry::{canonical_n0, canonical_nt0, make_hierarchy, Direction, ScaleHierarchy};
use rwre_core::walk::{DEFAULT_BUDGET, DEFAULT_CENSOR_CAP};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::diag::{LabError, LabResult};

pub const SCHEMA_VERSION: u32 = 1;

/// A complete, self-describing experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    /// Worker threads; never changes any reported number.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub law: Option<EnvironmentLaw>,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub output: OutputSpec,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    pub trials: u64,
    pub env_samples: u64,
    /// Step budget per walk.
    pub budget: u64,
    pub censor_cap: f64,
    pub z: f64,
    pub enumeration_cap: u128,
    /// Bytes any sampled environment window may occupy.
    pub memory_cap: u128,
}

impl Default for Limits {
    fn default() -> Self {
        let e = EstimatorOpts::default();
        Limits {
            trials: e.trials,
            env_samples: e.env_samples,
            budget: DEFAULT_BUDGET,
            censor_cap: DEFAULT_CENSOR_CAP,
            z: e.z,
            enumeration_cap: e.enumeration_cap,
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for artifacts; `--out` and `RWRE_LAB_OUT` take precedence in that order.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Also write CSV curves where the experiment has any.
    #[serde(default = "yes")]
    pub csv: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: None, csv: true }
    }
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

/// One condition to evaluate. The neighbourhood defaults to `ℓ` and its
/// 0.1 rad perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionEntry {
    pub variant: ConditionVariant,
    pub direction: Vec<f64>,
    #[serde(default = "one")]
    pub b: f64,
    #[serde(default)]
    pub neighborhood: Option<Vec<Vec<f64>>>,
}

impl ConditionEntry {
    pub fn to_spec(&self) -> LabResult<ConditionSpec> {
        let spec = ConditionSpec::new(self.variant, Direction::new(self.direction.clone())?, self.b)?;
        Ok(match &self.neighborhood {
            None => spec,
            Some(nb) => spec.with_neighborhood(nb.iter().map(|v| Direction::new(v.clone())).collect::<Result<_, _>>()?)?,
        })
    }
}

/// Scale hierarchy; `n0`/`nt0` default to `1100 d³` and `11 d³ N0²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchySpec {
    pub d: usize,
    pub l0: f64,
    #[serde(default)]
    pub n0: Option<u64>,
    #[serde(default)]
    pub nt0: Option<u64>,
    #[serde(default = "one")]
    pub c_tilde: f64,
    pub k_max: usize,
}

impl HierarchySpec {
    pub fn n0(&self) -> u64 {
        self.n0.unwrap_or_else(|| canonical_n0(self.d))
    }

    pub fn nt0(&self) -> u64 {
        self.nt0.unwrap_or_else(|| canonical_nt0(self.d))
    }

    pub fn build(&self) -> LabResult<ScaleHierarchy> {
        Ok(make_hierarchy(self.d, self.l0, self.n0(), self.nt0(), self.c_tilde, self.k_max)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkingSpec {
    Independent {
        p: f64,
    },
    /// Classify scale-0 boxes in environments drawn from the top-level law.
    Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// Evaluate each listed condition on the law.
    Conditions {
        conditions: Vec<ConditionEntry>,
        grids: ConditionGrids,
    },
    /// The five conditions along one direction, side by side.
    Hierarchy {
        direction: Vec<f64>,
        #[serde(default = "one")]
        b: f64,
        gamma: f64,
        m_poly: f64,
        c: f64,
        m_box: f64,
        lambda1: f64,
        grids: ConditionGrids,
    },
    /// Renormalization cascade at reduced constants.
    Cascade {
        hierarchy: HierarchySpec,
        marking: MarkingSpec,
        samples: u64,
        #[serde(default)]
        lambda1: Option<f64>,
        #[serde(default)]
        mixing: Option<MixingParams>,
        /// Walks per site when scale-0 boxes are classified by simulation.
        #[serde(default)]
        scale0_trials: Option<u64>,
    },
    /// The cascade constants alone.
    Constants {
        hierarchy: HierarchySpec,
        #[serde(default)]
        mixing: Option<MixingParams>,
        #[serde(default)]
        lambda1: Option<f64>,
    },
    /// Exit-rate convergence of quantized one-dimensional laws.
    Corollary { m_grid: Vec<usize>, l_grid: Vec<i64> },
    /// Annealed velocity after `n_steps`.
    Velocity { n_steps: u64 },
    /// Sample an environment on a window and write it as an artifact.
    Environment {
        lo: Vec<i64>,
        hi: Vec<i64>,
        #[serde(default)]
        binary: bool,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Conditions { .. } => "conditions",
            Experiment::Hierarchy { .. } => "hierarchy",
            Experiment::Cascade { .. } => "cascade",
            Experiment::Constants { .. } => "constants",
            Experiment::Corollary { .. } => "corollary",
            Experiment::Velocity { .. } => "velocity",
            Experiment::Environment { .. } => "environment",
        }
    }

    pub const KINDS: [&'static str; 7] = [
        "conditions",
        "hierarchy",
        "cascade",
        "constants",
        "corollary",
        "velocity",
        "environment",
    ];
}

/// Lower bound on the bytes of the environment window a cascade of this
/// hierarchy needs: the sites of the top `B_2` box, at `16·2d` bytes each.
pub fn cascade_memory_estimate(h: &ScaleHierarchy) -> f64 {
    let k = h.k_max;
    let along = (23.0 / 11.0) * h.l[k] + 3.0;
    let across = 5.0 * h.c_tilde * h.lt[k] + 3.0;
    let sites = along * across.powi(h.d as i32 - 1);
    sites * 16.0 * (2 * h.d) as f64
}

/// A reduced hierarchy that fits under `cap`, offered with the refusal.
pub fn suggest_scaled(spec: &HierarchySpec, cap: u128) -> Option<HierarchySpec> {
    let l0 = (3.0 * (spec.d as f64).sqrt()).floor() + 2.0;
    let l0 = if spec.d == 1 { 10.0 } else { l0 };
    let (n0, nt0) = if spec.d == 1 { (4, 4) } else { (11, 6) };
    let c_tilde = if spec.d == 1 { 1.0 } else { 0.5 };
    (0..=spec.k_max.min(3)).rev().find_map(|k_max| {
        let s = HierarchySpec {
            d: spec.d,
            l0,
            n0: Some(n0),
            nt0: Some(nt0),
            c_tilde,
            k_max,
        };
        let h = s.build().ok()?;
        (cascade_memory_estimate(&h) <= cap as f64).then_some(s)
    })
}

fn config_err(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> LabResult<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical serialization; the config hash is taken over these bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn estimator_opts(&self) -> EstimatorOpts {
        EstimatorOpts {
            trials: self.limits.trials,
            env_samples: self.limits.env_samples,
            budget: self.limits.budget,
            censor_cap: self.limits.censor_cap,
            z: self.limits.z,
            enumeration_cap: self.limits.enumeration_cap,
            seed: self.seed,
        }
    }

    pub fn require_law(&self) -> LabResult<&EnvironmentLaw> {
        self.law
            .as_ref()
            .ok_or_else(|| config_err(format!("experiment '{}' needs a law", self.experiment.kind())))
    }

    fn law_of_dim(&self, d: usize) -> LabResult<&EnvironmentLaw> {
        let law = self.require_law()?;
        if law.dim() != d {
            return Err(config_err(format!("law has dimension {}, experiment uses {d}", law.dim())));
        }
        Ok(law)
    }

    /// Checks every sub-spec without simulating anything.
    pub fn validate(&self) -> LabResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.jobs == Some(0) {
            return Err(config_err("jobs must be at least 1"));
        }
        let l = &self.limits;
        if l.trials == 0 || l.budget == 0 || !(l.z > 0.0) || !(0.0..=1.0).contains(&l.censor_cap) {
            return Err(config_err("limits need trials ≥ 1, budget ≥ 1, z > 0 and censor_cap in [0, 1]"));
        }
        if let Some(law) = &self.law {
            law.validate()?;
        }
        match &self.experiment {
            Experiment::Conditions { conditions, grids } => {
                if conditions.is_empty() {
                    return Err(config_err("no conditions listed"));
                }
                for c in conditions {
                    let spec = c.to_spec()?;
                    self.law_of_dim(spec.dim())?;
                }
                validate_grids(grids, conditions.iter().map(|c| c.variant))?;
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
                let dir = Direction::new(direction.clone())?;
                self.law_of_dim(dir.dim())?;
                let specs = rwre_core::conditions::standard_specs(&dir, *b, *gamma, *m_poly, *c, *m_box, *lambda1)?;
                validate_grids(grids, specs.iter().map(|s| s.variant))?;
            }
            Experiment::Cascade {
                hierarchy,
                marking,
                samples,
                lambda1,
                mixing,
                ..
            } => {
                if *samples == 0 {
                    return Err(config_err("cascade needs at least one sample"));
                }
                if let Some(m) = mixing {
                    m.validate()?;
                }
                if let Some(l1) = lambda1 {
                    if !(*l1 > 0.0 && *l1 <= 1.0) {
                        return Err(config_err(format!("lambda1 = {l1} must lie in (0, 1]")));
                    }
                }
                match marking {
                    MarkingSpec::Independent { p } if !(0.0..=1.0).contains(p) => {
                        return Err(config_err(format!("marking probability {p} outside [0, 1]")))
                    }
                    MarkingSpec::Environment => {
                        self.law_of_dim(hierarchy.d)?;
                    }
                    _ => {}
                }
                self.check_feasible(hierarchy)?;
            }
            Experiment::Constants { hierarchy, mixing, .. } => {
                hierarchy.build()?;
                if let Some(m) = mixing {
                    m.validate()?;
                }
            }
            Experiment::Corollary { m_grid, l_grid } => {
                self.law_of_dim(1)?;
                if l_grid.is_empty() || l_grid.iter().any(|&x| x < 1) || m_grid.iter().any(|&m| m < 1) {
                    return Err(config_err("corollary needs positive L and m values"));
                }
            }
            Experiment::Velocity { n_steps } => {
                self.require_law()?;
                if *n_steps == 0 {
                    return Err(config_err("n_steps must be positive"));
                }
            }
            Experiment::Environment { lo, hi, .. } => {
                let law = self.law_of_dim(lo.len())?;
                let w = Window::new(lo.clone(), hi.clone())?;
                let need = window_memory(&w, law.dim());
                if need > self.limits.memory_cap {
                    return Err(LabError::Capacity {
                        message: format!("window needs {need} bytes, cap is {}", self.limits.memory_cap),
                        suggestion: None,
                    });
                }
            }
        }
        Ok(())
    }

    /// Refuses cascades whose window cannot fit, suggesting reduced constants.
    fn check_feasible(&self, spec: &HierarchySpec) -> LabResult<()> {
        let cap = self.limits.memory_cap;
        let h = match spec.build() {
            Ok(h) => h,
            Err(LabError::Core(rwre_core::Error::Range(m))) => {
                return Err(infeasible(spec, format!("scales overflow: {m}"), cap));
            }
            Err(e) => return Err(e),
        };
        let need = cascade_memory_estimate(&h);
        if need > cap as f64 {
            return Err(infeasible(
                spec,
                format!("window needs at least {need:.3e} bytes (sites × 16 × 2d), cap is {cap} bytes"),
                cap,
            ));
        }
        Ok(())
    }
}

fn infeasible(spec: &HierarchySpec, detail: String, cap: u128) -> LabError {
    LabError::Capacity {
        message: format!(
            "infeasible constants: N0 = {}, Ntilde0 = {}, k_max = {}: {detail}",
            spec.n0(),
            spec.nt0(),
            spec.k_max
        ),
        suggestion: suggest_scaled(spec, cap).map(|s| json!({ "hierarchy": s })),
    }
}

fn validate_grids(grids: &ConditionGrids, variants: impl Iterator<Item = ConditionVariant>) -> LabResult<()> {
    let increasing = |g: &[f64]| !g.is_empty() && g.windows(2).all(|w| w[0] < w[1]) && g.iter().all(|x| *x > 0.0);
    for v in variants {
        match v {
            ConditionVariant::PolynomialP { .. } | ConditionVariant::StretchT { .. } if !increasing(&grids.l_grid) => {
                return Err(config_err("l_grid must be positive and strictly increasing"));
            }
            ConditionVariant::BoxT { .. } => {
                let g = if grids.box_l_grid.is_empty() {
                    &grids.l_grid
                } else {
                    &grids.box_l_grid
                };
                if !increasing(g) {
                    return Err(config_err("box grid must be positive and strictly increasing"));
                }
            }
            ConditionVariant::Transience => {
                let n = &grids.n_grid;
                if n.is_empty() || n[0] == 0 || n.windows(2).any(|w| w[0] >= w[1]) || grids.transience_trials == 0 {
                    return Err(config_err("n_grid must be positive and increasing, with transience_trials ≥ 1"));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SLAB: &str = r#"{
        "schema_version": 1,
        "seed": 7,
        "law": {"variant": {"kind": "homogeneous", "vector": [0.9, 0.1]}, "params": {"d": 1, "kappa": 0.01}},
        "experiment": {
            "kind": "conditions",
            "conditions": [{"variant": {"kind": "stretch_t", "gamma": 1.0}, "direction": [1.0]}],
            "grids": {"l_grid": [2, 4, 8], "n_grid": [10], "transience_trials": 10}
        }
    }"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_json(SLAB).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.limits, Limits::default());
        assert!(cfg.output.csv);
        assert_eq!(cfg.hash().len(), 64);
        let again = ExperimentConfig::from_json(&cfg.canonical_json()).unwrap();
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let extra = SLAB.replacen("\"seed\": 7,", "\"seed\": 7, \"sed\": 1,", 1);
        assert!(matches!(ExperimentConfig::from_json(&extra), Err(LabError::Config(_))));
        let nested = SLAB.replace("\"direction\": [1.0]", "\"direction\": [1.0], \"bb\": 2");
        assert!(ExperimentConfig::from_json(&nested).is_err());
        let in_limits = SLAB.replacen("\"seed\": 7,", "\"seed\": 7, \"limits\": {\"trails\": 5},", 1);
        assert!(ExperimentConfig::from_json(&in_limits).is_err());
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        let wrong_dim = SLAB.replace("\"direction\": [1.0]", "\"direction\": [1.0, 0.0]");
        let cfg = ExperimentConfig::from_json(&wrong_dim).unwrap();
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        let bad_gamma = SLAB.replace("\"gamma\": 1.0", "\"gamma\": 2.0");
        assert_eq!(
            ExperimentConfig::from_json(&bad_gamma).unwrap().validate().unwrap_err().exit_code(),
            2
        );
        let bad_law = SLAB.replace("[0.9, 0.1]", "[0.9, 0.2]");
        assert_eq!(
            ExperimentConfig::from_json(&bad_law).unwrap().validate().unwrap_err().exit_code(),
            2
        );
        let version = SLAB.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(ExperimentConfig::from_json(&version).unwrap().validate().is_err());
    }

    #[test]
    fn full_constants_are_refused_with_a_suggestion() {
        let text = r#"{
            "schema_version": 1, "seed": 1,
            "experiment": {"kind": "cascade", "hierarchy": {"d": 2, "l0": 10, "k_max": 1},
                           "marking": {"kind": "independent", "p": 0.05}, "samples": 10}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let diag = err.diagnostic();
        assert!(diag["message"].as_str().unwrap().contains("infeasible constants"));
        let suggested: HierarchySpec = serde_json::from_value(diag["suggestion"]["hierarchy"].clone()).unwrap();
        let h = suggested.build().unwrap();
        assert!(cascade_memory_estimate(&h) <= DEFAULT_MEMORY_CAP as f64);
        assert_eq!(suggested.k_max, 1);
    }

    #[test]
    fn memory_estimate_matches_window_formula() {
        // d = 1: (23/11)·L + 3 sites at 32 bytes each
        let h = make_hierarchy(1, 11.0, 4, 4, 1.0, 0).unwrap();
        assert!((cascade_memory_estimate(&h) - (23.0 + 3.0) * 32.0).abs() < 1e-9);
    }
}
