//! Good/Bad classification of boxes across scales, the cascade constants and
//! desk-scale cascade experiments.
//!
//! A scale-0 box `B_{2,0}(x)` is Good when the worst quenched probability of
//! leaving it other than through its front face, over starts in `B̃_{1,0}(x)`,
//! is below `√λ1`. A scale-k box is Good when some child `y` of its quasi-cover
//! has every child disjoint from `B_{2,k−1}(y)` Good. Boxes are sets of lattice
//! sites, so "disjoint" means sharing no site.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{sample_environment_capped, window_memory, EnvironmentLaw, MixingParams, QuenchedEnvironment, Window};
use crate::geometry::{dependency_set, lattice_disjoint, quasi_cover, BoxKind, BoxSpec, Direction, Membership, Region, ScaleHierarchy};
use crate::oned::{solve_absorption, BirthDeathChain};
use crate::rng::{self, tag};
use crate::stats::{linear_fit, wilson_interval, Estimate};
use crate::walk::{trial_rng, Race, StopSpec, DEFAULT_BUDGET, DEFAULT_CENSOR_CAP};
use crate::{Error, Result};

/// Number of annealed rates computed beyond the hierarchy, enough for the
/// series to settle to double precision.
pub const DEFAULT_TERMS: usize = 61;

/// Largest number of lattice sites enumerated when deciding whether two
/// rotated boxes intersect.
pub const DISJOINT_SITE_CAP: u128 = 1 << 22;

/// Stamp carried by every cascade report.
pub const REDUCED_CONSTANTS_NOTE: &str = "structural check at reduced constants";

/// `λ2 = ((5/3)Ñ0)^{2(d−1)} ((23/11)N0)²`.
pub fn lambda2(d: usize, n0: u64, nt0: u64) -> f64 {
    (5.0 / 3.0 * nt0 as f64).powi(2 * (d as i32 - 1)) * (23.0 / 11.0 * n0 as f64).powi(2)
}

/// `λ2` in exact rational arithmetic.
pub fn lambda2_exact(d: usize, n0: u64, nt0: u64) -> BigRational {
    let lateral = BigRational::new(BigInt::from(5u64) * BigInt::from(nt0), BigInt::from(3u64));
    let frontal = BigRational::new(BigInt::from(23u64) * BigInt::from(n0), BigInt::from(11u64));
    num_traits::pow(lateral, 2 * (d - 1)) * num_traits::pow(frontal, 2)
}

/// Default `λ1 = (4λ2)^{−2}`, exactly.
pub fn lambda1_default_exact(d: usize, n0: u64, nt0: u64) -> BigRational {
    let four_l2 = lambda2_exact(d, n0, nt0) * BigInt::from(4u64);
    num_traits::pow(four_l2, 2).recip()
}

/// `L_k / (4^k L_0)` as an exact rational read off the hierarchy's stored
/// scales. The quenched ladder `c_k L_k = c_0 L_0 (N_0/4)^k` holds exactly when
/// this equals `(N_0/4)^k`.
pub fn quenched_ladder_factor(h: &ScaleHierarchy, k: usize) -> Result<BigRational> {
    h.check_scale(k)?;
    let lk = BigRational::from_float(h.l[k]).ok_or_else(|| Error::Range(format!("L_{k} is not finite")))?;
    let l0 = BigRational::from_float(h.l0).ok_or_else(|| Error::Range("L0 is not finite".into()))?;
    Ok(lk / (l0 * num_traits::pow(BigInt::from(4u64), k)))
}

/// `(N_0/4)^k` exactly.
pub fn ladder_ratio_exact(n0: u64, k: usize) -> BigRational {
    num_traits::pow(BigRational::new(BigInt::from(n0), BigInt::from(4u64)), k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeConstants {
    pub d: usize,
    pub n0: u64,
    pub nt0: u64,
    pub l0: f64,
    pub lambda2: f64,
    pub lambda1: f64,
    /// `c_k` of the annealed induction, `k = 0..terms`.
    pub c_annealed: Vec<f64>,
    /// `c_k = ln(1/√λ1) / (4^k L_0)` for `k = 0..=k_max` of the hierarchy.
    pub c_quenched: Vec<f64>,
    /// `c_0 − (ln λ2 + e^{−g L_0/30})`, the closed-form lower bound on `inf_k c_k`.
    pub c_limit: f64,
    /// Whether `c_limit > 0`.
    pub inf_positive: bool,
    /// Whether the scale-0 mixing correction is below `e^{−g L_0/30}`, the
    /// condition under which `c_limit` bounds the sequence.
    pub series_condition: bool,
    pub n_k: f64,
    pub j_k: u64,
    pub w0: f64,
    pub gamma: f64,
    /// Fitted diagnostics, filled in by experiments.
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub eta3: Option<f64>,
    pub mixing: MixingParams,
}

/// Uniform bound on `ln Γ_M` at scale `k`, assembled from the logarithms of
/// the scales so that far scales underflow to 0 instead of overflowing.
fn correction_term(mp: &MixingParams, d: usize, h: &ScaleHierarchy, k: usize) -> f64 {
    if mp.c == 0.0 {
        return 0.0;
    }
    let (ln_n0, ln_nt0, ln_l0) = ((h.n0 as f64).ln(), (h.nt0 as f64).ln(), h.l0.ln());
    let ln_lk = ln_l0 + k as f64 * ln_n0;
    let ln_ltk = ln_l0 + k as f64 * ln_nt0;
    let lk = ln_lk.exp();
    let log = -mp.g * (9.0 / 11.0) * lk
        + 9f64.ln()
        + 2.0 * d as f64 * (mp.r as f64).ln()
        + 2.0 * ln_lk
        + 2.0 * (d as f64 - 1.0) * ((6.0 * h.c_tilde).ln() + ln_ltk)
        + mp.c.ln();
    log.exp()
}

/// Constants with `terms` annealed rates.
pub fn compute_constants_with_terms(
    h: &ScaleHierarchy,
    mixing: &MixingParams,
    lambda1_override: Option<f64>,
    terms: usize,
) -> Result<CascadeConstants> {
    mixing.validate()?;
    if terms == 0 {
        return Err(Error::InvalidParams("need at least one annealed term".into()));
    }
    let d = h.d;
    let l2 = lambda2(d, h.n0, h.nt0);
    let lambda1 = lambda1_override.unwrap_or_else(|| (4.0 * l2).powi(-2));
    if !(lambda1 > 0.0 && lambda1 <= 1.0) {
        return Err(Error::InvalidParams(format!("lambda1 = {lambda1} must lie in (0, 1]")));
    }
    let c0 = -0.5 * lambda1.ln();
    let ln_l2 = l2.ln();
    let mut c_annealed = Vec::with_capacity(terms);
    c_annealed.push(c0);
    for k in 0..terms - 1 {
        let scale = 2f64.powi(k as i32 + 1);
        let prev = c_annealed[k];
        c_annealed.push(prev - ln_l2 / scale - correction_term(mixing, d, h, k) / scale);
    }
    let c_quenched = (0..=h.k_max).map(|k| c0 / (4f64.powi(k as i32) * h.l0)).collect();
    let tail = (-mixing.g * h.l0 / 30.0).exp();
    let c_limit = c0 - (ln_l2 + tail);
    let n_k = 23.0 / 11.0 * h.n0 as f64 + 1.0;
    Ok(CascadeConstants {
        d,
        n0: h.n0,
        nt0: h.nt0,
        l0: h.l0,
        lambda2: l2,
        lambda1,
        c_annealed,
        c_quenched,
        c_limit,
        inf_positive: c_limit > 0.0,
        series_condition: correction_term(mixing, d, h, 0) < tail,
        n_k,
        j_k: (h.nt0 as f64 / (4.0 * (n_k + 1.0))).floor() as u64,
        w0: h.n0 as f64 * (1.0 + 1.0 / 11.0),
        gamma: 2f64.ln() / (2.0 * (h.n0 as f64).ln()),
        eta1: None,
        eta2: None,
        eta3: None,
        mixing: *mixing,
    })
}

/// Constants with [`DEFAULT_TERMS`] annealed rates.
pub fn compute_constants(h: &ScaleHierarchy, mixing: &MixingParams, lambda1_override: Option<f64>) -> Result<CascadeConstants> {
    compute_constants_with_terms(h, mixing, lambda1_override, DEFAULT_TERMS)
}

impl CascadeConstants {
    pub fn sqrt_lambda1(&self) -> f64 {
        self.lambda1.sqrt()
    }

    /// `inf_k c_k` over the computed terms.
    pub fn c_annealed_inf(&self) -> f64 {
        self.c_annealed.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Annealed bad-box bound `e^{−c_k 2^k}`.
    pub fn annealed_bound(&self, k: usize) -> Option<f64> {
        self.c_annealed.get(k).map(|c| (-c * 2f64.powi(k as i32)).exp())
    }

    /// Quenched Good-box bound `e^{−c_k L_k}`.
    pub fn quenched_bound(&self, h: &ScaleHierarchy, k: usize) -> Option<f64> {
        Some((-self.c_quenched.get(k)? * h.l.get(k)?).exp())
    }
}

/// `exp(−(J_k/8)(c_k L_k − ln(2(d−1) n_k)))` at a given value of `c_k L_k`,
/// capped at 1. In `d = 1` there are no lateral directions and the lateral
/// probability itself, 0, is returned.
pub fn lateral_bound(constants: &CascadeConstants, ck_lk: f64) -> f64 {
    if constants.d < 2 {
        return 0.0;
    }
    let exponent = constants.j_k as f64 / 8.0 * (ck_lk - (2.0 * (constants.d as f64 - 1.0) * constants.n_k).ln());
    (-exponent).exp().min(1.0)
}

/// The lateral bound at scale `k`, using the quenched rate `c_k L_k`.
pub fn lateral_bound_value(constants: &CascadeConstants, h: &ScaleHierarchy, k: usize) -> Result<f64> {
    h.check_scale(k)?;
    let ck = constants
        .c_quenched
        .get(k)
        .ok_or_else(|| Error::Range(format!("no quenched rate at scale {k}")))?;
    Ok(lateral_bound(constants, ck * h.l[k]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Good,
    Bad,
}

impl Label {
    pub fn is_bad(self) -> bool {
        self == Label::Bad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStatus {
    #[serde(rename = "box")]
    pub bx: BoxSpec,
    pub label: Label,
    /// Worst non-frontal exit probability over `B̃_1` (scale 0 only).
    pub sup_exit: Option<Estimate>,
    /// The confidence interval straddled `√λ1`; the label is then Bad.
    pub indeterminate: bool,
    /// `λ1 = 1`, which makes every box Good.
    pub degenerate: bool,
    /// For a Bad scale-k box, two disjoint Bad children (indices into the cover).
    pub witness: Option<(usize, usize)>,
    /// For a Good scale-k box, the child `y` whose disjoint complement is Good.
    pub certificate: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale0Method {
    /// Exact solve in `d = 1` along `e_1`, simulation otherwise.
    Auto,
    Exact,
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale0Opts {
    pub method: Scale0Method,
    /// Walks per starting site when simulating.
    pub trials: u64,
    pub budget: u64,
    pub seed: u64,
    /// Width of the per-site confidence interval in standard deviations.
    pub z: f64,
    pub censor_cap: f64,
}

impl Default for Scale0Opts {
    fn default() -> Self {
        Scale0Opts {
            method: Scale0Method::Auto,
            trials: 2000,
            budget: DEFAULT_BUDGET,
            seed: 0,
            z: 3.0,
            censor_cap: DEFAULT_CENSOR_CAP,
        }
    }
}

fn as_b2(bx: &BoxSpec) -> BoxSpec {
    BoxSpec {
        kind: BoxKind::B2,
        ..bx.clone()
    }
}

fn as_b1_tilde(bx: &BoxSpec) -> BoxSpec {
    BoxSpec {
        kind: BoxKind::B1Tilde,
        ..bx.clone()
    }
}

/// Exact non-frontal exit probabilities from every site of `B̃_1` in `d = 1`.
fn scale0_exact(env: &QuenchedEnvironment, bx: &BoxSpec) -> Result<f64> {
    let b2 = as_b2(bx).region();
    let b1 = as_b1_tilde(bx).region();
    let (Some(r2), Some(r1)) = (b2.integer_ranges(), b1.integer_ranges()) else {
        return Err(Error::InvalidParams("exact scale-0 classification needs direction e1".into()));
    };
    let ((i0, i1), (s0, s1)) = (r2[0], r1[0]);
    let chain = BirthDeathChain::from_env(env, i0 - 1, i1 + 1)?;
    let sol = solve_absorption(&chain);
    // the upper barrier i1 + 1 ≥ front is the only frontal exit
    Ok((s0.max(i0 - 1)..=s1.min(i1 + 1)).map(|s| sol.q_at(s)).fold(0.0, f64::max))
}

/// Label a scale-0 box from the worst non-frontal exit probability.
pub fn classify_scale0(env: &QuenchedEnvironment, bx: &BoxSpec, lambda1: f64, opts: &Scale0Opts) -> Result<BoxStatus> {
    if !(lambda1 > 0.0 && lambda1 <= 1.0) {
        return Err(Error::InvalidParams(format!("lambda1 = {lambda1} must lie in (0, 1]")));
    }
    let threshold = lambda1.sqrt();
    let exact_ok = env.dim() == 1 && bx.direction.is_e1();
    let use_exact = match opts.method {
        Scale0Method::Auto => exact_ok,
        Scale0Method::Exact if !exact_ok => {
            return Err(Error::InvalidParams(
                "exact scale-0 classification needs d = 1 and direction e1".into(),
            ))
        }
        Scale0Method::Exact => true,
        Scale0Method::Simulate => false,
    };
    let mut status = BoxStatus {
        bx: as_b2(bx),
        label: Label::Good,
        sup_exit: None,
        indeterminate: false,
        degenerate: lambda1 >= 1.0,
        witness: None,
        certificate: None,
    };
    if use_exact {
        let sup = scale0_exact(env, bx)?;
        status.sup_exit = Some(Estimate::exact(sup));
        if sup >= threshold && !status.degenerate {
            status.label = Label::Bad;
        }
        return Ok(status);
    }

    let b2 = as_b2(bx).region();
    let starts = as_b1_tilde(bx).region().sites(DISJOINT_SITE_CAP)?;
    let race = Race::new(bx.dim(), vec![StopSpec::ExitSet(b2.clone())], opts.budget)?;
    let per_site: Vec<(u64, u64)> = starts
        .par_iter()
        .enumerate()
        .map(|(si, x)| {
            let mut hits = 0u64;
            let mut censored = 0u64;
            for t in 0..opts.trials {
                let mut m = env;
                let mut r = trial_rng(rng::derive_seed(opts.seed, &[tag::SITE, si as i64]), t);
                let rec = race.run(&mut m, x, &mut r, &mut ())?;
                if rec.censored {
                    censored += 1;
                } else if b2.classify(&rec.exit_site) != Membership::BoundaryPlus {
                    hits += 1;
                }
            }
            Ok((hits, censored))
        })
        .collect::<Result<_>>()?;

    let total_censored: u64 = per_site.iter().map(|p| p.1).sum();
    let total = opts.trials * per_site.len() as u64;
    if total > 0 && total_censored as f64 / total as f64 > opts.censor_cap {
        return Err(Error::ExcessiveCensoring {
            censored: total_censored,
            trials: total,
            fraction: total_censored as f64 / total as f64,
            cap: opts.censor_cap,
        });
    }
    let mut worst = Estimate::proportion(0, opts.trials, 0);
    let (mut any_above, mut all_below) = (false, true);
    for &(hits, cens) in &per_site {
        let n = opts.trials - cens;
        let (lo, hi) = wilson_interval(hits, n, opts.z);
        any_above |= lo >= threshold;
        all_below &= hi < threshold;
        let e = Estimate::proportion(hits, opts.trials, cens);
        if e.estimate > worst.estimate || worst.estimate.is_nan() {
            worst = e;
        }
    }
    status.sup_exit = Some(worst);
    if status.degenerate {
        return Ok(status);
    }
    if any_above {
        status.label = Label::Bad;
    } else if !all_below {
        status.label = Label::Bad;
        status.indeterminate = true;
    }
    Ok(status)
}

/// Whether two boxes share no lattice site.
pub fn boxes_disjoint(a: &Region, b: &Region) -> Result<bool> {
    if let Some(v) = lattice_disjoint(a, b) {
        return Ok(v);
    }
    let sites = a.sites(DISJOINT_SITE_CAP)?;
    Ok(!sites.iter().any(|z| b.contains(z)))
}

/// The quasi-cover of a scale-k box viewed as `B_{2,k−1}` boxes, with their
/// pairwise disjointness.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildCover {
    pub parent: BoxSpec,
    pub children: Vec<BoxSpec>,
    disjoint: Vec<bool>,
}

impl ChildCover {
    pub fn new(h: &ScaleHierarchy, k: usize, parent: &BoxSpec) -> Result<Self> {
        let children: Vec<BoxSpec> = quasi_cover(h, k, &as_b2(parent))?.iter().map(as_b2).collect();
        let regions: Vec<Region> = children.iter().map(BoxSpec::region).collect();
        let n = children.len();
        let mut disjoint = vec![false; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = boxes_disjoint(&regions[i], &regions[j])?;
                disjoint[i * n + j] = v;
                disjoint[j * n + i] = v;
            }
        }
        Ok(ChildCover {
            parent: as_b2(parent),
            children,
            disjoint,
        })
    }

    pub fn len(&self) -> usize {
        self.children.len()
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    pub fn disjoint(&self, i: usize, j: usize) -> bool {
        self.disjoint[i * self.len() + j]
    }

    /// Unordered pairs of children with disjoint `B_2` boxes.
    pub fn disjoint_pair_count(&self) -> usize {
        let n = self.len();
        (0..n).map(|i| (i + 1..n).filter(|&j| self.disjoint(i, j)).count()).sum()
    }
}

/// Outcome of the recursive rule on one cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub certificate: Option<usize>,
    pub witness: Option<(usize, usize)>,
}

/// Apply the recursive rule: Good iff some child `y` (searched in cover
/// order) has every child disjoint from it Good.
pub fn classify_recursive(cover: &ChildCover, labels: &[Option<Label>]) -> Result<Verdict> {
    if labels.len() != cover.len() {
        return Err(Error::InvalidParams(format!(
            "{} labels for a cover of {} children",
            labels.len(),
            cover.len()
        )));
    }
    let labels: Vec<Label> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::MissingChild(format!("{i} at {:?}", cover.children[i].anchor))))
        .collect::<Result<_>>()?;
    let n = cover.len();
    let bad: Vec<usize> = (0..n).filter(|&i| labels[i].is_bad()).collect();
    let certificate = (0..n).find(|&y| bad.iter().all(|&z| z == y || !cover.disjoint(y, z)));
    if let Some(y) = certificate {
        return Ok(Verdict {
            label: Label::Good,
            certificate: Some(y),
            witness: None,
        });
    }
    // no certificate: the first Bad child has a disjoint Bad partner
    let witness = bad
        .iter()
        .find_map(|&a| bad.iter().find(|&&b| cover.disjoint(a, b)).map(|&b| (a.min(b), a.max(b))));
    Ok(Verdict {
        label: Label::Bad,
        certificate: None,
        witness,
    })
}

/// The looser reading "no two disjoint children are both Bad". A Bad label
/// under [`classify_recursive`] is always Bad here; the converse can fail.
pub fn pairwise_reading(cover: &ChildCover, labels: &[Label]) -> Label {
    let n = cover.len();
    let clash = (0..n).any(|i| labels[i].is_bad() && (i + 1..n).any(|j| labels[j].is_bad() && cover.disjoint(i, j)));
    if clash {
        Label::Bad
    } else {
        Label::Good
    }
}

/// All boxes a scale-`k_max` box at the origin depends on, level by level.
#[derive(Debug, Clone)]
pub struct CascadeTree {
    /// `levels[k]` holds the scale-k `B_2` boxes.
    pub levels: Vec<Vec<BoxSpec>>,
    /// For each box at scale `k ≥ 1`, its cover and the indices of its
    /// children in `levels[k − 1]`.
    covers: Vec<Vec<(ChildCover, Vec<usize>)>>,
    /// Index of the box anchored at the origin on each level.
    pub origin: Vec<usize>,
}

fn anchor_key(a: &[f64]) -> Vec<u64> {
    a.iter().map(|x| (x + 0.0).to_bits()).collect()
}

impl CascadeTree {
    pub fn build(h: &ScaleHierarchy, k_max: usize, direction: &Direction) -> Result<Self> {
        h.check_scale(k_max)?;
        let top = BoxSpec::at_scale(BoxKind::B2, vec![0.0; h.d], k_max, h, direction)?;
        let mut levels: Vec<Vec<BoxSpec>> = vec![Vec::new(); k_max + 1];
        let mut covers: Vec<Vec<(ChildCover, Vec<usize>)>> = vec![Vec::new(); k_max + 1];
        levels[k_max].push(top);
        for k in (1..=k_max).rev() {
            let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
            let mut below = Vec::new();
            for parent in &levels[k] {
                let cover = ChildCover::new(h, k, parent)?;
                let ids = cover
                    .children
                    .iter()
                    .map(|c| {
                        *index.entry(anchor_key(&c.anchor)).or_insert_with(|| {
                            below.push(c.clone());
                            below.len() - 1
                        })
                    })
                    .collect();
                covers[k].push((cover, ids));
            }
            levels[k - 1] = below;
        }
        let zero = anchor_key(&vec![0.0; h.d]);
        let origin = levels
            .iter()
            .enumerate()
            .map(|(k, lv)| {
                lv.iter()
                    .position(|b| anchor_key(&b.anchor) == zero)
                    .ok_or_else(|| Error::Range(format!("no box anchored at the origin on scale {k}")))
            })
            .collect::<Result<_>>()?;
        Ok(CascadeTree { levels, covers, origin })
    }

    pub fn k_max(&self) -> usize {
        self.levels.len() - 1
    }

    /// Cover of the box at index `i` on scale `k ≥ 1`.
    pub fn cover(&self, k: usize, i: usize) -> &ChildCover {
        &self.covers[k][i].0
    }

    /// Propagate scale-0 labels upward; returns labels for every level.
    pub fn propagate(&self, scale0: Vec<Label>) -> Result<Vec<Vec<Label>>> {
        if scale0.len() != self.levels[0].len() {
            return Err(Error::InvalidParams("scale-0 labels do not match the tree".into()));
        }
        let mut out = vec![scale0];
        for k in 1..=self.k_max() {
            let below = &out[k - 1];
            let lv = self.covers[k]
                .iter()
                .map(|(cover, ids)| {
                    let labels: Vec<Option<Label>> = ids.iter().map(|&i| Some(below[i])).collect();
                    classify_recursive(cover, &labels).map(|v| v.label)
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(lv);
        }
        Ok(out)
    }

    /// Window containing every site any label in the tree can depend on.
    pub fn window(&self, h: &ScaleHierarchy) -> Result<Window> {
        let top = &self.levels[self.k_max()][0];
        let dep = dependency_set(h, self.k_max(), &top.anchor, &top.direction)?;
        let (lo, hi) = dep
            .bounding_box()
            .ok_or_else(|| Error::Range("dependency set is unbounded".into()))?;
        // one more layer for the exit sites themselves
        Window::new(lo.iter().map(|v| v - 1).collect(), hi.iter().map(|v| v + 1).collect())
    }
}

/// How scale-0 boxes get their labels in a cascade experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marking {
    /// Sample an environment and classify every scale-0 box.
    Environment { law: EnvironmentLaw },
    /// Mark each scale-0 box Bad independently with probability `p`.
    Independent { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeOpts {
    pub k_max: usize,
    /// Independent samples; each contributes one box per scale.
    pub samples: u64,
    pub lambda1: Option<f64>,
    pub mixing: MixingParams,
    pub scale0: Scale0Opts,
    pub seed: u64,
    pub memory_cap: u128,
    /// Interval width in standard deviations for reported bounds.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub k: usize,
    pub n_boxes: u64,
    pub n_bad: u64,
    pub p_bad: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `e^{−c_k 2^k}`.
    pub bound: f64,
    /// Disjoint child pairs in the cover of the origin box (`k ≥ 1`).
    pub pair_count: Option<usize>,
    /// `pair_count · p_{k−1}²`, the union bound if children were independent.
    pub pair_bound: Option<f64>,
    /// Largest quenched sup-exit observed for a Good origin box (d = 1 only).
    pub quenched_sup: Option<f64>,
    /// `e^{−c_k L_k}`.
    pub quenched_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub note: String,
    pub marking: Marking,
    pub scales: Vec<ScaleRow>,
    /// Mean of `−ln p_k / 2^k` over scales with `0 < p_k < 1`.
    pub eta1_hat: Option<f64>,
    pub constants: CascadeConstants,
}

/// Worst non-frontal exit from `B̃_{1,k}` of a scale-k box, exactly (d = 1).
fn quenched_sup_exact(env: &QuenchedEnvironment, bx: &BoxSpec) -> Option<f64> {
    scale0_exact(env, bx).ok()
}

pub fn cascade_experiment(h: &ScaleHierarchy, marking: &Marking, opts: &CascadeOpts) -> Result<CascadeReport> {
    let mut constants = compute_constants(h, &opts.mixing, opts.lambda1)?;
    if opts.samples == 0 {
        return Err(Error::InvalidParams("cascade needs at least one sample".into()));
    }
    let direction = Direction::e1(h.d);
    let tree = CascadeTree::build(h, opts.k_max, &direction)?;
    let window = match marking {
        Marking::Environment { law } => {
            if law.dim() != h.d {
                return Err(Error::InvalidParams("law and hierarchy dimensions differ".into()));
            }
            let w = tree.window(h)?;
            let need = window_memory(&w, h.d);
            if need > opts.memory_cap {
                return Err(Error::Capacity {
                    what: format!("cascade window {:?}..{:?}", w.lo, w.hi),
                    requested: need,
                    cap: opts.memory_cap,
                });
            }
            Some(w)
        }
        Marking::Independent { p } => {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidParams(format!("marking probability {p} outside [0, 1]")));
            }
            None
        }
    };
    let lambda1 = constants.lambda1;
    let n0 = tree.levels[0].len();

    // one sample: origin label per scale and quenched sups of Good origin boxes
    let run_sample = |s: u64| -> Result<(Vec<Label>, Vec<Option<f64>>)> {
        let (scale0, env) = match marking {
            Marking::Independent { p } => {
                let labels = (0..n0)
                    .map(|i| {
                        let mut r = rng::stream(opts.seed, &[tag::MARK, s as i64, i as i64]);
                        if r.random::<f64>() < *p {
                            Label::Bad
                        } else {
                            Label::Good
                        }
                    })
                    .collect();
                (labels, None)
            }
            Marking::Environment { law } => {
                let w = window.as_ref().expect("window exists for environment marking");
                let env = sample_environment_capped(law, w, rng::derive_seed(opts.seed, &[tag::ENV, s as i64]), opts.memory_cap)?;
                let mut so = opts.scale0;
                so.seed = rng::derive_seed(opts.seed, &[tag::WALK, s as i64]);
                let labels = tree.levels[0]
                    .iter()
                    .map(|b| classify_scale0(&env, b, lambda1, &so).map(|st| st.label))
                    .collect::<Result<_>>()?;
                (labels, Some(env))
            }
        };
        let all = tree.propagate(scale0)?;
        let origin: Vec<Label> = (0..=opts.k_max).map(|k| all[k][tree.origin[k]]).collect();
        let sups = (0..=opts.k_max)
            .map(|k| match (&env, origin[k]) {
                (Some(e), Label::Good) if h.d == 1 => quenched_sup_exact(e, &tree.levels[k][tree.origin[k]]),
                _ => None,
            })
            .collect();
        Ok((origin, sups))
    };
    let results: Vec<(Vec<Label>, Vec<Option<f64>>)> = (0..opts.samples).into_par_iter().map(run_sample).collect::<Result<_>>()?;

    let mut scales = Vec::with_capacity(opts.k_max + 1);
    for k in 0..=opts.k_max {
        let n_bad = results.iter().filter(|r| r.0[k].is_bad()).count() as u64;
        let p_bad = n_bad as f64 / opts.samples as f64;
        let (ci_lo, ci_hi) = wilson_interval(n_bad, opts.samples, opts.z);
        let pair_count = (k >= 1).then(|| tree.cover(k, tree.origin[k]).disjoint_pair_count());
        let pair_bound = pair_count.map(|c| {
            let prev: &ScaleRow = &scales[k - 1];
            c as f64 * prev.p_bad * prev.p_bad
        });
        let quenched_sup = results
            .iter()
            .filter_map(|r| r.1[k])
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        scales.push(ScaleRow {
            k,
            n_boxes: opts.samples,
            n_bad,
            p_bad,
            ci_lo,
            ci_hi,
            bound: constants.annealed_bound(k).unwrap_or(0.0),
            pair_count,
            pair_bound,
            quenched_sup,
            quenched_bound: constants.quenched_bound(h, k).unwrap_or(f64::NAN),
        });
    }
    let rates: Vec<f64> = scales
        .iter()
        .filter(|r| r.p_bad > 0.0 && r.p_bad < 1.0)
        .map(|r| -r.p_bad.ln() / 2f64.powi(r.k as i32))
        .collect();
    let eta1_hat = (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64);
    constants.eta1 = eta1_hat;
    // exponential rate of the observed quenched sups in L_k
    let pts: Vec<(f64, f64)> = scales
        .iter()
        .filter_map(|r| r.quenched_sup.filter(|v| *v > 0.0).map(|v| (h.l[r.k], v.ln())))
        .collect();
    if pts.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        constants.eta3 = linear_fit(&x, &y).map(|f| -f.slope);
    }
    if let Some(q0) = scales.first().and_then(|r| r.quenched_sup).filter(|v| *v > 0.0) {
        constants.eta2 = Some(-q0.ln());
    }
    Ok(CascadeReport {
        note: REDUCED_CONSTANTS_NOTE.into(),
        marking: marking.clone(),
        scales,
        eta1_hat,
        constants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_hierarchy;
    use num_traits::ToPrimitive;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn h1(l0: f64, n0: u64, k_max: usize) -> ScaleHierarchy {
        make_hierarchy(1, l0, n0, n0, 1.0, k_max).unwrap()
    }

    #[test]
    fn lambda2_at_canonical_n0_in_one_dimension() {
        let h = ScaleHierarchy::canonical(1, 10.0, 1.0, 0).unwrap();
        assert_eq!(h.n0, 1100);
        let l2 = lambda2(1, h.n0, h.nt0);
        assert!((l2 - 5_290_000.0).abs() < 1e-6);
        assert_eq!(lambda2_exact(1, 1100, h.nt0), BigRational::from_integer(BigInt::from(5_290_000u64)));
        // d = 1: the lateral factor is an empty power
        assert_eq!(lambda2_exact(1, 11, 999), BigRational::from_integer(BigInt::from(23u64 * 23)));
    }

    #[test]
    fn lambda1_default_and_c0_identity() {
        let h = h1(10.0, 4, 2);
        let c = compute_constants(&h, &MixingParams::independent(), None).unwrap();
        let exact = lambda1_default_exact(1, 4, 4);
        assert!((c.lambda1 - exact.to_f64().unwrap()).abs() <= 1e-15 * c.lambda1);
        assert!((c.c_annealed[0] - (4f64.ln() + c.lambda2.ln())).abs() < 1e-12);
    }

    #[test]
    fn c_limit_tends_to_ln4() {
        let mp = MixingParams::new(1.0, 1.0, 1).unwrap();
        for l0 in [50.0, 200.0, 1000.0] {
            let h = ScaleHierarchy::canonical(1, l0, 1.0, 0).unwrap();
            let c = compute_constants(&h, &mp, None).unwrap();
            assert!(c.inf_positive);
            let gap = (c.c_limit - 4f64.ln()).abs();
            assert!(gap <= (-l0 / 30.0f64).exp() + 1e-9, "L0 = {l0}: gap {gap}");
        }
    }

    #[test]
    fn annealed_rates_decrease_to_their_limit() {
        let h = h1(10.0, 4, 3);
        let mp = MixingParams::new(1.0, 100.0, 1).unwrap();
        let c = compute_constants(&h, &mp, None).unwrap();
        // strictly decreasing until the increments drop below one ulp
        assert!(c.c_annealed[..40].windows(2).all(|w| w[1] < w[0]));
        assert!(c.c_annealed.windows(2).all(|w| w[1] <= w[0]));
        assert!((c.c_annealed[60] - c.c_limit).abs() < 1e-9);
        assert!((c.c_annealed_inf() - c.c_annealed[60]).abs() < 1e-15);
    }

    #[test]
    fn correction_matches_env_helper_where_finite() {
        let h = make_hierarchy(2, 6.0, 4, 8, 0.5, 2).unwrap();
        let mp = MixingParams::new(2.0, 0.3, 2).unwrap();
        for k in 0..=2 {
            let a = correction_term(&mp, 2, &h, k);
            let b = crate::env::mixing_correction_exponent(&mp, 2, h.l[k], h.lt[k], h.c_tilde);
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "k = {k}: {a} vs {b}");
        }
        // far scales underflow to zero instead of producing NaN
        assert_eq!(correction_term(&mp, 2, &h, 500), 0.0);
    }

    #[test]
    fn quenched_ladder_is_exact() {
        let h = h1(10.0, 4, 20);
        let c = compute_constants(&h, &MixingParams::independent(), None).unwrap();
        for k in 0..=20 {
            assert_eq!(quenched_ladder_factor(&h, k).unwrap(), ladder_ratio_exact(4, k));
            let lhs = c.c_quenched[k] * h.l[k];
            let rhs = c.c_quenched[0] * h.l0 * (h.n0 as f64 / 4.0).powi(k as i32);
            assert!((lhs - rhs).abs() <= 1e-14 * rhs);
        }
    }

    #[test]
    fn derived_quantities() {
        let h = make_hierarchy(2, 10.0, 4, 16, 1.0, 1).unwrap();
        let c = compute_constants(&h, &MixingParams::independent(), None).unwrap();
        assert!((c.n_k - (92.0 / 11.0 + 1.0)).abs() < 1e-12);
        assert_eq!(c.j_k, 0);
        assert!((c.w0 - 48.0 / 11.0).abs() < 1e-12);
        assert!((c.gamma - 0.25).abs() < 1e-15);
        assert!(c.gamma > 0.0 && c.gamma < 1.0);
    }

    #[test]
    fn lateral_bound_cases() {
        let h = make_hierarchy(2, 10.0, 4, 16, 1.0, 1).unwrap();
        let c = compute_constants(&h, &MixingParams::independent(), None).unwrap();
        // J_k = ⌊16 / (4 · (103/11 + 1))⌋ = 0, so the bound is vacuous
        assert_eq!(lateral_bound(&c, 10.0), 1.0);
        let h = make_hierarchy(2, 10.0, 4, 1000, 1.0, 1).unwrap();
        let c = compute_constants(&h, &MixingParams::independent(), None).unwrap();
        assert_eq!(c.j_k, 24);
        let at_zero = (2.0 * c.n_k).ln();
        assert!((lateral_bound(&c, at_zero) - 1.0).abs() < 1e-12);
        let v = lateral_bound(&c, 10.0);
        assert!((v - (-(24.0 / 8.0) * (10.0 - at_zero)).exp()).abs() < 1e-15);
        let d1 = compute_constants(&h1(10.0, 4, 1), &MixingParams::independent(), None).unwrap();
        assert_eq!(lateral_bound(&d1, 10.0), 0.0);
    }

    fn homog(p: f64, lo: i64, hi: i64) -> QuenchedEnvironment {
        QuenchedEnvironment::one_dim(0.01, lo, &vec![p; (hi - lo + 1) as usize]).unwrap()
    }

    #[test]
    fn scale0_drift_box_is_good() {
        let env = homog(0.9, -30, 30);
        let bx = BoxSpec::with_lengths(BoxKind::B2, vec![0.0], 11.0, 11.0, 1.0, &Direction::e1(1)).unwrap();
        let st = classify_scale0(&env, &bx, 0.04, &Scale0Opts::default()).unwrap();
        assert_eq!(st.label, Label::Good);
        // worst start is the back of B̃_1, x = 0, on (−11, 12)
        let exact = crate::oned::exit_left_exact(&env, -11, 12, 0).unwrap();
        assert!((st.sup_exit.unwrap().estimate - exact).abs() < 1e-15);
    }

    #[test]
    fn scale0_symmetric_box_is_bad() {
        let env = homog(0.5, -30, 30);
        let bx = BoxSpec::with_lengths(BoxKind::B2, vec![0.0], 11.0, 11.0, 1.0, &Direction::e1(1)).unwrap();
        let st = classify_scale0(&env, &bx, 0.04, &Scale0Opts::default()).unwrap();
        assert_eq!(st.label, Label::Bad);
        assert!((st.sup_exit.unwrap().estimate - 12.0 / 23.0).abs() < 1e-12);
        let st = classify_scale0(&env, &bx, 1.0, &Scale0Opts::default()).unwrap();
        assert_eq!(st.label, Label::Good);
        assert!(st.degenerate);
    }

    #[test]
    fn scale0_simulation_agrees_with_exact() {
        let env = homog(0.5, -30, 30);
        let bx = BoxSpec::with_lengths(BoxKind::B2, vec![0.0], 11.0, 11.0, 1.0, &Direction::e1(1)).unwrap();
        let opts = Scale0Opts {
            method: Scale0Method::Simulate,
            trials: 4000,
            ..Scale0Opts::default()
        };
        let st = classify_scale0(&env, &bx, 0.04, &opts).unwrap();
        assert_eq!(st.label, Label::Bad);
        assert!(!st.indeterminate);
        // the worst of twelve sites sits slightly above the truth; allow for the max
        let est = st.sup_exit.unwrap();
        assert!((est.estimate - 12.0 / 23.0).abs() < 4.0 * est.stderr, "{est:?}");
        // a threshold inside the interval is reported as indeterminate
        let st = classify_scale0(&env, &bx, (12.0f64 / 23.0).powi(2), &opts).unwrap();
        assert!(st.indeterminate && st.label == Label::Bad);
    }

    fn cover_1d() -> (ScaleHierarchy, ChildCover) {
        let h = h1(10.0, 4, 2);
        let parent = BoxSpec::at_scale(BoxKind::B2, vec![0.0], 1, &h, &Direction::e1(1)).unwrap();
        let cover = ChildCover::new(&h, 1, &parent).unwrap();
        (h, cover)
    }

    #[test]
    fn recursive_rule_examples() {
        let (_, cover) = cover_1d();
        let n = cover.len();
        assert_eq!(n, 8);
        let all_good = vec![Some(Label::Good); n];
        assert_eq!(classify_recursive(&cover, &all_good).unwrap().label, Label::Good);

        // children 0 and 3 are 30 apart: disjoint
        let mut l = all_good.clone();
        l[0] = Some(Label::Bad);
        l[3] = Some(Label::Bad);
        let v = classify_recursive(&cover, &l).unwrap();
        assert_eq!(v.label, Label::Bad);
        assert_eq!(v.witness, Some((0, 3)));

        // neighbours intersect
        let mut l = all_good.clone();
        l[0] = Some(Label::Bad);
        l[1] = Some(Label::Bad);
        assert_eq!(classify_recursive(&cover, &l).unwrap().label, Label::Good);

        let mut l = all_good;
        l[2] = None;
        assert!(matches!(classify_recursive(&cover, &l), Err(Error::MissingChild(_))));
    }

    #[test]
    fn literal_rule_and_pair_reading_can_differ() {
        let (_, cover) = cover_1d();
        // 0 and 2 are lattice-disjoint (sites −9..10 and 11..30)
        assert!(cover.disjoint(0, 2));
        assert!(!cover.disjoint(0, 1));
        let mut l = vec![Label::Good; cover.len()];
        l[0] = Label::Bad;
        l[2] = Label::Bad;
        assert_eq!(pairwise_reading(&cover, &l), Label::Bad);
        let wrapped: Vec<Option<Label>> = l.iter().map(|x| Some(*x)).collect();
        let v = classify_recursive(&cover, &wrapped).unwrap();
        assert_eq!(v.label, Label::Good);
        assert_eq!(v.certificate, Some(1));
        // the same holds when the box in between is Bad too
        let mut l = vec![Label::Good; cover.len()];
        l[0] = Label::Bad;
        l[1] = Label::Bad;
        l[2] = Label::Bad;
        let wrapped: Vec<Option<Label>> = l.iter().map(|x| Some(*x)).collect();
        let v = classify_recursive(&cover, &wrapped).unwrap();
        assert_eq!(v.label, Label::Good);
        assert_eq!(v.certificate, Some(1));
        assert_eq!(pairwise_reading(&cover, &l), Label::Bad);
    }

    /// Evaluate the definition's quantifiers over explicit site sets.
    fn brute_force(cover: &ChildCover, labels: &[Label]) -> Label {
        let sets: Vec<HashSet<Vec<i64>>> = cover
            .children
            .iter()
            .map(|c| c.region().sites(1 << 20).unwrap().into_iter().collect())
            .collect();
        let n = sets.len();
        let exists = (0..n).any(|y| (0..n).all(|z| z == y || !sets[y].is_disjoint(&sets[z]) || labels[z] == Label::Good));
        if exists {
            Label::Good
        } else {
            Label::Bad
        }
    }

    fn cover_2d() -> ChildCover {
        let h = make_hierarchy(2, 5.0, 11, 6, 0.5, 1).unwrap();
        let parent = BoxSpec::at_scale(BoxKind::B2, vec![0.0, 0.0], 1, &h, &Direction::e1(2)).unwrap();
        ChildCover::new(&h, 1, &parent).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn recursive_rule_equals_brute_force_1d(bits in proptest::collection::vec(0u8..4, 8)) {
            let (_, cover) = cover_1d();
            let labels: Vec<Label> = bits.iter().map(|b| if *b == 0 { Label::Bad } else { Label::Good }).collect();
            let wrapped: Vec<Option<Label>> = labels.iter().map(|x| Some(*x)).collect();
            let v = classify_recursive(&cover, &wrapped).unwrap();
            prop_assert_eq!(v.label, brute_force(&cover, &labels));
            // Bad under the rule implies Bad under the pair reading
            if v.label == Label::Bad {
                prop_assert_eq!(pairwise_reading(&cover, &labels), Label::Bad);
                let (a, b) = v.witness.unwrap();
                prop_assert!(labels[a].is_bad() && labels[b].is_bad() && cover.disjoint(a, b));
            }
        }

        #[test]
        fn recursive_rule_equals_brute_force_2d(seed in 0u64..1000) {
            let cover = cover_2d();
            let mut r = rng::stream(seed, &[]);
            let p: f64 = r.random_range(0.0..0.05);
            let labels: Vec<Label> = (0..cover.len()).map(|_| if r.random::<f64>() < p { Label::Bad } else { Label::Good }).collect();
            let wrapped: Vec<Option<Label>> = labels.iter().map(|x| Some(*x)).collect();
            prop_assert_eq!(classify_recursive(&cover, &wrapped).unwrap().label, brute_force(&cover, &labels));
        }
    }

    #[test]
    fn pair_count_in_one_dimension() {
        let (_, cover) = cover_1d();
        // children at −40, −30, …, 30; B_2 sites y−9..y+10; disjoint iff 20 apart or more
        assert_eq!(cover.disjoint_pair_count(), 28 - 7);
    }

    #[test]
    fn null_model_with_p_zero_is_all_good() {
        let h = h1(10.0, 4, 3);
        let opts = CascadeOpts {
            k_max: 3,
            samples: 50,
            lambda1: None,
            mixing: MixingParams::independent(),
            scale0: Scale0Opts::default(),
            seed: 1,
            memory_cap: 1 << 30,
            z: 3.0,
        };
        let rep = cascade_experiment(&h, &Marking::Independent { p: 0.0 }, &opts).unwrap();
        assert!(rep.scales.iter().all(|r| r.n_bad == 0));
        assert_eq!(rep.note, REDUCED_CONSTANTS_NOTE);
    }

    #[test]
    fn null_model_respects_pair_bound() {
        let h = h1(10.0, 4, 3);
        let opts = CascadeOpts {
            k_max: 3,
            samples: 4000,
            lambda1: None,
            mixing: MixingParams::independent(),
            scale0: Scale0Opts::default(),
            seed: 2,
            memory_cap: 1 << 30,
            z: 3.0,
        };
        let rep = cascade_experiment(&h, &Marking::Independent { p: 0.05 }, &opts).unwrap();
        assert!(rep.scales[0].ci_lo < 0.05 && rep.scales[0].ci_hi > 0.05);
        for k in 1..=3 {
            let row = &rep.scales[k];
            let prev = &rep.scales[k - 1];
            let bound = row.pair_count.unwrap() as f64 * prev.ci_hi * prev.ci_hi;
            assert!(row.ci_lo <= bound, "scale {k}: {row:?}");
            assert!((row.pair_count.unwrap() as f64) <= rep.constants.lambda2);
        }
    }

    #[test]
    fn environment_cascade_is_deterministic_and_bounded() {
        let law = EnvironmentLaw::one_dim_finite(0.01, &[0.85, 0.95], vec![0.5, 0.5]).unwrap();
        let h = h1(10.0, 4, 2);
        let opts = CascadeOpts {
            k_max: 2,
            samples: 40,
            lambda1: None,
            mixing: MixingParams::independent(),
            scale0: Scale0Opts::default(),
            seed: 3,
            memory_cap: 1 << 30,
            z: 3.0,
        };
        let m = Marking::Environment { law };
        let a = cascade_experiment(&h, &m, &opts).unwrap();
        let b = cascade_experiment(&h, &m, &opts).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for r in &a.scales {
            if let Some(q) = r.quenched_sup {
                assert!(q < rep_threshold(&a));
            }
        }
    }

    fn rep_threshold(r: &CascadeReport) -> f64 {
        r.constants.sqrt_lambda1()
    }

    #[test]
    fn strongly_biased_bad_probability_falls_with_l0() {
        // threshold low enough that the shortest boxes are sometimes Bad
        let law = EnvironmentLaw::one_dim_finite(0.01, &[0.85, 0.95], vec![0.5, 0.5]).unwrap();
        let mut last = f64::INFINITY;
        for l0 in [11.0, 22.0, 44.0] {
            let h = h1(l0, 4, 0);
            let opts = CascadeOpts {
                k_max: 0,
                samples: 400,
                lambda1: Some(1e-20),
                mixing: MixingParams::independent(),
                scale0: Scale0Opts::default(),
                seed: 4,
                memory_cap: 1 << 30,
                z: 3.0,
            };
            let rep = cascade_experiment(&h, &Marking::Environment { law: law.clone() }, &opts).unwrap();
            let p = rep.scales[0].p_bad;
            assert!(p <= last, "L0 = {l0}: {p} > {last}");
            if l0 == 11.0 {
                assert!(p > 0.0);
            }
            last = p;
        }
        assert_eq!(last, 0.0);
    }
}
