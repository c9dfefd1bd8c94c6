//! Pinned reproduction runs for the acceptance criteria A1–A9.
//!
//! Each criterion computes its measured values with the library and its
//! expected values with an oracle written here, independently of the code
//! under test: high-precision elimination, closed-form ruin probabilities,
//! site-set disjointness and exact rationals.

use std::collections::HashSet;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngExt;
use rwre_core::conditions::{
    estimate_condition_box_t, estimate_condition_w, estimate_slab_curve, transience_probe, Answer, ConditionSpec, ConditionVariant,
    EstimatorOpts,
};
use rwre_core::env::{sample_environment, EnvParams, EnvironmentLaw, MixingParams, Window};
use rwre_core::geometry::{make_hierarchy, BoxKind, BoxSpec, Direction};
use rwre_core::oned::{corollary_experiment, slab_exit_exact, solve_absorption, AnnealedOpts, BirthDeathChain};
use rwre_core::renorm::{
    cascade_experiment, classify_recursive, compute_constants_with_terms, quenched_ladder_factor, CascadeOpts, ChildCover, Label, Marking,
    Scale0Opts,
};
use rwre_core::rng;
use rwre_core::walk::{race_tally, Race, StopSpec};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::diag::{LabError, LabResult};
use crate::run::{execute_with_jobs, report_bytes};

pub const IDS: [&str; 9] = ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub measured: String,
    pub expected: String,
    pub seconds: f64,
    pub time_limit: f64,
}

impl CriterionResult {
    /// One line: id, PASS/FAIL, title, measured vs expected, runtime.
    pub fn line(&self) -> String {
        format!(
            "{} {} {} | measured: {} | expected: {} | {:.2}s (limit {}s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.measured,
            self.expected,
            self.seconds,
            self.time_limit
        )
    }
}

struct Check {
    ok: bool,
    measured: String,
    expected: String,
}

fn title_and_limit(id: &str) -> (&'static str, f64) {
    match id {
        "A1" => ("exact oracle correctness", 10.0),
        "A2" => ("quenched Monte Carlo matches exact", 120.0),
        "A3" => ("one-dimensional exponential decay", 60.0),
        "A4" => ("cascade structural check", 60.0),
        "A5" => ("constants identities", 1.0),
        "A6" => ("recursive classifier matches brute force", 10.0),
        "A7" => ("condition estimators on known laws", 180.0),
        "A8" => ("box and slab curves coincide in d = 1", 60.0),
        _ => ("determinism and parallel equivalence", 60.0),
    }
}

/// Runs one criterion by id.
pub fn run_criterion(id: &str) -> LabResult<CriterionResult> {
    let id = id.to_ascii_uppercase();
    let f: fn() -> LabResult<Check> = match id.as_str() {
        "A1" => a1,
        "A2" => a2,
        "A3" => a3,
        "A4" => a4,
        "A5" => a5,
        "A6" => a6,
        "A7" => a7,
        "A8" => a8,
        "A9" => a9,
        _ => {
            return Err(LabError::Config(format!(
                "unknown acceptance id '{id}'; valid ids: {}, all",
                IDS.join(", ")
            )))
        }
    };
    let (title, limit) = title_and_limit(&id);
    let t0 = Instant::now();
    let c = f()?;
    let seconds = t0.elapsed().as_secs_f64();
    Ok(CriterionResult {
        id,
        title: title.into(),
        passed: c.ok && seconds < limit,
        measured: c.measured,
        expected: c.expected,
        seconds,
        time_limit: limit,
    })
}

/// `"all"` or a single id.
pub fn run_selection(sel: &str) -> LabResult<Vec<CriterionResult>> {
    if sel.eq_ignore_ascii_case("all") {
        IDS.iter().map(|id| run_criterion(id)).collect()
    } else {
        Ok(vec![run_criterion(sel)?])
    }
}

// ---------------------------------------------------------------- oracles

/// Absorption at the lower barrier by fraction-free big-integer elimination
/// with fixed-point back-substitution. Every probability in `[2^-4, 1)` is a
/// multiple of `2^-60`, so the scaled system has integer coefficients.
fn high_precision_absorption(alpha: &[f64]) -> Vec<f64> {
    const PREC: u32 = 1500;
    const SCALE: u32 = 60;
    let scaled = |a: f64| {
        let s = a * (1u64 << SCALE) as f64;
        assert_eq!(s.fract(), 0.0, "{a} is not a multiple of 2^-60");
        BigInt::from(s as u64)
    };
    let n = alpha.len();
    let s = BigInt::one() << SCALE;
    let (mut e_prev, mut c_prev, mut f_prev) = (BigInt::one(), BigInt::zero(), BigInt::zero());
    let (mut cs, mut fs, mut es) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (k, &a) in alpha.iter().enumerate() {
        let a = scaled(a);
        let down = &s - &a;
        let (rhs, sub) = if k == 0 { (down, BigInt::zero()) } else { (BigInt::zero(), down) };
        let e = &s * &e_prev + &sub * &c_prev;
        let c = -(&a * &e_prev);
        let f = &rhs * &e_prev + &sub * &f_prev;
        cs.push(c.clone());
        fs.push(f.clone());
        es.push(e.clone());
        (e_prev, c_prev, f_prev) = (e, c, f);
    }
    let mut q = vec![BigInt::zero(); n + 2];
    q[0] = BigInt::one() << PREC;
    for k in (0..n).rev() {
        q[k + 1] = ((&fs[k] << PREC) - &cs[k] * &q[k + 2]) / &es[k];
    }
    q.iter().map(|v| (v >> (PREC - 60)).to_f64().unwrap() / 2f64.powi(60)).collect()
}

/// Two-barrier ruin from 0: probability of reaching `lo < 0` before `hi > 0`
/// with up-probability `a`.
fn ruin(a: f64, lo: i64, hi: i64) -> f64 {
    let r = (1.0 - a) / a;
    let n = (hi - lo) as i32;
    if (r - 1.0).abs() < 1e-15 {
        return hi as f64 / n as f64;
    }
    (r.powi(-lo as i32) - r.powi(n)) / (1.0 - r.powi(n))
}

/// Lattice sites of each child, and disjointness by set intersection.
fn brute_disjointness(cover: &ChildCover) -> LabResult<Vec<Vec<bool>>> {
    let sets: Vec<HashSet<Vec<i64>>> = cover
        .children
        .iter()
        .map(|c| c.region().sites(1 << 24).map(|v| v.into_iter().collect()))
        .collect::<Result<_, _>>()?;
    let n = sets.len();
    Ok((0..n).map(|i| (0..n).map(|j| sets[i].is_disjoint(&sets[j])).collect()).collect())
}

/// Direct evaluation of "there is a child y such that every child disjoint
/// from y is Good".
fn brute_good(disjoint: &[Vec<bool>], bad: &[bool]) -> bool {
    let n = bad.len();
    (0..n).any(|y| (0..n).all(|z| !(disjoint[y][z] && bad[z])))
}

fn exact_lambda2(d: usize, n0: u64, nt0: u64) -> BigRational {
    let r = |a: u64, b: u64| BigRational::new(BigInt::from(a), BigInt::from(b));
    let lateral = num_traits::pow(r(5 * nt0, 3), 2 * (d - 1));
    let frontal = num_traits::pow(r(23 * n0, 11), 2);
    lateral * frontal
}

// ---------------------------------------------------------------- criteria

fn a1() -> LabResult<Check> {
    let mut r = rng::stream(2024, &[1]);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let len: i64 = r.random_range(1..=200);
        let alpha: Vec<f64> = (0..len - 1).map(|_| r.random_range(0.1..0.9)).collect();
        let sol = solve_absorption(&BirthDeathChain::new(0, len, alpha.clone())?);
        let oracle = high_precision_absorption(&alpha);
        for m in 0..=len {
            worst = worst.max((sol.q_at(m) - oracle[m as usize]).abs());
        }
    }
    let ruin_q = solve_absorption(&BirthDeathChain::constant(0, 10, 2.0 / 3.0)?).q_at(5);
    let ruin_err = (ruin_q - 31.0 / 1023.0).abs();
    Ok(Check {
        ok: worst <= 1e-12 && ruin_err <= 1e-12,
        measured: format!("max |Δ| = {worst:.2e} over 1000 chains; ruin q(5) = {ruin_q:.15} (|Δ| = {ruin_err:.1e})"),
        expected: "max |Δ| ≤ 1e-12; q(5) = 31/1023 ± 1e-12".into(),
    })
}

fn a2() -> LabResult<Check> {
    // Symmetric with moderate disorder: exit probabilities spread over (0, 1)
    // while mean exit times stay near 1.5e3 steps. Uniform site laws trap the
    // walk for ~2e4 steps and would need ~40 minutes here.
    let law = EnvironmentLaw::dirichlet(EnvParams::new(1, 0.1)?, vec![10.0, 10.0])?;
    let (l, trials) = (30i64, 100_000u64);
    let window = Window::interval(-l - 1, l + 1)?;
    let race = Race::new(
        1,
        vec![StopSpec::below(&[1.0], -l as f64), StopSpec::above(&[1.0], l as f64)],
        u64::MAX / 2,
    )?;
    let mut within = 0;
    let mut worst_z: f64 = 0.0;
    for e in 0..50i64 {
        let env = sample_environment(&law, &window, rng::derive_seed(77, &[e]))?;
        let exact = slab_exit_exact(&env, l, 0)?;
        let tally = race_tally(&env, &[0], &race, trials, rng::derive_seed(78, &[e]))?;
        let est = tally.estimate(0);
        let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
        let z = if sigma > 0.0 {
            (est.estimate - exact).abs() / sigma
        } else if est.estimate == exact {
            0.0
        } else {
            f64::INFINITY
        };
        worst_z = worst_z.max(z);
        if z <= 3.0 {
            within += 1;
        }
    }
    Ok(Check {
        ok: within >= 48,
        measured: format!("{within}/50 environments within 3σ (largest deviation {worst_z:.2}σ)"),
        expected: "≥ 48/50 within 3σ of the exact exit probability".into(),
    })
}

fn a3() -> LabResult<Check> {
    let law = EnvironmentLaw::one_dim_homogeneous(0.03, 0.9)?;
    let l_grid: Vec<i64> = vec![10, 20, 30, 40, 50];
    let rep = corollary_experiment(&law, &[4, 16, 64], &l_grid, &AnnealedOpts::default())?;
    // closed form: the rate of ruin(0.9, −L, L) in L
    let ps: Vec<f64> = l_grid.iter().map(|&l| ruin(0.9, -l, l)).collect();
    let oracle_rate = -(ps[4].ln() - ps[0].ln()) / 40.0;
    let base = rep.fits.iter().find(|f| f.m.is_none()).map(|f| f.c_hat).unwrap_or(f64::NAN);
    let errs: Vec<f64> = [4usize, 16, 64]
        .iter()
        .map(|m| {
            rep.fits
                .iter()
                .find(|f| f.m == Some(*m))
                .map_or(f64::NAN, |f| (f.c_hat - base).abs())
        })
        .collect();
    let ln9 = 9f64.ln();
    let rel = ((base - ln9) / ln9).abs();
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    Ok(Check {
        ok: rel <= 0.05 && (base - oracle_rate).abs() < 1e-9 && monotone,
        measured: format!(
            "rate {base:.6} ({:.3}% from ln 9; closed form {oracle_rate:.6}); |rate_m − rate| for m = 4, 16, 64: {:.4}, {:.4}, {:.4}",
            rel * 100.0,
            errs[0],
            errs[1],
            errs[2]
        ),
        expected: format!("rate within 5% of ln 9 = {ln9:.4}; errors strictly decreasing in m"),
    })
}

fn a4() -> LabResult<Check> {
    let h = make_hierarchy(1, 10.0, 4, 4, 1.0, 3)?;
    let opts = CascadeOpts {
        k_max: 3,
        samples: 10_000,
        lambda1: None,
        mixing: MixingParams::independent(),
        scale0: Scale0Opts::default(),
        seed: 4,
        memory_cap: 1 << 30,
        z: 3.0,
    };
    let rep = cascade_experiment(&h, &Marking::Independent { p: 0.05 }, &opts)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 1..=3 {
        let row = &rep.scales[k];
        let prev = &rep.scales[k - 1];
        let parent = BoxSpec::at_scale(BoxKind::B2, vec![0.0], k, &h, &Direction::e1(1))?;
        let cover = ChildCover::new(&h, k, &parent)?;
        let dis = brute_disjointness(&cover)?;
        let pairs = (0..dis.len())
            .map(|i| (i + 1..dis.len()).filter(|&j| dis[i][j]).count())
            .sum::<usize>();
        // empirical p_k (lower 3σ end) against pairs · p_{k−1}² (upper 3σ end)
        let bound = pairs as f64 * prev.ci_hi * prev.ci_hi;
        ok &= row.pair_count == Some(pairs) && row.ci_lo <= bound;
        parts.push(format!(
            "k={k}: p={:.4} [{:.4},{:.4}] vs {pairs}·p²={bound:.4}",
            row.p_bad, row.ci_lo, row.ci_hi
        ));
    }
    Ok(Check {
        ok,
        measured: parts.join("; "),
        expected: "at every k ≥ 1, p_k ≤ (disjoint pairs)·p_{k−1}² within 3σ, pair counts match site enumeration".into(),
    })
}

fn a5() -> LabResult<Check> {
    let mut ok = true;
    let mut notes = Vec::new();
    for (d, n0, nt0) in [(1usize, 4u64, 4u64), (2, 11, 6), (3, 4, 5)] {
        let h = make_hierarchy(d, 10.0, n0, nt0, 1.0, 0)?;
        let mixing = MixingParams::new(1.0, 100.0, 1)?;
        let c = compute_constants_with_terms(&h, &mixing, None, 61)?;
        let l2 = exact_lambda2(d, n0, nt0);
        let l2f = l2.to_f64().unwrap();
        let l1 = (4.0 * l2f).powi(-2);
        let limit = (4.0 * l2f).ln() - l2f.ln() - (-mixing.g * h.l0 / 30.0).exp();
        let gap = (c.c_annealed[60] - limit).abs();
        let ok_here = (c.lambda2 - l2f).abs() <= 1e-9 * l2f && ((c.lambda1 - l1) / l1).abs() <= 1e-12 && gap <= 1e-9;
        ok &= ok_here;
        notes.push(format!("d={d}: λ2={:.6e}, |c_60 − limit|={gap:.1e}", c.lambda2));
    }
    let mut ladder_ok = true;
    for n0 in [4u64, 6, 12] {
        let h = make_hierarchy(1, 10.0, n0, 4, 1.0, 20)?;
        for k in 0..=20 {
            let want = num_traits::pow(BigRational::new(BigInt::from(n0), BigInt::from(4)), k);
            ladder_ok &= quenched_ladder_factor(&h, k)? == want;
        }
    }
    Ok(Check {
        ok: ok && ladder_ok,
        measured: format!("{}; ladder exact for N0 ∈ {{4,6,12}}, k ≤ 20: {ladder_ok}", notes.join("; ")),
        expected: "λ2 = ((5/3)Ñ0)^{2(d−1)}((23/11)N0)², λ1 = (4λ2)^{−2}, c_60 = c_0 − ln λ2 − e^{−gL0/30} ± 1e-9, c_kL_k = c_0L_0(N0/4)^k"
            .into(),
    })
}

fn a6() -> LabResult<Check> {
    let h1 = make_hierarchy(1, 10.0, 4, 4, 1.0, 2)?;
    let h2 = make_hierarchy(2, 5.0, 11, 6, 0.5, 1)?;
    let covers = [
        ChildCover::new(&h1, 1, &BoxSpec::at_scale(BoxKind::B2, vec![0.0], 1, &h1, &Direction::e1(1))?)?,
        ChildCover::new(&h1, 2, &BoxSpec::at_scale(BoxKind::B2, vec![0.0], 2, &h1, &Direction::e1(1))?)?,
        ChildCover::new(&h2, 1, &BoxSpec::at_scale(BoxKind::B2, vec![0.0, 0.0], 1, &h2, &Direction::e1(2))?)?,
    ];
    let disjoint: Vec<Vec<Vec<bool>>> = covers.iter().map(brute_disjointness).collect::<LabResult<_>>()?;
    let mut r = rng::stream(6, &[]);
    let (mut agree, mut bad_verdicts) = (0, 0);
    for _ in 0..200 {
        let ci = r.random_range(0..covers.len());
        let (cover, dis) = (&covers[ci], &disjoint[ci]);
        let p: f64 = r.random_range(0.0..0.35);
        let bad: Vec<bool> = (0..cover.len()).map(|_| r.random::<f64>() < p).collect();
        let labels: Vec<Option<Label>> = bad.iter().map(|&b| Some(if b { Label::Bad } else { Label::Good })).collect();
        let v = classify_recursive(cover, &labels)?;
        let want_good = brute_good(dis, &bad);
        let cert_ok = v.certificate.is_none_or(|y| (0..bad.len()).all(|z| !(dis[y][z] && bad[z])));
        if (v.label == Label::Good) == want_good && cert_ok {
            agree += 1;
        }
        bad_verdicts += usize::from(!want_good);
    }
    Ok(Check {
        ok: agree == 200,
        measured: format!("{agree}/200 agree ({bad_verdicts} Bad by brute force)"),
        expected: "200/200 agree with exhaustive quantifier evaluation".into(),
    })
}

fn a7() -> LabResult<Check> {
    let e1 = Direction::e1(1);
    let opts = EstimatorOpts {
        trials: 2000,
        seed: 7,
        ..EstimatorOpts::default()
    };
    let grid = [4.0, 8.0, 16.0, 32.0];
    let spec = ConditionSpec::new(ConditionVariant::StretchT { gamma: 1.0 }, e1.clone(), 1.0)?;
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, p, want) in [("drift", 0.9, true), ("symmetric", 0.5, false)] {
        let law = EnvironmentLaw::one_dim_homogeneous(0.01, p)?;
        let w = estimate_condition_w(&law, &e1, 1.0, 30.0, 0.04, &opts)?;
        let fit = estimate_slab_curve(&law, &spec, &grid, &opts)?;
        let t = transience_probe(&law, &e1, &[100, 1000], 2000, 7, 3.0)?;
        let gamma = fit.gamma_hat().unwrap_or(f64::NAN);
        let here = if want {
            w.verdict == Answer::Yes && gamma >= 0.9 && t.verdict == Answer::Yes
        } else {
            w.verdict == Answer::No && fit.decays == Answer::No && t.verdict == Answer::No
        };
        ok &= here;
        parts.push(format!(
            "{name}: W={:.3e} ({:?}), γ̂={gamma:.3}, decay {:?}, escape {:.3} ({:?})",
            w.value.estimate,
            w.verdict,
            fit.decays,
            t.rows.last().map_or(f64::NAN, |r| r.fraction),
            t.verdict
        ));
    }
    Ok(Check {
        ok,
        measured: parts.join("; "),
        expected: "drift: W yes, γ̂ ≥ 0.9, transience yes; symmetric: W no, no decay, transience no".into(),
    })
}

fn a8() -> LabResult<Check> {
    let grid = [2.0, 3.5, 5.0, 8.0, 13.0, 21.0];
    let e1 = Direction::e1(1);
    let spec = ConditionSpec::new(ConditionVariant::StretchT { gamma: 1.0 }, e1.clone(), 1.0)?;
    let laws = [
        (EnvironmentLaw::one_dim_homogeneous(0.01, 0.8)?, 10_000_000u128),
        (EnvironmentLaw::one_dim_finite(0.01, &[0.55, 0.9], vec![0.3, 0.7])?, 1u128),
        (EnvironmentLaw::dirichlet(EnvParams::new(1, 0.05)?, vec![2.0, 1.0])?, 1u128),
    ];
    let mut compared = 0;
    let mut identical = true;
    for (law, cap) in &laws {
        let opts = EstimatorOpts {
            trials: 2000,
            enumeration_cap: *cap,
            seed: 8,
            ..EstimatorOpts::default()
        };
        let b = estimate_condition_box_t(law, &e1, &grid, &opts)?;
        let s = estimate_slab_curve(law, &spec, &grid, &opts)?;
        identical &= b.points.len() == s.points.len();
        for (x, y) in b.points.iter().zip(&s.points) {
            identical &= x.p.to_bits() == y.p.to_bits() && x.stderr.to_bits() == y.stderr.to_bits();
            compared += 1;
        }
    }
    Ok(Check {
        ok: identical,
        measured: format!("{compared} points over 3 laws, bit-identical: {identical}"),
        expected: "box curve ≡ slab curve (b = 1) point-for-point with shared seeds".into(),
    })
}

/// Configs exercised by the parallel-equivalence check.
pub fn a9_configs() -> Vec<ExperimentConfig> {
    let texts = [
        r#"{"schema_version": 1, "seed": 9, "limits": {"trials": 3000},
            "law": {"variant": {"kind": "iid_continuous", "concentration": [3, 1, 1, 1]}, "params": {"d": 2, "kappa": 0.05}},
            "experiment": {"kind": "conditions",
              "conditions": [{"variant": {"kind": "stretch_t", "gamma": 0.5}, "direction": [1, 0.2]},
                             {"variant": {"kind": "box_t", "gamma": 0.5}, "direction": [1, 0]},
                             {"variant": {"kind": "transience"}, "direction": [1, 0]}],
              "grids": {"l_grid": [1, 2, 3], "n_grid": [50, 200], "transience_trials": 500}}}"#,
        r#"{"schema_version": 1, "seed": 10,
            "law": {"variant": {"kind": "finite_support", "atoms": [[0.85, 0.15], [0.95, 0.05]], "probs": [0.5, 0.5]}, "params": {"d": 1, "kappa": 0.01}},
            "experiment": {"kind": "cascade", "hierarchy": {"d": 1, "l0": 10, "n0": 4, "nt0": 4, "k_max": 2},
                           "marking": {"kind": "environment"}, "samples": 60, "lambda1": 1e-20}}"#,
        r#"{"schema_version": 1, "seed": 11, "limits": {"trials": 2000},
            "law": {"variant": {"kind": "iid_continuous", "concentration": [2, 1, 1, 1]}, "params": {"d": 2, "kappa": 0.05}},
            "experiment": {"kind": "velocity", "n_steps": 200}}"#,
    ];
    texts
        .iter()
        .map(|t| ExperimentConfig::from_json(t).expect("pinned config parses"))
        .collect()
}

fn a9() -> LabResult<Check> {
    let configs = a9_configs();
    let mut same = 0;
    for cfg in &configs {
        let one = report_bytes(&execute_with_jobs(cfg, 1)?.payload);
        let eight = report_bytes(&execute_with_jobs(cfg, 8)?.payload);
        if one == eight {
            same += 1;
        }
    }
    Ok(Check {
        ok: same == configs.len(),
        measured: format!("{same}/{} configs byte-identical at jobs 1 and 8", configs.len()),
        expected: "identical JSON payloads for every config".into(),
    })
}
