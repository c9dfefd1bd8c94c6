//! Exact one-dimensional machinery: birth-death absorption, strip ratios ρ_i,
//! the potential f, exact quenched and annealed slab exits, and the
//! finite-approximation experiment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{site_vector, EnvironmentLaw, QuenchedEnvironment};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::stats::{linear_fit, log_add_exp, mean_stderr, KahanSum, LinearFit};

/// A nearest-neighbour chain on `[i, j]` absorbed at both ends, stepping up
/// with probability `α_m` from each interior `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeathChain {
    i: i64,
    j: i64,
    alpha: Vec<f64>,
}

impl BirthDeathChain {
    /// `alpha[k]` is the up-probability at site `i + 1 + k`.
    pub fn new(i: i64, j: i64, alpha: Vec<f64>) -> Result<Self> {
        if j <= i {
            return Err(Error::InvalidParams(format!("barriers must satisfy i < j, got {i}, {j}")));
        }
        if alpha.len() as i64 != j - i - 1 {
            return Err(Error::InvalidParams(format!(
                "chain on [{i}, {j}] needs {} up-probabilities, got {}",
                j - i - 1,
                alpha.len()
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidParams(format!("up-probability {a} outside (0, 1)")));
        }
        Ok(BirthDeathChain { i, j, alpha })
    }

    /// The chain with constant up-probability.
    pub fn constant(i: i64, j: i64, alpha: f64) -> Result<Self> {
        Self::new(i, j, vec![alpha; (j - i - 1).max(0) as usize])
    }

    /// The chain a one-dimensional environment induces between two barriers.
    pub fn from_env(env: &QuenchedEnvironment, i: i64, j: i64) -> Result<Self> {
        if env.dim() != 1 {
            return Err(Error::InvalidParams("birth-death chains need a one-dimensional environment".into()));
        }
        let mut alpha = Vec::with_capacity((j - i - 1).max(0) as usize);
        for m in i + 1..j {
            let w = env.weights_at(&[m]).ok_or_else(|| Error::WindowUnderrun(vec![m]))?;
            alpha.push(w[0]);
        }
        Self::new(i, j, alpha)
    }

    pub fn barriers(&self) -> (i64, i64) {
        (self.i, self.j)
    }

    pub fn alpha(&self, m: i64) -> f64 {
        self.alpha[(m - self.i - 1) as usize]
    }

    /// `ρ_m = (1 − α_m)/α_m`.
    pub fn rho(&self, m: i64) -> f64 {
        let a = self.alpha(m);
        (1.0 - a) / a
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }
}

/// Absorption probabilities over `[i, j]`: `q` of hitting `i` first and `p`
/// of hitting `j` first, each accurate in relative terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionSolution {
    pub i: i64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub log_q: Vec<f64>,
}

impl AbsorptionSolution {
    pub fn q_at(&self, m: i64) -> f64 {
        self.q[(m - self.i) as usize]
    }

    pub fn p_at(&self, m: i64) -> f64 {
        self.p[(m - self.i) as usize]
    }

    pub fn log_q_at(&self, m: i64) -> f64 {
        self.log_q[(m - self.i) as usize]
    }
}

/// Log-scale weights `ln π_n`, `n = i..j−1`, with `π_n = Π_{l=i+1}^{n} ρ_l`.
fn log_pi(chain: &BirthDeathChain) -> Vec<f64> {
    let mut out = Vec::with_capacity((chain.j - chain.i) as usize);
    let mut acc = 0.0;
    out.push(0.0);
    for &a in &chain.alpha {
        acc += ((1.0 - a) / a).ln();
        out.push(acc);
    }
    out
}

/// Range of `ln π` beyond which scaled summation loses the small tail.
const LOG_RANGE_SWITCH: f64 = 600.0;

/// Solve `Q_m = α_m Q_{m+1} + (1 − α_m) Q_{m−1}`, `Q_i = 1`, `Q_j = 0` via
/// `Q_m = Σ_{n=m}^{j−1} π_n / Σ_{n=i}^{j−1} π_n`.
pub fn solve_absorption(chain: &BirthDeathChain) -> AbsorptionSolution {
    let lp = log_pi(chain);
    let n = lp.len();
    let (lo, hi) = lp
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    // suffix[m] = ln Σ_{n ≥ m} π_n, prefix[m] = ln Σ_{n < m} π_n
    let mut suffix = vec![f64::NEG_INFINITY; n + 1];
    let mut prefix = vec![f64::NEG_INFINITY; n + 1];
    if hi - lo > LOG_RANGE_SWITCH {
        for m in (0..n).rev() {
            suffix[m] = log_add_exp(suffix[m + 1], lp[m]);
        }
        for m in 0..n {
            prefix[m + 1] = log_add_exp(prefix[m], lp[m]);
        }
    } else {
        // direct products stay within range here and avoid ln/exp round trips
        let mut pi = Vec::with_capacity(n);
        let mut acc = 1.0;
        pi.push(acc);
        for &a in &chain.alpha {
            acc *= (1.0 - a) / a;
            pi.push(acc);
        }
        let mut suf = vec![0.0; n + 1];
        let mut s = KahanSum::default();
        for m in (0..n).rev() {
            s.add(pi[m]);
            suf[m] = s.value();
        }
        let mut pre = vec![0.0; n + 1];
        let mut s = KahanSum::default();
        for m in 0..n {
            s.add(pi[m]);
            pre[m + 1] = s.value();
        }
        let total = suf[0];
        let q: Vec<f64> = suf.iter().map(|x| x / total).collect();
        let p = pre.iter().map(|x| x / total).collect();
        return AbsorptionSolution {
            i: chain.i,
            log_q: q.iter().map(|x| x.ln()).collect(),
            q,
            p,
        };
    }
    let total = suffix[0];
    let log_q: Vec<f64> = (0..=n).map(|m| suffix[m] - total).collect();
    let q = log_q.iter().map(|x| x.exp()).collect();
    let p = (0..=n).map(|m| (prefix[m] - total).exp()).collect();
    AbsorptionSolution { i: chain.i, q, p, log_q }
}

/// `f(j) = Σ_{n=j}^{w0} Π_{m=n+1}^{w0} ρ_m^{−1}` for `j ≤ w0`, zero above,
/// stored in log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub lo: i64,
    pub w0: i64,
    pub log_f: Vec<f64>,
}

impl Potential {
    pub fn log_value(&self, j: i64) -> f64 {
        if j > self.w0 {
            f64::NEG_INFINITY
        } else {
            self.log_f[(j - self.lo) as usize]
        }
    }

    pub fn value(&self, j: i64) -> f64 {
        self.log_value(j).exp()
    }

    /// `f(a)/f(b)`.
    pub fn ratio(&self, a: i64, b: i64) -> f64 {
        (self.log_value(a) - self.log_value(b)).exp()
    }
}

/// The potential on `[lo, w0]` built from `rho(m)`, `m ∈ (lo, w0]`.
pub fn f_potential(rho: impl Fn(i64) -> f64, lo: i64, w0: i64) -> Result<Potential> {
    if lo > w0 {
        return Err(Error::InvalidParams(format!("potential range [{lo}, {w0}] is empty")));
    }
    let n = (w0 - lo + 1) as usize;
    let mut log_f = vec![0.0; n];
    // log Π_{m=j+1}^{w0} ρ_m^{−1}
    let mut log_prod = 0.0;
    let mut acc = f64::NEG_INFINITY;
    for j in (lo..=w0).rev() {
        if j < w0 {
            log_prod -= rho(j + 1).ln();
        }
        acc = log_add_exp(acc, log_prod);
        log_f[(j - lo) as usize] = acc;
    }
    Ok(Potential { lo, w0, log_f })
}

/// The potential of a chain, whose barriers must enclose `(lo, w0]`.
pub fn chain_potential(chain: &BirthDeathChain, lo: i64, w0: i64) -> Result<Potential> {
    if lo < chain.i || w0 >= chain.j {
        return Err(Error::InvalidParams("potential range exceeds the chain".into()));
    }
    f_potential(|m| chain.rho(m), lo, w0)
}

/// Strip ratios `ρ_i = sup_{z: I(z)=i} Q_z/P_z` for `i ∈ [first, last]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoProfile {
    pub first: i64,
    pub width: i64,
    pub rho: Vec<f64>,
}

impl RhoProfile {
    pub fn at(&self, i: i64) -> f64 {
        self.rho[(i - self.first) as usize]
    }
}

/// For each band `i`, solve the crossing problem between barriers `(i−1)w`
/// and `(i+1)w` and take the worst ratio of left to right crossing over the
/// band's sites `z ∈ [iw − w/2, iw + w/2)`. With `w = 1` this is `ω(x,−e_1)/ω(x,+e_1)`.
pub fn rho_profile(env: &QuenchedEnvironment, width: i64, first: i64, last: i64) -> Result<RhoProfile> {
    if width < 1 || first > last {
        return Err(Error::InvalidParams(format!("bad strip range w = {width}, [{first}, {last}]")));
    }
    let mut rho = Vec::with_capacity((last - first + 1) as usize);
    for i in first..=last {
        let chain = BirthDeathChain::from_env(env, (i - 1) * width, (i + 1) * width)?;
        let sol = solve_absorption(&chain);
        let (zlo, zhi) = band_sites(i, width);
        let worst = (zlo..=zhi).map(|z| sol.q_at(z) / sol.p_at(z)).fold(0.0, f64::max);
        rho.push(worst);
    }
    Ok(RhoProfile { first, width, rho })
}

/// Integer sites with `z ∈ [iw − w/2, iw + w/2)`.
pub fn band_sites(i: i64, w: i64) -> (i64, i64) {
    let lo = (i as f64 * w as f64 - w as f64 / 2.0).ceil() as i64;
    let hi = (i as f64 * w as f64 + w as f64 / 2.0).ceil() as i64 - 1;
    (lo, hi)
}

/// Exact quenched probability of leaving `U_L = (−L, L)` through `−L`.
pub fn slab_exit_exact(env: &QuenchedEnvironment, l: i64, start: i64) -> Result<f64> {
    exit_left_exact(env, -l, l, start)
}

/// Exact quenched probability of hitting `lo` before `hi` from `start`.
pub fn exit_left_exact(env: &QuenchedEnvironment, lo: i64, hi: i64, start: i64) -> Result<f64> {
    if start < lo || start > hi {
        return Err(Error::InvalidParams(format!("start {start} outside [{lo}, {hi}]")));
    }
    Ok(solve_absorption(&BirthDeathChain::from_env(env, lo, hi)?).q_at(start))
}

/// `Q_start` from explicit up-probabilities on `(lo, hi)`; allocation-free.
fn q_from_alphas(alphas: &[f64], offset: usize) -> f64 {
    // Σ_{n ≥ offset} π_n / Σ_n π_n with π scaled at its first term
    let mut pi = 1.0f64;
    let mut total = KahanSum::default();
    let mut tail = KahanSum::default();
    total.add(1.0);
    if offset == 0 {
        tail.add(1.0);
    }
    for (k, a) in alphas.iter().enumerate() {
        pi *= (1.0 - a) / a;
        total.add(pi);
        if k + 1 >= offset {
            tail.add(pi);
        }
    }
    tail.value() / total.value()
}

/// How an annealed probability was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Mc,
}

/// Annealed exit probability with its standard error (zero when exact).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealedExit {
    pub p: f64,
    pub stderr: f64,
    pub method: Method,
    pub samples: u64,
}

/// Controls for annealed computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealedOpts {
    /// Largest number of environment configurations enumerated exactly.
    pub enumeration_cap: u128,
    /// Environments drawn when enumeration is too large.
    pub samples: u64,
    pub seed: u64,
}

impl Default for AnnealedOpts {
    fn default() -> Self {
        AnnealedOpts {
            enumeration_cap: 10_000_000,
            samples: 20_000,
            seed: 0,
        }
    }
}

/// `E[P_{start,ω}[hit lo before hi]]` under the product law.
pub fn annealed_exit_left(law: &EnvironmentLaw, lo: i64, hi: i64, start: i64, opts: &AnnealedOpts) -> Result<AnnealedExit> {
    if law.dim() != 1 {
        return Err(Error::InvalidParams("annealed slab exits need a one-dimensional law".into()));
    }
    if !(lo <= start && start <= hi && lo < hi) {
        return Err(Error::InvalidParams(format!("start {start} outside [{lo}, {hi}]")));
    }
    let n_sites = (hi - lo - 1) as u32;
    let offset = (start - lo) as usize;
    if start == lo || start == hi {
        let p = if start == lo { 1.0 } else { 0.0 };
        return Ok(AnnealedExit {
            p,
            stderr: 0.0,
            method: Method::Exact,
            samples: 0,
        });
    }
    if let Some((atoms, probs)) = law.atoms() {
        let a = atoms.len() as u128;
        let configs = a.checked_pow(n_sites);
        if let Some(count) = configs.filter(|c| *c <= opts.enumeration_cap) {
            let ups: Vec<f64> = atoms.iter().map(|v| v.weights()[0]).collect();
            let p = enumerate_annealed(&ups, &probs, n_sites as usize, offset, count as u64);
            return Ok(AnnealedExit {
                p,
                stderr: 0.0,
                method: Method::Exact,
                samples: count as u64,
            });
        }
    }
    if opts.samples < 2 {
        return Err(Error::InvalidParams("Monte Carlo fallback needs at least two samples".into()));
    }
    let values: Vec<f64> = (0..opts.samples)
        .into_par_iter()
        .map(|s| {
            let env_seed = rng::derive_seed(opts.seed, &[tag::ENV, s as i64]);
            let alphas: Vec<f64> = (lo + 1..hi).map(|x| site_vector(law, env_seed, &[x]).weights()[0]).collect();
            q_from_alphas(&alphas, offset)
        })
        .collect();
    let (mean, se) = mean_stderr(&values);
    Ok(AnnealedExit {
        p: mean,
        stderr: se,
        method: Method::Mc,
        samples: opts.samples,
    })
}

/// Exact average over all `atoms^n` configurations, split across threads by
/// the leading digits and summed in a fixed order.
fn enumerate_annealed(ups: &[f64], probs: &[f64], n: usize, offset: usize, count: u64) -> f64 {
    let a = ups.len() as u64;
    let chunk = a.pow(n.min(12) as u32).min(count);
    let outer = count / chunk;
    let inner_digits = n.min(12);
    let partials: Vec<f64> = (0..outer)
        .into_par_iter()
        .map(|hi_idx| {
            let mut alphas = vec![0.0; n];
            let mut weight_hi = 1.0;
            let mut rem = hi_idx;
            for k in (inner_digits..n).rev() {
                let digit = (rem % a) as usize;
                rem /= a;
                alphas[k] = ups[digit];
                weight_hi *= probs[digit];
            }
            let mut acc = KahanSum::default();
            for lo_idx in 0..chunk {
                let mut w = weight_hi;
                let mut rem = lo_idx;
                for slot in alphas.iter_mut().take(inner_digits) {
                    let digit = (rem % a) as usize;
                    rem /= a;
                    *slot = ups[digit];
                    w *= probs[digit];
                }
                acc.add(w * q_from_alphas(&alphas, offset));
            }
            acc.value()
        })
        .collect();
    let mut total = KahanSum::default();
    for v in partials {
        total.add(v);
    }
    total.value()
}

/// One row of the finite-approximation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryRow {
    /// Quantization grid size, `None` for the unquantized law.
    pub m: Option<usize>,
    #[serde(rename = "L")]
    pub l: i64,
    pub p_exit: f64,
    pub stderr: f64,
    pub method: Method,
}

/// Exponential rate fitted to `ln p` against `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub m: Option<usize>,
    pub c_hat: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub rows: Vec<CorollaryRow>,
    pub fits: Vec<RateFit>,
    /// Largest relative difference between a quantized rate and the
    /// unquantized one.
    pub max_rate_gap: f64,
}

/// Fit `ln p ≈ a − cL`; rows with `p = 0` are dropped.
pub fn fit_rate(ls: &[i64], ps: &[f64]) -> Option<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = ls
        .iter()
        .zip(ps)
        .filter(|(_, p)| **p > 0.0)
        .map(|(l, p)| (*l as f64, p.ln()))
        .unzip();
    linear_fit(&x, &y)
}

/// Quantize the law at each `m`, compute the annealed left-exit probability
/// of `U_L` from the origin for each `L`, and fit exponential rates.
pub fn corollary_experiment(law: &EnvironmentLaw, m_grid: &[usize], l_grid: &[i64], opts: &AnnealedOpts) -> Result<CorollaryReport> {
    if l_grid.iter().any(|&l| l < 1) {
        return Err(Error::InvalidParams("slab half-widths must be positive".into()));
    }
    let mut laws: Vec<(Option<usize>, EnvironmentLaw)> = vec![(None, law.clone())];
    for &m in m_grid {
        laws.push((Some(m), crate::env::quantize_law(law, m)?));
    }
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (m, lw) in &laws {
        let mut ps = Vec::new();
        for &l in l_grid {
            let r = annealed_exit_left(lw, -l, l, 0, opts)?;
            if r.method == Method::Mc {
                log::info!("m = {m:?}, L = {l}: enumeration too large, used {} sampled environments", r.samples);
            }
            ps.push(r.p);
            rows.push(CorollaryRow {
                m: *m,
                l,
                p_exit: r.p,
                stderr: r.stderr,
                method: r.method,
            });
        }
        if let Some(f) = fit_rate(l_grid, &ps) {
            fits.push(RateFit {
                m: *m,
                c_hat: -f.slope,
                r2: f.r2,
            });
        }
    }
    let base = fits.iter().find(|f| f.m.is_none()).map(|f| f.c_hat);
    let max_rate_gap = match base {
        Some(b) if b != 0.0 => fits
            .iter()
            .filter(|f| f.m.is_some())
            .map(|f| ((f.c_hat - b) / b).abs())
            .fold(0.0, f64::max),
        _ => f64::NAN,
    };
    Ok(CorollaryReport { rows, fits, max_rate_gap })
}

/// Both sides of the one-dimensional comparison between a supremum over
/// cube configurations and the simple symmetric walk, evaluated on a tiny
/// window. Interpretive reading: the left side is the largest `n`-step
/// transition probability from `x` to `x + dy` over all assignments of the
/// law's atoms to the `2n + 1` sites the walk can reach; the right side is
/// the same probability for the simple symmetric walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeComparison {
    pub n: usize,
    pub dy: i64,
    pub sup_quenched: f64,
    pub symmetric: f64,
}

pub fn cube_sup_comparison(law: &EnvironmentLaw, n: usize, dy: i64, cap: u128) -> Result<CubeComparison> {
    let (atoms, _) = law
        .atoms()
        .ok_or_else(|| Error::InvalidParams("cube comparison needs a finite-support law".into()))?;
    let ups: Vec<f64> = atoms.iter().map(|v| v.weights()[0]).collect();
    let sites = 2 * n + 1;
    let count = (ups.len() as u128)
        .checked_pow(sites as u32)
        .filter(|c| *c <= cap)
        .ok_or(Error::Capacity {
            what: "cube configuration enumeration".into(),
            requested: (ups.len() as u128).saturating_pow(sites as u32),
            cap,
        })?;
    let transition = |alpha: &dyn Fn(usize) -> f64| -> f64 {
        // distribution over sites 0..sites, starting at the centre n
        let mut dist = vec![0.0; sites];
        dist[n] = 1.0;
        for _ in 0..n {
            let mut next = vec![0.0; sites];
            for (x, &m) in dist.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let a = alpha(x);
                if x + 1 < sites {
                    next[x + 1] += m * a;
                }
                if x > 0 {
                    next[x - 1] += m * (1.0 - a);
                }
            }
            dist = next;
        }
        let target = n as i64 + dy;
        if (0..sites as i64).contains(&target) {
            dist[target as usize]
        } else {
            0.0
        }
    };
    let a = ups.len() as u128;
    let sup_quenched = (0..count as u64)
        .into_par_iter()
        .map(|idx| {
            let mut digits = vec![0.0; sites];
            let mut rem = idx as u128;
            for d in digits.iter_mut() {
                *d = ups[(rem % a) as usize];
                rem /= a;
            }
            transition(&|x| digits[x])
        })
        .reduce(|| 0.0, f64::max);
    let symmetric = transition(&|_| 0.5);
    Ok(CubeComparison {
        n,
        dy,
        sup_quenched,
        symmetric,
    })
}
