//! Environments: points of the κ-simplex, i.i.d. laws over them, sampled
//! quenched environments on finite windows, quantization to finite support and
//! the strong-mixing correction bound.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, RngExt};
use rand_distr::multi::Dirichlet;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Largest dimension the lazily sampled environments support.
pub const MAX_DIM: usize = 8;

/// Default cap on the memory a sampled window may occupy (1 GiB).
pub const DEFAULT_MEMORY_CAP: u128 = 1 << 30;

/// Absolute slack allowed on the simplex constraints.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Dimension and ellipticity floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvParams {
    pub d: usize,
    pub kappa: f64,
}

impl EnvParams {
    pub fn new(d: usize, kappa: f64) -> Result<Self> {
        let p = EnvParams { d, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > MAX_DIM {
            return Err(Error::InvalidParams(format!("dimension must be in 1..={MAX_DIM}, got {}", self.d)));
        }
        let cap = 1.0 / (2.0 * self.d as f64);
        if !(self.kappa > 0.0 && self.kappa <= cap + 1e-15) {
            return Err(Error::InvalidParams(format!(
                "kappa must lie in (0, 1/(2d)] = (0, {cap}], got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Number of nearest-neighbour directions, 2d.
    pub fn n_dirs(&self) -> usize {
        2 * self.d
    }

    /// Mass left over once every direction receives the floor, 1 − 2dκ.
    pub fn free_mass(&self) -> f64 {
        (1.0 - self.n_dirs() as f64 * self.kappa).max(0.0)
    }
}

/// Index of the direction `±e_axis` in a weight vector. Directions are stored
/// as `+e_1, −e_1, +e_2, −e_2, …`.
#[inline]
pub fn dir_index(axis: usize, positive: bool) -> usize {
    2 * axis + usize::from(!positive)
}

/// Axis and sign (+1/−1) of direction index `dir`.
#[inline]
pub fn dir_step(dir: usize) -> (usize, i64) {
    (dir / 2, if dir.is_multiple_of(2) { 1 } else { -1 })
}

/// One site's exit probabilities: an element of the simplex 𝒫_κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransitionVector {
    weights: Vec<f64>,
}

impl TransitionVector {
    pub fn new(weights: Vec<f64>, params: &EnvParams) -> Result<Self> {
        let v = TransitionVector { weights };
        v.validate(params)?;
        Ok(v)
    }

    /// Build `(p, 1 − p)` for the one-dimensional walk.
    pub fn one_dim(p_right: f64, params: &EnvParams) -> Result<Self> {
        Self::new(vec![p_right, 1.0 - p_right], params)
    }

    pub fn validate(&self, params: &EnvParams) -> Result<()> {
        if self.weights.len() != params.n_dirs() {
            return Err(Error::InvalidParams(format!(
                "transition vector has {} weights, expected {}",
                self.weights.len(),
                params.n_dirs()
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w >= params.kappa - 1e-15)) {
            return Err(Error::InvalidParams(format!("weight {w} below ellipticity floor {}", params.kappa)));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidParams(format!("weights sum to {s}, not 1")));
        }
        Ok(())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, axis: usize, positive: bool) -> f64 {
        self.weights[dir_index(axis, positive)]
    }

    /// Mean displacement of one step.
    pub fn drift(&self) -> Vec<f64> {
        (0..self.weights.len() / 2)
            .map(|a| self.weight(a, true) - self.weight(a, false))
            .collect()
    }

    /// Cumulative thresholds on the full `u64` range: direction `j` is chosen
    /// for a uniform draw `u` iff `thr[j-1] <= u < thr[j]`.
    pub fn thresholds(&self) -> Vec<u64> {
        let n = self.weights.len();
        let mut out = Vec::with_capacity(n);
        let mut acc = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if j + 1 == n {
                out.push(u64::MAX);
            } else {
                out.push(to_threshold(acc));
            }
        }
        out
    }
}

#[inline]
fn to_threshold(p: f64) -> u64 {
    if p >= 1.0 {
        u64::MAX
    } else if p <= 0.0 {
        0
    } else {
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}

#[inline]
fn pick_from(thr: &[u64], u: u64) -> usize {
    thr.iter().position(|&t| u < t).unwrap_or(thr.len() - 1)
}

/// The three families of i.i.d. site laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawVariant {
    /// `κ·1 + (1 − 2dκ)·Dirichlet(concentration)`.
    IidContinuous {
        concentration: Vec<f64>,
    },
    FiniteSupport {
        atoms: Vec<TransitionVector>,
        probs: Vec<f64>,
    },
    Homogeneous {
        vector: TransitionVector,
    },
}

/// An i.i.d. product law μ^{⊗ℤ^d} on environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentLaw {
    pub variant: LawVariant,
    pub params: EnvParams,
}

impl EnvironmentLaw {
    pub fn new(variant: LawVariant, params: EnvParams) -> Result<Self> {
        let law = EnvironmentLaw { variant, params };
        law.validate()?;
        Ok(law)
    }

    pub fn homogeneous(params: EnvParams, weights: Vec<f64>) -> Result<Self> {
        let vector = TransitionVector::new(weights, &params)?;
        Self::new(LawVariant::Homogeneous { vector }, params)
    }

    pub fn dirichlet(params: EnvParams, concentration: Vec<f64>) -> Result<Self> {
        Self::new(LawVariant::IidContinuous { concentration }, params)
    }

    pub fn finite(params: EnvParams, atoms: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        let atoms = atoms
            .into_iter()
            .map(|w| TransitionVector::new(w, &params))
            .collect::<Result<Vec<_>>>()?;
        Self::new(LawVariant::FiniteSupport { atoms, probs }, params)
    }

    /// One-dimensional law putting mass `probs[i]` on `(p[i], 1 − p[i])`.
    pub fn one_dim_finite(kappa: f64, p_right: &[f64], probs: Vec<f64>) -> Result<Self> {
        let params = EnvParams::new(1, kappa)?;
        Self::finite(params, p_right.iter().map(|&p| vec![p, 1.0 - p]).collect(), probs)
    }

    pub fn one_dim_homogeneous(kappa: f64, p_right: f64) -> Result<Self> {
        Self::homogeneous(EnvParams::new(1, kappa)?, vec![p_right, 1.0 - p_right])
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        match &self.variant {
            LawVariant::IidContinuous { concentration } => {
                if concentration.len() != self.params.n_dirs() {
                    return Err(Error::InvalidParams(format!(
                        "concentration has {} entries, expected {}",
                        concentration.len(),
                        self.params.n_dirs()
                    )));
                }
                if concentration.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return Err(Error::InvalidParams("concentrations must be positive".into()));
                }
            }
            LawVariant::FiniteSupport { atoms, probs } => {
                if atoms.is_empty() || atoms.len() != probs.len() {
                    return Err(Error::InvalidParams(
                        "finite support needs matching, non-empty atoms and probs".into(),
                    ));
                }
                if probs.iter().any(|p| !(*p > 0.0)) {
                    return Err(Error::InvalidParams("atom probabilities must be positive".into()));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::InvalidParams(format!("atom probabilities sum to {s}")));
                }
                for a in atoms {
                    a.validate(&self.params)?;
                }
            }
            LawVariant::Homogeneous { vector } => vector.validate(&self.params)?,
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.params.d
    }

    /// Stable short identifier derived from the law's canonical JSON form.
    pub fn law_id(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let kind = match self.variant {
            LawVariant::IidContinuous { .. } => "dirichlet",
            LawVariant::FiniteSupport { .. } => "finite",
            LawVariant::Homogeneous { .. } => "homogeneous",
        };
        format!("{kind}-d{}-{h:016x}", self.params.d)
    }

    /// Mean transition vector E[ω(0,·)].
    pub fn mean_vector(&self) -> Vec<f64> {
        let p = &self.params;
        match &self.variant {
            LawVariant::IidContinuous { concentration } => {
                let total: f64 = concentration.iter().sum();
                concentration.iter().map(|a| p.kappa + p.free_mass() * a / total).collect()
            }
            LawVariant::FiniteSupport { atoms, probs } => {
                let mut m = vec![0.0; p.n_dirs()];
                for (a, q) in atoms.iter().zip(probs) {
                    for (mi, w) in m.iter_mut().zip(a.weights()) {
                        *mi += q * w;
                    }
                }
                m
            }
            LawVariant::Homogeneous { vector } => vector.weights().to_vec(),
        }
    }

    /// Atoms and probabilities when the law has finite support.
    pub fn atoms(&self) -> Option<(Vec<&TransitionVector>, Vec<f64>)> {
        match &self.variant {
            LawVariant::FiniteSupport { atoms, probs } => Some((atoms.iter().collect(), probs.clone())),
            LawVariant::Homogeneous { vector } => Some((vec![vector], vec![1.0])),
            LawVariant::IidContinuous { .. } => None,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.variant, LawVariant::Homogeneous { .. })
    }
}

/// Draw one site's transition vector from `law`.
pub fn sample_transition_vector<R: Rng + ?Sized>(law: &EnvironmentLaw, rng: &mut R) -> TransitionVector {
    let p = &law.params;
    match &law.variant {
        LawVariant::Homogeneous { vector } => vector.clone(),
        LawVariant::FiniteSupport { atoms, probs } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (a, q) in atoms.iter().zip(probs) {
                acc += q;
                if u < acc {
                    return a.clone();
                }
            }
            atoms[atoms.len() - 1].clone()
        }
        LawVariant::IidContinuous { concentration } => {
            let free = p.free_mass();
            let mut w: Vec<f64> = if free == 0.0 {
                vec![p.kappa; p.n_dirs()]
            } else {
                let dir = Dirichlet::new(concentration).expect("validated concentration");
                let g: Vec<f64> = dir.sample(rng);
                g.iter().map(|x| p.kappa + free * x).collect()
            };
            renormalize_last(&mut w, p.kappa);
            TransitionVector { weights: w }
        }
    }
}

/// Put any rounding residue of the sum into the largest coordinate.
fn renormalize_last(w: &mut [f64], kappa: f64) {
    let s: f64 = w.iter().sum();
    let (imax, _) = w
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc });
    w[imax] = (w[imax] + (1.0 - s)).max(kappa);
}

/// Axis-aligned finite box of ℤ^d, bounds inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl Window {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidParams("window bounds must share a positive dimension".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::InvalidParams(format!("empty window {lo:?}..={hi:?}")));
        }
        Ok(Window { lo, hi })
    }

    /// The one-dimensional window `[lo, hi]`.
    pub fn interval(lo: i64, hi: i64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn n_sites(&self) -> u128 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a + 1) as u128).product()
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a <= v && v <= b)
    }

    /// Row-major index of `x` (first coordinate varies slowest).
    #[inline]
    pub fn index(&self, x: &[i64]) -> Option<usize> {
        let mut idx: usize = 0;
        for ((&v, &lo), &hi) in x.iter().zip(&self.lo).zip(&self.hi) {
            if v < lo || v > hi {
                return None;
            }
            idx = idx * (hi - lo + 1) as usize + (v - lo) as usize;
        }
        Some(idx)
    }

    pub fn site(&self, mut idx: usize) -> Vec<i64> {
        let d = self.lo.len();
        let mut x = vec![0; d];
        for i in (0..d).rev() {
            let extent = (self.hi[i] - self.lo[i] + 1) as usize;
            x[i] = self.lo[i] + (idx % extent) as i64;
            idx /= extent;
        }
        x
    }

    pub fn sites(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.n_sites() as usize).map(move |i| self.site(i))
    }
}

/// Bytes a sampled window occupies: weights plus sampling thresholds.
pub fn window_memory(window: &Window, d: usize) -> u128 {
    window.n_sites() * 16 * (2 * d) as u128
}

/// A sampled environment ω restricted to a finite window. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct QuenchedEnvironment {
    params: EnvParams,
    window: Window,
    weights: Vec<f64>,
    thresholds: Vec<u64>,
    law_id: String,
    seed: u64,
}

/// Sample an environment on `window`; each site draws from its own stream
/// keyed by `(seed, site)`.
pub fn sample_environment(law: &EnvironmentLaw, window: &Window, seed: u64) -> Result<QuenchedEnvironment> {
    sample_environment_capped(law, window, seed, DEFAULT_MEMORY_CAP)
}

pub fn sample_environment_capped(law: &EnvironmentLaw, window: &Window, seed: u64, cap: u128) -> Result<QuenchedEnvironment> {
    law.validate()?;
    let d = law.params.d;
    if window.dim() != d {
        return Err(Error::InvalidParams(format!(
            "window dimension {} does not match law dimension {d}",
            window.dim()
        )));
    }
    let need = window_memory(window, d);
    if need > cap {
        return Err(Error::Capacity {
            what: format!("environment window {:?}..={:?}", window.lo, window.hi),
            requested: need,
            cap,
        });
    }
    let n = window.n_sites() as usize;
    let nd = 2 * d;
    let mut weights = vec![0.0; n * nd];
    weights.par_chunks_mut(nd).enumerate().for_each(|(i, out)| {
        let x = window.site(i);
        let v = site_vector(law, seed, &x);
        out.copy_from_slice(v.weights());
    });
    Ok(QuenchedEnvironment::from_parts(
        law.params,
        window.clone(),
        weights,
        law.law_id(),
        seed,
    ))
}

/// The vector a law assigns to `site` under `seed`; identical whichever
/// window the site is sampled in.
pub fn site_vector(law: &EnvironmentLaw, seed: u64, site: &[i64]) -> TransitionVector {
    if let LawVariant::Homogeneous { vector } = &law.variant {
        return vector.clone();
    }
    let mut keys = Vec::with_capacity(site.len() + 1);
    keys.push(tag::SITE);
    keys.extend_from_slice(site);
    let mut r = rng::stream(seed, &keys);
    sample_transition_vector(law, &mut r)
}

impl QuenchedEnvironment {
    fn from_parts(params: EnvParams, window: Window, weights: Vec<f64>, law_id: String, seed: u64) -> Self {
        let nd = params.n_dirs();
        let mut thresholds = Vec::with_capacity(weights.len());
        for w in weights.chunks(nd) {
            thresholds.extend(TransitionVector { weights: w.to_vec() }.thresholds());
        }
        QuenchedEnvironment {
            params,
            window,
            weights,
            thresholds,
            law_id,
            seed,
        }
    }

    /// Build from explicit per-site vectors listed in row-major window order.
    pub fn from_vectors(params: EnvParams, window: Window, vectors: &[TransitionVector]) -> Result<Self> {
        if vectors.len() as u128 != window.n_sites() || window.dim() != params.d {
            return Err(Error::InvalidParams("vector count or dimension does not match window".into()));
        }
        let mut weights = Vec::with_capacity(vectors.len() * params.n_dirs());
        for v in vectors {
            v.validate(&params)?;
            weights.extend_from_slice(v.weights());
        }
        Ok(Self::from_parts(params, window, weights, "explicit".into(), 0))
    }

    /// One-dimensional environment on `[lo, lo + p_right.len() - 1]`.
    pub fn one_dim(kappa: f64, lo: i64, p_right: &[f64]) -> Result<Self> {
        let params = EnvParams::new(1, kappa)?;
        let window = Window::interval(lo, lo + p_right.len() as i64 - 1)?;
        let vs = p_right
            .iter()
            .map(|&p| TransitionVector::one_dim(p, &params))
            .collect::<Result<Vec<_>>>()?;
        Self::from_vectors(params, window, &vs)
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn law_id(&self) -> &str {
        &self.law_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.params.d
    }

    /// Weights at `x`, or `None` outside the window.
    pub fn weights_at(&self, x: &[i64]) -> Option<&[f64]> {
        let nd = self.params.n_dirs();
        self.window.index(x).map(|i| &self.weights[i * nd..(i + 1) * nd])
    }

    pub fn vector_at(&self, x: &[i64]) -> Option<TransitionVector> {
        self.weights_at(x).map(|w| TransitionVector { weights: w.to_vec() })
    }

    /// Probability of stepping `+e_1` at each site of a one-dimensional window,
    /// listed from `window.lo` upwards.
    pub fn right_probs(&self) -> Vec<f64> {
        self.weights.chunks(self.params.n_dirs()).map(|w| w[0]).collect()
    }

    pub fn table(&self) -> &[f64] {
        &self.weights
    }

    pub fn header(&self) -> EnvHeader {
        EnvHeader {
            format_version: ENV_FORMAT_VERSION,
            d: self.params.d,
            kappa: self.params.kappa,
            law_id: self.law_id.clone(),
            seed: self.seed,
            window: self.window.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let f = EnvFileRef {
            header: self.header(),
            weights: &self.weights,
        };
        Ok(serde_json::to_string(&f)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: EnvFile = serde_json::from_str(s)?;
        Self::from_header(f.header, f.weights)
    }

    /// Binary layout: magic, little-endian `u32` header length, header JSON,
    /// then the weight table as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header())?;
        w.write_all(ENV_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for x in &self.weights {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != ENV_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: EnvHeader = serde_json::from_slice(&header)?;
        let n = header.window.n_sites() as usize * 2 * header.d;
        let mut weights = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            weights.push(f64::from_le_bytes(buf));
        }
        Self::from_header(header, weights)
    }

    /// Read either container format, chosen by the leading bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(ENV_MAGIC) {
            Self::read_binary(bytes.as_slice())
        } else {
            Self::from_json(std::str::from_utf8(&bytes).map_err(|e| Error::Format(e.to_string()))?)
        }
    }

    fn from_header(h: EnvHeader, weights: Vec<f64>) -> Result<Self> {
        if h.format_version != ENV_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {}", h.format_version)));
        }
        let params = EnvParams::new(h.d, h.kappa)?;
        let window = Window::new(h.window.lo, h.window.hi)?;
        if window.dim() != h.d {
            return Err(Error::Format("window dimension mismatch".into()));
        }
        let nd = params.n_dirs();
        if weights.len() as u128 != window.n_sites() * nd as u128 {
            return Err(Error::Format(format!(
                "table has {} entries, expected {}",
                weights.len(),
                window.n_sites() * nd as u128
            )));
        }
        for w in weights.chunks(nd) {
            TransitionVector { weights: w.to_vec() }
                .validate(&params)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(Self::from_parts(params, window, weights, h.law_id, h.seed))
    }
}

const ENV_MAGIC: &[u8; 8] = b"RWREENV\x01";
pub const ENV_FORMAT_VERSION: u32 = 1;

/// Self-describing header shared by both container formats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvHeader {
    pub format_version: u32,
    pub d: usize,
    pub kappa: f64,
    pub law_id: String,
    pub seed: u64,
    pub window: Window,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvFile {
    header: EnvHeader,
    weights: Vec<f64>,
}

#[derive(Serialize)]
struct EnvFileRef<'a> {
    header: EnvHeader,
    weights: &'a [f64],
}

/// Anything the walk can step through: maps a site and a uniform `u64` draw to
/// a direction index, or `None` where the environment is undefined.
pub trait Medium {
    fn dim(&self) -> usize;
    fn pick(&mut self, site: &[i64], u: u64) -> Option<usize>;

    /// In `d = 1`, the first site and the per-site thresholds `[t, u64::MAX]`
    /// laid out contiguously, for media that store them that way.
    fn line_thresholds(&self) -> Option<(i64, &[u64])> {
        None
    }
}

impl Medium for &QuenchedEnvironment {
    fn dim(&self) -> usize {
        self.params.d
    }

    #[inline]
    fn pick(&mut self, site: &[i64], u: u64) -> Option<usize> {
        let nd = self.params.n_dirs();
        let i = self.window.index(site)?;
        Some(pick_from(&self.thresholds[i * nd..(i + 1) * nd], u))
    }

    fn line_thresholds(&self) -> Option<(i64, &[u64])> {
        (self.params.d == 1).then(|| (self.window.lo[0], self.thresholds.as_slice()))
    }
}

/// An environment over all of ℤ^d whose sites are sampled on first visit from
/// the same per-site streams `sample_environment` uses.
#[derive(Debug, Clone)]
pub struct LazyEnvironment {
    law: EnvironmentLaw,
    seed: u64,
    homogeneous: Option<Vec<u64>>,
    cache: HashMap<[i64; MAX_DIM], usize>,
    thresholds: Vec<u64>,
}

impl LazyEnvironment {
    pub fn new(law: &EnvironmentLaw, seed: u64) -> Self {
        let homogeneous = match &law.variant {
            LawVariant::Homogeneous { vector } => Some(vector.thresholds()),
            _ => None,
        };
        LazyEnvironment {
            law: law.clone(),
            seed,
            homogeneous,
            cache: HashMap::new(),
            thresholds: Vec::new(),
        }
    }

    pub fn sites_sampled(&self) -> usize {
        self.cache.len()
    }
}

impl Medium for LazyEnvironment {
    fn dim(&self) -> usize {
        self.law.params.d
    }

    fn pick(&mut self, site: &[i64], u: u64) -> Option<usize> {
        if let Some(thr) = &self.homogeneous {
            return Some(pick_from(thr, u));
        }
        let nd = self.law.params.n_dirs();
        let mut key = [0i64; MAX_DIM];
        key[..site.len()].copy_from_slice(site);
        let off = match self.cache.get(&key) {
            Some(&o) => o,
            None => {
                let o = self.thresholds.len();
                let v = site_vector(&self.law, self.seed, site);
                self.thresholds.extend(v.thresholds());
                self.cache.insert(key, o);
                o
            }
        };
        Some(pick_from(&self.thresholds[off..off + nd], u))
    }
}

/// Floor one vector to the quantization grid of mesh `(1 − 2dκ)/m`.
pub fn quantize_vector(v: &TransitionVector, m: usize, params: &EnvParams) -> Result<TransitionVector> {
    if m < 2 {
        return Err(Error::Quantization(format!("grid size m = {m} must be at least 2")));
    }
    let k = params.kappa;
    let free = params.free_mass();
    let nd = params.n_dirs();
    let w = v.weights();
    if free == 0.0 {
        return Ok(TransitionVector { weights: vec![k; nd] });
    }
    let mesh = free / m as f64;
    let mut q = Vec::with_capacity(nd);
    for &x in &w[..nd - 1] {
        // snap values sitting on a grid point up to it before flooring
        let idx = (((x - k) / mesh) + 1e-9).floor().clamp(0.0, m as f64);
        q.push(k + idx * mesh);
    }
    let last = 1.0 - q.iter().sum::<f64>();
    q.push(last);
    if last < k {
        project_to_floor(&mut q, k)?;
    }
    let out = TransitionVector { weights: q };
    out.validate(params).map_err(|e| Error::Quantization(e.to_string()))?;
    Ok(out)
}

/// Raise the last coordinate to the floor, taking the deficit proportionally
/// from the others' mass above the floor.
fn project_to_floor(q: &mut [f64], k: f64) -> Result<()> {
    let n = q.len();
    let deficit = k - q[n - 1];
    let excess: f64 = q[..n - 1].iter().map(|x| x - k).sum();
    if excess < deficit {
        return Err(Error::Quantization(format!(
            "cannot restore floor {k}: deficit {deficit} exceeds available mass {excess}"
        )));
    }
    let scale = 1.0 - deficit / excess;
    for x in &mut q[..n - 1] {
        *x = k + (*x - k) * scale;
    }
    q[n - 1] = 1.0 - q[..n - 1].iter().sum::<f64>();
    Ok(())
}

/// Samples used to discretize a continuous law.
pub const QUANTIZE_SAMPLES: usize = 1 << 16;
const QUANTIZE_SEED: u64 = 0x5155_414e_5449_5a45;

/// Finite-support approximation of `law` on the grid of mesh `(1 − 2dκ)/m`.
pub fn quantize_law(law: &EnvironmentLaw, m: usize) -> Result<EnvironmentLaw> {
    quantize_law_with(law, m, QUANTIZE_SAMPLES, QUANTIZE_SEED)
}

/// As [`quantize_law`]; continuous laws are discretized through `samples`
/// draws from a stream keyed by `seed`, so different `m` share the same draws.
pub fn quantize_law_with(law: &EnvironmentLaw, m: usize, samples: usize, seed: u64) -> Result<EnvironmentLaw> {
    law.validate()?;
    if m < 2 {
        return Err(Error::Quantization(format!("grid size m = {m} must be at least 2")));
    }
    let p = law.params;
    let mut pairs: Vec<(TransitionVector, f64)> = Vec::new();
    match &law.variant {
        LawVariant::Homogeneous { vector } => pairs.push((quantize_vector(vector, m, &p)?, 1.0)),
        LawVariant::FiniteSupport { atoms, probs } => {
            for (a, q) in atoms.iter().zip(probs) {
                pairs.push((quantize_vector(a, m, &p)?, *q));
            }
        }
        LawVariant::IidContinuous { .. } => {
            if samples == 0 {
                return Err(Error::Quantization("need at least one sample".into()));
            }
            let mut r = rng::stream(seed, &[tag::QUANT]);
            let w = 1.0 / samples as f64;
            for _ in 0..samples {
                let v = sample_transition_vector(law, &mut r);
                pairs.push((quantize_vector(&v, m, &p)?, w));
            }
        }
    }
    // merge identical atoms, keeping first-seen order
    let mut atoms: Vec<TransitionVector> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for (a, q) in pairs {
        let key: Vec<u64> = a.weights().iter().map(|x| x.to_bits()).collect();
        match seen.get(&key) {
            Some(&i) => probs[i] += q,
            None => {
                seen.insert(key, atoms.len());
                atoms.push(a);
                probs.push(q);
            }
        }
    }
    let total: f64 = probs.iter().sum();
    for q in &mut probs {
        *q /= total;
    }
    EnvironmentLaw::new(LawVariant::FiniteSupport { atoms, probs }, p)
}

/// Constants `(C, g, r)` of the strong-mixing condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingParams {
    #[serde(rename = "C")]
    pub c: f64,
    pub g: f64,
    pub r: u32,
}

impl MixingParams {
    pub fn new(c: f64, g: f64, r: u32) -> Result<Self> {
        let m = MixingParams { c, g, r };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.g > 0.0 && self.r >= 1) {
            return Err(Error::InvalidParams(format!(
                "mixing parameters need C >= 0, g > 0, r >= 1; got C={}, g={}, r={}",
                self.c, self.g, self.r
            )));
        }
        Ok(())
    }

    /// The i.i.d. case: no correction at all.
    pub fn independent() -> Self {
        MixingParams { c: 0.0, g: 1.0, r: 1 }
    }
}

/// `ln Γ_M`: `e^{−g(9/11)L_k} · 9 r^{2d} L_k² (6 c̃ L̃_k)^{2(d−1)} · C`.
pub fn mixing_correction_exponent(mp: &MixingParams, d: usize, l_k: f64, lt_k: f64, c_tilde: f64) -> f64 {
    if mp.c == 0.0 {
        return 0.0;
    }
    let d = d as i32;
    // assemble in log space; the polynomial factors overflow long before the product does
    let log = -mp.g * (9.0 / 11.0) * l_k
        + 9f64.ln()
        + 2.0 * d as f64 * (mp.r as f64).ln()
        + 2.0 * l_k.ln()
        + 2.0 * (d - 1) as f64 * (6.0 * c_tilde * lt_k).ln()
        + mp.c.ln();
    log.exp()
}

/// Uniform bound on the mixing correction between disjoint scale-k boxes.
/// Saturates at `+∞` (with a logged diagnostic) when the outer exponential overflows.
pub fn mixing_correction_bound(mp: &MixingParams, d: usize, l_k: f64, lt_k: f64, c_tilde: f64) -> f64 {
    let e = mixing_correction_exponent(mp, d, l_k, lt_k, c_tilde);
    let v = e.exp();
    if v.is_infinite() {
        log::warn!("mixing correction bound overflows (exponent {e:.3e}); saturating at +inf");
    }
    v
}
