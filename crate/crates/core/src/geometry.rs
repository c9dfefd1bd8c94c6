//! Directions and rotations, the scale hierarchy, the box families with their
//! boundaries, the renormalization lattices, quasi-covers, dependency sets and
//! strips.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A unit direction ℓ together with an orthogonal `R` satisfying `R e_1 = ℓ`.
///
/// `R` is the Householder reflection exchanging `e_1` and `ℓ` (the identity
/// when `ℓ = e_1`), so `R = Rᵀ = R⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Direction {
    ell: Vec<f64>,
    rot: Vec<f64>,
    identity: bool,
}

impl Direction {
    /// Normalize `v` and build its rotation.
    pub fn new(v: Vec<f64>) -> Result<Self> {
        let d = v.len();
        if d == 0 {
            return Err(Error::InvalidParams("direction needs at least one coordinate".into()));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidParams(format!("direction {v:?} cannot be normalized")));
        }
        let ell: Vec<f64> = v.iter().map(|x| x / norm).collect();
        let identity = ell[0] == 1.0 && ell[1..].iter().all(|&x| x == 0.0);
        let mut rot = vec![0.0; d * d];
        for i in 0..d {
            rot[i * d + i] = 1.0;
        }
        if !identity {
            let mut w = ell.iter().map(|x| -x).collect::<Vec<_>>();
            w[0] += 1.0;
            let ww: f64 = w.iter().map(|x| x * x).sum();
            for i in 0..d {
                for j in 0..d {
                    rot[i * d + j] -= 2.0 * w[i] * w[j] / ww;
                }
            }
        }
        Ok(Direction { ell, rot, identity })
    }

    pub fn e1(d: usize) -> Self {
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        Self::new(v).expect("e1 is a valid direction")
    }

    pub fn dim(&self) -> usize {
        self.ell.len()
    }

    pub fn ell(&self) -> &[f64] {
        &self.ell
    }

    pub fn is_e1(&self) -> bool {
        self.identity
    }

    /// Entry `R[i][j]`.
    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.rot[i * self.dim() + j]
    }

    /// The column `R e_i`.
    pub fn axis(&self, i: usize) -> Vec<f64> {
        (0..self.dim()).map(|r| self.r(r, i)).collect()
    }

    /// `v · R e_i`.
    #[inline]
    pub fn coord(&self, v: &[f64], i: usize) -> f64 {
        if self.identity {
            return v[i];
        }
        let d = self.dim();
        (0..d).map(|r| v[r] * self.rot[r * d + i]).sum()
    }

    /// Local coordinates `Rᵀ v`.
    pub fn to_local(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| self.coord(v, i)).collect()
    }

    /// Global coordinates `R u`.
    pub fn to_global(&self, u: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|r| (0..d).map(|c| self.rot[r * d + c] * u[c]).sum()).collect()
    }
}

impl TryFrom<Vec<f64>> for Direction {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Direction::new(v)
    }
}

impl From<Direction> for Vec<f64> {
    fn from(d: Direction) -> Self {
        d.ell
    }
}

/// `z · ℓ` for a lattice point.
#[inline]
pub fn project(z: &[i64], ell: &[f64]) -> f64 {
    z.iter().zip(ell).map(|(a, b)| *a as f64 * b).sum()
}

/// The scales `L_k = N_0^k L_0`, `L̃_k = Ñ_0^k L_0` and their partial sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleHierarchy {
    pub d: usize,
    pub l0: f64,
    pub n0: u64,
    pub nt0: u64,
    pub c_tilde: f64,
    pub k_max: usize,
    pub l: Vec<f64>,
    pub lt: Vec<f64>,
    pub a: Vec<f64>,
    pub at: Vec<f64>,
}

/// `N_0 = 1100 d³`.
pub fn canonical_n0(d: usize) -> u64 {
    1100 * (d as u64).pow(3)
}

/// `Ñ_0 = 11 d³ N_0²`.
pub fn canonical_nt0(d: usize) -> u64 {
    11 * (d as u64).pow(3) * canonical_n0(d).pow(2)
}

/// Build a hierarchy with explicit `N_0`, `Ñ_0`. Violations of the `1/11`
/// separation relations are logged and available from
/// [`ScaleHierarchy::separation_violations`].
pub fn make_hierarchy(d: usize, l0: f64, n0: u64, nt0: u64, c_tilde: f64, k_max: usize) -> Result<ScaleHierarchy> {
    if d == 0 {
        return Err(Error::InvalidParams("dimension must be positive".into()));
    }
    let min_l0 = 3.0 * (d as f64).sqrt();
    if !(l0 > min_l0 && l0.is_finite()) {
        return Err(Error::InvalidParams(format!("L0 = {l0} must exceed 3*sqrt(d) = {min_l0}")));
    }
    if n0 < 2 || nt0 < 2 {
        return Err(Error::InvalidParams(format!("N0 = {n0} and Ntilde0 = {nt0} must be at least 2")));
    }
    if !(c_tilde > 0.0 && c_tilde.is_finite()) {
        return Err(Error::InvalidParams(format!("c_tilde = {c_tilde} must be positive")));
    }
    let mut l = Vec::with_capacity(k_max + 1);
    let mut lt = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let overflow = || Error::Range(format!("scale k = {k} overflows (N0 = {n0}, Ntilde0 = {nt0})"));
        let pk = (n0 as u128).checked_pow(k as u32).ok_or_else(overflow)?;
        let ptk = (nt0 as u128).checked_pow(k as u32).ok_or_else(overflow)?;
        let (lk, ltk) = (pk as f64 * l0, ptk as f64 * l0);
        if !lk.is_finite() || !ltk.is_finite() {
            return Err(overflow());
        }
        l.push(lk);
        lt.push(ltk);
    }
    let a = partial_sums(&l);
    let at = partial_sums(&lt);
    let h = ScaleHierarchy {
        d,
        l0,
        n0,
        nt0,
        c_tilde,
        k_max,
        l,
        lt,
        a,
        at,
    };
    for v in h.separation_violations() {
        log::warn!("scale hierarchy: {v}");
    }
    Ok(h)
}

fn partial_sums(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |s, x| {
            *s += x;
            Some(*s)
        })
        .collect()
}

impl ScaleHierarchy {
    /// The hierarchy with `N_0 = 1100 d³` and `Ñ_0 = 11 d³ N_0²`.
    pub fn canonical(d: usize, l0: f64, c_tilde: f64, k_max: usize) -> Result<Self> {
        make_hierarchy(d, l0, canonical_n0(d), canonical_nt0(d), c_tilde, k_max)
    }

    /// Every `k ≥ 1` at which `A_{k−1} ≤ L_k/11` or `Ã_{k−1} ≤ L̃_k/11` fails.
    pub fn separation_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for k in 1..=self.k_max {
            if self.a[k - 1] > self.l[k] / 11.0 {
                out.push(format!("A_{} = {} exceeds L_{k}/11 = {}", k - 1, self.a[k - 1], self.l[k] / 11.0));
            }
            if self.at[k - 1] > self.lt[k] / 11.0 {
                out.push(format!(
                    "Atilde_{} = {} exceeds Ltilde_{k}/11 = {}",
                    k - 1,
                    self.at[k - 1],
                    self.lt[k] / 11.0
                ));
            }
        }
        out
    }

    pub fn check_scale(&self, k: usize) -> Result<()> {
        if k > self.k_max {
            return Err(Error::Range(format!("scale {k} exceeds k_max = {}", self.k_max)));
        }
        Ok(())
    }

    /// Lateral spacing of the scale-k lattice, `3 c̃ L̃_k`.
    pub fn lateral_spacing(&self, k: usize) -> f64 {
        3.0 * self.c_tilde * self.lt[k]
    }
}

/// Which family a box belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxKind {
    /// Closed `[0, L] × [0, 3c̃L̃]^{d−1}`.
    B1Tilde,
    /// Open `(−L, (12/11)L) × (−c̃L̃, 4c̃L̃)^{d−1}`.
    B2,
    /// Open `(0, L) × (0, 3c̃L̃)^{d−1}`.
    B1Dot,
    /// Open `(−L, L) × (−2L³, 2L³)^{d−1}`.
    B0L,
    /// Open slab `|(z − x)·ℓ| < L`, unbounded laterally.
    SlabU,
}

/// Classification of a site relative to a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Interior,
    Exterior,
    Boundary,
    BoundaryPlus,
}

impl Membership {
    pub fn is_boundary(self) -> bool {
        matches!(self, Membership::Boundary | Membership::BoundaryPlus)
    }
}

/// `anchor + R(box)` for a product of intervals in local coordinates.
/// Intervals are all open or all closed; the frontal boundary is the part of
/// the outer boundary with local first coordinate at least `front`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub anchor: Vec<f64>,
    pub direction: Direction,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub closed: bool,
    pub front: f64,
}

impl Region {
    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    #[inline]
    fn local(&self, z: &[i64], i: usize) -> f64 {
        if self.direction.is_e1() {
            return z[i] as f64 - self.anchor[i];
        }
        let d = self.dim();
        let mut s = 0.0;
        for (r, zr) in z.iter().enumerate() {
            s += (*zr as f64 - self.anchor[r]) * self.direction.rot[r * d + i];
        }
        s
    }

    /// Local first coordinate `(z − anchor)·ℓ`.
    #[inline]
    pub fn depth(&self, z: &[i64]) -> f64 {
        self.local(z, 0)
    }

    #[inline]
    pub fn contains(&self, z: &[i64]) -> bool {
        (0..self.dim()).all(|i| {
            let u = self.local(z, i);
            if self.closed {
                self.lo[i] <= u && u <= self.hi[i]
            } else {
                self.lo[i] < u && u < self.hi[i]
            }
        })
    }

    pub fn classify(&self, z: &[i64]) -> Membership {
        if self.contains(z) {
            return Membership::Interior;
        }
        let mut y = z.to_vec();
        let mut adjacent = false;
        'outer: for i in 0..z.len() {
            for s in [-1, 1] {
                y[i] = z[i] + s;
                if self.contains(&y) {
                    adjacent = true;
                    break 'outer;
                }
            }
            y[i] = z[i];
        }
        if !adjacent {
            Membership::Exterior
        } else if self.depth(z) >= self.front {
            Membership::BoundaryPlus
        } else {
            Membership::Boundary
        }
    }

    /// Inclusive integer bounding box of the interior, or `None` when the
    /// region is unbounded.
    pub fn bounding_box(&self) -> Option<(Vec<i64>, Vec<i64>)> {
        let d = self.dim();
        if self.lo.iter().chain(&self.hi).any(|x| !x.is_finite()) {
            return None;
        }
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for mask in 0..(1usize << d) {
            let corner: Vec<f64> = (0..d).map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] }).collect();
            let g = self.direction.to_global(&corner);
            for i in 0..d {
                lo[i] = lo[i].min(g[i] + self.anchor[i]);
                hi[i] = hi[i].max(g[i] + self.anchor[i]);
            }
        }
        Some((
            lo.iter().map(|x| x.floor() as i64).collect(),
            hi.iter().map(|x| x.ceil() as i64).collect(),
        ))
    }

    /// Interior lattice sites in lexicographic order, refusing more than `cap`
    /// candidate sites.
    pub fn sites(&self, cap: u128) -> Result<Vec<Vec<i64>>> {
        let (lo, hi) = self
            .bounding_box()
            .ok_or_else(|| Error::Range("cannot enumerate an unbounded region".into()))?;
        let count: u128 = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as u128).product();
        if count > cap {
            return Err(Error::Capacity {
                what: "region enumeration".into(),
                requested: count,
                cap,
            });
        }
        let mut out = Vec::new();
        let mut z = lo.clone();
        loop {
            if self.contains(&z) {
                out.push(z.clone());
            }
            let mut i = z.len();
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                if z[i] < hi[i] {
                    z[i] += 1;
                    break;
                }
                z[i] = lo[i];
            }
        }
    }

    /// Per-coordinate inclusive integer ranges of the interior; only defined
    /// for `ℓ = e_1`. An empty coordinate range makes the region empty.
    pub fn integer_ranges(&self) -> Option<Vec<(i64, i64)>> {
        if !self.direction.is_e1() {
            return None;
        }
        Some(
            (0..self.dim())
                .map(|i| {
                    let (a, b) = (self.anchor[i] + self.lo[i], self.anchor[i] + self.hi[i]);
                    if self.closed {
                        (a.ceil() as i64, b.floor() as i64)
                    } else {
                        ((a.floor() as i64).saturating_add(1), (b.ceil() as i64).saturating_sub(1))
                    }
                })
                .collect(),
        )
    }
}

/// ℓ¹ distance between the lattice sites of two `ℓ = e_1` regions, or `None`
/// when either is rotated. Empty regions are infinitely far apart.
pub fn l1_distance(a: &Region, b: &Region) -> Option<f64> {
    let (ra, rb) = (a.integer_ranges()?, b.integer_ranges()?);
    if ra.iter().chain(&rb).any(|(lo, hi)| lo > hi) {
        return Some(f64::INFINITY);
    }
    Some(
        ra.iter()
            .zip(&rb)
            .map(|(&(a0, a1), &(b0, b1))| (b0 as i128 - a1 as i128).max(a0 as i128 - b1 as i128).max(0) as f64)
            .sum(),
    )
}

/// Whether two `ℓ = e_1` regions share a lattice site.
pub fn lattice_disjoint(a: &Region, b: &Region) -> Option<bool> {
    let (ra, rb) = (a.integer_ranges()?, b.integer_ranges()?);
    Some(
        ra.iter()
            .zip(&rb)
            .any(|(&(a0, a1), &(b0, b1))| a0 > a1 || b0 > b1 || a1 < b0 || b1 < a0),
    )
}

/// Whether two regions sharing a direction are disjoint as subsets of ℝ^d.
pub fn continuous_disjoint(a: &Region, b: &Region) -> bool {
    let shift = a
        .direction
        .to_local(&b.anchor.iter().zip(&a.anchor).map(|(x, y)| x - y).collect::<Vec<_>>());
    (0..a.dim()).any(|i| a.hi[i] <= b.lo[i] + shift[i] || b.hi[i] + shift[i] <= a.lo[i])
}

/// A box of one of the five families, anchored at `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub kind: BoxKind,
    pub anchor: Vec<f64>,
    /// Scale the lengths were taken from, when they came from a hierarchy.
    pub scale: Option<usize>,
    pub l: f64,
    pub lt: f64,
    pub c_tilde: f64,
    pub direction: Direction,
}

impl BoxSpec {
    /// Box of `kind` at scale `k`, with lengths `L_k`, `L̃_k`.
    pub fn at_scale(kind: BoxKind, anchor: Vec<f64>, k: usize, h: &ScaleHierarchy, direction: &Direction) -> Result<Self> {
        h.check_scale(k)?;
        if anchor.len() != h.d || direction.dim() != h.d {
            return Err(Error::InvalidParams("anchor, direction and hierarchy dimensions differ".into()));
        }
        Ok(BoxSpec {
            kind,
            anchor,
            scale: Some(k),
            l: h.l[k],
            lt: h.lt[k],
            c_tilde: h.c_tilde,
            direction: direction.clone(),
        })
    }

    /// Box with explicit lengths, e.g. `B_{0,L}` or `U_L` at arbitrary `L`.
    pub fn with_lengths(kind: BoxKind, anchor: Vec<f64>, l: f64, lt: f64, c_tilde: f64, direction: &Direction) -> Result<Self> {
        if !(l > 0.0 && lt > 0.0 && c_tilde > 0.0) || anchor.len() != direction.dim() {
            return Err(Error::InvalidParams(format!("invalid box lengths L = {l}, Ltilde = {lt}")));
        }
        Ok(BoxSpec {
            kind,
            anchor,
            scale: None,
            l,
            lt,
            c_tilde,
            direction: direction.clone(),
        })
    }

    /// The box `B_{0,L}` at the origin.
    pub fn b0l(l: f64, direction: &Direction) -> Result<Self> {
        Self::with_lengths(BoxKind::B0L, vec![0.0; direction.dim()], l, l, 1.0, direction)
    }

    /// The slab `U_L` at the origin.
    pub fn slab(l: f64, direction: &Direction) -> Result<Self> {
        Self::with_lengths(BoxKind::SlabU, vec![0.0; direction.dim()], l, l, 1.0, direction)
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn region(&self) -> Region {
        let d = self.dim();
        let (l, w) = (self.l, self.c_tilde * self.lt);
        let (lo1, hi1, lat_lo, lat_hi, closed, front) = match self.kind {
            BoxKind::B1Tilde => (0.0, l, 0.0, 3.0 * w, true, l),
            BoxKind::B2 => (-l, 12.0 * l / 11.0, -w, 4.0 * w, false, 12.0 * l / 11.0),
            BoxKind::B1Dot => (0.0, l, 0.0, 3.0 * w, false, l),
            BoxKind::B0L => {
                let lat = 2.0 * l.powi(3);
                (-l, l, -lat, lat, false, l)
            }
            BoxKind::SlabU => (-l, l, f64::NEG_INFINITY, f64::INFINITY, false, l),
        };
        let mut lo = vec![lat_lo; d];
        let mut hi = vec![lat_hi; d];
        lo[0] = lo1;
        hi[0] = hi1;
        Region {
            anchor: self.anchor.clone(),
            direction: self.direction.clone(),
            lo,
            hi,
            closed,
            front,
        }
    }

    pub fn membership(&self, z: &[i64]) -> Membership {
        self.region().classify(z)
    }
}

/// Points of `𝔏_k = L_k ℤ × (3c̃L̃_k ℤ)^{d−1}` in the closed box `[lo, hi]`,
/// lexicographically ordered.
pub fn lattice_points(h: &ScaleHierarchy, k: usize, lo: &[f64], hi: &[f64]) -> Result<Vec<Vec<f64>>> {
    h.check_scale(k)?;
    if lo.len() != h.d || hi.len() != h.d {
        return Err(Error::InvalidParams("region dimension differs from hierarchy".into()));
    }
    let axes: Vec<Vec<f64>> = (0..h.d)
        .map(|i| {
            let step = if i == 0 { h.l[k] } else { h.lateral_spacing(k) };
            multiples_in(step, lo[i], hi[i])
        })
        .collect();
    Ok(cartesian(&axes))
}

fn multiples_in(step: f64, lo: f64, hi: f64) -> Vec<f64> {
    if lo > hi {
        return Vec::new();
    }
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|m| m as f64 * step).collect()
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Children of a scale-k `B_2`: the scale-(k−1) boxes `B̃_1(y)`, `y ∈ 𝔏_{k−1}`
/// taken in the parent's rotated frame, whose `Ḃ_1(y)` lies inside the parent.
pub fn quasi_cover(h: &ScaleHierarchy, k: usize, parent: &BoxSpec) -> Result<Vec<BoxSpec>> {
    if k == 0 {
        return Err(Error::InvalidParams("scale 0 has no finer scale to cover with".into()));
    }
    h.check_scale(k)?;
    if parent.kind != BoxKind::B2 {
        return Err(Error::InvalidParams("quasi-covers are defined for B2 boxes".into()));
    }
    let pr = parent.region();
    let (lk, lat) = (h.l[k - 1], h.lateral_spacing(k - 1));
    let eps = 1e-9 * parent.l.max(1.0);
    // Ḃ_1(p) = p + (0, L) × (0, 3c̃L̃)^{d−1} sits inside the parent's local box
    let axes: Vec<Vec<f64>> = (0..h.d)
        .map(|i| {
            let width = if i == 0 { lk } else { lat };
            let step = width;
            multiples_in(step, pr.lo[i] - eps, pr.hi[i] - width + eps)
        })
        .collect();
    cartesian(&axes)
        .into_iter()
        .map(|p| {
            let g = parent.direction.to_global(&p);
            let anchor: Vec<f64> = g.iter().zip(&parent.anchor).map(|(a, b)| a + b).collect();
            BoxSpec::at_scale(BoxKind::B1Tilde, anchor, k - 1, h, &parent.direction)
        })
        .collect()
}

/// Interior sites of `parent` lying in no child `B̃_1` of its quasi-cover.
pub fn quasi_cover_gaps(h: &ScaleHierarchy, k: usize, parent: &BoxSpec, cap: u128) -> Result<Vec<Vec<i64>>> {
    let children: Vec<Region> = quasi_cover(h, k, parent)?.iter().map(BoxSpec::region).collect();
    Ok(parent
        .region()
        .sites(cap)?
        .into_iter()
        .filter(|z| !children.iter().any(|c| c.contains(z)))
        .collect())
}

/// The sites on which the Good/Bad label of `B_{2,k}(x)` can depend:
/// `x + R((−A_k, L_k + A_k/11) × (−c̃Ã_k, 3c̃L̃_k + c̃Ã_k)^{d−1})`.
pub fn dependency_set(h: &ScaleHierarchy, k: usize, x: &[f64], direction: &Direction) -> Result<Region> {
    h.check_scale(k)?;
    let (a, at, c) = (h.a[k], h.at[k], h.c_tilde);
    let mut lo = vec![-c * at; h.d];
    let mut hi = vec![3.0 * c * h.lt[k] + c * at; h.d];
    lo[0] = -a;
    hi[0] = h.l[k] + a / 11.0;
    let front = hi[0];
    Ok(Region {
        anchor: x.to_vec(),
        direction: direction.clone(),
        lo,
        hi,
        closed: false,
        front,
    })
}

/// Band index `I(z)` and strip membership for bands of width `L_k` along ℓ.
#[derive(Debug, Clone, PartialEq)]
pub struct StripIndexer {
    pub direction: Direction,
    pub l_k: f64,
    /// Point the bands are measured from.
    pub origin: Vec<f64>,
    /// Centre of the lateral truncation.
    pub center: Vec<f64>,
    /// Half-width of the lateral truncation, `c̃L̃_{k+1}`.
    pub half_width: f64,
}

impl StripIndexer {
    pub fn new(direction: &Direction, l_k: f64, origin: Vec<f64>, center: Vec<f64>, half_width: f64) -> Self {
        StripIndexer {
            direction: direction.clone(),
            l_k,
            origin,
            center,
            half_width,
        }
    }

    /// The indexer used inside a scale-(k+1) box anchored at `origin`, with
    /// truncation centred on the starting point `center`.
    pub fn for_scale(h: &ScaleHierarchy, k: usize, direction: &Direction, origin: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        h.check_scale(k + 1)?;
        Ok(Self::new(direction, h.l[k], origin, center, h.c_tilde * h.lt[k + 1]))
    }

    #[inline]
    fn offset(&self, z: &[i64]) -> f64 {
        z.iter()
            .zip(&self.origin)
            .zip(self.direction.ell())
            .map(|((a, o), e)| (*a as f64 - o) * e)
            .sum()
    }

    /// `I(z) = i` iff `(z − origin)·ℓ ∈ [iL_k − L_k/2, iL_k + L_k/2)`.
    #[inline]
    pub fn index(&self, z: &[i64]) -> i64 {
        ((self.offset(z) + self.l_k / 2.0) / self.l_k).floor() as i64
    }

    /// `z ∈ ℋ_i`: some neighbour lies on the other side of (or on) the
    /// hyperplane `(· − origin)·ℓ = iL_k`.
    pub fn in_strip(&self, z: &[i64], i: i64) -> bool {
        let level = i as f64 * self.l_k;
        let p = self.offset(z) - level;
        let ell = self.direction.ell();
        ell.iter().any(|&e| [-1.0, 1.0].iter().any(|s| p * (p + s * e) <= 0.0))
    }

    /// `z ∈ ℋ̂_i`: in the strip and within the lateral truncation.
    pub fn in_truncated_strip(&self, z: &[i64], i: i64) -> bool {
        if !self.in_strip(z, i) {
            return false;
        }
        let v: Vec<f64> = z.iter().zip(&self.center).map(|(a, c)| *a as f64 - c).collect();
        (1..self.direction.dim()).all(|j| self.direction.coord(&v, j).abs() < self.half_width)
    }
}
