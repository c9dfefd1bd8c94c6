//! The quenched walk engine.
//!
//! A walk is driven through a [`Medium`] by one `u64` draw per step and stopped
//! by the first of a list of [`StopSpec`]s to trigger. Every stopping time is
//! an infimum over `n ≥ 0`, so a spec already satisfied at the start fires at
//! step 0. Ties between specs that trigger at the same step go to the earlier
//! entry of the list.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{dir_step, EnvironmentLaw, LazyEnvironment, Medium, QuenchedEnvironment, MAX_DIM};
use crate::geometry::{BoxSpec, Direction, Membership, Region, ScaleHierarchy, StripIndexer};
use crate::rng::{self, tag, StreamRng};
use crate::stats::{mean_stderr, Estimate};
use crate::{Error, Result};

/// Step budget used when a caller does not pick one.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Largest censored fraction an estimator accepts by default.
pub const DEFAULT_CENSOR_CAP: f64 = 1e-3;

/// A stopping time.
#[derive(Debug, Clone, PartialEq)]
pub enum StopSpec {
    /// `T_L^ℓ`: first `n` with `X_n·ℓ ≥ level`.
    HalfSpaceAbove { ell: Vec<f64>, level: f64 },
    /// `T̃_L^ℓ`: first `n` with `X_n·ℓ ≤ level`.
    HalfSpaceBelow { ell: Vec<f64>, level: f64 },
    /// `T_A`: first `n` with `X_n ∉ A`.
    ExitSet(Region),
    /// `H_A` (first `n ≥ 0` with `X_n ∈ A`), or `H̃_A` (first `n ≥ 1`) when `strict`.
    EnterSet { region: Region, strict: bool },
    /// `σ_u^{+i}`: first `n` with `(X_n − X_0)·R(e_i) ≥ level`. Axes count from 0,
    /// so lateral axes are `1..d`.
    LateralAbove { direction: Direction, axis: usize, level: f64 },
    /// `σ_u^{−i}`: first `n` with `(X_n − X_0)·R(e_i) ≤ level`.
    LateralBelow { direction: Direction, axis: usize, level: f64 },
    /// First visit to a strip `ℋ_{I(X_0)+o}` for some `o` in `offsets`, or to its
    /// lateral truncation `ℋ̂` when `truncated`.
    StripVisit {
        strips: StripIndexer,
        offsets: Vec<i64>,
        truncated: bool,
    },
}

impl StopSpec {
    pub fn above(ell: &[f64], level: f64) -> Self {
        StopSpec::HalfSpaceAbove { ell: ell.to_vec(), level }
    }

    pub fn below(ell: &[f64], level: f64) -> Self {
        StopSpec::HalfSpaceBelow { ell: ell.to_vec(), level }
    }

    fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        match self {
            StopSpec::HalfSpaceAbove { ell, level } | StopSpec::HalfSpaceBelow { ell, level } => {
                if ell.len() != d {
                    return bad(format!("half-space direction has {} coordinates, walk has {d}", ell.len()));
                }
                if level.is_nan() || ell.iter().any(|x| !x.is_finite()) {
                    return bad("half-space level or direction is not finite".into());
                }
            }
            StopSpec::ExitSet(r) | StopSpec::EnterSet { region: r, .. } => {
                if r.dim() != d {
                    return bad(format!("region has dimension {}, walk has {d}", r.dim()));
                }
            }
            StopSpec::LateralAbove { direction, axis, level } | StopSpec::LateralBelow { direction, axis, level } => {
                if direction.dim() != d {
                    return bad(format!("lateral direction has dimension {}, walk has {d}", direction.dim()));
                }
                if *axis == 0 || *axis >= d {
                    return bad(format!("lateral axis {axis} is not in 1..{d}"));
                }
                if level.is_nan() {
                    return bad("lateral level is NaN".into());
                }
            }
            StopSpec::StripVisit { strips, offsets, .. } => {
                if strips.direction.dim() != d {
                    return bad(format!("strip direction has dimension {}, walk has {d}", strips.direction.dim()));
                }
                if !(strips.l_k > 0.0) {
                    return bad("strip width must be positive".into());
                }
                if offsets.is_empty() {
                    return bad("strip visit needs at least one target offset".into());
                }
            }
        }
        Ok(())
    }

    /// Whether the spec fires at step `n` of a walk started at `x0`.
    pub fn triggered(&self, x0: &[i64], x: &[i64], n: u64) -> bool {
        match self {
            StopSpec::HalfSpaceAbove { ell, level } => dot(x, ell) >= *level,
            StopSpec::HalfSpaceBelow { ell, level } => dot(x, ell) <= *level,
            StopSpec::ExitSet(r) => !r.contains(x),
            StopSpec::EnterSet { region, strict } => !(*strict && n == 0) && region.contains(x),
            StopSpec::LateralAbove { direction, axis, level } => lateral(direction, *axis, x0, x) >= *level,
            StopSpec::LateralBelow { direction, axis, level } => lateral(direction, *axis, x0, x) <= *level,
            StopSpec::StripVisit {
                strips,
                offsets,
                truncated,
            } => {
                let base = strips.index(x0);
                offsets.iter().any(|o| {
                    if *truncated {
                        strips.in_truncated_strip(x, base + o)
                    } else {
                        strips.in_strip(x, base + o)
                    }
                })
            }
        }
    }
}

fn dot(x: &[i64], ell: &[f64]) -> f64 {
    x.iter().zip(ell).map(|(a, b)| *a as f64 * b).sum()
}

fn lateral(direction: &Direction, axis: usize, x0: &[i64], x: &[i64]) -> f64 {
    let v: Vec<f64> = x.iter().zip(x0).map(|(a, b)| (a - b) as f64).collect();
    direction.coord(&v, axis)
}

/// If `ell` is `±e_j`, returns `(j, ±1)`.
fn as_axis(ell: &[f64]) -> Option<(usize, i64)> {
    let mut found = None;
    for (j, &e) in ell.iter().enumerate() {
        if e == 0.0 {
            continue;
        }
        if found.is_some() {
            return None;
        }
        found = Some((
            j,
            if e == 1.0 {
                1
            } else if e == -1.0 {
                -1
            } else {
                return None;
            },
        ));
    }
    found
}

fn ceil_i64(x: f64) -> i64 {
    x.ceil() as i64
}

fn floor_i64(x: f64) -> i64 {
    x.floor() as i64
}

/// A spec lowered to a check against the current position for one run.
enum Check<'a> {
    Never,
    CoordAtLeast {
        axis: usize,
        level: i64,
    },
    CoordAtMost {
        axis: usize,
        level: i64,
    },
    ProjAtLeast {
        ell: [f64; MAX_DIM],
        level: f64,
    },
    ProjAtMost {
        ell: [f64; MAX_DIM],
        level: f64,
    },
    InBox {
        lo: [i64; MAX_DIM],
        hi: [i64; MAX_DIM],
        inside: bool,
        strict: bool,
    },
    InRegion {
        region: &'a Region,
        inside: bool,
        strict: bool,
    },
    Strips {
        strips: &'a StripIndexer,
        targets: Vec<i64>,
        truncated: bool,
    },
}

impl<'a> Check<'a> {
    fn lower(spec: &'a StopSpec, x0: &[i64]) -> Check<'a> {
        let d = x0.len();
        let half_space = |ell: &[f64], level: f64, above: bool| match as_axis(ell) {
            // X·(s e_j) ≥ L  ⇔  s·x_j ≥ L
            Some((j, 1)) if above => Check::CoordAtLeast {
                axis: j,
                level: ceil_i64(level),
            },
            Some((j, 1)) => Check::CoordAtMost {
                axis: j,
                level: floor_i64(level),
            },
            Some((j, _)) if above => Check::CoordAtMost {
                axis: j,
                level: floor_i64(-level),
            },
            Some((j, _)) => Check::CoordAtLeast {
                axis: j,
                level: ceil_i64(-level),
            },
            None => {
                let mut e = [0.0; MAX_DIM];
                e[..d].copy_from_slice(ell);
                if above {
                    Check::ProjAtLeast { ell: e, level }
                } else {
                    Check::ProjAtMost { ell: e, level }
                }
            }
        };
        let region = |r: &'a Region, inside: bool, strict: bool| match r.integer_ranges() {
            Some(ranges) => {
                let mut lo = [0i64; MAX_DIM];
                let mut hi = [0i64; MAX_DIM];
                for (i, (a, b)) in ranges.into_iter().enumerate() {
                    lo[i] = a;
                    hi[i] = b;
                }
                Check::InBox { lo, hi, inside, strict }
            }
            None => Check::InRegion { region: r, inside, strict },
        };
        match spec {
            StopSpec::HalfSpaceAbove { ell, level } => half_space(ell, *level, true),
            StopSpec::HalfSpaceBelow { ell, level } => half_space(ell, *level, false),
            StopSpec::ExitSet(r) => region(r, false, false),
            StopSpec::EnterSet { region: r, strict } => region(r, true, *strict),
            StopSpec::LateralAbove { direction, axis, level } | StopSpec::LateralBelow { direction, axis, level } => {
                let above = matches!(spec, StopSpec::LateralAbove { .. });
                let ell = direction.axis(*axis);
                let base = dot(x0, &ell);
                if level.is_infinite() {
                    return Check::Never;
                }
                half_space(&ell, level + base, above)
            }
            StopSpec::StripVisit {
                strips,
                offsets,
                truncated,
            } => {
                let base = strips.index(x0);
                Check::Strips {
                    strips,
                    targets: offsets.iter().map(|o| base + o).collect(),
                    truncated: *truncated,
                }
            }
        }
    }

    #[inline]
    fn hit(&self, x: &[i64], n: u64) -> bool {
        match self {
            Check::Never => false,
            Check::CoordAtLeast { axis, level } => x[*axis] >= *level,
            Check::CoordAtMost { axis, level } => x[*axis] <= *level,
            Check::ProjAtLeast { ell, level } => dot(x, ell) >= *level,
            Check::ProjAtMost { ell, level } => dot(x, ell) <= *level,
            Check::InBox { lo, hi, inside, strict } => {
                if *strict && n == 0 {
                    return false;
                }
                let within = x.iter().enumerate().all(|(i, &v)| lo[i] <= v && v <= hi[i]);
                within == *inside
            }
            Check::InRegion { region, inside, strict } => {
                if *strict && n == 0 {
                    return false;
                }
                region.contains(x) == *inside
            }
            Check::Strips {
                strips,
                targets,
                truncated,
            } => targets.iter().any(|&i| {
                if *truncated {
                    strips.in_truncated_strip(x, i)
                } else {
                    strips.in_strip(x, i)
                }
            }),
        }
    }
}

/// Outcome of one raced walk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitRecord {
    /// Index of the spec that fired; `None` exactly when censored.
    pub which_stop: Option<usize>,
    /// Position at the stopping time, or at the last step when censored.
    pub exit_site: Vec<i64>,
    pub steps: u64,
    pub censored: bool,
}

/// Receives every visited position, including the start at step 0.
pub trait Observer {
    fn observe(&mut self, step: u64, site: &[i64]);
}

impl Observer for () {
    #[inline]
    fn observe(&mut self, _: u64, _: &[i64]) {}
}

/// A validated list of stop specs with a step budget, reusable across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Race {
    specs: Vec<StopSpec>,
    budget: u64,
    d: usize,
}

impl Race {
    pub fn new(d: usize, specs: Vec<StopSpec>, budget: u64) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidParams("step budget must be positive".into()));
        }
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidParams(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        for s in &specs {
            s.validate(d)?;
        }
        Ok(Race { specs, budget, d })
    }

    pub fn specs(&self) -> &[StopSpec] {
        &self.specs
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Run one walk from `start`.
    pub fn run<M: Medium + ?Sized, R: Rng + ?Sized, O: Observer + ?Sized>(
        &self,
        medium: &mut M,
        start: &[i64],
        rng: &mut R,
        observer: &mut O,
    ) -> Result<ExitRecord> {
        let d = self.d;
        if start.len() != d || medium.dim() != d {
            return Err(Error::InvalidParams(format!(
                "start has {} coordinates and medium dimension {}, race expects {d}",
                start.len(),
                medium.dim()
            )));
        }
        let checks: Vec<Check> = self.specs.iter().map(|s| Check::lower(s, start)).collect();
        if d == 1 {
            if let Some((lo, thr)) = medium.line_thresholds() {
                return self.run_line(&checks, lo, thr, start[0], rng, observer);
            }
        }
        let mut buf = [0i64; MAX_DIM];
        buf[..d].copy_from_slice(start);
        let x = &mut buf[..d];
        let mut n = 0u64;
        loop {
            observer.observe(n, x);
            if let Some(i) = checks.iter().position(|c| c.hit(x, n)) {
                return Ok(ExitRecord {
                    which_stop: Some(i),
                    exit_site: x.to_vec(),
                    steps: n,
                    censored: false,
                });
            }
            if n == self.budget {
                return Ok(ExitRecord {
                    which_stop: None,
                    exit_site: x.to_vec(),
                    steps: n,
                    censored: true,
                });
            }
            let dir = medium.pick(x, rng.next_u64()).ok_or_else(|| Error::WindowUnderrun(x.to_vec()))?;
            let (axis, s) = dir_step(dir);
            x[axis] += s;
            n += 1;
        }
    }
}

impl Race {
    /// The one-dimensional loop over a contiguous threshold table. Between
    /// the innermost coordinate levels no check can fire, so the full list is
    /// only consulted outside that interval. Draws and moves match
    /// [`Race::run`] step for step.
    fn run_line<R: Rng + ?Sized, O: Observer + ?Sized>(
        &self,
        checks: &[Check],
        lo: i64,
        thr: &[u64],
        start: i64,
        rng: &mut R,
        observer: &mut O,
    ) -> Result<ExitRecord> {
        let (mut quiet_lo, mut quiet_hi) = (i64::MIN, i64::MAX);
        for c in checks {
            match c {
                Check::Never => {}
                Check::CoordAtLeast { level, .. } => quiet_hi = quiet_hi.min(level.saturating_sub(1)),
                Check::CoordAtMost { level, .. } => quiet_lo = quiet_lo.max(level.saturating_add(1)),
                _ => (quiet_lo, quiet_hi) = (i64::MAX, i64::MIN),
            }
        }
        let sites = (thr.len() / 2) as i64;
        let mut x = start;
        let mut n = 0u64;
        loop {
            observer.observe(n, std::slice::from_ref(&x));
            let quiet = quiet_lo <= x && x <= quiet_hi;
            if !quiet {
                if let Some(i) = checks.iter().position(|c| c.hit(std::slice::from_ref(&x), n)) {
                    return Ok(ExitRecord {
                        which_stop: Some(i),
                        exit_site: vec![x],
                        steps: n,
                        censored: false,
                    });
                }
            }
            if n == self.budget {
                return Ok(ExitRecord {
                    which_stop: None,
                    exit_site: vec![x],
                    steps: n,
                    censored: true,
                });
            }
            let i = x - lo;
            if !(0..sites).contains(&i) {
                return Err(Error::WindowUnderrun(vec![x]));
            }
            x += if rng.next_u64() < thr[2 * i as usize] { 1 } else { -1 };
            n += 1;
        }
    }
}

/// Race `specs` once from `start` through `medium`.
pub fn run_race<M: Medium + ?Sized, R: Rng + ?Sized>(
    medium: &mut M,
    start: &[i64],
    specs: &[StopSpec],
    budget: u64,
    rng: &mut R,
) -> Result<ExitRecord> {
    Race::new(start.len(), specs.to_vec(), budget)?.run(medium, start, rng, &mut ())
}

/// Replays a recorded path: the first `(spec index, step)` at which any spec
/// fires, with ties resolved by list order.
pub fn first_trigger(trace: &[Vec<i64>], specs: &[StopSpec]) -> Option<(usize, u64)> {
    let x0 = trace.first()?;
    trace
        .iter()
        .enumerate()
        .find_map(|(n, x)| specs.iter().position(|s| s.triggered(x0, x, n as u64)).map(|i| (i, n as u64)))
}

/// Walk stream for trial `t` under master seed `seed`.
pub fn trial_rng(seed: u64, t: u64) -> StreamRng {
    rng::stream(seed, &[tag::WALK, t as i64])
}

/// Environment seed for annealed trial `t`.
pub fn trial_env_seed(seed: u64, t: u64) -> u64 {
    rng::derive_seed(seed, &[tag::ENV, t as i64])
}

/// Runs `f(t)` for every trial in parallel and returns results in trial order.
/// The result is the same for every thread count.
pub fn par_trials<T, F>(trials: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..trials).into_par_iter().map(f).collect()
}

/// Counts of which spec fired over many trials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaceTally {
    pub trials: u64,
    pub censored: u64,
    pub hits: Vec<u64>,
}

impl RaceTally {
    fn from_records<'r>(n_specs: usize, records: impl Iterator<Item = &'r Option<usize>>) -> Self {
        let mut t = RaceTally {
            trials: 0,
            censored: 0,
            hits: vec![0; n_specs],
        };
        for r in records {
            t.trials += 1;
            match r {
                Some(i) => t.hits[*i] += 1,
                None => t.censored += 1,
            }
        }
        t
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.censored as f64 / self.trials as f64
        }
    }

    /// Errors when the censored fraction is above `cap`.
    pub fn check_censoring(&self, cap: f64) -> Result<()> {
        let fraction = self.censored_fraction();
        if fraction > cap {
            return Err(Error::ExcessiveCensoring {
                censored: self.censored,
                trials: self.trials,
                fraction,
                cap,
            });
        }
        Ok(())
    }

    /// Frequency of spec `i` among uncensored trials.
    pub fn estimate(&self, i: usize) -> Estimate {
        Estimate::proportion(self.hits[i], self.trials, self.censored)
    }

    /// Frequency of spec `i`, refusing when censoring is above `cap`.
    pub fn estimate_checked(&self, i: usize, cap: f64) -> Result<Estimate> {
        self.check_censoring(cap)?;
        Ok(self.estimate(i))
    }
}

/// Quenched tally: every trial walks the same environment.
pub fn race_tally(env: &QuenchedEnvironment, start: &[i64], race: &Race, trials: u64, seed: u64) -> Result<RaceTally> {
    let outcomes = par_trials(trials, |t| {
        let mut m = env;
        race.run(&mut m, start, &mut trial_rng(seed, t), &mut ()).map(|r| r.which_stop)
    })?;
    Ok(RaceTally::from_records(race.specs.len(), outcomes.iter()))
}

/// Annealed tally: trial `t` samples its own environment lazily under `law`.
/// For a homogeneous law this reproduces [`race_tally`] exactly.
pub fn annealed_race_tally(law: &EnvironmentLaw, start: &[i64], race: &Race, trials: u64, seed: u64) -> Result<RaceTally> {
    let outcomes = par_trials(trials, |t| {
        let mut m = LazyEnvironment::new(law, trial_env_seed(seed, t));
        race.run(&mut m, start, &mut trial_rng(seed, t), &mut ()).map(|r| r.which_stop)
    })?;
    Ok(RaceTally::from_records(race.specs.len(), outcomes.iter()))
}

/// Result of running a walk until it leaves a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceExit {
    pub plus_face: bool,
    pub record: ExitRecord,
}

/// Runs `T_{B}` for the box and classifies the exit site. A censored walk is
/// reported with `plus_face = false`; callers must look at `record.censored`.
pub fn box_exit_face<M: Medium + ?Sized, R: Rng + ?Sized>(
    medium: &mut M,
    start: &[i64],
    bx: &BoxSpec,
    budget: u64,
    rng: &mut R,
) -> Result<FaceExit> {
    let region = bx.region();
    let race = Race::new(bx.dim(), vec![StopSpec::ExitSet(region.clone())], budget)?;
    let record = race.run(medium, start, rng, &mut ())?;
    let plus_face = !record.censored && region.classify(&record.exit_site) == Membership::BoundaryPlus;
    Ok(FaceExit { plus_face, record })
}

/// Frequency of exits through `∂⁺B` from `start`, counting censored trials
/// separately.
pub fn plus_face_frequency(
    env: &QuenchedEnvironment,
    start: &[i64],
    bx: &BoxSpec,
    trials: u64,
    budget: u64,
    seed: u64,
) -> Result<Estimate> {
    let region = bx.region();
    let race = Race::new(bx.dim(), vec![StopSpec::ExitSet(region.clone())], budget)?;
    let outcomes = par_trials(trials, |t| {
        let mut m = env;
        let r = race.run(&mut m, start, &mut trial_rng(seed, t), &mut ())?;
        Ok(match r.censored {
            true => None,
            false => Some(region.classify(&r.exit_site) == Membership::BoundaryPlus),
        })
    })?;
    let censored = outcomes.iter().filter(|o| o.is_none()).count() as u64;
    let hits = outcomes.iter().filter(|o| **o == Some(true)).count() as u64;
    Ok(Estimate::proportion(hits, trials, censored))
}

/// The `2(d−1)` lateral stopping times `σ^{±i}_{±c̃L̃_{k+1}}` for a parent box
/// at scale `k+1`.
pub fn lateral_specs(h: &ScaleHierarchy, k: usize, direction: &Direction) -> Result<Vec<StopSpec>> {
    h.check_scale(k + 1)?;
    let u = h.c_tilde * h.lt[k + 1];
    let mut specs = Vec::with_capacity(2 * (h.d - 1));
    for axis in 1..h.d {
        specs.push(StopSpec::LateralAbove {
            direction: direction.clone(),
            axis,
            level: u,
        });
        specs.push(StopSpec::LateralBelow {
            direction: direction.clone(),
            axis,
            level: -u,
        });
    }
    Ok(specs)
}

/// Outcome of one run for the lateral-exit event `ℐ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateralOutcome {
    /// Some lateral time came strictly before the exit from the parent box.
    pub occurred: bool,
    pub record: ExitRecord,
}

fn lateral_race(parent: &BoxSpec, h: &ScaleHierarchy, k: usize, budget: u64) -> Result<Race> {
    let mut specs = vec![StopSpec::ExitSet(parent.region())];
    specs.extend(lateral_specs(h, k, &parent.direction)?);
    Race::new(parent.dim(), specs, budget)
}

/// Runs a walk from `start` until it leaves `parent` (the scale-`k+1` box
/// `B_2`) or a lateral time fires. The box exit is listed first, so a lateral
/// time at the exit step itself does not count.
#[allow(clippy::too_many_arguments)]
pub fn lateral_event<M: Medium + ?Sized, R: Rng + ?Sized, O: Observer + ?Sized>(
    medium: &mut M,
    start: &[i64],
    parent: &BoxSpec,
    h: &ScaleHierarchy,
    k: usize,
    budget: u64,
    rng: &mut R,
    observer: &mut O,
) -> Result<LateralOutcome> {
    let race = lateral_race(parent, h, k, budget)?;
    let record = race.run(medium, start, rng, observer)?;
    Ok(LateralOutcome {
        occurred: matches!(record.which_stop, Some(i) if i > 0),
        record,
    })
}

/// `ℐ_k` evaluated on a recorded path. Always false in `d = 1`.
pub fn lateral_event_indicator(trace: &Trace, parent: &BoxSpec, h: &ScaleHierarchy, k: usize) -> Result<bool> {
    let mut specs = vec![StopSpec::ExitSet(parent.region())];
    specs.extend(lateral_specs(h, k, &parent.direction)?);
    Ok(matches!(first_trigger(&trace.positions(), &specs), Some((i, _)) if i > 0))
}

/// Empirical mean of `X_n / n` with per-coordinate standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    pub n_steps: u64,
    pub trials: u64,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl VelocityEstimate {
    fn from_endpoints(n_steps: u64, start: &[i64], ends: &[Vec<i64>]) -> Self {
        let d = start.len();
        let mut mean = Vec::with_capacity(d);
        let mut stderr = Vec::with_capacity(d);
        for i in 0..d {
            let v: Vec<f64> = ends.iter().map(|e| (e[i] - start[i]) as f64 / n_steps as f64).collect();
            let (m, s) = mean_stderr(&v);
            mean.push(m);
            stderr.push(s);
        }
        VelocityEstimate {
            n_steps,
            trials: ends.len() as u64,
            mean,
            stderr,
        }
    }

    /// `v·ℓ` with its standard error, treating coordinates as independent
    /// only when `ℓ` is a coordinate axis.
    pub fn along(&self, axis: usize) -> Estimate {
        Estimate {
            estimate: self.mean[axis],
            stderr: self.stderr[axis],
            trials: self.trials,
            censored: 0,
        }
    }
}

fn check_velocity_args(n_steps: u64, trials: u64) -> Result<()> {
    if n_steps == 0 || trials == 0 {
        return Err(Error::InvalidParams("velocity needs n_steps ≥ 1 and trials ≥ 1".into()));
    }
    Ok(())
}

/// Velocity in one fixed environment. Errors if a walk leaves the window.
pub fn velocity_quenched(env: &QuenchedEnvironment, start: &[i64], n_steps: u64, trials: u64, seed: u64) -> Result<VelocityEstimate> {
    check_velocity_args(n_steps, trials)?;
    let race = Race::new(env.dim(), Vec::new(), n_steps)?;
    let ends = par_trials(trials, |t| {
        let mut m = env;
        race.run(&mut m, start, &mut trial_rng(seed, t), &mut ()).map(|r| r.exit_site)
    })?;
    Ok(VelocityEstimate::from_endpoints(n_steps, start, &ends))
}

/// Annealed velocity: a fresh lazily sampled environment per trial, so walks
/// never run out of environment.
pub fn velocity_annealed(law: &EnvironmentLaw, n_steps: u64, trials: u64, seed: u64) -> Result<VelocityEstimate> {
    check_velocity_args(n_steps, trials)?;
    let d = law.dim();
    let start = vec![0i64; d];
    let race = Race::new(d, Vec::new(), n_steps)?;
    let ends = par_trials(trials, |t| {
        let mut m = LazyEnvironment::new(law, trial_env_seed(seed, t));
        race.run(&mut m, &start, &mut trial_rng(seed, t), &mut ()).map(|r| r.exit_site)
    })?;
    Ok(VelocityEstimate::from_endpoints(n_steps, &start, &ends))
}

/// A recorded path, stored flat.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    d: usize,
    flat: Vec<i64>,
}

impl Trace {
    pub fn new(d: usize) -> Self {
        Trace { d, flat: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.flat.len().checked_div(self.d).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn at(&self, n: usize) -> &[i64] {
        &self.flat[n * self.d..(n + 1) * self.d]
    }

    pub fn positions(&self) -> Vec<Vec<i64>> {
        self.flat.chunks(self.d.max(1)).map(<[i64]>::to_vec).collect()
    }

    /// Consecutive positions differ by exactly one signed unit vector.
    pub fn is_valid_path(&self) -> bool {
        (1..self.len()).all(|n| {
            let l1: i64 = self.at(n).iter().zip(self.at(n - 1)).map(|(a, b)| (a - b).abs()).sum();
            l1 == 1
        })
    }

    /// Last step at which `pred` holds. This is a random time, not a stopping
    /// time, so it is only available after the fact.
    pub fn last_visit(&self, mut pred: impl FnMut(&[i64]) -> bool) -> Option<usize> {
        (0..self.len()).rev().find(|&n| pred(self.at(n)))
    }

    /// `S_L^ℓ = sup{n ≥ 0 : (X_n − X_0)·ℓ ≥ 0}`.
    pub fn last_nonnegative_time(&self, ell: &[f64]) -> Option<usize> {
        if self.is_empty() {
            return None;
        }
        let x0 = dot(self.at(0), ell);
        self.last_visit(|x| dot(x, ell) - x0 >= 0.0)
    }

    /// CSV with header `step,x1,…,xd`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.d).map(|i| format!("x{i}")).collect();
        writeln!(w, "step,{}", header.join(","))?;
        for n in 0..self.len() {
            let row: Vec<String> = self.at(n).iter().map(i64::to_string).collect();
            writeln!(w, "{n},{}", row.join(","))?;
        }
        Ok(())
    }
}

impl Observer for Trace {
    fn observe(&mut self, _step: u64, site: &[i64]) {
        if self.d == 0 {
            self.d = site.len();
        }
        debug_assert!(
            self.is_empty() || {
                let prev = &self.flat[self.flat.len() - self.d..];
                prev.iter().zip(site).map(|(a, b)| (a - b).abs()).sum::<i64>() == 1
            },
            "walk moved by more than one unit step"
        );
        self.flat.extend_from_slice(site);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvParams, Window};
    use crate::geometry::{make_hierarchy, BoxKind};
    use proptest::prelude::*;

    fn ruin_right(rho: f64, a: i32, b: i32) -> f64 {
        // start a steps above the lower barrier on an interval of length b
        (1.0 - rho.powi(a)) / (1.0 - rho.powi(b))
    }

    fn homog_1d(p: f64, lo: i64, hi: i64) -> QuenchedEnvironment {
        let n = (hi - lo + 1) as usize;
        QuenchedEnvironment::one_dim(0.005, lo, &vec![p; n]).unwrap()
    }

    /// Hides the threshold table so races take the general loop.
    struct Opaque<'a>(&'a QuenchedEnvironment);

    impl Medium for Opaque<'_> {
        fn dim(&self) -> usize {
            self.0.dim()
        }

        fn pick(&mut self, site: &[i64], u: u64) -> Option<usize> {
            let mut m = self.0;
            m.pick(site, u)
        }
    }

    #[test]
    fn line_loop_matches_general_loop() {
        let law = EnvironmentLaw::dirichlet(EnvParams::new(1, 0.05).unwrap(), vec![2.0, 2.0]).unwrap();
        let env = crate::env::sample_environment(&law, &Window::interval(-12, 12).unwrap(), 3).unwrap();
        let races = [
            Race::new(
                1,
                vec![StopSpec::below(&[1.0], -10.0), StopSpec::above(&[1.0], 9.5)],
                DEFAULT_BUDGET,
            )
            .unwrap(),
            // overlapping levels fire at step 0, ties go to the first spec
            Race::new(1, vec![StopSpec::above(&[1.0], -1.0), StopSpec::below(&[1.0], 0.0)], DEFAULT_BUDGET).unwrap(),
            Race::new(1, vec![StopSpec::above(&[-1.0], 7.0), StopSpec::above(&[1.0], 11.0)], 40).unwrap(),
            Race::new(
                1,
                vec![StopSpec::EnterSet {
                    region: BoxSpec::slab(3.0, &Direction::e1(1)).unwrap().region(),
                    strict: true,
                }],
                500,
            )
            .unwrap(),
        ];
        for race in &races {
            for t in 0..300 {
                let mut fast = &env;
                let a = race.run(&mut fast, &[2], &mut trial_rng(1, t), &mut ());
                let b = race.run(&mut Opaque(&env), &[2], &mut trial_rng(1, t), &mut ());
                assert_eq!(a.ok(), b.ok());
            }
        }
        // leaving the window is an error on both paths
        let small = homog_1d(0.5, -3, 3);
        let race = Race::new(1, vec![StopSpec::above(&[1.0], 50.0)], DEFAULT_BUDGET).unwrap();
        let mut fast = &small;
        assert!(matches!(
            race.run(&mut fast, &[0], &mut trial_rng(0, 0), &mut ()),
            Err(Error::WindowUnderrun(_))
        ));
        assert!(matches!(
            race.run(&mut Opaque(&small), &[0], &mut trial_rng(0, 0), &mut ()),
            Err(Error::WindowUnderrun(_))
        ));
    }

    #[test]
    fn strongly_biased_race_matches_ruin() {
        let kappa = 0.01;
        let env = QuenchedEnvironment::one_dim(kappa, -5, &[1.0 - kappa; 11]).unwrap();
        let race = Race::new(1, vec![StopSpec::below(&[1.0], -5.0), StopSpec::above(&[1.0], 5.0)], DEFAULT_BUDGET).unwrap();
        let tally = race_tally(&env, &[0], &race, 100_000, 11).unwrap();
        let rho = kappa / (1.0 - kappa);
        let expect = ruin_right(rho, 5, 10);
        assert_eq!(tally.censored, 0);
        assert!(tally.estimate(1).agrees_with(expect, 3.0), "{:?} vs {expect}", tally.estimate(1));
    }

    #[test]
    fn symmetric_race_is_fair() {
        let env = homog_1d(0.5, -8, 8);
        let race = Race::new(1, vec![StopSpec::below(&[1.0], -8.0), StopSpec::above(&[1.0], 8.0)], DEFAULT_BUDGET).unwrap();
        let tally = race_tally(&env, &[0], &race, 20_000, 3).unwrap();
        assert!(tally.estimate(0).agrees_with(0.5, 3.0));
        assert_eq!(tally.hits[0] + tally.hits[1], 20_000);
    }

    #[test]
    fn already_satisfied_spec_fires_at_step_zero() {
        let env = homog_1d(0.5, -3, 3);
        let mut m = &env;
        let r = run_race(&mut m, &[2], &[StopSpec::above(&[1.0], 0.0)], 10, &mut trial_rng(0, 0)).unwrap();
        assert_eq!(r.which_stop, Some(0));
        assert_eq!(r.steps, 0);
        assert_eq!(r.exit_site, vec![2]);
    }

    #[test]
    fn ties_go_to_list_order() {
        let env = homog_1d(0.5, -3, 3);
        let mut m = &env;
        let specs = [StopSpec::below(&[1.0], 5.0), StopSpec::above(&[1.0], 0.0)];
        let r = run_race(&mut m, &[0], &specs, 10, &mut trial_rng(0, 0)).unwrap();
        assert_eq!(r.which_stop, Some(0));
    }

    #[test]
    fn budget_exhaustion_is_censored() {
        let env = homog_1d(0.5, -100, 100);
        let mut m = &env;
        let r = run_race(&mut m, &[0], &[StopSpec::above(&[1.0], 50.0)], 3, &mut trial_rng(0, 0)).unwrap();
        assert!(r.censored);
        assert_eq!(r.which_stop, None);
        assert_eq!(r.steps, 3);
        assert!(Race::new(1, vec![], 0).is_err());
    }

    #[test]
    fn leaving_the_window_is_an_error() {
        let env = homog_1d(0.9, -2, 2);
        let mut m = &env;
        let err = run_race(&mut m, &[0], &[StopSpec::above(&[1.0], 50.0)], 1000, &mut trial_rng(0, 0)).unwrap_err();
        assert!(matches!(err, Error::WindowUnderrun(_)));
    }

    #[test]
    fn censoring_cap_is_enforced() {
        let t = RaceTally {
            trials: 1000,
            censored: 2,
            hits: vec![998],
        };
        assert!(t.estimate_checked(0, DEFAULT_CENSOR_CAP).is_err());
        assert!(t.estimate_checked(0, 0.01).is_ok());
    }

    #[test]
    fn strict_entry_skips_step_zero() {
        let env = homog_1d(0.5, -20, 20);
        let region = BoxSpec::slab(1.0, &Direction::e1(1)).unwrap().region();
        assert!(region.contains(&[0]));
        let mut m = &env;
        let mut trace = Trace::new(1);
        let race = Race::new(1, vec![StopSpec::EnterSet { region, strict: true }], 10_000).unwrap();
        let r = race.run(&mut m, &[0], &mut trial_rng(4, 0), &mut trace).unwrap();
        assert_eq!(r.which_stop, Some(0));
        assert!(r.steps >= 2, "return to the origin takes at least two steps");
        assert_eq!(r.exit_site, vec![0]);
    }

    #[test]
    fn plus_face_for_strong_drift_matches_exact() {
        let env = homog_1d(0.99, -12, 13);
        let bx = BoxSpec::with_lengths(BoxKind::B2, vec![0.0], 11.0, 1.0, 1.0, &Direction::e1(1)).unwrap();
        let est = plus_face_frequency(&env, &[0], &bx, 10_000, DEFAULT_BUDGET, 5).unwrap();
        // exit points are -11 and 12
        let exact = 1.0 - crate::oned::exit_left_exact(&env, -11, 12, 0).unwrap();
        assert!(est.estimate >= 0.99);
        assert!(est.agrees_with(exact, 3.0));
    }

    #[test]
    fn plus_face_symmetric_is_harmonic() {
        let l = 11.0;
        let env = homog_1d(0.5, -12, 13);
        let bx = BoxSpec::with_lengths(BoxKind::B2, vec![0.0], l, 1.0, 1.0, &Direction::e1(1)).unwrap();
        let est = plus_face_frequency(&env, &[0], &bx, 20_000, DEFAULT_BUDGET, 8).unwrap();
        // ruin from 0 on [-11, 12]
        let exact = 11.0 / 23.0;
        assert!((exact - l / ((2.0 + 1.0 / 11.0) * l)).abs() < 1e-12);
        assert!(est.agrees_with(exact, 3.0), "{est:?}");
    }

    #[test]
    fn start_on_plus_face_exits_immediately() {
        let env = homog_1d(0.5, -12, 13);
        let bx = BoxSpec::with_lengths(BoxKind::B2, vec![0.0], 11.0, 1.0, 1.0, &Direction::e1(1)).unwrap();
        let mut m = &env;
        let f = box_exit_face(&mut m, &[12], &bx, 100, &mut trial_rng(0, 0)).unwrap();
        assert!(f.plus_face);
        assert_eq!(f.record.steps, 0);
    }

    #[test]
    fn velocity_of_homogeneous_drift() {
        let law = EnvironmentLaw::one_dim_homogeneous(0.05, 0.9).unwrap();
        let v = velocity_annealed(&law, 10_000, 200, 1).unwrap();
        assert!(v.along(0).agrees_with(0.8, 3.0), "{v:?}");
        let sym = EnvironmentLaw::one_dim_homogeneous(0.05, 0.5).unwrap();
        let v = velocity_annealed(&sym, 10_000, 200, 1).unwrap();
        assert!(v.along(0).agrees_with(0.0, 3.0));
    }

    #[test]
    fn velocity_in_two_dimensions() {
        let p = EnvParams::new(2, 0.05).unwrap();
        let law = EnvironmentLaw::homogeneous(p, vec![0.7, 0.1, 0.1, 0.1]).unwrap();
        let v = velocity_annealed(&law, 10_000, 200, 2).unwrap();
        assert!(v.along(0).agrees_with(0.6, 3.0), "{v:?}");
        assert!(v.along(1).agrees_with(0.0, 3.0));
    }

    #[test]
    fn annealed_homogeneous_equals_quenched() {
        let law = EnvironmentLaw::one_dim_homogeneous(0.05, 0.7).unwrap();
        let env = crate::env::sample_environment(&law, &Window::interval(-400, 400).unwrap(), 0).unwrap();
        let q = velocity_quenched(&env, &[0], 300, 64, 9).unwrap();
        let a = velocity_annealed(&law, 300, 64, 9).unwrap();
        assert_eq!(q, a);
        let race = Race::new(1, vec![StopSpec::below(&[1.0], -6.0), StopSpec::above(&[1.0], 9.0)], 1000).unwrap();
        assert_eq!(
            race_tally(&env, &[0], &race, 500, 3).unwrap(),
            annealed_race_tally(&law, &[0], &race, 500, 3).unwrap()
        );
    }

    #[test]
    fn trial_results_do_not_depend_on_thread_count() {
        let law = EnvironmentLaw::one_dim_finite(0.05, &[0.3, 0.8], vec![0.5, 0.5]).unwrap();
        let race = Race::new(1, vec![StopSpec::below(&[1.0], -5.0), StopSpec::above(&[1.0], 5.0)], 10_000).unwrap();
        let run = |jobs| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .unwrap()
                .install(|| annealed_race_tally(&law, &[0], &race, 2000, 17).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn rotated_half_space() {
        let p = EnvParams::new(2, 0.1).unwrap();
        let law = EnvironmentLaw::homogeneous(p, vec![0.25; 4]).unwrap();
        let ell = Direction::new(vec![1.0, 1.0]).unwrap();
        let race = Race::new(2, vec![StopSpec::above(ell.ell(), 3.0)], 100_000).unwrap();
        let mut m = LazyEnvironment::new(&law, 0);
        let mut trace = Trace::new(2);
        let r = race.run(&mut m, &[0, 0], &mut trial_rng(1, 1), &mut trace).unwrap();
        if !r.censored {
            let x = &r.exit_site;
            assert!((x[0] + x[1]) as f64 / 2f64.sqrt() >= 3.0);
            assert_eq!(first_trigger(&trace.positions(), race.specs()), Some((0, r.steps)));
        }
    }

    #[test]
    fn lateral_is_false_in_one_dimension() {
        let h = make_hierarchy(1, 5.0, 4, 8, 1.0, 2).unwrap();
        let dir = Direction::e1(1);
        let parent = BoxSpec::at_scale(BoxKind::B2, vec![0.0], 1, &h, &dir).unwrap();
        let env = homog_1d(0.5, -40, 40);
        let mut m = &env;
        let mut trace = Trace::new(1);
        let o = lateral_event(&mut m, &[0], &parent, &h, 0, DEFAULT_BUDGET, &mut trial_rng(0, 0), &mut trace).unwrap();
        assert!(!o.occurred);
        assert!(!lateral_event_indicator(&trace, &parent, &h, 0).unwrap());
    }

    #[test]
    fn frontal_exit_is_not_lateral() {
        let h = make_hierarchy(2, 5.0, 4, 8, 1.0, 2).unwrap();
        let dir = Direction::e1(2);
        let parent = BoxSpec::at_scale(BoxKind::B2, vec![0.0, 0.0], 1, &h, &dir).unwrap();
        // near-deterministic push along e1 straight out of the front
        let p = EnvParams::new(2, 0.001).unwrap();
        let law = EnvironmentLaw::homogeneous(p, vec![0.997, 0.001, 0.001, 0.001]).unwrap();
        let mut m = LazyEnvironment::new(&law, 0);
        let o = lateral_event(&mut m, &[0, 0], &parent, &h, 0, DEFAULT_BUDGET, &mut trial_rng(0, 0), &mut ()).unwrap();
        assert!(!o.occurred);
        assert_eq!(o.record.which_stop, Some(0));
    }

    /// Exact probability that the lateral event fires within `horizon` steps,
    /// by propagating the distribution of not-yet-stopped paths.
    fn lateral_dp(weights: &[f64], parent: &BoxSpec, specs: &[StopSpec], horizon: u64) -> f64 {
        use std::collections::HashMap;
        let x0 = vec![0i64, 0];
        let mut mass: HashMap<Vec<i64>, f64> = HashMap::from([(x0.clone(), 1.0)]);
        let region = parent.region();
        let mut lateral = 0.0;
        for n in 0..=horizon {
            let mut next: HashMap<Vec<i64>, f64> = HashMap::new();
            for (x, p) in mass {
                if !region.contains(&x) {
                    continue;
                }
                if specs.iter().any(|s| s.triggered(&x0, &x, n)) {
                    lateral += p;
                    continue;
                }
                if n == horizon {
                    continue;
                }
                for (dir, w) in weights.iter().enumerate() {
                    let (axis, s) = dir_step(dir);
                    let mut y = x.clone();
                    y[axis] += s;
                    *next.entry(y).or_default() += p * w;
                }
            }
            mass = next;
        }
        lateral
    }

    #[test]
    fn lateral_event_matches_path_enumeration() {
        // c̃ chosen so the lateral level c̃L̃_1 is 2
        let h0 = make_hierarchy(2, 5.0, 4, 8, 1.0, 2).unwrap();
        let c_tilde = 2.0 / h0.lt[1];
        let h = make_hierarchy(2, 5.0, 4, 8, c_tilde, 2).unwrap();
        let dir = Direction::e1(2);
        let parent = BoxSpec::at_scale(BoxKind::B2, vec![0.0, 0.0], 1, &h, &dir).unwrap();
        let weights = [0.05, 0.05, 0.85, 0.05];
        let p = EnvParams::new(2, 0.05).unwrap();
        let law = EnvironmentLaw::homogeneous(p, weights.to_vec()).unwrap();
        let horizon = 20;
        let exact = lateral_dp(&weights, &parent, &lateral_specs(&h, 0, &dir).unwrap(), horizon);
        let trials = 20_000;
        let hits = par_trials(trials, |t| {
            let mut m = LazyEnvironment::new(&law, 0);
            lateral_event(&mut m, &[0, 0], &parent, &h, 0, horizon, &mut trial_rng(21, t), &mut ()).map(|o| o.occurred)
        })
        .unwrap()
        .into_iter()
        .filter(|b| *b)
        .count() as u64;
        let est = Estimate::proportion(hits, trials, 0);
        assert!(exact >= 0.9, "exact {exact}");
        assert!(est.estimate >= 0.9);
        assert!(est.agrees_with(exact, 3.0), "{est:?} vs {exact}");
    }

    #[test]
    fn strip_visit_stops_in_neighbouring_band() {
        let dir = Direction::e1(1);
        let strips = StripIndexer::new(&dir, 5.0, vec![0.0], vec![0.0], f64::INFINITY);
        let env = homog_1d(0.5, -30, 30);
        let spec = StopSpec::StripVisit {
            strips: strips.clone(),
            offsets: vec![-1, 1],
            truncated: false,
        };
        for t in 0..200 {
            let mut m = &env;
            let r = run_race(&mut m, &[1], std::slice::from_ref(&spec), 100_000, &mut trial_rng(2, t)).unwrap();
            let x = r.exit_site[0];
            // ℋ_{±1} consists of the sites within one step of ±5
            assert!(strips.in_strip(&[x], 1) || strips.in_strip(&[x], -1));
            assert!((x - 5).abs() <= 1 || (x + 5).abs() <= 1, "stopped at {x}");
        }
    }

    #[test]
    fn trace_post_processing() {
        let mut t = Trace::new(1);
        for (n, x) in [0i64, 1, 2, 1, 0, -1, 0, -1].iter().enumerate() {
            t.observe(n as u64, &[*x]);
        }
        assert!(t.is_valid_path());
        assert_eq!(t.last_nonnegative_time(&[1.0]), Some(6));
        assert_eq!(t.last_visit(|x| x[0] == 2), Some(2));
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.starts_with("step,x1\n0,0\n1,1\n"));
        assert_eq!(s.lines().count(), 9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn stopping_semantics_replay(seed in 0u64..10_000, lo in -6i64..0, hi in 1i64..7, p in 0.2f64..0.8) {
            let env = homog_1d(p, lo - 1, hi + 1);
            let specs = vec![StopSpec::below(&[1.0], lo as f64), StopSpec::above(&[1.0], hi as f64)];
            let race = Race::new(1, specs.clone(), 100_000).unwrap();
            let mut m = &env;
            let mut trace = Trace::new(1);
            let r = race.run(&mut m, &[0], &mut trial_rng(seed, 0), &mut trace).unwrap();
            prop_assert!(trace.is_valid_path());
            prop_assert_eq!(trace.len() as u64, r.steps + 1);
            prop_assert_eq!(first_trigger(&trace.positions(), &specs), r.which_stop.map(|i| (i, r.steps)));
        }

        #[test]
        fn lowered_axis_checks_agree_with_definition(
            x in proptest::collection::vec(-20i64..20, 2),
            level in -10.0f64..10.0,
            sign in prop_oneof![Just(1.0), Just(-1.0)],
            axis in 0usize..2,
        ) {
            let mut ell = vec![0.0; 2];
            ell[axis] = sign;
            for spec in [StopSpec::above(&ell, level), StopSpec::below(&ell, level)] {
                let c = Check::lower(&spec, &[0, 0]);
                prop_assert_eq!(c.hit(&x, 1), spec.triggered(&[0, 0], &x, 1));
            }
        }
    }
}
