//! Simulation against closed forms, through the public API only.

use rwre_core::conditions::{estimate_slab_curve, Answer, ConditionSpec, ConditionVariant, EstimatorOpts};
use rwre_core::env::{sample_environment, EnvParams, EnvironmentLaw, MixingParams, Window};
use rwre_core::geometry::{make_hierarchy, Direction};
use rwre_core::oned::{annealed_exit_left, exit_left_exact, AnnealedOpts};
use rwre_core::renorm::{cascade_experiment, CascadeOpts, Marking, Scale0Opts};
use rwre_core::rng;
use rwre_core::walk::{annealed_race_tally, race_tally, velocity_annealed, Race, StopSpec, DEFAULT_BUDGET};

/// Ruin from `start` for a walk with up-probability `a`: the chance of reaching
/// `lo` before `hi`.
fn ruin(a: f64, lo: i64, hi: i64, start: i64) -> f64 {
    let r = (1.0 - a) / a;
    let (i, n) = ((start - lo) as i32, (hi - lo) as i32);
    if (r - 1.0).abs() < 1e-12 {
        return 1.0 - i as f64 / n as f64;
    }
    (r.powi(i) - r.powi(n)) / (1.0 - r.powi(n))
}

#[test]
fn two_dimensional_walk_projects_onto_a_ruin_chain() {
    // with weights (a, b, c, c) the first coordinate moves right w.p. a/(a+b)
    // whenever it moves at all
    let w = vec![0.4, 0.2, 0.2, 0.2];
    let law = EnvironmentLaw::homogeneous(EnvParams::new(2, 0.05).unwrap(), w.clone()).unwrap();
    let race = Race::new(
        2,
        vec![StopSpec::below(&[1.0, 0.0], -4.0), StopSpec::above(&[1.0, 0.0], 6.0)],
        DEFAULT_BUDGET,
    )
    .unwrap();
    let tally = annealed_race_tally(&law, &[0, 0], &race, 40_000, 9).unwrap();
    let expect = ruin(w[0] / (w[0] + w[1]), -4, 6, 0);
    assert_eq!(tally.censored, 0);
    assert!(tally.estimate(0).agrees_with(expect, 4.0), "{:?} vs {expect}", tally.estimate(0));
}

#[test]
fn quenched_tally_matches_exact_exit_off_centre() {
    let law = EnvironmentLaw::dirichlet(EnvParams::new(1, 0.05).unwrap(), vec![3.0, 2.0]).unwrap();
    let env = sample_environment(&law, &Window::interval(-10, 10).unwrap(), 21).unwrap();
    for (lo, hi, start) in [(-7, 3, 0), (-2, 9, 4), (-9, -1, -5)] {
        let race = Race::new(
            1,
            vec![StopSpec::below(&[1.0], lo as f64), StopSpec::above(&[1.0], hi as f64)],
            DEFAULT_BUDGET,
        )
        .unwrap();
        let tally = race_tally(&env, &[start], &race, 30_000, 4).unwrap();
        let exact = exit_left_exact(&env, lo, hi, start).unwrap();
        assert!(
            tally.estimate(0).agrees_with(exact, 4.0),
            "[{lo},{hi}] from {start}: {:?} vs {exact}",
            tally.estimate(0)
        );
    }
}

#[test]
fn annealed_tally_matches_enumerated_annealed_exit() {
    let law = EnvironmentLaw::one_dim_finite(0.02, &[0.3, 0.8], vec![0.4, 0.6]).unwrap();
    let exact = annealed_exit_left(&law, -5, 5, 0, &AnnealedOpts::default()).unwrap();
    let race = Race::new(1, vec![StopSpec::below(&[1.0], -5.0), StopSpec::above(&[1.0], 5.0)], DEFAULT_BUDGET).unwrap();
    let tally = annealed_race_tally(&law, &[0], &race, 40_000, 13).unwrap();
    assert_eq!(exact.stderr, 0.0);
    assert!(
        tally.estimate(0).agrees_with(exact.p, 4.0),
        "{:?} vs {}",
        tally.estimate(0),
        exact.p
    );
}

#[test]
fn homogeneous_velocity_is_the_drift() {
    let w = vec![0.5, 0.1, 0.25, 0.15];
    let law = EnvironmentLaw::homogeneous(EnvParams::new(2, 0.05).unwrap(), w.clone()).unwrap();
    let v = velocity_annealed(&law, 200, 4000, 2).unwrap();
    for (axis, drift) in [(0, w[0] - w[1]), (1, w[2] - w[3])] {
        assert!(v.along(axis).agrees_with(drift, 4.0), "axis {axis}: {:?} vs {drift}", v.along(axis));
    }
}

#[test]
fn slab_curve_of_a_homogeneous_law_follows_ruin() {
    let law = EnvironmentLaw::one_dim_homogeneous(0.01, 0.7).unwrap();
    let spec = ConditionSpec::new(ConditionVariant::StretchT { gamma: 1.0 }, Direction::e1(1), 1.0).unwrap();
    let fit = estimate_slab_curve(&law, &spec, &[2.0, 4.0, 6.0, 8.0], &EstimatorOpts::default()).unwrap();
    for pt in &fit.points {
        let l = pt.l as i64;
        assert!(pt.exact);
        assert!(
            (pt.p - ruin(0.7, -l, l, 0)).abs() < 1e-12,
            "L={l}: {} vs {}",
            pt.p,
            ruin(0.7, -l, l, 0)
        );
    }
    assert_eq!(fit.decays, Answer::Yes);
    // p(L) = r^L / (1 + r^L), so the least-squares slope of ln p sits a
    // little below ln(1/r) on a short grid
    let (xs, ys): (Vec<f64>, Vec<f64>) = [2i64, 4, 6, 8].iter().map(|&l| (l as f64, ruin(0.7, -l, l, 0).ln())).unzip();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let rate = fit.exponential.unwrap().rate;
    assert!((rate + slope).abs() < 1e-9, "{rate} vs {}", -slope);
}

#[test]
fn cascade_extremes_are_all_good_or_all_bad() {
    let h = make_hierarchy(1, 10.0, 4, 4, 1.0, 2).unwrap();
    for (p, want) in [(0.0, 0.0), (1.0, 1.0)] {
        let opts = CascadeOpts {
            k_max: 2,
            samples: 50,
            lambda1: None,
            mixing: MixingParams::independent(),
            scale0: Scale0Opts::default(),
            seed: rng::derive_seed(1, &[]),
            memory_cap: 1 << 28,
            z: 3.0,
        };
        let rep = cascade_experiment(&h, &Marking::Independent { p }, &opts).unwrap();
        assert!(rep.scales.iter().all(|r| r.p_bad == want), "p = {p}: {:?}", rep.scales);
    }
}
