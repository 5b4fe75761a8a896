//! Checks against independent computations and published constants.

use std::sync::Arc;

use approx::assert_relative_eq;
use chemotaxis_core::barriers::{ratio_threshold, BlowupBarrierParams, BlowupSubsolution, OdeEnvelope};
use chemotaxis_core::dynamics::{evolve, EvolveConfig, MassState, SnapshotSchedule};
use chemotaxis_core::gelfand::{density_limit, find_beta0, linearized_oscillation, signal_limit, ShootingConfig};
use chemotaxis_core::radial::{cumulative_mass, sphere_measure, Parity, Quadrature, RadialField, RadialGrid};

/// Fixed-step RK4 shooting for `Δ²φ = e^φ` in `s = log r`, with state
/// `(φ, rφ', r²Δφ, r³(Δφ)')`. Returns true when the shot overshoots the singular profile.
fn overshoots(d: usize, beta: f64) -> bool {
    let dd = d as f64;
    let k = 8.0 * (dd - 4.0) * (dd - 2.0);
    let f = |s: f64, y: [f64; 4]| {
        let r4 = (4.0 * s).exp();
        [y[1], y[2] - (dd - 2.0) * y[1], 2.0 * y[2] + y[3], r4 * y[0].exp() - (dd - 4.0) * y[3]]
    };
    let r0: f64 = 1e-3;
    let (a2, a4) = (beta / (2.0 * dd), 1.0 / (8.0 * dd * (dd + 2.0)));
    let r2 = r0 * r0;
    let mut y = [
        a2 * r2 + a4 * r2 * r2,
        2.0 * a2 * r2 + 4.0 * a4 * r2 * r2,
        r2 * (2.0 * dd * a2 + 4.0 * (dd + 2.0) * a4 * r2),
        r2 * r2 * 8.0 * (dd + 2.0) * a4,
    ];
    let h = 2e-3;
    let mut s = r0.ln();
    let mut arrived = false;
    while s < 20.0 {
        let add =
            |y: [f64; 4], k: [f64; 4], c: f64| [y[0] + c * k[0], y[1] + c * k[1], y[2] + c * k[2], y[3] + c * k[3]];
        let k1 = f(s, y);
        let k2 = f(s + h / 2.0, add(y, k1, h / 2.0));
        let k3 = f(s + h / 2.0, add(y, k2, h / 2.0));
        let k4 = f(s + h, add(y, k3, h));
        for i in 0..4 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        s += h;
        let dev = y[0] + 4.0 * s - k.ln();
        if !arrived {
            // Falling back before reaching the singular level is an undershoot.
            if s > 0.0 && y[1] + 4.0 < 0.0 {
                return false;
            }
            arrived = dev.abs() < 0.3;
        } else if dev.abs() > 1.5 {
            return dev > 0.0;
        }
    }
    panic!("shot with beta = {beta} never left the singular profile");
}

fn oracle_beta0(d: usize) -> f64 {
    let scale = 4.0 * d as f64;
    let (mut lo, mut hi) = (-scale, -1e-4 * scale);
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        if overshoots(d, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn beta0_matches_independent_shooting() {
    for d in [9, 13] {
        let search = find_beta0(1.0, d, &ShootingConfig::default()).unwrap();
        let oracle = oracle_beta0(d);
        assert!((search.beta0 - oracle).abs() < 1e-7, "d = {d}: {} vs oracle {oracle}", search.beta0);
    }
}

#[test]
fn beta0_follows_gelfand_scaling() {
    // φ(λr) + 4 log λ is again a solution, so β₀(λ⁴) = λ² β₀(1).
    let cfg = ShootingConfig::default();
    let b1 = find_beta0(1.0, 13, &cfg).unwrap().beta0;
    let b16 = find_beta0(16.0, 13, &cfg).unwrap().beta0;
    assert_relative_eq!(b16, 4.0 * b1, max_relative = 1e-8);
}

#[test]
fn singular_constants() {
    assert_eq!(density_limit(13), 792.0);
    assert_eq!(signal_limit(13), 44.0);
    assert_eq!(density_limit(9), 280.0);
}

/// `μ(μ + d - 2)(μ - 2)(μ + d - 4) = 8(d-4)(d-2)` at the linearized modes.
#[test]
fn oscillation_modes_solve_characteristic_equation() {
    for d in 5..=12 {
        let (tau, k) = linearized_oscillation(d).unwrap();
        let dd = d as f64;
        let mul = |a: (f64, f64), b: (f64, f64)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
        let mu = (tau, k);
        let p = mul(mul(mu, (tau + dd - 2.0, k)), mul((tau - 2.0, k), (tau + dd - 4.0, k)));
        let target = density_limit(d);
        assert!((p.0 - target).abs() < 1e-9 * target && p.1.abs() < 1e-9 * target, "d = {d}: {p:?}");
        assert_relative_eq!(tau, -(dd - 4.0) / 2.0);
    }
    assert!(linearized_oscillation(13).is_none());
    let (tau, k) = linearized_oscillation(9).unwrap();
    assert_eq!(tau, -2.5);
    assert!((k - 2.211).abs() < 1e-3);
}

#[test]
fn sphere_measure_recursion() {
    for d in 1..30 {
        assert_relative_eq!(
            sphere_measure(d + 2),
            2.0 * std::f64::consts::PI / d as f64 * sphere_measure(d),
            max_relative = 1e-14
        );
    }
}

/// Small data evolve by the heat equation in `d + 2` dimensions: a Gaussian
/// density keeps its shape and `M(0,t) = ε (1+4t)^{-d/2} / d`.
#[test]
fn small_data_follow_heat_kernel() {
    let d = 7;
    let eps = 1e-9;
    let grid = Arc::new(RadialGrid::uniform(d, 800, 12.0).unwrap());
    let u = RadialField::from_fn(grid.clone(), Parity::Even, |r| eps * (-r * r).exp()).unwrap();
    let zero = RadialField::from_fn(grid.clone(), Parity::Even, |_| 0.0).unwrap();
    let m = cumulative_mass(&u, Quadrature::PowerLaw).unwrap();
    let w = cumulative_mass(&zero, Quadrature::PowerLaw).unwrap();
    let cfg = EvolveConfig {
        t_end: 0.2,
        dt_cap: 1e-5,
        snapshots: SnapshotSchedule::Times { times: vec![0.1, 0.2] },
        ..Default::default()
    };
    let run = evolve(&MassState::new(m, w, 0.0).unwrap(), &cfg).unwrap();
    for s in run.snapshots.iter().filter(|s| s.t > 0.0) {
        let exact = eps * (1.0 + 4.0 * s.t).powf(-(d as f64) / 2.0) / d as f64;
        assert_relative_eq!(s.m.values()[0], exact, max_relative = 1e-3);
    }
}

#[test]
fn envelope_at_m0_2() {
    let env = OdeEnvelope::new(2.0).unwrap();
    assert_eq!(env.guaranteed_time(), 0.5);
    for t in [0.0, 0.1, 0.25, 0.5, 0.9] {
        assert_relative_eq!(env.f(t).unwrap(), 2.0 / (1.0 - t).powi(2), max_relative = 1e-14);
        assert_relative_eq!(env.g(t).unwrap(), 2.0 / (1.0 - t), max_relative = 1e-14);
    }
}

#[test]
fn threshold_at_d5_is_eight() {
    assert_eq!(ratio_threshold(5), 8.0);
}

/// At an admissible point the `r⁶` term `2Akτ(2d-7)` of the expanded numerator
/// makes `N_f` positive; 692.8 is the hand evaluation at `r = τ = 1`.
#[test]
fn subsolution_residual_positive_at_admissible_point() {
    let q = BlowupBarrierParams { dim: 5, a: 410.0, b: 4.1, k: 0.15, t0: 0.0, r0: 5.0 };
    let res = BlowupSubsolution::new(q).unwrap().residual(1.0, 0.0).unwrap();
    assert_relative_eq!(res.n_f, 692.8, max_relative = 1e-3);
}
