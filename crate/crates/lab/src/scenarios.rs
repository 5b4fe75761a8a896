//! The scenario catalogue. Each scenario writes its artifacts and returns verdicts.

use std::sync::Arc;

use chemotaxis_core::barriers::{
    barrier_containment, envelope_check, lattice, ratio_threshold, sample_blowup_params, scan_residuals,
    BlowupSubsolution, MorreyBarrierParams, MorreyBarriers, OdeEnvelope,
};
use chemotaxis_core::dynamics::{
    blowup_localization, evolve, monotonicity_diagnostics, ordering_check, stationary_mass_pair, EvolveConfig,
    MassState, Outcome, RunReport, Trend,
};
use chemotaxis_core::gelfand::{
    asymptotic_report, density_limit, find_beta0, signal_limit, BetaSearch, ShootingConfig,
};
use chemotaxis_core::radial::{cumulative_mass, sphere_measure, Parity, Quadrature, RadialField, RadialGrid};
use chemotaxis_core::steady::{
    dichotomy_report, flux_sign_check, gelfand_triple, singular_triple, stationary_residual, DichotomyVerdict,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{GridSpec, ScenarioConfig, ScenarioKind};
use crate::output::{Artifacts, Verdict};
use crate::plot::{line_chart, Axes, Series};
use crate::LabError;

type Verdicts = Result<Vec<Verdict>, LabError>;

pub(crate) fn dispatch(cfg: &ScenarioConfig, out: &mut Artifacts) -> Verdicts {
    match cfg.scenario {
        ScenarioKind::Shoot => shoot(cfg, out),
        ScenarioKind::Dichotomy => dichotomy(cfg, out),
        ScenarioKind::StationaryVerify => stationary_verify(cfg, out),
        ScenarioKind::EvolveLambda => evolve_lambda(cfg, out),
        ScenarioKind::Theorem2Containment => containment(cfg, out),
        ScenarioKind::BarrierResiduals => barrier_residuals(cfg, out),
        ScenarioKind::ComparisonSuite => comparison_suite(cfg, out),
        ScenarioKind::EnvelopeCheck => envelope(cfg, out),
    }
}

pub fn stretched_grid(d: usize, g: &GridSpec) -> Result<Arc<RadialGrid>, LabError> {
    Ok(Arc::new(RadialGrid::stretched(d, g.intervals, g.r_max, g.refinement)?))
}

/// Trajectory rows `r, phi, phi_r, lap_phi, lap_phi_r, r4_exp_phi, r2_neg_lap_phi`.
pub fn trajectory_csv(search: &BetaSearch) -> String {
    let mut out = String::from("r,phi,phi_r,lap_phi,lap_phi_r,r4_exp_phi,r2_neg_lap_phi\n");
    for p in &search.trajectory.samples {
        let s = p.state();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.r,
            s.phi,
            s.phi_r,
            s.lap,
            s.lap_r,
            p.scaled_density(),
            p.scaled_signal()
        ));
    }
    out
}

/// Means of `r⁴e^φ` and `-r²Δφ` over samples with `r` in the window.
pub fn tail_means(search: &BetaSearch, window: (f64, f64)) -> Option<(f64, f64, usize)> {
    let pts: Vec<_> = search.trajectory.samples.iter().filter(|p| p.r() >= window.0 && p.r() <= window.1).collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    Some((
        pts.iter().map(|p| p.scaled_density()).sum::<f64>() / n,
        pts.iter().map(|p| p.scaled_signal()).sum::<f64>() / n,
        pts.len(),
    ))
}

fn shoot(cfg: &ScenarioConfig, out: &mut Artifacts) -> Verdicts {
    let d = cfg.dim();
    let opts = cfg.shoot;
    let search = find_beta0(cfg.alpha, d, &cfg.shooting())?;
    let report = asymptotic_report(&search.trajectory, search.resolved_radius)?;
    out.write("trajectory.csv", trajectory_csv(&search))?;
    out.json(
        "search.json",
        &json!({
            "alpha": search.alpha,
            "dim": search.dim,
            "beta0": search.beta0,
            "bracket": search.bracket,
            "bisections": search.history.len(),
            "indeterminate": search.indeterminate,
            "resolved_radius": search.resolved_radius,
            "termination": search.trajectory.termination,
        }),
    )?;
    out.json("asymptotics.json", &report)?;
    if cfg.plots {
        let (ku, kw) = (density_limit(d), signal_limit(d));
        let samples = &search.trajectory.samples;
        let svg = line_chart(
            &format!("Scaled profiles, d = {d}"),
            "r",
            "value / limit",
            Axes { log_x: true, log_y: false },
            &[
                Series {
                    name: "r^4 e^phi / K",
                    points: samples.iter().map(|p| (p.r(), p.scaled_density() / ku)).collect(),
                },
                Series {
                    name: "-r^2 lap phi / 4(d-2)",
                    points: samples.iter().map(|p| (p.r(), p.scaled_signal() / kw)).collect(),
                },
            ],
        );
        out.write("profiles.svg", svg)?;
    }

    let mut verdicts = Vec::new();
    match tail_means(&search, opts.tail_window) {
        None => verdicts.push(Verdict::check("tail", false, "trajectory ends before the tail window")),
        Some((mu, mw, n)) => {
            let (ku, kw) = (density_limit(d), signal_limit(d));
            let eu = (mu - ku).abs() / ku;
            let ew = (mw - kw).abs() / kw;
            verdicts.push(Verdict::check(
                "tail_density",
                eu <= opts.tail_tol,
                format!("mean r^4 e^phi = {mu:.4} over {n} samples vs {ku}: relative error {eu:.3e}"),
            ));
            verdicts.push(Verdict::check(
                "tail_signal",
                ew <= opts.tail_tol,
                format!("mean -r^2 lap phi = {mw:.4} vs {kw}: relative error {ew:.3e}"),
            ));
        }
    }
    match (report.predicted, report.fit, report.one_sided) {
        (_, _, Some(one_sided)) => verdicts.push(Verdict::check(
            "one_sided_approach",
            one_sided,
            format!("{} sign changes of r^4 e^phi - K up to r = {:.3e}", report.sign_changes, report.resolved_radius),
        )),
        (Some((tau, _)), Some(fit), _) => {
            let err = ((fit.tau - tau) / tau).abs();
            verdicts.push(Verdict::check(
                "decay_rate",
                err <= opts.fit_tol,
                format!("fitted tau {:.4} vs {tau:.4} (k {:.4}), relative error {err:.3e}", fit.tau, fit.k),
            ));
        }
        _ => verdicts.push(Verdict::inconclusive(
            "decay_rate",
            report.note.clone().unwrap_or_else(|| "no oscillation fit available".into()),
        )),
    }
    Ok(verdicts)
}

fn dichotomy(cfg: &ScenarioConfig, out: &mut Artifacts) -> Verdicts {
    let d = cfg.dim();
    let report = dichotomy_report(cfg.alpha, d, &cfg.dichotomy())?;
    out.json("dichotomy.json", &report)?;
    out.write("morrey.csv", report.profile_csv())?;
    if cfg.plots {
        if let (Some(pu), Some(pw)) = (&report.profile_u, &report.profile_w) {
            let norm = |p: &chemotaxis_core::radial::MorreyProfile, level: f64| {
                p.radii.iter().zip(&p.values).map(|(&r, &v)| (r, v / level)).collect()
            };
            let svg = line_chart(
                &format!("Morrey profiles over their critical levels, d = {d}"),
                "R",
                "I(R) / level",
                Axes { log_x: true, log_y: false },
                &[
                    Series { name: "I_u / 8(d-2)sigma", points: norm(pu, report.level_u) },
                    Series { name: "I_w / 4 sigma", points: norm(pw, report.level_w) },
                ],
            );
            out.write("morrey.svg", svg)?;
        }
    }
    let reason = format!(
        "{:?} (expected {:?}); sup_u/L = {:.6}, sup_w/L = {:.6}, sign changes {}/{}, quadrature error {:.2e}{}",
        report.verdict,
        report.expected,
        report.sup_u / report.level_u,
        report.sup_w / report.level_w,
        report.sign_changes_u,
        report.sign_changes_w,
        report.quadrature_error,
        report.note.as_ref().map(|n| format!("; {n}")).unwrap_or_default()
    );
    Ok(vec![match report.verdict {
        DichotomyVerdict::Inconclusive => Verdict::inconclusive("dichotomy", reason),
        v => Verdict::check("dichotomy", v == report.expected, reason),
    }])
}

fn stationary_verify(cfg: &ScenarioConfig, out: &mut Artifacts) -> Verdicts {
    let opts = cfg.stationary;
    let mut verdicts = Vec::new();

    let sd = opts.singular_dim;
    let sgrid = Arc::new(RadialGrid::uniform(sd, 1000, opts.singular_window.1)?);
    let singular = stationary_residual(&singular_triple(sd, sgrid)?, opts.singular_window)?;
    verdicts.push(Verdict::check(
        "singular_residual",
        singular.analytic && singular.worst_sup() <= opts.singular_tol,
        format!("d = {sd}: worst relative residual {:.3e} on {:?}", singular.worst_sup(), opts.singular_window),
    ));

    let d = cfg.dim();
    let shooting = cfg.shooting();
    let search = find_beta0(cfg.alpha, d, &shooting)?;
    let coarse_grid = stretched_grid(d, &opts.grid)?;
    let fine_grid = Arc::new(coarse_grid.refined()?);
    let coarse = gelfand_triple(cfg.alpha, search.beta0, coarse_grid, &shooting)?;
    let fine = gelfand_triple(cfg.alpha, search.beta0, fine_grid, &shooting)?;
    let rc = stationary_residual(&coarse, opts.window)?;
    let rf = stationary_residual(&fine, opts.window)?;
    let order = (rc.worst_sup() / rf.worst_sup()).log2();
    verdicts.push(Verdict::check(
        "gelfand_residual_order",
        order >= opts.min_order,
        format!(
            "worst residual {:.3e} -> {:.3e} under refinement: observed order {order:.3}",
            rc.worst_sup(),
            rf.worst_sup()
        ),
    ));
    let signs = flux_sign_check(&fine, opts.window)?;
    verdicts.push(Verdict::check(
        "flux_sign",
        signs.fraction_nonnegative == 0.0 && !signs.identically_zero,
        format!("fraction of nodes with div(u grad v) >= 0: {}", signs.fraction_nonnegative),
    ));
    verdicts.push(Verdict::check(
        "u_decreasing",
        signs.u_strictly_decreasing,
        format!("u strictly decreasing on {:?}: {}", opts.window, signs.u_strictly_decreasing),
    ));
    out.json(
        "residuals.json",
        &json!({
            "singular": singular,
            "gelfand": { "beta0": search.beta0, "coarse": rc, "fine": rf, "observed_order": order, "signs": signs },
        }),
    )?;
    let mut csv = String::from("r,u,v,w\n");
    for (i, r) in fine.u.grid().nodes().iter().enumerate() {
        csv.push_str(&format!("{},{},{},{}\n", r, fine.u.values()[i], fine.v.values()[i], fine.w.values()[i]));
    }
    out.write("gelfand_triple.csv", csv)?;
    Ok(verdicts)
}

/// The stationary mass pair at `β₀(α)` on `grid`.
pub fn stationary_pair(alpha: f64, grid: Arc<RadialGrid>, shooting: &ShootingConfig) -> Result<MassState, LabError> {
    let search = find_beta0(alpha, grid.dim(), shooting)?;
    Ok(stationary_mass_pair(alpha, search.beta0, grid, shooting)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaClass {
    Subcritical,
    Stationary,
    Supercritical,
    Mixed,
}

pub fn classify(l1: f64, l2: f64) -> LambdaClass {
    if l1 == 1.0 && l2 == 1.0 {
        LambdaClass::Stationary
    } else if l1 <= 1.0 && l2 <= 1.0 {
        LambdaClass::Subcritical
    } else if l1 > 1.0 && l2 > 1.0 {
        LambdaClass::Supercritical
    } else {
        LambdaClass::Mixed
    }
}

/// Largest `M / (λ₁ M_stat)` and `W / (λ₂ W_stat)` over a run.
pub fn mass_bound_ratio(run: &RunReport, stat: &MassState, l1: f64, l2: f64) -> (f64, f64) {
    let ratio = |a: &[f64], b: &[f64], l: f64| {
        a.iter().zip(b).filter(|(_, &s)| s > 0.0).map(|(&x, &s)| x / (l * s)).fold(0.0, f64::max)
    };
    run.snapshots.iter().fold((0.0f64, 0.0f64), |acc, s| {
        (acc.0.max(ratio(s.m.values(), stat.m.values(), l1)), acc.1.max(ratio(s.w.values(), stat.w.values(), l2)))
    })
}

fn evolve_lambda(cfg: &ScenarioConfig, out: &mut Artifacts) -> Verdicts {
    let d = cfg.dim();
    let (l1, l2) = cfg.lambdas().ok_or_else(|| LabError::Config("evolve-lambda needs lambda".into()))?;
    let opts = cfg.lambda_run;
    let shooting = cfg.shooting();
    let ecfg = cfg.evolve();
    let grid = stretched_grid(d, &cfg.grid)?;
    let stat = stationary_pair(cfg.alpha, grid, &shooting)?;
    let run = evolve(&stat.scaled(l1, l2)?, &ecfg)?;
    let class = classify(l1, l2);
    write_run(out, &run, cfg.plots)?;

    let mut verdicts = Vec::new();
    let mut summary = json!({ "lambda": [l1, l2], "class": class, "outcome": run.outcome, "steps": run.meta.steps });
    match class {
        LambdaClass::Subcritical | LambdaClass::Stationary => {
            verdicts.push(Verdict::check(
                "outcome",
                matches!(run.outcome, Outcome::Global { .. }),
                format!("{:?}", run.outcome),
            ));
            let (bm, bw) = mass_bound_ratio(&run, &stat, l1, l2);
            summary["mass_bound_ratio"] = json!([bm, bw]);
            verdicts.push(Verdict::check(
                "mass_bound",
                bm <= 1.0 + opts.bound_tol && bw <= 1.0 + opts.bound_tol,
                format!("max M/(lambda M_stat) = {bm:.6}, max W/(lambda W_stat) = {bw:.6}"),
            ));
            if class == LambdaClass::Subcritical {
                let mono = monotonicity_diagnostics(&run, Trend::Nonincreasing)?;
                verdicts.push(monotone_verdict(&mono));
                summary["monotonicity"] = json!({"time_m": mono.time_fraction_m, "time_w": mono.time_fraction_w});
            }
        }
        LambdaClass::Supercritical => {
            let blew = matches!(run.outcome, Outcome::Blowup { .. });
            verdicts.push(Verdict::check("outcome", blew, format!("{:?}", run.outcome)));
            if blew {
                let loc = blowup_localization(&run, opts.r_far)?;
                verdicts.push(localization_verdict(&loc));
                summary["localization"] = json!(loc);
                if opts.doubling {
                    let g2 = GridSpec { intervals: 2 * cfg.grid.intervals, r_max: 2.0 * cfg.grid.r_max, ..cfg.grid };
                    let stat2 = stationary_pair(cfg.alpha, stretched_grid(d, &g2)?, &shooting)?;
                    let run2 = evolve(&stat2.scaled(l1, l2)?, &ecfg)?;
                    let (ok, reason) = match run2.outcome {
                        Outcome::Blowup { t, .. } => {
                            let loc2 = blowup_localization(&run2, opts.r_far)?;
                            summary["doubled"] = json!({"outcome": run2.outcome, "localization": loc2});
                            (
                                loc2.localized,
                                format!(
                                    "R_max {} -> {}: t* {:.5} -> {t:.5}, far ratio {:.3e}",
                                    cfg.grid.r_max, g2.r_max, loc.t_star, loc2.ratio
                                ),
                            )
                        }
                        o => (false, format!("doubled domain gives {o:?}")),
                    };
                    verdicts.push(Verdict::check("rmax_doubling", ok, reason));
                }
            }
            let mono = monotonicity_diagnostics(&run, Trend::Nondecreasing)?;
            summary["monotonicity"] = json!({"time_m": mono.time_fraction_m, "time_w": mono.time_fraction_w});
            verdicts.push(monotone_verdict(&mono));
        }
        LambdaClass::Mixed => verdicts
            .push(Verdict::inconclusive("classification", format!("lambda = ({l1}, {l2}) straddles 1; no prediction"))),
    }
    out.json("summary.json", &summary)?;
    Ok(verdicts)
}

fn monotone_verdict(m: &chemotaxis_core::dynamics::MonotonicityReport) -> Verdict {
    Verdict::check(
        "time_monotonicity",
        m.time_fraction_m >= m.threshold && m.time_fraction_w >= m.threshold,
        format!(
            "{:?} at {:.4} (M) and {:.4} (W) of nodes, threshold {}",
            m.expected, m.time_fraction_m, m.time_fraction_w, m.threshold
        ),
    )
}

fn localization_verdict(l: &chemotaxis_core::dynamics::LocalizationReport) -> Verdict {
    Verdict::check(
        "localization",
        l.localized,
        format!(
            "t* = {:.5}: M(0) = {:.3e}, sup_(r >= {}) M = {:.3e} (ratio {:.3e}), growth exponent {:.3}",
            l.t_star, l.m_origin, l.r_far, l.far_sup, l.ratio, l.growth_exponent
        ),
    )
}

fn write_run(out: &mut Artifacts, run: &RunReport, plots: bool) -> Result<(), LabError> {
    out.write("snapshots.csv", run.snapshots_csv()?)?;
    out.write("history.csv", run.history_csv())?;
    if plots {
        let m0: Vec<(f64, f64)> = run.history.iter().map(|h| (h.t, h.m0)).collect();
        let w0: Vec<(f64, f64)> = run.history.iter().map(|h| (h.t, h.w0)).collect();
        let svg = line_chart(
            "Values at the origin",
            "t",
            "M(0,t), W(0,t)",
            Axes { log_x: false, log_y: true },
            &[Series { name: "M(0,t)", points: m0 }, Series { name: "W(0,t)", points: w0 }],
        );
        out.write("origin.svg", svg)?;
    }
    Ok(())
}

/// Densities `c_u (1+r²)^{-2}` and `c_w (1+r²)^{-1}`.
pub fn algebraic_densities(grid: &Arc<RadialGrid>, cu: f64, cw: f64) -> Result<(RadialField, RadialField), LabError> {
    let u = RadialField::from_fn(grid.clone(), Parity::Even, |r| cu * (1.0 + r * r).powi(-2))?;
    let w = RadialField::from_fn(grid.clone(), Parity::Even, |r| cw / (1.0 + r * r))?;
    Ok((u, w))
}

pub fn masses(u: &RadialField, w: &RadialField) -> Result<MassState, LabError> {
    Ok(MassState::new(cumulative_mass(u, Quadrature::PowerLaw)?, cumulative_mass(w, Quadrature::PowerLaw)?, 0.0)?)
}

/// Algebraic data whose discrete Morrey norms `sup R⁴ M(R)` and `sup R² W(R)` equal
/// `fraction · 6(d-2)` and `fraction · 3` (in units of `σ_d`).
pub fn containment_data(grid: &Arc<RadialGrid>, fraction: f64) -> Result<MassState, LabError> {
    let d = grid.dim() as f64;
    let unit = masses(&algebraic_densities(grid, 1.0, 1.0)?.0, &algebraic_densities(grid, 1.0, 1.0)?.1)?;
    let r = grid.nodes();
    let norm = |m: &[f64], s: i32| (1..r.len()).map(|i| r[i].powi(s) * m[i]).fold(0.0, f64::max);
    let cu = fraction * 6.0 * (d - 2.0) / norm(unit.m.values(), 4);
    let cw = fraction * 3.0 / norm(unit.w.values(), 2);
    Ok(unit.scaled(cu, cw)?)
}

/// Barrier parameters with `K` a multiple of the smallest value keeping the data under the inner branches.
pub fn containment_params(state: &MassState, opts: &crate::config::MorreySpec) -> MorreyBarrierParams {
    let grid = state.grid();
    let d = grid.dim();
    let sigma = sphere_measure(d);
    let q = d as f64 / opts.p;
    let r = grid.nodes();
    let need = (1..r.len())
        .map(|i| {
            let vol = sigma * r[i].powi(d as i32);
            let kx = vol * state.m.values()[i] / r[i].powf(d as f64 - q);
            let ky = vol * state.w.values()[i] / r[i].powf(d as f64 - q + 2.0);
            kx.max(ky)
        })
        .fold(0.0, f64::max);
    MorreyBarrierParams { dim: d, p: opts.p, k: opts.k_factor * need, eps: opts.eps, eps_prime: opts.eps_prime }
}

fn containment(cfg: &ScenarioConfig, out: &mut Artifacts) -> Verdicts {
    let d = cfg.dim();
    let grid = stretched_grid(d, &cfg.grid)?;
    let data = containment_data(&grid, cfg.morrey.fraction)?;
    let params = containment_params(&data, &cfg.morrey);
    let run = evolve(&data, &cfg.evolve())?;
    let report = barrier_containment(&run, params)?;
    out.json("containment.json", &json!({ "outcome": run.outcome, "report": report }))?;
    let barriers = MorreyBarriers::new(params)?;
    let sigma = barriers.sigma;
    let mut csv = String::from("t,r,X_over_b0,Y_over_b1\n");
    for s in &run.snapshots {
        for (i, &r) in grid.nodes().iter().enumerate().skip(1) {
            let vol = sigma * r.powi(d as i32);
            csv.push_str(&format!(
                "{},{},{},{}\n",
                s.t,
                r,
                vol * s.m.values()[i] / barriers.b0(r),
                vol * s.w.values()[i] / barriers.b1(r)
            ));
        }
    }
    out.write("ratios.csv", csv)?;
    Ok(vec![
        Verdict::check("global", matches!(run.outcome, Outcome::Global { .. }), format!("{:?}", run.outcome)),
        Verdict::check(
            "containment",
            report.contained,
            format!(
                "max X/b0 = {:.6}, max Y/b1 = {:.6} over {} snapshots (exponent margin {:.3})",
                report.worst_ratio_x, report.worst_ratio_y, report.snapshots, report.exponent_margin
            ),
        ),
    ])
}

fn barrier_residuals(cfg: &ScenarioConfig, out: &mut Artifacts) -> Verdicts {
    let d = cfg.dim();
    let opts = cfg.blowup;
    let bundles = sample_blowup_params(d, opts.bundles, cfg.seed, opts.r0);
    let mut scans = Vec::with_capacity(bundles.len());
    for q in &bundles {
        let sub = BlowupSubsolution::new(*q)?;
        scans.push(scan_residuals(&sub, &lattice(q, opts.n_r, opts.n_t, opts.t_gap))?);
    }
    let first = BlowupSubsolution::new(bundles[0])?;
    let mut csv = String::from("r,t,N_f,N_g\n");
    for (r, t) in lattice(&bundles[0], opts.n_r, opts.n_t, opts.t_gap) {
        let res = first.residual(r, t)?;
        csv.push_str(&format!("{r},{t},{},{}\n", res.n_f, res.n_g));
    }
    out.write("scan_first_bundle.csv", csv)?;
    out.json("scans.json", &scans)?;
    let failing = scans.iter().filter(|s| !s.subsolution).count();
    let worst = scans.iter().map(|s| s.worst_f.max(s.worst_g)).fold(f64::NEG_INFINITY, f64::max);
    let threshold = ratio_threshold(5);
    Ok(vec![
        Verdict::check("threshold_d5", threshold == 8.0, format!("A/B threshold at d = 5 is {threshold}")),
        Verdict::check(
            "subsolution",
            failing == 0,
            format!("{failing} of {} bundles have a positive residual; worst N/scale = {worst:.3e}", scans.len()),
        ),
    ])
}

/// Random ordered data `A <= B` built from rapidly decaying, radially nonincreasing
/// bumps, scaled to `fraction` of the room under the stationary masses.
pub fn random_ordered_pair(
    rng: &mut ChaCha8Rng,
    stat: &MassState,
    fraction: f64,
) -> Result<(MassState, MassState), LabError> {
    let grid = stat.grid();
    let mut bump = || {
        let c = rng.gen_range(0.1..1.0);
        let s = rng.gen_range(0.5f64.ln()..3.0f64.ln()).exp();
        move |r: f64| c * (1.0 + (r / s).powi(2)).powi(-4)
    };
    let (ua, wa, ub, wb) = (bump(), bump(), bump(), bump());
    let field = |f: &dyn Fn(f64) -> f64| RadialField::from_fn(grid.clone(), Parity::Even, f);
    let a = masses(&field(&ua)?, &field(&wa)?)?;
    let b = masses(&field(&|r| ua(r) + ub(r))?, &field(&|r| wa(r) + wb(r))?)?;
    let room = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(s, m)| s / m).fold(f64::INFINITY, f64::min);
    let theta = fraction * room(stat.m.values(), b.m.values()).min(room(stat.w.values(), b.w.values()));
    Ok((a.scaled(theta, theta)?, b.scaled(theta, theta)?))
}

fn comparison_suite(cfg: &ScenarioConfig, out: &mut Artifacts) -> Verdicts {
    let d = cfg.dim();
    let opts = cfg.comparison;
    let shooting = cfg.shooting();
    let grid = stretched_grid(d, &cfg.grid)?;
    let stat = stationary_pair(cfg.alpha, grid, &shooting)?;
    let ecfg = cfg.evolve();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut csv = String::from("pair,max_violation_m,max_violation_w,tolerance,radial_fraction_u,radial_fraction_w\n");
    let mut worst_excess = f64::NEG_INFINITY;
    let mut ordered = true;
    let mut radial_min = 1.0f64;
    for k in 0..opts.pairs {
        let (a, b) = random_ordered_pair(&mut rng, &stat, opts.envelope_fraction)?;
        let (ra, rb) = (evolve(&a, &ecfg)?, evolve(&b, &ecfg)?);
        let rep = ordering_check(&ra, &rb)?;
        ordered &= rep.passed;
        worst_excess = worst_excess.max(rep.max_violation_m.max(rep.max_violation_w) - rep.tolerance);
        // Radially nonincreasing data; the time trend is irrelevant here.
        let ma = monotonicity_diagnostics(&ra, Trend::Nonincreasing)?;
        let mb = monotonicity_diagnostics(&rb, Trend::Nonincreasing)?;
        let fu = ma.radial_fraction_u.min(mb.radial_fraction_u);
        let fw = ma.radial_fraction_w.min(mb.radial_fraction_w);
        radial_min = radial_min.min(fu).min(fw);
        csv.push_str(&format!("{k},{},{},{},{fu},{fw}\n", rep.max_violation_m, rep.max_violation_w, rep.tolerance));
    }
    out.write("pairs.csv", csv)?;

    let sub = evolve(&stat.scaled(0.5, 0.5)?, &EvolveConfig { t_end: 1.0, ..ecfg.clone() })?;
    let sup = evolve(&stat.scaled(1.5, 1.5)?, &EvolveConfig { t_end: 50.0, ..ecfg.clone() })?;
    let m_sub = monotonicity_diagnostics(&sub, Trend::Nonincreasing)?;
    let m_sup = monotonicity_diagnostics(&sup, Trend::Nondecreasing)?;
    out.json("monotonicity.json", &json!({ "lambda_0_5": m_sub, "lambda_1_5": m_sup }))?;
    let threshold = m_sub.threshold;
    Ok(vec![
        Verdict::check(
            "ordering",
            ordered,
            format!("{} pairs; worst violation minus tolerance {worst_excess:.3e}", opts.pairs),
        ),
        Verdict::check(
            "radial_monotonicity",
            radial_min >= threshold,
            format!("smallest fraction of radially nonincreasing (u, w) pairs {radial_min:.4}"),
        ),
        {
            let mut v = monotone_verdict(&m_sub);
            v.name = "time_monotonicity_lambda_0.5".into();
            v
        },
        {
            let mut v = monotone_verdict(&m_sup);
            v.name = "time_monotonicity_lambda_1.5".into();
            v
        },
    ])
}

/// `u₀ = M(1+r²)^{-2}`, `w₀ = sqrt(2M)(1+r²)^{-1}`.
pub fn envelope_data(grid: &Arc<RadialGrid>, m0: f64) -> Result<MassState, LabError> {
    let (u, w) = algebraic_densities(grid, m0, (2.0 * m0).sqrt())?;
    masses(&u, &w)
}

fn envelope(cfg: &ScenarioConfig, out: &mut Artifacts) -> Verdicts {
    let d = cfg.dim();
    let opts = cfg.envelope;
    let env = OdeEnvelope::new(opts.m0)?;
    let n = opts.identity_samples.max(1);
    let mut worst_identity = 0.0f64;
    for i in 0..n {
        let t = env.guaranteed_time() * i as f64 / n as f64;
        let (a, b) = env.identity_residuals(t)?;
        worst_identity = worst_identity.max(a).max(b);
    }
    let grid = stretched_grid(d, &cfg.grid)?;
    let run = evolve(&envelope_data(&grid, opts.m0)?, &cfg.evolve())?;
    let report = envelope_check(&run, &env, opts.t_max)?;
    let mut csv = String::from("t,sup_u,F,sup_w,G\n");
    for s in run.snapshots.iter().filter(|s| s.t <= opts.t_max) {
        let (u, w) = s.densities()?;
        csv.push_str(&format!("{},{},{},{},{}\n", s.t, u.sup(), env.f(s.t)?, w.sup(), env.g(s.t)?));
    }
    out.write("envelope.csv", csv)?;
    out.json("envelope.json", &json!({ "report": report, "identity_residual": worst_identity }))?;
    Ok(vec![
        Verdict::check(
            "ode_identities",
            worst_identity <= opts.identity_tol,
            format!("max relative residual of F' = FG, G' = F over {n} times: {worst_identity:.3e}"),
        ),
        Verdict::check(
            "density_envelope",
            report.passed,
            format!(
                "max sup u / F = {:.8}, max sup w / G = {:.8} over {} snapshots",
                report.worst_ratio_u, report.worst_ratio_w, report.snapshots
            ),
        ),
    ])
}
