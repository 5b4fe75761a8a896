//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest harness
//! so the lines always reach the output; exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use chemolab::config::{GridSpec, MorreySpec, ScenarioConfig, ScenarioKind};
use chemolab::scenarios::{
    containment_data, containment_params, envelope_data, mass_bound_ratio, stationary_pair, stretched_grid, tail_means,
};
use chemolab::Status;
use chemotaxis_core::barriers::{
    barrier_containment, envelope_check, lattice, ratio_threshold, sample_blowup_params, scan_residuals,
    BlowupSubsolution, OdeEnvelope,
};
use chemotaxis_core::dynamics::{blowup_localization, evolve, EvolveConfig, Outcome};
use chemotaxis_core::gelfand::{asymptotic_report, find_beta0, ShootingConfig};
use chemotaxis_core::radial::{sphere_measure, RadialGrid};
use chemotaxis_core::steady::{
    dichotomy_report, gelfand_triple, singular_triple, stationary_residual, DichotomyConfig,
};

type Criterion = Result<(bool, String), String>;
type Check = fn() -> Criterion;

fn c1_gelfand_asymptotics() -> Criterion {
    let start = Instant::now();
    let cfg = ShootingConfig { beta_tol: 1e-10, ..Default::default() };
    let search = find_beta0(1.0, 13, &cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let (mu, mw, n) = tail_means(&search, (1e2, 1e3)).ok_or("trajectory ends before r = 100")?;
    let (eu, ew) = ((mu - 792.0).abs() / 792.0, (mw - 44.0).abs() / 44.0);
    Ok((
        eu <= 0.02 && ew <= 0.02 && secs < 10.0,
        format!("beta0 = {:.10}, mean r^4 e^phi = {mu:.3} (err {eu:.2e}), mean -r^2 lap = {mw:.4} (err {ew:.2e}) over {n} samples, {secs:.2} s", search.beta0),
    ))
}

fn c2_dichotomy_13() -> Criterion {
    let r = dichotomy_report(1.0, 13, &DichotomyConfig::for_dim(13, 1.0)).map_err(|e| e.to_string())?;
    let sigma = sphere_measure(13);
    let (lu, lw) = (88.0 * sigma, 4.0 * sigma);
    let (xu, xw) = (r.sup_u / lu, r.sup_w / lw);
    let ok = xu <= 1.0 + 1e-4
        && xw <= 1.0 + 1e-4
        && xu >= 0.99
        && xw >= 0.99
        && r.sign_changes_u == 0
        && r.sign_changes_w == 0;
    Ok((
        ok,
        format!(
            "sup I_u / 88 sigma = {xu:.7}, sup I_w / 4 sigma = {xw:.7}, sign changes {}/{}, verdict {:?}",
            r.sign_changes_u, r.sign_changes_w, r.verdict
        ),
    ))
}

fn c3_dichotomy_9() -> Criterion {
    let start = Instant::now();
    let r = dichotomy_report(1.0, 9, &DichotomyConfig::for_dim(9, 1.0)).map_err(|e| e.to_string())?;
    let cfg = ShootingConfig { beta_tol: ShootingConfig::finest_beta_tol(9, 1.0), ..Default::default() };
    let search = find_beta0(1.0, 9, &cfg).map_err(|e| e.to_string())?;
    let asym = asymptotic_report(&search.trajectory, search.resolved_radius).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let level = 56.0 * sphere_measure(9);
    let excess = r.sup_u / level - 1.0;
    let tau = asym.fit.map(|f| f.tau).unwrap_or(f64::NAN);
    let tau_err = ((tau + 2.5) / 2.5).abs();
    let ok = r.density_sign_changes >= 3
        && excess >= 1e-3
        && excess >= 5.0 * r.quadrature_error
        && tau_err <= 0.15
        && secs < 30.0;
    Ok((
        ok,
        format!(
            "{} sign changes of r^4 e^phi - 280, sup I_u / 56 sigma - 1 = {excess:.3e} (quadrature error {:.2e}), tau = {tau:.4} (err {tau_err:.3}), {secs:.2} s",
            r.density_sign_changes, r.quadrature_error
        ),
    ))
}

fn c4_stationary_residuals() -> Criterion {
    let err = |e: chemotaxis_core::Error| e.to_string();
    let sgrid = Arc::new(RadialGrid::uniform(7, 1000, 5.0).map_err(err)?);
    let singular = stationary_residual(&singular_triple(7, sgrid).map_err(err)?, (0.5, 5.0)).map_err(err)?;
    let cfg = ShootingConfig { beta_tol: ShootingConfig::finest_beta_tol(13, 1.0), ..Default::default() };
    let beta = find_beta0(1.0, 13, &cfg).map_err(err)?.beta0;
    let coarse = Arc::new(RadialGrid::stretched(13, 512, 200.0, 100.0).map_err(err)?);
    let fine = Arc::new(coarse.refined().map_err(err)?);
    let rc = stationary_residual(&gelfand_triple(1.0, beta, coarse, &cfg).map_err(err)?, (0.1, 100.0)).map_err(err)?;
    let rf = stationary_residual(&gelfand_triple(1.0, beta, fine, &cfg).map_err(err)?, (0.1, 100.0)).map_err(err)?;
    let order = (rc.worst_sup() / rf.worst_sup()).log2();
    Ok((
        singular.analytic && singular.worst_sup() <= 1e-10 && order >= 1.8,
        format!(
            "singular d = 7 residual {:.2e}; gelfand d = 13 residual {:.3e} -> {:.3e}, order {order:.3}",
            singular.worst_sup(),
            rc.worst_sup(),
            rf.worst_sup()
        ),
    ))
}

fn c5_classification() -> Criterion {
    let err = |e: chemotaxis_core::Error| e.to_string();
    let lab = |e: chemolab::LabError| e.to_string();
    let d = 7;
    let shooting = ShootingConfig { beta_tol: ShootingConfig::finest_beta_tol(d, 1.0), ..Default::default() };
    let base = GridSpec::default();
    let doubled = GridSpec { intervals: 2 * base.intervals, r_max: 2.0 * base.r_max, ..base };
    let stat = stationary_pair(1.0, stretched_grid(d, &base).map_err(lab)?, &shooting).map_err(lab)?;
    let stat2 = stationary_pair(1.0, stretched_grid(d, &doubled).map_err(lab)?, &shooting).map_err(lab)?;
    let mut details = Vec::new();
    let mut ok = true;
    let mut slowest = 0.0f64;

    let start = Instant::now();
    let run = evolve(&stat.scaled(0.5, 0.5).map_err(err)?, &EvolveConfig::default()).map_err(err)?;
    slowest = slowest.max(start.elapsed().as_secs_f64());
    let (bm, bw) = mass_bound_ratio(&run, &stat, 0.5, 0.5);
    let global = matches!(run.outcome, Outcome::Global { t_end } if t_end >= 1.0);
    ok &= global && bm <= 1.0 + 1e-3;
    details.push(format!("0.5: {:?}, max M/(0.5 M_stat) = {bm:.6} (W {bw:.6})", run.outcome));

    let long = EvolveConfig { t_end: 50.0, ..Default::default() };
    for (l1, l2) in [(1.5, 1.5), (1.6, 1.2)] {
        let mut verdicts = Vec::new();
        for s in [&stat, &stat2] {
            let start = Instant::now();
            let run = evolve(&s.scaled(l1, l2).map_err(err)?, &long).map_err(err)?;
            slowest = slowest.max(start.elapsed().as_secs_f64());
            match run.outcome {
                Outcome::Blowup { t, .. } => {
                    let loc = blowup_localization(&run, 0.5).map_err(err)?;
                    verdicts.push((
                        loc.localized,
                        format!("t* = {t:.4}, far ratio {:.2e}, exponent {:.3}", loc.ratio, loc.growth_exponent),
                    ));
                }
                o => verdicts.push((false, format!("{o:?}"))),
            }
        }
        ok &= verdicts.iter().all(|v| v.0);
        details.push(format!("({l1}, {l2}): {} | doubled R_max: {}", verdicts[0].1, verdicts[1].1));
    }
    ok &= slowest < 120.0;
    details.push(format!("slowest run {slowest:.1} s"));
    Ok((ok, details.join("; ")))
}

fn c6_comparison() -> Criterion {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = chemolab::run_scenario(&ScenarioConfig::new(ScenarioKind::ComparisonSuite), dir.path())
        .map_err(|e| e.to_string())?;
    if let Some(e) = m.error {
        return Err(e);
    }
    let details: Vec<String> = m.verdicts.iter().map(|v| format!("{}: {}", v.name, v.reason)).collect();
    Ok((m.verdicts.iter().all(|v| v.status == Status::Pass), details.join("; ")))
}

fn c7_envelope() -> Criterion {
    let err = |e: chemotaxis_core::Error| e.to_string();
    let env = OdeEnvelope::new(2.0).map_err(err)?;
    let mut identity = 0.0f64;
    let mut closed_form = 0.0f64;
    for i in 0..=1000 {
        let t = 0.25 * i as f64 / 1000.0;
        let (a, b) = env.identity_residuals(t).map_err(err)?;
        identity = identity.max(a).max(b);
        closed_form = closed_form.max((env.f(t).map_err(err)? * (1.0 - t).powi(2) / 2.0 - 1.0).abs());
    }
    let grid = stretched_grid(7, &GridSpec::default()).map_err(|e| e.to_string())?;
    let data = envelope_data(&grid, 2.0).map_err(|e| e.to_string())?;
    let mut cfg = ScenarioConfig::new(ScenarioKind::EnvelopeCheck);
    cfg.dim = Some(7);
    let run = evolve(&data, &cfg.evolve()).map_err(err)?;
    let rep = envelope_check(&run, &env, 0.25).map_err(err)?;
    Ok((
        identity <= 1e-12 && closed_form <= 1e-14 && rep.passed,
        format!(
            "ODE identity residual {identity:.2e}, F vs 2/(1-t)^2 {closed_form:.1e}; max sup u / F = {:.8}, max sup w / G = {:.8} over {} snapshots",
            rep.worst_ratio_u, rep.worst_ratio_w, rep.snapshots
        ),
    ))
}

fn c8_subsolution() -> Criterion {
    let err = |e: chemotaxis_core::Error| e.to_string();
    let threshold = ratio_threshold(5);
    let bundles = sample_blowup_params(5, 100, 0, 5.0);
    let mut failing = 0;
    let mut worst = f64::NEG_INFINITY;
    for q in &bundles {
        let scan =
            scan_residuals(&BlowupSubsolution::new(*q).map_err(err)?, &lattice(q, 200, 200, 1e-3)).map_err(err)?;
        failing += usize::from(!scan.subsolution);
        worst = worst.max(scan.worst_f.max(scan.worst_g));
    }
    Ok((
        threshold == 8.0 && failing == 0,
        format!(
            "d = 5 threshold {threshold}; {failing} of {} bundles with positive residual (worst N/scale {worst:.3e})",
            bundles.len()
        ),
    ))
}

fn c9_containment() -> Criterion {
    let err = |e: chemotaxis_core::Error| e.to_string();
    let grid = stretched_grid(7, &GridSpec::default()).map_err(|e| e.to_string())?;
    let data = containment_data(&grid, 0.9).map_err(|e| e.to_string())?;
    let params = containment_params(&data, &MorreySpec::default());
    let run = evolve(&data, &EvolveConfig::default()).map_err(err)?;
    let rep = barrier_containment(&run, params).map_err(err)?;
    Ok((
        rep.contained && matches!(run.outcome, Outcome::Global { t_end } if t_end >= 1.0),
        format!(
            "K = {:.2}, max X/b0 = {:.6}, max Y/b1 = {:.6} over {} snapshots to {:?}",
            params.k, rep.worst_ratio_x, rep.worst_ratio_y, rep.snapshots, run.outcome
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("1 gelfand asymptotics d=13", c1_gelfand_asymptotics),
        ("2 dichotomy d=13", c2_dichotomy_13),
        ("3 dichotomy d=9", c3_dichotomy_9),
        ("4 stationary residuals", c4_stationary_residuals),
        ("5 lambda classification d=7", c5_classification),
        ("6 comparison suite", c6_comparison),
        ("7 ODE envelope", c7_envelope),
        ("8 blow-up subsolution residuals", c8_subsolution),
        ("9 Morrey barrier containment", c9_containment),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (ok, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!("{} criterion {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
