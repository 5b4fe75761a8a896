//! Stationary states: the explicit singular triple, the regular triple generated
//! by the critical Gelfand trajectory, residual checks and Morrey dichotomy.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::gelfand::{
    density_limit, find_beta0, integrate_with_radii, series_start, signal_limit, BetaSearch, GelfandParams,
    ShootingConfig,
};
use crate::radial::{
    count_sign_changes, derivatives, log_space, morrey_profile, radial_laplacian, sphere_measure, MorreyProfile,
    MorreyQuery, Parity, Quadrature, RadialField, RadialGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Singular,
    Gelfand { alpha: f64, beta0: f64 },
    Reconstructed,
}

/// `u = cu r^{-4}`, `v = cv log r`, `w = cw r^{-2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaws {
    pub cu: f64,
    pub cv: f64,
    pub cw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryTriple {
    pub u: RadialField,
    pub v: RadialField,
    pub w: RadialField,
    pub provenance: Provenance,
    laws: Option<PowerLaws>,
}

impl StationaryTriple {
    pub fn reconstructed(u: RadialField, v: RadialField, w: RadialField) -> Result<Self> {
        if u.grid() != v.grid() || u.grid() != w.grid() {
            return config("triple components must share one grid");
        }
        Ok(StationaryTriple { u, v, w, provenance: Provenance::Reconstructed, laws: None })
    }

    pub fn power_laws(&self) -> Option<PowerLaws> {
        self.laws
    }

    /// Multiplies the three components by the given factors.
    pub fn scaled(&self, fu: f64, fv: f64, fw: f64) -> Result<Self> {
        Ok(StationaryTriple {
            u: self.u.scaled(fu)?,
            v: self.v.scaled(fv)?,
            w: self.w.scaled(fw)?,
            provenance: self.provenance,
            laws: self.laws.map(|l| PowerLaws { cu: l.cu * fu, cv: l.cv * fv, cw: l.cw * fw }),
        })
    }
}

/// `u_C = 8(d-4)(d-2) r^{-4}`, `v_C = -4 log r`, `w_C = 4(d-2) r^{-2}`.
pub fn singular_triple(d: usize, grid: Arc<RadialGrid>) -> Result<StationaryTriple> {
    if d < 7 {
        return domain(format!(
            "the singular steady state needs d >= 7: u_C grad v_C ~ r^-5 is not locally integrable for d = {d}"
        ));
    }
    if grid.dim() != d {
        return config("grid dimension does not match");
    }
    let laws = PowerLaws { cu: density_limit(d), cv: -4.0, cw: signal_limit(d) };
    let u = RadialField::from_fn(grid.clone(), Parity::Singular, |r| laws.cu * r.powi(-4))?;
    let v = RadialField::from_fn(grid.clone(), Parity::Singular, |r| laws.cv * r.ln())?;
    let w = RadialField::from_fn(grid, Parity::Singular, |r| laws.cw * r.powi(-2))?;
    Ok(StationaryTriple {
        u: u.into_nonnegative()?,
        v,
        w: w.into_nonnegative()?,
        provenance: Provenance::Singular,
        laws: Some(laws),
    })
}

/// Samples `(e^φ, φ, -Δφ)` of the trajectory with `Δφ(0) = beta` at the grid nodes.
pub fn gelfand_triple(alpha: f64, beta: f64, grid: Arc<RadialGrid>, cfg: &ShootingConfig) -> Result<StationaryTriple> {
    let d = grid.dim();
    let nodes = grid.nodes();
    let traj = integrate_with_radii(GelfandParams { dim: d, alpha, beta }, cfg, nodes)?;
    if traj.termination.radius() < grid.r_max() {
        return Err(Error::Numerical(format!(
            "trajectory ends at r = {:.4e}, inside the grid (R = {})",
            traj.termination.radius(),
            grid.r_max()
        )));
    }
    let mut phi = Vec::with_capacity(nodes.len());
    let mut lap = Vec::with_capacity(nodes.len());
    for &r in nodes {
        let st = if r == 0.0 {
            (alpha.ln(), beta)
        } else if r <= cfg.eps0 {
            let s = series_start(alpha, beta, d, r.min(cfg.eps0))?;
            (s.phi, s.lap)
        } else {
            let p =
                traj.sample_at(r).ok_or_else(|| Error::Numerical(format!("no trajectory sample at r = {r}")))?.state();
            (p.phi, p.lap)
        };
        phi.push(st.0);
        lap.push(st.1);
    }
    let u = RadialField::new(grid.clone(), phi.iter().map(|p| p.exp()).collect(), Parity::Even)?;
    let w = RadialField::new(grid.clone(), lap.iter().map(|l| -l).collect(), Parity::Even)?;
    let v = RadialField::new(grid, phi, Parity::Even)?;
    Ok(StationaryTriple {
        u: u.into_nonnegative()?,
        v,
        w: w.into_nonnegative()?,
        provenance: Provenance::Gelfand { alpha, beta0: beta },
        laws: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    /// Pointwise `|R| / |diffusion term|`, maximised over the window.
    pub sup: f64,
    /// `||R||₂ / ||diffusion term||₂` over the window nodes.
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub window: (f64, f64),
    pub nodes: usize,
    pub analytic: bool,
    /// `Δu - r^{1-d}(r^{d-1} u v_r)_r`, `Δv + w`, `Δw + u`.
    pub r1: ResidualNorms,
    pub r2: ResidualNorms,
    pub r3: ResidualNorms,
    pub h_max: f64,
}

impl ResidualReport {
    pub fn worst_sup(&self) -> f64 {
        self.r1.sup.max(self.r2.sup).max(self.r3.sup)
    }
}

struct Terms {
    lap_u: Vec<f64>,
    div: Vec<f64>,
    lap_v: Vec<f64>,
    lap_w: Vec<f64>,
}

fn analytic_terms(d: f64, laws: PowerLaws, r: &[f64]) -> Terms {
    Terms {
        lap_u: r.iter().map(|r| -4.0 * (d - 6.0) * laws.cu * r.powi(-6)).collect(),
        div: r.iter().map(|r| (d - 6.0) * laws.cu * laws.cv * r.powi(-6)).collect(),
        lap_v: r.iter().map(|r| (d - 2.0) * laws.cv * r.powi(-2)).collect(),
        lap_w: r.iter().map(|r| -2.0 * (d - 4.0) * laws.cw * r.powi(-4)).collect(),
    }
}

/// `r^{1-d}(r^{d-1} u v_r)_r` at every node, by finite differences.
fn flux_divergence(t: &StationaryTriple) -> Vec<f64> {
    let r = t.u.grid().nodes();
    let d = t.u.dim() as f64;
    let (v_r, _) = derivatives(r, t.v.values(), t.v.parity());
    let flux: Vec<f64> = t.u.values().iter().zip(&v_r).map(|(u, g)| u * g).collect();
    let (flux_r, _) = derivatives(r, &flux, t.u.parity());
    (0..r.len()).map(|i| if r[i] > 0.0 { flux_r[i] + (d - 1.0) / r[i] * flux[i] } else { f64::NAN }).collect()
}

fn window_indices(grid: &RadialGrid, window: (f64, f64)) -> Result<Vec<usize>> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo && hi <= grid.r_max()) {
        return domain(format!("window [{lo}, {hi}] must satisfy 0 < r_lo < r_hi <= {}", grid.r_max()));
    }
    let idx: Vec<usize> = (0..grid.len()).filter(|&i| grid.nodes()[i] >= lo && grid.nodes()[i] <= hi).collect();
    if idx.is_empty() {
        return config("no grid nodes inside the window");
    }
    Ok(idx)
}

fn norms(residual: &[f64], scale: &[f64], idx: &[usize]) -> ResidualNorms {
    let sup = idx.iter().map(|&i| (residual[i] / scale[i]).abs()).fold(0.0, f64::max);
    let num: f64 = idx.iter().map(|&i| residual[i].powi(2)).sum();
    let den: f64 = idx.iter().map(|&i| scale[i].powi(2)).sum();
    ResidualNorms { sup, l2: (num / den).sqrt() }
}

/// Residuals of the stationary system, relative to the size of each diffusion term.
pub fn stationary_residual(t: &StationaryTriple, window: (f64, f64)) -> Result<ResidualReport> {
    let grid = t.u.grid().clone();
    let idx = window_indices(&grid, window)?;
    let r = grid.nodes();
    let d = grid.dim() as f64;
    let (terms, analytic) = match (t.provenance, t.laws) {
        (Provenance::Singular, Some(laws)) => (analytic_terms(d, laws, r), true),
        _ => (
            Terms {
                lap_u: radial_laplacian(&t.u)?.values().to_vec(),
                div: flux_divergence(t),
                lap_v: radial_laplacian(&t.v)?.values().to_vec(),
                lap_w: radial_laplacian(&t.w)?.values().to_vec(),
            },
            false,
        ),
    };
    let u = t.u.values();
    let w = t.w.values();
    let n = r.len();
    let r1: Vec<f64> = (0..n).map(|i| terms.lap_u[i] - terms.div[i]).collect();
    let r2: Vec<f64> = (0..n).map(|i| terms.lap_v[i] + w[i]).collect();
    let r3: Vec<f64> = (0..n).map(|i| terms.lap_w[i] + u[i]).collect();
    Ok(ResidualReport {
        window,
        nodes: idx.len(),
        analytic,
        r1: norms(&r1, &terms.lap_u, &idx),
        r2: norms(&r2, &terms.lap_v, &idx),
        r3: norms(&r3, &terms.lap_w, &idx),
        h_max: idx.windows(2).map(|p| r[p[1]] - r[p[0]]).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub nodes: usize,
    /// Fraction of window nodes where `∇·(u∇v) >= 0`.
    pub fraction_nonnegative: f64,
    pub max_divergence: f64,
    /// The divergence vanishes identically (constant states).
    pub identically_zero: bool,
    pub u_strictly_decreasing: bool,
}

pub fn flux_sign_check(t: &StationaryTriple, window: (f64, f64)) -> Result<SignReport> {
    let idx = window_indices(t.u.grid(), window)?;
    let div = flux_divergence(t);
    let u = t.u.values();
    let v = t.v.values();
    let r = t.u.grid().nodes();
    // Round-off level of a second difference of the data.
    let h = idx.windows(2).map(|p| r[p[1]] - r[p[0]]).fold(f64::INFINITY, f64::min);
    let size = |f: &[f64]| idx.iter().map(|&i| f[i].abs()).fold(0.0, f64::max);
    let noise = 1e-12 * size(u) * size(v).max(1.0) / (h * h).min(1.0);
    let nonneg = idx.iter().filter(|&&i| div[i] >= 0.0).count();
    let identically_zero = idx.iter().all(|&i| div[i].abs() <= noise);
    Ok(SignReport {
        nodes: idx.len(),
        fraction_nonnegative: nonneg as f64 / idx.len() as f64,
        max_divergence: idx.iter().map(|&i| div[i]).fold(f64::NEG_INFINITY, f64::max),
        identically_zero,
        u_strictly_decreasing: idx.windows(2).all(|p| u[p[1]] < u[p[0]]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DichotomyConfig {
    pub shooting: ShootingConfig,
    pub grid_intervals: usize,
    pub grid_refinement: f64,
    /// Smallest Morrey radius; the profile runs from here to the resolved radius.
    pub morrey_r_min: f64,
    pub morrey_points: usize,
    /// Required relative exceedance for `5 <= d <= 12`.
    pub exceed_margin: f64,
    /// Exceedance must also beat this multiple of the quadrature error.
    pub exceed_noise_factor: f64,
    /// Bound on exceedance tolerated for `d >= 13`.
    pub quadrature_tol: f64,
    /// How close the supremum must come to the level for `d >= 13`.
    pub approach_tol: f64,
    pub min_sign_changes: usize,
}

impl DichotomyConfig {
    /// Defaults with bisection carried to machine resolution for dimension `d`.
    pub fn for_dim(d: usize, alpha: f64) -> Self {
        let mut cfg = DichotomyConfig::default();
        cfg.shooting.beta_tol = ShootingConfig::finest_beta_tol(d, alpha);
        cfg
    }
}

impl Default for DichotomyConfig {
    fn default() -> Self {
        DichotomyConfig {
            shooting: ShootingConfig::default(),
            grid_intervals: 4096,
            grid_refinement: 100.0,
            morrey_r_min: 1e-2,
            morrey_points: 600,
            exceed_margin: 1e-3,
            exceed_noise_factor: 5.0,
            quadrature_tol: 1e-4,
            approach_tol: 1e-2,
            min_sign_changes: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DichotomyVerdict {
    /// Profiles approach their limits from below and never cross them.
    Dominated,
    /// Profiles overshoot their limits and oscillate about them.
    Overshooting,
    /// The resolved range cannot decide.
    Inconclusive,
    /// The resolved data contradict the expected behaviour for this dimension.
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub d: usize,
    pub alpha: f64,
    pub beta0: f64,
    pub sup_u: f64,
    pub sup_w: f64,
    pub level_u: f64,
    pub level_w: f64,
    pub sign_changes_u: usize,
    pub sign_changes_w: usize,
    pub verdict: DichotomyVerdict,
    pub expected: DichotomyVerdict,
    pub resolved_radius: f64,
    /// Largest relative gap between quadrature and the exact flux identities.
    pub quadrature_error: f64,
    /// Sign changes of `r⁴e^φ - 8(d-4)(d-2)` along the trajectory.
    pub density_sign_changes: usize,
    pub note: Option<String>,
    #[serde(skip)]
    pub profile_u: Option<MorreyProfile>,
    #[serde(skip)]
    pub profile_w: Option<MorreyProfile>,
}

impl DichotomyReport {
    pub fn passed(&self) -> bool {
        self.verdict == self.expected
    }

    /// Rows `R, I_u, I_w`.
    pub fn profile_csv(&self) -> String {
        let mut out = String::from("R,I_u,I_w\n");
        if let (Some(pu), Some(pw)) = (&self.profile_u, &self.profile_w) {
            for ((r, a), b) in pu.radii.iter().zip(&pu.values).zip(&pw.values) {
                out.push_str(&format!("{r},{a},{b}\n"));
            }
        }
        out
    }
}

pub fn expected_verdict(d: usize) -> DichotomyVerdict {
    if d >= 13 {
        DichotomyVerdict::Dominated
    } else {
        DichotomyVerdict::Overshooting
    }
}

pub fn dichotomy_report(alpha: f64, d: usize, cfg: &DichotomyConfig) -> Result<DichotomyReport> {
    let search = find_beta0(alpha, d, &cfg.shooting)?;
    dichotomy_from_search(&search, cfg)
}

pub fn dichotomy_from_search(search: &BetaSearch, cfg: &DichotomyConfig) -> Result<DichotomyReport> {
    let d = search.dim;
    let alpha = search.alpha;
    let sigma = sphere_measure(d);
    let level_u = 8.0 * (d as f64 - 2.0) * sigma;
    let level_w = 4.0 * sigma;
    let r_res = search.resolved_radius;
    let density_sign_changes = {
        let pts: Vec<f64> =
            search.trajectory.samples.iter().filter(|p| p.r() <= r_res).map(|p| p.scaled_density()).collect();
        count_sign_changes(&pts, density_limit(d), 0.0)
    };
    let mut report = DichotomyReport {
        d,
        alpha,
        beta0: search.beta0,
        sup_u: f64::NAN,
        sup_w: f64::NAN,
        level_u,
        level_w,
        sign_changes_u: 0,
        sign_changes_w: 0,
        verdict: DichotomyVerdict::Inconclusive,
        expected: expected_verdict(d),
        resolved_radius: r_res,
        quadrature_error: f64::NAN,
        density_sign_changes,
        note: None,
        profile_u: None,
        profile_w: None,
    };
    if r_res / cfg.morrey_r_min < 1e4 {
        report.note =
            Some(format!("resolved radius {r_res:.3e} leaves fewer than four decades above {}", cfg.morrey_r_min));
        return Ok(report);
    }

    let grid = Arc::new(RadialGrid::stretched(d, cfg.grid_intervals, r_res, cfg.grid_refinement)?);
    let radii = log_space(cfg.morrey_r_min, r_res, cfg.morrey_points);
    let mut stops: Vec<f64> = grid.nodes().to_vec();
    stops.extend(&radii);
    let params = GelfandParams { dim: d, alpha, beta: search.beta0 };
    let traj = integrate_with_radii(params, &cfg.shooting, &stops)?;
    let triple = gelfand_triple(alpha, search.beta0, grid, &cfg.shooting)?;

    let exact_u: Vec<f64> = radii
        .iter()
        .map(|&r| traj.sample_at(r).map(|p| p.density_morrey(d)))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Numerical("missing Morrey sample".into()))?;
    let exact_w: Vec<f64> = radii
        .iter()
        .map(|&r| traj.sample_at(r).map(|p| p.signal_morrey(d)))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Numerical("missing Morrey sample".into()))?;
    let q_u = MorreyQuery { exponent: 4.0, radii: radii.clone(), level: None, band: 0.0, rule: Quadrature::PowerLaw };
    let q_w = MorreyQuery { exponent: 2.0, ..q_u.clone() };
    let mut pu = morrey_profile(&triple.u, &q_u)?;
    let mut pw = morrey_profile(&triple.w, &q_w)?;
    let rel_gap = |p: &MorreyProfile, exact: &[f64]| {
        p.values.iter().zip(exact).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max)
    };
    let qerr = rel_gap(&pu, &exact_u).max(rel_gap(&pw, &exact_w));
    let band = 2.0 * qerr;
    pu.sign_changes = Some(count_sign_changes(&pu.values, level_u, band));
    pw.sign_changes = Some(count_sign_changes(&pw.values, level_w, band));

    report.sup_u = pu.sup;
    report.sup_w = pw.sup;
    report.sign_changes_u = pu.sign_changes.unwrap();
    report.sign_changes_w = pw.sign_changes.unwrap();
    report.quadrature_error = qerr;
    let ex_u = pu.sup / level_u - 1.0;
    let ex_w = pw.sup / level_w - 1.0;

    report.verdict = if d >= 13 {
        let bounded = ex_u <= cfg.quadrature_tol.max(qerr) && ex_w <= cfg.quadrature_tol.max(qerr);
        let close = ex_u >= -cfg.approach_tol && ex_w >= -cfg.approach_tol;
        let crossings = report.sign_changes_u + report.sign_changes_w;
        if bounded && crossings == 0 && close {
            DichotomyVerdict::Dominated
        } else if bounded && crossings == 0 {
            report.note = Some("profiles have not yet approached their limits".into());
            DichotomyVerdict::Inconclusive
        } else {
            DichotomyVerdict::Mismatch
        }
    } else {
        let need = cfg.exceed_margin.max(cfg.exceed_noise_factor * qerr);
        let over_u = ex_u >= need && report.sign_changes_u >= cfg.min_sign_changes;
        let over_w = ex_w >= need && report.sign_changes_w >= cfg.min_sign_changes;
        if over_u && over_w {
            DichotomyVerdict::Overshooting
        } else {
            report.note = Some(format!(
                "exceedance u {ex_u:.3e}, w {ex_w:.3e} (need {need:.3e}); sign changes u {}, w {} (need {})",
                report.sign_changes_u, report.sign_changes_w, cfg.min_sign_changes
            ));
            DichotomyVerdict::Inconclusive
        }
    };
    report.profile_u = Some(pu);
    report.profile_w = Some(pw);
    Ok(report)
}
