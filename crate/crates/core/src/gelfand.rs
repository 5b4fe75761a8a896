//! Shooting for the radial Gelfand problem `Δ²φ = e^φ`, `φ(0) = log α`, `Δφ(0) = β`.
//!
//! Integration runs in `s = log r` on the scale-invariant variables
//! `z = φ + 4s`, `p = r φ_r`, `q = r² Δφ`, `m = r³ (Δφ)_r`, which satisfy
//! `z' = p + 4`, `p' = q - (d-2) p`, `q' = 2q + m`, `m' = (4-d) m + e^z`.
//! The singular solution `φ = log K - 4 log r` is the fixed point
//! `z = log K`, `p = -4`, `q = -4(d-2)`, `m = 8(d-2)` with `K = 8(d-4)(d-2)`.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::ode::{integrate, Finish, StepControl};
use crate::radial::{count_sign_changes, sphere_measure, MIN_DIM};

/// `8(d-4)(d-2)`: the limit of `r⁴ e^φ` along the critical trajectory.
pub fn density_limit(d: usize) -> f64 {
    let d = d as f64;
    8.0 * (d - 4.0) * (d - 2.0)
}

/// `4(d-2)`: the limit of `-r² Δφ`.
pub fn signal_limit(d: usize) -> f64 {
    4.0 * (d as f64 - 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GelfandParams {
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl GelfandParams {
    fn validate(&self) -> Result<()> {
        if self.dim < MIN_DIM {
            return domain(format!("dimension must be at least {MIN_DIM}, got {}", self.dim));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return domain(format!("alpha must be positive, got {}", self.alpha));
        }
        if !self.beta.is_finite() {
            return domain("beta must be finite");
        }
        Ok(())
    }
}

/// `(φ, φ_r, Δφ, (Δφ)_r)` at radius `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GelfandState {
    pub r: f64,
    pub phi: f64,
    pub phi_r: f64,
    pub lap: f64,
    pub lap_r: f64,
}

/// A point of the trajectory in scaled variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledPoint {
    pub s: f64,
    pub z: f64,
    pub p: f64,
    pub q: f64,
    pub m: f64,
}

impl ScaledPoint {
    fn from_array(s: f64, y: &[f64; 4]) -> Self {
        ScaledPoint { s, z: y[0], p: y[1], q: y[2], m: y[3] }
    }

    pub fn r(&self) -> f64 {
        self.s.exp()
    }

    pub fn state(&self) -> GelfandState {
        let r = self.r();
        GelfandState {
            r,
            phi: self.z - 4.0 * self.s,
            phi_r: self.p / r,
            lap: self.q / (r * r),
            lap_r: self.m / (r * r * r),
        }
    }

    /// `r⁴ e^φ`.
    pub fn scaled_density(&self) -> f64 {
        self.z.exp()
    }

    /// `-r² Δφ`.
    pub fn scaled_signal(&self) -> f64 {
        -self.q
    }

    /// `σ_d R^{4-d} ∫_{B_R} e^φ`, exactly `σ_d r³ (Δφ)_r` by the divergence theorem.
    pub fn density_morrey(&self, d: usize) -> f64 {
        sphere_measure(d) * self.m
    }

    /// `σ_d R^{2-d} ∫_{B_R} (-Δφ)`, exactly `-σ_d r φ_r`.
    pub fn signal_morrey(&self, d: usize) -> f64 {
        -sphere_measure(d) * self.p
    }
}

/// Taylor data at `r = eps` from `φ = log α + a₂r² + a₄r⁴ + a₆r⁶`.
pub fn series_start(alpha: f64, beta: f64, dim: usize, eps: f64) -> Result<GelfandState> {
    GelfandParams { dim, alpha, beta }.validate()?;
    if !(eps > 0.0 && eps <= 1e-3) {
        return config(format!("series radius must lie in (0, 1e-3], got {eps}"));
    }
    let d = dim as f64;
    let a2 = beta / (2.0 * d);
    let a4 = alpha / (8.0 * d * (d + 2.0));
    let a6 = alpha * a2 / (24.0 * (d + 2.0) * (d + 4.0));
    let r = eps;
    let r2 = r * r;
    Ok(GelfandState {
        r,
        phi: alpha.ln() + r2 * (a2 + r2 * (a4 + r2 * a6)),
        phi_r: r * (2.0 * a2 + r2 * (4.0 * a4 + r2 * 6.0 * a6)),
        lap: 2.0 * d * a2 + r2 * (4.0 * (d + 2.0) * a4 + r2 * 6.0 * (d + 4.0) * a6),
        lap_r: r * (8.0 * (d + 2.0) * a4 + r2 * 24.0 * (d + 4.0) * a6),
    })
}

fn scaled_start(st: &GelfandState) -> [f64; 4] {
    let r = st.r;
    [st.phi + 4.0 * r.ln(), r * st.phi_r, r * r * st.lap, r * r * r * st.lap_r]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootingConfig {
    pub eps0: f64,
    pub r_max: f64,
    /// Blow-up once `φ > log α + blowup_margin`.
    pub blowup_margin: f64,
    /// Undershoot threshold as a fraction of `8(d-4)(d-2)`.
    pub undershoot_fraction: f64,
    /// Undershoot also needs `r φ_r < -4 - undershoot_slope`.
    pub undershoot_slope: f64,
    /// Both undershoot conditions must hold over this many decades of radius.
    pub undershoot_decades: f64,
    pub beta_tol: f64,
    pub max_bisections: usize,
    pub samples_per_decade: usize,
    /// Relative disagreement in `r⁴e^φ` between the bracketing trajectories
    /// beyond which the critical trajectory counts as unresolved.
    pub resolution_tol: f64,
    pub step: StepControl,
}

impl ShootingConfig {
    /// Smallest admissible bisection tolerance, `ε_mach · 4d√α`.
    pub fn finest_beta_tol(dim: usize, alpha: f64) -> f64 {
        f64::EPSILON * 4.0 * dim as f64 * alpha.sqrt()
    }
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            eps0: 1e-3,
            r_max: 1e8,
            blowup_margin: 50.0,
            undershoot_fraction: 0.01,
            undershoot_slope: 0.5,
            undershoot_decades: 1.0,
            beta_tol: 1e-10,
            max_bisections: 200,
            samples_per_decade: 200,
            resolution_tol: 1e-8,
            step: StepControl::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Blowup {
        r: f64,
    },
    /// `r` marks where the sustained undershoot window opened.
    Undershoot {
        r: f64,
    },
    Alive {
        r: f64,
    },
}

impl Termination {
    pub fn radius(&self) -> f64 {
        match *self {
            Termination::Blowup { r } | Termination::Undershoot { r } | Termination::Alive { r } => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GelfandTrajectory {
    pub params: GelfandParams,
    pub samples: Vec<ScaledPoint>,
    pub termination: Termination,
}

impl GelfandTrajectory {
    /// Sample exactly at radius `r`, if one was requested and reached.
    pub fn sample_at(&self, r: f64) -> Option<&ScaledPoint> {
        let s = r.ln();
        let i = self.samples.partition_point(|p| p.s < s - 1e-12);
        self.samples.get(i).filter(|p| (p.s - s).abs() <= 1e-12)
    }
}

/// Integrates the Taylor-started trajectory, sampling on a logarithmic lattice
/// and stopping at the first blow-up or sustained undershoot.
pub fn integrate_trajectory(params: GelfandParams, cfg: &ShootingConfig) -> Result<GelfandTrajectory> {
    integrate_with_radii(params, cfg, &[])
}

/// As [`integrate_trajectory`], additionally sampling exactly at `radii`.
pub fn integrate_with_radii(params: GelfandParams, cfg: &ShootingConfig, radii: &[f64]) -> Result<GelfandTrajectory> {
    params.validate()?;
    if !(cfg.r_max > cfg.eps0) {
        return config("outer radius must exceed the series radius");
    }
    let start = series_start(params.alpha, params.beta, params.dim, cfg.eps0)?;
    let s0 = cfg.eps0.ln();
    let s_end = cfg.r_max.ln();
    let mut stops = sample_lattice(s0, s_end, cfg.samples_per_decade);
    stops.extend(radii.iter().filter(|&&r| r > cfg.eps0 && r < cfg.r_max).map(|r| r.ln()));
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    let is_stop = |s: f64| {
        let i = stops.partition_point(|&x| x < s);
        stops.get(i).is_some_and(|&x| x == s) || s == s_end
    };

    let d = params.dim as f64;
    let phi_cap = params.alpha.ln() + cfg.blowup_margin;
    let z_low = (cfg.undershoot_fraction * density_limit(params.dim)).ln();
    let window = cfg.undershoot_decades * std::f64::consts::LN_10;
    let rhs = move |_s: f64, y: &[f64; 4]| {
        [y[1] + 4.0, y[2] - (d - 2.0) * y[1], 2.0 * y[2] + y[3], (4.0 - d) * y[3] + y[0].exp()]
    };

    let y0 = scaled_start(&start);
    let mut samples = vec![ScaledPoint::from_array(s0, &y0)];
    let mut termination = None;
    let mut under_since: Option<f64> = None;
    let finish = integrate(rhs, s0, y0, s_end, &stops, &cfg.step, |s, y| {
        if is_stop(s) {
            samples.push(ScaledPoint::from_array(s, y));
        }
        if y[0] - 4.0 * s > phi_cap {
            termination = Some(Termination::Blowup { r: s.exp() });
            return ControlFlow::Break(());
        }
        if y[0] < z_low && y[1] + 4.0 < -cfg.undershoot_slope {
            let since = *under_since.get_or_insert(s);
            if s - since >= window {
                termination = Some(Termination::Undershoot { r: since.exp() });
                return ControlFlow::Break(());
            }
        } else {
            under_since = None;
        }
        ControlFlow::Continue(())
    });
    let finish = match finish {
        Ok(f) => f,
        // Blow-up can outrun the event check when the step control collapses.
        Err(Error::Numerical(_)) if samples.last().is_some_and(|p| p.z - 4.0 * p.s > params.alpha.ln()) => {
            let last = samples.last().unwrap();
            return Ok(GelfandTrajectory { params, termination: Termination::Blowup { r: last.r() }, samples });
        }
        Err(e) => return Err(e),
    };
    let (t, y) = match finish {
        Finish::End { t, y } | Finish::Stopped { t, y } => (t, y),
    };
    if samples.last().is_none_or(|p| p.s != t) {
        samples.push(ScaledPoint::from_array(t, &y));
    }
    let termination = termination.unwrap_or(Termination::Alive { r: t.exp() });
    Ok(GelfandTrajectory { params, samples, termination })
}

fn sample_lattice(s0: f64, s1: f64, per_decade: usize) -> Vec<f64> {
    let ds = std::f64::consts::LN_10 / per_decade.max(1) as f64;
    let first = (s0 / ds).floor() as i64 + 1;
    (first..).map(|i| i as f64 * ds).take_while(|&s| s < s1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotOutcome {
    Blowup,
    Undershoot,
    Alive,
}

impl From<&Termination> for ShotOutcome {
    fn from(t: &Termination) -> Self {
        match t {
            Termination::Blowup { .. } => ShotOutcome::Blowup,
            Termination::Undershoot { .. } => ShotOutcome::Undershoot,
            Termination::Alive { .. } => ShotOutcome::Alive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSearch {
    pub alpha: f64,
    pub dim: usize,
    pub beta0: f64,
    /// Undershooting and blowing-up ends of the final bracket.
    pub bracket: (f64, f64),
    pub history: Vec<(f64, ShotOutcome)>,
    /// A shot survived to the outer radius, so bisection stopped early.
    pub indeterminate: bool,
    pub trajectory: GelfandTrajectory,
    /// Largest radius up to which the bracketing trajectories agree.
    pub resolved_radius: f64,
}

/// Locates the critical `β₀(α)` separating undershoot (below) from blow-up (above).
pub fn find_beta0(alpha: f64, dim: usize, cfg: &ShootingConfig) -> Result<BetaSearch> {
    GelfandParams { dim, alpha, beta: 0.0 }.validate()?;
    let scale = 4.0 * dim as f64 * alpha.sqrt();
    if !(cfg.beta_tol >= f64::EPSILON * scale) {
        return config(format!(
            "bisection tolerance {} is below machine resolution {}",
            cfg.beta_tol,
            f64::EPSILON * scale
        ));
    }
    let mut lo = -scale;
    let mut hi = -1e-4 * scale;
    let shoot = |beta: f64| -> Result<ShotOutcome> {
        let t = integrate_trajectory(GelfandParams { dim, alpha, beta }, cfg)?;
        Ok(ShotOutcome::from(&t.termination))
    };
    let mut history = Vec::new();
    let out_lo = shoot(lo)?;
    let out_hi = shoot(hi)?;
    history.push((lo, out_lo));
    history.push((hi, out_hi));
    if out_lo != ShotOutcome::Undershoot || out_hi != ShotOutcome::Blowup {
        return Err(Error::BracketFailure(format!("beta = {lo} gives {out_lo:?}, beta = {hi} gives {out_hi:?}")));
    }
    let mut indeterminate = false;
    let mut alive = None;
    for _ in 0..cfg.max_bisections {
        if hi - lo < cfg.beta_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let out = shoot(mid)?;
        history.push((mid, out));
        match out {
            ShotOutcome::Undershoot => lo = mid,
            ShotOutcome::Blowup => hi = mid,
            ShotOutcome::Alive => {
                indeterminate = true;
                alive = Some(mid);
                break;
            }
        }
    }
    let beta0 = alive.unwrap_or(0.5 * (lo + hi));
    let trajectory = integrate_trajectory(GelfandParams { dim, alpha, beta: beta0 }, cfg)?;
    let t_lo = integrate_trajectory(GelfandParams { dim, alpha, beta: lo }, cfg)?;
    let t_hi = integrate_trajectory(GelfandParams { dim, alpha, beta: hi }, cfg)?;
    let resolved_radius =
        agreement_radius(&t_lo, &t_hi, density_limit(dim) * cfg.resolution_tol).min(trajectory.termination.radius());
    Ok(BetaSearch { alpha, dim, beta0, bracket: (lo, hi), history, indeterminate, trajectory, resolved_radius })
}

/// Last common sample radius before `r⁴e^φ` differs by more than `tol`.
fn agreement_radius(a: &GelfandTrajectory, b: &GelfandTrajectory, tol: f64) -> f64 {
    let mut last = a.samples[0].r();
    for (pa, pb) in a.samples.iter().zip(&b.samples) {
        if (pa.s - pb.s).abs() > 1e-12 || (pa.z.exp() - pb.z.exp()).abs() > tol {
            break;
        }
        last = pa.r();
    }
    last
}

/// Decay rate and angular frequency in `s = log r` of the oscillatory
/// perturbation modes about the singular solution, when they exist.
pub fn linearized_oscillation(d: usize) -> Option<(f64, f64)> {
    let dd = d as f64;
    let y = (dd - 2.0) - ((dd - 2.0).powi(2) + density_limit(d)).sqrt();
    let disc = (dd - 4.0).powi(2) + 4.0 * y;
    (disc < 0.0).then(|| (-(dd - 4.0) / 2.0, (-disc).sqrt() / 2.0))
}

/// Largest real growth exponent of perturbations about the singular solution.
pub fn linearized_growth(d: usize) -> f64 {
    let dd = d as f64;
    let y = (dd - 2.0) + ((dd - 2.0).powi(2) + density_limit(d)).sqrt();
    (-(dd - 4.0) + ((dd - 4.0).powi(2) + 4.0 * y).sqrt()) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationFit {
    pub tau: f64,
    pub k: f64,
    /// Weighted root-mean-square misfit relative to the envelope.
    pub misfit: f64,
    pub s_start: f64,
    pub s_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub dim: usize,
    pub resolved_radius: f64,
    pub decades_resolved: f64,
    pub density_limit: f64,
    pub signal_limit: f64,
    /// `r⁴e^φ` and `-r²Δφ` at the resolved radius.
    pub tail_density: f64,
    pub tail_signal: f64,
    /// Sign changes of `r⁴e^φ - 8(d-4)(d-2)` up to the resolved radius.
    pub sign_changes: usize,
    pub fit: Option<OscillationFit>,
    pub predicted: Option<(f64, f64)>,
    /// For `d >= 13`: the approach never crosses the limit.
    pub one_sided: Option<bool>,
    pub note: Option<String>,
}

pub const MIN_FIT_DECADES: f64 = 3.0;

pub fn asymptotic_report(traj: &GelfandTrajectory, resolved_radius: f64) -> Result<AsymptoticReport> {
    let d = traj.params.dim;
    let k_lim = density_limit(d);
    let s_res = resolved_radius.ln();
    let pts: Vec<&ScaledPoint> = traj.samples.iter().filter(|p| p.s <= s_res + 1e-12).collect();
    let last = *pts.last().ok_or_else(|| Error::Numerical("empty trajectory".into()))?;
    let decades = (resolved_radius / traj.samples[0].r()).log10();
    let dens: Vec<f64> = pts.iter().map(|p| p.scaled_density()).collect();
    let sign_changes = count_sign_changes(&dens, k_lim, 0.0);
    let predicted = linearized_oscillation(d);
    let mut note = None;
    let mut fit = None;
    let mut one_sided = None;
    if d >= 13 {
        one_sided = Some(sign_changes == 0);
    } else if decades < MIN_FIT_DECADES {
        note = Some(format!("only {decades:.2} decades resolved; fit refused"));
    } else {
        let ys: Vec<(f64, f64)> = pts.iter().map(|p| (p.s, p.z - k_lim.ln())).collect();
        fit = fit_log_periodic(&ys);
        if fit.is_none() {
            note = Some("too few oscillations in the resolved range to fit".into());
        }
    }
    Ok(AsymptoticReport {
        dim: d,
        resolved_radius,
        decades_resolved: decades,
        density_limit: k_lim,
        signal_limit: signal_limit(d),
        tail_density: last.scaled_density(),
        tail_signal: last.scaled_signal(),
        sign_changes,
        fit,
        predicted,
        one_sided,
        note,
    })
}

/// Fits `y ≈ e^{τs}(a sin ks + b cos ks)` past the first zero of `y`.
///
/// Zero spacing and extremum decay give the starting guess; a weighted
/// least-squares refinement over `(τ, k)` with `(a, b)` eliminated follows.
pub fn fit_log_periodic(data: &[(f64, f64)]) -> Option<OscillationFit> {
    let zeros: Vec<f64> = data
        .windows(2)
        .filter(|w| w[0].1 * w[1].1 < 0.0)
        .map(|w| w[0].0 - w[0].1 * (w[1].0 - w[0].0) / (w[1].1 - w[0].1))
        .collect();
    if zeros.len() < 3 {
        return None;
    }
    let window: Vec<(f64, f64)> = data.iter().cloned().filter(|&(s, _)| s >= zeros[0]).collect();
    let k0 = std::f64::consts::PI * (zeros.len() - 1) as f64 / (zeros[zeros.len() - 1] - zeros[0]);
    // One extremum of |y| between consecutive zeros.
    let mut ext = Vec::new();
    for w in zeros.windows(2) {
        let best = window
            .iter()
            .filter(|(s, _)| *s > w[0] && *s < w[1])
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap());
        if let Some(&(s, y)) = best {
            ext.push((s, y.abs().ln()));
        }
    }
    let tau0 = if ext.len() >= 2 { slope(&ext) } else { 0.0 };

    let objective = |tau: f64, k: f64| -> f64 { varpro_residual(&window, tau, k, tau0).0 };
    let (tau, k) = nelder_mead_2d(objective, (tau0, k0), (0.1 * tau0.abs().max(0.1), 0.1 * k0));
    let (rss, wsum) = varpro_residual(&window, tau, k, tau0);
    Some(OscillationFit { tau, k, misfit: (rss / wsum).sqrt(), s_start: zeros[0], s_end: window.last().unwrap().0 })
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Weighted residual after eliminating the linear amplitudes. Weights
/// `e^{-2 τ_w s}` put every period on an equal footing.
fn varpro_residual(data: &[(f64, f64)], tau: f64, k: f64, tau_w: f64) -> (f64, f64) {
    let s_ref = data[0].0;
    let (mut a11, mut a12, mut a22, mut b1, mut b2, mut wsum) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let rows: Vec<(f64, f64, f64, f64)> = data
        .iter()
        .map(|&(s, y)| {
            let w = (-2.0 * tau_w * (s - s_ref)).exp();
            let e = (tau * (s - s_ref)).exp();
            (w, e * (k * s).sin(), e * (k * s).cos(), y)
        })
        .collect();
    for &(w, u, v, y) in &rows {
        a11 += w * u * u;
        a12 += w * u * v;
        a22 += w * v * v;
        b1 += w * u * y;
        b2 += w * v * y;
        wsum += w * y * y;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() < 1e-300 {
        return (f64::INFINITY, wsum);
    }
    let a = (b1 * a22 - b2 * a12) / det;
    let b = (a11 * b2 - a12 * b1) / det;
    let rss = rows.iter().map(|&(w, u, v, y)| w * (y - a * u - b * v).powi(2)).sum();
    (rss, wsum)
}

fn nelder_mead_2d(f: impl Fn(f64, f64) -> f64, x0: (f64, f64), step: (f64, f64)) -> (f64, f64) {
    let mut pts = [(x0.0, x0.1), (x0.0 + step.0, x0.1), (x0.0, x0.1 + step.1)];
    let mut vals = pts.map(|p| f(p.0, p.1));
    for _ in 0..400 {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
        pts = idx.map(|i| pts[i]);
        vals = idx.map(|i| vals[i]);
        let size = ((pts[2].0 - pts[0].0).abs() + (pts[2].1 - pts[0].1).abs())
            .max((pts[1].0 - pts[0].0).abs() + (pts[1].1 - pts[0].1).abs());
        if size < 1e-10 {
            break;
        }
        let c = ((pts[0].0 + pts[1].0) / 2.0, (pts[0].1 + pts[1].1) / 2.0);
        let at = |t: f64| (c.0 + t * (pts[2].0 - c.0), c.1 + t * (pts[2].1 - c.1));
        let xr = at(-1.0);
        let fr = f(xr.0, xr.1);
        if fr < vals[0] {
            let xe = at(-2.0);
            let fe = f(xe.0, xe.1);
            if fe < fr {
                pts[2] = xe;
                vals[2] = fe;
            } else {
                pts[2] = xr;
                vals[2] = fr;
            }
        } else if fr < vals[1] {
            pts[2] = xr;
            vals[2] = fr;
        } else {
            let xc = at(0.5);
            let fc = f(xc.0, xc.1);
            if fc < vals[2] {
                pts[2] = xc;
                vals[2] = fc;
            } else {
                for i in 1..3 {
                    pts[i] = ((pts[0].0 + pts[i].0) / 2.0, (pts[0].1 + pts[i].1) / 2.0);
                    vals[i] = f(pts[i].0, pts[i].1);
                }
            }
        }
    }
    pts[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn series_start_matches_taylor_coefficients() {
        let st = series_start(1.0, 0.0, 7, 1e-3).unwrap();
        assert_relative_eq!(st.phi, 1e-12 / 504.0, max_relative = 1e-12);
        assert_relative_eq!(st.lap, 1e-6 / 14.0, max_relative = 1e-12);
        assert!(series_start(1.0, 0.0, 7, 1e-2).is_err());
        assert!(series_start(-1.0, 0.0, 7, 1e-3).is_err());
    }

    #[test]
    fn singular_point_is_stationary() {
        for d in [5, 9, 13] {
            let dd = d as f64;
            let y = [density_limit(d).ln(), -4.0, -4.0 * (dd - 2.0), 8.0 * (dd - 2.0)];
            let f = [y[1] + 4.0, y[2] - (dd - 2.0) * y[1], 2.0 * y[2] + y[3], (4.0 - dd) * y[3] + y[0].exp()];
            for v in f {
                assert!(v.abs() < 1e-12 * density_limit(d));
            }
        }
    }

    #[test]
    fn linearization_modes() {
        let (tau, k) = linearized_oscillation(9).unwrap();
        assert_relative_eq!(tau, -2.5);
        assert!(k > 2.2 && k < 2.22);
        assert!(linearized_oscillation(13).is_none());
        assert!(linearized_oscillation(12).is_some());
        let g = linearized_growth(13);
        assert!(g > 3.3 && g < 3.4);
    }

    #[test]
    fn recovers_synthetic_oscillation() {
        let data: Vec<(f64, f64)> = (0..2000)
            .map(|i| {
                let s = i as f64 * 0.005;
                (s, 3.0 * (-1.7 * s).exp() * (2.3 * s + 0.4).sin())
            })
            .collect();
        let fit = fit_log_periodic(&data).unwrap();
        assert_relative_eq!(fit.tau, -1.7, max_relative = 1e-6);
        assert_relative_eq!(fit.k, 2.3, max_relative = 1e-6);
    }
}
