//! Explicit barrier objects: Morrey-type barriers for `(X, Y) = σ_d r^d (M, W)`,
//! a self-similar blow-up subsolution, and the spatially uniform supersolution.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MassState, RunReport};
use crate::error::{domain, precondition, Error, Result};
use crate::radial::sphere_measure;

/// One inequality of a parameter validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Positive when the inequality holds.
    pub margin: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub valid: bool,
}

impl ValidationReport {
    fn from_margins(items: Vec<(&str, f64)>) -> Self {
        let checks: Vec<Check> = items
            .into_iter()
            .map(|(name, margin)| Check { name: name.to_string(), margin, ok: margin > 0.0 })
            .collect();
        let valid = checks.iter().all(|c| c.ok);
        ValidationReport { checks, valid }
    }

    fn into_result(self) -> Result<()> {
        if self.valid {
            return Ok(());
        }
        let failed: Vec<String> =
            self.checks.iter().filter(|c| !c.ok).map(|c| format!("{} (margin {:.3e})", c.name, c.margin)).collect();
        Err(Error::Config(format!("invalid barrier parameters: {}", failed.join("; "))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorreyBarrierParams {
    pub dim: usize,
    pub p: f64,
    pub k: f64,
    pub eps: f64,
    pub eps_prime: f64,
}

impl MorreyBarrierParams {
    pub fn validate(&self) -> ValidationReport {
        let d = self.dim as f64;
        let q = d / self.p;
        ValidationReport::from_margins(vec![
            ("d >= 5", d - 4.5),
            ("p > d/3", self.p - d / 3.0),
            ("p < d/2", d / 2.0 - self.p),
            ("K > 0", self.k),
            ("eps > 0", self.eps),
            ("eps < eps'", self.eps_prime - self.eps),
            ("eps' < d/(4p)", q / 4.0 - self.eps_prime),
            ("d/(4p) < 1", 1.0 - q / 4.0),
            ("eps' <= 2(d-2) eps", 2.0 * (d - 2.0) * self.eps - self.eps_prime + f64::MIN_POSITIVE),
        ])
    }

    /// `(d - d/p + 2)(2 - d/p) + 1`, negative only for `p` close enough to `d/3`.
    /// Reported alongside results rather than enforced.
    pub fn exponent_margin(&self) -> f64 {
        let d = self.dim as f64;
        let q = d / self.p;
        (d - q + 2.0) * (2.0 - q) + 1.0
    }
}

/// `b₀(r) = min{K r^{d-d/p}, 8(d-2)σ ε r^{d-4}}`, `b₁(r) = min{K r^{d-d/p+2}, 4σ ε' r^{d-2}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorreyBarriers {
    pub params: MorreyBarrierParams,
    pub sigma: f64,
    /// Crossover of the two branches of `b₀`.
    pub r_upper: f64,
    /// Crossover of the two branches of `b₁`.
    pub r_lower: f64,
}

impl MorreyBarriers {
    pub fn new(params: MorreyBarrierParams) -> Result<Self> {
        params.validate().into_result()?;
        let d = params.dim as f64;
        let sigma = sphere_measure(params.dim);
        let e = 1.0 / (4.0 - d / params.p);
        Ok(MorreyBarriers {
            params,
            sigma,
            r_upper: (8.0 * (d - 2.0) * sigma * params.eps / params.k).powf(e),
            r_lower: (4.0 * sigma * params.eps_prime / params.k).powf(e),
        })
    }

    pub fn b0(&self, r: f64) -> f64 {
        let d = self.params.dim as f64;
        let inner = self.params.k * r.powf(d - d / self.params.p);
        let outer = 8.0 * (d - 2.0) * self.sigma * self.params.eps * r.powf(d - 4.0);
        inner.min(outer)
    }

    pub fn b1(&self, r: f64) -> f64 {
        let d = self.params.dim as f64;
        let inner = self.params.k * r.powf(d - d / self.params.p + 2.0);
        let outer = 4.0 * self.sigma * self.params.eps_prime * r.powf(d - 2.0);
        inner.min(outer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub params: MorreyBarrierParams,
    /// Largest `X/b₀` and `Y/b₁` over all snapshots and positive radii.
    pub worst_ratio_x: f64,
    pub worst_ratio_y: f64,
    pub worst_at: (f64, f64),
    pub snapshots: usize,
    pub exponent_margin: f64,
    pub contained: bool,
}

/// Largest `X/b₀`, `Y/b₁` of one state and where the worse one occurs.
fn ratios(state: &MassState, b: &MorreyBarriers) -> (f64, f64, f64) {
    let d = state.grid().dim() as i32;
    let mut rx = 0.0f64;
    let mut ry = 0.0f64;
    let mut at = 0.0;
    for (i, &r) in state.grid().nodes().iter().enumerate().skip(1) {
        let vol = b.sigma * r.powi(d);
        let x = vol * state.m.values()[i] / b.b0(r);
        let y = vol * state.w.values()[i] / b.b1(r);
        if x.max(y) > rx.max(ry) {
            at = r;
        }
        rx = rx.max(x);
        ry = ry.max(y);
    }
    (rx, ry, at)
}

/// Checks `X < b₀` and `Y < b₁` at every snapshot, given that the initial state does.
pub fn barrier_containment(run: &RunReport, params: MorreyBarrierParams) -> Result<ContainmentReport> {
    let b = MorreyBarriers::new(params)?;
    if run.snapshots[0].grid().dim() != params.dim {
        return Err(Error::Config("barrier dimension differs from the run".into()));
    }
    let (x0, y0, at0) = ratios(&run.snapshots[0], &b);
    if x0 >= 1.0 || y0 >= 1.0 {
        return precondition(format!("initial data touch the barriers near r = {at0:.4e}"));
    }
    let mut worst = (0.0f64, 0.0f64, (0.0, 0.0));
    for s in &run.snapshots {
        let (x, y, at) = ratios(s, &b);
        if x.max(y) > worst.0.max(worst.1) {
            worst.2 = (s.t, at);
        }
        worst.0 = worst.0.max(x);
        worst.1 = worst.1.max(y);
    }
    Ok(ContainmentReport {
        params,
        worst_ratio_x: worst.0,
        worst_ratio_y: worst.1,
        worst_at: worst.2,
        snapshots: run.snapshots.len(),
        exponent_margin: params.exponent_margin(),
        contained: worst.0 < 1.0 && worst.1 < 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupBarrierParams {
    pub dim: usize,
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub t0: f64,
    pub r0: f64,
}

/// Lower bound on `A/B`: `(2d - 3 + sqrt((2d-3)² + 32)) / 2`.
pub fn ratio_threshold(d: usize) -> f64 {
    let c = 2.0 * d as f64 - 3.0;
    (c + (c * c + 32.0).sqrt()) / 2.0
}

/// Admissible open interval for `k`.
pub fn k_interval(d: usize, a: f64, b: f64) -> (f64, f64) {
    let d = d as f64;
    (2.0 * b * (d + 2.0) / (a - b), (a / b - 2.0 * (d - 2.0)).min(d * b / 2.0))
}

pub fn validate_blowup_params(q: &BlowupBarrierParams) -> ValidationReport {
    let (lo, hi) = k_interval(q.dim, q.a, q.b);
    ValidationReport::from_margins(vec![
        ("d >= 5", q.dim as f64 - 4.5),
        ("B > 4", q.b - 4.0),
        ("A/B above threshold", q.a / q.b - ratio_threshold(q.dim)),
        ("k interval nonempty", hi - lo),
        ("k above lower bound", q.k - lo),
        ("k below upper bound", hi - q.k),
        ("t0 >= 0", q.t0 + f64::MIN_POSITIVE),
        ("r0 > 0", q.r0),
    ])
}

/// Residuals of the subsolution at one point, with the scale used for round-off slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionResidual {
    pub n_f: f64,
    pub n_g: f64,
    pub scale_f: f64,
    pub scale_g: f64,
}

/// `f = A/(r⁴ + kτ²)`, `g = B/(r² + kτ)` with `τ = 1 - (t - t₀)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupSubsolution {
    pub params: BlowupBarrierParams,
}

impl BlowupSubsolution {
    pub fn new(params: BlowupBarrierParams) -> Result<Self> {
        validate_blowup_params(&params).into_result()?;
        Ok(BlowupSubsolution { params })
    }

    fn tau(&self, t: f64) -> Result<f64> {
        let tau = 1.0 - (t - self.params.t0);
        if !(tau > 0.0 && tau <= 1.0) {
            return domain(format!("t = {t} outside [t0, t0 + 1)"));
        }
        Ok(tau)
    }

    pub fn f(&self, r: f64, t: f64) -> Result<f64> {
        let tau = self.tau(t)?;
        Ok(self.params.a / (r.powi(4) + self.params.k * tau * tau))
    }

    pub fn g(&self, r: f64, t: f64) -> Result<f64> {
        let tau = self.tau(t)?;
        Ok(self.params.b / (r * r + self.params.k * tau))
    }

    /// `N_f = f_t - f_rr - (d+1)/r f_r - r f_r g - d f g` and
    /// `N_g = g_t - g_rr - (d+1)/r g_r - f` from closed-form derivatives.
    pub fn residual(&self, r: f64, t: f64) -> Result<SubsolutionResidual> {
        let BlowupBarrierParams { dim, a, b, k, .. } = self.params;
        let d = dim as f64;
        let tau = self.tau(t)?;
        let r2 = r * r;
        let den_f = r2 * r2 + k * tau * tau;
        let den_g = r2 + k * tau;
        let f = a / den_f;
        let g = b / den_g;

        let f_t = 2.0 * a * k * tau / (den_f * den_f);
        // f_r / r and f_rr, regular at r = 0.
        let f_r_over_r = -4.0 * a * r2 / (den_f * den_f);
        let f_rr = -12.0 * a * r2 / (den_f * den_f) + 32.0 * a * r2 * r2 * r2 / den_f.powi(3);
        let terms_f = [f_t, -f_rr, -(d + 1.0) * f_r_over_r, -r2 * f_r_over_r * g, -d * f * g];

        let g_t = b * k / (den_g * den_g);
        let g_r_over_r = -2.0 * b / (den_g * den_g);
        let g_rr = -2.0 * b / (den_g * den_g) + 8.0 * b * r2 / den_g.powi(3);
        let terms_g = [g_t, -g_rr, -(d + 1.0) * g_r_over_r, -f];

        let sum = |x: &[f64]| x.iter().sum::<f64>();
        let abs = |x: &[f64]| x.iter().map(|v| v.abs()).sum::<f64>();
        Ok(SubsolutionResidual {
            n_f: sum(&terms_f),
            n_g: sum(&terms_g),
            scale_f: abs(&terms_f),
            scale_g: abs(&terms_g),
        })
    }
}

/// Relative slack granted to residual signs.
pub const RESIDUAL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualScan {
    pub params: BlowupBarrierParams,
    pub points: usize,
    /// Largest `N/scale` over the lattice; nonpositive up to slack for a subsolution.
    pub worst_f: f64,
    pub worst_g: f64,
    pub worst_f_at: (f64, f64),
    pub worst_g_at: (f64, f64),
    pub positive_f: usize,
    pub positive_g: usize,
    pub subsolution: bool,
}

/// Uniform `n_r × n_t` lattice on `[0, r₀] × [t₀, t₀ + 1 - t_gap]`.
pub fn lattice(q: &BlowupBarrierParams, n_r: usize, n_t: usize, t_gap: f64) -> Vec<(f64, f64)> {
    let step =
        |lo: f64, hi: f64, n: usize, i: usize| if n < 2 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(n_r * n_t);
    for j in 0..n_t {
        let t = step(q.t0, q.t0 + 1.0 - t_gap, n_t, j);
        for i in 0..n_r {
            out.push((step(0.0, q.r0, n_r, i), t));
        }
    }
    out
}

pub fn scan_residuals(sub: &BlowupSubsolution, points: &[(f64, f64)]) -> Result<ResidualScan> {
    let mut scan = ResidualScan {
        params: sub.params,
        points: points.len(),
        worst_f: f64::NEG_INFINITY,
        worst_g: f64::NEG_INFINITY,
        worst_f_at: (0.0, 0.0),
        worst_g_at: (0.0, 0.0),
        positive_f: 0,
        positive_g: 0,
        subsolution: false,
    };
    for &(r, t) in points {
        let res = sub.residual(r, t)?;
        let nf = res.n_f / res.scale_f;
        let ng = res.n_g / res.scale_g;
        if nf > scan.worst_f {
            scan.worst_f = nf;
            scan.worst_f_at = (r, t);
        }
        if ng > scan.worst_g {
            scan.worst_g = ng;
            scan.worst_g_at = (r, t);
        }
        scan.positive_f += (nf > RESIDUAL_SLACK) as usize;
        scan.positive_g += (ng > RESIDUAL_SLACK) as usize;
    }
    scan.subsolution = scan.positive_f == 0 && scan.positive_g == 0;
    Ok(scan)
}

/// Draws valid parameter bundles: `B` uniform in `(4, 4.5]`, `A/B` log-uniform in
/// `[1.1·threshold, 10³]`, `k` log-uniform inside its interval. Draws with an empty
/// `k` interval are discarded.
pub fn sample_blowup_params(dim: usize, count: usize, seed: u64, r0: f64) -> Vec<BlowupBarrierParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo_ratio = (1.1 * ratio_threshold(dim)).ln();
    let hi_ratio = 1e3f64.ln();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let b = 4.5 - 0.5 * rng.gen::<f64>();
        let a = b * rng.gen_range(lo_ratio..=hi_ratio).exp();
        let (k_lo, k_hi) = k_interval(dim, a, b);
        if !(k_lo < k_hi) {
            continue;
        }
        let k = rng.gen_range(k_lo.ln()..k_hi.ln()).exp();
        let q = BlowupBarrierParams { dim, a, b, k, t0: 0.0, r0 };
        if validate_blowup_params(&q).valid {
            out.push(q);
        }
    }
    out
}

/// Spatially uniform supersolution `F' = FG`, `G' = F`, `F(0) = M`, `G(0) = sqrt(2M)`:
/// `F = M/(1 - ½ sqrt(2M) t)²`, `G = sqrt(2M)/(1 - ½ sqrt(2M) t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeEnvelope {
    pub m0: f64,
}

impl OdeEnvelope {
    pub fn new(m0: f64) -> Result<Self> {
        if !(m0 > 0.0 && m0.is_finite()) {
            return Err(Error::Config(format!("envelope level must be positive, got {m0}")));
        }
        Ok(OdeEnvelope { m0 })
    }

    fn rate(&self) -> f64 {
        0.5 * (2.0 * self.m0).sqrt()
    }

    /// Window on which `F <= 4M` and `G <= 2 sqrt(2M)`.
    pub fn guaranteed_time(&self) -> f64 {
        1.0 / (2.0 * self.m0).sqrt()
    }

    pub fn pole(&self) -> f64 {
        2.0 / (2.0 * self.m0).sqrt()
    }

    fn denom(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t < self.pole()) {
            return domain(format!("t = {t} outside [0, {})", self.pole()));
        }
        Ok(1.0 - self.rate() * t)
    }

    pub fn f(&self, t: f64) -> Result<f64> {
        let q = self.denom(t)?;
        Ok(self.m0 / (q * q))
    }

    pub fn g(&self, t: f64) -> Result<f64> {
        Ok((2.0 * self.m0).sqrt() / self.denom(t)?)
    }

    pub fn f_prime(&self, t: f64) -> Result<f64> {
        let q = self.denom(t)?;
        Ok(2.0 * self.rate() * self.m0 / (q * q * q))
    }

    pub fn g_prime(&self, t: f64) -> Result<f64> {
        let q = self.denom(t)?;
        Ok(self.rate() * (2.0 * self.m0).sqrt() / (q * q))
    }

    /// Relative residuals of `F' = FG` and `G' = F` at `t`.
    pub fn identity_residuals(&self, t: f64) -> Result<(f64, f64)> {
        let (f, g, fp, gp) = (self.f(t)?, self.g(t)?, self.f_prime(t)?, self.g_prime(t)?);
        Ok(((fp - f * g).abs() / fp.abs(), (gp - f).abs() / gp.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub m0: f64,
    pub t_max: f64,
    pub snapshots: usize,
    /// Largest `sup u / F` and `sup w / G` over the checked snapshots.
    pub worst_ratio_u: f64,
    pub worst_ratio_w: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative slack on the density envelope.
pub const ENVELOPE_TOL: f64 = 1e-6;

/// Compares reconstructed densities of a run with `(F, G)` for snapshots up to `t_max`.
pub fn envelope_check(run: &RunReport, env: &OdeEnvelope, t_max: f64) -> Result<EnvelopeReport> {
    let (u0, w0) = run.snapshots[0].densities()?;
    let tol = ENVELOPE_TOL;
    if u0.sup() > env.m0 * (1.0 + tol) || w0.sup() > (2.0 * env.m0).sqrt() * (1.0 + tol) {
        return precondition("initial densities exceed the envelope data");
    }
    let t_start = run.snapshots[0].t;
    let mut ratio_u = 0.0f64;
    let mut ratio_w = 0.0f64;
    let mut count = 0;
    for s in run.snapshots.iter().filter(|s| s.t - t_start <= t_max) {
        let (u, w) = s.densities()?;
        let t = s.t - t_start;
        ratio_u = ratio_u.max(u.sup() / env.f(t)?);
        ratio_w = ratio_w.max(w.sup() / env.g(t)?);
        count += 1;
    }
    Ok(EnvelopeReport {
        m0: env.m0,
        t_max,
        snapshots: count,
        worst_ratio_u: ratio_u,
        worst_ratio_w: ratio_w,
        tolerance: tol,
        passed: ratio_u <= 1.0 + tol && ratio_w <= 1.0 + tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn morrey_example() -> MorreyBarrierParams {
        let sigma = sphere_measure(7);
        MorreyBarrierParams { dim: 7, p: 2.4, k: 1e3 * sigma, eps: 0.6, eps_prime: 0.7 }
    }

    #[test]
    fn morrey_branches_meet_at_crossovers() {
        let b = MorreyBarriers::new(morrey_example()).unwrap();
        let p = b.params;
        let d = 7.0;
        let r = b.r_upper;
        let inner = p.k * r.powf(d - d / p.p);
        let outer = 8.0 * (d - 2.0) * b.sigma * p.eps * r.powf(d - 4.0);
        assert_relative_eq!(inner, outer, max_relative = 1e-12);
        assert!(b.r_lower <= b.r_upper);
    }

    #[test]
    fn morrey_validation_lists_failures() {
        let bad = MorreyBarrierParams { eps: 0.8, eps_prime: 0.75, ..morrey_example() };
        let rep = bad.validate();
        assert!(!rep.valid);
        let names: Vec<&str> = rep.checks.iter().filter(|c| !c.ok).map(|c| c.name.as_str()).collect();
        assert!(names.contains(&"eps < eps'") && names.contains(&"eps' < d/(4p)"));
        assert!(MorreyBarriers::new(bad).is_err());
    }

    #[test]
    fn threshold_and_k_interval_at_d5() {
        assert_eq!(ratio_threshold(5), 8.0);
        let (lo, hi) = k_interval(5, 410.0, 4.1);
        assert_relative_eq!(lo, 2.0 * 4.1 * 7.0 / 405.9, max_relative = 1e-15);
        assert_relative_eq!(hi, 10.25, max_relative = 1e-15);
        let q = BlowupBarrierParams { dim: 5, a: 410.0, b: 4.0, k: 0.15, t0: 0.0, r0: 5.0 };
        assert!(!validate_blowup_params(&q).valid);
    }

    #[test]
    fn subsolution_origin_values() {
        let q = BlowupBarrierParams { dim: 5, a: 410.0, b: 4.1, k: 0.15, t0: 0.0, r0: 5.0 };
        let s = BlowupSubsolution::new(q).unwrap();
        assert_relative_eq!(s.f(0.0, 0.0).unwrap(), 410.0 / 0.15);
        assert_relative_eq!(s.g(0.0, 0.0).unwrap(), 4.1 / 0.15);
        assert!(s.f(0.0, 1.0 - 1e-6).unwrap() > 1e13);
        assert!(s.f(0.0, 1.0).is_err());
    }

    #[test]
    fn residual_matches_difference_quotients() {
        let q = BlowupBarrierParams { dim: 6, a: 300.0, b: 4.2, k: 0.5, t0: 0.0, r0: 5.0 };
        let s = BlowupSubsolution::new(q).unwrap();
        let (r, t, h) = (0.7, 0.3, 1e-4);
        let f = |r: f64, t: f64| s.f(r, t).unwrap();
        let g = |r: f64, t: f64| s.g(r, t).unwrap();
        let d2 = |u: &dyn Fn(f64, f64) -> f64| (u(r + h, t) - 2.0 * u(r, t) + u(r - h, t)) / (h * h);
        let d1 = |u: &dyn Fn(f64, f64) -> f64| (u(r + h, t) - u(r - h, t)) / (2.0 * h);
        let dt = |u: &dyn Fn(f64, f64) -> f64| (u(r, t + h) - u(r, t - h)) / (2.0 * h);
        let nf = dt(&f) - d2(&f) - 7.0 / r * d1(&f) - r * d1(&f) * g(r, t) - 6.0 * f(r, t) * g(r, t);
        let ng = dt(&g) - d2(&g) - 7.0 / r * d1(&g) - f(r, t);
        let res = s.residual(r, t).unwrap();
        assert!((res.n_f - nf).abs() < 1e-5 * res.scale_f);
        assert!((res.n_g - ng).abs() < 1e-5 * res.scale_g);
    }

    /// Residuals multiplied out into polynomials in `r` and `τ`.
    fn polynomial_residuals(q: &BlowupBarrierParams, r: f64, tau: f64) -> (f64, f64) {
        let (d, a, b, k) = (q.dim as f64, q.a, q.b, q.k);
        let (t, r2) = (tau, r * r);
        let pf = a * (4.0 * (d - 4.0) + (4.0 - d) * b) * r2.powi(4)
            + 2.0 * a * k * t * (2.0 * (d - 4.0) + 1.0) * r2.powi(3)
            + 2.0 * a * k * t * (k * t + 2.0 * (d + 4.0) * t + 2.0 * b * t - d * b * t) * r2 * r2
            + 2.0 * a * k * k * t.powi(3) * (1.0 + 2.0 * (d + 4.0)) * r2
            + a * k * k * t.powi(4) * (2.0 * k - d * b);
        let pg = (b * (k + 2.0 * (d - 2.0)) - a) * r2.powi(3)
            + k * t * (b * k + 2.0 * b + 2.0 * b * (d + 1.0) - 3.0 * a) * r2 * r2
            + k * t * (b * k * t - 6.0 * b * t + 2.0 * b * (d + 1.0) * t - 3.0 * a * k * t) * r2
            + k * k * t.powi(3) * (b * k + 2.0 * b + 2.0 * b * (d + 1.0) - a * k);
        let df = r2 * r2 + k * t * t;
        let dg = r2 + k * t;
        (pf / (df.powi(3) * dg), pg / (dg.powi(3) * df))
    }

    #[test]
    fn residual_matches_polynomial_form() {
        for q in sample_blowup_params(7, 10, 3, 5.0) {
            let s = BlowupSubsolution::new(q).unwrap();
            for &(r, t) in &lattice(&q, 9, 9, 1e-2) {
                let res = s.residual(r, t).unwrap();
                let (pf, pg) = polynomial_residuals(&q, r, 1.0 - t);
                assert!((res.n_f - pf).abs() <= 1e-11 * res.scale_f);
                assert!((res.n_g - pg).abs() <= 1e-11 * res.scale_g);
            }
        }
    }

    #[test]
    fn envelope_closed_form() {
        let e = OdeEnvelope::new(2.0).unwrap();
        assert_eq!(e.f(0.0).unwrap(), 2.0);
        assert_eq!(e.g(0.0).unwrap(), 2.0);
        assert_relative_eq!(e.f(0.5).unwrap(), 8.0, max_relative = 1e-15);
        assert_eq!(e.pole(), 1.0);
        assert!(e.f(1.0).is_err());
        let t = e.guaranteed_time();
        assert!(e.f(t).unwrap() <= 4.0 * 2.0 * (1.0 + 1e-15));
        assert!(e.g(t).unwrap() <= 2.0 * 2.0 * (1.0 + 1e-15));
    }

    #[test]
    fn sampler_is_deterministic_and_valid() {
        let a = sample_blowup_params(5, 20, 7, 5.0);
        assert_eq!(a, sample_blowup_params(5, 20, 7, 5.0));
        assert!(a.iter().all(|q| validate_blowup_params(q).valid && q.b <= 4.5));
    }
}
