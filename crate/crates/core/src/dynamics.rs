//! Evolution of the mass functions
//! `M_t = M_rr + (d+1)/r M_r + r M_r W + d M W`, `W_t = W_rr + (d+1)/r W_r + M`,
//! where `M = r^{-d} ∫ ρ^{d-1} u` and `W` is the same average of `w`.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config, precondition, Error, Result};
use crate::gelfand::{integrate_with_radii, series_start, GelfandParams, ShootingConfig};
use crate::radial::{density_from_mass, derivatives, Parity, RadialField, RadialGrid, NEGATIVITY_SLACK};

#[derive(Debug, Clone, PartialEq)]
pub struct MassState {
    pub m: RadialField,
    pub w: RadialField,
    pub t: f64,
}

impl MassState {
    pub fn new(m: RadialField, w: RadialField, t: f64) -> Result<Self> {
        if m.grid() != w.grid() {
            return config("M and W must live on the same grid");
        }
        if m.parity() != Parity::Even || w.parity() != Parity::Even {
            return config("mass functions must be even fields");
        }
        Ok(MassState { m: m.into_nonnegative()?, w: w.into_nonnegative()?, t })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.m.grid()
    }

    /// `u = d M + r M_r` and `w = d W + r W_r`.
    pub fn densities(&self) -> Result<(RadialField, RadialField)> {
        Ok((density_from_mass(&self.m)?, density_from_mass(&self.w)?))
    }

    /// Both densities are nonnegative up to `tol` relative to their suprema.
    pub fn densities_nonnegative(&self, tol: f64) -> Result<bool> {
        let (u, w) = self.densities()?;
        let ok = |f: &RadialField| {
            let scale = f.sup().max(f64::MIN_POSITIVE);
            f.values().iter().all(|&v| v >= -tol * scale)
        };
        Ok(ok(&u) && ok(&w))
    }

    pub fn scaled(&self, fm: f64, fw: f64) -> Result<Self> {
        MassState::new(self.m.scaled(fm)?, self.w.scaled(fw)?, self.t)
    }
}

/// Stationary masses of the Gelfand trajectory with data `(α, β)`:
/// `M = r^{-1}(Δφ)_r`, `W = -r^{-1} φ_r`, exact consequences of the divergence theorem.
pub fn stationary_mass_pair(alpha: f64, beta: f64, grid: Arc<RadialGrid>, cfg: &ShootingConfig) -> Result<MassState> {
    let d = grid.dim();
    let traj = integrate_with_radii(GelfandParams { dim: d, alpha, beta }, cfg, grid.nodes())?;
    if traj.termination.radius() < grid.r_max() {
        return Err(Error::Numerical(format!(
            "trajectory ends at r = {:.4e}, inside the grid",
            traj.termination.radius()
        )));
    }
    let mut m = Vec::with_capacity(grid.len());
    let mut w = Vec::with_capacity(grid.len());
    for &r in grid.nodes() {
        if r == 0.0 {
            m.push(alpha / d as f64);
            w.push(-beta / d as f64);
        } else if r <= cfg.eps0 {
            let s = series_start(alpha, beta, d, r)?;
            m.push(s.lap_r / r);
            w.push(-s.phi_r / r);
        } else {
            let p = traj.sample_at(r).ok_or_else(|| Error::Numerical(format!("no trajectory sample at r = {r}")))?;
            m.push(p.m / r.powi(4));
            w.push(-p.p / (r * r));
        }
    }
    MassState::new(RadialField::new(grid.clone(), m, Parity::Even)?, RadialField::new(grid, w, Parity::Even)?, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    /// Classical RK4 with the step bounded by the explicit stability limit.
    ExplicitRk4,
    /// Backward Euler in diffusion and (lagged) transport, forward in the reaction.
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBoundary {
    /// Dirichlet data frozen at the initial values.
    Pinned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnapshotSchedule {
    Every { interval: f64 },
    Times { times: Vec<f64> },
}

impl SnapshotSchedule {
    fn times(&self, t0: f64, t_end: f64) -> Result<Vec<f64>> {
        let mut out = match self {
            SnapshotSchedule::Every { interval } => {
                if !(*interval > 0.0) {
                    return config("snapshot interval must be positive");
                }
                let n = ((t_end - t0) / interval - 1e-9).ceil().max(0.0) as usize;
                (1..=n).map(|k| (t0 + k as f64 * interval).min(t_end)).collect::<Vec<_>>()
            }
            SnapshotSchedule::Times { times } => times.iter().cloned().filter(|&t| t > t0 && t <= t_end).collect(),
        };
        if out.last().is_none_or(|&t| t < t_end) {
            out.push(t_end);
        }
        out.dedup();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveConfig {
    pub stepper: Stepper,
    pub cfl: f64,
    pub dt_cap: f64,
    pub dt_min: f64,
    /// Blow-up once `M(0,t)` reaches this multiple of `sup M₀`.
    pub blowup_factor: f64,
    pub t_end: f64,
    pub boundary: OuterBoundary,
    pub snapshots: SnapshotSchedule,
    pub max_steps: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            stepper: Stepper::SemiImplicit,
            cfl: 0.2,
            dt_cap: 1e-3,
            dt_min: 1e-12,
            blowup_factor: 1e6,
            t_end: 1.0,
            boundary: OuterBoundary::Pinned,
            snapshots: SnapshotSchedule::Every { interval: 0.1 },
            max_steps: 50_000_000,
        }
    }
}

impl EvolveConfig {
    fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return config(format!("CFL factor must lie in (0, 0.5], got {}", self.cfl));
        }
        if !(self.blowup_factor >= 1e3) {
            return config("blow-up threshold must be at least 1e3 times the initial supremum");
        }
        if !(self.dt_cap > 0.0 && self.dt_min > 0.0 && self.dt_min < self.dt_cap) {
            return config("need 0 < dt_min < dt_cap");
        }
        if !(self.t_end > 0.0) {
            return config("end time must be positive");
        }
        Ok(())
    }

    pub fn hash(&self, initial: &MassState) -> String {
        let mut h = Sha256::new();
        h.update(format!("{self:?}").as_bytes());
        h.update(initial.grid().descriptor().as_bytes());
        for v in initial.m.values().iter().chain(initial.w.values()) {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Global { t_end: f64 },
    Blowup { t: f64, r_loc: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub t: f64,
    pub m0: f64,
    pub w0: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub grid: String,
    pub steps: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub outcome: Outcome,
    /// Initial state first, then one per scheduled time, plus the final state on blow-up.
    pub snapshots: Vec<MassState>,
    pub history: Vec<HistoryPoint>,
    /// States captured the first time `M(0,t)` passes each power of ten times `sup M₀`.
    pub escalation: Vec<MassState>,
    pub meta: RunMeta,
    pub config: EvolveConfig,
}

impl RunReport {
    pub fn last(&self) -> &MassState {
        self.snapshots.last().unwrap()
    }

    /// Rows `t, r, M, W, u, w` for every snapshot.
    pub fn snapshots_csv(&self) -> Result<String> {
        let mut out = String::from("t,r,M,W,u,w\n");
        for s in &self.snapshots {
            let (u, w) = s.densities()?;
            for (i, r) in s.grid().nodes().iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    s.t,
                    r,
                    s.m.values()[i],
                    s.w.values()[i],
                    u.values()[i],
                    w.values()[i]
                ));
            }
        }
        Ok(out)
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from("t,M0,W0,dt\n");
        for h in &self.history {
            out.push_str(&format!("{},{},{},{}\n", h.t, h.m0, h.w0, h.dt));
        }
        out
    }
}

/// Finite-volume coefficients of `r^{-(d+1)}(r^{d+1} f_r)_r`: row `i` reads
/// `lo[i] (f_{i-1} - f_i) + up[i] (f_{i+1} - f_i)`.
#[derive(Debug, Clone)]
struct Operator {
    lo: Vec<f64>,
    up: Vec<f64>,
    /// Half-width of the centred difference, `r_{i+1} - r_{i-1}`.
    span: Vec<f64>,
    h_up: Vec<f64>,
}

impl Operator {
    fn new(grid: &RadialGrid) -> Self {
        let r = grid.nodes();
        let n = r.len();
        let dd = grid.dim() as f64 + 2.0;
        let mut lo = vec![0.0; n];
        let mut up = vec![0.0; n];
        let mut span = vec![0.0; n];
        let mut h_up = vec![0.0; n];
        for i in 0..n - 1 {
            let rp = 0.5 * (r[i] + r[i + 1]);
            let rm = if i == 0 { 0.0 } else { 0.5 * (r[i - 1] + r[i]) };
            // Cell volume over rp^{dd-1}, kept in ratio form to avoid huge powers.
            let vol = (rp - rm * (rm / rp).powf(dd - 1.0)) / dd;
            up[i] = 1.0 / ((r[i + 1] - r[i]) * vol);
            if i > 0 {
                lo[i] = (rm / rp).powf(dd - 1.0) / ((r[i] - r[i - 1]) * vol);
                span[i] = r[i + 1] - r[i - 1];
            }
            h_up[i] = r[i + 1] - r[i];
        }
        Operator { lo, up, span, h_up }
    }

    fn apply(&self, f: &[f64], i: usize) -> f64 {
        let mut v = self.up[i] * (f[i + 1] - f[i]);
        if i > 0 {
            v += self.lo[i] * (f[i - 1] - f[i]);
        }
        v
    }
}

/// Explicit rates at every node; the pinned outer node has zero rate.
fn rates(op: &Operator, r: &[f64], d: f64, m: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = r.len();
    let mut dm = vec![0.0; n];
    let mut dw = vec![0.0; n];
    for i in 0..n - 1 {
        let adv = if i == 0 { 0.0 } else { r[i] * w[i] * (m[i + 1] - m[i - 1]) / op.span[i] };
        dm[i] = op.apply(m, i) + adv + d * m[i] * w[i];
        dw[i] = op.apply(w, i) + m[i];
    }
    (dm, dw)
}

/// `(dM/dt, dW/dt)` from the semi-discrete system.
pub fn rhs(state: &MassState) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = state.m.values();
    let w = state.w.values();
    if m.iter().chain(w).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite state: blow-up overflow".into()));
    }
    let grid = state.grid();
    let op = Operator::new(grid);
    Ok(rates(&op, grid.nodes(), grid.dim() as f64, m, w))
}

fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], rhs: &mut [f64]) {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut bp = b[0];
    cp[0] = c[0] / bp;
    rhs[0] /= bp;
    for i in 1..n {
        bp = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / bp;
        rhs[i] = (rhs[i] - a[i] * rhs[i - 1]) / bp;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= cp[i] * rhs[i + 1];
    }
}

struct Workspace {
    op: Operator,
    r: Vec<f64>,
    d: f64,
    m_edge: f64,
    w_edge: f64,
}

impl Workspace {
    fn semi_implicit(&self, m: &[f64], w: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
        let n = m.len();
        let (mut a, mut b, mut c) = (vec![0.0; n], vec![1.0; n], vec![0.0; n]);
        let mut rhs_m: Vec<f64> = (0..n).map(|i| m[i] * (1.0 + dt * self.d * w[i])).collect();
        for i in 0..n - 1 {
            let mut lo = self.op.lo[i];
            let mut up = self.op.up[i];
            let mut diag = -(lo + up);
            if i > 0 {
                let vel = self.r[i] * w[i];
                let centred = vel / self.op.span[i];
                if lo >= centred {
                    lo -= centred;
                    up += centred;
                } else {
                    let upwind = vel / self.op.h_up[i];
                    up += upwind;
                    diag -= upwind;
                }
            }
            a[i] = -dt * lo;
            b[i] = 1.0 - dt * diag;
            c[i] = -dt * up;
        }
        rhs_m[n - 1] = self.m_edge;
        solve_tridiagonal(&a, &b, &c, &mut rhs_m);

        let mut rhs_w: Vec<f64> = (0..n).map(|i| w[i] + dt * rhs_m[i]).collect();
        for i in 0..n - 1 {
            a[i] = -dt * self.op.lo[i];
            c[i] = -dt * self.op.up[i];
            b[i] = 1.0 + dt * (self.op.lo[i] + self.op.up[i]);
        }
        rhs_w[n - 1] = self.w_edge;
        solve_tridiagonal(&a, &b, &c, &mut rhs_w);
        (rhs_m, rhs_w)
    }

    fn rk4(&self, m: &[f64], w: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
        let f = |m: &[f64], w: &[f64]| rates(&self.op, &self.r, self.d, m, w);
        let add = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + s * b).collect() };
        let (k1m, k1w) = f(m, w);
        let (k2m, k2w) = f(&add(m, &k1m, dt / 2.0), &add(w, &k1w, dt / 2.0));
        let (k3m, k3w) = f(&add(m, &k2m, dt / 2.0), &add(w, &k2w, dt / 2.0));
        let (k4m, k4w) = f(&add(m, &k3m, dt), &add(w, &k3w, dt));
        let comb = |x: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| -> Vec<f64> {
            (0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
        };
        (comb(m, &k1m, &k2m, &k3m, &k4m), comb(w, &k1w, &k2w, &k3w, &k4w))
    }

    /// Largest stable step for the explicit parts.
    fn dt_limit(&self, stepper: Stepper, cfl: f64, w: &[f64]) -> f64 {
        let n = w.len();
        let react = (0..n).map(|i| self.d * w[i]).fold(0.0, f64::max);
        let mut limit = cfl / react.max(f64::MIN_POSITIVE);
        if stepper == Stepper::ExplicitRk4 {
            for (i, &wi) in w.iter().enumerate().take(n - 1) {
                let adv = if i == 0 { 0.0 } else { self.r[i] * wi / self.op.span[i] };
                let stiff = self.op.lo[i] + self.op.up[i] + 2.0 * adv + self.d * wi;
                limit = limit.min(cfl / stiff);
            }
        }
        limit
    }
}

/// Advances the mass system to `t_end` or to blow-up.
pub fn evolve(initial: &MassState, cfg: &EvolveConfig) -> Result<RunReport> {
    cfg.validate()?;
    let clock = Instant::now();
    let grid = initial.grid().clone();
    if !initial.densities_nonnegative(1e-6)? {
        return precondition("initial data must have nonnegative densities d M + r M_r");
    }
    let n = grid.len();
    let ws = Workspace {
        op: Operator::new(&grid),
        r: grid.nodes().to_vec(),
        d: grid.dim() as f64,
        m_edge: initial.m.values()[n - 1],
        w_edge: initial.w.values()[n - 1],
    };
    let sup0 = initial.m.sup();
    let m_blow = cfg.blowup_factor * sup0.max(f64::MIN_POSITIVE);
    let stops = cfg.snapshots.times(initial.t, initial.t + cfg.t_end)?;
    let mut m = initial.m.values().to_vec();
    let mut w = initial.w.values().to_vec();
    let mut t = initial.t;
    let mut snapshots = vec![initial.clone()];
    let mut history = vec![HistoryPoint { t, m0: m[0], w0: w[0], dt: 0.0 }];
    let mut escalation = Vec::new();
    let mut level = 10.0 * sup0;
    let mut next = 0;
    let mut steps = 0;
    let make = |m: &[f64], w: &[f64], t: f64| -> Result<MassState> {
        let clean = |v: &[f64]| v.iter().map(|&x| if x < 0.0 && x > -NEGATIVITY_SLACK { 0.0 } else { x }).collect();
        MassState::new(
            RadialField::new(grid.clone(), clean(m), Parity::Even)?,
            RadialField::new(grid.clone(), clean(w), Parity::Even)?,
            t,
        )
    };
    let outcome = loop {
        if next == stops.len() {
            break Outcome::Global { t_end: t };
        }
        if m[0] >= m_blow {
            snapshots.push(make(&m, &w, t)?);
            break Outcome::Blowup { t, r_loc: 0.0 };
        }
        let mut dt = cfg.dt_cap.min(ws.dt_limit(cfg.stepper, cfg.cfl, &w));
        if dt < cfg.dt_min {
            snapshots.push(make(&m, &w, t)?);
            break Outcome::Blowup { t, r_loc: grid.nodes()[argmax(&m)] };
        }
        let target = stops[next];
        let land = t + dt >= target * (1.0 - 1e-14);
        if land {
            dt = target - t;
        }
        steps += 1;
        if steps > cfg.max_steps {
            return Err(Error::Numerical(format!("step budget exhausted at t = {t}")));
        }
        let (m1, w1) = match cfg.stepper {
            Stepper::SemiImplicit => ws.semi_implicit(&m, &w, dt),
            Stepper::ExplicitRk4 => ws.rk4(&m, &w, dt),
        };
        if m1.iter().chain(&w1).any(|v| !v.is_finite()) {
            snapshots.push(make(&m, &w, t)?);
            break Outcome::Blowup { t, r_loc: 0.0 };
        }
        m = m1;
        w = w1;
        t = if land { target } else { t + dt };
        history.push(HistoryPoint { t, m0: m[0], w0: w[0], dt });
        if sup0 > 0.0 && m[0] >= level {
            escalation.push(make(&m, &w, t)?);
            while m[0] >= level {
                level *= 10.0;
            }
        }
        if land {
            snapshots.push(make(&m, &w, t)?);
            next += 1;
        }
    };
    Ok(RunReport {
        outcome,
        snapshots,
        history,
        escalation,
        meta: RunMeta {
            config_hash: cfg.hash(initial),
            grid: grid.descriptor(),
            steps,
            wall_seconds: clock.elapsed().as_secs_f64(),
        },
        config: cfg.clone(),
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc }).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub t_star: f64,
    pub m_origin: f64,
    /// `sup_{r >= r_far} M` at the blow-up time.
    pub far_sup: f64,
    pub r_far: f64,
    pub ratio: f64,
    /// Growth factors of the far supremum and of `M(0)` since the last escalation state.
    pub far_growth: f64,
    pub origin_growth: f64,
    /// `ln(far_growth) / ln(origin_growth)`; tends to zero for a point blow-up.
    pub growth_exponent: f64,
    pub localized: bool,
}

/// Largest `sup_{r >= r_far} M / M(0)` accepted as concentration at the origin.
pub const LOCALIZATION_RATIO: f64 = 0.05;
/// Largest accepted growth exponent of the far supremum relative to `M(0)`.
pub const LOCALIZATION_EXPONENT: f64 = 0.5;

/// Checks that a blow-up concentrates at the origin: the mass away from `r_far`
/// is small against `M(0)` and has essentially stopped growing.
pub fn blowup_localization(run: &RunReport, r_far: f64) -> Result<LocalizationReport> {
    let Outcome::Blowup { t, .. } = run.outcome else {
        return precondition("the run did not blow up");
    };
    let last = run.last();
    let r = last.grid().nodes();
    if !(r_far > 0.0 && r_far < last.grid().r_max()) {
        return config("r_far must lie inside the grid");
    }
    let far =
        |s: &MassState| r.iter().zip(s.m.values()).filter(|(&x, _)| x >= r_far).map(|(_, &v)| v).fold(0.0, f64::max);
    let m_origin = last.m.values()[0];
    let far_sup = far(last);
    let prior = run.escalation.iter().rev().find(|s| s.m.values()[0] <= 0.5 * m_origin);
    let (far_growth, origin_growth) = match prior {
        Some(p) => (far_sup / far(p).max(f64::MIN_POSITIVE), m_origin / p.m.values()[0]),
        None => (f64::NAN, f64::NAN),
    };
    let growth_exponent = far_growth.ln() / origin_growth.ln();
    let ratio = far_sup / m_origin;
    Ok(LocalizationReport {
        t_star: t,
        m_origin,
        far_sup,
        r_far,
        ratio,
        far_growth,
        origin_growth,
        growth_exponent,
        localized: ratio <= LOCALIZATION_RATIO && growth_exponent <= LOCALIZATION_EXPONENT,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub max_violation_m: f64,
    pub max_violation_w: f64,
    pub tolerance: f64,
    pub snapshots: usize,
    pub passed: bool,
}

/// Discretisation allowance `C h²` used by [`ordering_check`], with `h` the largest spacing.
pub const ORDERING_ALLOWANCE: f64 = 1e-3;

/// Checks `A <= B` componentwise at every common snapshot.
pub fn ordering_check(a: &RunReport, b: &RunReport) -> Result<OrderingReport> {
    let ga = a.snapshots[0].grid();
    let gb = b.snapshots[0].grid();
    if ga.nodes() != gb.nodes() || ga.dim() != gb.dim() {
        return config("runs were computed on different grids");
    }
    let (a0, b0) = (&a.snapshots[0], &b.snapshots[0]);
    let swapped = |x: &RadialField, y: &RadialField| x.values().iter().zip(y.values()).any(|(p, q)| p > q);
    if swapped(&a0.m, &b0.m) || swapped(&a0.w, &b0.w) {
        return precondition("initial data are not ordered");
    }
    let mut vm = 0.0f64;
    let mut vw = 0.0f64;
    let mut count = 0;
    let mut scale = 0.0f64;
    for sa in &a.snapshots {
        let Some(sb) = b.snapshots.iter().find(|s| s.t == sa.t) else { continue };
        count += 1;
        for (p, q) in sa.m.values().iter().zip(sb.m.values()) {
            vm = vm.max(p - q);
        }
        for (p, q) in sa.w.values().iter().zip(sb.w.values()) {
            vw = vw.max(p - q);
        }
        scale = scale.max(sb.m.sup()).max(sb.w.sup());
    }
    if count < 2 {
        return config("runs share fewer than two snapshot times");
    }
    let tolerance = 1e-8 + ORDERING_ALLOWANCE * ga.h_max().powi(2) * scale;
    Ok(OrderingReport {
        max_violation_m: vm,
        max_violation_w: vw,
        tolerance,
        snapshots: count,
        passed: vm <= tolerance && vw <= tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Nonincreasing,
    Nondecreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub expected: Trend,
    /// Fraction of free nodes whose every consecutive time difference follows the trend.
    pub time_fraction_m: f64,
    pub time_fraction_w: f64,
    /// Fraction of (snapshot, node) pairs where reconstructed `u`, `w` do not increase in `r`.
    pub radial_fraction_u: f64,
    pub radial_fraction_w: f64,
    pub radial_expected: bool,
    /// Per node, `-1`, `0` or `1` for decreasing, mixed or increasing in time.
    pub time_signs_m: Vec<i8>,
    pub time_signs_w: Vec<i8>,
    pub threshold: f64,
    pub passed: bool,
}

/// Round-off allowance for sign decisions, relative to the run's scale.
const SIGN_TOL: f64 = 1e-10;

pub fn monotonicity_diagnostics(run: &RunReport, expected: Trend) -> Result<MonotonicityReport> {
    if run.snapshots.len() < 3 {
        return precondition("need at least three snapshots");
    }
    let n = run.snapshots[0].grid().len();
    let scale_m = run.snapshots.iter().map(|s| s.m.sup()).fold(0.0, f64::max);
    let scale_w = run.snapshots.iter().map(|s| s.w.sup()).fold(0.0, f64::max);
    let signs = |get: &dyn Fn(&MassState) -> &[f64], scale: f64| -> Vec<i8> {
        (0..n)
            .map(|i| {
                let mut up = false;
                let mut down = false;
                for p in run.snapshots.windows(2) {
                    let diff = get(&p[1])[i] - get(&p[0])[i];
                    up |= diff > SIGN_TOL * scale;
                    down |= diff < -SIGN_TOL * scale;
                }
                match (up, down) {
                    (true, false) => 1,
                    (false, true) => -1,
                    (false, false) => 0,
                    (true, true) => 2,
                }
            })
            .collect()
    };
    let sm = signs(&|s| s.m.values(), scale_m);
    let sw = signs(&|s| s.w.values(), scale_w);
    let bad = match expected {
        Trend::Nonincreasing => 1,
        Trend::Nondecreasing => -1,
    };
    // The pinned outer node is excluded.
    let fraction = |s: &[i8]| s[..n - 1].iter().filter(|&&x| x != bad && x != 2).count() as f64 / (n - 1) as f64;
    let collapse = |s: Vec<i8>| s.into_iter().map(|x| if x == 2 { 0 } else { x }).collect::<Vec<i8>>();

    let mut pairs = 0usize;
    let mut ok_u = 0usize;
    let mut ok_w = 0usize;
    for s in &run.snapshots {
        let (u, w) = s.densities()?;
        let su = u.sup();
        let sw = w.sup();
        for i in 0..n - 1 {
            pairs += 1;
            ok_u += (u.values()[i + 1] - u.values()[i] <= SIGN_TOL.sqrt() * su) as usize;
            ok_w += (w.values()[i + 1] - w.values()[i] <= SIGN_TOL.sqrt() * sw) as usize;
        }
    }
    let (u0, w0) = run.snapshots[0].densities()?;
    let radial_expected = [u0, w0].iter().all(|f| {
        let s = f.sup();
        f.values().windows(2).all(|p| p[1] - p[0] <= SIGN_TOL.sqrt() * s)
    });
    let threshold = 0.99;
    let tm = fraction(&sm);
    let tw = fraction(&sw);
    let ru = ok_u as f64 / pairs as f64;
    let rw = ok_w as f64 / pairs as f64;
    let passed = tm >= threshold && tw >= threshold && (!radial_expected || (ru >= threshold && rw >= threshold));
    Ok(MonotonicityReport {
        expected,
        time_fraction_m: tm,
        time_fraction_w: tw,
        radial_fraction_u: ru,
        radial_fraction_w: rw,
        radial_expected,
        time_signs_m: collapse(sm),
        time_signs_w: collapse(sw),
        threshold,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `sup |rate| / sup |diffusion|` of the extrapolated limit.
    pub residual_m: f64,
    pub residual_w: f64,
    /// Largest change between the last snapshot and the extrapolated limit, relative.
    pub drift: f64,
    /// `r^d M_∞` and `r^d W_∞` at the first nonzero node.
    pub origin_moment_m: f64,
    pub origin_moment_w: f64,
    /// Minima over the tail window of `r⁴ u_∞` and `r² w_∞`.
    pub tail_min_u: f64,
    pub tail_min_w: f64,
    pub tail_window: (f64, f64),
    #[serde(skip)]
    pub limit: Option<MassState>,
}

/// Normalised stationary residual of a mass pair.
pub fn stationary_rate(state: &MassState) -> Result<(f64, f64)> {
    let grid = state.grid();
    let op = Operator::new(grid);
    let (dm, dw) = rhs(state)?;
    let n = grid.len();
    let m = state.m.values();
    let w = state.w.values();
    let dm_scale = (0..n - 1).map(|i| op.apply(m, i).abs()).fold(0.0, f64::max);
    let dw_scale = (0..n - 1).map(|i| op.apply(w, i).abs()).fold(0.0, f64::max);
    let sup = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    Ok((sup(&dm) / dm_scale.max(f64::MIN_POSITIVE), sup(&dw) / dw_scale.max(f64::MIN_POSITIVE)))
}

/// Extrapolates the late-time limit of a monotone global run.
pub fn convergence_to_steady(run: &RunReport) -> Result<ConvergenceReport> {
    if !matches!(run.outcome, Outcome::Global { .. }) {
        return precondition("the run did not reach its end time");
    }
    let mono = monotonicity_diagnostics(run, Trend::Nonincreasing)?;
    if mono.time_fraction_m < mono.threshold || mono.time_fraction_w < mono.threshold {
        return precondition("the run is not monotone in time; extrapolation refused");
    }
    let k = run.snapshots.len();
    let (s1, s2, s3) = (&run.snapshots[k - 3], &run.snapshots[k - 2], &run.snapshots[k - 1]);
    let aitken = |a: &[f64], b: &[f64], c: &[f64]| -> Vec<f64> {
        (0..a.len())
            .map(|i| {
                let d1 = b[i] - a[i];
                let d2 = c[i] - b[i];
                let den = d2 - d1;
                // Only extrapolate geometric, same-signed decay.
                if d1 * d2 > 0.0 && d2.abs() < d1.abs() && den.abs() > 0.0 {
                    (c[i] - d2 * d2 / den).max(0.0)
                } else {
                    c[i]
                }
            })
            .collect()
    };
    let grid = s3.grid().clone();
    let m_inf = aitken(s1.m.values(), s2.m.values(), s3.m.values());
    let w_inf = aitken(s1.w.values(), s2.w.values(), s3.w.values());
    let drift = {
        let rel = |x: &[f64], y: &[f64]| {
            let s = y.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / s
        };
        rel(&m_inf, s3.m.values()).max(rel(&w_inf, s3.w.values()))
    };
    let limit = MassState::new(
        RadialField::new(grid.clone(), m_inf, Parity::Even)?,
        RadialField::new(grid.clone(), w_inf, Parity::Even)?,
        f64::INFINITY,
    )?;
    let (residual_m, residual_w) = stationary_rate(&limit)?;
    let r = grid.nodes();
    let d = grid.dim() as i32;
    let (u, w) = limit.densities()?;
    let tail_window = (grid.r_max() / 4.0, grid.r_max() / 2.0);
    let tail: Vec<usize> = (0..r.len()).filter(|&i| r[i] >= tail_window.0 && r[i] <= tail_window.1).collect();
    let tail_min_u = tail.iter().map(|&i| r[i].powi(4) * u.values()[i]).fold(f64::INFINITY, f64::min);
    let tail_min_w = tail.iter().map(|&i| r[i].powi(2) * w.values()[i]).fold(f64::INFINITY, f64::min);
    Ok(ConvergenceReport {
        residual_m,
        residual_w,
        drift,
        origin_moment_m: r[1].powi(d) * limit.m.values()[1],
        origin_moment_w: r[1].powi(d) * limit.w.values()[1],
        tail_min_u,
        tail_min_w,
        tail_window,
        limit: Some(limit),
    })
}

/// `r M_r + d M` from a mass vector, as used by comparison hypotheses.
pub fn reconstructed_density(grid: &RadialGrid, m: &[f64]) -> Vec<f64> {
    let r = grid.nodes();
    let (d1, _) = derivatives(r, m, Parity::Even);
    (0..r.len()).map(|i| grid.dim() as f64 * m[i] + r[i] * d1[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant_state(m0: f64, w0: f64) -> MassState {
        let g = Arc::new(RadialGrid::stretched(7, 64, 5.0, 10.0).unwrap());
        MassState::new(
            RadialField::from_fn(g.clone(), Parity::Even, |_| m0).unwrap(),
            RadialField::from_fn(g, Parity::Even, |_| w0).unwrap(),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn uniform_state_reduces_to_ode() {
        let (dm, dw) = rhs(&constant_state(0.3, 0.7)).unwrap();
        for i in 0..dm.len() - 1 {
            assert_relative_eq!(dm[i], 7.0 * 0.3 * 0.7, max_relative = 1e-12);
            assert_relative_eq!(dw[i], 0.3, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_is_fixed() {
        let s = constant_state(0.0, 0.0);
        let (dm, dw) = rhs(&s).unwrap();
        assert!(dm.iter().chain(&dw).all(|&v| v == 0.0));
        let run = evolve(&s, &EvolveConfig { t_end: 0.2, ..Default::default() }).unwrap();
        assert!(matches!(run.outcome, Outcome::Global { .. }));
        assert!(run.last().m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn origin_row_is_d_plus_2_laplacian() {
        let g = RadialGrid::uniform(7, 32, 1.0).unwrap();
        let op = Operator::new(&g);
        let h = g.spacing(0);
        assert_relative_eq!(op.up[0], 2.0 * 9.0 / (h * h), max_relative = 1e-12);
        // r² has (d+2)-dimensional Laplacian 2(d+2) everywhere.
        let f: Vec<f64> = g.nodes().iter().map(|r| r * r).collect();
        for i in 0..g.len() - 1 {
            assert_relative_eq!(op.apply(&f, i), 18.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn bad_config_rejected() {
        let s = constant_state(0.1, 0.1);
        assert!(evolve(&s, &EvolveConfig { cfl: 0.7, ..Default::default() }).is_err());
        assert!(evolve(&s, &EvolveConfig { blowup_factor: 10.0, ..Default::default() }).is_err());
    }
}
