//! Radial grids, radially symmetric fields and the integral operators built on them.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, precondition, Error, Result};

pub const MIN_DIM: usize = 5;
pub const MIN_INTERVALS: usize = 16;
/// Largest admissible ratio between neighbouring spacings.
pub const MAX_SPACING_RATIO: f64 = 1.2;

/// Tolerance below which a "nonnegative" field may dip before it is rejected.
pub const NEGATIVITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grading {
    Uniform,
    /// `r = R sinh(kappa xi) / sinh(kappa)` on a uniform `xi` lattice, with
    /// `cosh(kappa)` equal to the requested ratio of outer to inner spacing.
    Stretched {
        refinement: f64,
    },
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    dim: usize,
    nodes: Vec<f64>,
    grading: Grading,
}

impl RadialGrid {
    pub fn uniform(dim: usize, intervals: usize, r_max: f64) -> Result<Self> {
        check_shape(dim, intervals, r_max)?;
        let h = r_max / intervals as f64;
        let mut nodes: Vec<f64> = (0..=intervals).map(|i| i as f64 * h).collect();
        nodes[intervals] = r_max;
        Self::validated(dim, nodes, Grading::Uniform)
    }

    /// Grid clustered towards the origin. `refinement` is the ratio between
    /// the outermost and innermost spacing; 1 gives the uniform grid.
    pub fn stretched(dim: usize, intervals: usize, r_max: f64, refinement: f64) -> Result<Self> {
        check_shape(dim, intervals, r_max)?;
        if !(refinement >= 1.0) || !refinement.is_finite() {
            return config(format!("refinement factor must be >= 1, got {refinement}"));
        }
        if refinement == 1.0 {
            return Self::uniform(dim, intervals, r_max);
        }
        let kappa = refinement.acosh();
        let denom = kappa.sinh();
        let n = intervals as f64;
        let mut nodes: Vec<f64> = (0..=intervals).map(|i| r_max * (kappa * i as f64 / n).sinh() / denom).collect();
        nodes[0] = 0.0;
        nodes[intervals] = r_max;
        Self::validated(dim, nodes, Grading::Stretched { refinement })
    }

    pub fn from_nodes(dim: usize, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < MIN_INTERVALS + 1 {
            return config(format!(
                "grid needs at least {MIN_INTERVALS} intervals, got {}",
                nodes.len().saturating_sub(1)
            ));
        }
        check_shape(dim, nodes.len() - 1, *nodes.last().unwrap())?;
        Self::validated(dim, nodes, Grading::Custom)
    }

    fn validated(dim: usize, nodes: Vec<f64>, grading: Grading) -> Result<Self> {
        if nodes[0] != 0.0 {
            return config("first grid node must be the origin");
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return config("grid nodes must be finite and strictly increasing");
            }
        }
        let grid = RadialGrid { dim, nodes, grading };
        let ratio = grid.max_spacing_ratio();
        if ratio > MAX_SPACING_RATIO * (1.0 + 1e-9) {
            return config(format!("neighbouring spacings differ by a factor {ratio:.4} (> {MAX_SPACING_RATIO})"));
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    pub fn spacing(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn h_min(&self) -> f64 {
        (0..self.intervals()).map(|i| self.spacing(i)).fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        (0..self.intervals()).map(|i| self.spacing(i)).fold(0.0, f64::max)
    }

    /// Largest ratio between adjacent spacings, taken in whichever order exceeds 1.
    pub fn max_spacing_ratio(&self) -> f64 {
        (1..self.intervals())
            .map(|i| {
                let q = self.spacing(i) / self.spacing(i - 1);
                q.max(1.0 / q)
            })
            .fold(1.0, f64::max)
    }

    /// Same family of grid with twice as many intervals.
    pub fn refined(&self) -> Result<Self> {
        let n = 2 * self.intervals();
        match self.grading {
            Grading::Uniform => Self::uniform(self.dim, n, self.r_max()),
            Grading::Stretched { refinement } => Self::stretched(self.dim, n, self.r_max(), refinement),
            Grading::Custom => {
                let mut nodes = Vec::with_capacity(n + 1);
                for w in self.nodes.windows(2) {
                    nodes.push(w[0]);
                    nodes.push(0.5 * (w[0] + w[1]));
                }
                nodes.push(self.r_max());
                Self::from_nodes(self.dim, nodes)
            }
        }
    }

    pub fn descriptor(&self) -> String {
        match self.grading {
            Grading::Uniform => format!("uniform d={} N={} R={}", self.dim, self.intervals(), self.r_max()),
            Grading::Stretched { refinement } => {
                format!("stretched d={} N={} R={} refinement={}", self.dim, self.intervals(), self.r_max(), refinement)
            }
            Grading::Custom => format!("custom d={} N={} R={}", self.dim, self.intervals(), self.r_max()),
        }
    }

    /// Index `i` with `nodes[i] < r <= nodes[i+1]`; `r` must lie in `(0, R]`.
    fn interval_of(&self, r: f64) -> usize {
        let p = self.nodes.partition_point(|&x| x < r);
        p.saturating_sub(1).min(self.intervals() - 1)
    }
}

fn check_shape(dim: usize, intervals: usize, r_max: f64) -> Result<()> {
    if dim < MIN_DIM {
        return config(format!("dimension must be at least {MIN_DIM}, got {dim}"));
    }
    if intervals < MIN_INTERVALS {
        return config(format!("grid too coarse: {intervals} intervals (need >= {MIN_INTERVALS})"));
    }
    if !(r_max > 0.0) || !r_max.is_finite() {
        return config(format!("outer radius must be positive and finite, got {r_max}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    /// Smooth and even in `r`; the value at the origin is meaningful.
    Even,
    /// Singular at the origin; the stored value there is NaN and ignored.
    Singular,
}

impl Parity {
    fn label(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Singular => "singular",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    parity: Parity,
    nonnegative: bool,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, mut values: Vec<f64>, parity: Parity) -> Result<Self> {
        if values.len() != grid.len() {
            return config(format!("field has {} values on a grid with {} nodes", values.len(), grid.len()));
        }
        let start = match parity {
            Parity::Even => 0,
            Parity::Singular => {
                values[0] = f64::NAN;
                1
            }
        };
        if let Some(i) = (start..values.len()).find(|&i| !values[i].is_finite()) {
            return Err(Error::Numerical(format!("non-finite value {} at r = {}", values[i], grid.nodes()[i])));
        }
        Ok(RadialField { grid, values, parity, nonnegative: false })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, parity: Parity, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values, parity)
    }

    /// Tags the field as nonnegative, clearing round-off negatives.
    pub fn into_nonnegative(mut self) -> Result<Self> {
        let start = self.first_index();
        for i in start..self.values.len() {
            let v = self.values[i];
            if v < -NEGATIVITY_SLACK {
                return precondition(format!("value {v} at r = {} is negative", self.grid.nodes()[i]));
            }
            if v < 0.0 {
                self.values[i] = 0.0;
            }
        }
        self.nonnegative = true;
        Ok(self)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// First node carrying a meaningful value.
    pub fn first_index(&self) -> usize {
        match self.parity {
            Parity::Even => 0,
            Parity::Singular => 1,
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let values = self.values.iter().map(|v| v * factor).collect();
        Self::new(self.grid.clone(), values, self.parity)
    }

    /// Supremum over the meaningful nodes.
    pub fn sup(&self) -> f64 {
        self.values[self.first_index()..].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# d={} parity={}\nr,value\n", self.dim(), self.parity.label());
        for (r, v) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(out, "{r},{v}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty field file".into()))?;
        let mut dim = None;
        let mut parity = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("d=") {
                dim = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("parity=") {
                parity = match v {
                    "even" => Some(Parity::Even),
                    "singular" => Some(Parity::Singular),
                    _ => None,
                };
            }
        }
        let (Some(dim), Some(parity)) = (dim, parity) else {
            return config("field header must carry d=<int> and parity=<even|singular>");
        };
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty() && !l.starts_with("r,")) {
            let (r, v) = line.split_once(',').ok_or_else(|| Error::Config(format!("malformed row `{line}`")))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("`{s}`: {e}")));
            nodes.push(parse(r)?);
            values.push(parse(v)?);
        }
        let grid = Arc::new(RadialGrid::from_nodes(dim, nodes)?);
        Self::new(grid, values, parity)
    }
}

/// Surface measure of the unit sphere in `R^d`, `2 pi^{d/2} / Gamma(d/2)`.
pub fn sphere_measure(d: usize) -> f64 {
    use std::f64::consts::PI;
    // Gamma at integers and half-integers by upward recursion.
    let (mut x, mut gamma) = if d.is_multiple_of(2) { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    while x < d as f64 / 2.0 {
        gamma *= x;
        x += 1.0;
    }
    2.0 * PI.powf(d as f64 / 2.0) / gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Product rule with a power-law interpolant on each interval where both
    /// end values are positive, and a linear interpolant otherwise.
    #[default]
    PowerLaw,
    Trapezoid,
}

/// `int_a^x rho^{d-1} g(rho) drho` where `g` interpolates `(a, fa)` and `(b, fb)`.
fn segment_moment(a: f64, b: f64, fa: f64, fb: f64, d: f64, x: f64, rule: Quadrature) -> f64 {
    if x <= a {
        return 0.0;
    }
    match rule {
        Quadrature::Trapezoid => {
            let gx = fa + (fb - fa) * (x - a) / (b - a);
            0.5 * (x - a) * (a.powf(d - 1.0) * fa + x.powf(d - 1.0) * gx)
        }
        Quadrature::PowerLaw if a > 0.0 && fa > 0.0 && fb > 0.0 => {
            let l = (b / a).ln();
            let k = (fb / fa).ln() / l;
            fa * a.powf(d) * expm1_ratio(d + k, (x / a).ln())
        }
        Quadrature::PowerLaw => {
            let slope = (fb - fa) / (b - a);
            if a == 0.0 {
                fa * x.powf(d) / d + slope * x.powf(d + 1.0) / (d + 1.0)
            } else {
                let l = (x / a).ln();
                let m0 = a.powf(d) * expm1_ratio(d, l);
                let m1 = a.powf(d + 1.0) * (expm1_ratio(d + 1.0, l) - expm1_ratio(d, l));
                fa * m0 + slope * m1
            }
        }
    }
}

/// `(e^{c l} - 1) / c`, continuous through `c = 0`.
fn expm1_ratio(c: f64, l: f64) -> f64 {
    if (c * l).abs() < 1e-300 {
        l
    } else {
        (c * l).exp_m1() / c
    }
}

/// `int_0^x rho^{d-1} f` over the first interval of a singular field,
/// extrapolating the behaviour on `[r1, r2]` down to the origin.
fn singular_head_moment(r1: f64, r2: f64, f1: f64, f2: f64, d: f64, x: f64) -> Result<f64> {
    if f1 > 0.0 && f2 > 0.0 {
        let k = (f2 / f1).ln() / (r2 / r1).ln();
        if d + k <= 0.0 {
            return domain(format!(
                "field behaves like r^{k:.3} near the origin and is not integrable against r^{}",
                d - 1.0
            ));
        }
        Ok(f1 * r1.powf(-k) * x.powf(d + k) / (d + k))
    } else {
        let slope = (f2 - f1) / (r2 - r1);
        Ok((f1 - slope * r1) * x.powf(d) / d + slope * x.powf(d + 1.0) / (d + 1.0))
    }
}

/// Running integrals `J_i = int_0^{r_i} rho^{d-1} f(rho) drho`.
pub fn cumulative_moment(f: &RadialField, rule: Quadrature) -> Result<Vec<f64>> {
    let r = f.grid.nodes();
    let v = &f.values;
    let d = f.dim() as f64;
    let mut j = vec![0.0; r.len()];
    let start = match f.parity {
        Parity::Even => 0,
        Parity::Singular => {
            j[1] = singular_head_moment(r[1], r[2], v[1], v[2], d, r[1])?;
            1
        }
    };
    for i in start..r.len() - 1 {
        j[i + 1] = j[i] + segment_moment(r[i], r[i + 1], v[i], v[i + 1], d, r[i + 1], rule);
    }
    Ok(j)
}

/// `J(x)` at an arbitrary `x in (0, R]`, consistent with [`cumulative_moment`].
fn moment_at(f: &RadialField, j: &[f64], x: f64, rule: Quadrature) -> Result<f64> {
    let r = f.grid.nodes();
    let v = &f.values;
    let d = f.dim() as f64;
    let i = f.grid.interval_of(x);
    if i == 0 && f.parity == Parity::Singular {
        return singular_head_moment(r[1], r[2], v[1], v[2], d, x);
    }
    Ok(j[i] + segment_moment(r[i], r[i + 1], v[i], v[i + 1], d, x, rule))
}

/// Mean value over balls, `M(r) = r^{-d} int_0^r rho^{d-1} f`.
pub fn cumulative_mass(f: &RadialField, rule: Quadrature) -> Result<RadialField> {
    let j = cumulative_moment(f, rule)?;
    let d = f.dim() as f64;
    let r = f.grid.nodes();
    let mut m: Vec<f64> = j.iter().zip(r).map(|(j, r)| j / r.powf(d)).collect();
    m[0] = f.values[0] / d;
    let out = RadialField::new(f.grid.clone(), m, f.parity)?;
    if f.nonnegative {
        out.into_nonnegative()
    } else {
        Ok(out)
    }
}

/// Three-point Lagrange weights for the first and second derivative at `x`.
fn stencil(xs: [f64; 3], x: f64) -> ([f64; 3], [f64; 3]) {
    let mut d1 = [0.0; 3];
    let mut d2 = [0.0; 3];
    for k in 0..3 {
        let (a, b) = match k {
            0 => (xs[1], xs[2]),
            1 => (xs[0], xs[2]),
            _ => (xs[0], xs[1]),
        };
        let denom = (xs[k] - a) * (xs[k] - b);
        d1[k] = ((x - a) + (x - b)) / denom;
        d2[k] = 2.0 / denom;
    }
    (d1, d2)
}

/// First and second radial derivatives at every meaningful node.
pub(crate) fn derivatives(r: &[f64], v: &[f64], parity: Parity) -> (Vec<f64>, Vec<f64>) {
    let n = r.len();
    let mut d1 = vec![f64::NAN; n];
    let mut d2 = vec![f64::NAN; n];
    let first = match parity {
        Parity::Even => {
            d1[0] = 0.0;
            d2[0] = 2.0 * (v[1] - v[0]) / (r[1] * r[1]);
            1
        }
        Parity::Singular => 1,
    };
    for i in first..n {
        let c = if i == n - 1 {
            i - 1
        } else if i == 1 && parity == Parity::Singular {
            2
        } else {
            i
        };
        let xs = [r[c - 1], r[c], r[c + 1]];
        let (w1, w2) = stencil(xs, r[i]);
        let ys = [v[c - 1], v[c], v[c + 1]];
        d1[i] = (0..3).map(|k| w1[k] * ys[k]).sum();
        d2[i] = (0..3).map(|k| w2[k] * ys[k]).sum();
    }
    (d1, d2)
}

/// `f_r` on the grid; zero at the origin for even fields.
pub fn radial_derivative(f: &RadialField) -> Result<RadialField> {
    let (d1, _) = derivatives(f.grid.nodes(), &f.values, f.parity);
    RadialField::new(f.grid.clone(), d1, f.parity)
}

/// `f_rr + (d-1)/r f_r`, with `d f_rr(0)` at the origin of an even field.
pub fn radial_laplacian(f: &RadialField) -> Result<RadialField> {
    let r = f.grid.nodes();
    let d = f.dim() as f64;
    let (d1, d2) = derivatives(r, &f.values, f.parity);
    let mut lap: Vec<f64> =
        (0..r.len()).map(|i| if r[i] > 0.0 { d2[i] + (d - 1.0) / r[i] * d1[i] } else { f64::NAN }).collect();
    if f.parity == Parity::Even {
        lap[0] = d * d2[0];
    }
    RadialField::new(f.grid.clone(), lap, f.parity)
}

/// Recovers the density from its ball averages, `u = d M + r M_r`.
pub fn density_from_mass(m: &RadialField) -> Result<RadialField> {
    let r = m.grid.nodes();
    let d = m.dim() as f64;
    let (d1, _) = derivatives(r, &m.values, m.parity);
    let u = (0..r.len()).map(|i| d * m.values[i] + r[i] * d1[i]).collect();
    RadialField::new(m.grid.clone(), u, m.parity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorreyQuery {
    /// The `s` in `R^{s-d} int_{B_R} f`; 4 for densities, 2 for signals.
    pub exponent: f64,
    pub radii: Vec<f64>,
    /// Level against which sign changes of the profile are counted.
    pub level: Option<f64>,
    /// Relative dead band around `level`; crossings inside it are not counted.
    pub band: f64,
    pub rule: Quadrature,
}

impl MorreyQuery {
    pub fn log_spaced(exponent: f64, r_lo: f64, r_hi: f64, count: usize) -> Self {
        let radii = log_space(r_lo, r_hi, count);
        MorreyQuery { exponent, radii, level: None, band: 0.0, rule: Quadrature::default() }
    }

    pub fn with_level(mut self, level: f64, band: f64) -> Self {
        self.level = Some(level);
        self.band = band;
        self
    }
}

pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let n = count.max(2) - 1;
    (0..=n).map(|i| (a + (b - a) * i as f64 / n as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorreyProfile {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub sup: f64,
    pub argmax: f64,
    pub sign_changes: Option<usize>,
    /// Some requested radii lay beyond the grid and were dropped.
    pub truncated: bool,
}

/// `I(R) = sigma_d R^{s-d} int_0^R rho^{d-1} f(rho) drho` at the query radii.
pub fn morrey_profile(f: &RadialField, q: &MorreyQuery) -> Result<MorreyProfile> {
    if q.radii.len() < 2 {
        return config("Morrey profile needs at least two radii");
    }
    if q.radii[0] <= 0.0 || q.radii.windows(2).any(|w| !(w[1] > w[0])) {
        return config("Morrey radii must be positive and strictly increasing");
    }
    if q.radii[q.radii.len() - 1] / q.radii[0] < 1e4 * (1.0 - 1e-12) {
        return config("Morrey radii must span at least four decades");
    }
    let j = cumulative_moment(f, q.rule)?;
    let d = f.dim() as f64;
    let sigma = sphere_measure(f.dim());
    let r_max = f.grid.r_max();
    let radii: Vec<f64> = q.radii.iter().cloned().filter(|&x| x <= r_max * (1.0 + 1e-12)).collect();
    let truncated = radii.len() < q.radii.len();
    if radii.is_empty() {
        return config("every Morrey radius lies beyond the grid");
    }
    let values = radii
        .iter()
        .map(|&x| {
            let x = x.min(r_max);
            Ok(sigma * x.powf(q.exponent - d) * moment_at(f, &j, x, q.rule)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (imax, sup) =
        values
            .iter()
            .cloned()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let sign_changes = q.level.map(|l| count_sign_changes(&values, l, q.band));
    Ok(MorreyProfile { argmax: radii[imax], radii, values, sup, sign_changes, truncated })
}

/// Sign changes of `v - level`, ignoring entries within `band * |level|` of it.
pub fn count_sign_changes(values: &[f64], level: f64, band: f64) -> usize {
    let tol = band * level.abs();
    let mut last = 0i8;
    let mut changes = 0;
    for &v in values {
        let s = if v - level > tol {
            1
        } else if v - level < -tol {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                changes += 1;
            }
            last = s;
        }
    }
    changes
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(d: usize, n: usize, r: f64, f: f64) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::stretched(d, n, r, f).unwrap())
    }

    #[test]
    fn sphere_measure_low_dims() {
        use std::f64::consts::PI;
        assert_relative_eq!(sphere_measure(5), 8.0 * PI * PI / 3.0, max_relative = 1e-14);
        assert_relative_eq!(sphere_measure(6), PI.powi(3), max_relative = 1e-14);
        assert_relative_eq!(sphere_measure(7), 16.0 * PI.powi(3) / 15.0, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(RadialGrid::uniform(7, 8, 1.0).is_err());
        assert!(RadialGrid::uniform(4, 32, 1.0).is_err());
        assert!(RadialGrid::stretched(7, 16, 1.0, 1e4).is_err());
        let mut nodes: Vec<f64> = (0..=20).map(|i| i as f64).collect();
        nodes[10] = 9.9;
        assert!(RadialGrid::from_nodes(7, nodes).is_err());
    }

    #[test]
    fn stretched_grid_spacing() {
        let g = RadialGrid::stretched(7, 512, 10.0, 50.0).unwrap();
        assert_relative_eq!(g.h_max() / g.h_min(), 50.0, max_relative = 0.02);
        assert!(g.max_spacing_ratio() < 1.02);
        assert_eq!(g.refined().unwrap().intervals(), 1024);
    }

    #[test]
    fn laplacian_of_quadratic_is_exact() {
        let g = grid(7, 64, 2.0, 10.0);
        let f = RadialField::from_fn(g, Parity::Even, |r| 3.0 + r * r).unwrap();
        let lap = radial_laplacian(&f).unwrap();
        for v in lap.values() {
            assert_relative_eq!(*v, 14.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn laplacian_of_log_matches_closed_form() {
        let g = Arc::new(RadialGrid::uniform(7, 4096, 5.0).unwrap());
        let f = RadialField::from_fn(g, Parity::Singular, |r| -4.0 * r.ln()).unwrap();
        let lap = radial_laplacian(&f).unwrap();
        for (r, v) in f.grid().nodes().iter().zip(lap.values()) {
            if (0.5..=5.0).contains(r) {
                let exact = -20.0 / (r * r);
                assert!(((v - exact) / exact).abs() < 1e-4, "r={r} lap={v}");
            }
        }
    }

    #[test]
    fn mass_of_constant() {
        let g = grid(9, 128, 3.0, 20.0);
        let f = RadialField::from_fn(g, Parity::Even, |_| 2.5).unwrap();
        for rule in [Quadrature::PowerLaw, Quadrature::Trapezoid] {
            let m = cumulative_mass(&f, rule).unwrap();
            assert_relative_eq!(m.values()[0], 2.5 / 9.0, max_relative = 1e-14);
        }
        let m = cumulative_mass(&f, Quadrature::PowerLaw).unwrap();
        for v in &m.values()[1..] {
            assert_relative_eq!(*v, 2.5 / 9.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn mass_and_density_round_trip() {
        let g = grid(7, 1024, 8.0, 30.0);
        let u = RadialField::from_fn(g, Parity::Even, |r| 2.0 / (1.0 + r * r).powi(2)).unwrap();
        let m = cumulative_mass(&u, Quadrature::PowerLaw).unwrap();
        let back = density_from_mass(&m).unwrap();
        for (a, b) in u.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-4 * 2.0, "{a} vs {b}");
        }
    }

    #[test]
    fn singular_power_mass() {
        let d = 9;
        let g = grid(d, 256, 100.0, 100.0);
        let f = RadialField::from_fn(g, Parity::Singular, |r| r.powi(-4)).unwrap();
        let m = cumulative_mass(&f, Quadrature::PowerLaw).unwrap();
        for (r, v) in f.grid().nodes().iter().zip(m.values()).skip(1) {
            assert_relative_eq!(*v, r.powi(-4) / (d as f64 - 4.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn morrey_of_power_law_is_flat() {
        let d = 13;
        let g = grid(d, 2048, 1e3, 100.0);
        let a = 8.0 * 9.0 * 11.0;
        let f = RadialField::from_fn(g, Parity::Singular, move |r| a * r.powi(-4)).unwrap();
        let q = MorreyQuery::log_spaced(4.0, 0.05, 1e3, 60);
        let p = morrey_profile(&f, &q).unwrap();
        let expect = sphere_measure(d) * a / (d as f64 - 4.0);
        for v in &p.values {
            assert_relative_eq!(*v, expect, max_relative = 1e-12);
        }
        assert!(!p.truncated);
        let q = MorreyQuery::log_spaced(4.0, 0.1, 2e3, 10);
        assert!(morrey_profile(&f, &q).unwrap().truncated);
    }

    #[test]
    fn sign_changes_respect_band() {
        let v = [0.9, 1.1, 0.95, 1.0000001, 0.999, 1.2];
        assert_eq!(count_sign_changes(&v, 1.0, 0.0), 5);
        assert_eq!(count_sign_changes(&v, 1.0, 1e-3), 3);
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(7, 32, 2.0, 3.0);
        let f = RadialField::from_fn(g, Parity::Singular, |r| 1.0 / r).unwrap();
        let back = RadialField::from_csv(&f.to_csv()).unwrap();
        assert_eq!(back.grid().nodes(), f.grid().nodes());
        assert_eq!(&back.values()[1..], &f.values()[1..]);
        assert_eq!(back.parity(), Parity::Singular);
    }

    #[test]
    fn nonnegative_tag() {
        let g = grid(7, 32, 2.0, 3.0);
        let f = RadialField::from_fn(g.clone(), Parity::Even, |r| if r > 1.0 { -1e-14 } else { 1.0 })
            .unwrap()
            .into_nonnegative()
            .unwrap();
        assert!(f.values().iter().all(|&v| v >= 0.0));
        let bad = RadialField::from_fn(g, Parity::Even, |r| 1.0 - r);
        assert!(bad.unwrap().into_nonnegative().is_err());
    }
}
