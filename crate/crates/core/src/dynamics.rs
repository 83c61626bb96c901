//! Fixed points, linear stability, bifurcation sweeps over initial values and
//! the two-curve locus of the exponential separable equation.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::format_real;
use crate::model::{detect_period_in, iterate_orbit, DifferenceEquation, ModelError, Orbit, C};
use crate::poly::{characteristic_polynomial, find_roots, format_complex, PolyError};

/// Samples used to bracket fixed points.
pub const FIXED_POINT_SAMPLES: usize = 4001;
/// Largest period looked for in a sweep.
pub const SWEEP_MAX_PERIOD: usize = 64;
/// Default tolerance for period detection.
pub const PERIOD_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("the equation depends on n")]
    NonAutonomous,
    #[error("cannot evaluate near {x}: {reason}")]
    Domain { x: f64, reason: String },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("unknown initial coordinate `{0}`")]
    Coordinate(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `f(x, …, x)` at `n = 0`, real part; `None` off the domain or when the
/// value is not real.
fn diagonal(eq: &DifferenceEquation, x: f64) -> Option<f64> {
    let state = vec![C::new(x, 0.0); eq.order()];
    let v = eq.rhs(0, &state).ok()?;
    (v.is_finite() && v.im.abs() <= 1e-9 * (1.0 + v.re.abs())).then_some(v.re)
}

/// Result of a fixed-point search.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoints {
    /// Isolated fixed points in increasing order.
    pub points: Vec<f64>,
    /// Every sample was fixed (for example `x_{n+1} = x_n`).
    pub dense: bool,
}

/// Real solutions of `f(x, …, x) = x` on `[lo, hi]`: exact zeros of the
/// samples plus bisection on sign changes, deduplicated within `tol`.
pub fn find_fixed_points(eq: &DifferenceEquation, interval: (f64, f64), tol: f64) -> Result<FixedPoints, DynamicsError> {
    if !eq.is_autonomous() {
        return Err(DynamicsError::NonAutonomous);
    }
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(DynamicsError::Grid(format!("[{lo}, {hi}]")));
    }
    let g = |x: f64| diagonal(eq, x).map(|f| f - x);
    let samples: Vec<(f64, Option<f64>)> = (0..FIXED_POINT_SAMPLES)
        .map(|i| {
            let x = if i + 1 == FIXED_POINT_SAMPLES { hi } else { lo + (hi - lo) * i as f64 / (FIXED_POINT_SAMPLES - 1) as f64 };
            (x, g(x))
        })
        .collect();
    let near_zero = |x: f64, v: f64| v.abs() <= tol * (1.0 + x.abs());
    let valid: Vec<(f64, f64)> = samples.iter().filter_map(|&(x, v)| v.map(|v| (x, v))).collect();
    if !valid.is_empty() && valid.len() == samples.len() && valid.iter().all(|&(x, v)| near_zero(x, v)) {
        return Ok(FixedPoints { points: Vec::new(), dense: true });
    }
    let mut found = Vec::new();
    for &(x, v) in &valid {
        if v == 0.0 {
            found.push(x);
        }
    }
    for w in samples.windows(2) {
        let ((a, Some(ga)), (b, Some(gb))) = (w[0], w[1]) else { continue };
        if ga == 0.0 || gb == 0.0 || ga.signum() == gb.signum() {
            continue;
        }
        let (mut a, mut b, mut ga) = (a, b, ga);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let Some(gm) = g(mid) else { break };
            if gm == 0.0 {
                a = mid;
                b = mid;
                break;
            }
            if gm.signum() == ga.signum() {
                a = mid;
                ga = gm;
            } else {
                b = mid;
            }
        }
        let x = 0.5 * (a + b);
        // a sign change across a pole is not a fixed point
        if g(x).is_some_and(|v| v.abs() <= 1e-6 * (1.0 + x.abs())) {
            found.push(x);
        }
    }
    found.sort_by(f64::total_cmp);
    let mut points: Vec<f64> = Vec::new();
    for x in found {
        if points.last().is_none_or(|&p| (x - p).abs() > tol.max(1e-12) * (1.0 + p.abs())) {
            points.push(x);
        }
    }
    Ok(FixedPoints { points, dense: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenClass {
    Stable,
    Unstable,
    NonHyperbolic,
}

impl EigenClass {
    fn of(lambda: C, tol: f64) -> EigenClass {
        let m = lambda.norm();
        if (m - 1.0).abs() <= tol {
            EigenClass::NonHyperbolic
        } else if m < 1.0 {
            EigenClass::Stable
        } else {
            EigenClass::Unstable
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EigenClass::Stable => "stable",
            EigenClass::Unstable => "unstable",
            EigenClass::NonHyperbolic => "non-hyperbolic",
        }
    }
}

/// Linearization of an autonomous equation at a constant solution.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub point: f64,
    /// `∂f/∂x_j` at `(x̄, …, x̄)`, newest lag first.
    pub derivatives: Vec<f64>,
    pub eigenvalues: Vec<C>,
    pub classes: Vec<EigenClass>,
}

impl StabilityReport {
    /// All eigenvalues strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        self.classes.iter().all(|c| *c == EigenClass::Stable)
    }
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "linearization at x = {}", format_real(self.point))?;
        for (lambda, class) in self.eigenvalues.iter().zip(&self.classes) {
            writeln!(f, "  eigenvalue {} (|λ| = {}, {})", format_complex(*lambda), format_real(lambda.norm()), class.name())?;
        }
        Ok(())
    }
}

/// Eigenvalues of the linearization at `(x̄, …, x̄)`: roots of
/// `z^{k+1} - Σ_j d_j z^{k-j}` with `d_j` from central differences.
pub fn linearize_at(eq: &DifferenceEquation, x_bar: f64) -> Result<StabilityReport, DynamicsError> {
    if !eq.is_autonomous() {
        return Err(DynamicsError::NonAutonomous);
    }
    let h = 1e-6 * (1.0 + x_bar.abs());
    let order = eq.order();
    let eval = |state: &[C]| -> Result<C, DynamicsError> {
        let v = eq.rhs(0, state).map_err(|e| DynamicsError::Domain { x: x_bar, reason: e.to_string() })?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DynamicsError::Domain { x: x_bar, reason: "non-finite value".into() })
        }
    };
    let mut derivatives = Vec::with_capacity(order);
    for j in 0..order {
        let mut plus = vec![C::new(x_bar, 0.0); order];
        let mut minus = plus.clone();
        plus[j] += h;
        minus[j] -= h;
        derivatives.push(((eval(&plus)? - eval(&minus)?) / (2.0 * h)).re);
    }
    let b: Vec<C> = derivatives.iter().map(|&d| C::new(-d, 0.0)).collect();
    let eigenvalues = find_roots(&characteristic_polynomial(&b), 1e-9)?.expanded();
    let classes = eigenvalues.iter().map(|&l| EigenClass::of(l, 1e-6)).collect();
    Ok(StabilityReport { point: x_bar, derivatives, eigenvalues, classes })
}

/// Position (oldest first) of an initial coordinate named `x0`, `x-1`, ….
pub fn init_coordinate(name: &str, order: usize) -> Option<usize> {
    let rest = name.strip_prefix('x')?;
    let lag: usize = match rest.strip_prefix('-') {
        Some(digits) if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) => digits.parse().ok()?,
        None if rest == "0" => 0,
        _ => return None,
    };
    (lag < order).then(|| order - 1 - lag)
}

/// Name of the initial coordinate at position `index` (oldest first).
pub fn coordinate_name(index: usize, order: usize) -> String {
    let lag = order - 1 - index;
    if lag == 0 {
        "x0".to_string()
    } else {
        format!("x-{lag}")
    }
}

/// `count` evenly spaced values from `lo` to `hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl SweepGrid {
    pub fn values(&self) -> Result<Vec<f64>, DynamicsError> {
        if self.count == 0 || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(DynamicsError::Grid("need a finite range and at least one point".into()));
        }
        if self.count == 1 {
            return Ok(vec![self.lo]);
        }
        if self.lo >= self.hi {
            return Err(DynamicsError::Grid(format!("{} must be below {}", self.lo, self.hi)));
        }
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        Ok((0..self.count).map(|i| if i + 1 == self.count { self.hi } else { self.lo + step * i as f64 }).collect())
    }
}

/// Kept tail of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub param: f64,
    pub samples: Vec<C>,
    pub period: Option<usize>,
    /// Set when the orbit could not be computed to the end.
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn is_valid(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationData {
    pub coordinate: String,
    pub transient: usize,
    pub keep: usize,
    pub points: Vec<SweepPoint>,
}

/// Number of grid points per detected period, plus those without one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeriodCensus {
    pub periods: BTreeMap<usize, usize>,
    pub aperiodic: usize,
    pub invalid: usize,
}

impl fmt::Display for PeriodCensus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, count) in &self.periods {
            writeln!(f, "period {p}: {count}")?;
        }
        writeln!(f, "no period: {}", self.aperiodic)?;
        if self.invalid > 0 {
            writeln!(f, "invalid: {}", self.invalid)?;
        }
        Ok(())
    }
}

impl BifurcationData {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.param).collect()
    }

    pub fn census(&self) -> PeriodCensus {
        let mut census = PeriodCensus::default();
        for p in &self.points {
            match (&p.error, p.period) {
                (Some(_), _) => census.invalid += 1,
                (None, Some(period)) => *census.periods.entry(period).or_default() += 1,
                (None, None) => census.aperiodic += 1,
            }
        }
        census
    }

    /// `param,sample` rows (real parts); invalid points give `param,NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,sample\n");
        for p in &self.points {
            let param = format_real(p.param);
            if p.is_valid() {
                for s in &p.samples {
                    out.push_str(&format!("{param},{}\n", format_real(s.re)));
                }
            } else {
                out.push_str(&format!("{param},NaN\n"));
            }
        }
        out
    }
}

/// Iterates `eq` for every grid value of the initial coordinate at
/// position `coordinate` (oldest first; the other coordinates come from
/// `base_init`) and keeps the last `keep` of `transient + keep` values.
pub fn bifurcation_sweep(
    eq: &DifferenceEquation,
    base_init: &[C],
    coordinate: usize,
    grid: &SweepGrid,
    transient: usize,
    keep: usize,
    period_tol: f64,
) -> Result<BifurcationData, DynamicsError> {
    if base_init.len() != eq.order() {
        return Err(ModelError::InitLength { expected: eq.order(), found: base_init.len() }.into());
    }
    if coordinate >= eq.order() {
        return Err(DynamicsError::Coordinate(format!("position {coordinate}")));
    }
    let values = grid.values()?;
    let points = values
        .par_iter()
        .map(|&param| {
            let mut init = base_init.to_vec();
            init[coordinate] = C::new(param, 0.0);
            sweep_point(eq, &init, param, transient, keep, period_tol)
        })
        .collect();
    Ok(BifurcationData { coordinate: coordinate_name(coordinate, eq.order()), transient, keep, points })
}

fn sweep_point(eq: &DifferenceEquation, init: &[C], param: f64, transient: usize, keep: usize, tol: f64) -> SweepPoint {
    let invalid = |reason: String| SweepPoint { param, samples: Vec::new(), period: None, error: Some(reason) };
    let orbit = match iterate_orbit(eq, init, transient + keep) {
        Ok(o) => o,
        Err(e) => return invalid(e.to_string()),
    };
    if let Some(t) = &orbit.truncation {
        return invalid(format!("stopped at x_{}: {}", t.index, t.reason));
    }
    let full = orbit.full();
    let samples = full[full.len() - keep.min(full.len())..].to_vec();
    let period = detect_period_in(&samples, tol, SWEEP_MAX_PERIOD).map(|p| p.period);
    SweepPoint { param, samples, period, error: None }
}

/// `ξ_1(t) = (e^a / r_0) t e^{-t}` and `ξ_2(t) = r_0 t e^{-t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePair {
    pub a: f64,
    pub r0: f64,
}

impl CurvePair {
    /// `r_0 = x_0 / (x_{-1} e^{-x_{-1}})`.
    pub fn from_init(a: f64, x_prev: f64, x0: f64) -> CurvePair {
        CurvePair { a, r0: x0 / (x_prev * (-x_prev).exp()) }
    }

    pub fn xi1(&self, t: f64) -> f64 {
        self.a.exp() / self.r0 * t * (-t).exp()
    }

    pub fn xi2(&self, t: f64) -> f64 {
        self.r0 * t * (-t).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    First,
    Second,
    /// Within tolerance of both curves.
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocusReport {
    pub passed: bool,
    pub worst_residual: f64,
    /// Curve hit by each pair `(x_n, x_{n+1})`, `n = 0, 1, …`.
    pub hits: Vec<Option<Curve>>,
    pub alternates: bool,
    pub first_failure: Option<usize>,
}

/// Checks that each pair `(x_n, x_{n+1})`, `n >= 0`, lies on `ξ_1` or `ξ_2`
/// within `tol·(1+|x_{n+1}|)` and that the curves alternate.
pub fn locus_check(orbit: &Orbit, curves: &CurvePair, tol: f64) -> LocusReport {
    let full = orbit.full();
    let k = orbit.k();
    let mut worst: f64 = 0.0;
    let mut hits = Vec::new();
    let mut first_failure = None;
    for (n, w) in full[k..].windows(2).enumerate() {
        let (x, next) = (w[0].re, w[1]);
        let scale = 1.0 + next.norm();
        let d1 = (next - curves.xi1(x)).norm() / scale;
        let d2 = (next - curves.xi2(x)).norm() / scale;
        let residual = d1.min(d2);
        worst = worst.max(residual);
        let hit = match (d1 <= tol, d2 <= tol) {
            (true, true) => Some(Curve::Both),
            (true, false) => Some(Curve::First),
            (false, true) => Some(Curve::Second),
            (false, false) => None,
        };
        if hit.is_none() && first_failure.is_none() {
            first_failure = Some(n);
        }
        hits.push(hit);
    }
    let mut alternates = true;
    let mut last: Option<(usize, Curve)> = None;
    for (n, hit) in hits.iter().enumerate() {
        if let Some(c @ (Curve::First | Curve::Second)) = hit {
            if let Some((m, prev)) = last {
                // same curve after an even gap, different after an odd one
                if ((n - m) % 2 == 1) == (prev == *c) {
                    alternates = false;
                    if first_failure.is_none() {
                        first_failure = Some(n);
                    }
                }
            }
            last = Some((n, *c));
        }
    }
    LocusReport { passed: first_failure.is_none() && alternates, worst_residual: worst, hits, alternates, first_failure }
}
