//! Complex polynomials, simultaneous root finding, synthetic deflation and
//! the closed-form pieces used for linear recurrences.

use std::cmp::Ordering;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("root finding needs degree >= 1")]
    ConstantPolynomial,
    #[error("root iteration did not converge; worst residual {worst_residual:e}")]
    NoConvergence { roots: Vec<Complex64>, worst_residual: f64 },
    #[error("deflation remainder {remainder:e} exceeds tolerance {tolerance:e}")]
    Remainder { remainder: f64, tolerance: f64 },
    #[error("closed form needs an order-2 linear equation, got order {0}")]
    NotOrderTwo(usize),
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Polynomial with coefficients stored in ascending degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<Complex64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == ZERO {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(ZERO);
        }
        Polynomial { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// Monic polynomial `Π (z - r)`.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut p = Polynomial::new(vec![ONE]);
        for &r in roots {
            p = p.mul(&Polynomial::new(vec![-r, ONE]));
        }
        p
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> Complex64 {
        *self.coeffs.last().unwrap()
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::new(vec![ZERO]);
        }
        Polynomial::new(
            self.coeffs.iter().enumerate().skip(1).map(|(j, &c)| c * j as f64).collect(),
        )
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = vec![ZERO; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    pub fn monic(&self) -> Polynomial {
        let lead = self.leading();
        Polynomial::new(self.coeffs.iter().map(|&c| c / lead).collect())
    }

    /// Sum of coefficient magnitudes.
    pub fn norm1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// Magnitude scale of `p(z)` evaluation: `Σ |a_j| |z|^j`.
    pub fn eval_scale(&self, z: Complex64) -> f64 {
        let r = z.norm();
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.norm())
    }

    /// Coefficients in descending degree, the usual reading order.
    pub fn descending(&self) -> Vec<Complex64> {
        self.coeffs.iter().rev().copied().collect()
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (j, &c) in self.coeffs.iter().enumerate().rev() {
            if c == ZERO && !(first && j == 0) {
                continue;
            }
            let (sign, mag) = if c.im == 0.0 && c.re < 0.0 {
                ("-", Complex64::new(-c.re, 0.0))
            } else {
                ("+", c)
            };
            if first {
                if sign == "-" {
                    f.write_str("-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let coef = if mag == ONE && j > 0 { String::new() } else { format_complex(mag) };
            let coef = if mag.im != 0.0 && mag.re != 0.0 { format!("({coef})") } else { coef };
            match j {
                0 => write!(f, "{}", if coef.is_empty() { "1".into() } else { coef })?,
                1 => write!(f, "{coef}z")?,
                _ => write!(f, "{coef}z^{j}")?,
            }
        }
        Ok(())
    }
}

/// Snaps real and imaginary parts lying within `1e-13·(1+|z|)` of an
/// integer (zero included) to that integer.
pub fn tidy(z: Complex64) -> Complex64 {
    let tol = 1e-13 * (1.0 + z.norm());
    let snap = |v: f64| {
        let r = v.round();
        if (v - r).abs() <= tol {
            r + 0.0
        } else {
            v
        }
    };
    Complex64::new(snap(z.re), snap(z.im))
}

/// Compact `a+bi` rendering for reports.
pub fn format_complex(c: Complex64) -> String {
    use crate::expr::format_real;
    let clean = |v: f64| if v.abs() < 1e-300 { 0.0 } else { v };
    let (re, im) = (clean(c.re), clean(c.im));
    if im == 0.0 {
        format_real(re)
    } else if re == 0.0 {
        format!("{}i", format_real(im))
    } else {
        let sign = if im < 0.0 { "-" } else { "+" };
        format!("{}{}{}i", format_real(re), sign, format_real(im.abs()))
    }
}

/// Characteristic polynomial `z^{k+1} + b_0 z^k + … + b_k` of
/// `x_{n+1} + b_0 x_n + … + b_k x_{n-k} = α_n`.
///
/// An empty coefficient list stands for the order-1 equation
/// `x_{n+1} = α_n`, whose polynomial is `z`.
pub fn characteristic_polynomial(b: &[Complex64]) -> Polynomial {
    if b.is_empty() {
        return Polynomial::new(vec![ZERO, ONE]);
    }
    let mut coeffs: Vec<Complex64> = b.iter().rev().copied().collect();
    coeffs.push(ONE);
    Polynomial::new(coeffs)
}

/// A root with its multiplicity and residual `|P(c)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub value: Complex64,
    pub multiplicity: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootSet {
    pub roots: Vec<Root>,
}

impl RootSet {
    /// Roots repeated according to multiplicity.
    pub fn expanded(&self) -> Vec<Complex64> {
        self.roots
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.value, r.multiplicity))
            .collect()
    }

    pub fn total_multiplicity(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }
}

const CLUSTER_RADIUS: f64 = 1e-6;
const MAX_ITER: usize = 2000;

/// All roots of `p` by Aberth–Ehrlich iteration from a perturbed circle,
/// followed by Newton polish and merging of clusters within `1e-6`.
///
/// A root is accepted when `|P(c)| <= tol * Σ_j |a_j| |c|^j`.
pub fn find_roots(p: &Polynomial, tol: f64) -> Result<RootSet, PolyError> {
    let n = p.degree();
    if n == 0 {
        return Err(PolyError::ConstantPolynomial);
    }
    let p = p.monic();
    // zero roots are split off exactly
    let zeros = p.coeffs.iter().take_while(|c| **c == ZERO).count();
    let reduced = Polynomial::new(p.coeffs[zeros..].to_vec());
    let mut raw = vec![ZERO; zeros];
    raw.extend(aberth(&reduced));

    for z in raw.iter_mut().skip(zeros) {
        *z = newton_polish(&reduced, *z);
    }

    let mut roots = cluster(&p, &raw);
    sort_roots(&mut roots);
    let worst = roots
        .iter()
        .map(|r| r.residual / p.eval_scale(r.value).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    if worst > tol {
        return Err(PolyError::NoConvergence { roots: raw, worst_residual: worst });
    }
    Ok(RootSet { roots })
}

fn aberth(p: &Polynomial) -> Vec<Complex64> {
    let n = p.degree();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![-p.coeffs[0] / p.coeffs[1]];
    }
    let dp = p.derivative();
    // initial radius from the geometric mean of the root magnitudes,
    // guarded by the Cauchy bound
    let a0 = p.coeffs[0].norm();
    let cauchy = 1.0 + p.coeffs[..n].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let radius = a0.powf(1.0 / n as f64).clamp(1e-3, cauchy);
    let mut z: Vec<Complex64> = (0..n)
        .map(|j| {
            let angle = std::f64::consts::TAU * j as f64 / n as f64 + 0.4;
            Complex64::from_polar(radius, angle)
        })
        .collect();

    let mut done = vec![false; n];
    for _ in 0..MAX_ITER {
        let mut all_done = true;
        for i in 0..n {
            if done[i] {
                continue;
            }
            let pv = p.eval(z[i]);
            if pv == ZERO {
                done[i] = true;
                continue;
            }
            let ratio = pv / dp.eval(z[i]);
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = z[i] - z[j];
                    if d == ZERO {
                        ZERO
                    } else {
                        ONE / d
                    }
                })
                .sum();
            let denom = ONE - ratio * repulsion;
            let step = if denom == ZERO || !denom.is_finite() { ratio } else { ratio / denom };
            if !step.is_finite() {
                done[i] = true;
                continue;
            }
            z[i] -= step;
            if step.norm() <= 4.0 * f64::EPSILON * (1.0 + z[i].norm()) {
                done[i] = true;
            } else {
                all_done = false;
            }
        }
        if all_done {
            break;
        }
    }
    z
}

fn newton_polish(p: &Polynomial, mut z: Complex64) -> Complex64 {
    let dp = p.derivative();
    let mut best = (p.eval(z).norm(), z);
    for _ in 0..3 {
        let d = dp.eval(z);
        if d == ZERO {
            break;
        }
        z -= p.eval(z) / d;
        let r = p.eval(z).norm();
        if !r.is_finite() {
            break;
        }
        if r < best.0 {
            best = (r, z);
        }
    }
    best.1
}

fn cluster(p: &Polynomial, raw: &[Complex64]) -> Vec<Root> {
    let mut groups: Vec<Vec<Complex64>> = Vec::new();
    'outer: for &z in raw {
        for g in groups.iter_mut() {
            if g.iter().any(|&w| (w - z).norm() <= CLUSTER_RADIUS * (1.0 + w.norm())) {
                g.push(z);
                continue 'outer;
            }
        }
        groups.push(vec![z]);
    }
    groups
        .into_iter()
        .map(|g| {
            let mut value = g.iter().sum::<Complex64>() / g.len() as f64;
            if g.len() > 1 {
                // a root of multiplicity m is a simple root of P^(m-1)
                let mut d = p.clone();
                for _ in 1..g.len() {
                    d = d.derivative();
                }
                let polished = newton_polish(&d, value);
                if (polished - value).norm() <= CLUSTER_RADIUS * (1.0 + value.norm()) {
                    value = polished;
                }
            }
            let value = tidy(value);
            Root { value, multiplicity: g.len(), residual: p.eval(value).norm() }
        })
        .collect()
}

/// Descending magnitude, ties (relative 1e-9) broken by ascending principal argument.
pub fn eigen_order(a: &Complex64, b: &Complex64) -> Ordering {
    let (ma, mb) = (a.norm(), b.norm());
    if (ma - mb).abs() > 1e-9 * ma.max(mb).max(1e-300) {
        return mb.partial_cmp(&ma).unwrap_or(Ordering::Equal);
    }
    let arg = |c: &Complex64| if c.im == 0.0 && c.re < 0.0 { std::f64::consts::PI } else { c.arg() };
    arg(a).partial_cmp(&arg(b)).unwrap_or(Ordering::Equal)
}

fn sort_roots(roots: &mut [Root]) {
    roots.sort_by(|a, b| eigen_order(&a.value, &b.value));
}

/// Synthetic division by `(z - c)`. The remainder must satisfy
/// `|P(c)| <= tol * Σ_j |a_j| |c|^j`.
pub fn deflate(p: &Polynomial, c: Complex64, tol: f64) -> Result<Polynomial, PolyError> {
    let (q, rem) = synthetic_division(p, c);
    let tolerance = tol * p.eval_scale(c).max(f64::MIN_POSITIVE);
    if rem.norm() > tolerance {
        return Err(PolyError::Remainder { remainder: rem.norm(), tolerance });
    }
    Ok(q)
}

/// Quotient and remainder of `p / (z - c)`.
pub fn synthetic_division(p: &Polynomial, c: Complex64) -> (Polynomial, Complex64) {
    let n = p.degree();
    if n == 0 {
        return (Polynomial::new(vec![ZERO]), p.coeffs[0]);
    }
    let mut q = vec![ZERO; n];
    let mut carry = ZERO;
    for j in (0..=n).rev() {
        let v = p.coeffs[j] + carry * c;
        if j == 0 {
            return (Polynomial::new(q), v);
        }
        q[j - 1] = v;
        carry = v;
    }
    unreachable!()
}

/// `σ_n(s; c) = Σ_{j=1}^{n} c^{j-1} s_{n-j}` by direct summation.
pub fn sigma(s: impl Fn(usize) -> Complex64, c: Complex64, n: usize) -> Complex64 {
    let mut acc = ZERO;
    let mut cp = ONE;
    for j in 1..=n {
        acc += cp * s(n - j);
        cp *= c;
    }
    acc
}

/// Relative gap below which the confluent form of [`sigma_closed_form`] is used.
pub const CONFLUENT_GAP: f64 = 1e-9;

/// σ_n of the geometric sequence `s_j = a b^j`:
/// `a (b^n - c^n)/(b - c)`, or `a n b^{n-1}` when `b` and `c` coincide.
pub fn sigma_closed_form(a: Complex64, b: Complex64, c: Complex64, n: usize) -> Complex64 {
    if n == 0 {
        return ZERO;
    }
    if (b - c).norm() > CONFLUENT_GAP * (b.norm() + c.norm()) {
        a * (b.powi(n as i32) - c.powi(n as i32)) / (b - c)
    } else {
        a * n as f64 * b.powi(n as i32 - 1)
    }
}

/// `x_n` of `x_{n+1} + b_0 x_n + b_1 x_{n-1} = α_n` from `(x_{-1}, x_0)`
/// through the two-stage eigenvalue factorization.
///
/// With eigenvalues ordered `c_0, c_1` (see [`eigen_order`]) the first
/// stage is `z_{n+1} = α_n + c_0 z_n` started from
/// `z_0 = x_0 + (c_0 + b_0) x_{-1}` (the first deflation coefficient),
/// and `x_{n+1} = z_{n+1} + c_1 x_n`. Hence
/// `x_n = x_0 c_1^n + z_0 c_0 σ_n(c_0^j; c_1) + σ_n(σ'; c_1)` with
/// `σ'_j = σ_{j+1}(α; c_0)`; the geometric term switches to the confluent
/// form when the eigenvalues coincide.
pub fn solve_order2_closed_form(
    b: [Complex64; 2],
    forcing: impl Fn(usize) -> Complex64,
    x_prev: Complex64,
    x0: Complex64,
    n: usize,
) -> Result<Complex64, PolyError> {
    let roots = find_roots(&characteristic_polynomial(&b), 1e-9)?.expanded();
    let (c0, c1) = (roots[0], roots[1]);
    let z0 = x0 + (c0 + b[0]) * x_prev;
    let homogeneous = x0 * c1.powi(n as i32) + z0 * c0 * sigma_closed_form(ONE, c0, c1, n);
    let sigma_prime = |j: usize| sigma(&forcing, c0, j + 1);
    Ok(homogeneous + sigma(sigma_prime, c1, n))
}
