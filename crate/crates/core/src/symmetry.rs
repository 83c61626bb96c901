//! Form symmetries: HD1 detection, reduction constants of separable
//! equations, and construction/evaluation of the symmetry maps.
//!
//! A type-`(k,1)` symmetry has components `H_j(u) = u_{j-1} ∗ u_j^{-1}`
//! (the inversion symmetry of HD1 equations). A type-`(1,k)` symmetry is
//! `H(u) = u_0 ∗ h_1(u_1) ∗ … ∗ h_k(u_k)` with unary `h_j` built from a
//! reduction constant `c`. Points are always newest first: `u_0 = x_n`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{ExprError, Expression, Func, Node};
use crate::model::{rel_err, state_var, DifferenceEquation, EquationKind, GroupTag, C};
use crate::poly::{characteristic_polynomial, find_roots, format_complex, PolyError};

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// Number of test points used for the reduction-constant identity.
pub const TEST_POINTS: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymmetryError {
    #[error("{0} equations have no separable form")]
    NotSeparable(String),
    #[error("a {0} group is required here")]
    WrongGroup(&'static str),
    #[error("constant {constant} fails the reduction identity: residual {residual:.2e} exceeds {tol:e}")]
    InvalidConstant { constant: String, residual: f64, tol: f64 },
    #[error("too few valid test points ({0}) for the reduction identity")]
    TestPoints(usize),
    #[error("form symmetry takes {expected} values, got {found}")]
    Arity { expected: usize, found: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// The shape of the component map `H`.
#[derive(Debug, Clone, PartialEq)]
pub enum SymmetryShape {
    /// `H_j(u) = u_{j-1} ∗ u_j^{-1}`, `j = 1..k`.
    Inversion,
    /// `H(u) = u_0 ∗ h_1(u_1) ∗ … ∗ h_k(u_k)`, each `h_j` unary in `x`.
    UnaryList(Vec<Expression>),
    /// Arbitrary components, each an expression in `x0..xk`.
    Custom(Vec<Expression>),
}

/// A form symmetry `H : G^{k+1} -> G^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormSymmetry {
    order: usize,
    group: GroupTag,
    shape: SymmetryShape,
    constant: Option<C>,
    params: BTreeMap<String, C>,
    log_components: Option<Vec<Expression>>,
}

impl FormSymmetry {
    /// The inversion symmetry of an HD1 equation of order `order`.
    pub fn inversion(order: usize, group: GroupTag) -> Self {
        FormSymmetry { order, group, shape: SymmetryShape::Inversion, constant: None, params: BTreeMap::new(), log_components: None }
    }

    /// A user-supplied symmetry with `m = components.len()` outputs.
    pub fn custom(order: usize, group: GroupTag, components: Vec<Expression>, params: BTreeMap<String, C>) -> Self {
        FormSymmetry { order, group, shape: SymmetryShape::Custom(components), constant: None, params, log_components: None }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Reduced order `m`.
    pub fn m(&self) -> usize {
        match &self.shape {
            SymmetryShape::Inversion => self.order - 1,
            SymmetryShape::UnaryList(_) => 1,
            SymmetryShape::Custom(c) => c.len(),
        }
    }

    pub fn group(&self) -> GroupTag {
        self.group
    }

    pub fn shape(&self) -> &SymmetryShape {
        &self.shape
    }

    pub fn constant(&self) -> Option<C> {
        self.constant
    }

    pub fn params(&self) -> &BTreeMap<String, C> {
        &self.params
    }

    /// `h_1..h_k` for a type-`(1,k)` symmetry.
    pub fn components(&self) -> Option<&[Expression]> {
        match &self.shape {
            SymmetryShape::UnaryList(h) => Some(h),
            _ => None,
        }
    }

    /// `ln h_j` written without complex powers (multiplicative separable only).
    pub fn log_components(&self) -> Option<&[Expression]> {
        self.log_components.as_deref()
    }

    /// `h_j(x)` for `j = 1..k`.
    pub fn eval_h(&self, j: usize, x: C) -> Result<C, ExprError> {
        let h = &self.components().expect("unary symmetry")[j - 1];
        h.evaluate_with(&|name| if name == "x" { Some(x) } else { self.params.get(name).copied() })
    }

    /// `ln h_j(x)` through the logarithmic form.
    pub fn eval_log_h(&self, j: usize, x: C) -> Result<C, ExprError> {
        let h = &self.log_components().expect("logarithmic components")[j - 1];
        h.evaluate_with(&|name| if name == "x" { Some(x) } else { self.params.get(name).copied() })
    }

    /// `H(u_0, …, u_k)`, newest first.
    pub fn evaluate(&self, point: &[C]) -> Result<Vec<C>, SymmetryError> {
        if point.len() != self.order {
            return Err(SymmetryError::Arity { expected: self.order, found: point.len() });
        }
        let g = self.group;
        match &self.shape {
            SymmetryShape::Inversion => Ok(point.windows(2).map(|w| g.op(w[0], g.inverse(w[1]))).collect()),
            SymmetryShape::UnaryList(_) => {
                let mut acc = point[0];
                for (j, &u) in point.iter().enumerate().skip(1) {
                    acc = g.op(acc, self.eval_h(j, u)?);
                }
                Ok(vec![acc])
            }
            SymmetryShape::Custom(components) => {
                let lookup = |name: &str| match crate::model::state_index(name) {
                    Some(j) => point.get(j).copied(),
                    None => self.params.get(name).copied(),
                };
                Ok(components.iter().map(|h| h.evaluate_with(&lookup)).collect::<Result<Vec<_>, _>>()?)
            }
        }
    }

    /// Formula text such as `H(u0, u1) = u0 - u1` or `h1(t) = 1/(t*exp(-t))`.
    pub fn describe(&self) -> String {
        let star = if self.group.is_additive() { " + " } else { "*" };
        let inv = |v: &str| if self.group.is_additive() { format!("-{v}") } else { format!("/{v}") };
        match &self.shape {
            SymmetryShape::Inversion => {
                let parts: Vec<String> = (1..self.order)
                    .map(|j| {
                        let (a, b) = (format!("u{}", j - 1), format!("u{j}"));
                        if self.group.is_additive() {
                            format!("{a} - {b}")
                        } else {
                            format!("{a}{}", inv(&b))
                        }
                    })
                    .collect();
                format!("H(u) = [{}]", parts.join(", "))
            }
            SymmetryShape::UnaryList(h) => {
                let terms: Vec<String> = (0..self.order).map(|j| if j == 0 { "u0".into() } else { format!("h{j}(u{j})") }).collect();
                let mut out = format!("H(u) = {}", terms.join(star));
                for (j, hj) in h.iter().enumerate() {
                    let text = hj.display_with(&|name| (name == "x").then(|| "t".to_string()));
                    out.push_str(&format!("\n  h{}(t) = {}", j + 1, text));
                }
                out
            }
            SymmetryShape::Custom(components) => {
                let parts: Vec<String> = components.iter().map(|c| c.to_string()).collect();
                format!("H(x) = [{}]", parts.join(", "))
            }
        }
    }
}

impl fmt::Display for FormSymmetry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

pub fn evaluate_form_symmetry(h: &FormSymmetry, point: &[C]) -> Result<Vec<C>, SymmetryError> {
    h.evaluate(point)
}

// ---------------------------------------------------------------- HD1

/// A sample at which the HD1 identity failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Hd1Witness {
    /// `u_0, …, u_k`, newest first.
    pub point: Vec<C>,
    pub t: C,
    pub n: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hd1Report {
    pub verdict: bool,
    pub samples_tested: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub witness: Option<Hd1Witness>,
}

/// Randomized test of `f(u_0∗t, …, u_k∗t) = f(u)∗t` over the equation's group.
pub fn check_hd1(eq: &DifferenceEquation, samples: usize, tol: f64, seed: u64) -> Hd1Report {
    check_hd1_in(eq, eq.group(), samples, tol, seed)
}

/// As [`check_hd1`] relative to an explicit group.
pub fn check_hd1_in(eq: &DifferenceEquation, group: GroupTag, samples: usize, tol: f64, seed: u64) -> Hd1Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tested = 0;
    let mut max_residual: f64 = 0.0;
    let mut witness: Option<Hd1Witness> = None;
    let budget = 10 * samples.max(1);
    for _ in 0..budget {
        if tested == samples {
            break;
        }
        let u: Vec<C> = (0..eq.order()).map(|_| group.sample(&mut rng)).collect();
        let t = group.sample(&mut rng);
        let n = rng.gen_range(0..=10);
        let shifted: Vec<C> = u.iter().map(|&v| group.op(v, t)).collect();
        let (Ok(fu), Ok(fut)) = (eq.rhs(n, &u), eq.rhs(n, &shifted)) else {
            continue;
        };
        if !fu.is_finite() || !fut.is_finite() {
            continue;
        }
        tested += 1;
        let residual = rel_err(fut, group.op(fu, t));
        max_residual = max_residual.max(residual);
        if residual > tol && witness.as_ref().is_none_or(|w| residual > w.residual) {
            witness = Some(Hd1Witness { point: u, t, n, residual });
        }
    }
    Hd1Report { verdict: tested == samples && max_residual <= tol, samples_tested: tested, max_residual, tolerance: tol, witness }
}

// ---------------------------------------------------------------- separable forms

/// `x_{n+1} = forcing ∗ c_0(x_n) ∗ … ∗ c_k(x_{n-k})` over `group`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableForm {
    pub group: GroupTag,
    pub components: Vec<Expression>,
    pub forcing: Expression,
    pub params: BTreeMap<String, C>,
}

impl SeparableForm {
    /// The separable form of a linear or separable equation.
    pub fn of(eq: &DifferenceEquation) -> Option<SeparableForm> {
        let (components, forcing) = match eq.kind() {
            EquationKind::General { .. } => return None,
            EquationKind::Linear { b, forcing } => {
                let comps = b.iter().map(|&bj| Expression::new(scaled(-bj, Node::var("x")))).collect();
                (comps, forcing.clone())
            }
            EquationKind::SeparableAdditive { phi, forcing } => (phi.clone(), forcing.clone()),
            EquationKind::SeparableMultiplicative { psi, forcing } => (psi.clone(), forcing.clone()),
        };
        Some(SeparableForm { group: eq.group(), components, forcing, params: eq.params().clone() })
    }

    /// `k` for `k+1` components.
    pub fn k(&self) -> usize {
        self.components.len() - 1
    }

    pub fn eval_component(&self, j: usize, x: C) -> Result<C, ExprError> {
        self.components[j].evaluate_with(&|name| if name == "x" { Some(x) } else { self.params.get(name).copied() })
    }

    /// The equation this form describes, as a separable-kind equation.
    pub fn to_equation(&self, name: &str) -> DifferenceEquation {
        DifferenceEquation::separable(self.group, self.components.clone(), self.forcing.clone())
            .and_then(|eq| eq.with_params(self.params.clone()))
            .expect("separable form is structurally valid")
            .with_name(name)
    }
}

/// Numerically detects whether `eq` is separable over `group`.
///
/// Candidate components are read off the right-hand side by setting every
/// other state variable to the identity, `c_j(x) = f[x_j -> x] ∗ f[e]^{-1}`
/// with forcing `f[e]`; the split is then confirmed at `samples` random
/// states to relative tolerance `tol`.
pub fn detect_separable(eq: &DifferenceEquation, group: GroupTag, samples: usize, tol: f64, seed: u64) -> Option<SeparableForm> {
    let rhs = eq.rhs_expression();
    let e = Node::Const(group.identity());
    let at_identity = |keep: Option<usize>| {
        let mut map = std::collections::HashMap::new();
        for j in 0..eq.order() {
            let with = if Some(j) == keep { Node::var("x") } else { e.clone() };
            map.insert(state_var(j), with);
        }
        rhs.substitute(&map).into_root()
    };
    let base = at_identity(None);
    let components: Vec<Expression> = (0..eq.order())
        .map(|j| {
            let node = if group.is_additive() {
                Node::sub(at_identity(Some(j)), base.clone())
            } else {
                Node::div(at_identity(Some(j)), base.clone())
            };
            Expression::new(node.simplified())
        })
        .collect();
    let form = SeparableForm { group, components, forcing: Expression::new(base.simplified()), params: eq.params().clone() };
    if components_mention_state(&form) {
        return None;
    }

    let candidate = form.to_equation(eq.name());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tested = 0;
    for _ in 0..10 * samples.max(1) {
        if tested == samples {
            break;
        }
        let u: Vec<C> = (0..eq.order()).map(|_| group.sample(&mut rng)).collect();
        let n = rng.gen_range(0..=10);
        let Ok(direct) = eq.rhs(n, &u) else { continue };
        if !direct.is_finite() {
            continue;
        }
        match candidate.rhs(n, &u) {
            Ok(split) if rel_err(split, direct) <= tol => tested += 1,
            _ => return None,
        }
    }
    (tested == samples).then_some(form)
}

fn components_mention_state(form: &SeparableForm) -> bool {
    let bad = |e: &Expression| e.free_vars().iter().any(|v| crate::model::state_index(v).is_some());
    form.components.iter().any(bad) || bad(&form.forcing)
}

// ---------------------------------------------------------------- reduction constants

/// Search region for reduction constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { re: (-4.0, 4.0), im: (-4.0, 4.0), step: 0.25 }
    }
}

impl GridSpec {
    fn points(&self) -> Vec<C> {
        let count = |(lo, hi): (f64, f64)| ((hi - lo) / self.step + 1e-9).floor() as usize + 1;
        let mut out = Vec::new();
        for i in 0..count(self.re) {
            for j in 0..count(self.im) {
                out.push(C::new(self.re.0 + i as f64 * self.step, self.im.0 + j as f64 * self.step));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionConstant {
    pub value: C,
    pub multiplicity: usize,
    /// Largest absolute residual of the identity over the test points.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionConstantSet {
    /// Sorted by real part, then imaginary part.
    pub constants: Vec<ReductionConstant>,
    /// True for linear equations, where the constants are polynomial roots.
    pub exact: bool,
}

impl ReductionConstantSet {
    pub fn values(&self) -> Vec<C> {
        self.constants.iter().map(|c| c.value).collect()
    }

    /// Constants repeated by multiplicity.
    pub fn expanded(&self) -> Vec<C> {
        self.constants.iter().flat_map(|c| std::iter::repeat_n(c.value, c.multiplicity)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.constants.is_empty()
    }
}

/// The identity a reduction constant must satisfy, as one polynomial in `c`
/// per test point.
///
/// Additive: `Q_i(c) = c^{k+1} z_i - Σ_j c^{k-j} φ_j(z_i)`.
/// Multiplicative (log domain): `Q_i(c) = Σ_j c^{k-j} ln ψ_j(t_i) - c^{k+1} ln t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionIdentity {
    /// Ascending coefficients of each `Q_i`.
    polys: Vec<Vec<C>>,
}

impl ReductionIdentity {
    pub fn new(form: &SeparableForm) -> Result<Self, SymmetryError> {
        let k = form.k();
        let mut polys = Vec::new();
        for i in 0..TEST_POINTS {
            let s = (i as f64 + 0.5) / TEST_POINTS as f64;
            let mut coeffs = vec![ZERO; k + 2];
            let ok = if form.group.is_additive() {
                let z = C::new(-3.0 + 6.0 * s, 0.0);
                coeffs[k + 1] = z;
                (0..=k).all(|j| match form.eval_component(j, z) {
                    Ok(v) if v.is_finite() => {
                        coeffs[k - j] = -v;
                        true
                    }
                    _ => false,
                })
            } else {
                let t = C::new((-2.0 + 4.0 * s).exp(), 0.0);
                coeffs[k + 1] = -t.ln();
                (0..=k).all(|j| match form.eval_component(j, t) {
                    Ok(v) if v.is_finite() && v != ZERO => {
                        coeffs[k - j] = v.ln();
                        true
                    }
                    _ => false,
                })
            };
            if ok {
                polys.push(coeffs);
            }
        }
        if polys.len() < TEST_POINTS / 2 {
            return Err(SymmetryError::TestPoints(polys.len()));
        }
        Ok(ReductionIdentity { polys })
    }

    fn eval_poly(coeffs: &[C], c: C) -> (C, C) {
        let mut v = ZERO;
        let mut d = ZERO;
        for &a in coeffs.iter().rev() {
            d = d * c + v;
            v = v * c + a;
        }
        (v, d)
    }

    fn scale(coeffs: &[C], c: C) -> f64 {
        let r = c.norm();
        coeffs.iter().rev().fold(0.0, |acc, a| acc * r + a.norm())
    }

    /// Largest `|Q_i(c)|`.
    pub fn residual(&self, c: C) -> f64 {
        self.polys.iter().map(|q| Self::eval_poly(q, c).0.norm()).fold(0.0, f64::max)
    }

    /// Largest `|Q_i(c)| / (1 + Σ_d |a_{i,d}| |c|^d)`.
    pub fn relative_residual(&self, c: C) -> f64 {
        self.polys
            .iter()
            .map(|q| Self::eval_poly(q, c).0.norm() / (1.0 + Self::scale(q, c)))
            .fold(0.0, f64::max)
    }

    fn derivative_residual(&self, c: C, order: usize) -> f64 {
        self.polys
            .iter()
            .map(|q| {
                let mut d = q.clone();
                for _ in 0..order {
                    d = d.iter().enumerate().skip(1).map(|(j, &a)| a * j as f64).collect();
                }
                let v = if d.is_empty() { ZERO } else { Self::eval_poly(&d, c).0 };
                v.norm() / (1.0 + Self::scale(q, c))
            })
            .fold(0.0, f64::max)
    }

    /// Gauss–Newton on `Σ |Q_i(c)|²` from `start`.
    fn refine(&self, start: C) -> Option<C> {
        let mut c = start;
        for _ in 0..200 {
            let (mut num, mut den) = (ZERO, 0.0);
            for q in &self.polys {
                let (v, d) = Self::eval_poly(q, c);
                num += d.conj() * v;
                den += d.norm_sqr();
            }
            if den == 0.0 || !den.is_finite() {
                break;
            }
            let step = num / den;
            if !step.is_finite() {
                return None;
            }
            c -= step;
            if c.norm() > 1e6 {
                return None;
            }
            if step.norm() <= 1e-15 * (1.0 + c.norm()) {
                break;
            }
        }
        c.is_finite().then_some(c)
    }

    /// Multiplicity read from the vanishing of successive derivatives.
    fn multiplicity(&self, c: C) -> usize {
        let degree = self.polys.first().map_or(0, |q| q.len() - 1);
        let mut m = 1;
        while m < degree && self.derivative_residual(c, m) <= 1e-6 {
            m += 1;
        }
        m
    }
}

fn constant_order(a: &C, b: &C) -> Ordering {
    if (a.re - b.re).abs() > 1e-9 * (1.0 + a.re.abs().max(b.re.abs())) {
        a.re.partial_cmp(&b.re).unwrap_or(Ordering::Equal)
    } else {
        a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal)
    }
}

/// Solves the reduction identity of a linear or separable equation.
///
/// Linear equations delegate to the characteristic polynomial's roots.
/// Separable equations are searched over `grid` with Gauss–Newton
/// refinement from every grid point; a constant is kept when its relative
/// residual is at most `tol`.
pub fn solve_reduction_constant(eq: &DifferenceEquation, grid: &GridSpec, tol: f64) -> Result<ReductionConstantSet, SymmetryError> {
    match eq.kind() {
        EquationKind::General { .. } => Err(SymmetryError::NotSeparable(eq.kind().name().to_string())),
        EquationKind::Linear { b, .. } => {
            let form = SeparableForm::of(eq).expect("linear form");
            let identity = ReductionIdentity::new(&form)?;
            let roots = find_roots(&characteristic_polynomial(b), tol)?;
            let mut constants: Vec<ReductionConstant> = roots
                .roots
                .iter()
                .map(|r| ReductionConstant { value: r.value, multiplicity: r.multiplicity, residual: identity.residual(r.value) })
                .collect();
            constants.sort_by(|a, b| constant_order(&a.value, &b.value));
            Ok(ReductionConstantSet { constants, exact: true })
        }
        _ => solve_reduction_constant_form(&SeparableForm::of(eq).expect("separable form"), grid, tol),
    }
}

/// Numeric reduction constants of a separable form.
pub fn solve_reduction_constant_form(form: &SeparableForm, grid: &GridSpec, tol: f64) -> Result<ReductionConstantSet, SymmetryError> {
    let identity = ReductionIdentity::new(form)?;
    let mut found: Vec<(C, f64)> = Vec::new();
    for start in grid.points() {
        let Some(c) = identity.refine(start) else { continue };
        let snapped = crate::poly::tidy(c);
        let c = if identity.relative_residual(snapped) <= identity.relative_residual(c).max(tol) { snapped } else { c };
        let rel = identity.relative_residual(c);
        if rel.is_nan() || rel > tol {
            continue;
        }
        match found.iter_mut().find(|(v, _)| (*v - c).norm() <= 1e-6 * (1.0 + v.norm())) {
            Some(slot) => {
                if rel < slot.1 {
                    *slot = (c, rel);
                }
            }
            None => found.push((c, rel)),
        }
    }
    let mut constants: Vec<ReductionConstant> = found
        .into_iter()
        .map(|(value, _)| ReductionConstant { value, multiplicity: identity.multiplicity(value), residual: identity.residual(value) })
        .collect();
    constants.sort_by(|a, b| constant_order(&a.value, &b.value));
    Ok(ReductionConstantSet { constants, exact: false })
}

// ---------------------------------------------------------------- construction

/// `coef * node` with unit coefficients elided.
fn scaled(coef: C, node: Node) -> Node {
    if coef == ONE {
        node
    } else if coef == -ONE {
        Node::neg(node)
    } else {
        Node::mul(Node::Const(coef), node)
    }
}

/// `Σ coef_i * node_i`, skipping zero coefficients and writing negative
/// real coefficients as subtraction.
fn linear_combination(terms: Vec<(C, Node)>) -> Node {
    let mut acc: Option<Node> = None;
    for (coef, node) in terms {
        if coef == ZERO {
            continue;
        }
        acc = Some(match acc {
            None => scaled(coef, node),
            Some(a) if coef.im == 0.0 && coef.re < 0.0 => Node::sub(a, scaled(-coef, node)),
            Some(a) => Node::add(a, scaled(coef, node)),
        });
    }
    acc.unwrap_or(Node::Const(ZERO))
}

/// `Π node_i ^ e_i` as a quotient, with exponents `±1` written plainly.
fn power_product(factors: Vec<(Node, C)>) -> Node {
    let mut num: Vec<Node> = Vec::new();
    let mut den: Vec<Node> = Vec::new();
    for (node, e) in factors {
        if e == ZERO {
            continue;
        }
        if e == ONE {
            num.push(node);
        } else if e == -ONE {
            den.push(node);
        } else if e.im == 0.0 && e.re < 0.0 {
            den.push(Node::pow(node, Node::Const(-e)));
        } else {
            num.push(Node::pow(node, Node::Const(e)));
        }
    }
    let product = |items: Vec<Node>| items.into_iter().reduce(Node::mul);
    let top = product(num).unwrap_or(Node::Const(ONE));
    match product(den) {
        Some(bottom) => Node::div(top, bottom),
        None => top,
    }
}

fn validate_constant(form: &SeparableForm, c: C, tol: f64) -> Result<(), SymmetryError> {
    let residual = ReductionIdentity::new(form)?.relative_residual(c);
    if residual <= tol {
        Ok(())
    } else {
        Err(SymmetryError::InvalidConstant { constant: format_complex(c), residual, tol })
    }
}

/// Builds the type-`(1,k)` symmetry of a separable form for constant `c`,
/// additive or multiplicative by the form's group.
pub fn build_form_symmetry(form: &SeparableForm, c: C, tol: f64) -> Result<FormSymmetry, SymmetryError> {
    validate_constant(form, c, tol)?;
    let k = form.k();
    let x = || Node::var("x");
    let comp = |i: usize| form.components[i].root().clone();
    let (h, log_components) = if form.group.is_additive() {
        let h = (1..=k)
            .map(|j| {
                let mut terms = vec![(c.powi(j as i32), x())];
                terms.extend((0..j).map(|i| (-c.powi((j - 1 - i) as i32), comp(i))));
                Expression::new(linear_combination(terms).simplified())
            })
            .collect();
        (h, None)
    } else {
        let h = (1..=k)
            .map(|j| {
                let mut factors = vec![(x(), c.powi(j as i32))];
                factors.extend((0..j).map(|i| (comp(i), -c.powi((j - 1 - i) as i32))));
                Expression::new(power_product(factors).simplified())
            })
            .collect();
        let logs = (1..=k)
            .map(|j| {
                let mut terms = vec![(c.powi(j as i32), Node::call(Func::Ln, x()))];
                terms.extend((0..j).map(|i| (-c.powi((j - 1 - i) as i32), Node::call(Func::Ln, comp(i)))));
                Expression::new(linear_combination(terms))
            })
            .collect();
        (h, Some(logs))
    };
    Ok(FormSymmetry {
        order: k + 1,
        group: form.group,
        shape: SymmetryShape::UnaryList(h),
        constant: Some(c),
        params: form.params.clone(),
        log_components,
    })
}

fn form_in(eq: &DifferenceEquation, additive: bool) -> Result<SeparableForm, SymmetryError> {
    let form = SeparableForm::of(eq).ok_or_else(|| SymmetryError::NotSeparable(eq.kind().name().to_string()))?;
    match (additive, form.group.is_additive()) {
        (true, false) => Err(SymmetryError::WrongGroup("additive")),
        (false, true) => Err(SymmetryError::WrongGroup("multiplicative")),
        _ => Ok(form),
    }
}

/// `h_j(z) = c^j z - c^{j-1} φ_0(z) - … - φ_{j-1}(z)`.
pub fn build_additive_form_symmetry(eq: &DifferenceEquation, c: C, tol: f64) -> Result<FormSymmetry, SymmetryError> {
    build_form_symmetry(&form_in(eq, true)?, c, tol)
}

/// `h_j(t) = t^{c^j} ψ_0(t)^{-c^{j-1}} ⋯ ψ_{j-1}(t)^{-1}`.
pub fn build_multiplicative_form_symmetry(eq: &DifferenceEquation, c: C, tol: f64) -> Result<FormSymmetry, SymmetryError> {
    build_form_symmetry(&form_in(eq, false)?, c, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    fn p(s: &str) -> Expression {
        parse_expression(s).unwrap()
    }

    fn r(v: f64) -> C {
        C::new(v, 0.0)
    }

    fn exp_map() -> DifferenceEquation {
        DifferenceEquation::separable(GroupTag::MultiplicativePositive, vec![p("exp(-x)"), p("x*exp(-x)")], p("exp(a)"))
            .unwrap()
            .with_param("a", 4.6)
            .unwrap()
    }

    fn ratio_eq() -> DifferenceEquation {
        DifferenceEquation::separable(GroupTag::MultiplicativePositive, vec![p("x"), p("1/x")], p("a"))
            .unwrap()
            .with_param("a", 1.0)
            .unwrap()
    }

    #[test]
    fn hd1_verdicts() {
        let rk = DifferenceEquation::general(3, GroupTag::MultiplicativePositive, p("x0*(a*x1/x2 + b)"))
            .unwrap()
            .with_params([("a".to_string(), r(1.0)), ("b".to_string(), r(0.5))].into())
            .unwrap();
        let report = check_hd1(&rk, 200, 1e-9, 1);
        assert!(report.verdict, "{report:?}");
        assert_eq!(report.samples_tested, 200);

        let i1 = DifferenceEquation::general(2, GroupTag::AdditiveReal, p("x0 + (x0 - x1)^2")).unwrap();
        assert!(check_hd1(&i1, 200, 1e-9, 2).verdict);

        let sq = DifferenceEquation::general(1, GroupTag::AdditiveReal, p("x0^2")).unwrap();
        let report = check_hd1(&sq, 200, 1e-9, 3);
        assert!(!report.verdict);
        let w = report.witness.expect("witness");
        assert!(w.residual > 1e-9);
    }

    #[test]
    fn exp_map_constant() {
        let set = solve_reduction_constant(&exp_map(), &GridSpec::default(), 1e-9).unwrap();
        assert_eq!(set.constants.len(), 1, "{set:?}");
        assert!((set.constants[0].value - r(-1.0)).norm() < 1e-9);
        assert_eq!(set.constants[0].multiplicity, 1);
        assert!(!set.exact);
    }

    #[test]
    fn ratio_constants() {
        let set = solve_reduction_constant(&ratio_eq(), &GridSpec::default(), 1e-9).unwrap();
        let s3 = 3f64.sqrt() / 2.0;
        let values = set.values();
        assert_eq!(values.len(), 2, "{set:?}");
        assert!((values[0] - C::new(0.5, -s3)).norm() < 1e-9);
        assert!((values[1] - C::new(0.5, s3)).norm() < 1e-9);
    }

    #[test]
    fn linear_constants_are_roots() {
        let lin = DifferenceEquation::linear(vec![r(-3.0), r(2.0)], p("0")).unwrap();
        let set = solve_reduction_constant(&lin, &GridSpec::default(), 1e-9).unwrap();
        assert!(set.exact);
        let values = set.values();
        assert!((values[0] - r(1.0)).norm() < 1e-12);
        assert!((values[1] - r(2.0)).norm() < 1e-12);
        // oracle: z^2 - 3z + 2 vanishes at both
        for v in values {
            assert!((v * v - 3.0 * v + 2.0).norm() < 1e-12);
        }
    }

    #[test]
    fn repeated_constant_has_multiplicity_two() {
        // φ_j = -b_j z with (z - 1)^2
        let sep = DifferenceEquation::separable(GroupTag::AdditiveComplex, vec![p("2*x"), p("-x")], p("0")).unwrap();
        let set = solve_reduction_constant(&sep, &GridSpec::default(), 1e-9).unwrap();
        assert_eq!(set.constants.len(), 1, "{set:?}");
        assert_eq!(set.constants[0].multiplicity, 2);
        assert!((set.constants[0].value - r(1.0)).norm() < 1e-7);
    }

    #[test]
    fn additive_symmetries_of_lin2() {
        let q = 2.0;
        let lin = DifferenceEquation::linear(vec![r(-1.0 - q), r(q)], p("0")).unwrap();
        let h = build_additive_form_symmetry(&lin, r(1.0), 1e-9).unwrap();
        let z = r(1.7);
        assert!((h.eval_h(1, z).unwrap() - (-q * z)).norm() < 1e-12);
        assert!((h.evaluate(&[r(1.0), r(1.0)]).unwrap()[0] - r(-1.0)).norm() < 1e-12);

        let h = build_additive_form_symmetry(&lin, r(q), 1e-9).unwrap();
        assert!((h.eval_h(1, z).unwrap() + z).norm() < 1e-12);

        let degenerate = DifferenceEquation::separable(GroupTag::AdditiveComplex, vec![p("0"), p("0")], p("0")).unwrap();
        let h = build_additive_form_symmetry(&degenerate, r(0.0), 1e-9).unwrap();
        assert_eq!(h.eval_h(1, z).unwrap(), r(0.0));
    }

    #[test]
    fn multiplicative_symmetries() {
        let h = build_multiplicative_form_symmetry(&exp_map(), r(-1.0), 1e-9).unwrap();
        assert_eq!(h.components().unwrap()[0].to_string(), "1/(x*exp(-x))");
        let v = h.evaluate(&[r(2.3), r(2.3)]).unwrap()[0];
        assert!((v - r(2.3f64.exp())).norm() < 1e-12 * v.norm());

        let s3 = 3f64.sqrt() / 2.0;
        let (cp, cm) = (C::new(0.5, s3), C::new(0.5, -s3));
        let h = build_multiplicative_form_symmetry(&ratio_eq(), cp, 1e-9).unwrap();
        for t in [0.3, 1.0, 2.0, 7.5] {
            let expected = (-cm * r(t).ln()).exp();
            assert!((h.eval_h(1, r(t)).unwrap() - expected).norm() < 1e-12);
        }

        let hd1m = DifferenceEquation::separable(GroupTag::MultiplicativePositive, vec![p("x^2"), p("1/x")], p("a"))
            .unwrap()
            .with_param("a", 1.0)
            .unwrap();
        let h = build_multiplicative_form_symmetry(&hd1m, r(1.0), 1e-9).unwrap();
        for t in [0.5, 3.0] {
            assert!((h.eval_h(1, r(t)).unwrap() - r(1.0 / t)).norm() < 1e-12);
        }
    }

    #[test]
    fn invalid_constant_is_rejected() {
        match build_multiplicative_form_symmetry(&exp_map(), r(0.5), 1e-9) {
            Err(SymmetryError::InvalidConstant { residual, .. }) => assert!(residual > 1e-3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            build_additive_form_symmetry(&exp_map(), r(-1.0), 1e-9),
            Err(SymmetryError::WrongGroup("additive"))
        ));
    }

    #[test]
    fn inversion_evaluation() {
        let h = FormSymmetry::inversion(3, GroupTag::AdditiveReal);
        assert_eq!(h.evaluate(&[r(5.0), r(3.0), r(1.0)]).unwrap(), vec![r(2.0), r(2.0)]);
        assert_eq!(h.m(), 2);
        assert!(matches!(h.evaluate(&[r(1.0)]), Err(SymmetryError::Arity { expected: 3, found: 1 })));
    }

    #[test]
    fn separability_is_detected() {
        let hd0 = DifferenceEquation::general(2, GroupTag::AdditiveReal, p("a*x0/(-x0 + (x0 + x1))"))
            .unwrap()
            .with_param("a", 1.0)
            .unwrap();
        assert!(detect_separable(&hd0, GroupTag::AdditiveReal, 32, 1e-9, 0).is_none());
        let form = detect_separable(&hd0, GroupTag::MultiplicativePositive, 32, 1e-9, 0).unwrap();
        let set = solve_reduction_constant_form(&form, &GridSpec::default(), 1e-9).unwrap();
        assert_eq!(set.constants.len(), 2);

        let exp = DifferenceEquation::general(2, GroupTag::MultiplicativePositive, p("x1*exp(a - x0 - x1)"))
            .unwrap()
            .with_param("a", 4.6)
            .unwrap();
        let form = detect_separable(&exp, GroupTag::MultiplicativePositive, 32, 1e-9, 0).unwrap();
        let set = solve_reduction_constant_form(&form, &GridSpec::default(), 1e-9).unwrap();
        assert_eq!(set.values().len(), 1);
        assert!((set.values()[0] + 1.0).norm() < 1e-9);

        let nonsep = DifferenceEquation::general(2, GroupTag::AdditiveReal, p("x0*x1 + 1")).unwrap();
        assert!(detect_separable(&nonsep, GroupTag::AdditiveReal, 32, 1e-9, 0).is_none());
    }
}
