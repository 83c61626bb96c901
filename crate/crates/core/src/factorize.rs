//! Semiconjugate factorizations: construction, simulation and verification.
//!
//! A factorization splits `x_{n+1} = f_n(x_n, …, x_{n-k})` into a factor
//! equation of order `m` in a new variable and a cofactor equation that
//! rebuilds `x` from the factor sequence. [`Reduction`] covers a single
//! factorization, a chain in which the factor is reduced again, and the
//! fully cascaded linear case.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{ExprError, Expression, Node};
use crate::model::{
    iterate_orbit, rel_err, state_index, state_var, DifferenceEquation, EquationKind, GroupTag,
    ModelError, Orbit, StepError, Truncation, C,
};
use crate::poly::{characteristic_polynomial, find_roots, format_complex, synthetic_division, PolyError, Polynomial};
use crate::symmetry::{
    build_form_symmetry, check_hd1_in, detect_separable, solve_reduction_constant, solve_reduction_constant_form,
    FormSymmetry, GridSpec, ReductionConstantSet, SeparableForm, SymmetryError,
};

/// Default tolerance for validating reduction constants.
pub const DEFAULT_TOL: f64 = 1e-9;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorizeError {
    #[error("an order-{0} equation cannot be reduced by inversion")]
    OrderTooLow(usize),
    #[error("substituted factor fails the semiconjugacy check (residual {residual:e}); the equation is not HD1")]
    NotHd1 { residual: f64 },
    #[error("consistency check c*h_k = phi_k fails with residual {residual:e}")]
    Consistency { residual: f64 },
    #[error("a linear equation is required")]
    NotLinear,
    #[error("no form symmetry found")]
    NoSymmetry,
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("initial transform failed: {0}")]
    Transform(String),
}

impl From<ExprError> for FactorizeError {
    fn from(e: ExprError) -> Self {
        FactorizeError::Transform(e.to_string())
    }
}

/// Logarithmic simulation of a multiplicative separable factorization:
/// `ρ_{n+1} = ln β_n + c ρ_n` with `r = e^ρ`, avoiding branch jumps of
/// `r^c` when `c` is complex.
#[derive(Debug, Clone, PartialEq)]
struct LogLift {
    c: C,
    /// `β_n` of the separable form (the source may be a general-kind
    /// equation with no forcing of its own).
    forcing: Expression,
}

/// Factor plus cofactor for one form symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct ScFactorization {
    source: DifferenceEquation,
    symmetry: FormSymmetry,
    factor: DifferenceEquation,
    /// In `t` (the new factor value `t_{n+1}`) and `x0..x_{k-m}`.
    cofactor: Expression,
    letter: char,
    lift: Option<LogLift>,
}

impl ScFactorization {
    pub fn source(&self) -> &DifferenceEquation {
        &self.source
    }

    pub fn symmetry(&self) -> &FormSymmetry {
        &self.symmetry
    }

    pub fn factor(&self) -> &DifferenceEquation {
        &self.factor
    }

    pub fn cofactor(&self) -> &Expression {
        &self.cofactor
    }

    pub fn constant(&self) -> Option<C> {
        self.symmetry.constant()
    }

    /// Order of the cofactor, `k + 1 - m`.
    pub fn cofactor_order(&self) -> usize {
        self.source.order() - self.factor.order()
    }

    /// Factor initial values (oldest first) from source initial values
    /// (oldest first): `t_{-j} = H_j`-components of the shifted states.
    pub fn transform_init(&self, init: &[C]) -> Result<Vec<C>, FactorizeError> {
        self.source.check_init(init)?;
        let newest: Vec<C> = init.iter().rev().copied().collect();
        let h = self.symmetry.evaluate(&newest)?;
        let mut out: Vec<C> = h.into_iter().rev().collect();
        if self.lift.is_some() {
            out = vec![self.log_h_total(&newest)?.exp()];
        }
        Ok(out)
    }

    /// `ln u_0 + Σ ln h_j(u_j)` in logarithmic form.
    fn log_h_total(&self, newest: &[C]) -> Result<C, ExprError> {
        let mut acc = newest[0].ln();
        for (j, &u) in newest.iter().enumerate().skip(1) {
            acc += self.symmetry.eval_log_h(j, u)?;
        }
        Ok(acc)
    }

    fn drive(&self, init: &[C], steps: usize) -> Result<Drive, FactorizeError> {
        if let Some(lift) = &self.lift {
            self.source.check_init(init)?;
            let newest: Vec<C> = init.iter().rev().copied().collect();
            let mut rho = self.log_h_total(&newest)?;
            let mut factor = Orbit::new(&self.factor, vec![rho.exp()]);
            let mut inputs = Vec::with_capacity(steps);
            for n in 0..steps {
                let at_n = |name: &str| (name == "n").then_some(C::new(n as f64, 0.0));
                let beta = match self.source.eval_with(&lift.forcing, &at_n) {
                    Ok(b) if b != ZERO && b.is_finite() => b,
                    Ok(_) => {
                        factor.truncation = Some(Truncation { index: n + 1, reason: "forcing is zero or non-finite".into() });
                        break;
                    }
                    Err(e) => {
                        factor.truncation = Some(Truncation { index: n + 1, reason: e.to_string() });
                        break;
                    }
                };
                rho = beta.ln() + lift.c * rho;
                let r = rho.exp();
                if !rho.is_finite() || !r.is_finite() {
                    factor.truncation = Some(Truncation { index: n + 1, reason: "non-finite value".into() });
                    break;
                }
                inputs.push(rho);
                factor.values.push(r);
            }
            return Ok(Drive { inputs, factor, stages: Vec::new() });
        }
        let factor_init = self.transform_init(init)?;
        let factor = iterate_orbit(&self.factor, &factor_init, steps)?;
        Ok(Drive { inputs: factor.values.clone(), factor, stages: Vec::new() })
    }

    fn link(&self, n: usize, input: C, history: &[C]) -> Result<C, StepError> {
        let _ = n;
        let v = if self.lift.is_some() {
            let mut w = input;
            for (j, &x) in history.iter().enumerate() {
                w -= self.symmetry.eval_log_h(j + 1, x)?;
            }
            w.exp()
        } else {
            let lookup = |name: &str| {
                if name == "t" {
                    return Some(input);
                }
                match state_index(name) {
                    Some(j) => history.get(j).copied(),
                    None => self.source.params().get(name).copied(),
                }
            };
            self.cofactor.evaluate_with(&lookup)?
        };
        if !v.is_finite() {
            return Err(StepError::NonFinite);
        }
        if !self.source.group().contains(v) {
            return Err(StepError::Carrier(format_complex(v)));
        }
        Ok(v)
    }

    /// Factor equation text, e.g. `r(n+1) = exp(a)/r(n)`.
    pub fn factor_text(&self) -> String {
        self.factor_text_as(self.letter)
    }

    /// Cofactor equation text, e.g. `x(n+1) = t(n+1) + x(n)`.
    pub fn cofactor_text(&self) -> String {
        self.cofactor_text_as('x', self.letter)
    }

    fn factor_text_as(&self, letter: char) -> String {
        let rename = |name: &str| {
            state_index(name).map(|j| if j == 0 { format!("{letter}(n)") } else { format!("{letter}(n-{j})") })
        };
        format!("{letter}(n+1) = {}", self.factor.rhs_expression().display_with(&rename))
    }

    fn cofactor_text_as(&self, base: char, letter: char) -> String {
        let rename = |name: &str| {
            if name == "t" {
                return Some(format!("{letter}(n+1)"));
            }
            state_index(name).map(|j| if j == 0 { format!("{base}(n)") } else { format!("{base}(n-{j})") })
        };
        format!("{base}(n+1) = {}", self.cofactor.display_with(&rename))
    }

    pub fn describe(&self) -> String {
        self.describe_as('x', self.letter)
    }

    /// Report with `base` for the source variable and `letter` for the factor variable.
    fn describe_as(&self, base: char, letter: char) -> String {
        let mut out = String::new();
        let m = self.factor.order();
        out.push_str(&format!("type-({m},{}) reduction over the {} group\n", self.cofactor_order(), self.source.group()));
        if let Some(c) = self.constant() {
            out.push_str(&format!("constant c = {}\n", format_complex(c)));
        }
        out.push_str(&format!("symmetry: {}\n", self.symmetry.describe().replace('\n', "\n  ")));
        out.push_str(&format!("factor:   {}\n", self.factor_text_as(letter)));
        out.push_str(&format!("cofactor: {}\n", self.cofactor_text_as(base, letter)));
        out
    }
}

fn factor_name(source: &DifferenceEquation) -> String {
    if source.name().is_empty() {
        "factor".to_string()
    } else {
        format!("{} factor", source.name())
    }
}

/// HD1 factorization: `t_{n+1} = f(e, t_n^{-1}, (t_n ∗ t_{n-1})^{-1}, …)`,
/// `x_{n+1} = t_{n+1} ∗ x_n`, `t_{-j} = x_{-j} ∗ x_{-j-1}^{-1}`.
///
/// The factor is built by substitution in the right-hand side and then
/// validated against the semiconjugacy identity.
pub fn factor_hd1(eq: &DifferenceEquation) -> Result<ScFactorization, FactorizeError> {
    let k = eq.k();
    if k == 0 {
        return Err(FactorizeError::OrderTooLow(eq.order()));
    }
    let g = eq.group();
    let mut map = HashMap::new();
    map.insert(state_var(0), Node::Const(g.identity()));
    for i in 1..=k {
        let combined = (0..i).map(|j| Node::var(state_var(j))).reduce(|a, b| if g.is_additive() { Node::add(a, b) } else { Node::mul(a, b) }).unwrap();
        let inverse = if g.is_additive() { Node::neg(combined) } else { Node::div(Node::real(1.0), combined) };
        map.insert(state_var(i), inverse);
    }
    let rhs = Expression::new(eq.rhs_expression().substitute(&map).into_root().simplified());
    let factor = DifferenceEquation::new(k, g, EquationKind::General { rhs }, eq.params().clone())?.with_name(factor_name(eq));
    let cofactor = if g.is_additive() {
        Node::add(Node::var("t"), Node::var("x0"))
    } else {
        Node::mul(Node::var("t"), Node::var("x0"))
    };
    let fact = ScFactorization {
        source: eq.clone(),
        symmetry: FormSymmetry::inversion(eq.order(), g),
        factor,
        cofactor: Expression::new(cofactor),
        letter: 't',
        lift: None,
    };
    let report = verify_semiconjugacy(eq, &fact.symmetry, &fact.factor, 32, 1e-6, 0);
    if !report.passed {
        return Err(FactorizeError::NotHd1 { residual: report.max_residual });
    }
    Ok(fact)
}

/// Type-`(1,k)` factorization of a separable form with constant `c`,
/// additive or multiplicative by the form's group. `source` is the
/// equation being factored (it may be a general-kind equation whose
/// separable form was detected numerically).
pub fn factor_separable_form(
    source: &DifferenceEquation,
    form: &SeparableForm,
    c: C,
    tol: f64,
) -> Result<ScFactorization, FactorizeError> {
    let symmetry = build_form_symmetry(form, c, tol)?;
    let k = form.k();
    let h = symmetry.components().expect("unary symmetry").to_vec();
    let h_at = |j: usize| h[j - 1].substitute_var("x", &Node::var(state_var(j - 1))).into_root();
    let source = source.clone().with_group(form.group);
    let real_c = c.im == 0.0;
    if form.group.is_additive() {
        // c·h_k(z) = φ_k(z)
        if k >= 1 {
            let mut worst: f64 = 0.0;
            for i in 0..32 {
                let z = C::new(-3.0 + 6.0 * (i as f64 + 0.5) / 32.0, 0.0);
                let (Ok(hk), Ok(phik)) = (symmetry.eval_h(k, z), form.eval_component(k, z)) else { continue };
                let mut scale = (c.powi(k as i32 + 1) * z).norm();
                for j in 0..=k {
                    scale += c.norm().powi((k - j) as i32) * form.eval_component(j, z).map_or(0.0, |v| v.norm());
                }
                worst = worst.max((c * hk - phik).norm() / (1.0 + scale));
            }
            if worst > 10.0 * tol {
                return Err(FactorizeError::Consistency { residual: worst });
            }
        }
        let group = if real_c { form.group } else { GroupTag::AdditiveComplex };
        let factor = DifferenceEquation::new(
            1,
            group,
            EquationKind::Linear { b: vec![-c], forcing: form.forcing.clone() },
            form.params.clone(),
        )?
        .with_group(group)
        .with_name(factor_name(&source));
        let cofactor = (1..=k).fold(Node::var("t"), |acc, j| Node::sub(acc, h_at(j)));
        Ok(ScFactorization { source, symmetry, factor, cofactor: Expression::new(cofactor.simplified()), letter: 'z', lift: None })
    } else {
        let beta = form.forcing.root().clone();
        let x0 = Node::var("x0");
        let rhs = if c == -ONE {
            Node::div(beta, x0)
        } else if c == ONE {
            Node::mul(beta, x0)
        } else {
            Node::mul(beta, Node::pow(x0, Node::Const(c)))
        };
        let group = if real_c { form.group } else { GroupTag::MultiplicativeNonzero };
        let factor = DifferenceEquation::new(1, group, EquationKind::General { rhs: Expression::new(rhs.simplified()) }, form.params.clone())?
            .with_name(factor_name(&source));
        let cofactor = match (1..=k).map(h_at).reduce(Node::mul) {
            Some(den) => Node::div(Node::var("t"), den),
            None => Node::var("t"),
        };
        let lift = (form.group == GroupTag::MultiplicativePositive).then_some(LogLift { c, forcing: form.forcing.clone() });
        Ok(ScFactorization { source, symmetry, factor, cofactor: Expression::new(cofactor.simplified()), letter: 'r', lift })
    }
}

fn separable_form_of(eq: &DifferenceEquation, additive: bool) -> Result<SeparableForm, FactorizeError> {
    let form = SeparableForm::of(eq).ok_or_else(|| SymmetryError::NotSeparable(eq.kind().name().to_string()))?;
    if form.group.is_additive() != additive {
        return Err(SymmetryError::WrongGroup(if additive { "additive" } else { "multiplicative" }).into());
    }
    Ok(form)
}

/// `z_{n+1} = α_n + c z_n`, `x_{n+1} = z_{n+1} - h_1(x_n) - … - h_k(x_{n-k+1})`.
pub fn factor_separable_additive(eq: &DifferenceEquation, c: C) -> Result<ScFactorization, FactorizeError> {
    factor_separable_form(eq, &separable_form_of(eq, true)?, c, DEFAULT_TOL)
}

/// `r_{n+1} = β_n r_n^c`, `y_{n+1} = r_{n+1} / (h_1(y_n) ⋯ h_k(y_{n-k+1}))`.
pub fn factor_separable_multiplicative(eq: &DifferenceEquation, c: C) -> Result<ScFactorization, FactorizeError> {
    factor_separable_form(eq, &separable_form_of(eq, false)?, c, DEFAULT_TOL)
}

// ---------------------------------------------------------------- linear cascade

/// Full triangular factorization of a linear equation into first-order
/// stages `z_{i,n+1} = input_i(n) + c_i z_{i,n}`, with `input_0 = α_n`,
/// `input_i = z_{i-1,n+1}` and `z_k = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularSystem {
    source: DifferenceEquation,
    eigenvalues: Vec<C>,
    /// `beta[ℓ]`: coefficients (after the leading 1) of
    /// `P_ℓ = P / ((z - c_0)⋯(z - c_{ℓ-1}))`; `beta[0] = b`.
    beta: Vec<Vec<C>>,
    remainders: Vec<f64>,
    reconstruction_error: f64,
}

impl TriangularSystem {
    pub fn source(&self) -> &DifferenceEquation {
        &self.source
    }

    /// `c_0, …, c_k` in stage order.
    pub fn eigenvalues(&self) -> &[C] {
        &self.eigenvalues
    }

    pub fn beta(&self) -> &[Vec<C>] {
        &self.beta
    }

    /// Deflation remainders `|P_ℓ(c_ℓ)|`.
    pub fn remainders(&self) -> &[f64] {
        &self.remainders
    }

    /// Largest coefficient difference between `Π (z - c_i)` and `P`.
    pub fn reconstruction_error(&self) -> f64 {
        self.reconstruction_error
    }

    /// Same system with the eigenvalues taken in another order.
    pub fn reordered(&self, order: &[usize]) -> Result<TriangularSystem, FactorizeError> {
        let eigenvalues: Vec<C> = order.iter().map(|&i| self.eigenvalues[i]).collect();
        build_triangular(&self.source, eigenvalues)
    }

    /// `z_{i,0} = x_0 + Σ_j β_{i+1,j} x_{-1-j}` for `i < k`.
    pub fn stage_init(&self, init: &[C]) -> Vec<C> {
        let newest: Vec<C> = init.iter().rev().copied().collect();
        let k = self.eigenvalues.len() - 1;
        (0..k)
            .map(|i| {
                self.beta[i + 1].iter().enumerate().fold(newest[0], |acc, (j, &b)| acc + b * newest[1 + j])
            })
            .collect()
    }

    fn drive(&self, init: &[C], steps: usize) -> Result<Drive, FactorizeError> {
        self.source.check_init(init)?;
        let k = self.eigenvalues.len() - 1;
        let mut z = self.stage_init(init);
        let mut stages: Vec<Orbit> = z.iter().map(|&z0| Orbit::from_values(vec![z0], Vec::new())).collect();
        let mut inputs = Vec::with_capacity(steps);
        let mut truncation = None;
        for n in 0..steps {
            let mut input = match self.source.eval_forcing(n) {
                Ok(a) => a,
                Err(e) => {
                    truncation = Some(Truncation { index: n + 1, reason: e.to_string() });
                    break;
                }
            };
            for i in 0..k {
                z[i] = input + self.eigenvalues[i] * z[i];
                stages[i].values.push(z[i]);
                input = z[i];
            }
            if !input.is_finite() {
                truncation = Some(Truncation { index: n + 1, reason: "non-finite value".into() });
                break;
            }
            inputs.push(input);
        }
        let mut factor = stages.first().cloned().unwrap_or_else(|| Orbit::from_values(Vec::new(), inputs.clone()));
        factor.truncation = truncation;
        Ok(Drive { inputs, factor, stages })
    }

    fn link(&self, input: C, history: &[C]) -> Result<C, StepError> {
        let v = input + self.eigenvalues[self.eigenvalues.len() - 1] * history[0];
        if !v.is_finite() {
            return Err(StepError::NonFinite);
        }
        Ok(v)
    }

    pub fn describe(&self) -> String {
        let k = self.eigenvalues.len() - 1;
        let mut out = String::from("full triangular factorization\neigenvalues:");
        for c in &self.eigenvalues {
            out.push_str(&format!(" {}", format_complex(*c)));
        }
        out.push('\n');
        let stage = |i: usize| if i == k { "x".to_string() } else { format!("z{i}") };
        for i in 0..=k {
            let input = if i == 0 { "alpha(n)".to_string() } else { format!("{}(n+1)", stage(i - 1)) };
            out.push_str(&format!(
                "stage {i}: {}(n+1) = {input} + ({})*{}(n)\n",
                stage(i),
                format_complex(self.eigenvalues[i]),
                stage(i)
            ));
        }
        out
    }
}

fn build_triangular(eq: &DifferenceEquation, eigenvalues: Vec<C>) -> Result<TriangularSystem, FactorizeError> {
    let EquationKind::Linear { b, .. } = eq.kind() else {
        return Err(FactorizeError::NotLinear);
    };
    let p = characteristic_polynomial(b);
    let mut beta = vec![b.clone()];
    let mut remainders = Vec::new();
    let mut current = p.clone();
    for &c in &eigenvalues {
        let (q, rem) = synthetic_division(&current, c);
        let scale = current.eval_scale(c).max(f64::MIN_POSITIVE);
        if rem.norm() > 1e-6 * scale {
            return Err(PolyError::Remainder { remainder: rem.norm(), tolerance: 1e-6 * scale }.into());
        }
        remainders.push(rem.norm());
        let desc = q.descending();
        beta.push(desc[1..].to_vec());
        current = q;
    }
    let rebuilt = Polynomial::from_roots(&eigenvalues);
    let reconstruction_error = rebuilt
        .coeffs()
        .iter()
        .zip(p.coeffs())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(TriangularSystem { source: eq.clone(), eigenvalues, beta, remainders, reconstruction_error })
}

/// Roots of the characteristic polynomial ordered by descending magnitude
/// (ties by ascending argument), peeled one per stage by deflation.
pub fn factor_linear_full(eq: &DifferenceEquation) -> Result<TriangularSystem, FactorizeError> {
    let EquationKind::Linear { b, .. } = eq.kind() else {
        return Err(FactorizeError::NotLinear);
    };
    let roots = find_roots(&characteristic_polynomial(b), 1e-9)?;
    build_triangular(eq, roots.expanded())
}

// ---------------------------------------------------------------- reductions

/// A factorization usable for simulation and verification.
#[derive(Debug, Clone, PartialEq)]
pub enum Reduction {
    Sc(ScFactorization),
    /// A factorization whose factor is reduced further by `inner`.
    Chain(FactorChain),
    Triangular(TriangularSystem),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorChain {
    pub outer: ScFactorization,
    pub inner: Box<Reduction>,
}

/// Output of the factor side: `inputs[n]` feeds the final link producing
/// `x_{n+1}`.
#[derive(Debug, Clone, PartialEq)]
struct Drive {
    inputs: Vec<C>,
    factor: Orbit,
    stages: Vec<Orbit>,
}

impl Reduction {
    pub fn source(&self) -> &DifferenceEquation {
        match self {
            Reduction::Sc(f) => &f.source,
            Reduction::Chain(c) => &c.outer.source,
            Reduction::Triangular(t) => &t.source,
        }
    }

    /// Number of past `x` values the final link reads.
    pub fn link_order(&self) -> usize {
        match self {
            Reduction::Sc(f) => f.cofactor_order(),
            Reduction::Chain(c) => c.outer.cofactor_order(),
            Reduction::Triangular(_) => 1,
        }
    }

    /// The single-level factorizations involved, outermost first.
    pub fn levels(&self) -> Vec<&ScFactorization> {
        match self {
            Reduction::Sc(f) => vec![f],
            Reduction::Chain(c) => {
                let mut v = vec![&c.outer];
                v.extend(c.inner.levels());
                v
            }
            Reduction::Triangular(_) => Vec::new(),
        }
    }

    /// True when every level ends in first-order equations.
    pub fn is_full(&self) -> bool {
        match self {
            Reduction::Sc(f) => f.factor.order() == 1 && f.cofactor_order() == 1,
            Reduction::Chain(c) => c.outer.cofactor_order() == 1 && c.inner.is_full(),
            Reduction::Triangular(_) => true,
        }
    }

    fn drive(&self, init: &[C], steps: usize) -> Result<Drive, FactorizeError> {
        match self {
            Reduction::Sc(f) => f.drive(init, steps),
            Reduction::Triangular(t) => t.drive(init, steps),
            Reduction::Chain(c) => {
                let factor_init = c.outer.transform_init(init)?;
                let sim = simulate_factorization(&c.inner, &factor_init, steps)?;
                let mut stages = vec![sim.factor.clone()];
                stages.extend(sim.stages);
                Ok(Drive { inputs: sim.orbit.values.clone(), factor: sim.orbit, stages })
            }
        }
    }

    fn link(&self, n: usize, input: C, history: &[C]) -> Result<C, StepError> {
        match self {
            Reduction::Sc(f) => f.link(n, input, history),
            Reduction::Chain(c) => c.outer.link(n, input, history),
            Reduction::Triangular(t) => t.link(input, history),
        }
    }

    /// Checks that `init` is valid for the source and every factor level.
    pub fn accepts(&self, init: &[C]) -> bool {
        self.drive(init, 1).is_ok_and(|d| d.inputs.len() == 1)
    }

    pub fn describe(&self) -> String {
        match self {
            Reduction::Sc(f) => f.describe(),
            Reduction::Triangular(t) => t.describe(),
            Reduction::Chain(_) => {
                let mut out = String::new();
                let mut used = vec!['x'];
                for (i, level) in self.levels().iter().enumerate() {
                    let letter = if used.contains(&level.letter) {
                        "tsuvwpq".chars().find(|l| !used.contains(l)).unwrap_or('y')
                    } else {
                        level.letter
                    };
                    let base = *used.last().unwrap();
                    used.push(letter);
                    out.push_str(&format!("level {}: ", i + 1));
                    out.push_str(level.describe_as(base, letter).replace('\n', "\n  ").trim_end());
                    out.push('\n');
                }
                if self.is_full() {
                    out.push_str("the cascade is fully triangular\n");
                }
                out
            }
        }
    }
}

impl From<ScFactorization> for Reduction {
    fn from(f: ScFactorization) -> Self {
        Reduction::Sc(f)
    }
}

impl From<TriangularSystem> for Reduction {
    fn from(t: TriangularSystem) -> Self {
        Reduction::Triangular(t)
    }
}

/// Orbits produced through a factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSimulation {
    /// The reconstructed source orbit.
    pub orbit: Orbit,
    /// The top-level factor orbit.
    pub factor: Orbit,
    /// Intermediate stage orbits (cascades and chains).
    pub stages: Vec<Orbit>,
}

/// Runs the factor side, then rebuilds `x` through the cofactor.
pub fn simulate_factorization(red: &Reduction, init: &[C], steps: usize) -> Result<FactorSimulation, FactorizeError> {
    let source = red.source();
    source.check_init(init)?;
    let drive = red.drive(init, steps)?;
    let mut orbit = Orbit::new(source, init.to_vec());
    let order = red.link_order();
    let mut history: Vec<C> = init.iter().rev().take(order).copied().collect();
    for (n, &input) in drive.inputs.iter().enumerate() {
        match red.link(n, input, &history) {
            Ok(v) => {
                orbit.values.push(v);
                history.rotate_right(1);
                history[0] = v;
            }
            Err(e) => {
                orbit.truncation = Some(Truncation { index: n + 1, reason: e.to_string() });
                break;
            }
        }
    }
    if orbit.truncation.is_none() && drive.inputs.len() < steps {
        let reason = drive.factor.truncation.as_ref().map_or("factor stopped".to_string(), |t| format!("factor: {}", t.reason));
        orbit.truncation = Some(Truncation { index: drive.inputs.len() + 1, reason });
    }
    Ok(FactorSimulation { orbit, factor: drive.factor, stages: drive.stages })
}

// ---------------------------------------------------------------- verification

/// A sample where `H ∘ F_n` and `Φ_n ∘ H` disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiconjugacyWitness {
    pub point: Vec<C>,
    pub n: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiconjugacyReport {
    pub passed: bool,
    pub samples_tested: usize,
    pub max_residual: f64,
    pub witness: Option<SemiconjugacyWitness>,
}

/// Unfolding `F_n(u) = (f_n(u), u_0, …, u_{k-1})`, newest first.
fn unfold(eq: &DifferenceEquation, n: usize, u: &[C]) -> Option<Vec<C>> {
    let v = eq.rhs(n, u).ok().filter(|v| v.is_finite())?;
    let mut out = Vec::with_capacity(u.len());
    out.push(v);
    out.extend_from_slice(&u[..u.len() - 1]);
    Some(out)
}

/// Checks `H(F_n(X)) = Φ_n(H(X))` at random states `X` of the source carrier
/// and random `n ∈ {0..10}`, componentwise to relative tolerance `tol`.
pub fn verify_semiconjugacy(
    eq: &DifferenceEquation,
    h: &FormSymmetry,
    factor: &DifferenceEquation,
    samples: usize,
    tol: f64,
    seed: u64,
) -> SemiconjugacyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group = eq.group();
    let mut tested = 0;
    let mut max_residual: f64 = 0.0;
    let mut witness: Option<SemiconjugacyWitness> = None;
    let arity_ok = h.order() == eq.order() && h.m() == factor.order();
    for _ in 0..10 * samples.max(1) {
        if tested == samples || !arity_ok {
            break;
        }
        let x: Vec<C> = (0..eq.order()).map(|_| group.sample(&mut rng)).collect();
        let n = rng.gen_range(0..=10);
        let Some(fx) = unfold(eq, n, &x) else { continue };
        let (Ok(lhs), Ok(hx)) = (h.evaluate(&fx), h.evaluate(&x)) else { continue };
        let Some(rhs) = unfold(factor, n, &hx) else { continue };
        if lhs.iter().chain(&rhs).any(|v| !v.is_finite()) {
            continue;
        }
        tested += 1;
        let residual = lhs.iter().zip(&rhs).map(|(a, b)| rel_err(*a, *b)).fold(0.0, f64::max);
        max_residual = max_residual.max(residual);
        if residual > tol && witness.as_ref().is_none_or(|w| residual > w.residual) {
            witness = Some(SemiconjugacyWitness { point: x, n, residual });
        }
    }
    SemiconjugacyReport {
        passed: arity_ok && tested == samples && max_residual <= tol,
        samples_tested: tested,
        max_residual: if arity_ok { max_residual } else { f64::INFINITY },
        witness,
    }
}

/// Random initial vectors (oldest first) drawn from the source carrier and
/// accepted by every level of `red`; at most `100·count` draws.
pub fn sample_valid_inits(red: &Reduction, count: usize, seed: u64) -> Vec<Vec<C>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = red.source();
    let mut out = Vec::with_capacity(count);
    for _ in 0..100 * count {
        if out.len() == count {
            break;
        }
        let init: Vec<C> = (0..source.order()).map(|_| source.group().sample(&mut rng)).collect();
        if red.accepts(&init) {
            out.push(init);
        }
    }
    out
}

/// How the cofactor side is run when comparing against direct iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivalenceMode {
    /// The factorization runs on its own from the transformed initial values.
    FreeRunning,
    /// The cofactor reads past `x` values from the direct orbit, so each
    /// step is compared in isolation; suited to chaotic equations where
    /// rounding differences grow.
    Anchored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub passed: bool,
    pub mode: EquivalenceMode,
    pub steps_compared: usize,
    /// Deviation in the requested mode.
    pub max_deviation: f64,
    pub free_deviation: f64,
    pub anchored_deviation: f64,
    /// Index `n` of `x_n` with the largest deviation in the requested mode.
    pub worst_index: usize,
    /// Largest `|im x| / (1 + |re x|)` on the reconstructed orbit.
    pub max_imag: f64,
    /// First index where one path stopped and the other did not.
    pub mismatch: Option<(usize, String)>,
}

/// Compares direct iteration of `eq` with the factorization over `steps`.
pub fn verify_equivalence(
    eq: &DifferenceEquation,
    red: &Reduction,
    init: &[C],
    steps: usize,
    tol: f64,
    mode: EquivalenceMode,
) -> Result<EquivalenceReport, FactorizeError> {
    let direct = iterate_orbit(eq, init, steps)?;
    let sim = simulate_factorization(red, init, steps)?;
    let drive = red.drive(init, steps)?;

    let mut free = (0.0f64, 0usize);
    for (i, (a, b)) in sim.orbit.values.iter().zip(&direct.values).enumerate() {
        let d = rel_err(*a, *b);
        if d > free.0 || d.is_nan() {
            free = (d, i + 1);
        }
    }
    let full = direct.full();
    let order = red.link_order();
    let k = eq.k();
    let mut anchored = (0.0f64, 0usize);
    let mut anchored_steps = 0;
    for (n, &input) in drive.inputs.iter().enumerate().take(direct.values.len()) {
        let newest = k + n;
        let history: Vec<C> = (0..order).map(|j| full[newest - j]).collect();
        let d = match red.link(n, input, &history) {
            Ok(v) => rel_err(v, direct.values[n]),
            Err(_) => f64::INFINITY,
        };
        anchored_steps += 1;
        if d > anchored.0 || d.is_nan() {
            anchored = (d, n + 1);
        }
    }
    let max_imag = sim.orbit.values.iter().map(|v| v.im.abs() / (1.0 + v.re.abs())).fold(0.0, f64::max);

    let compared = match mode {
        EquivalenceMode::FreeRunning => sim.orbit.values.len().min(direct.values.len()),
        EquivalenceMode::Anchored => anchored_steps,
    };
    let other_len = match mode {
        EquivalenceMode::FreeRunning => sim.orbit.values.len(),
        EquivalenceMode::Anchored => drive.inputs.len(),
    };
    let mismatch = if other_len != direct.values.len() {
        let index = other_len.min(direct.values.len()) + 1;
        let reason = if other_len < direct.values.len() {
            sim.orbit.truncation.as_ref().map_or("factorization stopped".into(), |t| format!("factorization: {}", t.reason))
        } else {
            direct.truncation.as_ref().map_or("direct iteration stopped".into(), |t| format!("direct: {}", t.reason))
        };
        Some((index, reason))
    } else {
        None
    };
    let (max_deviation, worst_index) = match mode {
        EquivalenceMode::FreeRunning => free,
        EquivalenceMode::Anchored => anchored,
    };
    Ok(EquivalenceReport {
        passed: mismatch.is_none() && max_deviation <= tol,
        mode,
        steps_compared: compared,
        max_deviation,
        free_deviation: free.0,
        anchored_deviation: anchored.0,
        worst_index,
        max_imag,
        mismatch,
    })
}

// ---------------------------------------------------------------- automatic reduction

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceOptions {
    /// Use this reduction constant instead of the first one found.
    pub constant: Option<C>,
    pub grid: GridSpec,
    pub tol: f64,
    /// Samples for HD1 and separability detection.
    pub samples: usize,
    pub seed: u64,
    /// Keep reducing factor equations of order two or more.
    pub recursive: bool,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions { constant: None, grid: GridSpec::default(), tol: DEFAULT_TOL, samples: 200, seed: 0, recursive: true }
    }
}

/// A reduction together with the constants considered for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduced {
    pub reduction: Reduction,
    /// Reduction constants of the top-level separable step, if any.
    pub constants: Option<ReductionConstantSet>,
}

fn separable_with(
    source: &DifferenceEquation,
    form: &SeparableForm,
    opts: &ReduceOptions,
) -> Result<(ScFactorization, ReductionConstantSet), FactorizeError> {
    let constants = if source.kind().name() == "linear" {
        solve_reduction_constant(source, &opts.grid, opts.tol)?
    } else {
        solve_reduction_constant_form(form, &opts.grid, opts.tol)?
    };
    let c = match opts.constant {
        Some(c) => c,
        None => constants.constants.first().map(|c| c.value).ok_or(FactorizeError::NoSymmetry)?,
    };
    Ok((factor_separable_form(source, form, c, opts.tol)?, constants))
}

/// One reduction step for `eq`, trying the given groups in order:
/// inversion (HD1) first, then separable forms.
fn reduce_once(eq: &DifferenceEquation, groups: &[GroupTag], opts: &ReduceOptions) -> Result<Reduced, FactorizeError> {
    if let Some(form) = SeparableForm::of(eq) {
        if opts.constant.is_some() || !matches!(eq.kind(), EquationKind::Linear { .. }) {
            if let Ok((fact, constants)) = separable_with(eq, &form, opts) {
                return Ok(Reduced { reduction: Reduction::Sc(fact), constants: Some(constants) });
            }
            if opts.constant.is_some() {
                // surface the validation residual for a rejected constant
                separable_with(eq, &form, opts)?;
            }
        }
    }
    if eq.order() >= 2 {
        for &g in groups {
            let candidate = eq.clone().with_group(g);
            if check_hd1_in(eq, g, opts.samples, opts.tol, opts.seed).verdict {
                if let Ok(fact) = factor_hd1(&candidate) {
                    return Ok(Reduced { reduction: Reduction::Sc(fact), constants: None });
                }
            }
        }
    }
    if matches!(eq.kind(), EquationKind::General { .. }) {
        for &g in groups {
            if let Some(form) = detect_separable(eq, g, opts.samples.min(64), opts.tol, opts.seed) {
                let candidate = eq.clone().with_group(g);
                if let Ok((fact, constants)) = separable_with(&candidate, &form, opts) {
                    return Ok(Reduced { reduction: Reduction::Sc(fact), constants: Some(constants) });
                }
            }
        }
    }
    Err(FactorizeError::NoSymmetry)
}

/// Finds and builds a factorization for `eq`.
///
/// Linear equations are fully cascaded. Separable equations use their
/// reduction constants; other equations are tested for HD1 and then for a
/// separable form. With `opts.recursive`, a factor of order two or more is
/// reduced again (relative to its own group or the other group type).
pub fn reduce(eq: &DifferenceEquation, opts: &ReduceOptions) -> Result<Reduced, FactorizeError> {
    if matches!(eq.kind(), EquationKind::Linear { .. }) && opts.constant.is_none() {
        return Ok(Reduced { reduction: Reduction::Triangular(factor_linear_full(eq)?), constants: None });
    }
    let mut top = reduce_once(eq, &[eq.group()], opts)?;
    if opts.recursive {
        if let Reduction::Sc(fact) = &top.reduction {
            if let Some(inner) = reduce_factor(&fact.factor, opts) {
                top.reduction = Reduction::Chain(FactorChain { outer: fact.clone(), inner: Box::new(inner) });
            }
        }
    }
    Ok(top)
}

fn reduce_factor(factor: &DifferenceEquation, opts: &ReduceOptions) -> Option<Reduction> {
    if factor.order() < 2 {
        return None;
    }
    let inner_opts = ReduceOptions { constant: None, ..*opts };
    let g = factor.group();
    let reduced = reduce_once(factor, &[g, g.counterpart()], &inner_opts).ok()?;
    match reduced.reduction {
        Reduction::Sc(fact) => match reduce_factor(&fact.factor, opts) {
            Some(deeper) => Some(Reduction::Chain(FactorChain { outer: fact, inner: Box::new(deeper) })),
            None => Some(Reduction::Sc(fact)),
        },
        other => Some(other),
    }
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

    fn reals(v: &[f64]) -> Vec<C> {
        v.iter().map(|&x| r(x)).collect()
    }

    fn exp_map() -> DifferenceEquation {
        DifferenceEquation::separable(GroupTag::MultiplicativePositive, vec![p("exp(-x)"), p("x*exp(-x)")], p("exp(a)"))
            .unwrap()
            .with_param("a", 4.6)
            .unwrap()
            .with_name("exp")
    }

    fn two_hd1() -> DifferenceEquation {
        DifferenceEquation::general(3, GroupTag::AdditiveReal, p("x0 + a*(x0 - x1)^2/(x1 - x2)"))
            .unwrap()
            .with_param("a", 1.0)
            .unwrap()
    }

    fn hs() -> DifferenceEquation {
        DifferenceEquation::general(3, GroupTag::AdditiveReal, p("x0 + a*(x0 - x1)/(x1 - x2)"))
            .unwrap()
            .with_param("a", 1.0)
            .unwrap()
    }

    #[test]
    fn hd1_factors() {
        let f = factor_hd1(&two_hd1()).unwrap();
        // oracle: t_{n+1} = a t_n^2 / t_{n-1}
        for (t0, t1) in [(2.0, 1.0), (0.5, 3.0)] {
            let v = f.factor().rhs(0, &[r(t0), r(t1)]).unwrap();
            assert!(rel_err(v, r(t0 * t0 / t1)) < 1e-12);
        }
        assert_eq!(f.cofactor_text(), "x(n+1) = t(n+1) + x(n)");
        assert_eq!(f.transform_init(&reals(&[0.0, 1.0, 3.0])).unwrap(), reals(&[1.0, 2.0]));

        let f = factor_hd1(&hs()).unwrap();
        let v = f.factor().rhs(0, &[r(2.0), r(4.0)]).unwrap();
        assert!(rel_err(v, r(0.5)) < 1e-12);

        let rk = DifferenceEquation::general(3, GroupTag::MultiplicativePositive, p("x0*(a*x1/x2 + b)"))
            .unwrap()
            .with_params([("a".to_string(), r(0.3)), ("b".to_string(), r(0.4))].into())
            .unwrap();
        let f = factor_hd1(&rk).unwrap();
        // t_{n+1} = a t_{n-1} + b for k = 2
        let v = f.factor().rhs(0, &[r(2.0), r(5.0)]).unwrap();
        assert!(rel_err(v, r(0.3 * 5.0 + 0.4)) < 1e-12);
        assert_eq!(f.cofactor_text(), "x(n+1) = t(n+1)*x(n)");

        let sq = DifferenceEquation::general(2, GroupTag::AdditiveReal, p("x0^2 + x1")).unwrap();
        assert!(matches!(factor_hd1(&sq), Err(FactorizeError::NotHd1 { .. })));
    }

    #[test]
    fn quadratic_hd1_closed_form() {
        let eq = two_hd1();
        let orbit = iterate_orbit(&eq, &reals(&[0.0, 1.0, 3.0]), 2).unwrap();
        assert_eq!(orbit.values, reals(&[7.0, 15.0]));
        let f = factor_hd1(&eq).unwrap();
        let red = Reduction::Sc(f);
        let sim = simulate_factorization(&red, &reals(&[0.0, 1.0, 3.0]), 2).unwrap();
        assert_eq!(sim.orbit.values, reals(&[7.0, 15.0]));
    }

    #[test]
    fn hd0_cumulative_sums() {
        let red = Reduction::Sc(factor_hd1(&hs()).unwrap());
        let sim = simulate_factorization(&red, &reals(&[0.0, 1.0, 3.0]), 12).unwrap();
        assert_eq!(sim.factor.detect_period(1e-9, 6).map(|p| p.period), Some(6));
        // σ = 1 + 2 + 2 + 1 + 0.5 + 0.5
        let x6 = sim.orbit.at(6).unwrap();
        assert!(rel_err(x6 - r(3.0), r(7.0)) < 1e-12);
    }

    #[test]
    fn exp_map_factorization() {
        let eq = exp_map();
        let f = factor_separable_multiplicative(&eq, r(-1.0)).unwrap();
        assert_eq!(f.factor_text(), "r(n+1) = exp(a)/r(n)");
        assert_eq!(f.cofactor_text(), "x(n+1) = r(n+1)*x(n)*exp(-x(n))");
        let red = Reduction::Sc(f);
        let sim = simulate_factorization(&red, &reals(&[2.3, 2.3]), 20).unwrap();
        for (x, rr) in sim.orbit.values.iter().zip(&sim.factor.values) {
            assert!(rel_err(*x, r(2.3)) < 1e-12);
            assert!(rel_err(*rr, r(2.3f64.exp())) < 1e-12);
        }
        let report = verify_semiconjugacy(&eq, red.levels()[0].symmetry(), red.levels()[0].factor(), 200, 1e-9, 5);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn ratio_cascade_numeric() {
        let hd0 = DifferenceEquation::separable(GroupTag::MultiplicativePositive, vec![p("x"), p("1/x")], p("a"))
            .unwrap()
            .with_param("a", 1.0)
            .unwrap();
        let s3 = 3f64.sqrt() / 2.0;
        let f = factor_separable_multiplicative(&hd0, C::new(0.5, s3)).unwrap();
        assert_eq!(f.factor().group(), GroupTag::MultiplicativeNonzero);
        let r0 = f.transform_init(&reals(&[1.0, 2.0])).unwrap();
        assert!(rel_err(r0[0], r(2.0)) < 1e-12);
        let sim = simulate_factorization(&Reduction::Sc(f), &reals(&[1.0, 2.0]), 30).unwrap();
        let direct = iterate_orbit(&hd0, &reals(&[1.0, 2.0]), 30).unwrap();
        assert!(rel_err(sim.orbit.values[0], r(2.0)) < 1e-12);
        for (a, b) in sim.orbit.values.iter().zip(&direct.values) {
            assert!(rel_err(*a, *b) < 1e-10);
            assert!(a.im.abs() < 1e-8);
        }
    }

    #[test]
    fn separable_additive_from_linear() {
        let lin = DifferenceEquation::linear(reals(&[-3.0, 2.0]), p("0")).unwrap();
        let f = factor_separable_additive(&lin, r(2.0)).unwrap();
        let h1 = f.symmetry().eval_h(1, r(1.5)).unwrap();
        assert!(rel_err(h1, r(-1.5)) < 1e-12);
        let red = Reduction::Sc(f);
        let report = verify_equivalence(&lin, &red, &reals(&[0.3, -0.7]), 50, 1e-6, EquivalenceMode::FreeRunning).unwrap();
        assert!(report.passed, "{report:?}");

        let degenerate = DifferenceEquation::separable(GroupTag::AdditiveComplex, vec![p("x"), p("0")], p("0")).unwrap();
        let f = factor_separable_additive(&degenerate, r(1.0)).unwrap();
        assert_eq!(f.symmetry().eval_h(1, r(4.0)).unwrap(), r(0.0));
        let sim = simulate_factorization(&Reduction::Sc(f), &reals(&[2.0, 5.0]), 5).unwrap();
        assert_eq!(sim.orbit.values, reals(&[5.0; 5]));
    }

    #[test]
    fn linear_cascades() {
        let lin = DifferenceEquation::linear(reals(&[-3.0, 2.0]), p("0")).unwrap();
        let tri = factor_linear_full(&lin).unwrap();
        assert!(rel_err(tri.eigenvalues()[0], r(2.0)) < 1e-12);
        assert!(rel_err(tri.eigenvalues()[1], r(1.0)) < 1e-12);
        assert_eq!(tri.stage_init(&reals(&[0.0, 1.0])), reals(&[1.0]));
        let sim = simulate_factorization(&Reduction::Triangular(tri), &reals(&[0.0, 1.0]), 3).unwrap();
        assert!(rel_err(sim.orbit.values[0], r(3.0)) < 1e-12);

        let cubic = DifferenceEquation::linear(reals(&[-6.0, 11.0, -6.0]), p("0")).unwrap();
        let tri = factor_linear_full(&cubic).unwrap();
        for (got, want) in tri.eigenvalues().iter().zip([3.0, 2.0, 1.0]) {
            assert!(rel_err(*got, r(want)) < 1e-10);
        }
        assert!(tri.reconstruction_error() < 1e-8);
        let red = Reduction::Triangular(tri);
        let report = verify_equivalence(&cubic, &red, &reals(&[0.1, -0.2, 0.4]), 50, 1e-8, EquivalenceMode::FreeRunning).unwrap();
        assert!(report.passed, "{report:?}");

        let square = DifferenceEquation::linear(reals(&[-2.0, 1.0]), p("0")).unwrap();
        let tri = factor_linear_full(&square).unwrap();
        assert_eq!(tri.eigenvalues(), &reals(&[1.0, 1.0])[..]);
        assert_eq!(tri.reconstruction_error(), 0.0);
    }

    #[test]
    fn order_one_linear_cascade() {
        let eq = DifferenceEquation::linear(reals(&[-0.5]), p("1")).unwrap();
        let red = Reduction::Triangular(factor_linear_full(&eq).unwrap());
        let sim = simulate_factorization(&red, &reals(&[2.0]), 3).unwrap();
        assert_eq!(sim.orbit.values, reals(&[2.0, 2.0, 2.0]));
    }

    #[test]
    fn wrong_factor_fails_semiconjugacy() {
        let eq = two_hd1();
        let f = factor_hd1(&eq).unwrap();
        let wrong = DifferenceEquation::general(2, GroupTag::AdditiveReal, p("a*x0^3/x1")).unwrap().with_param("a", 1.0).unwrap();
        let ok = verify_semiconjugacy(&eq, f.symmetry(), f.factor(), 200, 1e-9, 3);
        assert!(ok.passed, "{ok:?}");
        let bad = verify_semiconjugacy(&eq, f.symmetry(), &wrong, 200, 1e-9, 3);
        assert!(!bad.passed);
        assert!(bad.witness.is_some());
    }

    #[test]
    fn hs_reduces_to_full_cascade() {
        let reduced = reduce(&hs(), &ReduceOptions::default()).unwrap();
        assert!(reduced.reduction.is_full(), "{}", reduced.reduction.describe());
        assert_eq!(reduced.reduction.levels().len(), 2);
        let init = reals(&[0.0, 1.0, 3.0]);
        let report = verify_equivalence(&hs(), &reduced.reduction, &init, 60, 1e-8, EquivalenceMode::FreeRunning).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.max_imag <= 1e-8);

        // the detected forcing a must reach the logarithmic simulation
        let eq = hs().with_param("a", 0.6).unwrap();
        let reduced = reduce(&eq, &ReduceOptions::default()).unwrap();
        let sim = simulate_factorization(&reduced.reduction, &init, 1).unwrap();
        assert!(rel_err(sim.orbit.values[0], r(3.0 + 0.6 * 2.0)) < 1e-12);
    }

    #[test]
    fn two_hd1_reduces_to_full_cascade() {
        let reduced = reduce(&two_hd1(), &ReduceOptions::default()).unwrap();
        assert!(reduced.reduction.is_full());
        let init = reals(&[0.0, 1.0, 3.0]);
        let sim = simulate_factorization(&reduced.reduction, &init, 2).unwrap();
        assert_eq!(sim.orbit.values, reals(&[7.0, 15.0]));
    }

    #[test]
    fn nonreducible_reports_no_symmetry() {
        let eq = DifferenceEquation::general(2, GroupTag::AdditiveReal, p("x0^2 + x1")).unwrap();
        assert_eq!(reduce(&eq, &ReduceOptions::default()), Err(FactorizeError::NoSymmetry));
    }

    #[test]
    fn rejected_constant_reports_residual() {
        let opts = ReduceOptions { constant: Some(r(0.5)), ..ReduceOptions::default() };
        match reduce(&exp_map(), &opts) {
            Err(FactorizeError::Symmetry(SymmetryError::InvalidConstant { residual, .. })) => assert!(residual > 1e-3),
            other => panic!("{other:?}"),
        }
    }
}
