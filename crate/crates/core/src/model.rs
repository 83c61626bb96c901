//! Difference equations, equation documents, orbits and period detection.
//!
//! An equation of order `k+1` is written `x_{n+1} = f_n(x_n, …, x_{n-k})`.
//! Inside expressions the state is named `x0` (= `x_n`), `x1`
//! (= `x_{n-1}`), …, `xk`; `n` is the time index. Initial values are always
//! passed **oldest first**: `[x_{-k}, …, x_{-1}, x_0]`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::expr::{format_real, parse_expression, Expression, ExprError, Node};

pub type C = Complex64;

const IMAG_TOL: f64 = 1e-8;

/// Relative error `|a - b| / (1 + |b|)`.
pub fn rel_err(a: C, b: C) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

/// The abelian number group an equation is posed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupTag {
    AdditiveComplex,
    AdditiveReal,
    MultiplicativePositive,
    /// Nonzero complex numbers under multiplication.
    MultiplicativeNonzero,
}

impl GroupTag {
    /// Accepts `additive`, `additive-real`, `multiplicative` and
    /// `multiplicative-nonzero`.
    pub fn from_name(name: &str) -> Option<GroupTag> {
        match name {
            "additive" | "additive-complex" => Some(GroupTag::AdditiveComplex),
            "additive-real" => Some(GroupTag::AdditiveReal),
            "multiplicative" | "multiplicative-positive" => Some(GroupTag::MultiplicativePositive),
            "multiplicative-nonzero" => Some(GroupTag::MultiplicativeNonzero),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupTag::AdditiveComplex => "additive",
            GroupTag::AdditiveReal => "additive-real",
            GroupTag::MultiplicativePositive => "multiplicative",
            GroupTag::MultiplicativeNonzero => "multiplicative-nonzero",
        }
    }

    pub fn is_additive(self) -> bool {
        matches!(self, GroupTag::AdditiveComplex | GroupTag::AdditiveReal)
    }

    pub fn identity(self) -> C {
        if self.is_additive() {
            C::new(0.0, 0.0)
        } else {
            C::new(1.0, 0.0)
        }
    }

    pub fn op(self, a: C, b: C) -> C {
        if self.is_additive() {
            a + b
        } else {
            a * b
        }
    }

    pub fn inverse(self, a: C) -> C {
        if self.is_additive() {
            -a
        } else {
            C::new(1.0, 0.0) / a
        }
    }

    /// Membership test; real carriers tolerate an imaginary part of
    /// `1e-8·(1+|re|)`.
    pub fn contains(self, z: C) -> bool {
        if !z.is_finite() {
            return false;
        }
        let real = z.im.abs() <= IMAG_TOL * (1.0 + z.re.abs());
        match self {
            GroupTag::AdditiveComplex => true,
            GroupTag::AdditiveReal => real,
            GroupTag::MultiplicativePositive => real && z.re > 0.0,
            GroupTag::MultiplicativeNonzero => z != C::new(0.0, 0.0),
        }
    }

    /// The group of the other type over a matching carrier.
    pub fn counterpart(self) -> GroupTag {
        match self {
            GroupTag::AdditiveComplex => GroupTag::MultiplicativeNonzero,
            GroupTag::AdditiveReal => GroupTag::MultiplicativePositive,
            GroupTag::MultiplicativePositive => GroupTag::AdditiveReal,
            GroupTag::MultiplicativeNonzero => GroupTag::AdditiveComplex,
        }
    }

    /// Random carrier element: uniform in `[-5, 5]` for additive groups,
    /// log-uniform in `[e^-3, e^3]` for multiplicative ones (random sign for
    /// the nonzero group).
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> C {
        if self.is_additive() {
            C::new(rng.gen_range(-5.0..=5.0), 0.0)
        } else {
            let v = rng.gen_range(-3.0f64..=3.0).exp();
            if self == GroupTag::MultiplicativeNonzero && rng.gen_bool(0.5) {
                C::new(-v, 0.0)
            } else {
                C::new(v, 0.0)
            }
        }
    }
}

impl fmt::Display for GroupTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The defining form of an equation.
#[derive(Debug, Clone, PartialEq)]
pub enum EquationKind {
    /// `x_{n+1} = rhs(x0, …, xk, n)`.
    General { rhs: Expression },
    /// `x_{n+1} + b_0 x_n + … + b_k x_{n-k} = α_n`.
    Linear { b: Vec<C>, forcing: Expression },
    /// `x_{n+1} = α_n + φ_0(x_n) + … + φ_k(x_{n-k})`.
    SeparableAdditive { phi: Vec<Expression>, forcing: Expression },
    /// `x_{n+1} = β_n · ψ_0(x_n) ⋯ ψ_k(x_{n-k})`.
    SeparableMultiplicative { psi: Vec<Expression>, forcing: Expression },
}

impl EquationKind {
    pub fn name(&self) -> &'static str {
        match self {
            EquationKind::General { .. } => "general",
            EquationKind::Linear { .. } => "linear",
            EquationKind::SeparableAdditive { .. } => "separable-additive",
            EquationKind::SeparableMultiplicative { .. } => "separable-multiplicative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("malformed document: {0}")]
    Document(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("{what}: expected {expected}, found {found}")]
    WrongCount { what: String, expected: usize, found: usize },
    #[error("unknown kind `{0}` (expected general, linear or separable)")]
    UnknownKind(String),
    #[error("unknown group `{0}` (expected additive or multiplicative)")]
    UnknownGroup(String),
    #[error("component `{component}` uses variable `{variable}`; only x and parameters are allowed")]
    ComponentVariable { component: String, variable: String },
    #[error("`{key}` uses unknown variable `{variable}`")]
    UnknownVariable { key: String, variable: String },
    #[error("parameter name `{0}` is reserved")]
    ReservedName(String),
    #[error("cannot parse `{key}`: {source}")]
    Expr { key: String, source: ExprError },
    #[error("expected {expected} initial values, got {found}")]
    InitLength { expected: usize, found: usize },
    #[error("initial value {value} at position {position} is outside the {group} carrier")]
    InitCarrier { position: usize, value: String, group: GroupTag },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Why a single step of a recurrence failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error(transparent)]
    Domain(#[from] ExprError),
    #[error("non-finite value")]
    NonFinite,
    #[error("value {0} is outside the group carrier")]
    Carrier(String),
}

/// Index of a state variable name `x0`, `x1`, ….
pub fn state_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || (digits.len() > 1 && digits.starts_with('0')) {
        return None;
    }
    digits.parse().ok()
}

pub fn state_var(j: usize) -> String {
    format!("x{j}")
}

fn is_reserved(name: &str) -> bool {
    matches!(name, "n" | "i" | "x" | "t") || state_index(name).is_some()
}

/// A scalar recurrence of order `k+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceEquation {
    name: String,
    order: usize,
    group: GroupTag,
    kind: EquationKind,
    params: BTreeMap<String, C>,
}

impl DifferenceEquation {
    /// Validates and builds an equation.
    pub fn new(
        order: usize,
        group: GroupTag,
        kind: EquationKind,
        params: BTreeMap<String, C>,
    ) -> Result<Self, ModelError> {
        let eq = DifferenceEquation { name: String::new(), order, group, kind, params };
        eq.validate(false)?;
        Ok(eq)
    }

    pub fn general(order: usize, group: GroupTag, rhs: Expression) -> Result<Self, ModelError> {
        Self::new(order, group, EquationKind::General { rhs }, BTreeMap::new())
    }

    /// Linear equation of order `b.len()`; the order-1 equation
    /// `x_{n+1} = α_n` has `b = [0]`.
    pub fn linear(b: Vec<C>, forcing: Expression) -> Result<Self, ModelError> {
        let order = b.len();
        Self::new(order, GroupTag::AdditiveComplex, EquationKind::Linear { b, forcing }, BTreeMap::new())
    }

    /// Separable equation; additive or multiplicative by `group`.
    pub fn separable(group: GroupTag, components: Vec<Expression>, forcing: Expression) -> Result<Self, ModelError> {
        let order = components.len();
        let kind = if group.is_additive() {
            EquationKind::SeparableAdditive { phi: components, forcing }
        } else {
            EquationKind::SeparableMultiplicative { psi: components, forcing }
        };
        Self::new(order, group, kind, BTreeMap::new())
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_params(mut self, params: BTreeMap<String, C>) -> Result<Self, ModelError> {
        self.params = params;
        self.validate(false)?;
        Ok(self)
    }

    pub fn with_param(self, name: &str, value: impl Into<C>) -> Result<Self, ModelError> {
        let mut params = self.params.clone();
        params.insert(name.to_string(), value.into());
        self.with_params(params)
    }

    /// Same equation posed over another group (used when a factor is
    /// reduced relative to a different group than its source).
    pub fn with_group(mut self, group: GroupTag) -> Self {
        self.group = group;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `k` for an equation of order `k+1`.
    pub fn k(&self) -> usize {
        self.order - 1
    }

    pub fn group(&self) -> GroupTag {
        self.group
    }

    pub fn kind(&self) -> &EquationKind {
        &self.kind
    }

    pub fn params(&self) -> &BTreeMap<String, C> {
        &self.params
    }

    /// Structural checks. Identifiers other than the state, `n` and `i`
    /// count as parameters; `strict` additionally requires each to be bound.
    fn validate(&self, strict: bool) -> Result<(), ModelError> {
        if self.order == 0 {
            return Err(ModelError::InvalidValue { key: "order".into(), reason: "must be at least 1".into() });
        }
        for name in self.params.keys() {
            if is_reserved(name) {
                return Err(ModelError::ReservedName(name.clone()));
            }
        }
        let known = |v: &str| v == "i" || self.params.contains_key(v) || (!strict && !is_reserved(v));
        let check_forcing = |forcing: &Expression| {
            for v in forcing.free_vars() {
                if v != "n" && !known(v) {
                    return Err(ModelError::UnknownVariable { key: "forcing".into(), variable: v.clone() });
                }
            }
            Ok(())
        };
        let check_components = |prefix: &str, comps: &[Expression]| {
            if comps.len() != self.order {
                return Err(ModelError::WrongCount {
                    what: format!("{prefix} components"),
                    expected: self.order,
                    found: comps.len(),
                });
            }
            for (j, comp) in comps.iter().enumerate() {
                for v in comp.free_vars() {
                    if v != "x" && !known(v) {
                        return Err(ModelError::ComponentVariable { component: format!("{prefix}{j}"), variable: v.clone() });
                    }
                }
            }
            Ok(())
        };
        match &self.kind {
            EquationKind::General { rhs } => {
                for v in rhs.free_vars() {
                    let ok = v == "n" || known(v) || state_index(v).is_some_and(|j| j < self.order);
                    if !ok {
                        return Err(ModelError::UnknownVariable { key: "rhs".into(), variable: v.clone() });
                    }
                }
                Ok(())
            }
            EquationKind::Linear { b, forcing } => {
                if b.len() != self.order {
                    return Err(ModelError::WrongCount { what: "linear coefficients".into(), expected: self.order, found: b.len() });
                }
                if !self.group.is_additive() {
                    return Err(ModelError::InvalidValue { key: "group".into(), reason: "linear equations are additive".into() });
                }
                check_forcing(forcing)
            }
            EquationKind::SeparableAdditive { phi, forcing } => {
                if !self.group.is_additive() {
                    return Err(ModelError::InvalidValue { key: "group".into(), reason: "phi components need an additive group".into() });
                }
                check_components("phi", phi)?;
                check_forcing(forcing)
            }
            EquationKind::SeparableMultiplicative { psi, forcing } => {
                if self.group.is_additive() {
                    return Err(ModelError::InvalidValue { key: "group".into(), reason: "psi components need a multiplicative group".into() });
                }
                check_components("psi", psi)?;
                check_forcing(forcing)
            }
        }
    }

    /// Forcing term (`α_n`, `β_n`) if the kind has one.
    pub fn forcing(&self) -> Option<&Expression> {
        match &self.kind {
            EquationKind::General { .. } => None,
            EquationKind::Linear { forcing, .. }
            | EquationKind::SeparableAdditive { forcing, .. }
            | EquationKind::SeparableMultiplicative { forcing, .. } => Some(forcing),
        }
    }

    /// True when the right-hand side does not depend on `n`.
    pub fn is_autonomous(&self) -> bool {
        match &self.kind {
            EquationKind::General { rhs } => !rhs.mentions("n"),
            _ => !self.forcing().is_some_and(|f| f.mentions("n")),
        }
    }

    /// The right-hand side written out as one expression in `x0..xk` and `n`.
    pub fn rhs_expression(&self) -> Expression {
        let at = |comp: &Expression, j: usize| comp.substitute_var("x", &Node::var(state_var(j))).into_root();
        match &self.kind {
            EquationKind::General { rhs } => rhs.clone(),
            EquationKind::Linear { b, forcing } => {
                let mut node = forcing.root().clone();
                for (j, &bj) in b.iter().enumerate() {
                    let d = -bj;
                    if d == C::new(0.0, 0.0) {
                        continue;
                    }
                    let x = Node::var(state_var(j));
                    node = if d == C::new(1.0, 0.0) {
                        Node::add(node, x)
                    } else if d == C::new(-1.0, 0.0) {
                        Node::sub(node, x)
                    } else if d.im == 0.0 && d.re < 0.0 {
                        Node::sub(node, Node::mul(Node::real(-d.re), x))
                    } else {
                        Node::add(node, Node::mul(Node::Const(d), x))
                    };
                }
                Expression::new(node.simplified())
            }
            EquationKind::SeparableAdditive { phi, forcing } => {
                let node = phi.iter().enumerate().fold(forcing.root().clone(), |acc, (j, p)| Node::add(acc, at(p, j)));
                Expression::new(node.simplified())
            }
            EquationKind::SeparableMultiplicative { psi, forcing } => {
                let node = psi.iter().enumerate().fold(forcing.root().clone(), |acc, (j, p)| Node::mul(acc, at(p, j)));
                Expression::new(node.simplified())
            }
        }
    }

    /// The same equation as a general-kind equation.
    pub fn to_general(&self) -> DifferenceEquation {
        DifferenceEquation {
            name: self.name.clone(),
            order: self.order,
            group: self.group,
            kind: EquationKind::General { rhs: self.rhs_expression() },
            params: self.params.clone(),
        }
    }

    fn lookup<'a>(&'a self, n: usize, state: &'a [C]) -> impl Fn(&str) -> Option<C> + 'a {
        move |name: &str| {
            if name == "n" {
                return Some(C::new(n as f64, 0.0));
            }
            if let Some(j) = state_index(name) {
                return state.get(j).copied();
            }
            self.params.get(name).copied()
        }
    }

    /// Evaluates an expression over this equation's parameters with extra bindings.
    pub fn eval_with(&self, expr: &Expression, extra: &dyn Fn(&str) -> Option<C>) -> Result<C, ExprError> {
        expr.evaluate_with(&|name: &str| extra(name).or_else(|| self.params.get(name).copied()))
    }

    /// Evaluates a unary component at `x`.
    pub fn eval_component(&self, comp: &Expression, x: C) -> Result<C, ExprError> {
        self.eval_with(comp, &|name| (name == "x").then_some(x))
    }

    /// Evaluates the forcing term at time `n`.
    pub fn eval_forcing(&self, n: usize) -> Result<C, ExprError> {
        match self.forcing() {
            Some(f) => self.eval_with(f, &|name| (name == "n").then_some(C::new(n as f64, 0.0))),
            None => Ok(self.group.identity()),
        }
    }

    /// `f_n(state)` with `state = [x_n, x_{n-1}, …, x_{n-k}]` (newest first),
    /// evaluated through the kind's defining form.
    pub fn rhs(&self, n: usize, state: &[C]) -> Result<C, ExprError> {
        match &self.kind {
            EquationKind::General { rhs } => rhs.evaluate_with(&self.lookup(n, state)),
            EquationKind::Linear { b, .. } => {
                let alpha = self.eval_forcing(n)?;
                Ok(b.iter().zip(state).fold(alpha, |acc, (bj, x)| acc - bj * x))
            }
            EquationKind::SeparableAdditive { phi, .. } => {
                let mut acc = self.eval_forcing(n)?;
                for (p, &x) in phi.iter().zip(state) {
                    acc += self.eval_component(p, x)?;
                }
                Ok(acc)
            }
            EquationKind::SeparableMultiplicative { psi, .. } => {
                let mut acc = self.eval_forcing(n)?;
                for (p, &x) in psi.iter().zip(state) {
                    acc *= self.eval_component(p, x)?;
                }
                Ok(acc)
            }
        }
    }

    /// One step: `x_{n+1}` from the newest-first state, checked for
    /// finiteness and carrier membership.
    pub fn step(&self, n: usize, state: &[C]) -> Result<C, StepError> {
        let v = self.rhs(n, state)?;
        if !v.is_finite() {
            return Err(StepError::NonFinite);
        }
        if !self.group.contains(v) {
            return Err(StepError::Carrier(crate::poly::format_complex(v)));
        }
        Ok(v)
    }

    /// Checks an oldest-first initial vector against order and carrier.
    pub fn check_init(&self, init: &[C]) -> Result<(), ModelError> {
        if init.len() != self.order {
            return Err(ModelError::InitLength { expected: self.order, found: init.len() });
        }
        for (position, &v) in init.iter().enumerate() {
            if !self.group.contains(v) {
                return Err(ModelError::InitCarrier {
                    position,
                    value: crate::poly::format_complex(v),
                    group: self.group,
                });
            }
        }
        Ok(())
    }

    /// Renders the equation as `x(n+1) = …`.
    pub fn describe(&self) -> String {
        format!("x(n+1) = {}", self.rhs_expression().display_with(&display_state_name))
    }
}

/// `x0 -> x(n)`, `x3 -> x(n-3)`.
pub fn display_state_name(name: &str) -> Option<String> {
    state_index(name).map(|j| if j == 0 { "x(n)".to_string() } else { format!("x(n-{j})") })
}

/// Iterates `eq` from an oldest-first initial vector.
pub fn iterate_orbit(eq: &DifferenceEquation, init: &[C], steps: usize) -> Result<Orbit, ModelError> {
    eq.check_init(init)?;
    let mut orbit = Orbit::new(eq, init.to_vec());
    let mut state: Vec<C> = init.iter().rev().copied().collect();
    for n in 0..steps {
        match eq.step(n, &state) {
            Ok(v) => {
                orbit.values.push(v);
                state.rotate_right(1);
                state[0] = v;
            }
            Err(e) => {
                orbit.truncation = Some(Truncation { index: n + 1, reason: e.to_string() });
                break;
            }
        }
    }
    Ok(orbit)
}

/// Where and why an orbit stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    /// Index `m` of the value `x_m` that could not be computed.
    pub index: usize,
    pub reason: String,
}

/// A simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    /// `x_{-k}, …, x_0`.
    pub init: Vec<C>,
    /// `x_1, x_2, …`.
    pub values: Vec<C>,
    pub truncation: Option<Truncation>,
    pub name: String,
    pub params: BTreeMap<String, C>,
}

impl Orbit {
    pub fn new(eq: &DifferenceEquation, init: Vec<C>) -> Self {
        Orbit { init, values: Vec::new(), truncation: None, name: eq.name().to_string(), params: eq.params().clone() }
    }

    pub fn from_values(init: Vec<C>, values: Vec<C>) -> Self {
        Orbit { init, values, truncation: None, name: String::new(), params: BTreeMap::new() }
    }

    /// `k` such that the orbit starts at `x_{-k}`.
    pub fn k(&self) -> usize {
        self.init.len().saturating_sub(1)
    }

    /// Initial values followed by computed values.
    pub fn full(&self) -> Vec<C> {
        let mut all = self.init.clone();
        all.extend_from_slice(&self.values);
        all
    }

    /// `x_n` for `n >= -k`.
    pub fn at(&self, n: i64) -> Option<C> {
        let idx = n + self.k() as i64;
        if idx < 0 {
            return None;
        }
        let idx = idx as usize;
        if idx < self.init.len() {
            Some(self.init[idx])
        } else {
            self.values.get(idx - self.init.len()).copied()
        }
    }

    /// CSV with header `n,re,im`, starting at `n = -k`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,re,im\n");
        let k = self.k() as i64;
        for (i, v) in self.full().iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", i as i64 - k, format_real(v.re), format_real(v.im)));
        }
        out
    }

    pub fn detect_period(&self, tol: f64, max_period: usize) -> Option<Period> {
        detect_period_in(&self.full(), tol, max_period)
    }
}

/// A detected period and the index (into init followed by values, 0 being
/// the oldest initial value) from which it holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Period {
    pub period: usize,
    pub onset: usize,
}

pub fn detect_period(orbit: &Orbit, tol: f64, max_period: usize) -> Option<Period> {
    orbit.detect_period(tol, max_period)
}

/// Smallest `p <= max_period` such that the last `min(2·max_period, len)`
/// values satisfy `|s_{i+p} - s_i| <= tol·(1+|s_i|)`, with `2p` no longer
/// than that window.
pub fn detect_period_in(seq: &[C], tol: f64, max_period: usize) -> Option<Period> {
    let len = seq.len();
    let window = (2 * max_period).min(len);
    let start = len - window;
    let matches = |i: usize, p: usize| (seq[i + p] - seq[i]).norm() <= tol * (1.0 + seq[i].norm());
    for p in 1..=max_period {
        if 2 * p > window {
            break;
        }
        if (start..len - p).all(|i| matches(i, p)) {
            let mut onset = start;
            while onset > 0 && matches(onset - 1, p) {
                onset -= 1;
            }
            return Some(Period { period: p, onset });
        }
    }
    None
}

// ---------------------------------------------------------------- documents

fn get_str<'a>(table: &'a toml::Table, key: &str) -> Result<&'a str, ModelError> {
    match table.get(key) {
        None => Err(ModelError::MissingKey(key.to_string())),
        Some(toml::Value::String(s)) => Ok(s),
        Some(_) => Err(ModelError::InvalidValue { key: key.to_string(), reason: "expected a string".into() }),
    }
}

fn parse_key(table: &toml::Table, key: &str) -> Result<Expression, ModelError> {
    let text = get_str(table, key)?;
    parse_expression(text).map_err(|source| ModelError::Expr { key: key.to_string(), source })
}

/// A number or a `[re, im]` pair.
fn complex_value(key: &str, v: &toml::Value) -> Result<C, ModelError> {
    let real = |v: &toml::Value| match v {
        toml::Value::Integer(i) => Some(*i as f64),
        toml::Value::Float(f) => Some(*f),
        _ => None,
    };
    let bad = || ModelError::InvalidValue { key: key.to_string(), reason: "expected a number or [re, im]".into() };
    if let Some(r) = real(v) {
        return Ok(C::new(r, 0.0));
    }
    match v {
        toml::Value::Array(pair) if pair.len() == 2 => {
            Ok(C::new(real(&pair[0]).ok_or_else(bad)?, real(&pair[1]).ok_or_else(bad)?))
        }
        _ => Err(bad()),
    }
}

/// Parses an equation document.
///
/// ```toml
/// [equation]
/// name = "exp"
/// order = 2
/// group = "multiplicative"
/// kind = "separable"
/// psi0 = "exp(-x)"
/// psi1 = "x*exp(-x)"
/// forcing = "exp(a)"
///
/// [params]
/// a = 4.6
/// ```
///
/// Linear documents give `b = [b0, …, bk]`; additive separable documents
/// give `phi0..phik`; general documents give `rhs`. `forcing` defaults to
/// the group identity. Complex numbers are written `[re, im]`.
pub fn load_equation(document: &str) -> Result<DifferenceEquation, ModelError> {
    let doc: toml::Table = document.parse().map_err(|e: toml::de::Error| ModelError::Document(e.message().to_string()))?;
    let eq = match doc.get("equation") {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(ModelError::Document("`equation` must be a section".into())),
        None => return Err(ModelError::MissingKey("equation".into())),
    };
    let name = match eq.get("name") {
        Some(_) => get_str(eq, "name")?.to_string(),
        None => String::new(),
    };
    let order = match eq.get("order") {
        Some(toml::Value::Integer(i)) if *i >= 1 => *i as usize,
        Some(_) => return Err(ModelError::InvalidValue { key: "order".into(), reason: "expected a positive integer".into() }),
        None => return Err(ModelError::MissingKey("order".into())),
    };
    let group_name = get_str(eq, "group")?;
    let group = GroupTag::from_name(group_name).ok_or_else(|| ModelError::UnknownGroup(group_name.to_string()))?;
    let forcing = || -> Result<Expression, ModelError> {
        if eq.contains_key("forcing") {
            parse_key(eq, "forcing")
        } else {
            Ok(Expression::constant(group.identity()))
        }
    };
    let components = |prefix: &str| -> Result<Vec<Expression>, ModelError> {
        (0..order).map(|j| parse_key(eq, &format!("{prefix}{j}"))).collect()
    };
    let kind_name = get_str(eq, "kind")?;
    let kind = match kind_name {
        "general" => EquationKind::General { rhs: parse_key(eq, "rhs")? },
        "linear" => {
            let b = match eq.get("b") {
                Some(toml::Value::Array(items)) => items.iter().map(|v| complex_value("b", v)).collect::<Result<Vec<_>, _>>()?,
                Some(_) => return Err(ModelError::InvalidValue { key: "b".into(), reason: "expected a list".into() }),
                None => return Err(ModelError::MissingKey("b".into())),
            };
            EquationKind::Linear { b, forcing: forcing()? }
        }
        "separable" => {
            if group.is_additive() {
                EquationKind::SeparableAdditive { phi: components("phi")?, forcing: forcing()? }
            } else {
                EquationKind::SeparableMultiplicative { psi: components("psi")?, forcing: forcing()? }
            }
        }
        other => return Err(ModelError::UnknownKind(other.to_string())),
    };
    let mut params = BTreeMap::new();
    match doc.get("params") {
        Some(toml::Value::Table(t)) => {
            for (k, v) in t {
                params.insert(k.clone(), complex_value(k, v)?);
            }
        }
        Some(_) => return Err(ModelError::Document("`params` must be a section".into())),
        None => {}
    }
    let eq = DifferenceEquation::new(order, group, kind, params)?.with_name(name);
    eq.validate(true)?;
    Ok(eq)
}

pub fn load_equation_file(path: impl AsRef<Path>) -> Result<DifferenceEquation, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Io { path: path.display().to_string(), reason: e.to_string() })?;
    let eq = load_equation(&text)?;
    if eq.name().is_empty() {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(eq.with_name(stem));
    }
    Ok(eq)
}
