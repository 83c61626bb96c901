//! Order reduction of scalar difference equations through semiconjugate
//! factorization.
//!
//! An equation `x_{n+1} = f_n(x_n, …, x_{n-k})` with a form symmetry splits
//! into a lower-order *factor* equation and a *cofactor* equation that
//! reconstructs `x`. The crate detects and builds such factorizations for
//! HD1 equations, additive and multiplicative separable equations, and
//! linear equations (fully cascaded into first-order stages), verifies them
//! numerically, and provides dynamics tools around them.

pub mod dynamics;
pub mod expr;
pub mod factorize;
pub mod model;
pub mod poly;
pub mod symmetry;

pub use expr::{evaluate, format_expression, parse_expression, Bindings, ExprError, Expression};
pub use model::{iterate_orbit, load_equation, load_equation_file, DifferenceEquation, EquationKind, GroupTag, Orbit};
pub use num_complex::Complex64;
