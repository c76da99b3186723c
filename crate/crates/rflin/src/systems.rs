//! Small demo plants built programmatically, used by the examples and
//! tests. Larger models live as TOML files under `models/`.

use crate::expr::{mul, Expr, Symbol};
use crate::model::{ParameterSpec, UncertainSystem};

/// Pendulum with uncertain gravity-over-length coefficient:
/// `x1dot = x2`, `x2dot = -a sin(x1) + u`, `y = x1`, trim at the origin,
/// `a in [a0 - half_width, a0 + half_width]`.
pub fn pendulum(a0: f64, half_width: f64) -> UncertainSystem {
    let x1 = Symbol::state("x1");
    let x2 = Symbol::state("x2");
    let u = Symbol::input("u");
    let a = ParameterSpec::new("a", a0, half_width).unwrap();
    UncertainSystem::new(
        vec![x1.clone(), x2.clone()],
        vec![u],
        vec![a.clone()],
        vec![
            Expr::sym(x2),
            mul(Expr::sym(a.symbol()), Expr::sym(x1.clone()).sin()).neg(),
        ],
        vec![vec![Expr::zero(), Expr::one()]],
        vec![Expr::sym(x1)],
        vec![0.0, 0.0],
        vec![0.0],
    )
    .unwrap()
}

/// Parameter-free double integrator: `x1dot = x2`, `x2dot = u`, `y = x1`.
pub fn double_integrator() -> UncertainSystem {
    let x1 = Symbol::state("x1");
    let x2 = Symbol::state("x2");
    let u = Symbol::input("u");
    UncertainSystem::new(
        vec![x1.clone(), x2.clone()],
        vec![u],
        vec![],
        vec![Expr::sym(x2), Expr::zero()],
        vec![vec![Expr::zero(), Expr::one()]],
        vec![Expr::sym(x1)],
        vec![0.0, 0.0],
        vec![0.0],
    )
    .unwrap()
}
