//! Symbolic expression trees over state, input, parameter, and reference
//! symbols: parsing, evaluation, differentiation, and simplification.
//!
//! Every Lie derivative, gradient, and uncertainty expression in the rest of
//! the crate is built out of [`Expr`]. Expressions are immutable and share
//! subtrees through `Arc`, so they can be evaluated and differentiated from
//! many threads at once.

mod compile;
mod parse;

pub use compile::CompiledExpr;
pub use parse::{parse, SymbolTable};

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Namespace of a symbol. A parameter named `a` never shadows a state
/// named `a`; they are distinct symbols.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum SymClass {
    State,
    Input,
    Parameter,
    Reference,
}

impl fmt::Display for SymClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SymClass::State => "state",
            SymClass::Input => "input",
            SymClass::Parameter => "parameter",
            SymClass::Reference => "reference",
        };
        f.write_str(s)
    }
}

/// A named symbol with its class.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Symbol {
    pub class: SymClass,
    pub name: String,
}

impl Symbol {
    pub fn new(class: SymClass, name: impl Into<String>) -> Self {
        Symbol { class, name: name.into() }
    }
    pub fn state(name: impl Into<String>) -> Self {
        Symbol::new(SymClass::State, name)
    }
    pub fn input(name: impl Into<String>) -> Self {
        Symbol::new(SymClass::Input, name)
    }
    pub fn parameter(name: impl Into<String>) -> Self {
        Symbol::new(SymClass::Parameter, name)
    }
    pub fn reference(name: impl Into<String>) -> Self {
        Symbol::new(SymClass::Reference, name)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// An immutable expression node. Power exponents are constants; general
/// exponentiation is rewritten as `exp(k*ln(b))` by the parser when needed.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Sym(Symbol),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
    /// Base raised to a constant exponent.
    Pow(Arc<Expr>, f64),
}

/// A map from symbols to values used during evaluation.
pub type Bindings = HashMap<Symbol, f64>;

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }
    pub fn sym(s: Symbol) -> Expr {
        Expr::Sym(s)
    }
    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }
    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn neg(self) -> Expr {
        Expr::Unary(UnaryOp::Neg, Arc::new(self))
    }
    pub fn sin(self) -> Expr {
        Expr::Unary(UnaryOp::Sin, Arc::new(self))
    }
    pub fn cos(self) -> Expr {
        Expr::Unary(UnaryOp::Cos, Arc::new(self))
    }
    pub fn tan(self) -> Expr {
        Expr::Unary(UnaryOp::Tan, Arc::new(self))
    }
    pub fn exp(self) -> Expr {
        Expr::Unary(UnaryOp::Exp, Arc::new(self))
    }
    pub fn ln(self) -> Expr {
        Expr::Unary(UnaryOp::Ln, Arc::new(self))
    }
    pub fn sqrt(self) -> Expr {
        Expr::Unary(UnaryOp::Sqrt, Arc::new(self))
    }
    pub fn pow(self, k: f64) -> Expr {
        Expr::Pow(Arc::new(self), k)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }
    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    /// Total number of nodes in the tree (shared subtrees counted per use).
    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Sym(_) => 1,
            Expr::Unary(_, a) | Expr::Pow(a, _) => 1 + a.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// All symbols occurring in the expression.
    pub fn symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<Symbol>) {
        match self {
            Expr::Const(_) => {}
            Expr::Sym(s) => {
                out.insert(s.clone());
            }
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.collect_symbols(out),
            Expr::Binary(_, a, b) => {
                a.collect_symbols(out);
                b.collect_symbols(out);
            }
        }
    }

    /// True if the expression contains any of the given symbols.
    pub fn depends_on_any(&self, syms: &BTreeSet<Symbol>) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Sym(s) => syms.contains(s),
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.depends_on_any(syms),
            Expr::Binary(_, a, b) => a.depends_on_any(syms) || b.depends_on_any(syms),
        }
    }

    /// Evaluate with every symbol bound. Fails loudly on an unbound symbol
    /// or a domain error, naming the offending subexpression.
    pub fn eval(&self, b: &Bindings) -> Result<f64> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Sym(s) => b.get(s).copied().ok_or_else(|| {
                Error::Eval(format!("unbound {} symbol `{}`", s.class, s.name))
            }),
            Expr::Unary(op, a) => {
                let x = a.eval(b)?;
                let y = match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Sin => x.sin(),
                    UnaryOp::Cos => x.cos(),
                    UnaryOp::Tan => x.tan(),
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Ln => {
                        if x <= 0.0 {
                            return Err(Error::Eval(format!(
                                "ln of non-positive value {x} in `ln({a})`"
                            )));
                        }
                        x.ln()
                    }
                    UnaryOp::Sqrt => {
                        if x < 0.0 {
                            return Err(Error::Eval(format!(
                                "sqrt of negative value {x} in `sqrt({a})`"
                            )));
                        }
                        x.sqrt()
                    }
                };
                Ok(y)
            }
            Expr::Binary(op, a, bb) => {
                let x = a.eval(b)?;
                let y = bb.eval(b)?;
                let z = match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => {
                        if y == 0.0 {
                            return Err(Error::Eval(format!(
                                "division by zero in `({a})/({bb})`"
                            )));
                        }
                        x / y
                    }
                };
                Ok(z)
            }
            Expr::Pow(a, k) => Ok(a.eval(b)?.powf(*k)),
        }
    }

    /// Exact symbolic partial derivative with respect to `s`.
    pub fn diff(&self, s: &Symbol) -> Expr {
        let d = match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Sym(sy) => {
                if sy == s {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Unary(op, a) => {
                let da = a.diff(s);
                if da.is_zero() {
                    return Expr::zero();
                }
                let inner = Expr::clone(a);
                match op {
                    UnaryOp::Neg => da.neg(),
                    UnaryOp::Sin => mul(inner.cos(), da),
                    UnaryOp::Cos => mul(inner.sin(), da).neg(),
                    // d tan = da / cos^2
                    UnaryOp::Tan => div(da, inner.cos().pow(2.0)),
                    UnaryOp::Exp => mul(Expr::clone(a).exp(), da),
                    UnaryOp::Ln => div(da, inner),
                    UnaryOp::Sqrt => div(da, mul(Expr::constant(2.0), inner.sqrt())),
                }
            }
            Expr::Binary(op, a, b) => {
                let da = a.diff(s);
                let db = b.diff(s);
                match op {
                    BinaryOp::Add => add(da, db),
                    BinaryOp::Sub => sub(da, db),
                    BinaryOp::Mul => add(
                        mul(da, Expr::clone(b)),
                        mul(Expr::clone(a), db),
                    ),
                    BinaryOp::Div => {
                        // (da*b - a*db) / b^2
                        let num = sub(
                            mul(da, Expr::clone(b)),
                            mul(Expr::clone(a), db),
                        );
                        div(num, Expr::clone(b).pow(2.0))
                    }
                }
            }
            Expr::Pow(a, k) => {
                let da = a.diff(s);
                if da.is_zero() {
                    return Expr::zero();
                }
                mul(
                    mul(Expr::constant(*k), Expr::clone(a).pow(k - 1.0)),
                    da,
                )
            }
        };
        d.simplify()
    }

    /// Componentwise derivative over an ordered sequence of symbols.
    pub fn gradient(&self, symbols: &[Symbol]) -> Vec<Expr> {
        symbols.iter().map(|s| self.diff(s)).collect()
    }

    /// Value-preserving rewrite: constant folding and elimination of
    /// additive/multiplicative identities. Best-effort, not canonical.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Sym(_) => self.clone(),
            Expr::Unary(op, a) => {
                let a = a.simplify();
                match (op, &a) {
                    (UnaryOp::Neg, Expr::Const(c)) => Expr::Const(-c),
                    (UnaryOp::Neg, Expr::Unary(UnaryOp::Neg, inner)) => Expr::clone(inner),
                    (op, Expr::Const(c)) => {
                        let v = match op {
                            UnaryOp::Neg => unreachable!(),
                            UnaryOp::Sin => c.sin(),
                            UnaryOp::Cos => c.cos(),
                            UnaryOp::Tan => c.tan(),
                            UnaryOp::Exp => c.exp(),
                            UnaryOp::Ln if *c > 0.0 => c.ln(),
                            UnaryOp::Sqrt if *c >= 0.0 => c.sqrt(),
                            // Out-of-domain constants stay symbolic so eval
                            // reports them with the subexpression.
                            _ => return Expr::Unary(*op, Arc::new(a)),
                        };
                        Expr::Const(v)
                    }
                    _ => Expr::Unary(*op, Arc::new(a)),
                }
            }
            Expr::Binary(op, a, b) => {
                let a = a.simplify();
                let b = b.simplify();
                match (op, &a, &b) {
                    (_, Expr::Const(x), Expr::Const(y)) => {
                        let v = match op {
                            BinaryOp::Add => x + y,
                            BinaryOp::Sub => x - y,
                            BinaryOp::Mul => x * y,
                            BinaryOp::Div => {
                                if *y == 0.0 {
                                    return Expr::Binary(*op, Arc::new(a), Arc::new(b));
                                }
                                x / y
                            }
                        };
                        Expr::Const(v)
                    }
                    (BinaryOp::Add, x, _) if x.is_zero() => b,
                    (BinaryOp::Add, _, y) if y.is_zero() => a,
                    (BinaryOp::Sub, _, y) if y.is_zero() => a,
                    (BinaryOp::Sub, x, _) if x.is_zero() => b.neg(),
                    (BinaryOp::Sub, x, y) if x == y => Expr::zero(),
                    (BinaryOp::Mul, x, _) | (BinaryOp::Mul, _, x) if x.is_zero() => Expr::zero(),
                    (BinaryOp::Mul, x, _) if x.is_one() => b,
                    (BinaryOp::Mul, _, y) if y.is_one() => a,
                    (BinaryOp::Div, x, _) if x.is_zero() => Expr::zero(),
                    (BinaryOp::Div, _, y) if y.is_one() => a,
                    _ => Expr::Binary(*op, Arc::new(a), Arc::new(b)),
                }
            }
            Expr::Pow(a, k) => {
                let a = a.simplify();
                if *k == 0.0 {
                    Expr::one()
                } else if *k == 1.0 {
                    a
                } else if let Expr::Const(c) = a {
                    Expr::Const(c.powf(*k))
                } else {
                    Expr::Pow(Arc::new(a), *k)
                }
            }
        }
    }

    /// Replace symbols by expressions. Symbols absent from the map are kept.
    pub fn substitute(&self, map: &HashMap<Symbol, Expr>) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Sym(s) => map.get(s).cloned().unwrap_or_else(|| self.clone()),
            Expr::Unary(op, a) => Expr::Unary(*op, Arc::new(a.substitute(map))),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Arc::new(a.substitute(map)), Arc::new(b.substitute(map)))
            }
            Expr::Pow(a, k) => Expr::Pow(Arc::new(a.substitute(map)), *k),
        }
    }

    /// Compile against a fixed symbol ordering for fast repeated evaluation.
    pub fn compile(&self, order: &[Symbol]) -> Result<CompiledExpr> {
        CompiledExpr::new(self, order)
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    Expr::Binary(BinaryOp::Add, Arc::new(a), Arc::new(b))
}
pub fn sub(a: Expr, b: Expr) -> Expr {
    Expr::Binary(BinaryOp::Sub, Arc::new(a), Arc::new(b))
}
pub fn mul(a: Expr, b: Expr) -> Expr {
    Expr::Binary(BinaryOp::Mul, Arc::new(a), Arc::new(b))
}
pub fn div(a: Expr, b: Expr) -> Expr {
    Expr::Binary(BinaryOp::Div, Arc::new(a), Arc::new(b))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Fully parenthesized except at the leaves; parse(print(e)) must
        // evaluate identically to e.
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Sym(s) => write!(f, "{}", s.name),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-({a}))"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                };
                write!(f, "(({a}){sym}({b}))")
            }
            Expr::Pow(a, k) => {
                if k.fract() == 0.0 && k.abs() < 1e9 {
                    write!(f, "(({a})^{})", *k as i64)
                } else {
                    // Non-integer exponent prints through the exp/ln rewrite.
                    write!(f, "exp({k}*ln({a}))")
                }
            }
        }
    }
}
