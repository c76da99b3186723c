//! Flat postfix form of an expression for fast repeated evaluation.
//!
//! Simulation and bound-sampling loops evaluate the same expressions at
//! millions of points; walking the tree with hash-map symbol lookups is the
//! dominant cost there. Compiling against a fixed symbol ordering turns
//! every lookup into a slot index.

use super::{BinaryOp, Expr, Symbol, UnaryOp};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    Load(usize),
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Add,
    Sub,
    Mul,
    Div,
    Pow(f64),
}

/// An expression compiled against a fixed symbol ordering.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    max_depth: usize,
}

impl CompiledExpr {
    pub(super) fn new(expr: &Expr, order: &[Symbol]) -> Result<Self> {
        let mut ops = Vec::new();
        emit(expr, order, &mut ops)?;
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Load(_) => depth += 1,
                Op::Add | Op::Sub | Op::Mul | Op::Div => depth -= 1,
                _ => {}
            }
            max_depth = max_depth.max(depth);
        }
        Ok(CompiledExpr { ops, max_depth })
    }

    /// Evaluate with `values[i]` bound to the i-th symbol of the compile
    /// ordering. Domain errors surface as non-finite results.
    pub fn eval(&self, values: &[f64]) -> f64 {
        let mut stack = [0.0f64; 64];
        if self.max_depth <= 64 {
            self.eval_on(values, &mut stack)
        } else {
            let mut stack = vec![0.0; self.max_depth];
            self.eval_on(values, &mut stack)
        }
    }

    fn eval_on(&self, values: &[f64], stack: &mut [f64]) -> f64 {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    stack[sp] = c;
                    sp += 1;
                }
                Op::Load(i) => {
                    stack[sp] = values[i];
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Sin => stack[sp - 1] = stack[sp - 1].sin(),
                Op::Cos => stack[sp - 1] = stack[sp - 1].cos(),
                Op::Tan => stack[sp - 1] = stack[sp - 1].tan(),
                Op::Exp => stack[sp - 1] = stack[sp - 1].exp(),
                Op::Ln => stack[sp - 1] = stack[sp - 1].ln(),
                Op::Sqrt => stack[sp - 1] = stack[sp - 1].sqrt(),
                Op::Add => {
                    sp -= 1;
                    stack[sp - 1] += stack[sp];
                }
                Op::Sub => {
                    sp -= 1;
                    stack[sp - 1] -= stack[sp];
                }
                Op::Mul => {
                    sp -= 1;
                    stack[sp - 1] *= stack[sp];
                }
                Op::Div => {
                    sp -= 1;
                    stack[sp - 1] /= stack[sp];
                }
                Op::Pow(k) => stack[sp - 1] = stack[sp - 1].powf(k),
            }
        }
        debug_assert_eq!(sp, 1);
        stack[0]
    }
}

fn emit(expr: &Expr, order: &[Symbol], ops: &mut Vec<Op>) -> Result<()> {
    match expr {
        Expr::Const(c) => ops.push(Op::Const(*c)),
        Expr::Sym(s) => {
            let idx = order.iter().position(|o| o == s).ok_or_else(|| {
                Error::Eval(format!(
                    "symbol `{}` ({}) not in compile ordering",
                    s.name, s.class
                ))
            })?;
            ops.push(Op::Load(idx));
        }
        Expr::Unary(op, a) => {
            emit(a, order, ops)?;
            ops.push(match op {
                UnaryOp::Neg => Op::Neg,
                UnaryOp::Sin => Op::Sin,
                UnaryOp::Cos => Op::Cos,
                UnaryOp::Tan => Op::Tan,
                UnaryOp::Exp => Op::Exp,
                UnaryOp::Ln => Op::Ln,
                UnaryOp::Sqrt => Op::Sqrt,
            });
        }
        Expr::Binary(op, a, b) => {
            emit(a, order, ops)?;
            emit(b, order, ops)?;
            ops.push(match op {
                BinaryOp::Add => Op::Add,
                BinaryOp::Sub => Op::Sub,
                BinaryOp::Mul => Op::Mul,
                BinaryOp::Div => Op::Div,
            });
        }
        Expr::Pow(a, k) => {
            emit(a, order, ops)?;
            ops.push(Op::Pow(*k));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::expr::{mul, Bindings, Expr, Symbol};

    #[test]
    fn compiled_matches_tree_eval() {
        let x = Symbol::state("x");
        let y = Symbol::state("y");
        let e = mul(Expr::sym(x.clone()).sin(), Expr::sym(y.clone()).pow(3.0));
        let c = e.compile(&[x.clone(), y.clone()]).unwrap();
        let mut b = Bindings::new();
        b.insert(x, 0.7);
        b.insert(y, 1.3);
        let tree = e.eval(&b).unwrap();
        let flat = c.eval(&[0.7, 1.3]);
        assert!((tree - flat).abs() < 1e-15);
    }

    #[test]
    fn missing_symbol_in_ordering_is_an_error() {
        let x = Symbol::state("x");
        let e = Expr::sym(x);
        assert!(e.compile(&[Symbol::state("y")]).is_err());
    }
}
