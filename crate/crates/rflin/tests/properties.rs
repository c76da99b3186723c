//! Property tests for the expression layer: simplification must preserve
//! values, printed expressions must re-parse to the same function, and
//! compiled evaluation must match tree evaluation.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rflin::expr::{add, mul, parse, sub, Bindings, Expr, Symbol, SymbolTable};

fn symbols() -> Vec<Symbol> {
    vec![Symbol::state("x"), Symbol::state("y"), Symbol::parameter("c")]
}

fn random_expr(rng: &mut ChaCha8Rng, syms: &[Symbol], depth: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.3) {
        return if rng.gen_bool(0.4) {
            Expr::constant(rng.gen_range(-2.0..=2.0))
        } else {
            Expr::sym(syms[rng.gen_range(0..syms.len())].clone())
        };
    }
    match rng.gen_range(0..7) {
        0 => add(random_expr(rng, syms, depth - 1), random_expr(rng, syms, depth - 1)),
        1 => sub(random_expr(rng, syms, depth - 1), random_expr(rng, syms, depth - 1)),
        2 => mul(random_expr(rng, syms, depth - 1), random_expr(rng, syms, depth - 1)),
        3 => random_expr(rng, syms, depth - 1).sin(),
        4 => random_expr(rng, syms, depth - 1).cos(),
        5 => random_expr(rng, syms, depth - 1).neg(),
        _ => mul(Expr::constant(0.25), random_expr(rng, syms, depth - 1)).exp(),
    }
}

fn bindings(rng: &mut ChaCha8Rng, syms: &[Symbol]) -> Bindings {
    let mut b = Bindings::new();
    for s in syms {
        b.insert(s.clone(), rng.gen_range(-1.5..=1.5));
    }
    b
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn simplify_preserves_values(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let syms = symbols();
        let e = random_expr(&mut rng, &syms, 5);
        let s = e.simplify();
        for _ in 0..5 {
            let b = bindings(&mut rng, &syms);
            let v0 = e.eval(&b).unwrap();
            let v1 = s.eval(&b).unwrap();
            prop_assert!(close(v0, v1), "simplify changed {v0} to {v1} in {e}");
        }
    }

    #[test]
    fn printed_form_reparses_to_same_function(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let syms = symbols();
        let e = random_expr(&mut rng, &syms, 5);
        let mut table = SymbolTable::new();
        for s in &syms {
            table.declare(s.clone()).unwrap();
        }
        let reparsed = parse(&e.to_string(), &table).unwrap();
        for _ in 0..5 {
            let b = bindings(&mut rng, &syms);
            let v0 = e.eval(&b).unwrap();
            let v1 = reparsed.eval(&b).unwrap();
            prop_assert!(close(v0, v1), "reparse changed {v0} to {v1} in {e}");
        }
    }

    #[test]
    fn compiled_matches_tree_evaluation(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let syms = symbols();
        let e = random_expr(&mut rng, &syms, 5);
        let compiled = e.compile(&syms).unwrap();
        for _ in 0..5 {
            let vals: Vec<f64> = (0..syms.len()).map(|_| rng.gen_range(-1.5..=1.5)).collect();
            let mut b = Bindings::new();
            for (s, v) in syms.iter().zip(&vals) {
                b.insert(s.clone(), *v);
            }
            let v0 = e.eval(&b).unwrap();
            let v1 = compiled.eval(&vals);
            prop_assert!(close(v0, v1), "compiled {v1} vs tree {v0} in {e}");
        }
    }

    #[test]
    fn derivative_of_sum_is_sum_of_derivatives(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let syms = symbols();
        let e1 = random_expr(&mut rng, &syms, 4);
        let e2 = random_expr(&mut rng, &syms, 4);
        let x = &syms[0];
        let lhs = add(e1.clone(), e2.clone()).diff(x);
        let rhs = add(e1.diff(x), e2.diff(x));
        for _ in 0..5 {
            let b = bindings(&mut rng, &syms);
            prop_assert!(close(lhs.eval(&b).unwrap(), rhs.eval(&b).unwrap()));
        }
    }
}
