//! Symbolic expressions: parsing, differentiation, simplification, and
//! compilation to a fast evaluator.
//!
//! ```bash
//! cargo run --example symbolic_basics
//! ```

use rflin::expr::{parse, Bindings, Symbol, SymbolTable};

fn main() -> rflin::Result<()> {
    // Declare the symbols an expression may mention, then parse.
    let mut table = SymbolTable::new();
    let x1 = Symbol::state("x1");
    let x2 = Symbol::state("x2");
    let a = Symbol::parameter("a");
    table.declare(x1.clone())?;
    table.declare(x2.clone())?;
    table.declare(a.clone())?;

    let e = parse("-a*sin(x1) + x2^2/2", &table)?;
    println!("expression      : {e}");

    // Exact partial derivatives.
    let de_dx1 = e.diff(&x1).simplify();
    let de_dx2 = e.diff(&x2).simplify();
    let de_da = e.diff(&a).simplify();
    println!("d/dx1           : {de_dx1}");
    println!("d/dx2           : {de_dx2}");
    println!("d/da            : {de_da}");

    // Tree evaluation with a symbol table.
    let mut b = Bindings::new();
    b.insert(x1.clone(), 0.3);
    b.insert(x2.clone(), 1.5);
    b.insert(a.clone(), 1.0);
    println!("value           : {:.6}", e.eval(&b)?);

    // Compilation fixes an argument order and removes the lookup cost:
    // useful inside integrators and samplers that evaluate millions of
    // times.
    let compiled = e.compile(&[x1.clone(), x2.clone(), a.clone()])?;
    println!("compiled value  : {:.6}", compiled.eval(&[0.3, 1.5, 1.0]));

    // Substitution rewrites symbols by expressions (here: freeze a = 1).
    let mut map = std::collections::HashMap::new();
    map.insert(a, rflin::expr::Expr::one());
    println!("a := 1          : {}", e.substitute(&map).simplify());
    Ok(())
}
