//! Feedback linearization of the uncertain pendulum: Lie chains, vector
//! relative degree, the linearizing feedback law, and the transformed
//! (Brunovsky) coordinates with tracking integrators.
//!
//! ```bash
//! cargo run --example linearize_pendulum
//! ```

use rflin::linearize::{
    brunovsky, controllability_rank, decoupling_at_trim, relative_degree, Diffeomorphism,
    FeedbackLaw,
};
use rflin::systems::pendulum;

fn main() -> rflin::Result<()> {
    // x1' = x2, x2' = -a sin(x1) + u with a in [0.8, 1.2], output y = x1.
    let sys = pendulum(1.0, 0.2);
    let split = sys.split();

    // Differentiate each output along the nominal drift until an input
    // appears; the chain lengths are the vector relative degree.
    let chain = relative_degree(&sys, &split)?;
    println!("relative degree r = {:?}", chain.r);
    for (j, c) in chain.chains[0].iter().enumerate() {
        println!("  L_f^{j} y = {c}");
    }

    // The decoupling matrix g* must be invertible at trim for the law
    // u = g*^{-1} (v - f*) to exist.
    let (gstar, cond) = decoupling_at_trim(&sys, &chain)?;
    println!("g* at trim = {gstar:.4}, condition number {cond:.3e}");

    let law = FeedbackLaw::new(&sys, &chain)?;
    // At the upright trim with v = 0 the input holds the equilibrium.
    let u = law.control(&sys.x0, &[0.0])?;
    println!("u(trim, v=0) = {u:?}");

    // Transformed coordinates: one integrator per output plus the output
    // derivatives, chi = [int(y - y_c), y - y_c, y'].
    let diffeo = Diffeomorphism::new(&sys, &chain);
    println!("n_bar = {} transformed states", diffeo.n_bar());

    // In these coordinates the nominal loop is a chain of integrators.
    let (a, b) = brunovsky(&chain.r);
    println!("Brunovsky A =\n{a:.1}");
    println!("Brunovsky B =\n{b:.1}");
    println!(
        "controllability rank = {} (full = {})",
        controllability_rank(&a, &b),
        a.nrows()
    );
    Ok(())
}
