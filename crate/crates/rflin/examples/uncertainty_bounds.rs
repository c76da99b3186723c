//! Bounding the linearization mismatch: build the per-channel uncertainty
//! stack, bound its gradient over the operating box with sampling plus
//! Nelder-Mead polish, and verify the mean-value-theorem coverage claim
//! on fresh random points.
//!
//! ```bash
//! cargo run --release --example uncertainty_bounds
//! ```

use rflin::linearize::{brunovsky, relative_degree, Diffeomorphism, FeedbackLaw};
use rflin::model::OperatingBox;
use rflin::systems::pendulum;
use rflin::uncertainty::{
    assemble_structured_model, bound_rho, build_uncertainty_stack, mvt_coverage, BoundConfig,
    ChiTransform, KRowConvention,
};

fn main() -> rflin::Result<()> {
    let sys = pendulum(1.0, 0.2);
    let split = sys.split();
    let chain = relative_degree(&sys, &split)?;
    let law = FeedbackLaw::new(&sys, &chain)?;
    let diffeo = Diffeomorphism::new(&sys, &chain);

    // The stack holds, per transformed state, the symbolic mismatch
    // between the true and the nominal chain derivative. For the
    // pendulum only the top of the chain is hit: w_3 = -Da sin(x1).
    let stack = build_uncertainty_stack(&sys, &split, &chain)?;
    for (k, w) in stack.rows.iter().enumerate() {
        println!("w_{} = {w}", k + 1);
    }
    println!("active channels: {:?}", stack.active_channels());

    // Everything downstream works in the transformed coordinates, so the
    // mismatch gradient is taken with respect to (chi, v).
    let tf = ChiTransform::new(&sys, &stack, &diffeo, &law)?;
    let box_ = OperatingBox::new(
        vec![-1.0; 3],
        vec![1.0; 3],
        vec![-2.0],
        vec![2.0],
    )?;

    let bounds = bound_rho(&tf, &box_, &BoundConfig::default())?;
    for b in &bounds {
        println!(
            "channel {}: raw max {:.6}, rho_hat {:.6} ({} samples, argmax {:?})",
            b.channel, b.raw_max, b.rho, b.samples, b.argmax
        );
    }
    // Analytic check: sup |d w_3 / d chi| = 0.2 before the 1.1 safety
    // factor, attained where cos(x1) peaks inside the box.

    // Coverage: |w_k| <= rho_hat_k * ||[chi; v]||_1 on random points.
    let report = mvt_coverage(&tf, &bounds, &box_, 10_000, 7)?;
    println!(
        "coverage: {} points checked, {} violations, worst ratio {:.4}",
        report.checked, report.violations, report.worst_ratio
    );

    // The bounds feed a structured linear uncertainty model around the
    // Brunovsky pair.
    let (a, b) = brunovsky(&chain.r);
    let mut rho = vec![0.0; stack.n_bar()];
    for bd in &bounds {
        rho[bd.channel - 1] = bd.rho;
    }
    let model = assemble_structured_model(a, b, &rho, &chain.r, KRowConvention::Dense);
    for ch in &model.channels {
        println!("K row: {:?}  G row: {:?}", ch.k_row.as_slice(), ch.g_row.as_slice());
    }
    Ok(())
}
