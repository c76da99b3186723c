//! Closed-loop nonlinear simulation: the linearizing law plus the minimax
//! gain applied to the true (perturbed) pendulum, the three standard
//! perturbation cases, the per-channel IQC monitor, and CSV export.
//!
//! ```bash
//! cargo run --release --example closed_loop_simulation
//! ```

use nalgebra::DMatrix;
use rflin::linearize::{brunovsky, relative_degree, Diffeomorphism, FeedbackLaw};
use rflin::model::OperatingBox;
use rflin::sim::{iqc_monitor, write_csv, ClosedLoop, StepSchedule};
use rflin::synthesis::{optimize_tau, TauSearchOptions};
use rflin::systems::pendulum;
use rflin::uncertainty::{
    assemble_structured_model, bound_rho, build_uncertainty_stack, BoundConfig, ChiTransform,
    KRowConvention,
};

fn main() -> rflin::Result<()> {
    // Design path: linearize, bound, synthesize (see the other examples
    // for each stage in isolation).
    let sys = pendulum(1.0, 0.2);
    let split = sys.split();
    let chain = relative_degree(&sys, &split)?;
    let law = FeedbackLaw::new(&sys, &chain)?;
    let diffeo = Diffeomorphism::new(&sys, &chain);
    let stack = build_uncertainty_stack(&sys, &split, &chain)?;
    let tf = ChiTransform::new(&sys, &stack, &diffeo, &law)?;
    let box_ = OperatingBox::new(vec![-1.0; 3], vec![1.0; 3], vec![-2.0], vec![2.0])?;
    let bounds = bound_rho(&tf, &box_, &BoundConfig::default())?;

    let (a, b) = brunovsky(&chain.r);
    let mut rho = vec![0.0; stack.n_bar()];
    for bd in &bounds {
        rho[bd.channel - 1] = bd.rho;
    }
    let model = assemble_structured_model(a, b, &rho, &chain.r, KRowConvention::Dense);
    let n = model.n_bar();
    let q = DMatrix::identity(n, n);
    let r = DMatrix::identity(1, 1);
    let d = vec![0.01 * DMatrix::identity(n, n); model.active_channels().len()];
    let design = optimize_tau(&model, &q, &r, &d, &TauSearchOptions::default())?;

    // The simulator runs the true nonlinear plant while the controller
    // only knows the nominal parameters.
    let cl = ClosedLoop::new(
        &sys,
        &law,
        &diffeo,
        &stack,
        &model,
        design.gain.clone(),
        q.clone(),
        r.clone(),
    )?;

    // Three cases: nominal, uncertain parameters at 80%, and at 120%.
    let refs = vec![StepSchedule::constant(0.2)];
    let trajs = cl.run_cases(refs, 30.0, 1e-3)?;

    let out = std::path::Path::new("out_simulation");
    std::fs::create_dir_all(out)?;
    for (i, traj) in trajs.iter().enumerate() {
        let err = traj.terminal_error();
        let report = iqc_monitor(traj, &model, &d, Some(&box_));
        println!(
            "case {}: terminal error {:.3e}, running cost {:.4}, IQC {}",
            i + 1,
            err[0].abs(),
            traj.final_cost(),
            if report.all_satisfied { "satisfied" } else { "violated (reported)" }
        );
        for ch in &report.channels {
            println!(
                "  channel {}: integral {:.4e} vs threshold {:.4e}",
                ch.channel, ch.integral, ch.threshold
            );
        }
        if let Some(t) = report.box_exit {
            println!("  left the operating box at t = {t:.3}");
        }
        let path = out.join(format!("case{}.csv", i + 1));
        write_csv(traj, &path)?;
        println!("  wrote {}", path.display());
    }
    Ok(())
}
