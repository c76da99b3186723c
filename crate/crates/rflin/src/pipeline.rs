//! Stage driver: check, linearize, bound, synth, sim, plot. Each stage
//! gates on the previous stage's artifact, writes its own versioned
//! human-readable artifact into the output directory, and returns a
//! one-screen summary. Floats are printed with full precision so repeated
//! runs with the same seed produce byte-identical artifacts.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linearize::{
    brunovsky, decoupling_at_trim, relative_degree, Diffeomorphism, FeedbackLaw, LieChain,
};
use crate::model::SplitSystem;
use crate::modelfile::LoadedModel;
use crate::sim::{iqc_monitor, write_csv, ClosedLoop, Trajectory};
use crate::synthesis::{optimize_tau, robust_hurwitz_check, TauSearchOptions};
use crate::uncertainty::{
    assemble_structured_model, bound_rho, build_uncertainty_stack, BoundConfig,
    ChiTransform, LinearizedUncertainModel, UncertaintyStack,
};

const LIN_FILE: &str = "linearize.txt";
const BOUND_FILE: &str = "bound.txt";
const DESIGN_FILE: &str = "design.txt";

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

pub struct Pipeline {
    pub lm: LoadedModel,
    pub out: PathBuf,
    pub verbose: bool,
}

/// In-memory products of the linearize stage, reused by later stages.
pub struct LinStage {
    pub split: SplitSystem,
    pub chain: LieChain,
    pub diffeo: Diffeomorphism,
    pub law: FeedbackLaw,
    pub stack: UncertaintyStack,
    pub cond: f64,
}

impl Pipeline {
    pub fn new(lm: LoadedModel, out: PathBuf, verbose: bool) -> Result<Self> {
        std::fs::create_dir_all(&out)?;
        Ok(Pipeline { lm, out, verbose })
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn require_artifact(&self, name: &str, stage: &str) -> Result<()> {
        if !self.artifact(name).exists() {
            return Err(Error::Model(format!(
                "missing artifact {name}; run the {stage} stage first"
            )));
        }
        Ok(())
    }

    /// Static validation: dimensions, trim residual, declared bounds.
    pub fn check(&self) -> Result<String> {
        let sys = &self.lm.sys;
        let mut lines = vec![
            format!("model {} ok", self.lm.name),
            format!(
                "states = {}, inputs = {}, parameters = {} ({} uncertain)",
                sys.n_states(),
                sys.n_inputs(),
                sys.params.len(),
                sys.uncertain_params().len()
            ),
            format!(
                "trim residual = {} (tolerance {})",
                fmt(sys.trim_residual()?),
                fmt(sys.trim_residual_tolerance())
            ),
        ];
        for w in &self.lm.warnings {
            lines.push(format!("warning: {w}"));
        }
        Ok(lines.join("\n"))
    }

    fn lin_stage(&self) -> Result<LinStage> {
        let sys = &self.lm.sys;
        let split = sys.split();
        let chain = relative_degree(sys, &split)?;
        let (_, cond) = decoupling_at_trim(sys, &chain)?;
        let diffeo = Diffeomorphism::new(sys, &chain);
        let law = FeedbackLaw::new(sys, &chain)?;
        let stack = build_uncertainty_stack(sys, &split, &chain)?;
        Ok(LinStage { split, chain, diffeo, law, stack, cond })
    }

    /// Relative degrees, decoupling condition, law description.
    pub fn linearize(&self) -> Result<String> {
        let st = self.lin_stage()?;
        let sys = &self.lm.sys;
        let n_bar = st.diffeo.n_bar();
        let mut a = String::new();
        a.push_str("rflin linearize artifact v1\n");
        a.push_str(&format!("model = {}\n", self.lm.name));
        a.push_str(&format!(
            "r = {}\n",
            st.chain.r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
        ));
        a.push_str(&format!("n = {}\n", sys.n_states()));
        a.push_str(&format!("n_bar = {n_bar}\n"));
        a.push_str(&format!("decoupling_cond = {}\n", fmt(st.cond)));
        a.push_str(&format!(
            "active_channels = {}\n",
            st.stack
                .active_channels()
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        ));
        a.push_str(&format!(
            "chain_tops = {}\n",
            st.stack
                .chain_tops
                .iter()
                .map(|v| (v + 1).to_string())
                .collect::<Vec<_>>()
                .join(" ")
        ));
        for (i, f) in st.law.f_star.iter().enumerate() {
            a.push_str(&format!("# f_star[{}] = {}\n", i + 1, f));
        }
        for (i, row) in st.law.g_star.iter().enumerate() {
            for (k, g) in row.iter().enumerate() {
                a.push_str(&format!("# g_star[{},{}] = {}\n", i + 1, k + 1, g));
            }
        }
        std::fs::write(self.artifact(LIN_FILE), &a)?;
        Ok(format!(
            "linearize: r = {:?}, n_bar = {n_bar}, decoupling condition {:.3e}\n\
             active uncertainty channels: {:?}\nwrote {}",
            st.chain.r,
            st.cond,
            st.stack.active_channels(),
            self.artifact(LIN_FILE).display()
        ))
    }

    /// Gradient bounds per channel over the operating box.
    pub fn bound(&self) -> Result<String> {
        self.require_artifact(LIN_FILE, "linearize")?;
        let st = self.lin_stage()?;
        let tf = ChiTransform::new(&self.lm.sys, &st.stack, &st.diffeo, &st.law)?;
        let s = &self.lm.solver;
        let cfg = BoundConfig {
            grid_per_axis: s.grid_per_axis,
            max_grid: s.max_grid,
            lhs_samples: s.lhs_samples,
            nm_starts: s.nm_starts,
            nm_iters: s.nm_iters,
            safety: s.safety,
            seed: s.seed,
        };
        let bounds = bound_rho(&tf, &self.lm.box_, &cfg)?;

        let mut a = String::new();
        a.push_str("rflin bound artifact v1\n");
        a.push_str(&format!("model = {}\n", self.lm.name));
        a.push_str(&format!("seed = {}\n", s.seed));
        a.push_str(&format!("safety = {}\n", fmt(s.safety)));
        a.push_str(&format!("channels = {}\n", bounds.len()));
        a.push_str("# channel rho_hat raw_max samples skipped argmax...\n");
        for b in &bounds {
            let argmax = b
                .argmax
                .iter()
                .map(|v| fmt(*v))
                .collect::<Vec<_>>()
                .join(" ");
            a.push_str(&format!(
                "channel {} {} {} {} {} {}\n",
                b.channel,
                fmt(b.rho),
                fmt(b.raw_max),
                b.samples,
                b.skipped,
                argmax
            ));
        }
        std::fs::write(self.artifact(BOUND_FILE), &a)?;

        let active: Vec<String> = bounds
            .iter()
            .filter(|b| b.rho > 0.0)
            .map(|b| format!("  channel {}: rho_hat = {:.6e} ({} samples)", b.channel, b.rho, b.samples))
            .collect();
        Ok(format!(
            "bound: {} active channels\n{}\nwrote {}",
            active.len(),
            active.join("\n"),
            self.artifact(BOUND_FILE).display()
        ))
    }

    fn read_bounds(&self) -> Result<Vec<(usize, f64)>> {
        let text = std::fs::read_to_string(self.artifact(BOUND_FILE))?;
        let mut out = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("channel ") {
                let mut it = rest.split_whitespace();
                let ch: usize = it
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Model("malformed bound artifact".into()))?;
                let rho: f64 = it
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Model("malformed bound artifact".into()))?;
                out.push((ch, rho));
            }
        }
        if out.is_empty() {
            return Err(Error::Model("bound artifact has no channels".into()));
        }
        Ok(out)
    }

    fn build_model(&self, st: &LinStage, rho: &[f64]) -> Result<LinearizedUncertainModel> {
        let (a, b) = brunovsky(&st.chain.r);
        Ok(assemble_structured_model(
            a,
            b,
            rho,
            &st.chain.r,
            self.lm.solver.k_row_convention()?,
        ))
    }

    /// Minimax LQR synthesis from the stored bounds.
    pub fn synth(&self) -> Result<String> {
        self.require_artifact(BOUND_FILE, "bound")?;
        let st = self.lin_stage()?;
        let stored = self.read_bounds()?;
        let n_bar = st.diffeo.n_bar();
        let mut rho = vec![0.0; n_bar];
        for (ch, r) in stored {
            if ch == 0 || ch > n_bar {
                return Err(Error::Model(format!("bound artifact channel {ch} out of range")));
            }
            rho[ch - 1] = r;
        }
        let model = self.build_model(&st, &rho)?;
        let na = model.active_channels().len();
        let d: Vec<DMatrix<f64>> = (0..na)
            .map(|_| self.lm.solver.d_scale * DMatrix::identity(n_bar, n_bar))
            .collect();
        let opts = TauSearchOptions {
            sweep_lo: self.lm.solver.tau_lo,
            sweep_hi: self.lm.solver.tau_hi,
            ..TauSearchOptions::default()
        };
        let design = optimize_tau(&model, &self.lm.q, &self.lm.r, &d, &opts)?;
        let failures = robust_hurwitz_check(&model, &design.gain, 100, self.lm.solver.seed)?;
        if failures > 0 {
            return Err(Error::Riccati(format!(
                "robust stability spot-check failed on {failures}/100 perturbations"
            )));
        }

        let mut a = String::new();
        a.push_str("rflin design artifact v1\n");
        a.push_str(&format!("model = {}\n", self.lm.name));
        a.push_str(&format!(
            "active = {}\n",
            design.active.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
        ));
        a.push_str(&format!(
            "tau = {}\n",
            design.tau.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(" ")
        ));
        a.push_str(&format!("cost = {}\n", fmt(design.cost)));
        a.push_str(&format!("residual = {}\n", fmt(design.residual)));
        for i in 0..design.gain.nrows() {
            let row: Vec<String> = (0..design.gain.ncols())
                .map(|j| fmt(design.gain[(i, j)]))
                .collect();
            a.push_str(&format!("gain {}\n", row.join(" ")));
        }
        for i in 0..design.x.nrows() {
            let row: Vec<String> =
                (0..design.x.ncols()).map(|j| fmt(design.x[(i, j)])).collect();
            a.push_str(&format!("x {}\n", row.join(" ")));
        }
        std::fs::write(self.artifact(DESIGN_FILE), &a)?;

        let head = if na == 0 {
            "synth: no active channels, reduces to standard LQR".to_string()
        } else {
            format!("synth: {} multipliers, tau = {:?}", na, design.tau)
        };
        Ok(format!(
            "{head}\nguaranteed cost bound = {:.6e}, Riccati residual = {:.3e}\nwrote {}",
            design.cost,
            design.residual,
            self.artifact(DESIGN_FILE).display()
        ))
    }

    /// Re-read a stored design (resumability contract for the sim stage).
    pub fn read_design(&self) -> Result<StoredDesign> {
        let text = std::fs::read_to_string(self.artifact(DESIGN_FILE))?;
        let mut tau = Vec::new();
        let mut active = Vec::new();
        let mut cost = f64::NAN;
        let mut gain_rows: Vec<Vec<f64>> = Vec::new();
        let mut x_rows: Vec<Vec<f64>> = Vec::new();
        let parse_row = |s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Model("malformed design artifact".into()))
                })
                .collect()
        };
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("tau = ") {
                tau = parse_row(rest)?;
            } else if let Some(rest) = line.strip_prefix("active = ") {
                active = rest
                    .split_whitespace()
                    .map(|v| v.parse::<usize>().unwrap_or(0))
                    .collect();
            } else if let Some(rest) = line.strip_prefix("cost = ") {
                cost = rest.trim().parse().unwrap_or(f64::NAN);
            } else if let Some(rest) = line.strip_prefix("gain ") {
                gain_rows.push(parse_row(rest)?);
            } else if let Some(rest) = line.strip_prefix("x ") {
                x_rows.push(parse_row(rest)?);
            }
        }
        if gain_rows.is_empty() {
            return Err(Error::Model("design artifact has no gain".into()));
        }
        let ncols = gain_rows[0].len();
        let gain = DMatrix::from_fn(gain_rows.len(), ncols, |i, j| gain_rows[i][j]);
        let nx = x_rows.len();
        let x = DMatrix::from_fn(nx, nx, |i, j| x_rows[i][j]);
        Ok(StoredDesign { tau, active, cost, gain, x })
    }

    /// Simulate the three standard cases with the stored design.
    pub fn sim(&self) -> Result<String> {
        self.require_artifact(DESIGN_FILE, "synth")?;
        let st = self.lin_stage()?;
        let stored = self.read_design()?;
        let rho_from_bounds = self.read_bounds().ok();
        let n_bar = st.diffeo.n_bar();
        let mut rho = vec![0.0; n_bar];
        if let Some(list) = rho_from_bounds {
            for (ch, r) in list {
                if ch >= 1 && ch <= n_bar {
                    rho[ch - 1] = r;
                }
            }
        }
        let model = self.build_model(&st, &rho)?;
        let cl = ClosedLoop::new(
            &self.lm.sys,
            &st.law,
            &st.diffeo,
            &st.stack,
            &model,
            stored.gain.clone(),
            self.lm.q.clone(),
            self.lm.r.clone(),
        )?;
        let trajs = cl.run_cases(
            self.lm.references.clone(),
            self.lm.solver.t_final,
            self.lm.solver.dt,
        )?;

        let na = model.active_channels().len();
        let d: Vec<DMatrix<f64>> = (0..na)
            .map(|_| self.lm.solver.d_scale * DMatrix::identity(n_bar, n_bar))
            .collect();

        let mut summary = String::new();
        summary.push_str("rflin sim summary v1\n");
        summary.push_str("case  terminal_error  cost  iqc\n");
        for (i, traj) in trajs.iter().enumerate() {
            let path = self.artifact(&format!("case{}.csv", i + 1));
            write_csv(traj, &path)?;
            let rep = iqc_monitor(traj, &model, &d, Some(&self.lm.box_));
            let err = traj
                .terminal_error()
                .iter()
                .map(|v| fmt(*v))
                .collect::<Vec<_>>()
                .join(" ");
            let iqc = if rep.all_satisfied { "satisfied" } else { "violated" };
            let mut line = format!("{}  {}  {}  {}", i + 1, err, fmt(traj.final_cost()), iqc);
            if let Some(t) = rep.box_exit {
                line.push_str(&format!("  bound region exited at t={t:.3}"));
            }
            if let Some(msg) = &traj.diverged {
                line.push_str(&format!("  {msg}"));
            }
            summary.push_str(&line);
            summary.push('\n');
        }
        std::fs::write(self.artifact("sim_summary.txt"), &summary)?;
        Ok(format!("{summary}wrote case1..3.csv and sim_summary.txt in {}", self.out.display()))
    }

    /// SVG plots from the stored case trajectories.
    pub fn plot(&self) -> Result<String> {
        self.require_artifact("case1.csv", "sim")?;
        let mut files = Vec::new();
        for case in 1..=3usize {
            let path = self.artifact(&format!("case{case}.csv"));
            if !path.exists() {
                continue;
            }
            let traj = read_csv(&path)?;
            let tag = format!("case{case}");
            files.extend(crate::plot::plot_outputs(&traj, &self.out, &tag)?);
            files.push(crate::plot::plot_inputs(&traj, &self.out, &tag)?);
            let n = traj.x.first().map_or(0, |r| r.len());
            let sel: Vec<usize> = (0..n.min(4)).collect();
            files.push(crate::plot::plot_states(&traj, &sel, &self.out, &tag)?);
        }
        Ok(format!(
            "plot: wrote {} SVG files in {}",
            files.len(),
            self.out.display()
        ))
    }
}

/// A design re-read from disk.
pub struct StoredDesign {
    pub tau: Vec<f64>,
    pub active: Vec<usize>,
    pub cost: f64,
    pub gain: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

/// Read a trajectory CSV back (for plotting); channel signals are not
/// stored in the CSV and come back empty.
pub fn read_csv(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Sim("empty trajectory CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let count = |p: &str| cols.iter().filter(|c| c.starts_with(p) && c[p.len()..].parse::<usize>().is_ok()).count();
    let n = count("x");
    let n_bar = count("chi");
    let m = count("u");
    let mut traj = Trajectory {
        t: vec![],
        x: vec![],
        chi: vec![],
        u: vec![],
        v: vec![],
        y: vec![],
        yc: vec![],
        z: vec![],
        zeta: vec![],
        cost: vec![],
        diverged: None,
        warnings: vec![],
    };
    for line in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| Error::Sim("malformed CSV".into())))
            .collect::<Result<_>>()?;
        if vals.len() != 1 + n + n_bar + 4 * m + 1 {
            return Err(Error::Sim("CSV row width mismatch".into()));
        }
        let mut i = 0;
        let mut take = |k: usize| {
            let s = vals[i..i + k].to_vec();
            i += k;
            s
        };
        traj.t.push(take(1)[0]);
        traj.x.push(take(n));
        traj.chi.push(take(n_bar));
        traj.u.push(take(m));
        traj.v.push(take(m));
        traj.y.push(take(m));
        traj.yc.push(take(m));
        traj.cost.push(take(1)[0]);
        traj.z.push(vec![0.0; n_bar]);
        traj.zeta.push(vec![0.0; n_bar]);
    }
    Ok(traj)
}
