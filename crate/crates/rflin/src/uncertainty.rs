//! Residual uncertainty after nominal feedback linearization: the symbolic
//! uncertainty stack per transformed-state row, mean-value-theorem gradient
//! bounds over the operating box and parameter set, and assembly of the
//! structured uncertain model.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::expr::{add, mul, sub, CompiledExpr, Expr, Symbol};
use crate::linearize::{lie_derivative, ChiComponent, Diffeomorphism, FeedbackLaw, LieChain};
use crate::model::{
    sample_box, OperatingBox, ParameterSpec, SampleScheme, SplitSystem, UncertainSystem,
};
use crate::nm::nelder_mead;

const MAX_NODES_PER_ENTRY: usize = 1_000_000;

/// Per-row uncertainty expressions in the original (x, u, dp) variables.
/// Row k is the mismatch between the true and nominal time derivative of
/// the k-th transformed coordinate; integral rows are exactly zero.
#[derive(Clone, Debug)]
pub struct UncertaintyStack {
    /// One expression per transformed-state row.
    pub rows: Vec<Expr>,
    pub delta_syms: Vec<Symbol>,
    pub delta_params: Vec<ParameterSpec>,
    pub r: Vec<usize>,
    /// Zero-based chi indices of the top of each chain.
    pub chain_tops: Vec<usize>,
}

impl UncertaintyStack {
    pub fn n_bar(&self) -> usize {
        self.rows.len()
    }

    /// Channels whose uncertainty expression actually involves a deviation
    /// symbol (one-based channel indices).
    pub fn active_channels(&self) -> Vec<usize> {
        let deltas: std::collections::BTreeSet<Symbol> =
            self.delta_syms.iter().cloned().collect();
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, e)| e.depends_on_any(&deltas))
            .map(|(k, _)| k + 1)
            .collect()
    }
}

/// Build the uncertainty stack. Row `k` is the difference between the true
/// and nominal evolution of transformed coordinate `k`:
/// for chain level `j` of output `i` (coordinate `L_{f0}^{j-1} nu_i`),
///
/// `w = L_{fu}(c) - L_{f0}(c) + sum_k (L_{gk,u}(c) - L_{gk,0}(c)) u_k`
///
/// with `c = L_{f0}^{j-1} nu_i`. Setting every deviation symbol to zero
/// collapses every row to zero; only top-of-chain rows depend on u through
/// nonzero nominal input-field sensitivity.
pub fn build_uncertainty_stack(
    sys: &UncertainSystem,
    split: &SplitSystem,
    chain: &LieChain,
) -> Result<UncertaintyStack> {
    let mut rows = Vec::new();
    let mut chain_tops = Vec::new();
    for (i, c) in chain.chains.iter().enumerate() {
        let ri = chain.r[i];
        rows.push(Expr::zero()); // integral row
        for j in 1..=ri {
            let base = &c[j - 1];
            let lie_u = lie_derivative(base, &split.drift_u, &sys.states);
            let mut w = sub(lie_u, c[j].clone()).simplify();
            for (k, u_sym) in sys.inputs.iter().enumerate() {
                let gu = lie_derivative(base, &split.inputs_u[k], &sys.states);
                let g0 = lie_derivative(base, &split.inputs0[k], &sys.states);
                let term = mul(sub(gu, g0).simplify(), Expr::sym(u_sym.clone()));
                w = add(w, term).simplify();
            }
            if w.node_count() > MAX_NODES_PER_ENTRY {
                return Err(Error::Bound(format!(
                    "uncertainty expression for output {} level {} exceeds {} nodes; \
                     simplify the model",
                    i + 1,
                    j,
                    MAX_NODES_PER_ENTRY
                )));
            }
            rows.push(w);
        }
        chain_tops.push(rows.len() - 1);
    }
    Ok(UncertaintyStack {
        rows,
        delta_syms: split.delta_syms.clone(),
        delta_params: split.delta_params.clone(),
        r: chain.r.clone(),
        chain_tops,
    })
}

struct ActiveRow {
    w: CompiledExpr,
    /// Partials of w with respect to each state.
    w_dx: Vec<CompiledExpr>,
    /// Partials of w with respect to each input.
    w_du: Vec<CompiledExpr>,
}

/// Numeric view of the uncertainty stack in transformed coordinates:
/// evaluates `w_k(chi, v, p)` and its gradient with respect to `(chi, v)`
/// by inverting the diffeomorphism and chain-ruling through the feedback
/// law `u = u(x, v)`.
pub struct ChiTransform<'a> {
    sys: &'a UncertainSystem,
    law: &'a FeedbackLaw,
    stack: &'a UncertaintyStack,
    rows: Vec<Option<ActiveRow>>,
    /// Non-integral diffeomorphism components (refs pinned at the trim
    /// command), compiled over states; their chi indices; and the Jacobian.
    t_non: Vec<CompiledExpr>,
    t_jac: Vec<Vec<CompiledExpr>>,
    nonint_idx: Vec<usize>,
    /// d f*_i / d x_j and d g*_{il} / d x_j, compiled over states.
    fstar_dx: Vec<Vec<CompiledExpr>>,
    gstar_dx: Vec<Vec<Vec<CompiledExpr>>>,
    n_bar: usize,
}

impl<'a> ChiTransform<'a> {
    pub fn new(
        sys: &'a UncertainSystem,
        stack: &'a UncertaintyStack,
        diffeo: &Diffeomorphism,
        law: &'a FeedbackLaw,
    ) -> Result<Self> {
        let n_bar = stack.n_bar();

        // Ordering for stack rows: states, inputs, deviation symbols.
        let mut xud: Vec<Symbol> = sys.states.clone();
        xud.extend(sys.inputs.iter().cloned());
        xud.extend(stack.delta_syms.iter().cloned());

        let deltas: std::collections::BTreeSet<Symbol> =
            stack.delta_syms.iter().cloned().collect();
        let mut rows = Vec::with_capacity(n_bar);
        for w in &stack.rows {
            if !w.depends_on_any(&deltas) {
                rows.push(None);
                continue;
            }
            let w_dx = sys
                .states
                .iter()
                .map(|s| w.diff(s).compile(&xud))
                .collect::<Result<_>>()?;
            let w_du = sys
                .inputs
                .iter()
                .map(|s| w.diff(s).compile(&xud))
                .collect::<Result<_>>()?;
            rows.push(Some(ActiveRow { w: w.compile(&xud)?, w_dx, w_du }));
        }

        // Pin reference commands at the trim outputs so the bound is taken
        // around the commanded condition.
        let trim = sys.trim_bindings();
        let mut ref_map = std::collections::HashMap::new();
        for (i, rs) in diffeo.ref_syms.iter().enumerate() {
            ref_map.insert(rs.clone(), Expr::constant(sys.outputs[i].eval(&trim)?));
        }
        let mut t_non = Vec::new();
        let mut t_jac = Vec::new();
        let mut nonint_idx = Vec::new();
        for (idx, comp) in diffeo.components.iter().enumerate() {
            if let ChiComponent::Func(e) = comp {
                let pinned = e.substitute(&ref_map).simplify();
                t_jac.push(
                    sys.states
                        .iter()
                        .map(|s| pinned.diff(s).compile(&sys.states))
                        .collect::<Result<Vec<_>>>()?,
                );
                t_non.push(pinned.compile(&sys.states)?);
                nonint_idx.push(idx);
            }
        }

        let fstar_dx = law
            .f_star
            .iter()
            .map(|e| {
                sys.states
                    .iter()
                    .map(|s| e.diff(s).compile(&sys.states))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let gstar_dx = law
            .g_star
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| {
                        sys.states
                            .iter()
                            .map(|s| e.diff(s).compile(&sys.states))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        Ok(ChiTransform {
            sys,
            law,
            stack,
            rows,
            t_non,
            t_jac,
            nonint_idx,
            fstar_dx,
            gstar_dx,
            n_bar,
        })
    }

    pub fn n_bar(&self) -> usize {
        self.n_bar
    }

    pub fn active(&self, k0: usize) -> bool {
        self.rows[k0].is_some()
    }

    /// Recover the plant state from the non-integral chi components by
    /// Newton iteration from the trim point.
    pub fn invert(&self, chi: &[f64]) -> Option<Vec<f64>> {
        let n = self.sys.n_states();
        let mut x = self.sys.x0.clone();
        let target: Vec<f64> = self.nonint_idx.iter().map(|&i| chi[i]).collect();
        let scale = 1.0 + target.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for _ in 0..50 {
            let resid = DVector::from_iterator(
                n,
                self.t_non.iter().zip(&target).map(|(c, t)| c.eval(&x) - t),
            );
            if !resid.iter().all(|v| v.is_finite()) {
                return None;
            }
            if resid.amax() <= 1e-11 * scale {
                return Some(x);
            }
            let jac = DMatrix::from_fn(n, n, |i, j| self.t_jac[i][j].eval(&x));
            let step = jac.lu().solve(&resid)?;
            if !step.iter().all(|v| v.is_finite()) {
                return None;
            }
            for i in 0..n {
                x[i] -= step[i];
            }
        }
        None
    }

    fn xud_values(&self, x: &[f64], u: &[f64], dp: &[f64]) -> Vec<f64> {
        let mut vals = x.to_vec();
        vals.extend_from_slice(u);
        vals.extend_from_slice(dp);
        vals
    }

    /// Evaluate `w_k` (one-based channel) at a transformed-space sample.
    /// `p` holds absolute values of the uncertain parameters.
    pub fn w_value(&self, k: usize, chi: &[f64], v: &[f64], p: &[f64]) -> Option<f64> {
        let row = self.rows[k - 1].as_ref()?;
        let x = self.invert(chi)?;
        let u = self.law.control(&x, v).ok()?;
        let dp = self.deviations(p);
        Some(row.w.eval(&self.xud_values(&x, &u, &dp)))
    }

    fn deviations(&self, p: &[f64]) -> Vec<f64> {
        self.stack
            .delta_params
            .iter()
            .zip(p)
            .map(|(spec, v)| v - spec.nominal)
            .collect()
    }

    /// Gradient of `w_k` with respect to `(chi, v)` at a sample, chain-ruled
    /// through the inverse diffeomorphism and the feedback law. Returns
    /// `None` when the diffeomorphism or decoupling matrix is singular at
    /// the sample (the caller counts such skips).
    pub fn grad(&self, k: usize, chi: &[f64], v: &[f64], p: &[f64]) -> Option<Vec<f64>> {
        let row = self.rows[k - 1].as_ref()?;
        let n = self.sys.n_states();
        let m = self.sys.n_inputs();
        let x = self.invert(chi)?;
        let (f_star, g_star) = self.law.eval_parts(&x);
        let glu = g_star.clone().lu();
        let u = glu.solve(&(DVector::from_row_slice(v) - f_star))?;
        let dp = self.deviations(p);
        let vals = self.xud_values(&x, u.as_slice(), &dp);

        let w_x: Vec<f64> = row.w_dx.iter().map(|c| c.eval(&vals)).collect();
        let w_u: Vec<f64> = row.w_du.iter().map(|c| c.eval(&vals)).collect();

        // du/dx column j: solve g* du_j = -(df*/dx_j + dg*/dx_j u).
        let mut row_x = w_x;
        if w_u.iter().any(|v| *v != 0.0) {
            for j in 0..n {
                let rhs = DVector::from_fn(m, |i, _| {
                    let mut acc = self.fstar_dx[i][j].eval(&x);
                    for l in 0..m {
                        acc += self.gstar_dx[i][l][j].eval(&x) * u[l];
                    }
                    -acc
                });
                let du_j = glu.solve(&rhs)?;
                for (l, wul) in w_u.iter().enumerate() {
                    row_x[j] += wul * du_j[l];
                }
            }
        }

        // chi part: row_x . J^{-1}  (solve J^T z = row_x).
        let jac = DMatrix::from_fn(n, n, |i, j| self.t_jac[i][j].eval(&x));
        let z = jac.transpose().lu().solve(&DVector::from_row_slice(&row_x))?;

        let mut grad = vec![0.0; self.n_bar + m];
        for (slot, &pos) in self.nonint_idx.iter().enumerate() {
            grad[pos] = z[slot];
        }
        // v part: w_u . g*^{-1}  (solve g*^T z = w_u).
        let zv = g_star.transpose().lu().solve(&DVector::from_row_slice(&w_u))?;
        for l in 0..m {
            grad[self.n_bar + l] = zv[l];
        }
        Some(grad)
    }
}

/// Configuration for the gradient-bound maximization.
#[derive(Clone, Debug)]
pub struct BoundConfig {
    pub grid_per_axis: usize,
    /// Switch to Latin-hypercube sampling when the full grid would exceed
    /// this many points.
    pub max_grid: usize,
    pub lhs_samples: usize,
    pub nm_starts: usize,
    pub nm_iters: usize,
    pub safety: f64,
    pub seed: u64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            grid_per_axis: 5,
            max_grid: 100_000,
            lhs_samples: 20_000,
            nm_starts: 10,
            nm_iters: 200,
            safety: 1.1,
            seed: 1,
        }
    }
}

/// Result of bounding one channel.
#[derive(Clone, Debug)]
pub struct ChannelBound {
    /// One-based channel index.
    pub channel: usize,
    /// Max gradient norm found, before the safety factor.
    pub raw_max: f64,
    /// `raw_max * safety` — the shipped bound.
    pub rho: f64,
    /// `(chi, v, p)` concatenated at the maximizer.
    pub argmax: Vec<f64>,
    pub samples: usize,
    pub skipped: usize,
}

/// Bound the gradient of every uncertainty channel over the operating box
/// and parameter set: coarse sampling, Nelder-Mead polish from the best
/// points, and a safety factor. The gradient norm is the infinity norm of
/// the row, pairing with the 1-norm of `[chi; v]` in the coverage claim.
pub fn bound_rho(
    tf: &ChiTransform,
    box_: &OperatingBox,
    cfg: &BoundConfig,
) -> Result<Vec<ChannelBound>> {
    verify_anchor(tf)?;
    let params = &tf.stack.delta_params;
    let d = box_.chi_dim() + box_.v_dim() + params.len();
    let grid_total = (cfg.grid_per_axis as f64).powi(d as i32);
    let scheme = if grid_total <= cfg.max_grid as f64 {
        SampleScheme::Grid(cfg.grid_per_axis)
    } else {
        SampleScheme::LatinHypercube(cfg.lhs_samples, cfg.seed)
    };

    let mut out = Vec::with_capacity(tf.n_bar());
    for k in 1..=tf.n_bar() {
        if !tf.active(k - 1) {
            out.push(ChannelBound {
                channel: k,
                raw_max: 0.0,
                rho: 0.0,
                argmax: Vec::new(),
                samples: 0,
                skipped: 0,
            });
            continue;
        }
        let samples = sample_box(box_, params, scheme)?;
        let total = samples.len();
        let mut skipped = 0usize;
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(total);
        for s in &samples {
            match tf.grad(k, &s.chi, &s.v, &s.p) {
                Some(g) => {
                    let norm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    if !norm.is_finite() {
                        return Err(Error::Bound(format!(
                            "non-finite gradient of channel {k} at chi={:?} v={:?} p={:?}",
                            s.chi, s.v, s.p
                        )));
                    }
                    let mut pt = s.chi.clone();
                    pt.extend_from_slice(&s.v);
                    pt.extend_from_slice(&s.p);
                    scored.push((norm, pt));
                }
                None => skipped += 1,
            }
        }
        if skipped * 20 > total {
            return Err(Error::Bound(format!(
                "channel {k}: {skipped}/{total} samples skipped (singular transform); \
                 shrink the operating box"
            )));
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let (mut best, mut best_pt) = match scored.first() {
            Some((v, p)) => (*v, p.clone()),
            None => (0.0, Vec::new()),
        };

        // Polish from the best starting points. The objective is the
        // negated gradient norm; skipped evaluations return +inf.
        let mut lo = box_.chi_lo.clone();
        let mut hi = box_.chi_hi.clone();
        lo.extend_from_slice(&box_.v_lo);
        hi.extend_from_slice(&box_.v_hi);
        for p in params.iter() {
            lo.push(p.nominal - p.half_width);
            hi.push(p.nominal + p.half_width);
        }
        let nc = box_.chi_dim();
        let nv = box_.v_dim();
        for (_, start) in scored.iter().take(cfg.nm_starts) {
            let mut obj = |pt: &[f64]| -> f64 {
                match tf.grad(k, &pt[..nc], &pt[nc..nc + nv], &pt[nc + nv..]) {
                    Some(g) => -g.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                    None => f64::INFINITY,
                }
            };
            let (pt, val) = nelder_mead(&mut obj, start, &lo, &hi, cfg.nm_iters);
            if -val > best {
                best = -val;
                best_pt = pt;
            }
        }

        out.push(ChannelBound {
            channel: k,
            raw_max: best,
            rho: best * cfg.safety,
            argmax: best_pt,
            samples: total,
            skipped,
        });
    }
    Ok(out)
}

/// Theorem 1 is applied with anchor `chi = 0, v = 0` and `w(0,0,p0) = 0`;
/// verify the assumption numerically at the trim.
fn verify_anchor(tf: &ChiTransform) -> Result<()> {
    let p0: Vec<f64> = tf.stack.delta_params.iter().map(|p| p.nominal).collect();
    let zero_chi = vec![0.0; tf.n_bar()];
    let zero_v = vec![0.0; tf.sys.n_inputs()];
    for k in 1..=tf.n_bar() {
        if !tf.active(k - 1) {
            continue;
        }
        if let Some(w0) = tf.w_value(k, &zero_chi, &zero_v, &p0) {
            if w0.abs() > 1e-6 {
                return Err(Error::Bound(format!(
                    "anchor assumption violated: w_{k}(0,0,p0) = {w0:.3e}"
                )));
            }
        }
    }
    Ok(())
}

/// Independent-sample check of the mean-value-theorem coverage claim:
/// `|w_k(chi,v,p)| <= rho_k * ||[chi; v]||_1` for every channel.
#[derive(Clone, Debug)]
pub struct CoverageReport {
    pub checked: usize,
    pub violations: usize,
    pub worst_ratio: f64,
}

pub fn mvt_coverage(
    tf: &ChiTransform,
    bounds: &[ChannelBound],
    box_: &OperatingBox,
    n_samples: usize,
    seed: u64,
) -> Result<CoverageReport> {
    let samples = sample_box(
        box_,
        &tf.stack.delta_params,
        SampleScheme::UniformRandom(n_samples, seed),
    )?;
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    for s in &samples {
        let l1: f64 = s.chi.iter().chain(s.v.iter()).map(|v| v.abs()).sum();
        for b in bounds {
            if b.rho == 0.0 {
                continue;
            }
            if let Some(w) = tf.w_value(b.channel, &s.chi, &s.v, &s.p) {
                checked += 1;
                let limit = b.rho * l1;
                let ratio = if limit > 0.0 { w.abs() / limit } else if w.abs() > 1e-12 { f64::INFINITY } else { 0.0 };
                worst = worst.max(ratio);
                if w.abs() > limit + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    Ok(CoverageReport { checked, violations, worst_ratio: worst })
}

/// K-row convention for the structured model: `Dense` fills every entry
/// of the k-th K row with `rho_k` (the default); `Sparse` puts `rho_k`
/// only in entry k.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KRowConvention {
    Dense,
    Sparse,
}

/// One structured uncertainty channel `(C_k, K_k, G_k)`.
#[derive(Clone, Debug)]
pub struct Channel {
    pub c: DVector<f64>,
    pub k_row: RowDVector<f64>,
    pub g_row: RowDVector<f64>,
}

/// Brunovsky pair plus structured norm-bounded uncertainty channels.
#[derive(Clone, Debug)]
pub struct LinearizedUncertainModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub rho: Vec<f64>,
    /// All channels, zero channels kept explicitly.
    pub channels: Vec<Channel>,
    pub r: Vec<usize>,
    pub chain_tops: Vec<usize>,
}

impl LinearizedUncertainModel {
    pub fn n_bar(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    /// One-based indices of channels with nonzero bound.
    pub fn active_channels(&self) -> Vec<usize> {
        self.rho
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > 0.0)
            .map(|(k, _)| k + 1)
            .collect()
    }
}

/// Assemble the structured model from the Brunovsky pair and the bounds.
/// `G` rows are nonzero only at the top-of-chain indices (augmented
/// indexing, counting the integrator rows).
pub fn assemble_structured_model(
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    rho: &[f64],
    r: &[usize],
    convention: KRowConvention,
) -> LinearizedUncertainModel {
    let n_bar = a.nrows();
    let m = b.ncols();
    assert_eq!(rho.len(), n_bar);
    let mut chain_tops = Vec::with_capacity(r.len());
    let mut off = 0;
    for ri in r {
        chain_tops.push(off + ri);
        off += ri + 1;
    }
    let channels = (0..n_bar)
        .map(|k| {
            let rho_k = rho[k];
            if rho_k == 0.0 {
                return Channel {
                    c: DVector::zeros(n_bar),
                    k_row: RowDVector::zeros(n_bar),
                    g_row: RowDVector::zeros(m),
                };
            }
            let mut c = DVector::zeros(n_bar);
            c[k] = 1.0;
            let k_row = match convention {
                KRowConvention::Dense => RowDVector::from_element(n_bar, rho_k),
                KRowConvention::Sparse => {
                    let mut row = RowDVector::zeros(n_bar);
                    row[k] = rho_k;
                    row
                }
            };
            let g_row = if chain_tops.contains(&k) {
                RowDVector::from_element(m, rho_k)
            } else {
                RowDVector::zeros(m)
            };
            Channel { c, k_row, g_row }
        })
        .collect();
    LinearizedUncertainModel {
        a,
        b,
        rho: rho.to_vec(),
        channels,
        r: r.to_vec(),
        chain_tops,
    }
}
