//! Lie-derivative machinery: relative degree, decoupling matrix, the exact
//! feedback-linearizing law, the tracking diffeomorphism, and the Brunovsky
//! canonical pair.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{sub, Bindings, CompiledExpr, Expr, Symbol};
use crate::model::{SplitSystem, UncertainSystem};

/// Lie derivative of a scalar along a vector field: `L_f h = dh/dx . f`.
pub fn lie_derivative(h: &Expr, field: &[Expr], states: &[Symbol]) -> Expr {
    let mut acc = Expr::zero();
    for (s, f) in states.iter().zip(field) {
        let dh = h.diff(s);
        if dh.is_zero() || f.is_zero() {
            continue;
        }
        acc = crate::expr::add(acc, crate::expr::mul(dh, f.clone()));
    }
    acc.simplify()
}

/// Per-output chains of nominal Lie derivatives together with the
/// decoupling matrix entries.
#[derive(Clone, Debug)]
pub struct LieChain {
    /// `chains[i][j] = L_{f0}^j nu_i`, `j = 0..=r_i`.
    pub chains: Vec<Vec<Expr>>,
    /// `decoupling[i][k] = L_{g_k0} L_{f0}^{r_i - 1} nu_i`.
    pub decoupling: Vec<Vec<Expr>>,
    pub r: Vec<usize>,
}

/// Compute the vector relative degree and build the Lie chains.
///
/// An input "appears" in the j-th derivative of output i when some
/// decoupling entry is nonzero at the trim point and at a handful of
/// random points in a small ball around it (a single-point test can hit
/// an accidental zero). Fails when some output never sees an input within
/// `n` differentiations or when the total degree is not full.
pub fn relative_degree(sys: &UncertainSystem, split: &SplitSystem) -> Result<LieChain> {
    let n = sys.n_states();
    let m = sys.n_inputs();
    let probes = probe_points(sys, 8, 0x5eed);

    let mut chains = Vec::with_capacity(m);
    let mut decoupling = Vec::with_capacity(m);
    let mut r = Vec::with_capacity(m);

    for (i, output) in sys.outputs.iter().enumerate() {
        let mut chain = vec![output.simplify()];
        let mut found = None;
        for j in 1..=n {
            let prev = chain.last().unwrap();
            let row: Vec<Expr> = split
                .inputs0
                .iter()
                .map(|gk| lie_derivative(prev, gk, &sys.states))
                .collect();
            if row_is_nonzero(&row, &probes)? {
                found = Some((j, row));
                break;
            }
            chain.push(lie_derivative(prev, &split.drift0, &sys.states));
        }
        let (ri, row) = found.ok_or_else(|| {
            Error::Degree(format!(
                "relative degree of output {} undefined within {n} differentiations",
                i + 1
            ))
        })?;
        // Top of the chain: L_{f0}^{r_i} nu_i.
        let prev = chain.last().unwrap();
        chain.push(lie_derivative(prev, &split.drift0, &sys.states));
        chains.push(chain);
        decoupling.push(row);
        r.push(ri);
    }

    let total: usize = r.iter().sum();
    if total != n {
        return Err(Error::Degree(format!(
            "system does not have full relative degree: sum r_i = {total} but n = {n} \
             (zero dynamics present)"
        )));
    }
    Ok(LieChain { chains, decoupling, r })
}

fn probe_points(sys: &UncertainSystem, count: usize, seed: u64) -> Vec<Bindings> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![sys.trim_bindings()];
    for _ in 0..count {
        let mut b = sys.trim_bindings();
        for (s, v) in sys.states.iter().zip(&sys.x0) {
            let scale = 1e-3 * (1.0 + v.abs());
            b.insert(s.clone(), v + rng.gen_range(-scale..=scale));
        }
        pts.push(b);
    }
    pts
}

fn row_is_nonzero(row: &[Expr], probes: &[Bindings]) -> Result<bool> {
    for b in probes {
        let vals: Vec<f64> = row.iter().map(|e| e.eval(b)).collect::<Result<_>>()?;
        let norm = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let tol = 1e-9 * (1.0 + norm);
        if vals.iter().any(|v| v.abs() > tol && v.abs() > 1e-12) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Evaluate the decoupling matrix at the trim point and check invertibility.
/// Returns the matrix and its condition number.
pub fn decoupling_at_trim(sys: &UncertainSystem, chain: &LieChain) -> Result<(DMatrix<f64>, f64)> {
    let b = sys.trim_bindings();
    let m = sys.n_inputs();
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for k in 0..m {
            g[(i, k)] = chain.decoupling[i][k].eval(&b)?;
        }
    }
    let svd = g.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::Degree(format!(
            "decoupling matrix numerically singular at trim (condition {cond:.3e})"
        )));
    }
    Ok((g, cond))
}

/// The exact feedback-linearizing law `u = g*(x)^{-1} (v - f*(x))`, closed
/// over nominal parameters only.
pub struct FeedbackLaw {
    pub f_star: Vec<Expr>,
    /// Row i, column k.
    pub g_star: Vec<Vec<Expr>>,
    f_star_c: Vec<CompiledExpr>,
    g_star_c: Vec<Vec<CompiledExpr>>,
    m: usize,
}

impl FeedbackLaw {
    pub fn new(sys: &UncertainSystem, chain: &LieChain) -> Result<Self> {
        let m = sys.n_inputs();
        let f_star: Vec<Expr> = chain
            .chains
            .iter()
            .map(|c| c.last().unwrap().clone())
            .collect();
        let g_star = chain.decoupling.clone();
        let f_star_c = f_star
            .iter()
            .map(|e| e.compile(&sys.states))
            .collect::<Result<_>>()?;
        let g_star_c = g_star
            .iter()
            .map(|row| row.iter().map(|e| e.compile(&sys.states)).collect())
            .collect::<Result<_>>()?;
        Ok(FeedbackLaw { f_star, g_star, f_star_c, g_star_c, m })
    }

    /// Evaluate `f*` and `g*` at a state vector.
    pub fn eval_parts(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let f = DVector::from_iterator(self.m, self.f_star_c.iter().map(|c| c.eval(x)));
        let g = DMatrix::from_fn(self.m, self.m, |i, k| self.g_star_c[i][k].eval(x));
        (f, g)
    }

    /// Apply the law: solve `g*(x) u = v - f*(x)`.
    pub fn control(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let (f, g) = self.eval_parts(x);
        let rhs = DVector::from_row_slice(v) - f;
        let lu = g.lu();
        match lu.solve(&rhs) {
            Some(u) if u.iter().all(|c| c.is_finite()) => Ok(u.as_slice().to_vec()),
            _ => Err(Error::Sim(format!(
                "decoupling matrix singular along trajectory at x = {x:?}"
            ))),
        }
    }
}

/// One component of the transformed state.
#[derive(Clone, Debug)]
pub enum ChiComponent {
    /// Tracking-error integral for an output; realized as an extra
    /// simulator state, not a function of x.
    Integral { output: usize },
    /// A function of the plant state (and the reference symbol).
    Func(Expr),
}

/// The nominal tracking diffeomorphism: per output,
/// `[int(y - yc), y - yc, y^(1), ..., y^(r-1)]`.
#[derive(Clone, Debug)]
pub struct Diffeomorphism {
    pub components: Vec<ChiComponent>,
    /// Reference command symbol per output.
    pub ref_syms: Vec<Symbol>,
    pub r: Vec<usize>,
    /// Indices of the integral components within chi.
    pub integral_idx: Vec<usize>,
}

impl Diffeomorphism {
    pub fn new(_sys: &UncertainSystem, chain: &LieChain) -> Self {
        let mut components = Vec::new();
        let mut ref_syms = Vec::new();
        let mut integral_idx = Vec::new();
        for (i, c) in chain.chains.iter().enumerate() {
            let yc = Symbol::reference(format!("yc{}", i + 1));
            integral_idx.push(components.len());
            components.push(ChiComponent::Integral { output: i });
            components.push(ChiComponent::Func(
                sub(c[0].clone(), Expr::sym(yc.clone())).simplify(),
            ));
            for expr in c.iter().take(chain.r[i]).skip(1) {
                components.push(ChiComponent::Func(expr.clone()));
            }
            ref_syms.push(yc);
        }
        Diffeomorphism {
            components,
            ref_syms,
            r: chain.r.clone(),
            integral_idx,
        }
    }

    /// Total transformed dimension, `n + m`.
    pub fn n_bar(&self) -> usize {
        self.components.len()
    }

    /// The non-integral component expressions, in chi order.
    pub fn nonintegral_exprs(&self) -> Vec<&Expr> {
        self.components
            .iter()
            .filter_map(|c| match c {
                ChiComponent::Func(e) => Some(e),
                ChiComponent::Integral { .. } => None,
            })
            .collect()
    }

    /// Evaluate chi from a state binding (which must bind the reference
    /// symbols) and the current integral states.
    pub fn chi(&self, b: &Bindings, integrals: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.components.len());
        for c in &self.components {
            match c {
                ChiComponent::Integral { output } => out.push(integrals[*output]),
                ChiComponent::Func(e) => out.push(e.eval(b)?),
            }
        }
        Ok(out)
    }
}

/// Brunovsky canonical pair for chain lengths `r_i + 1` (each chain is
/// augmented with one tracking-error integrator).
pub fn brunovsky(r: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n_bar: usize = r.iter().map(|ri| ri + 1).sum();
    let m = r.len();
    let mut a = DMatrix::zeros(n_bar, n_bar);
    let mut b = DMatrix::zeros(n_bar, m);
    let mut off = 0;
    for (i, ri) in r.iter().enumerate() {
        let len = ri + 1;
        for j in 0..len - 1 {
            a[(off + j, off + j + 1)] = 1.0;
        }
        b[(off + len - 1, i)] = 1.0;
        off += len;
    }
    (a, b)
}

/// Rank of the controllability matrix `[B AB ... A^{n-1}B]`.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut cur = b.clone();
    for _ in 0..n {
        blocks.push(cur.clone());
        cur = a * cur;
    }
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    for (j, blk) in blocks.iter().enumerate() {
        ctrb.view_mut((0, j * m), (n, m)).copy_from(blk);
    }
    ctrb.rank(1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{add, SymClass};
    use crate::systems::{double_integrator, pendulum};

    #[test]
    fn double_integrator_relative_degree() {
        let sys = double_integrator();
        let split = sys.split();
        let chain = relative_degree(&sys, &split).unwrap();
        assert_eq!(chain.r, vec![2]);
        let (g, _cond) = decoupling_at_trim(&sys, &chain).unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pendulum_decoupling_and_law() {
        let sys = pendulum(1.5, 0.3);
        let split = sys.split();
        let chain = relative_degree(&sys, &split).unwrap();
        assert_eq!(chain.r, vec![2]);
        let (g, _) = decoupling_at_trim(&sys, &chain).unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-12);
        // u = a0 sin(x1) + v
        let law = FeedbackLaw::new(&sys, &chain).unwrap();
        let x = [0.4, -0.2];
        let v = [0.7];
        let u = law.control(&x, &v).unwrap();
        let expected = 1.5 * x[0].sin() + v[0];
        assert!((u[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_dynamics_detected() {
        // x1dot = x2, x2dot = u, x3dot = -x3; y = x1 -> sum r = 2 < 3.
        let x1 = Symbol::state("x1");
        let x2 = Symbol::state("x2");
        let x3 = Symbol::state("x3");
        let u = Symbol::input("u");
        let sys = UncertainSystem::new(
            vec![x1.clone(), x2.clone(), x3.clone()],
            vec![u],
            vec![],
            vec![Expr::sym(x2), Expr::zero(), Expr::sym(x3).neg()],
            vec![vec![Expr::zero(), Expr::one(), Expr::zero()]],
            vec![Expr::sym(x1)],
            vec![0.0, 0.0, 0.0],
            vec![0.0],
        )
        .unwrap();
        let split = sys.split();
        let err = relative_degree(&sys, &split).unwrap_err();
        assert!(err.to_string().contains("full relative degree"));
    }

    #[test]
    fn two_decoupled_chains_give_diagonal_g_star() {
        let x1 = Symbol::state("x1");
        let x2 = Symbol::state("x2");
        let u1 = Symbol::input("u1");
        let u2 = Symbol::input("u2");
        let sys = UncertainSystem::new(
            vec![x1.clone(), x2.clone()],
            vec![u1, u2],
            vec![],
            vec![Expr::zero(), Expr::zero()],
            vec![
                vec![Expr::constant(2.0), Expr::zero()],
                vec![Expr::zero(), Expr::constant(3.0)],
            ],
            vec![Expr::sym(x1), Expr::sym(x2)],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let split = sys.split();
        let chain = relative_degree(&sys, &split).unwrap();
        assert_eq!(chain.r, vec![1, 1]);
        let (g, _) = decoupling_at_trim(&sys, &chain).unwrap();
        assert_eq!(g[(0, 0)], 2.0);
        assert_eq!(g[(1, 1)], 3.0);
        assert_eq!(g[(0, 1)], 0.0);
    }

    #[test]
    fn diffeomorphism_layout_double_integrator() {
        let sys = double_integrator();
        let split = sys.split();
        let chain = relative_degree(&sys, &split).unwrap();
        let t = Diffeomorphism::new(&sys, &chain);
        assert_eq!(t.n_bar(), 3);
        assert!(matches!(t.components[0], ChiComponent::Integral { output: 0 }));
        // At the commanded trim all non-integral components vanish.
        let mut b = sys.trim_bindings();
        b.insert(t.ref_syms[0].clone(), 0.0);
        let chi = t.chi(&b, &[0.0]).unwrap();
        assert!(chi.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn brunovsky_single_chain() {
        let (a, b) = brunovsky(&[2]);
        let expect_a =
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(a, expect_a);
        assert_eq!(b, DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]));
        assert_eq!(controllability_rank(&a, &b), 3);
    }

    #[test]
    fn brunovsky_is_controllable_for_mixed_chains() {
        for r in [vec![1], vec![3, 4], vec![2, 2, 1]] {
            let (a, b) = brunovsky(&r);
            let n_bar: usize = r.iter().map(|x| x + 1).sum();
            assert_eq!(a.nrows(), n_bar);
            assert_eq!(controllability_rank(&a, &b), n_bar);
        }
    }

    #[test]
    fn ref_symbols_have_reference_class() {
        let sys = double_integrator();
        let split = sys.split();
        let chain = relative_degree(&sys, &split).unwrap();
        let t = Diffeomorphism::new(&sys, &chain);
        assert_eq!(t.ref_syms[0].class, SymClass::Reference);
        let _ = add(Expr::zero(), Expr::zero()); // keep import used
    }
}
