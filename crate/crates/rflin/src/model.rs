//! The uncertain plant: drift and input vector fields over state and
//! parameter symbols, the admissible parameter box, and the operating
//! hyper-rectangle in transformed coordinates.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{sub, Bindings, Expr, SymClass, Symbol};

/// An uncertain scalar parameter: nominal value and half-width of its
/// admissible interval `[nominal - bound, nominal + bound]`.
#[derive(Clone, Debug)]
pub struct ParameterSpec {
    pub name: String,
    pub nominal: f64,
    pub half_width: f64,
}

impl ParameterSpec {
    pub fn new(name: impl Into<String>, nominal: f64, half_width: f64) -> Result<Self> {
        if half_width < 0.0 {
            return Err(Error::Model(format!(
                "parameter half-width must be nonnegative, got {half_width}"
            )));
        }
        Ok(ParameterSpec { name: name.into(), nominal, half_width })
    }

    pub fn symbol(&self) -> Symbol {
        Symbol::parameter(self.name.clone())
    }

    pub fn is_uncertain(&self) -> bool {
        self.half_width > 0.0
    }
}

/// A square MIMO uncertain plant
/// `xdot = f(x,p) + sum_k g_k(x,p) u_k`, `y_i = nu_i(x)`,
/// with a declared trim point.
#[derive(Clone, Debug)]
pub struct UncertainSystem {
    pub states: Vec<Symbol>,
    pub inputs: Vec<Symbol>,
    pub params: Vec<ParameterSpec>,
    /// Drift field, one expression per state, in state and parameter symbols.
    pub drift: Vec<Expr>,
    /// Input fields: `input_fields[k][i]` is the i-th state component of g_k.
    pub input_fields: Vec<Vec<Expr>>,
    /// Regulated outputs, state symbols only.
    pub outputs: Vec<Expr>,
    pub x0: Vec<f64>,
    pub u0: Vec<f64>,
}

impl UncertainSystem {
    pub fn new(
        states: Vec<Symbol>,
        inputs: Vec<Symbol>,
        params: Vec<ParameterSpec>,
        drift: Vec<Expr>,
        input_fields: Vec<Vec<Expr>>,
        outputs: Vec<Expr>,
        x0: Vec<f64>,
        u0: Vec<f64>,
    ) -> Result<Self> {
        let n = states.len();
        let m = inputs.len();
        if outputs.len() != m {
            return Err(Error::Model(format!(
                "system not square: {} outputs vs {} inputs",
                outputs.len(),
                m
            )));
        }
        if drift.len() != n {
            return Err(Error::Model(format!(
                "drift has {} rows for {} states",
                drift.len(),
                n
            )));
        }
        if input_fields.len() != m || input_fields.iter().any(|c| c.len() != n) {
            return Err(Error::Model("input field dimensions inconsistent".into()));
        }
        if x0.len() != n || u0.len() != m {
            return Err(Error::Model("trim point dimensions inconsistent".into()));
        }
        let sys = UncertainSystem {
            states,
            inputs,
            params,
            drift,
            input_fields,
            outputs,
            x0,
            u0,
        };
        sys.validate_symbols()?;
        Ok(sys)
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }
    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    fn validate_symbols(&self) -> Result<()> {
        let mut declared: BTreeSet<Symbol> = self.states.iter().cloned().collect();
        for p in &self.params {
            declared.insert(p.symbol());
        }
        for (label, exprs) in [("drift", &self.drift)]
            .into_iter()
            .chain(self.input_fields.iter().enumerate().map(|(_, c)| ("input field", c)))
        {
            for e in exprs.iter() {
                for s in e.symbols() {
                    if !declared.contains(&s) {
                        return Err(Error::Model(format!(
                            "undeclared {} symbol `{}` in {label} expression",
                            s.class, s.name
                        )));
                    }
                }
            }
        }
        for e in &self.outputs {
            for s in e.symbols() {
                if s.class != SymClass::State {
                    return Err(Error::Model(format!(
                        "output depends on non-state symbol `{}` ({})",
                        s.name, s.class
                    )));
                }
                if !declared.contains(&s) {
                    return Err(Error::Model(format!(
                        "undeclared state `{}` in output expression",
                        s.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Bindings for the trim state/input with parameters at nominal.
    pub fn trim_bindings(&self) -> Bindings {
        let mut b = Bindings::new();
        for (s, v) in self.states.iter().zip(&self.x0) {
            b.insert(s.clone(), *v);
        }
        for (s, v) in self.inputs.iter().zip(&self.u0) {
            b.insert(s.clone(), *v);
        }
        for p in &self.params {
            b.insert(p.symbol(), p.nominal);
        }
        b
    }

    /// Infinity norm of the nominal drift at the trim state. The Theorem-2
    /// hypothesis wants this to be zero; published trim tables are rounded,
    /// so callers treat a small residual as a warning rather than an error.
    pub fn trim_residual(&self) -> Result<f64> {
        let b = self.trim_bindings();
        let mut r: f64 = 0.0;
        for e in &self.drift {
            r = r.max(e.eval(&b)?.abs());
        }
        Ok(r)
    }

    pub fn trim_residual_tolerance(&self) -> f64 {
        let x_inf = self.x0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        1e-6 * (1.0 + x_inf)
    }

    /// Uncertain parameters only (positive half-width).
    pub fn uncertain_params(&self) -> Vec<&ParameterSpec> {
        self.params.iter().filter(|p| p.is_uncertain()).collect()
    }

    /// Split each field into its nominal part (parameters pinned at nominal)
    /// and an uncertain variant in which each uncertain parameter `p` is
    /// replaced by `p0 + dp` with `dp` a fresh deviation symbol. Parameters
    /// with zero half-width are pinned at their nominal value in both parts.
    pub fn split(&self) -> SplitSystem {
        let mut nominal_map = HashMap::new();
        let mut uncertain_map = HashMap::new();
        let mut delta_syms = Vec::new();
        let mut delta_params = Vec::new();
        for p in &self.params {
            let sym = p.symbol();
            nominal_map.insert(sym.clone(), Expr::constant(p.nominal));
            if p.is_uncertain() {
                let delta = Symbol::parameter(format!("\u{0394}{}", p.name));
                uncertain_map.insert(
                    sym,
                    crate::expr::add(Expr::constant(p.nominal), Expr::sym(delta.clone())),
                );
                delta_syms.push(delta);
                delta_params.push(p.clone());
            } else {
                uncertain_map.insert(sym, Expr::constant(p.nominal));
            }
        }
        let subst = |exprs: &[Expr], map: &HashMap<Symbol, Expr>| -> Vec<Expr> {
            exprs.iter().map(|e| e.substitute(map).simplify()).collect()
        };
        let drift0 = subst(&self.drift, &nominal_map);
        let drift_u = subst(&self.drift, &uncertain_map);
        let inputs0: Vec<Vec<Expr>> =
            self.input_fields.iter().map(|c| subst(c, &nominal_map)).collect();
        let inputs_u: Vec<Vec<Expr>> =
            self.input_fields.iter().map(|c| subst(c, &uncertain_map)).collect();
        let delta_drift: Vec<Expr> = drift_u
            .iter()
            .zip(&drift0)
            .map(|(u, n)| sub(u.clone(), n.clone()).simplify())
            .collect();
        let delta_inputs: Vec<Vec<Expr>> = inputs_u
            .iter()
            .zip(&inputs0)
            .map(|(cu, cn)| {
                cu.iter()
                    .zip(cn)
                    .map(|(u, n)| sub(u.clone(), n.clone()).simplify())
                    .collect()
            })
            .collect();
        SplitSystem {
            drift0,
            drift_u,
            inputs0,
            inputs_u,
            delta_drift,
            delta_inputs,
            delta_syms,
            delta_params,
        }
    }
}

/// Result of the nominal/uncertain split. Deviation symbols are aligned
/// with the parameter list; setting all of them to zero collapses the
/// uncertain fields onto the nominal ones.
#[derive(Clone, Debug)]
pub struct SplitSystem {
    pub drift0: Vec<Expr>,
    pub drift_u: Vec<Expr>,
    pub inputs0: Vec<Vec<Expr>>,
    pub inputs_u: Vec<Vec<Expr>>,
    pub delta_drift: Vec<Expr>,
    pub delta_inputs: Vec<Vec<Expr>>,
    /// Deviation symbols, aligned with `delta_params`.
    pub delta_syms: Vec<Symbol>,
    /// The uncertain parameters, in declaration order.
    pub delta_params: Vec<ParameterSpec>,
}

/// Axis-aligned operating region for the transformed state and new input.
#[derive(Clone, Debug)]
pub struct OperatingBox {
    pub chi_lo: Vec<f64>,
    pub chi_hi: Vec<f64>,
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
}

impl OperatingBox {
    pub fn new(
        chi_lo: Vec<f64>,
        chi_hi: Vec<f64>,
        v_lo: Vec<f64>,
        v_hi: Vec<f64>,
    ) -> Result<Self> {
        if chi_lo.len() != chi_hi.len() || v_lo.len() != v_hi.len() {
            return Err(Error::Model("operating box dimensions inconsistent".into()));
        }
        let pairs = chi_lo.iter().zip(&chi_hi).chain(v_lo.iter().zip(&v_hi));
        for (lo, hi) in pairs {
            if lo > hi {
                return Err(Error::Model(format!(
                    "operating box has lower bound {lo} above upper bound {hi}"
                )));
            }
            if *lo > 0.0 || *hi < 0.0 {
                return Err(Error::Model(
                    "operating box must contain the origin (the commanded condition)".into(),
                ));
            }
        }
        Ok(OperatingBox { chi_lo, chi_hi, v_lo, v_hi })
    }

    pub fn chi_dim(&self) -> usize {
        self.chi_lo.len()
    }
    pub fn v_dim(&self) -> usize {
        self.v_lo.len()
    }
}

/// Sampling scheme over the operating box crossed with the parameter set.
#[derive(Clone, Copy, Debug)]
pub enum SampleScheme {
    /// Full cartesian grid with `k` points per axis.
    Grid(usize),
    /// `n` uniform random samples from the given seed.
    UniformRandom(usize, u64),
    /// `n` Latin-hypercube samples (one per stratum per axis) from the seed.
    LatinHypercube(usize, u64),
    /// All box vertices plus the center point.
    CornersCenter,
}

/// One sample in the operating region times the parameter set.
#[derive(Clone, Debug)]
pub struct BoxSample {
    pub chi: Vec<f64>,
    pub v: Vec<f64>,
    /// Absolute parameter values (not deviations).
    pub p: Vec<f64>,
}

/// Draw samples of `(chi, v, p)` from the box and the parameter intervals.
pub fn sample_box(
    box_: &OperatingBox,
    params: &[ParameterSpec],
    scheme: SampleScheme,
) -> Result<Vec<BoxSample>> {
    let mut lo: Vec<f64> = box_.chi_lo.clone();
    let mut hi: Vec<f64> = box_.chi_hi.clone();
    lo.extend_from_slice(&box_.v_lo);
    hi.extend_from_slice(&box_.v_hi);
    for p in params {
        lo.push(p.nominal - p.half_width);
        hi.push(p.nominal + p.half_width);
    }
    let d = lo.len();
    let points: Vec<Vec<f64>> = match scheme {
        SampleScheme::Grid(k) => {
            if k == 0 {
                return Err(Error::Model("grid scheme needs at least one point per axis".into()));
            }
            let mut pts = vec![vec![0.0; d]];
            for axis in 0..d {
                let vals: Vec<f64> = if k == 1 {
                    vec![0.5 * (lo[axis] + hi[axis])]
                } else {
                    (0..k)
                        .map(|i| lo[axis] + (hi[axis] - lo[axis]) * i as f64 / (k - 1) as f64)
                        .collect()
                };
                let mut next = Vec::with_capacity(pts.len() * k);
                for pt in &pts {
                    for v in &vals {
                        let mut q = pt.clone();
                        q[axis] = *v;
                        next.push(q);
                    }
                }
                pts = next;
            }
            pts
        }
        SampleScheme::UniformRandom(n, seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| {
                    (0..d)
                        .map(|i| {
                            if lo[i] == hi[i] {
                                lo[i]
                            } else {
                                rng.gen_range(lo[i]..=hi[i])
                            }
                        })
                        .collect()
                })
                .collect()
        }
        SampleScheme::LatinHypercube(n, seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // One stratified draw per axis, then shuffle the strata so the
            // axes are decorrelated.
            let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
            for axis in 0..d {
                let mut col: Vec<f64> = (0..n)
                    .map(|s| {
                        let frac = (s as f64 + rng.gen_range(0.0..1.0)) / n as f64;
                        lo[axis] + (hi[axis] - lo[axis]) * frac
                    })
                    .collect();
                // Fisher-Yates shuffle.
                for i in (1..n).rev() {
                    let j = rng.gen_range(0..=i);
                    col.swap(i, j);
                }
                columns.push(col);
            }
            (0..n)
                .map(|s| (0..d).map(|axis| columns[axis][s]).collect())
                .collect()
        }
        SampleScheme::CornersCenter => {
            if d > 20 {
                return Err(Error::Model(format!(
                    "corners+center is exhaustive over 2^{d} vertices; dimension too large"
                )));
            }
            let mut pts = Vec::with_capacity((1usize << d) + 1);
            for mask in 0..(1usize << d) {
                let pt: Vec<f64> = (0..d)
                    .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
                    .collect();
                pts.push(pt);
            }
            pts.push((0..d).map(|i| 0.5 * (lo[i] + hi[i])).collect());
            pts
        }
    };
    let nc = box_.chi_dim();
    let nv = box_.v_dim();
    Ok(points
        .into_iter()
        .map(|pt| BoxSample {
            chi: pt[..nc].to_vec(),
            v: pt[nc..nc + nv].to_vec(),
            p: pt[nc + nv..].to_vec(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::mul;

    fn linear_param_system() -> UncertainSystem {
        // xdot = p1 * x + u, y = x, with p1 = 2 +/- 0.2
        let x = Symbol::state("x");
        let u = Symbol::input("u");
        let p1 = ParameterSpec::new("p1", 2.0, 0.2).unwrap();
        UncertainSystem::new(
            vec![x.clone()],
            vec![u],
            vec![p1.clone()],
            vec![mul(Expr::sym(p1.symbol()), Expr::sym(x.clone()))],
            vec![vec![Expr::one()]],
            vec![Expr::sym(x)],
            vec![0.0],
            vec![0.0],
        )
        .unwrap()
    }

    #[test]
    fn split_linear_in_parameter() {
        let sys = linear_param_system();
        let split = sys.split();
        // nominal: 2x
        let mut b = Bindings::new();
        b.insert(Symbol::state("x"), 3.0);
        assert_eq!(split.drift0[0].eval(&b).unwrap(), 6.0);
        // delta: dp1 * x
        b.insert(split.delta_syms[0].clone(), 0.1);
        assert!((split.delta_drift[0].eval(&b).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn split_collapses_at_zero_deviation() {
        let sys = linear_param_system();
        let split = sys.split();
        let mut b = Bindings::new();
        for xv in [-2.0, 0.3, 5.0] {
            b.insert(Symbol::state("x"), xv);
            b.insert(split.delta_syms[0].clone(), 0.0);
            assert!(split.delta_drift[0].eval(&b).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn parameter_free_field_has_zero_delta() {
        let x = Symbol::state("x");
        let u = Symbol::input("u");
        let sys = UncertainSystem::new(
            vec![x.clone()],
            vec![u],
            vec![],
            vec![Expr::sym(x.clone()).sin()],
            vec![vec![Expr::one()]],
            vec![Expr::sym(x)],
            vec![0.0],
            vec![0.0],
        )
        .unwrap();
        let split = sys.split();
        assert!(split.delta_drift[0].is_zero());
    }

    #[test]
    fn non_square_system_rejected() {
        let x = Symbol::state("x");
        let u = Symbol::input("u");
        let err = UncertainSystem::new(
            vec![x.clone()],
            vec![u],
            vec![],
            vec![Expr::zero()],
            vec![vec![Expr::one()]],
            vec![Expr::sym(x.clone()), Expr::sym(x)],
            vec![0.0],
            vec![0.0],
        )
        .unwrap_err();
        assert!(err.to_string().contains("not square"));
    }

    #[test]
    fn output_with_input_symbol_rejected() {
        let x = Symbol::state("x");
        let u = Symbol::input("u");
        let err = UncertainSystem::new(
            vec![x],
            vec![u.clone()],
            vec![],
            vec![Expr::zero()],
            vec![vec![Expr::one()]],
            vec![Expr::sym(u)],
            vec![0.0],
            vec![0.0],
        )
        .unwrap_err();
        assert!(err.to_string().contains("non-state"));
    }

    fn unit_box(nc: usize, nv: usize) -> OperatingBox {
        OperatingBox::new(
            vec![-1.0; nc],
            vec![1.0; nc],
            vec![-1.0; nv],
            vec![1.0; nv],
        )
        .unwrap()
    }

    #[test]
    fn grid_samples_one_axis() {
        let b = OperatingBox::new(vec![-1.0], vec![1.0], vec![], vec![]).unwrap();
        let s = sample_box(&b, &[], SampleScheme::Grid(3)).unwrap();
        let xs: Vec<f64> = s.iter().map(|p| p.chi[0]).collect();
        assert_eq!(xs, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn corners_and_center_of_square() {
        let b = OperatingBox::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![], vec![]).unwrap();
        let s = sample_box(&b, &[], SampleScheme::CornersCenter).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[4].chi, vec![0.5, 0.5]);
    }

    #[test]
    fn random_sampling_is_reproducible_and_inside() {
        let b = unit_box(2, 1);
        let p = ParameterSpec::new("a", 1.0, 0.1).unwrap();
        let s1 = sample_box(&b, std::slice::from_ref(&p), SampleScheme::UniformRandom(50, 7)).unwrap();
        let s2 = sample_box(&b, std::slice::from_ref(&p), SampleScheme::UniformRandom(50, 7)).unwrap();
        for (a, bb) in s1.iter().zip(&s2) {
            assert_eq!(a.chi, bb.chi);
            assert_eq!(a.p, bb.p);
            assert!(a.p[0] >= 0.9 && a.p[0] <= 1.1);
            assert!(a.chi.iter().all(|x| x.abs() <= 1.0));
        }
    }

    #[test]
    fn corners_dimension_guard() {
        let b = unit_box(21, 0);
        assert!(sample_box(&b, &[], SampleScheme::CornersCenter).is_err());
    }
}
