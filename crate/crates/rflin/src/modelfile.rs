//! TOML model files: plant declaration, operating box, weights, reference
//! schedules, and solver settings, in one human-editable document.
//!
//! Dynamics are written as one expression per state in state, input, and
//! parameter symbols; the loader extracts the control-affine structure
//! (`f` from `u = 0`, `g_k` by differentiation) and verifies affineness
//! numerically at random points.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::{parse, Bindings, Expr, SymClass, Symbol, SymbolTable};
use crate::model::{OperatingBox, ParameterSpec, UncertainSystem};
use crate::sim::StepSchedule;
use crate::uncertainty::KRowConvention;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRoot {
    format: u32,
    name: String,
    dynamics: Vec<String>,
    outputs: Vec<String>,
    states: Vec<StateDecl>,
    inputs: Vec<StateDecl>,
    #[serde(default)]
    parameters: Vec<ParamDecl>,
    #[serde(rename = "box")]
    box_: BoxDecl,
    weights: WeightsDecl,
    #[serde(default)]
    references: Vec<RefDecl>,
    #[serde(default)]
    solver: SolverDecl,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDecl {
    name: String,
    trim: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamDecl {
    name: String,
    nominal: Option<f64>,
    #[serde(default)]
    bound: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxDecl {
    chi_lo: Vec<f64>,
    chi_hi: Vec<f64>,
    v_lo: Vec<f64>,
    v_hi: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsDecl {
    /// Diagonal of Q (length n + m) or a full row-major matrix.
    q: Option<Vec<f64>>,
    q_full: Option<Vec<Vec<f64>>>,
    /// Diagonal of R (length m) or a full row-major matrix.
    r: Option<Vec<f64>>,
    r_full: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RefDecl {
    times: Vec<f64>,
    values: Vec<f64>,
}

/// Solver settings with documented defaults; all knobs used by the
/// pipeline stages live here so a run is reproducible from the file alone.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub seed: u64,
    pub grid_per_axis: usize,
    pub max_grid: usize,
    pub lhs_samples: usize,
    pub nm_starts: usize,
    pub nm_iters: usize,
    pub safety: f64,
    /// "dense" (default) or "sparse" K-row convention.
    pub k_row: String,
    /// Scale of the IQC relaxation matrices D_j = d_scale * I.
    pub d_scale: f64,
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub t_final: f64,
    pub dt: f64,
    pub mvt_samples: usize,
}

type SolverDecl = SolverSettings;

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            seed: 1,
            grid_per_axis: 5,
            max_grid: 100_000,
            lhs_samples: 20_000,
            nm_starts: 10,
            nm_iters: 200,
            safety: 1.1,
            k_row: "dense".into(),
            d_scale: 0.01,
            tau_lo: 1e-3,
            tau_hi: 1e6,
            t_final: 30.0,
            dt: 1e-3,
            mvt_samples: 10_000,
        }
    }
}

impl SolverSettings {
    pub fn k_row_convention(&self) -> Result<KRowConvention> {
        match self.k_row.as_str() {
            "dense" => Ok(KRowConvention::Dense),
            "sparse" => Ok(KRowConvention::Sparse),
            other => Err(Error::Model(format!(
                "solver.k_row must be \"dense\" or \"sparse\", got \"{other}\""
            ))),
        }
    }
}

/// Everything a pipeline run needs, loaded and validated.
#[derive(Debug)]
pub struct LoadedModel {
    pub name: String,
    pub sys: UncertainSystem,
    pub box_: OperatingBox,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub references: Vec<StepSchedule>,
    pub solver: SolverSettings,
    /// Non-fatal findings (trim residual above tolerance, etc.).
    pub warnings: Vec<String>,
}

fn weight_matrix(
    diag: &Option<Vec<f64>>,
    full: &Option<Vec<Vec<f64>>>,
    dim: usize,
    label: &str,
) -> Result<DMatrix<f64>> {
    match (diag, full) {
        (Some(d), None) => {
            if d.len() != dim {
                return Err(Error::Model(format!(
                    "{label} diagonal must have {dim} entries, got {}",
                    d.len()
                )));
            }
            Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(d)))
        }
        (None, Some(rows)) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(Error::Model(format!("{label} full matrix must be {dim}x{dim}")));
            }
            let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
            Ok(DMatrix::from_row_slice(dim, dim, &flat))
        }
        (Some(_), Some(_)) => {
            Err(Error::Model(format!("give either {label} diagonal or full, not both")))
        }
        (None, None) => Err(Error::Model(format!("missing weight matrix {label}"))),
    }
}

/// Parse and validate a model file.
pub fn load(path: &Path) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)?;
    load_str(&text)
}

pub fn load_str(text: &str) -> Result<LoadedModel> {
    let root: FileRoot = toml::from_str(text)
        .map_err(|e| Error::Model(format!("model file: {e}")))?;
    if root.format != 1 {
        return Err(Error::Model(format!("unsupported model file format {}", root.format)));
    }

    let mut table = SymbolTable::new();
    let mut states = Vec::new();
    let mut x0 = Vec::new();
    for s in &root.states {
        let sym = Symbol::state(s.name.clone());
        table.declare(sym.clone())?;
        states.push(sym);
        x0.push(s.trim);
    }
    let mut inputs = Vec::new();
    let mut u0 = Vec::new();
    for s in &root.inputs {
        let sym = Symbol::input(s.name.clone());
        table.declare(sym.clone())?;
        inputs.push(sym);
        u0.push(s.trim);
    }
    let mut params = Vec::new();
    for p in &root.parameters {
        let nominal = p.nominal.ok_or_else(|| {
            Error::Model(format!("parameter value missing: {}", p.name))
        })?;
        let spec = ParameterSpec::new(p.name.clone(), nominal, p.bound)?;
        table.declare(spec.symbol())?;
        params.push(spec);
    }

    let n = states.len();
    let m = inputs.len();
    if root.dynamics.len() != n {
        return Err(Error::Model(format!(
            "{} dynamics rows for {} states",
            root.dynamics.len(),
            n
        )));
    }
    if root.outputs.len() != m {
        return Err(Error::Model(format!(
            "system not square: {} outputs vs {} inputs",
            root.outputs.len(),
            m
        )));
    }

    let dynamics: Vec<Expr> = root
        .dynamics
        .iter()
        .map(|s| parse(s, &table))
        .collect::<Result<_>>()?;
    let outputs: Vec<Expr> = root
        .outputs
        .iter()
        .map(|s| parse(s, &table))
        .collect::<Result<_>>()?;

    // Control-affine extraction: f from u = 0, g_k by differentiation.
    let mut zero_inputs = HashMap::new();
    for i in &inputs {
        zero_inputs.insert(i.clone(), Expr::zero());
    }
    let drift: Vec<Expr> = dynamics
        .iter()
        .map(|e| e.substitute(&zero_inputs).simplify())
        .collect();
    let mut input_fields: Vec<Vec<Expr>> = Vec::with_capacity(m);
    for u_sym in &inputs {
        let col: Vec<Expr> = dynamics.iter().map(|e| e.diff(u_sym)).collect();
        for (i, g) in col.iter().enumerate() {
            if g.symbols().iter().any(|s| s.class == SymClass::Input) {
                return Err(Error::Model(format!(
                    "dynamics row {} is not affine in input {}",
                    i + 1,
                    u_sym.name
                )));
            }
        }
        input_fields.push(col);
    }
    verify_affine(&dynamics, &drift, &input_fields, &states, &inputs, &params, &x0)?;

    let sys = UncertainSystem::new(
        states, inputs, params, drift, input_fields, outputs, x0, u0,
    )?;

    let n_bar = n + m;
    let box_ = OperatingBox::new(
        root.box_.chi_lo.clone(),
        root.box_.chi_hi.clone(),
        root.box_.v_lo.clone(),
        root.box_.v_hi.clone(),
    )?;
    if box_.chi_dim() != n_bar || box_.v_dim() != m {
        return Err(Error::Model(format!(
            "operating box must cover {n_bar} transformed states and {m} inputs, got {} and {}",
            box_.chi_dim(),
            box_.v_dim()
        )));
    }

    let q = weight_matrix(&root.weights.q, &root.weights.q_full, n_bar, "Q")?;
    let r = weight_matrix(&root.weights.r, &root.weights.r_full, m, "R")?;

    let mut references = Vec::with_capacity(m);
    if root.references.is_empty() {
        // Default: hold the trim outputs.
        let trim = sys.trim_bindings();
        for out in &sys.outputs {
            references.push(StepSchedule::constant(out.eval(&trim)?));
        }
    } else {
        if root.references.len() != m {
            return Err(Error::Model(format!(
                "need {m} reference schedules, got {}",
                root.references.len()
            )));
        }
        for rd in &root.references {
            references.push(StepSchedule::new(rd.times.clone(), rd.values.clone())?);
        }
    }

    let mut warnings = Vec::new();
    let residual = sys.trim_residual()?;
    if residual > sys.trim_residual_tolerance() {
        warnings.push(format!(
            "trim residual {:.3e} above tolerance {:.3e} (rounded trim table?)",
            residual,
            sys.trim_residual_tolerance()
        ));
    }
    root.solver.k_row_convention()?; // validate early

    Ok(LoadedModel {
        name: root.name,
        sys,
        box_,
        q,
        r,
        references,
        solver: root.solver,
        warnings,
    })
}

/// Numeric affineness check: dynamics = f + sum g_k u_k at random points.
fn verify_affine(
    dynamics: &[Expr],
    drift: &[Expr],
    input_fields: &[Vec<Expr>],
    states: &[Symbol],
    inputs: &[Symbol],
    params: &[ParameterSpec],
    x0: &[f64],
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xaff1_e);
    for _ in 0..20 {
        let mut b = Bindings::new();
        for (s, v0) in states.iter().zip(x0) {
            b.insert(s.clone(), v0 + rng.gen_range(-1.0..=1.0) * (1.0 + v0.abs()) * 0.1);
        }
        let u_vals: Vec<f64> = inputs
            .iter()
            .map(|s| {
                let v = rng.gen_range(-1.0..=1.0);
                b.insert(s.clone(), v);
                v
            })
            .collect();
        for p in params {
            b.insert(p.symbol(), p.nominal + rng.gen_range(-1.0..=1.0) * p.half_width);
        }
        for (i, dyn_i) in dynamics.iter().enumerate() {
            let lhs = dyn_i.eval(&b)?;
            let mut rhs = drift[i].eval(&b)?;
            for (k, uk) in u_vals.iter().enumerate() {
                rhs += input_fields[k][i].eval(&b)? * uk;
            }
            if !lhs.is_finite() || (lhs - rhs).abs() > 1e-8 * (1.0 + lhs.abs()) {
                return Err(Error::Model(format!(
                    "dynamics row {} is not control-affine (residual {:.3e})",
                    i + 1,
                    (lhs - rhs).abs()
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PENDULUM: &str = r#"
format = 1
name = "pendulum"
dynamics = ["x2", "-a*sin(x1) + u"]
outputs = ["x1"]

[[states]]
name = "x1"
trim = 0.0

[[states]]
name = "x2"
trim = 0.0

[[inputs]]
name = "u"
trim = 0.0

[[parameters]]
name = "a"
nominal = 1.0
bound = 0.2

[box]
chi_lo = [-1.0, -1.0, -1.0]
chi_hi = [1.0, 1.0, 1.0]
v_lo = [-2.0]
v_hi = [2.0]

[weights]
q = [1.0, 1.0, 1.0]
r = [1.0]
"#;

    #[test]
    fn pendulum_file_loads() {
        let lm = load_str(PENDULUM).unwrap();
        assert_eq!(lm.name, "pendulum");
        assert_eq!(lm.sys.n_states(), 2);
        assert_eq!(lm.sys.params.len(), 1);
        assert!(lm.warnings.is_empty());
        // Extraction: drift row 2 = -a sin(x1), g = [0, 1].
        let b = lm.sys.trim_bindings();
        assert_eq!(lm.sys.input_fields[0][1].eval(&b).unwrap(), 1.0);
        assert_eq!(lm.sys.input_fields[0][0].eval(&b).unwrap(), 0.0);
        // Default reference holds the trim output.
        assert_eq!(lm.references.len(), 1);
        assert_eq!(lm.references[0].value_at(5.0), 0.0);
    }

    #[test]
    fn missing_parameter_value() {
        let text = PENDULUM.replace("nominal = 1.0\n", "");
        let err = load_str(&text).unwrap_err();
        assert!(err.to_string().contains("parameter value missing: a"), "{err}");
    }

    #[test]
    fn non_square_rejected() {
        let text = PENDULUM.replace(r#"outputs = ["x1"]"#, r#"outputs = ["x1", "x2"]"#);
        let err = load_str(&text).unwrap_err();
        assert!(err.to_string().contains("not square"), "{err}");
    }

    #[test]
    fn non_affine_rejected() {
        let text = PENDULUM.replace("-a*sin(x1) + u", "-a*sin(x1) + u^2");
        let err = load_str(&text).unwrap_err();
        assert!(err.to_string().contains("affine"), "{err}");
    }

    #[test]
    fn bad_box_dimension_rejected() {
        let text = PENDULUM.replace("v_lo = [-2.0]", "v_lo = [-2.0, -2.0]");
        assert!(load_str(&text).is_err());
    }

    #[test]
    fn exit_code_is_parse_class() {
        let err = load_str("format = 1").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
