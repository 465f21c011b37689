//! Bound-state surgery: remove a bound state, decrease its multiplicity, add
//! a new one, or increase a multiplicity, each by a Gel'fand–Levitan kernel
//! of rank at most `n` whose solution is known in closed form.
//!
//! All four solutions share the shape `𝒜(x,y) = σ Z(x) N(x) Z(y)†` with
//! kernel `G(x,y) = −σ Z(x) Z(y)†`:
//!
//! | kind            | σ  | Z                 | N                        |
//! |-----------------|----|-------------------|--------------------------|
//! | remove/decrease | +1 | `Φ = φ(iκ,·)C`    | `W⁺`, `W = ∫_x^∞ Φ†Φ`    |
//! | add/increase    | −1 | `ξ = φ(iκ,·)C`    | `Ω⁺`, `Ω = Q + ∫_0^x ξ†ξ` |
//!
//! so `N' = σ N Z†Z N`, `Ṽ = V + 2 d/dx 𝒜(x,x)` and
//! `φ̃ = φ − σ Z N (Z†φ' − Z'†φ)/(k² + κ²)`.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::grid;
use crate::jsonfmt::{mat_from_json, mat_to_json};
use crate::matops::{
    self, c, hermitian_part, hermiticity_defect, inv_sqrt_pos, min_eigenvalue, op_norm, projection_basis,
    projection_rank, range_projection, restricted_condition, restricted_inverse, CMat, C64,
};
use crate::potential::{BoundaryCondition, Potential, Problem};
use crate::solver::{jost_matrix, jost_solution, regular_solution, MatrixSolution, SolverConfig};
use crate::spectra::{self, BoundState};

/// Restricted inverses with a worse condition than this are rejected.
const MAX_RESTRICTED_CONDITION: f64 = 1e12;
/// Relative width of the symmetric evaluation around `k = ±iκ`.
const SINGULAR_SHIFT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurgeryKind {
    Remove,
    Decrease,
    Add,
    Increase,
}

impl SurgeryKind {
    pub fn name(self) -> &'static str {
        match self {
            SurgeryKind::Remove => "remove",
            SurgeryKind::Decrease => "decrease",
            SurgeryKind::Add => "add",
            SurgeryKind::Increase => "increase",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "remove" => Ok(SurgeryKind::Remove),
            "decrease" => Ok(SurgeryKind::Decrease),
            "add" => Ok(SurgeryKind::Add),
            "increase" => Ok(SurgeryKind::Increase),
            _ => Err(Error::validation(format!(
                "surgery plan: kind must be remove, decrease, add or increase, got '{s}'"
            ))),
        }
    }

    /// `+1` when a state is taken away, `−1` when one is put in.
    pub fn sigma(self) -> f64 {
        match self {
            SurgeryKind::Remove | SurgeryKind::Decrease => 1.0,
            SurgeryKind::Add | SurgeryKind::Increase => -1.0,
        }
    }
}

impl fmt::Display for SurgeryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What to do and with which data.
#[derive(Debug, Clone, PartialEq)]
pub struct SurgeryPlan {
    pub kind: SurgeryKind,
    pub kappa: f64,
    /// Normalization matrix of the state to add.
    pub c: Option<CMat>,
    /// Sub-projection of `Q` to take out.
    pub q_r: Option<CMat>,
    /// Projection orthogonal to `Q` to put in.
    pub q_i: Option<CMat>,
    /// Gram matrix on `Q_i ℂⁿ` fixing the normalization of the added directions.
    pub g_i: Option<CMat>,
}

impl SurgeryPlan {
    pub fn remove(kappa: f64) -> Self {
        Self { kind: SurgeryKind::Remove, kappa, c: None, q_r: None, q_i: None, g_i: None }
    }

    pub fn decrease(kappa: f64, q_r: CMat) -> Self {
        Self { kind: SurgeryKind::Decrease, kappa, c: None, q_r: Some(q_r), q_i: None, g_i: None }
    }

    pub fn add(kappa: f64, c_new: CMat) -> Self {
        Self { kind: SurgeryKind::Add, kappa, c: Some(c_new), q_r: None, q_i: None, g_i: None }
    }

    pub fn increase(kappa: f64, q_i: CMat, g_i: CMat) -> Self {
        Self { kind: SurgeryKind::Increase, kappa, c: None, q_r: None, q_i: Some(q_i), g_i: Some(g_i) }
    }

    /// Parse `{"kind", "kappa", "C"?, "Q_r"?, "Q_i"?, "G_i"?}` for dimension `n`.
    pub fn from_json(v: &Value, n: usize) -> Result<Self> {
        let kind = SurgeryKind::from_name(
            v["kind"].as_str().ok_or_else(|| Error::validation("surgery plan: missing 'kind'"))?,
        )?;
        let kappa = v["kappa"]
            .as_f64()
            .ok_or_else(|| Error::validation("surgery plan: 'kappa' must be a number"))?;
        let mat = |key: &str| -> Result<Option<CMat>> {
            match v.get(key) {
                None | Some(Value::Null) => Ok(None),
                Some(m) => mat_from_json(m, n, key).map(Some),
            }
        };
        let plan = Self { kind, kappa, c: mat("C")?, q_r: mat("Q_r")?, q_i: mat("Q_i")?, g_i: mat("G_i")? };
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(format!("surgery plan: kind '{kind}' needs {what}")))
            }
        };
        match kind {
            SurgeryKind::Remove => Ok(()),
            SurgeryKind::Decrease => need(plan.q_r.is_some(), "'Q_r'"),
            SurgeryKind::Add => need(plan.c.is_some(), "'C'"),
            SurgeryKind::Increase => need(plan.q_i.is_some() && plan.g_i.is_some(), "'Q_i' and 'G_i'"),
        }?;
        Ok(plan)
    }

    pub fn to_json(&self) -> Value {
        let mut obj = json!({"kind": self.kind.name(), "kappa": self.kappa});
        for (key, m) in [("C", &self.c), ("Q_r", &self.q_r), ("Q_i", &self.q_i), ("G_i", &self.g_i)] {
            if let Some(m) = m {
                obj[key] = mat_to_json(m);
            }
        }
        obj
    }

    pub fn load(path: &Path, n: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&serde_json::from_str(&text)?, n)
    }
}

/// The rational factor `F(k) = I + s·2iκ/(k − s·iκ)·Π` with `J̃(k) = F(k)J(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JostFactor {
    pub kappa: f64,
    /// `+1` for remove/decrease, `−1` for add/increase.
    pub sign: i32,
    pub projection: CMat,
}

impl JostFactor {
    pub fn eval(&self, k: C64) -> CMat {
        let s = self.sign as f64;
        let ik = c(0.0, self.kappa);
        let n = self.projection.nrows();
        CMat::identity(n, n) + &self.projection * (ik * 2.0 * s / (k - ik * s))
    }

    /// `det F(k) = ((k + s·iκ)/(k − s·iκ))^m`.
    pub fn det(&self, k: C64) -> C64 {
        let s = self.sign as f64;
        let ik = c(0.0, self.kappa);
        ((k + ik * s) / (k - ik * s)).powi(projection_rank(&self.projection) as i32)
    }

    /// `J̃(k) = F(k)J(k)`.
    pub fn apply_jost(&self, k: C64, j: &CMat) -> CMat {
        self.eval(k) * j
    }

    /// `S̃(k) = F(−k) S(k) F(−k)` for real `k`.
    pub fn apply_scattering(&self, k: f64, s: &CMat) -> CMat {
        let f = self.eval(c(-k, 0.0));
        &f * s * &f
    }

    pub fn to_json(&self) -> Value {
        json!({"kappa": self.kappa, "sign": self.sign, "projection": mat_to_json(&self.projection)})
    }
}

/// `k ↦ F(−k)S(k)F(−k)` built from a result's factor.
pub fn scattering_factor(factor: &JostFactor) -> impl Fn(f64, &CMat) -> CMat + '_ {
    move |k, s| factor.apply_scattering(k, s)
}

/// Closed-form solution data on the transform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub kappa: f64,
    pub sigma: f64,
    pub xs: Vec<f64>,
    pub z: Vec<CMat>,
    pub zp: Vec<CMat>,
    /// `W⁺` or `Ω⁺` at each node.
    pub mid: Vec<CMat>,
    /// `e^{−κx}·tail` continues `Z` past the grid (remove/decrease only).
    pub tail: Option<CMat>,
}

impl Transform {
    /// `𝒜(x_i, x_j)`.
    pub fn a_kernel(&self, i: usize, j: usize) -> CMat {
        &self.z[i] * &self.mid[i] * self.z[j].adjoint() * c(self.sigma, 0.0)
    }

    /// `G(x_i, x_j)`.
    pub fn g_kernel(&self, i: usize, j: usize) -> CMat {
        &self.z[i] * self.z[j].adjoint() * c(-self.sigma, 0.0)
    }

    /// `2 d/dx 𝒜(x,x)` at node `i`.
    pub fn delta_v(&self, i: usize) -> CMat {
        let (z, zp, m) = (&self.z[i], &self.zp[i], &self.mid[i]);
        let zm = z * m;
        let first = (zp * m * z.adjoint() + &zm * zp.adjoint()) * c(2.0 * self.sigma, 0.0);
        let second = &zm * z.adjoint() * &zm * z.adjoint() * c(2.0, 0.0);
        hermitian_part(&(first + second))
    }

    fn z_at(&self, x: f64) -> CMat {
        let last = *self.xs.last().unwrap();
        if x > last {
            if let Some(t) = &self.tail {
                return t * c((-self.kappa * x).exp(), 0.0);
            }
        }
        let (start, w) = grid::lagrange4(&self.xs, x.min(last));
        let mut out = self.z[start].clone() * c(w[0], 0.0);
        for (l, wl) in w.iter().enumerate().skip(1) {
            out += &self.z[start + l] * c(*wl, 0.0);
        }
        out
    }

    /// Apply the transformation operator to a matrix solution `u` at energy
    /// `k²` sampled on the transform grid: `u − σZN(Z†u' − Z'†u)/(k²+κ²)`
    /// and its derivative.
    fn transform_solution(&self, k: C64, u: &MatrixSolution) -> (Vec<CMat>, Vec<CMat>) {
        let denom = k * k + self.kappa * self.kappa;
        let s = self.sigma;
        let mut out = Vec::with_capacity(u.len());
        let mut outp = Vec::with_capacity(u.len());
        for i in 0..u.len() {
            let (z, zp, m) = (&self.z[i], &self.zp[i], &self.mid[i]);
            let w = z.adjoint() * &u.psi_prime[i] - zp.adjoint() * &u.psi[i];
            let mprime = m * z.adjoint() * z * m * c(s, 0.0);
            let psi = &u.psi[i] - z * m * &w * (c(s, 0.0) / denom);
            let dpsi = &u.psi_prime[i] - (zp * m * &w + z * &mprime * &w) * (c(s, 0.0) / denom)
                + z * m * z.adjoint() * &u.psi[i] * c(s, 0.0);
            out.push(psi);
            outp.push(dpsi);
        }
        (out, outp)
    }
}

/// Numbers recorded while building a result.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Normalized Gel'fand–Levitan residual on the sample window.
    pub gl_residual: f64,
    pub boundary_selfadjoint: f64,
    pub boundary_positivity: f64,
    /// Largest condition number of the restricted `W` or `Ω`.
    pub mid_condition: f64,
    /// Largest `‖Ṽ − V‖` computed beyond `support_end` (remove/decrease).
    pub delta_v_beyond_support: Option<f64>,
    /// `‖L_block − J(iκ)/(2κ)‖ / ‖J(iκ)/(2κ)‖` (add/increase).
    pub l_crosscheck: Option<f64>,
    pub decay: Option<DecayFit>,
}

impl Diagnostics {
    pub fn to_json(&self) -> Value {
        json!({
            "gl_residual": self.gl_residual,
            "boundary_selfadjoint": self.boundary_selfadjoint,
            "boundary_positivity": self.boundary_positivity,
            "mid_condition": self.mid_condition,
            "delta_v_beyond_support": self.delta_v_beyond_support,
            "l_crosscheck": self.l_crosscheck,
            "decay": self.decay.as_ref().map(DecayFit::to_json),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurgeryResult {
    pub kind: SurgeryKind,
    pub kappa: f64,
    /// The transformed problem `(Ṽ, Ã, B̃)`.
    pub problem: Problem,
    pub original: Problem,
    pub jost_factor: JostFactor,
    /// The `C` that entered the kernel.
    pub normalization: CMat,
    /// Rank change of the bound state at `κ` (negative for remove/decrease).
    pub multiplicity_change: i64,
    pub transform: Transform,
    pub diagnostics: Diagnostics,
}

impl SurgeryResult {
    /// `J̃(k) = F(k)J(k)`, from the unperturbed Jost matrix.
    pub fn jost_tilde(&self, k: C64, cfg: &SolverConfig) -> Result<CMat> {
        let j = jost_matrix(&self.original, k, cfg)?.j;
        Ok(self.jost_factor.apply_jost(k, &j))
    }

    /// `S̃(k)` from the unperturbed scattering matrix.
    pub fn scattering_tilde(&self, k: f64, cfg: &SolverConfig) -> Result<CMat> {
        let s = crate::solver::scattering_matrix(&self.original, k, cfg)?;
        Ok(self.jost_factor.apply_scattering(k, &s))
    }

    /// `𝒜(x_i, x_j)` on the transform grid.
    pub fn a_kernel(&self, i: usize, j: usize) -> CMat {
        self.transform.a_kernel(i, j)
    }

    /// Perturbed regular solution on the transform grid.
    pub fn phi_tilde(&self, k: C64, cfg: &SolverConfig) -> Result<MatrixSolution> {
        regularized(k, self.kappa, |k| {
            let phi = regular_solution(&self.original, k, &self.transform.xs, cfg)?;
            let (psi, psi_prime) = self.transform.transform_solution(k, &phi);
            Ok(MatrixSolution { k, xs: phi.xs, psi, psi_prime })
        })
    }

    /// Perturbed Jost solution on the transform grid, `Im k ≥ 0`.
    pub fn f_tilde(&self, k: C64, cfg: &SolverConfig) -> Result<MatrixSolution> {
        regularized(k, self.kappa, |k| {
            let f = jost_solution(&self.original, k, &self.transform.xs, cfg)?;
            let (psi, psi_prime) = self.transform.transform_solution(k, &f);
            let fac = self.jost_factor.eval(k);
            Ok(MatrixSolution {
                k,
                xs: f.xs,
                psi: psi.iter().map(|p| p * &fac).collect(),
                psi_prime: psi_prime.iter().map(|p| p * &fac).collect(),
            })
        })
    }

    pub fn to_json(&self) -> Value {
        let mut obj = self.problem.to_json();
        obj["jost_factor"] = self.jost_factor.to_json();
        obj["diagnostics"] = self.diagnostics.to_json();
        obj["surgery"] = json!({
            "kind": self.kind.name(),
            "kappa": self.kappa,
            "C": mat_to_json(&self.normalization),
            "multiplicity_change": self.multiplicity_change,
        });
        obj
    }
}

/// Evaluate `f` at `k`, or symmetrically around it when `k² + κ²` nearly vanishes.
fn regularized(k: C64, kappa: f64, f: impl Fn(C64) -> Result<MatrixSolution>) -> Result<MatrixSolution> {
    if (k * k + kappa * kappa).norm() > 1e-8 * kappa * kappa {
        return f(k);
    }
    let d = c(0.0, SINGULAR_SHIFT * kappa);
    let a = f(k + d)?;
    let b = f(k - d)?;
    let half = c(0.5, 0.0);
    Ok(MatrixSolution {
        k,
        xs: a.xs.clone(),
        psi: a.psi.iter().zip(&b.psi).map(|(u, v)| (u + v) * half).collect(),
        psi_prime: a.psi_prime.iter().zip(&b.psi_prime).map(|(u, v)| (u + v) * half).collect(),
    })
}

fn check_projection(p: &CMat, n: usize, what: &str) -> Result<usize> {
    if p.shape() != (n, n) || !matops::is_finite(p) {
        return Err(Error::validation(format!("{what}: must be a finite {n}×{n} matrix")));
    }
    let idem = op_norm(&(p * p - p));
    let herm = hermiticity_defect(p);
    if idem > 1e-8 || herm > 1e-10 {
        return Err(Error::validation(format!(
            "{what}: not an orthogonal projection (‖P²−P‖ = {idem:.2e}, ‖P−P†‖ = {herm:.2e})"
        )));
    }
    let r = projection_rank(p);
    if r == 0 {
        return Err(Error::validation(format!("{what}: rank must be at least 1")));
    }
    Ok(r)
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::validation(format!("surgery: kappa must be positive and finite, got {kappa}")));
    }
    Ok(())
}

/// The bound state of `problem` at (or within `10⁻³` of) `kappa`.
pub fn locate_state(problem: &Problem, kappa: f64, cfg: &SolverConfig) -> Result<BoundState> {
    check_kappa(kappa)?;
    let k = spectra::refine_kappa(problem, kappa, 1e-3 * kappa.max(1.0), cfg).map_err(|_| {
        Error::validation(format!("surgery: no bound state at kappa = {kappa} (within 1e-3)"))
    })?;
    spectra::bound_state_at(problem, k, spectra::SearchOptions::default().rank_rel, cfg)
}

/// Validate a plan against a problem and dispatch.
pub fn apply(problem: &Problem, plan: &SurgeryPlan, cfg: &SolverConfig) -> Result<SurgeryResult> {
    problem.ensure_valid()?;
    match plan.kind {
        SurgeryKind::Remove => solve_gl_remove(problem, &locate_state(problem, plan.kappa, cfg)?, cfg),
        SurgeryKind::Decrease => {
            let state = locate_state(problem, plan.kappa, cfg)?;
            solve_gl_decrease(problem, &state, plan.q_r.as_ref().expect("checked by from_json"), cfg)
        }
        SurgeryKind::Add => solve_gl_add(problem, plan.kappa, plan.c.as_ref().expect("checked by from_json"), cfg),
        SurgeryKind::Increase => {
            let state = locate_state(problem, plan.kappa, cfg)?;
            solve_gl_increase(
                problem,
                &state,
                plan.q_i.as_ref().expect("checked by from_json"),
                plan.g_i.as_ref().expect("checked by from_json"),
                cfg,
            )
        }
    }
}

/// The kernel `G(x,y)` of a plan, as an evaluator on `[0, x_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlKernel {
    transform: Transform,
}

impl GlKernel {
    pub fn at(&self, x: f64, y: f64) -> CMat {
        let t = &self.transform;
        t.z_at(x) * t.z_at(y).adjoint() * c(-t.sigma, 0.0)
    }

    pub fn x_end(&self) -> f64 {
        *self.transform.xs.last().unwrap()
    }
}

/// Build `G(x,y) = ∓φ(iκ,x)C²φ(iκ,y)†` for a validated plan.
pub fn gl_kernel(problem: &Problem, plan: &SurgeryPlan, cfg: &SolverConfig) -> Result<GlKernel> {
    Ok(GlKernel { transform: apply(problem, plan, cfg)?.transform })
}

/// Remove the whole bound state `state`.
pub fn solve_gl_remove(problem: &Problem, state: &BoundState, cfg: &SolverConfig) -> Result<SurgeryResult> {
    let p = state.p.clone();
    take_out(problem, state, &state.q, SurgeryKind::Remove, Some(p), cfg)
}

/// Lower the multiplicity of `state` by `rank Q_r`. `Q_r = Q` removes the state.
pub fn solve_gl_decrease(problem: &Problem, state: &BoundState, q_r: &CMat, cfg: &SolverConfig) -> Result<SurgeryResult> {
    let n = problem.n();
    let r = check_projection(q_r, n, "decrease: Q_r")?;
    let dominated = op_norm(&(&state.q * q_r - q_r));
    if dominated > 1e-6 {
        return Err(Error::validation(format!(
            "decrease: Q_r must satisfy Q_N Q_r = Q_r (defect {dominated:.2e})"
        )));
    }
    if r > state.m {
        return Err(Error::validation(format!("decrease: rank Q_r = {r} exceeds the multiplicity {}", state.m)));
    }
    take_out(problem, state, &hermitian_part(q_r), SurgeryKind::Decrease, None, cfg)
}

fn take_out(
    problem: &Problem,
    state: &BoundState,
    q: &CMat,
    kind: SurgeryKind,
    p: Option<CMat>,
    cfg: &SolverConfig,
) -> Result<SurgeryResult> {
    let kappa = state.kappa;
    let n = problem.n();
    let xs = spectra::state_grid(problem, kappa, cfg);
    let (profile, k_mat, _) = spectra::decaying_solution(problem, kappa, q, &xs, cfg)?;
    let (c_mat, _) = spectra::gl_normalization_from(&profile, q)?;
    let phi = profile.times(&c_mat);
    let w = phi.tail_gram();
    let basis = projection_basis(q);
    let m = basis.ncols();
    let mut cond = 1.0f64;
    let mut mid = Vec::with_capacity(xs.len());
    for (i, wi) in w.iter().enumerate() {
        let ci = restricted_condition(wi, &basis);
        if !(ci < MAX_RESTRICTED_CONDITION) {
            return Err(Error::numerical(format!(
                "{kind}: W(x) does not have rank {m} at x = {} (condition {ci:.2e})",
                xs[i]
            )));
        }
        cond = cond.max(ci);
        mid.push(hermitian_part(&restricted_inverse(wi, &basis)?));
    }
    let projection = match p {
        Some(p) => p,
        None => {
            let kq = &k_mat * q;
            range_projection(&kq, Some(1e-8 * op_norm(&kq)))?.0
        }
    };
    let transform = Transform {
        kappa,
        sigma: 1.0,
        xs: xs.clone(),
        z: phi.y,
        zp: phi.yp,
        mid,
        tail: Some(&phi.tail * CMat::identity(n, n)),
    };
    let support = problem.potential.x_max();
    let mut beyond = 0.0f64;
    let mut values = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let dv = transform.delta_v(i);
        if x > support + 1e-12 {
            beyond = beyond.max(op_norm(&dv));
        }
        values.push(hermitian_part(&(problem.potential.sample(x) + dv)));
    }
    let potential = Potential::grid(xs, values, support.min(*transform.xs.last().unwrap()))?;
    let bc = &problem.boundary;
    let b_new = &bc.b + &bc.a * &c_mat * &c_mat * bc.a.adjoint() * &bc.a;
    finish(
        problem,
        potential,
        BoundaryCondition::new(bc.a.clone(), b_new)?,
        kind,
        kappa,
        c_mat,
        projection,
        -(m as i64),
        transform,
        cond,
        Some(beyond),
        None,
    )
}

/// Add a bound state at `iκ` with Gel'fand–Levitan normalization `C`.
pub fn solve_gl_add(problem: &Problem, kappa: f64, c_new: &CMat, cfg: &SolverConfig) -> Result<SurgeryResult> {
    check_kappa(kappa)?;
    let n = problem.n();
    if c_new.shape() != (n, n) || !matops::is_finite(c_new) {
        return Err(Error::validation(format!("add: C must be a finite {n}×{n} matrix")));
    }
    let scale = op_norm(c_new);
    if hermiticity_defect(c_new) > 1e-10 * scale.max(1.0) {
        return Err(Error::validation("add: C must be hermitian"));
    }
    let c_h = hermitian_part(c_new);
    if scale == 0.0 {
        return Err(Error::validation("add: C must have rank at least 1"));
    }
    if min_eigenvalue(&c_h) < -1e-10 * scale {
        return Err(Error::validation("add: C must be nonnegative"));
    }
    ensure_distinct(problem, kappa, cfg)?;
    let (q, _) = range_projection(&c_h, None)?;
    add_in(problem, kappa, &c_h, &q, SurgeryKind::Add, cfg)
}

/// Raise the multiplicity of `state` by `rank Q_i`, with `C_i = (I − Q_i + G_i)^{-1/2} Q_i`.
pub fn solve_gl_increase(
    problem: &Problem,
    state: &BoundState,
    q_i: &CMat,
    g_i: &CMat,
    cfg: &SolverConfig,
) -> Result<SurgeryResult> {
    let n = problem.n();
    if n < 2 {
        return Err(Error::validation("increase: needs n ≥ 2"));
    }
    check_projection(q_i, n, "increase: Q_i")?;
    let overlap = op_norm(&(q_i * &state.q));
    if overlap > 1e-6 {
        return Err(Error::validation(format!(
            "increase: Q_i must be orthogonal to Q_N (‖Q_i Q_N‖ = {overlap:.2e})"
        )));
    }
    if g_i.shape() != (n, n) || !matops::is_finite(g_i) {
        return Err(Error::validation(format!("increase: G_i must be a finite {n}×{n} matrix")));
    }
    let gs = op_norm(g_i).max(1e-300);
    if hermiticity_defect(g_i) > 1e-10 * gs.max(1.0) {
        return Err(Error::validation("increase: G_i must be hermitian"));
    }
    let q = hermitian_part(q_i);
    let g = hermitian_part(g_i);
    if op_norm(&(&g * &q - &g)) > 1e-8 * gs || op_norm(&(&q * &g - &g)) > 1e-8 * gs {
        return Err(Error::validation("increase: G_i must satisfy G_i Q_i = Q_i G_i = G_i"));
    }
    if min_eigenvalue(&g) < -1e-10 * gs {
        return Err(Error::validation("increase: G_i must be nonnegative"));
    }
    let basis = projection_basis(&q);
    if !(restricted_condition(&g, &basis) < MAX_RESTRICTED_CONDITION) {
        return Err(Error::validation("increase: G_i restricted to Q_i ℂⁿ is singular"));
    }
    let h = CMat::identity(n, n) - &q + &g;
    let c_i = hermitian_part(&(inv_sqrt_pos(&h)? * &q));
    add_in(problem, state.kappa, &c_i, &q, SurgeryKind::Increase, cfg)
}

fn ensure_distinct(problem: &Problem, kappa: f64, cfg: &SolverConfig) -> Result<()> {
    let width = 1e-6 * kappa.max(1.0);
    if let Ok(kj) = spectra::refine_kappa(problem, kappa, width, cfg) {
        return Err(Error::validation(format!(
            "add: kappa_new = {kappa} must be distinct from κ_j; the problem already has a bound state at κ_j = {kj}"
        )));
    }
    Ok(())
}

/// Right end for add/increase grids: `x²e^{−2κx} < ε`, at least `x_max`.
pub fn add_grid_end(problem: &Problem, kappa: f64, cfg: &SolverConfig) -> f64 {
    let target = (1.0 / cfg.eps_tail).ln();
    let mut x = target / (2.0 * kappa);
    for _ in 0..50 {
        x = (target + 2.0 * x.max(1.0).ln()) / (2.0 * kappa);
    }
    x.max(problem.potential.x_max()).min(300.0 / kappa)
}

fn add_in(
    problem: &Problem,
    kappa: f64,
    c_mat: &CMat,
    q: &CMat,
    kind: SurgeryKind,
    cfg: &SolverConfig,
) -> Result<SurgeryResult> {
    let x_end = add_grid_end(problem, kappa, cfg);
    let xs = grid::uniform(x_end, cfg.h_grid);
    let k = c(0.0, kappa);
    let xi = regular_solution(problem, k, &xs, cfg)?.times(c_mat);
    let f: Vec<CMat> = xi.psi.iter().map(|z| z.adjoint() * z).collect();
    let fp: Vec<CMat> = xi.psi.iter().zip(&xi.psi_prime).map(|(z, d)| d.adjoint() * z + z.adjoint() * d).collect();
    let omega = grid::cumulative_forward(&xs, &f, &fp);
    let basis = projection_basis(q);
    let m = basis.ncols();
    let mut cond = 1.0f64;
    let mut mid = Vec::with_capacity(xs.len());
    for (i, oi) in omega.iter().enumerate() {
        let oi = oi + q;
        let ci = restricted_condition(&oi, &basis);
        if !(ci < MAX_RESTRICTED_CONDITION) {
            return Err(Error::numerical(format!(
                "{kind}: Ω(x) restricted to the range of C is singular at x = {} (condition {ci:.2e})",
                xs[i]
            )));
        }
        cond = cond.max(ci);
        mid.push(hermitian_part(&restricted_inverse(&oi, &basis)?));
    }

    // L from the Wronskian with f(iκ,·) is J(iκ)/(2κ); the block solve against
    // e^{∓κx} beyond the support is kept as a cross-check.
    let j = spectra::jost_on_axis(problem, kappa, cfg)?.0;
    let l = &j * c(1.0 / (2.0 * kappa), 0.0);
    let im = xs.iter().position(|&x| x >= problem.potential.x_max()).unwrap_or(xs.len() - 1);
    let (phi_m, dphi_m) = (&xi.psi[im], &xi.psi_prime[im]);
    let l_block = (phi_m * c(kappa, 0.0) + dphi_m) * c((-kappa * xs[im]).exp() / (2.0 * kappa), 0.0);
    let lc = &l * c_mat;
    let l_cross = op_norm(&(l_block - &lc)) / op_norm(&lc).max(1e-300);
    let (projection, rank_p) = range_projection(&lc, Some(1e-8 * op_norm(&lc)))?;
    if rank_p != m {
        return Err(Error::numerical(format!(
            "{kind}: L·C has rank {rank_p}, expected {m}; is κ a bound state already?"
        )));
    }

    let transform = Transform { kappa, sigma: -1.0, xs: xs.clone(), z: xi.psi, zp: xi.psi_prime, mid, tail: None };
    let mut values = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        values.push(hermitian_part(&(problem.potential.sample(x) + transform.delta_v(i))));
    }
    let decay = decay_fit_nodes(&xs, &transform, kappa).ok();
    let potential = Potential::grid(xs, values, x_end)?;
    let bc = &problem.boundary;
    let b_new = &bc.b - &bc.a * c_mat * c_mat * bc.a.adjoint() * &bc.a;
    let mut res = finish(
        problem,
        potential,
        BoundaryCondition::new(bc.a.clone(), b_new)?,
        kind,
        kappa,
        c_mat.clone(),
        projection,
        m as i64,
        transform,
        cond,
        None,
        Some(l_cross),
    )?;
    res.diagnostics.decay = decay;
    Ok(res)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    original: &Problem,
    potential: Potential,
    boundary: BoundaryCondition,
    kind: SurgeryKind,
    kappa: f64,
    normalization: CMat,
    projection: CMat,
    multiplicity_change: i64,
    transform: Transform,
    mid_condition: f64,
    delta_v_beyond_support: Option<f64>,
    l_crosscheck: Option<f64>,
) -> Result<SurgeryResult> {
    let boundary_selfadjoint = boundary.selfadjoint_residual();
    let boundary_positivity = boundary.positivity();
    let problem = Problem::new(potential, boundary)?;
    let gl_residual = gl_residual(&transform, 4.0, 30);
    Ok(SurgeryResult {
        kind,
        kappa,
        problem,
        original: original.clone(),
        jost_factor: JostFactor { kappa, sign: kind.sigma() as i32, projection: hermitian_part(&projection) },
        normalization,
        multiplicity_change,
        transform,
        diagnostics: Diagnostics {
            gl_residual,
            boundary_selfadjoint,
            boundary_positivity,
            mid_condition,
            delta_v_beyond_support,
            l_crosscheck,
            decay: None,
        },
    })
}

/// Indices of up to `samples` nodes spread over `[0, window]`.
fn sample_nodes(xs: &[f64], window: f64, samples: usize) -> Vec<usize> {
    let last = xs.iter().rposition(|&x| x <= window).unwrap_or(0);
    let count = samples.max(2).min(last + 1);
    let mut idx: Vec<usize> = (0..count).map(|i| i * last / (count - 1).max(1)).collect();
    idx.dedup();
    idx
}

/// `max ‖𝒜(x,y) + G(x,y) + ∫₀^x 𝒜(x,z)G(z,y)dz‖ / max(1, ‖G(x,y)‖)` over
/// sampled nodes `y < x ≤ window`, with the integral done by Simpson's rule
/// on the grid.
pub fn gl_residual(t: &Transform, window: f64, samples: usize) -> f64 {
    gl_residual_with(&t.xs, window, samples, |i, j| t.g_kernel(i, j), |i, j| t.a_kernel(i, j))
}

/// [`gl_residual`] for arbitrary kernel and solution evaluators on the nodes `xs`.
pub fn gl_residual_with<G, A>(xs: &[f64], window: f64, samples: usize, g: G, a: A) -> f64
where
    G: Fn(usize, usize) -> CMat + Sync,
    A: Fn(usize, usize) -> CMat + Sync,
{
    let idx = sample_nodes(xs, window, samples);
    idx.par_iter()
        .filter(|&&i| i >= 2)
        .map(|&i| {
            let w = grid::simpson_weights(&xs[..=i]);
            // Row of 𝒜(x_i, ·) weighted for the quadrature.
            let arow: Vec<CMat> = (0..=i).map(|z| a(i, z) * c(w[z], 0.0)).collect();
            let mut worst = 0.0f64;
            for &j in idx.iter().filter(|&&j| j < i) {
                let mut acc = a(i, j) + g(i, j);
                for (z, az) in arow.iter().enumerate() {
                    acc += az * g(z, j);
                }
                let scale = op_norm(&g(i, j)).max(1.0);
                worst = worst.max(op_norm(&acc) / scale);
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `e^{−2κx}`
    E,
    /// `x e^{−2κx}`
    XE,
    /// `x² e^{−2κx}`
    X2E,
}

impl DecayModel {
    pub fn name(self) -> &'static str {
        match self {
            DecayModel::E => "e",
            DecayModel::XE => "xe",
            DecayModel::X2E => "x2e",
        }
    }

    fn power(self) -> f64 {
        match self {
            DecayModel::E => 0.0,
            DecayModel::XE => 1.0,
            DecayModel::X2E => 2.0,
        }
    }
}

/// Tail fit of `‖ΔV(x)‖` against `x^p e^{−2κx}`, `p = 0, 1, 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    /// `ΔV ≈ constant · x^p e^{−2κx}` for the best model (signed for scalar problems).
    pub constant: f64,
    /// Root-mean-square log residual of each model, in the order e, xe, x2e.
    pub rms: [f64; 3],
    /// Whether `‖ΔV‖e^{2κx}` increases at every sample.
    pub growth_monotone: bool,
    /// `(max − min)/|mean|` of `ΔV e^{2κx}/x²` over the window.
    pub x2_ratio_spread: f64,
    pub window: (f64, f64),
}

impl DecayFit {
    pub fn to_json(&self) -> Value {
        json!({
            "model": self.model.name(),
            "constant": self.constant,
            "rms": self.rms,
            "growth_monotone": self.growth_monotone,
            "x2_ratio_spread": self.x2_ratio_spread,
            "window": [self.window.0, self.window.1],
        })
    }
}

/// Fit samples `(x, ΔV(x))` with `ΔV` given as signed scalars (`n = 1`) or norms.
pub fn decay_fit_samples(xs: &[f64], dv: &[f64], kappa: f64) -> Result<DecayFit> {
    if xs.len() < 3 || dv.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return Err(Error::numerical("decay_fit: tail window is numerically zero or too short"));
    }
    let logs: Vec<f64> = dv.iter().zip(xs).map(|(v, x)| v.abs().ln() + 2.0 * kappa * x).collect();
    let models = [DecayModel::E, DecayModel::XE, DecayModel::X2E];
    let mut rms = [0.0; 3];
    let mut consts = [0.0; 3];
    for (mi, m) in models.iter().enumerate() {
        let r: Vec<f64> = logs.iter().zip(xs).map(|(l, x)| l - m.power() * x.ln()).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        consts[mi] = mean.exp();
        rms[mi] = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r.len() as f64).sqrt();
    }
    let best = (0..3).min_by(|&a, &b| rms[a].partial_cmp(&rms[b]).unwrap()).unwrap();
    let sign = if dv.iter().all(|v| *v < 0.0) { -1.0 } else { 1.0 };
    let grown: Vec<f64> = dv.iter().zip(xs).map(|(v, x)| v.abs() * (2.0 * kappa * x).exp()).collect();
    let growth_monotone = grown.windows(2).all(|w| w[1] > w[0]);
    let ratio: Vec<f64> = dv.iter().zip(xs).map(|(v, x)| v * (2.0 * kappa * x).exp() / (x * x)).collect();
    let mean = ratio.iter().sum::<f64>() / ratio.len() as f64;
    let hi = ratio.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratio.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DecayFit {
        model: models[best],
        constant: sign * consts[best],
        rms,
        growth_monotone,
        x2_ratio_spread: (hi - lo) / mean.abs(),
        window: (xs[0], *xs.last().unwrap()),
    })
}

/// Fit `Ṽ − V` on `x ∈ [x_a, x_b]` sampled every `0.05`.
pub fn decay_fit(v: &Potential, v_tilde: &Potential, kappa: f64, window: (f64, f64)) -> Result<DecayFit> {
    let (xa, xb) = window;
    if !(xb > xa && xa > 0.0) {
        return Err(Error::validation("decay_fit: need 0 < x_a < x_b"));
    }
    let count = ((xb - xa) / 0.05).round() as usize + 1;
    let xs: Vec<f64> = (0..count).map(|i| xa + (xb - xa) * i as f64 / (count - 1) as f64).collect();
    let dv: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let d = v_tilde.sample(x) - v.sample(x);
            if d.nrows() == 1 {
                d[(0, 0)].re
            } else {
                op_norm(&d)
            }
        })
        .collect();
    decay_fit_samples(&xs, &dv, kappa)
}

/// Fit on the transform nodes with `κx ∈ [6, 10]`.
fn decay_fit_nodes(xs: &[f64], t: &Transform, kappa: f64) -> Result<DecayFit> {
    let (xa, xb) = (6.0 / kappa, 10.0 / kappa);
    let mut sx = Vec::new();
    let mut sv = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        if x >= xa - 1e-12 && x <= xb + 1e-12 && i % 10 == 0 {
            let d = t.delta_v(i);
            sx.push(x);
            sv.push(if d.nrows() == 1 { d[(0, 0)].re } else { op_norm(&d) });
        }
    }
    decay_fit_samples(&sx, &sv, kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::from_rows;
    use crate::potential::example89_perturbed;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn factor_values() {
        let f = JostFactor { kappa: 1.0, sign: 1, projection: CMat::identity(1, 1) };
        // S̃ factor at k = 1 for a removal is −i, a unit-modulus Blaschke factor.
        let g = f.eval(c(-1.0, 0.0));
        assert!((g[(0, 0)] - c(0.0, -1.0)).norm() < 1e-15);
        let add = JostFactor { kappa: 1.0, sign: -1, projection: CMat::identity(1, 1) };
        assert!((add.det(c(0.0, 2.0)) - c(1.0 / 3.0, 0.0)).norm() < 1e-15);
        let k = 3.0;
        let s = CMat::identity(1, 1);
        let ratio = f.apply_scattering(k, &s)[(0, 0)];
        let want = ((c(k, -1.0)) / c(k, 1.0)).powi(2);
        assert!((ratio - want).norm() < 1e-14);
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = SurgeryPlan::add(1.0, CMat::identity(1, 1) * c(4.0, 0.0));
        let back = SurgeryPlan::from_json(&plan.to_json(), 1).unwrap();
        assert_eq!(plan, back);
        let bad = json!({"kind": "increase", "kappa": 1.0});
        assert!(SurgeryPlan::from_json(&bad, 2).is_err());
    }

    #[test]
    fn add_example89_matches_closed_form() {
        let p = Problem::example89();
        let r = solve_gl_add(&p, 1.0, &(CMat::identity(1, 1) * c(4.0, 0.0)), &cfg()).unwrap();
        assert_eq!(r.problem.boundary.b[(0, 0)], c(-1.0, 0.0));
        let mut worst = 0.0f64;
        for i in 0..=1000 {
            let x = i as f64 * 0.01;
            worst = worst.max((r.problem.potential.sample(x)[(0, 0)].re - example89_perturbed(x)).abs());
        }
        assert!(worst < 1e-6, "{worst}");
        assert!(r.diagnostics.gl_residual < 1e-8, "{}", r.diagnostics.gl_residual);
        assert!(r.diagnostics.l_crosscheck.unwrap() < 1e-6, "{:?}", r.diagnostics.l_crosscheck);
        let k = c(2.0, 0.0);
        let jt = r.jost_tilde(k, &cfg()).unwrap()[(0, 0)];
        let want = -k * (k - c(0.0, 1.0)) / ((k + c(0.0, 1.0)) * (k + c(0.0, 1.0)));
        assert!((jt - want).norm() < 1e-8);
    }

    #[test]
    fn free_scalar_add_matches_log_derivative() {
        // ξ² = Ω' so ξΩ⁻¹ξ = (log Ω)'; Ṽ = −2(log Ω)''.
        let (kappa, cc) = (0.8, 1.5);
        let r = solve_gl_add(&Problem::free_dirichlet(1), kappa, &(CMat::identity(1, 1) * c(cc, 0.0)), &cfg()).unwrap();
        let omega = |x: f64| 1.0 + cc * cc * ((2.0 * kappa * x).sinh() / (2.0 * kappa) - x) / (2.0 * kappa * kappa);
        let d_omega = |x: f64| cc * cc * (kappa * x).sinh().powi(2) / (kappa * kappa);
        let dd_omega = |x: f64| cc * cc * (2.0 * kappa * x).sinh() / kappa;
        for x in [0.0, 0.5, 1.0, 2.0, 5.0] {
            let (o, d, dd) = (omega(x), d_omega(x), dd_omega(x));
            let want = -2.0 * (dd / o - (d / o).powi(2));
            let got = r.problem.potential.sample(x)[(0, 0)].re;
            assert!((got - want).abs() < 1e-8, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn remove_restores_example89() {
        let p = Problem::example89_perturbed();
        let r = apply(&p, &SurgeryPlan::remove(1.0), &cfg()).unwrap();
        let mut worst = 0.0f64;
        for i in 0..=1000 {
            let x = i as f64 * 0.01;
            worst = worst.max((r.problem.potential.sample(x)[(0, 0)].re - crate::potential::example89(x)).abs());
        }
        assert!(worst < 1e-6, "{worst}");
        assert_eq!(r.problem.boundary.b, p.boundary.b);
        assert!(r.diagnostics.gl_residual < 1e-8, "{}", r.diagnostics.gl_residual);
        assert!(r.diagnostics.delta_v_beyond_support.unwrap() < 1e-9);
    }

    #[test]
    fn phi_tilde_solves_the_new_equation() {
        let p = Problem::example89();
        let r = solve_gl_add(&p, 1.0, &(CMat::identity(1, 1) * c(4.0, 0.0)), &cfg()).unwrap();
        for k in [c(1.5, 0.0), c(0.0, 2.0), c(0.3, 0.7)] {
            let phi = r.phi_tilde(k, &cfg()).unwrap();
            let res = phi.equation_residual(&r.problem);
            assert!(res < 1e-5, "{k}: {res}");
            assert!(op_norm(&(&phi.psi[0] - &r.problem.boundary.a)) < 1e-10);
            assert!(op_norm(&(&phi.psi_prime[0] - &r.problem.boundary.b)) < 1e-8);
        }
        let f = r.f_tilde(c(2.0, 0.0), &cfg()).unwrap();
        assert!(f.equation_residual(&r.problem) < 1e-5);
        // Removable singularity at k = iκ.
        let a = r.f_tilde(c(0.0, 1.0 + 1e-4), &cfg()).unwrap();
        let b = r.f_tilde(c(0.0, 1.0 - 1e-4), &cfg()).unwrap();
        let mid = r.f_tilde(c(0.0, 1.0), &cfg()).unwrap();
        assert!(op_norm(&(&a.psi[0] - &b.psi[0])) < 1e-2);
        assert!(mid.psi.iter().all(matops::is_finite));
    }

    #[test]
    fn validation_errors() {
        let p = Problem::example89_perturbed();
        let err = solve_gl_add(&p, 1.0, &CMat::identity(1, 1), &cfg()).unwrap_err();
        assert!(err.to_string().contains("distinct from κ_j"), "{err}");
        assert!(solve_gl_add(&p, 0.5, &CMat::zeros(1, 1), &cfg()).is_err());
        assert!(solve_gl_add(&p, -1.0, &CMat::identity(1, 1), &cfg()).is_err());
        assert!(apply(&Problem::example89(), &SurgeryPlan::remove(1.0), &cfg()).is_err());
        let two = Problem::free_dirichlet(2);
        let c_new = from_rows(2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let r = solve_gl_add(&two, 1.0, &c_new, &cfg()).unwrap();
        let st = locate_state(&r.problem, 1.0, &cfg()).unwrap();
        let overlapping = from_rows(2, &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)]);
        assert!(solve_gl_increase(&r.problem, &st, &overlapping, &overlapping, &cfg()).is_err());
        assert!(solve_gl_decrease(&r.problem, &st, &overlapping, &cfg()).is_err());
    }

    #[test]
    fn gl_residual_zero_kernel() {
        let xs = grid::uniform(2.0, 0.01);
        let z = |_: usize, _: usize| CMat::zeros(2, 2);
        assert_eq!(gl_residual_with(&xs, 2.0, 30, z, z), 0.0);
    }

    #[test]
    fn kernel_signs() {
        let p = Problem::new(Potential::free(1), BoundaryCondition::neumann(1)).unwrap();
        let plan = SurgeryPlan::add(1.0, CMat::identity(1, 1) * c(2.0, 0.0));
        let g = gl_kernel(&p, &plan, &cfg()).unwrap();
        // φ(iκ,0) = A = 1, so G(0,0) = +C² for an addition.
        assert!((g.at(0.0, 0.0)[(0, 0)] - c(4.0, 0.0)).norm() < 1e-12);
        let r = apply(&p, &plan, &cfg()).unwrap();
        assert!((r.problem.boundary.b[(0, 0)] - c(-4.0, 0.0)).norm() < 1e-14);
        let back = apply(&r.problem, &SurgeryPlan::remove(1.0), &cfg()).unwrap();
        let g = gl_kernel(&r.problem, &SurgeryPlan::remove(1.0), &cfg()).unwrap();
        // Removal kernel at the origin is −AC²A†, with C the recovered normalization 2.
        assert!((g.at(0.0, 0.0)[(0, 0)] - c(-4.0, 0.0)).norm() < 1e-6, "{}", g.at(0.0, 0.0));
        assert!(op_norm(&(&back.problem.boundary.b - &p.boundary.b)) < 1e-6);
    }
}
