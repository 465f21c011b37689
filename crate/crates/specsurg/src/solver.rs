//! Jost, regular and growing solutions, the Jost matrix `J(k)`, the
//! scattering matrix `S(k)` and the physical solution `Ψ(k,x)`.
//!
//! Solutions are integrated in the factored form `ψ = e^{iσx} u`, which turns
//! `-ψ'' + Vψ = k²ψ` into `u'' = (V − k² + σ²)u − 2iσu'`. The Jost solution
//! uses `σ = k`, the growing solution `σ = −k`, the regular solution `σ = 0`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matops::{c, condition, CMat, C64};
use crate::ode::{self, OdeConfig};
use crate::potential::Problem;

/// Exponents beyond this would overflow `e^{κx}`.
const MAX_EXPONENT: f64 = 650.0;

/// Integration settings shared by all solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub ode: OdeConfig,
    /// Step of the uniform sampling grids used by the bound-state and surgery code.
    pub h_grid: f64,
    /// Tail threshold used to place the right end of output grids.
    pub eps_tail: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let mut ode = OdeConfig::default();
        if let Some(tol) = std::env::var("SPECSURG_TOL").ok().and_then(|s| s.parse::<f64>().ok()) {
            if tol > 0.0 && tol.is_finite() {
                ode.rtol = tol;
                ode.atol = tol * 1e-2;
            }
        }
        Self { ode, h_grid: 0.005, eps_tail: 1e-10 }
    }
}

impl SolverConfig {
    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.ode.rtol = rtol;
        self.ode.atol = rtol * 1e-2;
        self
    }
}

/// Samples `{x_i, ψ(x_i), ψ'(x_i)}` of a matrix solution at fixed `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSolution {
    pub k: C64,
    pub xs: Vec<f64>,
    pub psi: Vec<CMat>,
    pub psi_prime: Vec<CMat>,
}

impl MatrixSolution {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Right-multiply both `ψ` and `ψ'` by `m`.
    pub fn times(&self, m: &CMat) -> MatrixSolution {
        MatrixSolution {
            k: self.k,
            xs: self.xs.clone(),
            psi: self.psi.iter().map(|p| p * m).collect(),
            psi_prime: self.psi_prime.iter().map(|p| p * m).collect(),
        }
    }

    /// Largest relative `‖−ψ'' + Vψ − k²ψ‖` over interior nodes, with `ψ''`
    /// from fourth-order central differences of `ψ'` (second order where the
    /// spacing is not locally uniform). The two end nodes on each side are
    /// skipped when the grid is long enough.
    pub fn equation_residual(&self, problem: &Problem) -> f64 {
        let k2 = self.k * self.k;
        let mut worst = 0.0f64;
        let xs = &self.xs;
        for i in 1..self.len() - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            let wide = i >= 2
                && i + 2 < self.len()
                && [xs[i - 1] - xs[i - 2], h1, xs[i + 2] - xs[i + 1]].iter().all(|h| (h - h0).abs() <= 1e-9 * h0);
            if !wide && self.len() >= 5 && (i == 1 || i + 2 == self.len()) {
                continue;
            }
            let d2 = if wide {
                (&self.psi_prime[i - 2] - &self.psi_prime[i + 2]
                    + (&self.psi_prime[i + 1] - &self.psi_prime[i - 1]) * c(8.0, 0.0))
                    * c(1.0 / (12.0 * h0), 0.0)
            } else {
                (&self.psi_prime[i + 1] - &self.psi_prime[i - 1]) * c(1.0 / (h0 + h1), 0.0)
            };
            let v = problem.potential.sample(self.xs[i]);
            let r = -d2 + &v * &self.psi[i] - &self.psi[i] * k2;
            // Derivative term keeps the scale honest at zeros of ψ.
            let size = crate::matops::op_norm(&self.psi[i])
                + crate::matops::op_norm(&self.psi_prime[i]) / (1.0 + self.k.norm());
            let scale = size.max(1e-300) * (1.0 + crate::matops::op_norm(&v) + k2.norm());
            worst = worst.max(crate::matops::op_norm(&r) / scale);
        }
        worst
    }
}

/// `J(k)` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct JostData {
    pub k: C64,
    pub j: CMat,
}

fn flatten(u: &CMat, up: &CMat) -> Vec<C64> {
    let mut y = Vec::with_capacity(2 * u.len());
    y.extend_from_slice(u.as_slice());
    y.extend_from_slice(up.as_slice());
    y
}

/// Integrate the factored equation for `u` from `x0` (with `u(x0)`, `u'(x0)`)
/// through `outputs` and return unfactored `(ψ, ψ')` at each output.
fn solve_factored(
    problem: &Problem,
    k: C64,
    sigma: C64,
    x0: f64,
    u0: &CMat,
    up0: &CMat,
    outputs: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<(CMat, CMat)>> {
    let n = problem.n();
    let nn = n * n;
    let shift = sigma * sigma - k * k;
    let two_i_sigma = c(0.0, 2.0) * sigma;
    let pot = &problem.potential;
    let mut vbuf = vec![C64::default(); nn];
    let rhs = |x: f64, y: &[C64], d: &mut [C64]| {
        pot.sample_into(x, &mut vbuf);
        let (u, up) = y.split_at(nn);
        let (du, dup) = d.split_at_mut(nn);
        du.copy_from_slice(up);
        // Column-major: (V u)[r + n*col] = Σ_m V[r + n*m] u[m + n*col].
        for col in 0..n {
            for r in 0..n {
                let mut acc = C64::default();
                for m in 0..n {
                    acc += vbuf[r + n * m] * u[m + n * col];
                }
                let idx = r + n * col;
                dup[idx] = acc + shift * u[idx] - two_i_sigma * up[idx];
            }
        }
    };
    let states = ode::integrate(rhs, x0, &flatten(u0, up0), outputs, &cfg.ode)?;
    let i_sigma = c(0.0, 1.0) * sigma;
    Ok(outputs
        .iter()
        .zip(states)
        .map(|(&x, y)| {
            let u = CMat::from_column_slice(n, n, &y[..nn]);
            let up = CMat::from_column_slice(n, n, &y[nn..]);
            let e = (i_sigma * x).exp();
            let psi = &u * e;
            let dpsi = (up + &u * i_sigma) * e;
            (psi, dpsi)
        })
        .collect())
}

fn check_grid(xs: &[f64]) -> Result<()> {
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) || xs[0] < 0.0 {
        return Err(Error::validation("solver: grid must have at least 2 increasing nonnegative nodes"));
    }
    Ok(())
}

fn check_exponent(kappa_x: f64) -> Result<()> {
    if kappa_x.abs() > MAX_EXPONENT {
        return Err(Error::numerical(format!(
            "solver: |Im k|·x = {kappa_x:.1} would overflow; shorten the grid"
        )));
    }
    Ok(())
}

/// Jost solution `f(k,x) = e^{ikx}[I + o(1)]` sampled on `xs`, integrated backward
/// from `max(x_max, xs.last)`.
pub fn jost_solution(problem: &Problem, k: C64, xs: &[f64], cfg: &SolverConfig) -> Result<MatrixSolution> {
    check_grid(xs)?;
    if k.im < 0.0 {
        return Err(Error::validation("jost_solution: Im k must be nonnegative"));
    }
    if k == C64::default() {
        return Err(Error::validation("jost_solution: k = 0 is not supported"));
    }
    let n = problem.n();
    let x_start = problem.potential.x_max().max(*xs.last().unwrap());
    let mut outs: Vec<f64> = xs.iter().rev().copied().collect();
    if x_start > outs[0] {
        outs.insert(0, x_start);
    }
    let res = solve_factored(problem, k, k, x_start, &CMat::identity(n, n), &CMat::zeros(n, n), &outs, cfg)?;
    let skip = res.len() - xs.len();
    let (mut psi, mut dpsi): (Vec<CMat>, Vec<CMat>) = res.into_iter().skip(skip).unzip();
    psi.reverse();
    dpsi.reverse();
    Ok(MatrixSolution { k, xs: xs.to_vec(), psi, psi_prime: dpsi })
}

/// `(f(k,0), f'(k,0))` without intermediate output nodes.
pub fn jost_at_zero(problem: &Problem, k: C64, cfg: &SolverConfig) -> Result<(CMat, CMat)> {
    if k == C64::default() {
        return Err(Error::validation("jost_solution: k = 0 is not supported"));
    }
    let n = problem.n();
    let x_start = problem.potential.x_max();
    let id = CMat::identity(n, n);
    if x_start <= 0.0 {
        return Ok((id.clone(), id * (c(0.0, 1.0) * k)));
    }
    let mut res = solve_factored(problem, k, k, x_start, &id, &CMat::zeros(n, n), &[0.0], cfg)?;
    Ok(res.pop().unwrap())
}

/// Regular solution with `φ(k,0) = A`, `φ'(k,0) = B`.
pub fn regular_solution(problem: &Problem, k: C64, xs: &[f64], cfg: &SolverConfig) -> Result<MatrixSolution> {
    check_grid(xs)?;
    if xs[0] != 0.0 {
        return Err(Error::validation("regular_solution: grid must start at x = 0"));
    }
    check_exponent(k.im * xs.last().unwrap())?;
    let bc = &problem.boundary;
    let res = solve_factored(problem, k, C64::default(), 0.0, &bc.a, &bc.b, xs, cfg)?;
    let (psi, dpsi) = res.into_iter().unzip();
    Ok(MatrixSolution { k, xs: xs.to_vec(), psi, psi_prime: dpsi })
}

/// Growing solution `g(iκ,x) = e^{κx}[I + o(1)]`, integrated backward from the
/// right end. Only accurate near the right end: the decaying mode contaminates
/// it as `x` decreases.
pub fn growing_solution(problem: &Problem, kappa: f64, xs: &[f64], cfg: &SolverConfig) -> Result<MatrixSolution> {
    check_grid(xs)?;
    if !(kappa > 0.0) {
        return Err(Error::validation("growing_solution: kappa must be positive"));
    }
    let x_start = problem.potential.x_max().max(*xs.last().unwrap());
    check_exponent(kappa * x_start)?;
    let n = problem.n();
    let k = c(0.0, kappa);
    let mut outs: Vec<f64> = xs.iter().rev().copied().collect();
    if x_start > outs[0] {
        outs.insert(0, x_start);
    }
    let res = solve_factored(problem, k, -k, x_start, &CMat::identity(n, n), &CMat::zeros(n, n), &outs, cfg)?;
    let skip = res.len() - xs.len();
    let (mut psi, mut dpsi): (Vec<CMat>, Vec<CMat>) = res.into_iter().skip(skip).unzip();
    psi.reverse();
    dpsi.reverse();
    Ok(MatrixSolution { k, xs: xs.to_vec(), psi, psi_prime: dpsi })
}

/// `J(k) = f(−k*,0)†B − f'(−k*,0)†A` for `k` in the closed upper half plane.
pub fn jost_matrix(problem: &Problem, k: C64, cfg: &SolverConfig) -> Result<JostData> {
    if k.im < 0.0 {
        return Err(Error::validation("jost_matrix: Im k must be nonnegative"));
    }
    let km = -k.conj();
    let (f0, fp0) = jost_at_zero(problem, km, cfg)?;
    let bc = &problem.boundary;
    let j = f0.adjoint() * &bc.b - fp0.adjoint() * &bc.a;
    Ok(JostData { k, j })
}

/// Condition number above which `J(k)` is treated as singular.
pub const MAX_JOST_CONDITION: f64 = 1e12;

/// `S(k) = −J(−k)J(k)⁻¹` for real `k ≠ 0`.
pub fn scattering_matrix(problem: &Problem, k: f64, cfg: &SolverConfig) -> Result<CMat> {
    if k == 0.0 || !k.is_finite() {
        return Err(Error::validation("scattering_matrix: k must be real and nonzero"));
    }
    let jp = jost_matrix(problem, c(k, 0.0), cfg)?.j;
    let jm = jost_matrix(problem, c(-k, 0.0), cfg)?.j;
    scattering_from_jost(&jp, &jm, k)
}

pub(crate) fn scattering_from_jost(jp: &CMat, jm: &CMat, k: f64) -> Result<CMat> {
    let cond = condition(jp);
    if !(cond <= MAX_JOST_CONDITION) {
        return Err(Error::numerical(format!(
            "scattering_matrix: J({k}) is near singular (condition {cond:.3e})"
        )));
    }
    let inv = jp.clone().try_inverse().ok_or_else(|| Error::numerical("scattering_matrix: J(k) singular"))?;
    Ok(-(jm * inv))
}

/// `S(k)` on many real points in parallel.
pub fn scattering_scan(problem: &Problem, ks: &[f64], cfg: &SolverConfig) -> Result<Vec<CMat>> {
    ks.par_iter().map(|&k| scattering_matrix(problem, k, cfg)).collect()
}

/// `Ψ(k,x) = f(−k,x) + f(k,x)S(k)` for real `k ≠ 0`.
pub fn physical_solution(problem: &Problem, k: f64, xs: &[f64], cfg: &SolverConfig) -> Result<MatrixSolution> {
    let s = scattering_matrix(problem, k, cfg)?;
    let fp = jost_solution(problem, c(k, 0.0), xs, cfg)?;
    let fm = jost_solution(problem, c(-k, 0.0), xs, cfg)?;
    let psi = fm.psi.iter().zip(&fp.psi).map(|(a, b)| a + b * &s).collect();
    let dpsi = fm.psi_prime.iter().zip(&fp.psi_prime).map(|(a, b)| a + b * &s).collect();
    Ok(MatrixSolution { k: c(k, 0.0), xs: xs.to_vec(), psi, psi_prime: dpsi })
}
