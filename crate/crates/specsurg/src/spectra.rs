//! Bound states: location on the positive imaginary axis, multiplicities,
//! kernel projections, Gel'fand–Levitan and Marchenko normalizations, and the
//! dependency matrix linking the two normalized solutions.
//!
//! Decaying solutions are never taken from forward integration alone, since
//! the growing mode swamps them. For `x ≤ x₀` we use `φ(iκ,x)Q`, beyond it
//! `f(iκ,x)K` with `K = f(iκ,x₀)⁻¹φ(iκ,x₀)Q`, which is the same solution.

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::grid;
use crate::jsonfmt::mat_to_json;
use crate::matops::{self, c, condition, inv_sqrt_pos, kernel_projection, op_norm, pinv, CMat, C64};
use crate::potential::Problem;
use crate::solver::{jost_at_zero, jost_solution, regular_solution, MatrixSolution, SolverConfig};

/// Data attached to one bound state `k = iκ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundState {
    pub kappa: f64,
    pub m: usize,
    /// Projection onto `Ker J(iκ)`.
    pub q: CMat,
    /// Projection onto `Ker J(iκ)†`.
    pub p: CMat,
    /// Gel'fand–Levitan normalization `H^{-1/2}Q`.
    pub c: CMat,
    /// Marchenko normalization `B^{-1/2}P`.
    pub m_mat: CMat,
    /// Dependency matrix with `Φ = ΨD`.
    pub d: CMat,
    /// `I − Q + ∫Qφ†φQ`.
    pub h: CMat,
    /// `I − P + ∫Pf†fP`.
    pub b: CMat,
    /// `φ(iκ,x)Q = f(iκ,x)K`.
    pub k_mat: CMat,
    /// Matching point used for `K`.
    pub x0: f64,
}

/// Bound states in increasing `κ`, plus anything worth reporting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Spectrum {
    pub states: Vec<BoundState>,
    pub warnings: Vec<String>,
}

impl Spectrum {
    pub fn kappas(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.kappa).collect()
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.states.iter().map(|s| s.m).collect()
    }

    /// State whose `κ` is within `tol` of `kappa`.
    pub fn find(&self, kappa: f64, tol: f64) -> Option<&BoundState> {
        self.states.iter().find(|s| (s.kappa - kappa).abs() <= tol)
    }

    pub fn to_json(&self) -> Value {
        let states: Vec<Value> = self
            .states
            .iter()
            .map(|s| {
                json!({
                    "kappa": s.kappa,
                    "m": s.m,
                    "Q": mat_to_json(&s.q),
                    "P": mat_to_json(&s.p),
                    "C": mat_to_json(&s.c),
                    "M": mat_to_json(&s.m_mat),
                    "D": mat_to_json(&s.d),
                })
            })
            .collect();
        json!({"states": states, "warnings": self.warnings})
    }
}

/// Scan settings for [`find_bound_states`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub kappa_min: f64,
    /// Defaults to `1 + ∫‖V‖`.
    pub kappa_max: Option<f64>,
    pub scan_points: usize,
    /// Width to which each minimum is refined.
    pub refine_tol: f64,
    /// A refined minimum counts as a bound state when `σ_min(J)/scale` is below this.
    pub detect_rel: f64,
    /// Singular values below `rank_rel · scale` count towards the multiplicity.
    pub rank_rel: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { kappa_min: 1e-4, kappa_max: None, scan_points: 400, refine_tol: 1e-9, detect_rel: 1e-7, rank_rel: 1e-6 }
    }
}

/// `J(iκ)` together with the free-problem scale `‖B‖ + κ‖A‖`.
pub fn jost_on_axis(problem: &Problem, kappa: f64, cfg: &SolverConfig) -> Result<(CMat, f64)> {
    let (f0, fp0) = jost_at_zero(problem, c(0.0, kappa), cfg)?;
    let bc = &problem.boundary;
    let j = f0.adjoint() * &bc.b - fp0.adjoint() * &bc.a;
    let scale = op_norm(&bc.b) + kappa * op_norm(&bc.a);
    Ok((j, scale.max(f64::MIN_POSITIVE)))
}

fn relative_sigma_min(problem: &Problem, kappa: f64, cfg: &SolverConfig) -> Result<f64> {
    let (j, s) = jost_on_axis(problem, kappa, cfg)?;
    Ok(matops::sigma_min(&j) / s)
}

fn golden_min(
    problem: &Problem,
    mut a: f64,
    mut b: f64,
    tol: f64,
    cfg: &SolverConfig,
) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = relative_sigma_min(problem, x1, cfg)?;
    let mut f2 = relative_sigma_min(problem, x2, cfg)?;
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = relative_sigma_min(problem, x1, cfg)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = relative_sigma_min(problem, x2, cfg)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Refine a bound state near `kappa_guess` within `±width`.
pub fn refine_kappa(problem: &Problem, kappa_guess: f64, width: f64, cfg: &SolverConfig) -> Result<f64> {
    let opts = SearchOptions::default();
    let a = (kappa_guess - width).max(opts.kappa_min);
    let b = kappa_guess + width;
    let (k, r) = golden_min(problem, a, b, opts.refine_tol, cfg)?;
    let reference = relative_sigma_min(problem, a, cfg)?.max(relative_sigma_min(problem, b, cfg)?);
    if r > opts.detect_rel * reference.max(1.0) {
        return Err(Error::numerical(format!(
            "no bound state near kappa = {kappa_guess} (relative sigma_min {r:.3e})"
        )));
    }
    Ok(k)
}

/// Locate all bound states with `κ` in `(kappa_min, kappa_max]` and compute their data.
pub fn find_bound_states(problem: &Problem, opts: &SearchOptions, cfg: &SolverConfig) -> Result<Spectrum> {
    let kmax = opts.kappa_max.unwrap_or_else(|| 1.0 + problem.potential.moments()[0]);
    if !(kmax > opts.kappa_min) {
        return Err(Error::validation("find_bound_states: kappa_max must exceed kappa_min"));
    }
    let npts = opts.scan_points.max(8);
    let (l0, l1) = (opts.kappa_min.ln(), kmax.ln());
    let ks: Vec<f64> = (0..npts).map(|i| (l0 + (l1 - l0) * i as f64 / (npts - 1) as f64).exp()).collect();
    let rs: Vec<f64> = ks
        .par_iter()
        .map(|&k| relative_sigma_min(problem, k, cfg))
        .collect::<Result<_>>()?;

    let mut brackets = Vec::new();
    for i in 1..npts - 1 {
        if rs[i] <= rs[i - 1] && rs[i] < rs[i + 1] {
            brackets.push((ks[i - 1], ks[i + 1]));
        }
    }
    let refined: Vec<(f64, f64, f64)> = brackets
        .par_iter()
        .map(|&(a, b)| {
            let (k, r) = golden_min(problem, a, b, opts.refine_tol, cfg)?;
            let reference = relative_sigma_min(problem, a, cfg)?.max(relative_sigma_min(problem, b, cfg)?);
            Ok((k, r, reference))
        })
        .collect::<Result<_>>()?;

    let mut spectrum = Spectrum::default();
    let mut kappas: Vec<f64> = Vec::new();
    for (k, r, reference) in refined {
        if r > opts.detect_rel * reference.max(1.0) {
            continue;
        }
        if let Some(prev) = kappas.iter().find(|&&p| (p - k).abs() < 1e3 * opts.refine_tol) {
            spectrum
                .warnings
                .push(format!("near-degenerate minima at kappa = {prev} and {k}; kept one"));
            continue;
        }
        kappas.push(k);
    }
    kappas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for k in kappas {
        spectrum.states.push(bound_state_at(problem, k, opts.rank_rel, cfg)?);
    }
    Ok(spectrum)
}

/// Kernel projections `(Q, P)` of `J(iκ)` and `J(iκ)†` with a rank threshold relative to the scale of `J`.
pub fn kernel_data(problem: &Problem, kappa: f64, rank_rel: f64, cfg: &SolverConfig) -> Result<(CMat, CMat, usize)> {
    let (j, s) = jost_on_axis(problem, kappa, cfg)?;
    let tol = rank_rel * s.max(op_norm(&j));
    let (q, info) = kernel_projection(&j, Some(tol))?;
    let (p, _) = kernel_projection(&j.adjoint(), Some(tol))?;
    Ok((q, p, problem.n() - info.rank))
}

/// Right end of sampling grids for solutions decaying like `e^{−κx}`.
pub fn decay_end(problem: &Problem, kappa: f64, cfg: &SolverConfig) -> f64 {
    let decay = (1.0 / cfg.eps_tail).ln() / (2.0 * kappa);
    problem.potential.x_max().max(decay).min(400.0)
}

/// A solution decaying like `e^{−κx}` sampled on a grid, with its exact
/// continuation `e^{−κx}·tail` beyond the last node.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayingProfile {
    pub kappa: f64,
    pub xs: Vec<f64>,
    pub y: Vec<CMat>,
    pub yp: Vec<CMat>,
    pub tail: CMat,
    /// First node from which `y = e^{−κx}·tail` holds exactly (`xs.len()` if none).
    pub exact_from: usize,
}

impl DecayingProfile {
    pub fn times(&self, m: &CMat) -> DecayingProfile {
        DecayingProfile {
            kappa: self.kappa,
            xs: self.xs.clone(),
            y: self.y.iter().map(|a| a * m).collect(),
            yp: self.yp.iter().map(|a| a * m).collect(),
            tail: &self.tail * m,
            exact_from: self.exact_from,
        }
    }

    /// `∫₀^∞ a†b` by Simpson on the grid plus the exact exponential tail.
    pub fn gram(a: &DecayingProfile, b: &DecayingProfile) -> CMat {
        assert_eq!(a.xs.len(), b.xs.len());
        let vals: Vec<CMat> = a.y.iter().zip(&b.y).map(|(u, v)| u.adjoint() * v).collect();
        let body = grid::simpson_mat(&a.xs, &vals);
        let x = *a.xs.last().unwrap();
        let s = a.kappa + b.kappa;
        body + a.tail.adjoint() * &b.tail * c((-s * x).exp() / s, 0.0)
    }

    /// `∫_{x_i}^∞ y†y` at every node: exact where `y` is a pure exponential,
    /// otherwise the fourth-order cumulative rule from there.
    pub fn tail_gram(&self) -> Vec<CMat> {
        let len = self.xs.len();
        let start = self.exact_from.min(len - 1);
        let exact = |i: usize| {
            self.tail.adjoint() * &self.tail * c((-2.0 * self.kappa * self.xs[i]).exp() / (2.0 * self.kappa), 0.0)
        };
        let head = &self.xs[..=start];
        let f: Vec<CMat> = self.y[..=start].iter().map(|u| u.adjoint() * u).collect();
        let fp: Vec<CMat> = self.y[..=start]
            .iter()
            .zip(&self.yp)
            .map(|(u, d)| d.adjoint() * u + u.adjoint() * d)
            .collect();
        let anchor = exact(start);
        let mut out: Vec<CMat> = if start == 0 {
            vec![anchor]
        } else {
            grid::cumulative_backward(head, &f, &fp).into_iter().map(|m| m + &anchor).collect()
        };
        out.extend((start + 1..len).map(exact));
        out
    }
}

/// Matching point and `K` for the bound state at `iκ` with kernel projection `Q`.
fn matching(phi: &MatrixSolution, f: &MatrixSolution, q: &CMat, kappa: f64) -> Result<(usize, CMat)> {
    let mut best: Option<(f64, usize)> = None;
    for i in 0..phi.len() {
        let cond = condition(&f.psi[i]);
        if !cond.is_finite() || cond > 1e12 {
            continue;
        }
        let inv_norm = cond / op_norm(&f.psi[i]);
        let score = kappa * phi.xs[i] + inv_norm.ln();
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, i));
        }
    }
    if let Some((_, i)) = best {
        let finv = f.psi[i].clone().try_inverse().ok_or_else(|| Error::numerical("matching: f(iκ,x₀) singular"))?;
        return Ok((i, finv * &phi.psi[i] * q));
    }
    // Fall back to derivatives where f itself is never well conditioned.
    for i in 0..phi.len() {
        if condition(&f.psi_prime[i]) < 1e12 {
            let finv = f.psi_prime[i].clone().try_inverse().unwrap();
            return Ok((i, finv * &phi.psi_prime[i] * q));
        }
    }
    Err(Error::numerical(format!(
        "dependency matrix: f(iκ,x) and f'(iκ,x) are ill-conditioned on the whole grid (kappa = {kappa})"
    )))
}

/// `φ(iκ,·)Q` on `xs` (which must start at 0 and reach past `x_max`), computed stably.
/// Returns the profile, `K`, and the matching point.
pub fn decaying_solution(
    problem: &Problem,
    kappa: f64,
    q: &CMat,
    xs: &[f64],
    cfg: &SolverConfig,
) -> Result<(DecayingProfile, CMat, f64)> {
    let x_end = *xs.last().unwrap();
    if x_end + 1e-12 < problem.potential.x_max() {
        return Err(Error::validation("decaying_solution: grid must extend to x_max"));
    }
    let f = jost_solution(problem, c(0.0, kappa), xs, cfg)?;
    let cap = (300.0 / kappa).min(x_end);
    let n_fwd = xs.iter().take_while(|&&x| x <= cap).count().max(2);
    let phi = regular_solution(problem, c(0.0, kappa), &xs[..n_fwd], cfg)?;
    let f_head = MatrixSolution {
        k: f.k,
        xs: xs[..n_fwd].to_vec(),
        psi: f.psi[..n_fwd].to_vec(),
        psi_prime: f.psi_prime[..n_fwd].to_vec(),
    };
    let (i0, k_mat) = matching(&phi, &f_head, q, kappa)?;
    let mut y = Vec::with_capacity(xs.len());
    let mut yp = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        if i <= i0 {
            y.push(&phi.psi[i] * q);
            yp.push(&phi.psi_prime[i] * q);
        } else {
            y.push(&f.psi[i] * &k_mat);
            yp.push(&f.psi_prime[i] * &k_mat);
        }
    }
    // Beyond the grid f = e^{−κx}I, because the grid reaches x_max.
    let exact_from = (i0 + 1..xs.len()).find(|&i| xs[i] >= problem.potential.x_max()).unwrap_or(xs.len());
    let profile = DecayingProfile { kappa, xs: xs.to_vec(), y, yp, tail: k_mat.clone(), exact_from };
    Ok((profile, k_mat, xs[i0]))
}

/// Jost solution at `iκ` as a decaying profile (tail `I`).
pub fn jost_profile(problem: &Problem, kappa: f64, xs: &[f64], cfg: &SolverConfig) -> Result<DecayingProfile> {
    let f = jost_solution(problem, c(0.0, kappa), xs, cfg)?;
    let n = problem.n();
    let exact_from = xs.iter().position(|&x| x >= problem.potential.x_max()).unwrap_or(xs.len());
    Ok(DecayingProfile { kappa, xs: xs.to_vec(), y: f.psi, yp: f.psi_prime, tail: CMat::identity(n, n), exact_from })
}

/// `C = H^{-1/2}Q` with `H = I − Q + ∫Qφ†φQ`, from a stable profile of `φ(iκ,·)Q`.
pub fn gl_normalization_from(profile: &DecayingProfile, q: &CMat) -> Result<(CMat, CMat)> {
    let n = q.nrows();
    if op_norm(q) == 0.0 {
        return Ok((CMat::zeros(n, n), CMat::identity(n, n)));
    }
    let g = matops::hermitian_part(&DecayingProfile::gram(profile, profile));
    let h = CMat::identity(n, n) - q + &g;
    let comm = op_norm(&(&h * q - q * &h)) / op_norm(&h);
    if comm > 1e-9 {
        return Err(Error::numerical(format!("gl_normalization: H does not commute with Q ({comm:.3e})")));
    }
    let hi = inv_sqrt_pos(&h).map_err(|e| Error::numerical(format!("gl_normalization: H not positive: {e}")))?;
    Ok((matops::hermitian_part(&(hi * q)), h))
}

/// `M = B^{-1/2}P` with `B = I − P + ∫Pf†fP`.
pub fn marchenko_normalization_from(jost: &DecayingProfile, p: &CMat) -> Result<(CMat, CMat)> {
    let n = p.nrows();
    if op_norm(p) == 0.0 {
        return Ok((CMat::zeros(n, n), CMat::identity(n, n)));
    }
    let fp = jost.times(p);
    let a = matops::hermitian_part(&DecayingProfile::gram(&fp, &fp));
    let b = CMat::identity(n, n) - p + &a;
    let bi = inv_sqrt_pos(&b).map_err(|e| Error::numerical(format!("marchenko_normalization: B not positive: {e}")))?;
    Ok((matops::hermitian_part(&(bi * p)), b))
}

/// Default sampling grid for the bound state at `κ`.
pub fn state_grid(problem: &Problem, kappa: f64, cfg: &SolverConfig) -> Vec<f64> {
    grid::uniform(decay_end(problem, kappa, cfg), cfg.h_grid)
}

/// Gel'fand–Levitan normalization `(C, H)` at `κ` for the projection `Q`.
pub fn gl_normalization(problem: &Problem, kappa: f64, q: &CMat, cfg: &SolverConfig) -> Result<(CMat, CMat)> {
    let xs = state_grid(problem, kappa, cfg);
    let (profile, _, _) = decaying_solution(problem, kappa, q, &xs, cfg)?;
    gl_normalization_from(&profile, q)
}

/// Marchenko normalization `(M, B)` at `κ` for the projection `P`.
pub fn marchenko_normalization(problem: &Problem, kappa: f64, p: &CMat, cfg: &SolverConfig) -> Result<(CMat, CMat)> {
    let xs = state_grid(problem, kappa, cfg);
    marchenko_normalization_from(&jost_profile(problem, kappa, &xs, cfg)?, p)
}

/// `D = M⁺ f(iκ,x₀)⁻¹ Φ(x₀) = M⁺ K C`.
pub fn dependency_matrix(m_mat: &CMat, k_mat: &CMat, c_mat: &CMat) -> Result<CMat> {
    Ok(pinv(m_mat, None)? * k_mat * c_mat)
}

/// Full bound-state data at a known `κ`.
pub fn bound_state_at(problem: &Problem, kappa: f64, rank_rel: f64, cfg: &SolverConfig) -> Result<BoundState> {
    let (q, p, m) = kernel_data(problem, kappa, rank_rel, cfg)?;
    if m == 0 {
        return Err(Error::numerical(format!("J(i·{kappa}) has a trivial kernel; not a bound state")));
    }
    let xs = state_grid(problem, kappa, cfg);
    let (profile, k_mat, x0) = decaying_solution(problem, kappa, &q, &xs, cfg)?;
    let (c_mat, h) = gl_normalization_from(&profile, &q)?;
    let jost = jost_profile(problem, kappa, &xs, cfg)?;
    let (m_mat, b) = marchenko_normalization_from(&jost, &p)?;
    let d = dependency_matrix(&m_mat, &k_mat, &c_mat)?;
    Ok(BoundState { kappa, m, q, p, c: c_mat, m_mat, d, h, b, k_mat, x0 })
}

/// Normalized solutions `Φ = φ(iκ,·)C` and `Ψ = f(iκ,·)M` on a common grid.
pub fn normalized_profiles(
    problem: &Problem,
    state: &BoundState,
    xs: &[f64],
    cfg: &SolverConfig,
) -> Result<(DecayingProfile, DecayingProfile)> {
    let (profile, _, _) = decaying_solution(problem, state.kappa, &state.q, xs, cfg)?;
    let jost = jost_profile(problem, state.kappa, xs, cfg)?;
    Ok((profile.times(&state.c), jost.times(&state.m_mat)))
}

/// Largest deviation among the algebraic identities of one state:
/// `(D†D − Q, DD† − P, D⁺ − D†, DD†D − D)`.
pub fn dependency_residuals(state: &BoundState) -> Result<[f64; 4]> {
    let d = &state.d;
    let dd = d.adjoint();
    let dp = pinv(d, None)?;
    Ok([
        op_norm(&(&dd * d - &state.q)),
        op_norm(&(d * &dd - &state.p)),
        op_norm(&(dp - &dd)),
        op_norm(&(d * &dd * d - d)),
    ])
}

/// The `C64` unit used to build `iκ`.
pub fn on_axis(kappa: f64) -> C64 {
    c(0.0, kappa)
}
