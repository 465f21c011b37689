//! Potentials, boundary matrices, hypothesis checks and the problem file format.

use serde_json::{json, Value};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid;
use crate::jsonfmt::{self, infer_dim, mat_from_json, mat_to_json};
use crate::matops::{self, c, eye, min_eigenvalue, op_norm, zeros, CMat, C64};

/// Default tail threshold: catalog entries are truncated at `x_max` with `q₆(x_max) < 1e-10`.
pub const EPS_TAIL: f64 = 1e-10;

/// Boundary matrices `(A, B)` of `-B†ψ(0) + A†ψ'(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCondition {
    pub a: CMat,
    pub b: CMat,
}

impl BoundaryCondition {
    pub fn new(a: CMat, b: CMat) -> Result<Self> {
        if a.shape() != b.shape() || a.nrows() != a.ncols() {
            return Err(Error::validation("boundary: A and B must be square of equal size"));
        }
        Ok(Self { a, b })
    }

    /// `A = 0`, `B = -I`; the free Jost matrix is then `-I`.
    pub fn dirichlet(n: usize) -> Self {
        Self { a: zeros(n), b: -eye(n) }
    }

    /// `A = I`, `B = 0`.
    pub fn neumann(n: usize) -> Self {
        Self { a: eye(n), b: zeros(n) }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// `‖−B†A + A†B‖`.
    pub fn selfadjoint_residual(&self) -> f64 {
        op_norm(&(-self.b.adjoint() * &self.a + self.a.adjoint() * &self.b))
    }

    /// Smallest eigenvalue of `A†A + B†B`.
    pub fn positivity(&self) -> f64 {
        min_eigenvalue(&(self.a.adjoint() * &self.a + self.b.adjoint() * &self.b))
    }

    pub fn is_legal(&self) -> bool {
        self.selfadjoint_residual() <= 1e-10 && self.positivity() > 1e-10
    }
}

/// Closed-form potentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Catalog {
    /// `V ≡ 0`.
    Free,
    /// `V(x) = −8e^{2x}/(1+e^{2x})²`, scalar, no bound states with Dirichlet data.
    Example89,
    /// The potential obtained from `Example89` by adding a bound state at
    /// `κ = 1` with normalization `C = 4` (Dirichlet data).
    Example89Perturbed,
    /// Compactly supported 2×2 well on `[0, 4]`:
    /// `V = −3 sin²(πx/4) [[2, 1−i/2], [1+i/2, 1.5]]`.
    CoupledWell,
}

impl Catalog {
    pub const ALL: [Catalog; 4] =
        [Catalog::Free, Catalog::Example89, Catalog::Example89Perturbed, Catalog::CoupledWell];

    pub fn name(self) -> &'static str {
        match self {
            Catalog::Free => "free",
            Catalog::Example89 => "example89",
            Catalog::Example89Perturbed => "example89_perturbed",
            Catalog::CoupledWell => "coupled_well",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Catalog::Free => "V = 0, any n",
            Catalog::Example89 => "V = -8 e^{2x}/(1+e^{2x})^2, n = 1",
            Catalog::Example89Perturbed => "example89 with a bound state added at kappa = 1, C = 4, n = 1",
            Catalog::CoupledWell => "-3 sin^2(pi x/4) [[2, 1-i/2], [1+i/2, 1.5]] on [0, 4], n = 2",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Catalog::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::validation(format!("unknown catalog potential '{name}'")))
    }

    /// Fixed dimension, or `None` when any `n` is allowed.
    pub fn fixed_dim(self) -> Option<usize> {
        match self {
            Catalog::Free => None,
            Catalog::Example89 | Catalog::Example89Perturbed => Some(1),
            Catalog::CoupledWell => Some(2),
        }
    }

    fn scalar(self, x: f64) -> f64 {
        match self {
            Catalog::Free | Catalog::CoupledWell => 0.0,
            Catalog::Example89 => example89(x),
            Catalog::Example89Perturbed => example89_perturbed(x),
        }
    }
}

/// `−8e^{2x}/(1+e^{2x})²`, written with `e^{−2x}` to avoid overflow.
pub fn example89(x: f64) -> f64 {
    let e = (-2.0 * x).exp();
    -8.0 * e / ((1.0 + e) * (1.0 + e))
}

/// Closed form of the potential produced by adding `κ = 1, C = 4` to [`example89`].
pub fn example89_perturbed(x: f64) -> f64 {
    if x > 150.0 {
        return 0.0;
    }
    let (ch, sh) = (x.cosh(), x.sinh());
    let (ch2, sh2) = ((2.0 * x).cosh(), (2.0 * x).sinh());
    let (ch4, sh4) = ((4.0 * x).cosh(), (4.0 * x).sinh());
    let x2 = x * x;
    let q27 = 7.0 - 24.0 * x + 32.0 * x2 * x2 + 64.0 * x2 * ch2 - (16.0 + 32.0 * x) * sh2;
    let q28 = -(9.0 + 8.0 * x2) * ch4 + (-2.0 + 20.0 * x) * sh4;
    let den = (1.0 - 2.0 * x) * ch + (1.0 + 4.0 * x2 + ch2) * sh;
    (q27 + q28) / (den * den)
}

fn coupled_well(x: f64) -> CMat {
    if !(0.0..=4.0).contains(&x) {
        return zeros(2);
    }
    let s = (std::f64::consts::PI * x / 4.0).sin();
    let a = -3.0 * s * s;
    matops::from_rows(2, &[c(2.0 * a, 0.0), c(a, -0.5 * a), c(a, 0.5 * a), c(1.5 * a, 0.0)])
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    Catalog(Catalog),
    /// Samples on strictly increasing nodes starting at 0.
    Grid { x: Vec<f64>, v: Vec<CMat>, uniform_h: Option<f64> },
}

/// A hermitian `n×n` potential on the half line.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub n: usize,
    pub kind: PotentialKind,
    /// `V` is treated as zero for `x > support_end`.
    pub support_end: f64,
}

impl Potential {
    pub fn catalog(cat: Catalog, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("potential: n must be positive"));
        }
        if let Some(d) = cat.fixed_dim() {
            if d != n {
                return Err(Error::validation(format!("catalog '{}' has n = {d}, got {n}", cat.name())));
            }
        }
        let support_end = match cat {
            Catalog::Free => 0.0,
            Catalog::CoupledWell => 4.0,
            Catalog::Example89 => 0.5 * (4.0 / EPS_TAIL - 1.0).ln(),
            Catalog::Example89Perturbed => tail_cutoff(|x| example89_perturbed(x).abs(), EPS_TAIL),
        };
        Ok(Self { n, kind: PotentialKind::Catalog(cat), support_end })
    }

    pub fn free(n: usize) -> Self {
        Self::catalog(Catalog::Free, n).expect("n > 0")
    }

    /// Grid potential from samples. Values must be hermitian to `1e-12`
    /// relative; `support_end` must not exceed the last node.
    pub fn grid(x: Vec<f64>, v: Vec<CMat>, support_end: f64) -> Result<Self> {
        if x.len() < 4 || x.len() != v.len() {
            return Err(Error::validation("grid potential: need at least 4 nodes and one value per node"));
        }
        if x[0] != 0.0 {
            return Err(Error::validation("grid potential: first node must be x = 0"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("grid potential: nodes must be finite and strictly increasing"));
        }
        if !(support_end >= 0.0 && support_end <= *x.last().unwrap() * (1.0 + 1e-12)) {
            return Err(Error::validation("grid potential: support_end must lie within the grid"));
        }
        let n = v[0].nrows();
        for (i, vi) in v.iter().enumerate() {
            if vi.shape() != (n, n) {
                return Err(Error::validation(format!("grid potential: node {i} has wrong shape")));
            }
            if !matops::is_finite(vi) {
                return Err(Error::validation(format!("grid potential: node {i} is not finite")));
            }
            let defect = op_norm(&(vi - vi.adjoint()));
            if defect > 1e-12 * op_norm(vi).max(1.0) {
                return Err(Error::validation(format!(
                    "grid potential: value at node {i} is not hermitian (defect {defect:.3e})"
                )));
            }
        }
        let h = x[1] - x[0];
        let uniform = x
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
            .then_some(h);
        Ok(Self { n, kind: PotentialKind::Grid { x, v, uniform_h: uniform }, support_end })
    }

    /// Sample a closure on nodes and wrap it as a grid potential.
    pub fn from_fn(xs: Vec<f64>, support_end: f64, f: impl Fn(f64) -> CMat) -> Result<Self> {
        let v = xs.iter().map(|&x| matops::hermitian_part(&f(x))).collect();
        Self::grid(xs, v, support_end)
    }

    /// Right end of the region where `V` is not treated as zero.
    pub fn x_max(&self) -> f64 {
        self.support_end
    }

    pub fn is_free(&self) -> bool {
        matches!(self.kind, PotentialKind::Catalog(Catalog::Free))
    }

    pub fn grid_nodes(&self) -> Option<&[f64]> {
        match &self.kind {
            PotentialKind::Grid { x, .. } => Some(x),
            _ => None,
        }
    }

    /// `V(x)`; grids are interpolated with local quintics, zero beyond `support_end`.
    pub fn sample(&self, x: f64) -> CMat {
        let mut out = zeros(self.n);
        self.sample_into(x, out.as_mut_slice());
        out
    }

    /// Column-major `V(x)` into `buf` (length `n²`).
    pub fn sample_into(&self, x: f64, buf: &mut [C64]) {
        let n = self.n;
        if x > self.support_end || x < 0.0 {
            buf.iter_mut().for_each(|z| *z = C64::default());
            return;
        }
        match &self.kind {
            PotentialKind::Catalog(Catalog::CoupledWell) => buf.copy_from_slice(coupled_well(x).as_slice()),
            PotentialKind::Catalog(cat) => {
                let s = cat.scalar(x);
                buf.iter_mut().for_each(|z| *z = C64::default());
                for i in 0..n {
                    buf[i * n + i] = c(s, 0.0);
                }
            }
            PotentialKind::Grid { x: xs, v, uniform_h } => {
                // Sixth-order stencils where the grid is long enough.
                if xs.len() >= 6 {
                    let (s, w) = match uniform_h {
                        Some(h) => grid::lagrange_uniform::<6>(xs.len(), *h, x),
                        None => grid::lagrange::<6>(xs, x),
                    };
                    combine(v, s, &w, buf);
                } else {
                    let (s, w) = grid::lagrange::<4>(xs, x);
                    combine(v, s, &w, buf);
                }
            }
        }
    }

    /// `q₆(x) = ∫_x^∞ ‖V(y)‖ dy` (operator norm).
    pub fn tail_integral(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::validation("tail_integral: x must be nonnegative"));
        }
        if x >= self.support_end {
            return Ok(0.0);
        }
        Ok(match &self.kind {
            PotentialKind::Catalog(Catalog::Free) => 0.0,
            PotentialKind::Catalog(Catalog::Example89) => 4.0 / (1.0 + (2.0 * x).exp()),
            PotentialKind::Catalog(_) => {
                let end = self.support_end;
                let m = (((end - x) / 1e-3).ceil() as usize).max(8);
                let xs: Vec<f64> = (0..=m).map(|i| x + (end - x) * i as f64 / m as f64).collect();
                let f: Vec<f64> = xs.iter().map(|&y| op_norm(&self.sample(y))).collect();
                grid::simpson(&xs, &f).max(0.0)
            }
            PotentialKind::Grid { x: xs, .. } => {
                let mut nodes = vec![x];
                nodes.extend(xs.iter().copied().filter(|&y| y > x && y < self.support_end));
                nodes.push(self.support_end);
                nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
                if nodes.len() < 2 {
                    return Ok(0.0);
                }
                let f: Vec<f64> = nodes.iter().map(|&y| op_norm(&self.sample(y))).collect();
                nodes.windows(2).zip(f.windows(2)).map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1])).sum()
            }
        })
    }

    /// `∫(1+x)^p ‖V‖` for `p = 0, 1, 2`.
    pub fn moments(&self) -> [f64; 3] {
        let end = self.support_end;
        if end <= 0.0 || self.is_free() {
            return [0.0; 3];
        }
        let xs: Vec<f64> = match &self.kind {
            PotentialKind::Grid { x, .. } => {
                let mut v: Vec<f64> = x.iter().copied().filter(|&y| y < end).collect();
                v.push(end);
                v
            }
            _ => {
                let m = ((end / 1e-3).ceil() as usize).max(16);
                (0..=m).map(|i| end * i as f64 / m as f64).collect()
            }
        };
        let f: Vec<f64> = xs.iter().map(|&y| op_norm(&self.sample(y))).collect();
        let w = grid::simpson_weights(&xs);
        let mut out = [0.0; 3];
        for ((wi, fi), xi) in w.iter().zip(&f).zip(&xs) {
            for (p, o) in out.iter_mut().enumerate() {
                *o += wi * fi * (1.0 + xi).powi(p as i32);
            }
        }
        out
    }
}

fn combine(v: &[CMat], s: usize, w: &[f64], buf: &mut [C64]) {
    for (k, z) in buf.iter_mut().enumerate() {
        *z = w.iter().enumerate().map(|(a, wa)| v[s + a].as_slice()[k] * *wa).sum();
    }
}

/// Smallest `x` with `∫_x^∞ f < eps`, for a nonnegative `f` that decays exponentially.
fn tail_cutoff(f: impl Fn(f64) -> f64, eps: f64) -> f64 {
    let far = 80.0;
    let h = 1e-3;
    let m = (far / h) as usize;
    let mut acc = 0.0;
    let mut prev = f(far);
    for i in (0..m).rev() {
        let x = i as f64 * h;
        let cur = f(x);
        acc += 0.5 * h * (prev + cur);
        if acc >= eps {
            return x + h;
        }
        prev = cur;
    }
    0.0
}

/// Potential plus boundary condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub potential: Potential,
    pub boundary: BoundaryCondition,
}

/// One pass/fail line of a validation report.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<HypothesisCheck>,
    /// `∫‖V‖`, `∫(1+x)‖V‖`, `∫(1+x)²‖V‖`.
    pub moments: [f64; 3],
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} (measured {:.3e}, tolerance {:.1e})", c.name, c.measured, c.tolerance))
            .collect()
    }
}

impl Problem {
    pub fn new(potential: Potential, boundary: BoundaryCondition) -> Result<Self> {
        if potential.n != boundary.n() {
            return Err(Error::validation(format!(
                "problem: potential has n = {} but boundary matrices are {}x{}",
                potential.n,
                boundary.n(),
                boundary.n()
            )));
        }
        Ok(Self { potential, boundary })
    }

    pub fn n(&self) -> usize {
        self.potential.n
    }

    pub fn free_dirichlet(n: usize) -> Self {
        Self::new(Potential::free(n), BoundaryCondition::dirichlet(n)).unwrap()
    }

    pub fn free_neumann(n: usize) -> Self {
        Self::new(Potential::free(n), BoundaryCondition::neumann(n)).unwrap()
    }

    pub fn example89() -> Self {
        Self::new(Potential::catalog(Catalog::Example89, 1).unwrap(), BoundaryCondition::dirichlet(1)).unwrap()
    }

    pub fn example89_perturbed() -> Self {
        Self::new(Potential::catalog(Catalog::Example89Perturbed, 1).unwrap(), BoundaryCondition::dirichlet(1))
            .unwrap()
    }

    /// The coupled well sampled every `h` on `[0, 4]` as a grid potential,
    /// with Dirichlet data.
    pub fn coupled_well_grid(h: f64) -> Self {
        let pot = Potential::from_fn(crate::grid::uniform(4.0, h), 4.0, coupled_well).unwrap();
        Self::new(pot, BoundaryCondition::dirichlet(2)).unwrap()
    }

    /// Check hermiticity of `V`, the two boundary conditions and finiteness of the moments.
    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        let mut herm = 0.0f64;
        match &self.potential.kind {
            PotentialKind::Grid { v, .. } => {
                for vi in v {
                    herm = herm.max(op_norm(&(vi - vi.adjoint())) / op_norm(vi).max(1.0));
                }
            }
            PotentialKind::Catalog(_) => {
                let end = self.potential.support_end;
                for i in 0..=200 {
                    let vi = self.potential.sample(end * i as f64 / 200.0);
                    herm = herm.max(op_norm(&(&vi - vi.adjoint())) / op_norm(&vi).max(1.0));
                }
            }
        }
        checks.push(HypothesisCheck { name: "V hermitian", measured: herm, tolerance: 1e-12, pass: herm <= 1e-12 });
        let sa = self.boundary.selfadjoint_residual();
        checks.push(HypothesisCheck { name: "-B^dag A + A^dag B = 0", measured: sa, tolerance: 1e-10, pass: sa <= 1e-10 });
        let pos = self.boundary.positivity();
        checks.push(HypothesisCheck {
            name: "A^dag A + B^dag B > 0",
            measured: pos,
            tolerance: 1e-10,
            pass: pos > 1e-10,
        });
        let moments = self.potential.moments();
        let finite = moments.iter().all(|m| m.is_finite());
        checks.push(HypothesisCheck {
            name: "finite first moment",
            measured: moments[1],
            tolerance: f64::INFINITY,
            pass: finite,
        });
        let mut warnings = Vec::new();
        if moments[2] > 1e6 {
            warnings.push(format!("large second moment {:.3e}; some identities assume it is finite", moments[2]));
        }
        ValidationReport { checks, moments, warnings }
    }

    /// Reject problems whose boundary data or potential fail the hypotheses.
    pub fn ensure_valid(&self) -> Result<()> {
        let rep = self.validate();
        if rep.pass() {
            Ok(())
        } else {
            Err(Error::validation(format!("problem violates: {}", rep.failures().join("; "))))
        }
    }

    pub fn to_json(&self) -> Value {
        let p = &self.potential;
        let (kind, catalog, xs, vs) = match &p.kind {
            PotentialKind::Catalog(cat) => ("catalog", Value::String(cat.name().into()), vec![], vec![]),
            PotentialKind::Grid { x, v, .. } => ("grid", Value::Null, x.clone(), v.iter().map(mat_to_json).collect()),
        };
        let mut obj = json!({
            "n": p.n,
            "kind": kind,
            "x": xs,
            "V": vs,
            "support_end": p.support_end,
            "boundary": {"A": mat_to_json(&self.boundary.a), "B": mat_to_json(&self.boundary.b)},
        });
        if !catalog.is_null() {
            obj["catalog"] = catalog;
        }
        obj
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let n = v["n"]
            .as_u64()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::validation("problem file: 'n' must be a positive integer"))? as usize;
        let bnd = &v["boundary"];
        let a = mat_from_json(&bnd["A"], n, "boundary.A")?;
        let b = mat_from_json(&bnd["B"], n, "boundary.B")?;
        let potential = match v["kind"].as_str() {
            Some("catalog") => {
                let name = v["catalog"]
                    .as_str()
                    .ok_or_else(|| Error::validation("problem file: catalog kind needs a 'catalog' name"))?;
                Potential::catalog(Catalog::from_name(name)?, n)?
            }
            Some("grid") => {
                let xs: Vec<f64> = v["x"]
                    .as_array()
                    .ok_or_else(|| Error::validation("problem file: 'x' must be an array"))?
                    .iter()
                    .map(|e| e.as_f64().ok_or_else(|| Error::validation("problem file: 'x' entries must be numbers")))
                    .collect::<Result<_>>()?;
                let vals = v["V"]
                    .as_array()
                    .ok_or_else(|| Error::validation("problem file: 'V' must be an array"))?;
                if let Some(first) = vals.first() {
                    if infer_dim(first, "V[0]")? != n {
                        return Err(Error::validation("problem file: V entries do not match n"));
                    }
                }
                let vs: Vec<CMat> = vals
                    .iter()
                    .enumerate()
                    .map(|(i, e)| mat_from_json(e, n, &format!("V[{i}]")))
                    .collect::<Result<_>>()?;
                let end = v["support_end"]
                    .as_f64()
                    .ok_or_else(|| Error::validation("problem file: 'support_end' must be a number"))?;
                Potential::grid(xs, vs, end)?
            }
            _ => return Err(Error::validation("problem file: 'kind' must be \"grid\" or \"catalog\"")),
        };
        Problem::new(potential, BoundaryCondition::new(a, b)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, jsonfmt::to_string(&self.to_json())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_dirichlet_validates() {
        let rep = Problem::free_dirichlet(2).validate();
        assert!(rep.pass());
        assert_eq!(rep.moments, [0.0; 3]);
    }

    #[test]
    fn zero_boundary_fails_positivity() {
        let p = Problem::new(Potential::free(1), BoundaryCondition::new(zeros(1), zeros(1)).unwrap()).unwrap();
        let rep = p.validate();
        assert!(!rep.pass());
        assert!(rep.failures()[0].contains("A^dag A + B^dag B"));
    }

    #[test]
    fn gauge_invariance_of_verdicts() {
        let t = matops::from_rows(2, &[c(1.0, 1.0), c(0.0, 2.0), c(0.5, 0.0), c(3.0, -1.0)]);
        for bc in [BoundaryCondition::dirichlet(2), BoundaryCondition::neumann(2)] {
            let g = BoundaryCondition::new(&bc.a * &t, &bc.b * &t).unwrap();
            assert_eq!(bc.is_legal(), g.is_legal());
        }
        let bad = BoundaryCondition::new(eye(2), eye(2) * c(0.0, 1.0)).unwrap();
        let g = BoundaryCondition::new(&bad.a * &t, &bad.b * &t).unwrap();
        assert!(!bad.is_legal() && !g.is_legal());
    }

    #[test]
    fn example89_values() {
        let p = Potential::catalog(Catalog::Example89, 1).unwrap();
        assert_eq!(p.sample(0.0)[(0, 0)], c(-2.0, 0.0));
        assert!((p.tail_integral(0.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(p.tail_integral(p.x_max()).unwrap() == 0.0);
        assert!((4.0 / (1.0 + (2.0 * p.x_max()).exp()) - EPS_TAIL).abs() < 1e-14);
        // ∫|V| = 2 up to the 1e-10 truncated tail.
        let m = p.moments();
        assert!((m[0] - 2.0).abs() < 1e-8, "{}", m[0]);
        // ∫(1+x)|V| = 2 + ∫x|V|, and ∫_0^∞ 8x e^{2x}/(1+e^{2x})² = 2 ln 2.
        assert!((m[1] - (2.0 + 2.0 * 2f64.ln())).abs() < 1e-8, "{}", m[1]);
    }

    #[test]
    fn perturbed_closed_form() {
        assert!((example89_perturbed(0.0) + 2.0).abs() < 1e-14);
        assert!((example89_perturbed(1.0) - 1.417978583856308).abs() < 1e-13);
        assert!((example89_perturbed(2.0) - 0.03616077405181529).abs() < 1e-14);
        let d10 = example89_perturbed(10.0) - example89(10.0);
        assert!((d10 / -1.0058397782699157e-05 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn grid_sampling_and_tail() {
        let xs = grid::uniform(5.0, 0.01);
        let p = Potential::from_fn(xs, 5.0, |x| matops::diag(&[(x - 5.0) * x])).unwrap();
        assert_eq!(p.tail_integral(6.0).unwrap(), 0.0);
        assert_eq!(p.sample(5.5)[(0, 0)], c(0.0, 0.0));
        let x = 2.345;
        assert!((p.sample(x)[(0, 0)].re - (x - 5.0) * x).abs() < 1e-13);
        let q = p.tail_integral(4.0).unwrap();
        assert!((q - 13.0 / 6.0).abs() < 1e-4);
        assert!(p.tail_integral(3.0).unwrap() >= q);
    }

    #[test]
    fn grid_rejects_nonhermitian() {
        let xs = grid::uniform(1.0, 0.1);
        let bad = matops::from_rows(2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let vs = vec![bad; xs.len()];
        assert!(Potential::grid(xs, vs, 1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let free = Problem::free_dirichlet(2);
        free.save(&path).unwrap();
        assert_eq!(Problem::load(&path).unwrap(), free);
        let xs = grid::uniform(2.0, 0.1);
        let pot = Potential::from_fn(xs, 1.5, |x| {
            matops::from_rows(2, &[c(x.sin(), 0.0), c(0.1 / 3.0, x), c(0.1 / 3.0, -x), c(-x, 0.0)])
        })
        .unwrap();
        let p = Problem::new(pot, BoundaryCondition::neumann(2)).unwrap();
        p.save(&path).unwrap();
        assert_eq!(Problem::load(&path).unwrap(), p);
    }
}
