//! Acceptance criteria 1 to 9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specsurg::matops::{c, eye, op_norm, CMat, C64};
use specsurg::potential::{example89_perturbed, Problem};
use specsurg::solver::{jost_matrix, scattering_matrix, SolverConfig};
use specsurg::spectra::{find_bound_states, SearchOptions};
use specsurg::surgery::{self, DecayModel, SurgeryPlan};
use specsurg::verify::{invariant_battery, linspace, parseval_smeared, Level};

/// `Ṽ(1)` for the golden surgery, from an independent 50-digit evaluation.
const VTILDE_AT_1: f64 = 1.417978583856308;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn max(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

fn golden_added() -> surgery::SurgeryResult {
    surgery::apply(&Problem::example89(), &SurgeryPlan::add(1.0, eye(1) * c(4.0, 0.0)), &cfg()).unwrap()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let p = Problem::example89();
    let i = c(0.0, 1.0);
    let mut ej = 0.0f64;
    let mut es = 0.0f64;
    for k in linspace(0.1, 10.0, 50) {
        let kc = c(k, 0.0);
        let j = jost_matrix(&p, kc, &cfg()).unwrap().j[(0, 0)];
        let s = scattering_matrix(&p, k, &cfg()).unwrap()[(0, 0)];
        let je = -kc / (kc + i);
        ej = ej.max((j - je).norm() / je.norm());
        es = es.max((s + (kc + i) / (kc - i)).norm());
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        ej < 1e-6 && es < 1e-6 && secs < 30.0,
        format!("J rel err {ej:.2e} (<1e-6), S err {es:.2e} (<1e-6), {secs:.2} s (<30 s)"),
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let r = golden_added();
    let i = c(0.0, 1.0);
    let mut ej = 0.0f64;
    for k in linspace(0.1, 10.0, 50) {
        let kc = c(k, 0.0);
        let want = -kc * (kc - i) / ((kc + i) * (kc + i));
        let got = jost_matrix(&r.problem, kc, &cfg()).unwrap().j[(0, 0)];
        ej = ej.max((got - want).norm() / want.norm());
    }
    let a = r.problem.boundary.a[(0, 0)];
    let b = r.problem.boundary.b[(0, 0)];
    let ev = max(linspace(0.0, 10.0, 2001).into_iter().map(|x| {
        (r.problem.potential.sample(x)[(0, 0)].re - example89_perturbed(x)).abs()
    }));
    let v1 = r.problem.potential.sample(1.0)[(0, 0)].re;
    let e1 = (v1 - VTILDE_AT_1).abs() / VTILDE_AT_1;
    let secs = t.elapsed().as_secs_f64();
    let exact_b = a == c(0.0, 0.0) && b == c(-1.0, 0.0);
    outcome(
        ej < 1e-6 && exact_b && ev < 1e-6 && e1 < 1e-6 && secs < 60.0,
        format!(
            "J~ rel err {ej:.2e} (<1e-6), A~ = {a}, B~ = {b} (exactly 0, -1), sup |V~ - closed form| on [0,10] {ev:.2e} (<1e-6), V~(1) rel err {e1:.2e}, {secs:.2} s (<60 s)"
        ),
    )
}

fn criterion_3() -> Outcome {
    let r = golden_added();
    let fit = surgery::decay_fit(&r.original.potential, &r.problem.potential, 1.0, (6.0, 10.0)).unwrap();
    outcome(
        fit.model == DecayModel::X2E && fit.x2_ratio_spread < 0.05 && fit.growth_monotone && fit.constant.abs() > 0.0,
        format!(
            "model {} (want x2e), dV e^2x / x^2 spread on [6,10] {:.3} (<0.05), constant {:.4}, dV e^2x monotone growth {}",
            fit.model.name(),
            fit.x2_ratio_spread,
            fit.constant,
            fit.growth_monotone
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut err = 0.0f64;
    for n in [1, 2, 3] {
        let d = Problem::free_dirichlet(n);
        let nm = Problem::free_neumann(n);
        for k in [0.1, 0.7, 2.5, 9.0] {
            let kc = c(k, 0.0);
            let id = eye(n);
            err = err.max(op_norm(&(jost_matrix(&d, kc, &cfg()).unwrap().j + &id)));
            err = err.max(op_norm(&(scattering_matrix(&d, k, &cfg()).unwrap() + &id)));
            err = err.max(op_norm(&(jost_matrix(&nm, kc, &cfg()).unwrap().j + &id * (c(0.0, 1.0) * kc))));
            err = err.max(op_norm(&(scattering_matrix(&nm, k, &cfg()).unwrap() - &id)));
        }
    }
    outcome(err < 1e-10, format!("max abs error of J, S for free Dirichlet/Neumann, n = 1..3: {err:.2e} (<1e-10)"))
}

fn random_rank_one(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let v = CMat::from_fn(n, 1, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let scale = rng.gen_range(0.5..3.0);
    &v * v.adjoint() * c(scale / v.norm_squared(), 0.0)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut ec, mut ev, mut eb) = (0.0f64, 0.0f64, 0.0f64);
    for n in [1, 2] {
        let p = Problem::free_dirichlet(n);
        let c_in = random_rank_one(&mut rng, n);
        let added = surgery::apply(&p, &SurgeryPlan::add(0.7, c_in.clone()), &cfg()).unwrap();
        let spec = find_bound_states(&added.problem, &SearchOptions::default(), &cfg()).unwrap();
        match spec.find(0.7, 1e-6) {
            Some(st) => ec = ec.max(op_norm(&(&st.c - &c_in))),
            None => ec = f64::INFINITY,
        }
        let removed = surgery::apply(&added.problem, &SurgeryPlan::remove(0.7), &cfg()).unwrap();
        ev = ev.max(max(linspace(0.0, 30.0, 3001).into_iter().map(|x| op_norm(&removed.problem.potential.sample(x)))));
        eb = eb.max(op_norm(&(&removed.problem.boundary.a - &p.boundary.a)));
        eb = eb.max(op_norm(&(&removed.problem.boundary.b - &p.boundary.b)));
    }
    outcome(
        ec < 1e-6 && ev < 1e-6 && eb < 1e-8,
        format!("re-extracted C err {ec:.2e} (<1e-6), sup |V| after removal {ev:.2e} (<1e-6), (A, B) err {eb:.2e} (<1e-8)"),
    )
}

fn criterion_6() -> Outcome {
    let problems = [
        ("free n=2", Problem::free_dirichlet(2)),
        ("example89", Problem::example89()),
        ("coupled well grid", Problem::coupled_well_grid(0.01)),
    ];
    let mut failures = Vec::new();
    let mut count = 0;
    for (name, p) in &problems {
        let rep = invariant_battery(p, Level::Full, 11, &cfg());
        count += rep.checks.len();
        for ch in rep.failures() {
            failures.push(format!("{name}: {} = {:.2e} (tol {:.0e})", ch.name, ch.measured, ch.tolerance));
        }
    }
    let detail = if failures.is_empty() {
        format!("{count} battery checks passed on three problems")
    } else {
        format!("{} of {count} checks failed: {}", failures.len(), failures.join("; "))
    };
    outcome(failures.is_empty(), detail)
}

fn criterion_7() -> Outcome {
    let p = Problem::free_dirichlet(2);
    let e1 = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]);
    let e2 = CMat::from_column_slice(2, 1, &[c(0.0, 0.0), c(1.0, 0.0)]);
    let u = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, -1.0)]) * c(0.5f64.sqrt(), 0.0);
    let plans = [
        SurgeryPlan::add(1.0, &e1 * e1.adjoint() * c(2.0, 0.0)),
        SurgeryPlan::increase(1.0, &e2 * e2.adjoint(), &e2 * e2.adjoint() * c(0.5, 0.0)),
        SurgeryPlan::decrease(1.0, &u * u.adjoint()),
        SurgeryPlan::remove(1.0),
    ];
    let mut current = p.clone();
    let mut mults = Vec::new();
    for plan in &plans {
        current = match surgery::apply(&current, plan, &cfg()) {
            Ok(r) => r.problem,
            Err(e) => return outcome(false, format!("{} failed: {e}", plan.kind)),
        };
        let spec = find_bound_states(&current, &SearchOptions::default(), &cfg()).unwrap();
        mults.push(spec.find(1.0, 1e-6).map(|s| s.m).unwrap_or(0));
    }
    let ev = max(linspace(0.0, 30.0, 3001).into_iter().map(|x| op_norm(&current.potential.sample(x))));
    let eb = op_norm(&(&current.boundary.a - &p.boundary.a)).max(op_norm(&(&current.boundary.b - &p.boundary.b)));
    outcome(
        mults == [1, 2, 1, 0] && ev < 1e-5 && eb < 1e-5,
        format!("multiplicities {mults:?} (want [1, 2, 1, 0]), final sup |V| {ev:.2e}, boundary err {eb:.2e} (<1e-5)"),
    )
}

fn criterion_8() -> Outcome {
    let v2: [C64; 2] = [c(0.6, 0.0), c(0.0, 0.8)];
    let free = parseval_smeared(&Problem::free_dirichlet(2), &v2, 60.0, 2000, &cfg());
    let pert = parseval_smeared(&Problem::example89_perturbed(), &[c(1.0, 0.0)], 60.0, 2000, &cfg());
    let d1 = free.get("parseval_relative_defect").map(|c| c.measured).unwrap_or(f64::NAN);
    let d2 = pert.get("parseval_relative_defect").map(|c| c.measured).unwrap_or(f64::NAN);
    let bs = pert.get("parseval_bound_state_term").map(|c| c.measured).unwrap_or(f64::NAN);
    outcome(
        d1 < 1e-3 && d2 < 1e-3 && bs > 0.0,
        format!("defect free Dirichlet {d1:.2e}, perturbed example {d2:.2e} (<1e-3), bound-state term {bs:.3e} (>0)"),
    )
}

fn criterion_9() -> Outcome {
    let p = Problem::coupled_well_grid(0.01);
    let spec = find_bound_states(&p, &SearchOptions::default(), &cfg()).unwrap();
    let Some(deepest) = spec.states.last() else {
        return outcome(false, "the grid potential has no bound state to remove".into());
    };
    let r = surgery::solve_gl_remove(&p, deepest, &cfg()).unwrap();
    let beyond = r.diagnostics.delta_v_beyond_support.unwrap_or(f64::INFINITY);
    let sampled = max(linspace(4.0 + 1e-9, 12.0, 801).into_iter().map(|x| op_norm(&r.problem.potential.sample(x))));
    outcome(
        beyond < 1e-9 && sampled < 1e-9,
        format!("remove kappa = {:.6}: sup |V~| beyond x = 4 {beyond:.2e} (<1e-9)", deepest.kappa),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("golden forward", criterion_1),
        ("golden surgery", criterion_2),
        ("decay rate", criterion_3),
        ("free exactness", criterion_4),
        ("round trip", criterion_5),
        ("invariant battery", criterion_6),
        ("multiplicity pipeline", criterion_7),
        ("parseval", criterion_8),
        ("compact support", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = std::panic::catch_unwind(f).unwrap_or_else(|_| outcome(false, "panicked".into()));
        if !out.pass {
            failed += 1;
        }
        println!(
            "{} criterion {} ({name}): {} [{:.1} s]",
            if out.pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
