//! Acceptance suite: reproduces the published convergence tables and runs
//! the property checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset:
//! `cargo test -p mixedflow --test acceptance -- 1 7`.

use std::time::Instant;

use mixedflow::assembly::{
    assemble_convection, assemble_convection_jacobian, convection_form, project_moments, strain_moments,
    ConvectionMode, ConvectionOutput,
};
use mixedflow::basis::{gauss_rule, tabulate, Space};
use mixedflow::constitutive::{flux, solve_local_stress, ConstitutiveModel, LocalStressProblem};
use mixedflow::dofs::DirichletData;
use mixedflow::prelude::*;
use mixedflow::solvers::{outer_metric, OuterRecord};
use mixedflow::tensor::SymTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(level, err_T, err_u, err_p, iters)`
type PaperRow = (u32, f64, f64, f64, usize);

const TABLE1: [PaperRow; 4] = [
    (2, 6.04199e-2, 7.51266e-2, 3.02263e-2, 1),
    (3, 1.44750e-2, 1.82293e-2, 6.18331e-3, 1),
    (4, 3.58096e-3, 4.52460e-3, 1.46371e-3, 1),
    (5, 8.92901e-4, 1.12913e-3, 3.60874e-4, 1),
];
const TABLE2_ROW3: PaperRow = (3, 7.78829e-3, 1.86706e-2, 6.18695e-3, 182);
const TABLE5: [PaperRow; 4] = [
    (2, 3.57028e-2, 8.21057e-2, 3.02063e-2, 10),
    (3, 7.73342e-3, 1.86606e-2, 6.18238e-3, 7),
    (4, 1.85742e-3, 4.55172e-3, 1.46368e-3, 7),
    (5, 4.59753e-4, 1.13121e-3, 3.60876e-4, 7),
];
const TABLE6: [PaperRow; 4] = [
    (2, 3.65187e-2, 3.80529e-2, 5.22497e-2, 1),
    (3, 5.61550e-3, 6.85310e-3, 1.07102e-2, 1),
    (4, 1.32332e-3, 1.86233e-3, 2.53671e-3, 1),
    (5, 3.95496e-4, 5.79343e-4, 6.25652e-4, 1),
];
const TABLE8: [PaperRow; 3] = [
    (2, 3.50999e-2, 6.78690e-2, 5.22585e-2, 11),
    (3, 4.56878e-3, 9.56288e-3, 1.07075e-2, 8),
    (4, 8.00090e-4, 2.03639e-3, 2.53571e-3, 7),
];
const TABLE9: [PaperRow; 4] = [
    (2, 3.57082e-2, 8.21052e-2, 3.02063e-2, 10),
    (3, 7.73745e-3, 1.86629e-2, 6.18241e-3, 8),
    (4, 1.85777e-3, 4.55234e-3, 1.46369e-3, 8),
    (5, 4.60268e-4, 1.13344e-3, 3.60885e-4, 8),
];
/// `err_T` at level 5 with `tau = 0.01` for `delta = 1e-5` and `1e-6`.
const DETERIORATION: (f64, f64) = (8.87e-4, 4.67e-4);

struct Run {
    level: u32,
    errors: ErrorTriple,
    iters: usize,
    records: Vec<OuterRecord>,
    state: FlowState,
    disc: Discretization,
}

fn solve(id: CaseId, alpha: f64, gamma: f64, level: u32, config: SolverConfig) -> Result<Run, String> {
    let case = ManufacturedCase::new(id, ConstitutiveModel::new(alpha, gamma).map_err(|e| e.to_string())?);
    let mesh = build_mesh(MeshSpec::new(case.domain(), level).map_err(|e| e.to_string())?);
    let disc = Discretization::new(mesh).map_err(|e| e.to_string())?;
    let problem = FlowProblem::manufactured(&disc, &case);
    let (state, trace) = mixedflow::solvers::run(&problem, &config).map_err(|e| format!("level {level}: {e}"))?;
    let errors = compute_errors(&disc, &state, &case).map_err(|e| e.to_string())?;
    drop(problem);
    Ok(Run { level, errors, iters: trace.iterations(), records: trace.records, state, disc })
}

fn lm(tau: f64) -> SolverConfig {
    SolverConfig { tau, algorithm: Algorithm::LionsMercier, ..SolverConfig::default() }
}

fn fp() -> SolverConfig {
    SolverConfig { algorithm: Algorithm::FixedPoint, ..SolverConfig::default() }
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

/// Compares computed rows to the paper; `iter_slack = None` means exact.
fn compare(runs: &[Run], table: &[PaperRow], tol: f64, iter_slack: usize) -> (bool, String) {
    let mut ok = true;
    let mut lines = Vec::new();
    for (r, &(n, et, eu, ep, it)) in runs.iter().zip(table) {
        assert_eq!(r.level, n);
        let devs = [rel(r.errors.err_t, et), rel(r.errors.err_u, eu), rel(r.errors.err_p, ep)];
        let iter_ok = r.iters.abs_diff(it) <= iter_slack;
        let row_ok = devs.iter().all(|d| *d <= tol) && iter_ok;
        ok &= row_ok;
        lines.push(format!(
            "    n={n} err_T={:.5e} ({:+.2}%) err_u={:.5e} ({:+.2}%) err_p={:.5e} ({:+.2}%) iters={} (paper {it}){}",
            r.errors.err_t,
            100.0 * (r.errors.err_t - et) / et,
            r.errors.err_u,
            100.0 * (r.errors.err_u - eu) / eu,
            r.errors.err_p,
            100.0 * (r.errors.err_p - ep) / ep,
            r.iters,
            if row_ok { "" } else { "  <-- out of tolerance" }
        ));
    }
    (ok && runs.len() == table.len(), lines.join("\n"))
}

fn study(id: CaseId, gamma: f64, levels: &[u32], config: SolverConfig) -> Result<Vec<Run>, String> {
    levels.iter().map(|&n| solve(id, 1.0, gamma, n, config)).collect()
}

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[derive(Default)]
struct Shared {
    table5: Option<Vec<Run>>,
    table9: Option<Vec<Run>>,
}

fn criterion1(_: &mut Shared) -> Outcome {
    let runs = study(CaseId::Case1, 0.0, &[2, 3, 4, 5], lm(0.01))?;
    let (ok, d) = compare(&runs, &TABLE1, 0.01, 0);
    verdict(ok, d)
}

fn criterion2(s: &mut Shared) -> Outcome {
    let runs = study(CaseId::Case1, 1.0, &[2, 3, 4, 5], lm(0.5))?;
    let (ok, d) = compare(&runs, &TABLE5, 0.02, 2);
    s.table5 = Some(runs);
    verdict(ok, d)
}

fn criterion3(s: &mut Shared) -> Outcome {
    let runs = study(CaseId::Case1, 1.0, &[2, 3, 4, 5], fp())?;
    let (ok, d) = compare(&runs, &TABLE9, 0.02, 2);
    s.table9 = Some(runs);
    verdict(ok, d)
}

fn criterion4(_: &mut Shared) -> Outcome {
    let run = solve(CaseId::Case1, 1.0, 1.0, 3, lm(0.01))?;
    let it = TABLE2_ROW3.4;
    let iter_ok = (run.iters as f64 - it as f64).abs() <= 0.1 * it as f64;
    // iteration count is judged by the relative band below
    let (ok, d) = compare(std::slice::from_ref(&run), &[TABLE2_ROW3], 0.02, usize::MAX);
    verdict(ok && iter_ok, format!("{d}\n    iterations {} vs paper {it} (±10%)", run.iters))
}

fn criterion5(_: &mut Shared) -> Outcome {
    let runs = study(CaseId::Case2, 0.0, &[2, 3, 4, 5], lm(0.5))?;
    let (ok, d) = compare(&runs, &TABLE6, 0.05, 0);
    verdict(ok, d)
}

fn criterion6(_: &mut Shared) -> Outcome {
    let runs = study(CaseId::Case2, 1.0, &[2, 3, 4], lm(0.5))?;
    let (ok, d) = compare(&runs, &TABLE8, 0.05, 2);
    verdict(ok, d)
}

fn criterion7(s: &mut Shared) -> Outcome {
    if s.table5.is_none() {
        s.table5 = Some(study(CaseId::Case1, 1.0, &[2, 3, 4, 5], lm(0.5))?);
    }
    let runs = s.table5.as_ref().unwrap();
    let pick = |f: fn(&ErrorTriple) -> f64| -> Vec<f64> {
        runs.iter().filter(|r| r.level >= 3).map(|r| f(&r.errors)).collect()
    };
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, errs) in [("T", pick(|e| e.err_t)), ("u", pick(|e| e.err_u)), ("p", pick(|e| e.err_p))] {
        let rates = convergence_rate(&errs).map_err(|e| e.to_string())?;
        ok &= rates.iter().all(|r| (1.85..=2.15).contains(r));
        lines.push(format!("    {name}: rates 3->4->5 = {rates:.3?}"));
    }
    verdict(ok, lines.join("\n"))
}

fn criterion8(_: &mut Shared) -> Outcome {
    let loose = solve(CaseId::Case1, 1.0, 1.0, 5, lm(0.01))?;
    let tight = solve(CaseId::Case1, 1.0, 1.0, 5, SolverConfig { delta_outer: 1e-6, ..lm(0.01) })?;
    let ratio = loose.errors.err_t / tight.errors.err_t;
    let want = DETERIORATION.0 / DETERIORATION.1;
    verdict(
        rel(ratio, want) <= 0.15,
        format!(
            "    delta=1e-5: err_T={:.4e} ({} iters); delta=1e-6: err_T={:.4e} ({} iters); ratio {:.3} vs paper {:.3}",
            loose.errors.err_t, loose.iters, tight.errors.err_t, tight.iters, ratio, want
        ),
    )
}

fn criterion9(s: &mut Shared) -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool, detail: String| {
        if !ok {
            failures.push(format!("{name}: {detail}"));
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // constitutive map: monotonicity and Lipschitz constant 1
    let mut worst_mono = f64::INFINITY;
    let mut worst_lip = 0.0f64;
    for _ in 0..10_000 {
        let mut t =
            || SymTensor::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let (r, q) = (t(), t());
        let d = flux(&r) - flux(&q);
        worst_mono = worst_mono.min(d.dot(&(r - q)));
        worst_lip = worst_lip.max(d.norm() / (r - q).norm());
    }
    check("monotonicity", worst_mono >= -1e-14, format!("min {worst_mono:e}"));
    check("lipschitz", worst_lip <= 1.0 + 1e-12, format!("max ratio {worst_lip}"));

    // convection: skew symmetry and Jacobian against finite differences
    let disc = Discretization::new(build_mesh(MeshSpec::new(Domain::UnitSquare, 2).unwrap())).unwrap();
    let n_free = disc.spaces.n_free();
    let u = disc.spaces.interpolate_velocity(|x| [(2.0 * x[1]).sin() + x[0] * x[0], x[0] * x[1] - 0.3]);
    let mut worst_skew = 0.0f64;
    for _ in 0..10 {
        let a: Vec<f64> = (0..disc.spaces.n_u).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..disc.spaces.n_u).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst_skew = worst_skew.max(convection_form(&disc, &a, &v, &v).abs());
    }
    check("skew symmetry", worst_skew < 1e-12, format!("max |d(v;v,v)| {worst_skew:e}"));
    let jac = assemble_convection_jacobian(&disc, &u, None);
    let resid = |w: &[f64]| -> Vec<f64> {
        let ConvectionOutput::Residual(r) = assemble_convection(&disc, w, ConvectionMode::Residual) else {
            unreachable!()
        };
        r
    };
    let r0 = resid(&u);
    let mut worst_fd = 0.0f64;
    for _ in 0..10 {
        let w_free: Vec<f64> = (0..n_free).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eps = 1e-6;
        let mut up = u.clone();
        disc.spaces.add_free(&mut up, &w_free.iter().map(|v| v * eps).collect::<Vec<_>>());
        let r1 = resid(&up);
        let jw = jac.mul_vec(&w_free);
        let err = r1.iter().zip(&r0).zip(&jw).map(|((a, b), c)| ((a - b) / eps - c).powi(2)).sum::<f64>().sqrt();
        let scale = jw.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_fd = worst_fd.max(err / scale);
    }
    check("convection jacobian", worst_fd < 1e-5, format!("max relative FD mismatch {worst_fd:e}"));

    // local stress solve against a scalar bisection oracle
    let elem = &disc.kernel.stress;
    let e_dir = SymTensor::diag(1.0, -1.0) * (1.0 / 2f64.sqrt());
    let mut worst_local = 0.0f64;
    for &dval in &[0.1, 0.7, 1.5, 4.0] {
        let mut coeffs = [0.0; 27];
        for (c, v) in e_dir.components().iter().enumerate() {
            for k in 0..9 {
                coeffs[9 * c + k] = dval * v;
            }
        }
        let rhs = elem.mass_apply(&coeffs);
        let p = LocalStressProblem { a: 1.0, b: 1.0, rhs: &rhs };
        let (t, _) = solve_local_stress(elem, &p, &[0.0; 27], 1e-13).map_err(|e| e.to_string())?;
        let (mut lo, mut hi) = (0.0, dval);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + mid / (1.0 + mid * mid).sqrt() < dval {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        for (c, v) in e_dir.components().iter().enumerate() {
            for k in 0..9 {
                worst_local = worst_local.max((t[9 * c + k] - oracle * v).abs());
            }
        }
    }
    check("local solve vs bisection", worst_local <= 1e-10, format!("max deviation {worst_local:e}"));

    // quadrature exactness to degree 2k-1
    let mut worst_quad = 0.0f64;
    for k in 1..=6 {
        let rule = gauss_rule(k).unwrap();
        for a in 0..2 * k {
            for b in 0..2 * k {
                let got = rule.integrate(|x| x[0].powi(a as i32) * x[1].powi(b as i32));
                let mono = |p: usize| if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                worst_quad = worst_quad.max((got - mono(a) * mono(b)).abs());
            }
        }
    }
    check("quadrature exactness", worst_quad < 1e-13, format!("max error {worst_quad:e}"));

    // D(V_h) in M_h: element projection of D(v_h) reproduces it at quadrature points
    let v_rand: Vec<f64> = (0..disc.spaces.n_u).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let t = project_moments(&disc, &strain_moments(&disc, &v_rand));
    let rule = gauss_rule(4).unwrap();
    let q2 = tabulate(Space::Q2, &rule);
    let grads = mixedflow::basis::physical_gradients(&q2, disc.mesh.side()).unwrap();
    let mut worst_compat = 0.0f64;
    for e in 0..disc.n_elements() {
        let ve = disc.element_velocity(&v_rand, e);
        for q in 0..rule.len() {
            let mut g = [[0.0; 2]; 2];
            for k in 0..9 {
                for c in 0..2 {
                    g[c][0] += grads[9 * q + k][0] * ve[2 * k + c];
                    g[c][1] += grads[9 * q + k][1] * ve[2 * k + c];
                }
            }
            let th = elem.tensor_at(&t[27 * e..27 * e + 27], q);
            worst_compat = worst_compat.max((th - SymTensor::sym_grad(g)).norm());
        }
    }
    check("D(V_h) in M_h", worst_compat < 1e-11, format!("max deviation {worst_compat:e}"));

    // zero data gives the zero solution
    let model = ConstitutiveModel::new(1.0, 1.0).unwrap();
    let zero_problem = FlowProblem::new(
        &disc,
        DirichletData::homogeneous(&disc.spaces),
        model,
        vec![0.0; n_free],
        vec![0.0; disc.spaces.n_t],
        0.0,
    );
    for config in [lm(0.5), fp()] {
        match mixedflow::solvers::run(&zero_problem, &config) {
            Ok((st, _)) => {
                let max = st.t.iter().chain(&st.u).chain(&st.p).fold(0.0f64, |m, v| m.max(v.abs()));
                check("zero data", max == 0.0, format!("{:?}: max |state| {max:e}", config.algorithm));
            }
            Err(e) => check("zero data", false, e.to_string()),
        }
    }

    // a priori bound at every outer iterate of criteria 2 and 3
    if s.table5.is_none() {
        s.table5 = Some(study(CaseId::Case1, 1.0, &[2, 3, 4, 5], lm(0.5))?);
    }
    if s.table9.is_none() {
        s.table9 = Some(study(CaseId::Case1, 1.0, &[2, 3, 4, 5], fp())?);
    }
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for r in s.table5.iter().chain(s.table9.iter()).flatten().flat_map(|r| &r.records) {
        worst_ratio = worst_ratio.max(r.stress_norm / r.a_priori_bound);
        if r.stress_norm > r.a_priori_bound * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    check("a priori bound", violations == 0, format!("{violations} violating iterates, max ratio {worst_ratio:.4}"));

    // algorithm cross-check at level 3
    let lm3 = s.table5.as_ref().unwrap().iter().find(|r| r.level == 3).unwrap();
    let fp3 = s.table9.as_ref().unwrap().iter().find(|r| r.level == 3).unwrap();
    let cross = outer_metric(&lm3.disc, &lm3.state, &fp3.state);
    check("algorithm cross-check", cross <= 10.0 * 1e-5, format!("metric {cross:e}"));

    let summary = format!(
        "    monotone min {worst_mono:.2e}, Lipschitz max {worst_lip:.6}, skew {worst_skew:.1e}, FD {worst_fd:.1e}, \
         bisection {worst_local:.1e}, quadrature {worst_quad:.1e}, compat {worst_compat:.1e}, a priori max ratio {worst_ratio:.4}, cross {cross:.2e}"
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}\n    failed: {}", failures.join("; ")))
    }
}

type Criterion = (usize, &'static str, fn(&mut Shared) -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "Table 1 reproduction (Case 1, gamma=0)", criterion1),
        (2, "Table 5 reproduction (Lions-Mercier, tau=0.5)", criterion2),
        (3, "Table 9 reproduction (fixed point)", criterion3),
        (4, "Table 2 iteration regime (tau=0.01, level 3)", criterion4),
        (5, "Table 6 reproduction (Case 2, gamma=0)", criterion5),
        (6, "Table 8 reproduction (Case 2, tau=0.5)", criterion6),
        (7, "second-order convergence rates", criterion7),
        (8, "stopping-criterion deterioration effect", criterion8),
        (9, "property suite", criterion9),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = Shared::default();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = f(&mut shared);
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id}: PASS  {name} [{secs:.1}s]\n{detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id}: FAIL  {name} [{secs:.1}s]\n{detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
