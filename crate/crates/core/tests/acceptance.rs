//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gradvi::experiments::{self, DataSequence, StudyKind, StudySpec, StudyThresholds};
use gradvi::grid::{Domain, Grid};
use gradvi::io;
use gradvi::lagrange::{self, ContactTolerances, Thresholds};
use gradvi::oracle::{self, AdmmOptions, OracleError, OracleSolution, ViCheckOptions};
use gradvi::penalty::{self, PenaltyParams};
use gradvi::problem::{Problem, SampledProblem};
use gradvi::solver::{self, ContinuationResult, PenalizedSolution, SolveOptions};

const SCHEDULE: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

struct Outcome {
    passed: bool,
    detail: String,
    /// CSV/JSON artifacts for the determinism criterion.
    artifacts: Vec<(String, String)>,
}

fn line() -> Domain {
    Domain::interval(-1.0, 1.0).unwrap()
}

fn square() -> Domain {
    Domain::rectangle([-1.0, 1.0], [-1.0, 1.0]).unwrap()
}

fn elastic_plastic() -> Problem {
    Problem::new(line(), "2", Some("1"), Some("-10")).unwrap().with_laplacian_psi("0").unwrap()
}

fn obstacle(domain: Domain) -> Problem {
    Problem::new(domain, "-4", Some("1"), Some("-0.3")).unwrap().with_laplacian_psi("0").unwrap()
}

struct Run {
    grid: Grid,
    data: SampledProblem,
    cr: ContinuationResult,
}

impl Run {
    fn new(problem: &Problem, n: usize, schedule: &[f64]) -> Run {
        let grid = Grid::uniform(problem.domain.clone(), n).unwrap();
        let data = problem.sample(&grid).unwrap();
        // the 65^2 grid has h^2 ~ 1e-3, above the smallest eps
        let opts = SolveOptions {
            allow_unresolved_eps: grid.dim() == 2,
            ..SolveOptions::default()
        };
        let cr = solver::continuation_solve(&grid, &data, schedule, penalty::DEFAULT_R, &opts).unwrap();
        Run { grid, data, cr }
    }

    fn finest(&self) -> &PenalizedSolution {
        self.cr.finest().unwrap()
    }

    fn oracle(&self) -> OracleSolution {
        match oracle::solve_vi_admm(&self.grid, &self.data, &AdmmOptions::default()) {
            Ok(s) => s,
            Err(OracleError::MaxItersExceeded(s)) => *s,
            Err(e) => panic!("{e}"),
        }
    }
}

// --- criterion 1 -----------------------------------------------------------

/// `(s, eps, r, k, theta)` with `s/eps = m/4` exact in binary, and the
/// expected values computed in integer arithmetic.
fn penalty_table() -> Vec<(f64, f64, f64, f64, f64)> {
    let mut rows = Vec::new();
    for (eps, r) in [(0.5, 4u32), (0.125, 3), (1.0 / 1024.0, 6)] {
        for m in -8i64..=8 {
            let s = m as f64 * eps / 4.0;
            let k = if m <= 0 {
                1.0
            } else {
                1.0 + (m.pow(r) as f64) / (4i64.pow(r) as f64)
            };
            let theta = if m <= -4 {
                -1.0
            } else if m < 0 {
                m as f64 / 4.0
            } else {
                0.0
            };
            rows.push((s, eps, r as f64, k, theta));
        }
    }
    rows
}

fn criterion_1() -> Outcome {
    let table = penalty_table();
    let mut exact = true;
    for &(s, eps, r, k, theta) in &table {
        let p = PenaltyParams::new(eps, r).unwrap();
        exact &= penalty::k_eps(s, &p) == k && penalty::theta_eps(s, &p) == theta;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut monotone = true;
    let pairs = 10_000;
    for _ in 0..pairs {
        let eps = 10f64.powf(rng.random_range(-4.0..-0.5));
        let p = PenaltyParams::new(eps, 4.0).unwrap();
        let a = rng.random_range(-2.0..2.0);
        let s1 = rng.random_range(-3.0..3.0);
        let s2 = s1 + rng.random_range(0.0..1e-2);
        monotone &= penalty::phi_eps(s2, a, &p) >= penalty::phi_eps(s1, a, &p);
    }
    Outcome {
        passed: exact && monotone,
        detail: format!(
            "{} table points exact: {exact}; phi nondecreasing on {pairs} random pairs: {monotone}",
            table.len()
        ),
        artifacts: Vec::new(),
    }
}

// --- criterion 2 -----------------------------------------------------------

fn criterion_2() -> Outcome {
    let schedule = &SCHEDULE[..3];
    let mut worst = f64::INFINITY;
    let mut ok = true;
    let mut detail = Vec::new();
    for (problem, n) in [(obstacle(line()), 101), (obstacle(line()), 201), (obstacle(square()), 65)] {
        let run = Run::new(&problem, n, schedule);
        let h2 = run.grid.min_spacing().powi(2);
        for e in &run.cr.entries {
            let gap = e.monitors.min_obstacle_gap;
            // margin above the bound, normalized by eps
            let margin = (gap + e.eps + 10.0 * h2) / e.eps;
            worst = worst.min(margin);
            ok &= e.converged && gap >= -e.eps - 10.0 * h2;
        }
        detail.push(format!("{}D n={n}", run.grid.dim()));
    }
    Outcome {
        passed: ok,
        detail: format!(
            "min(u - psi) >= -eps - 10h^2 on {} for eps in 1e-1..1e-3; smallest margin {worst:.3} eps",
            detail.join(", ")
        ),
        artifacts: Vec::new(),
    }
}

// --- criterion 3 -----------------------------------------------------------

fn criterion_3() -> Outcome {
    let mut ok = true;
    let mut worst: f64 = 1.0;
    for problem in [elastic_plastic(), obstacle(line())] {
        let run = Run::new(&problem, 2001, &SCHEDULE);
        ok &= run.cr.converged().count() == SCHEDULE.len();
        let m = run.cr.monitors();
        let (a, b) = (m[0], m[m.len() - 1]);
        for (x, y) in [
            (a.l1_khat, b.l1_khat),
            (a.lp_khat, b.lp_khat),
            (a.l2r_grad, b.l2r_grad),
            (a.l2_flux, b.l2_flux),
        ] {
            let ratio = x.max(y) / x.min(y);
            worst = worst.max(ratio);
            ok &= ratio <= 10.0;
        }
    }
    Outcome {
        passed: ok,
        detail: format!("largest first/last ratio of the four monitor norms: {worst:.4} (bound 10)"),
        artifacts: Vec::new(),
    }
}

// --- criterion 4 -----------------------------------------------------------

fn criterion_4() -> Outcome {
    let cases = [
        ("elastic_plastic_1d", elastic_plastic(), 2001, 5e-3),
        ("obstacle_1d", obstacle(line()), 2001, 1e-2),
        ("obstacle_2d", obstacle(square()), 65, 1e-2),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    let mut artifacts = Vec::new();
    for (name, problem, n, tol) in cases {
        let run = Run::new(&problem, n, &SCHEDULE);
        let fin = run.finest();
        let o = run.oracle();
        let diff = fin.u.max_abs_diff(&o.u);
        ok &= fin.eps == 1e-4 && o.converged && diff <= tol;
        detail.push(format!("{name} {diff:.2e} (<= {tol:e}, ADMM {} it)", o.iterations));
        artifacts.push((
            format!("c4_{name}.csv"),
            io::node_csv(&run.grid, &[("u_eps", &fin.u.0), ("u_oracle", &o.u.0)]),
        ));
        artifacts.push((format!("c4_{name}_admm.csv"), o.history_csv()));
    }
    Outcome {
        passed: ok,
        detail: detail.join("; "),
        artifacts,
    }
}

// --- criterion 5 -----------------------------------------------------------

fn closed_form(x: f64) -> f64 {
    let a = x.abs();
    if a >= 0.5 {
        1.0 - a
    } else {
        0.75 - x * x
    }
}

fn criterion_5() -> Outcome {
    // verify the closed form first, on a grid where projections onto K are cheap
    let coarse = Grid::uniform(line(), 201).unwrap();
    let coarse_data = elastic_plastic().sample(&coarse).unwrap();
    let coarse_exact = coarse.sample(|x| Ok::<_, ()>(closed_form(x[0]))).unwrap();
    let coarse_oracle = match oracle::solve_vi_admm(&coarse, &coarse_data, &AdmmOptions::default()) {
        Ok(s) => s.u,
        Err(OracleError::MaxItersExceeded(s)) => s.u,
        Err(e) => panic!("{e}"),
    };
    // the sampled closed form solves the discrete inequality up to the
    // O(h^2) consistency error of the scheme
    let vi_opts = ViCheckOptions {
        trials: 50,
        seed: 5,
        rel_tol: coarse.min_spacing().powi(2),
        feasibility_tol: 1e-12,
        ..ViCheckOptions::default()
    };
    let vi = oracle::vi_residual_check(&coarse, &coarse_data, &coarse_exact, &[coarse_oracle], &vi_opts).unwrap();

    let run = Run::new(&elastic_plastic(), 2001, &SCHEDULE);
    let grid = &run.grid;
    let exact = grid.sample(|x| Ok::<_, ()>(closed_form(x[0]))).unwrap();
    let o = run.oracle();

    let fin = run.finest();
    let err_pen = fin.u.max_abs_diff(&exact);
    let err_or = o.u.max_abs_diff(&exact);
    let lam_err = grid
        .cells()
        .iter()
        .zip(&fin.khat.0)
        .filter(|(c, _)| c.centroid[0].abs() > 0.5)
        .map(|(c, l)| {
            let want = 1.0 + 2.0 * (c.centroid[0].abs() - 0.5);
            (l - want).abs() / want
        })
        .fold(0.0, f64::max);
    let passed = vi.passed && err_pen <= 5e-3 && err_or <= 5e-3 && lam_err <= 0.05;
    let lam_nodal = fin.khat.to_nodal(grid);
    Outcome {
        passed,
        detail: format!(
            "closed form VI check at n=201 over {} test functions: worst margin {:.2e} (tol {:.2e}); max error penalty {err_pen:.2e}, ADMM {err_or:.2e} (<= 5e-3); lambda rel error {lam_err:.2e} (<= 0.05)",
            vi.trials, vi.worst_margin, vi.tolerance
        ),
        artifacts: vec![(
            "c5_closed_form.csv".into(),
            io::node_csv(
                grid,
                &[("exact", &exact.0), ("u_eps", &fin.u.0), ("u_oracle", &o.u.0), ("lambda", &lam_nodal.0)],
            ),
        )],
    }
}

// --- criterion 6 -----------------------------------------------------------

fn criterion_6() -> Outcome {
    let cases = [
        ("elastic_plastic_1d", elastic_plastic(), 2001),
        ("obstacle_1d", obstacle(line()), 2001),
        ("obstacle_2d", obstacle(square()), 65),
    ];
    let t = Thresholds::default();
    let mut ok = true;
    let mut detail = Vec::new();
    let mut artifacts = Vec::new();
    for (name, problem, n) in cases {
        let run = Run::new(&problem, n, &SCHEDULE);
        let tol = ContactTolerances::for_eps(1e-4, 1.0);
        let lf = lagrange::extract_fields(&run.grid, &run.data, &run.cr, tol).unwrap();
        let rep = lagrange::complementarity_report(&run.grid, &run.data, &lf);
        let failures = rep.failures(&t);
        ok &= lf.eps == 1e-4 && failures.is_empty();
        detail.push(format!(
            "{name}: min_lambda {:.3e}, comp_grad {:.2e}, comp_obs {:.2e}, eq_residual {:.2e}, sign_identity {:.2e}{}",
            rep.min_lambda,
            rep.comp_grad,
            rep.comp_obs,
            rep.eq_residual_norm,
            rep.sign_identity_residual,
            if failures.is_empty() { String::new() } else { format!(" [failed: {}]", failures.join("; ")) }
        ));
        artifacts.push((format!("c6_{name}_nodes.csv"), lf.node_csv(&run.grid)));
        artifacts.push((format!("c6_{name}_cells.csv"), lf.cell_csv(&run.grid)));
        artifacts.push((format!("c6_{name}.json"), serde_json::to_string_pretty(&rep).unwrap()));
    }
    Outcome {
        passed: ok,
        detail: detail.join("; "),
        artifacts,
    }
}

// --- criterion 7 -----------------------------------------------------------

fn criterion_7() -> Outcome {
    let spec = StudySpec {
        kind: StudyKind::Stability,
        problem: elastic_plastic(),
        n: vec![2001],
        eps_schedule: SCHEDULE.to_vec(),
        alt_eps_schedule: None,
        r: penalty::DEFAULT_R,
        sequence: Some(DataSequence {
            f: Some("2 + 1/n".into()),
            g: None,
            psi: Some("-10 - 1/n".into()),
            laplacian_psi: None,
            indices: vec![2, 4, 8, 16],
        }),
        vi_trials: 0,
        seed: 0,
        gradient_margin: 0.5,
        solve: SolveOptions::default(),
        admm: AdmmOptions::default(),
        thresholds: StudyThresholds::default(),
        workers: 4,
    };
    let rep = experiments::run_stability(&spec).unwrap();
    let u = rep.column("u_err_inf").unwrap();
    let g = rep.column("grad_err_inf").unwrap();
    let failed: Vec<&str> = rep.failures().map(|c| c.name.as_str()).collect();
    Outcome {
        passed: rep.passed(),
        detail: format!(
            "|u_n - u| = {}; |grad(u_n - u)| = {}; {} checks{}",
            io::join_floats(&u.iter().map(|v| (v * 1e6).round() / 1e6).collect::<Vec<_>>()),
            io::join_floats(&g.iter().map(|v| (v * 1e6).round() / 1e6).collect::<Vec<_>>()),
            rep.checks.len(),
            if failed.is_empty() { String::new() } else { format!(" [failed: {}]", failed.join(", ")) }
        ),
        artifacts: vec![("c7_stability.csv".into(), rep.csv())],
    }
}

// --- criterion 8 -----------------------------------------------------------

fn criterion_8(first: &[(String, String)]) -> Outcome {
    let mut second = Vec::new();
    for c in [criterion_4, criterion_5, criterion_6, criterion_7] {
        second.extend(c().artifacts);
    }
    let same = first.len() == second.len() && first.iter().zip(&second).all(|(a, b)| a == b);
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    Outcome {
        passed: same,
        detail: if same {
            format!("{} artifacts byte-identical across two runs", first.len())
        } else {
            format!("differing artifacts: {}", differing.join(", "))
        },
        artifacts: Vec::new(),
    }
}

fn report(number: usize, budget: Duration, run: impl FnOnce() -> Outcome) -> (bool, Vec<(String, String)>) {
    let start = Instant::now();
    let out = run();
    let took = start.elapsed();
    let in_time = took <= budget;
    let passed = out.passed && in_time;
    println!(
        "criterion {number}: {} ({}; {:.2} s of {} s budget)",
        if passed { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        budget.as_secs()
    );
    (passed, out.artifacts)
}

fn main() {
    let mut all = true;
    let mut artifacts = Vec::new();
    let secs = Duration::from_secs;
    let (p, _) = report(1, secs(1), criterion_1);
    all &= p;
    let (p, _) = report(2, secs(60), criterion_2);
    all &= p;
    let (p, _) = report(3, secs(120), criterion_3);
    all &= p;
    for (number, budget, c) in [
        (4, secs(300), criterion_4 as fn() -> Outcome),
        (5, secs(120), criterion_5),
        (6, secs(180), criterion_6),
        (7, secs(300), criterion_7),
    ] {
        let (p, a) = report(number, budget, c);
        all &= p;
        artifacts.extend(a);
    }
    let (p, _) = report(8, secs(900), || criterion_8(&artifacts));
    all &= p;
    // keep the first run's artifacts for inspection
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    for (name, text) in &artifacts {
        io::write_text(&dir.join(name), text).unwrap();
    }
    println!("artifacts written to {}", dir.display());
    if !all {
        println!("acceptance: FAIL");
        std::process::exit(1);
    }
    println!("acceptance: PASS");
}
