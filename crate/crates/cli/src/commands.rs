//! Subcommand implementations. Each writes into `<out>/<command>/`.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use bregman_core::bregman::{
    run_inexact_bregman, stopping_index_report, summability, write_history_csv, BregmanOptions, BregmanRun,
    StoppingIndex,
};
use bregman_core::control::{control_distance, project_uad, Control, DualVariable};
use bregman_core::example::{asc_measures, build_example, log_grid, verify_asc, verify_optimality, ASC_EXPONENT_RANGE};
use bregman_core::fem::{estimate_delta, fit_h2_constant, fit_order, Discretization, FEFunction};
use bregman_core::field::Constant;
use bregman_core::mesh::TriangularMesh;
use bregman_core::subproblem::{estimator_b, solve_oracle_pg, solve_ssn, ProblemData, SubproblemSpec};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::report::{Check, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    FigureRepro,
    FemOrder,
    AscCheck,
    StoppingIndex,
    Validate,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::FigureRepro,
        Command::FemOrder,
        Command::AscCheck,
        Command::StoppingIndex,
        Command::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::FigureRepro => "figure-repro",
            Command::FemOrder => "fem-order",
            Command::AscCheck => "asc-check",
            Command::StoppingIndex => "stopping-index",
            Command::Validate => "validate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown command `{s}`")))
    }
}

/// Fault injection for testing the harness itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Hooks {
    /// Perturb one off-diagonal mass-matrix entry before the
    /// self-adjointness check.
    pub corrupt_mass: bool,
}

/// Runs `command`, writes its CSVs and report into `<out>/<command>/` and
/// returns the report.
pub fn run(command: Command, cfg: &RunConfig, hooks: Hooks) -> Result<RunReport> {
    let dir = cfg.out.join(command.name());
    fs::create_dir_all(&dir)?;
    let mut report = RunReport::new(command.name(), cfg)?;
    let start = Instant::now();
    match command {
        Command::FigureRepro => figure_repro(cfg, &dir, &mut report)?,
        Command::FemOrder => {
            fem_order(cfg, &dir, &mut report)?;
        }
        Command::AscCheck => asc_check(cfg, &dir, &mut report)?,
        Command::StoppingIndex => stopping_index(cfg, &dir, &mut report)?,
        Command::Validate => validate(cfg, hooks, &mut report)?,
    }
    report.timings.insert("total".into(), start.elapsed().as_secs_f64());
    report.write(&dir)?;
    Ok(report)
}

/// Writes a CSV with the config-hash comment and a header row.
fn write_csv(
    dir: &Path,
    name: &str,
    report: &mut RunReport,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<PathBuf> {
    let mut out = BufWriter::new(File::create(dir.join(name))?);
    writeln!(out, "# config-hash: {}", report.config_hash)?;
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    let path = PathBuf::from(name);
    report.outputs.push(path.clone());
    Ok(path)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn timed<T>(report: &mut RunReport, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let v = f()?;
    report.timings.insert(phase.into(), start.elapsed().as_secs_f64());
    Ok(v)
}

fn figure_repro(cfg: &RunConfig, dir: &Path, report: &mut RunReport) -> Result<()> {
    let schedules = cfg.schedules()?;
    let truth = build_example();
    let opts = BregmanOptions {
        ssn_max_iter: cfg.ssn_max_iter,
        ..BregmanOptions::default()
    };
    // Meshes are independent; results come back in input order.
    let results: Vec<Result<(BregmanRun, f64)>> = thread::scope(|s| {
        let handles: Vec<_> = cfg
            .n_div
            .iter()
            .map(|&n| {
                let (schedules, truth) = (&schedules, &truth);
                s.spawn(move || -> Result<(BregmanRun, f64)> {
                    let start = Instant::now();
                    let problem = truth.problem(cfg.discretization(n)?)?;
                    let run = run_inexact_bregman(&problem, schedules, cfg.k_max, &opts, Some(truth))?;
                    info!("figure-repro n_div={n}: {} iterations, {:?}", run.records().len(), run.status);
                    Ok((run, start.elapsed().as_secs_f64()))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("mesh worker panicked"))
            .collect()
    });

    let mut finals: Vec<(usize, f64)> = Vec::new();
    let mut first_error = None;
    for (&n, result) in cfg.n_div.iter().zip(results) {
        let (run, secs) = match result {
            Ok(r) => r,
            Err(e) => {
                first_error.get_or_insert(e);
                continue;
            }
        };
        report.timings.insert(format!("n_div_{n}"), secs);
        let records = run.records();
        write_csv(
            dir,
            &format!("figure_n{n}.csv"),
            report,
            "k,err_u,err_y,err_p,B,H_value",
            records.iter().map(|r| {
                format!(
                    "{},{},{},{},{:e},{:e}",
                    r.k,
                    opt(r.err_u),
                    opt(r.err_y),
                    opt(r.err_p),
                    r.b_value,
                    r.h_value
                )
            }),
        )?;
        let history = format!("history_n{n}.csv");
        let mut out = BufWriter::new(File::create(dir.join(&history))?);
        let comments = [
            format!("config-hash: {}", report.config_hash),
            format!("n_div={n} alpha={} eps={}", cfg.alpha, cfg.eps),
        ];
        write_history_csv(records, &comments, &mut out)?;
        out.flush()?;
        report.outputs.push(PathBuf::from(history));

        report.checks.push(Check::at_least(
            &format!("n_div={n}: iterations completed"),
            records.len() as f64,
            cfg.k_max as f64,
        ));
        if let Some(err) = records.last().and_then(|r| r.err_u) {
            report.values.insert(format!("final_err_u_n{n}"), err);
            finals.push((n, err));
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }

    finals.sort_by_key(|f| f.0);
    for w in finals.windows(2) {
        let ((coarse_n, coarse), (fine_n, fine)) = (w[0], w[1]);
        report.checks.push(Check::below(
            &format!("final err_u ratio n_div={fine_n} / n_div={coarse_n}"),
            fine / coarse,
            1.0,
        ));
    }
    Ok(())
}

/// `(h, δ(h))` per mesh against the nested reference, probe `u ≡ 1`.
fn delta_family(cfg: &RunConfig) -> Result<Vec<(usize, f64, f64)>> {
    let truth = build_example();
    let reference = cfg.discretization(cfg.reference_n_div)?;
    cfg.n_div
        .iter()
        .map(|&n| {
            let disc = cfg.discretization(n)?;
            let d = estimate_delta(&disc, &reference, &[&Constant(1.0)], &truth.target())?;
            Ok((n, disc.h(), d))
        })
        .collect()
}

fn fem_order(cfg: &RunConfig, dir: &Path, report: &mut RunReport) -> Result<Vec<(f64, f64)>> {
    if cfg.n_div.len() < 3 {
        return Err(CliError::Config(format!(
            "fem-order needs at least 3 meshes, got {}",
            cfg.n_div.len()
        )));
    }
    let family = timed(report, "estimate_delta", || delta_family(cfg))?;
    write_csv(
        dir,
        "fem_order.csv",
        report,
        "n_div,h,delta",
        family.iter().map(|(n, h, d)| format!("{n},{h:e},{d:e}")),
    )?;
    let hs: Vec<f64> = family.iter().map(|f| f.1).collect();
    let ds: Vec<f64> = family.iter().map(|f| f.2).collect();
    let fit = fit_order(&hs, &ds)?;
    report.values.insert("order".into(), fit.order);
    report.values.insert("order_constant".into(), fit.constant);
    report.values.insert("c_h2".into(), fit_h2_constant(&hs, &ds));
    report.checks.push(Check::within("fitted order of delta(h)", fit.order, 1.9, 2.1));
    Ok(hs.into_iter().zip(ds).collect())
}

/// Worst `|m(ε/2)/m(ε) − 1/2|` over small `ε`.
fn halving_deviation(resolution: usize) -> Result<f64> {
    let eps = [1e-4, 2e-4, 5e-4, 1e-3];
    let halves: Vec<f64> = eps.iter().map(|e| e / 2.0).collect();
    let full = asc_measures(&eps, resolution)?;
    let half = asc_measures(&halves, resolution)?;
    Ok(full
        .iter()
        .zip(&half)
        .map(|(a, b)| (b / a - 0.5).abs())
        .fold(0.0, f64::max))
}

fn asc_checks(cfg: &RunConfig, dir: Option<&Path>, report: &mut RunReport) -> Result<()> {
    let grid = log_grid(1e-4, 1e-2, 21);
    let asc = verify_asc(&build_example(), &grid, cfg.asc_resolution)?;
    if let Some(dir) = dir {
        write_csv(
            dir,
            "asc.csv",
            report,
            "eps,measure",
            asc.eps.iter().zip(&asc.measures).map(|(e, m)| format!("{e:e},{m:e}")),
        )?;
    }
    report.values.insert("asc_fitted_exponent".into(), asc.fitted_exponent);
    report.values.insert("asc_fitted_c".into(), asc.fitted_c);
    let (lo, hi) = ASC_EXPONENT_RANGE;
    report.checks.push(Check::within("ASC fitted exponent", asc.fitted_exponent, lo, hi));
    report.checks.push(Check::at_most(
        "ASC measure halving ratio deviation from 1/2",
        halving_deviation(cfg.asc_resolution)?,
        0.1,
    ));
    Ok(())
}

fn asc_check(cfg: &RunConfig, dir: &Path, report: &mut RunReport) -> Result<()> {
    asc_checks(cfg, Some(dir), report)
}

fn k_value(k: StoppingIndex) -> f64 {
    k.as_option().map_or(f64::INFINITY, |k| k as f64)
}

fn stopping_index(cfg: &RunConfig, dir: &Path, report: &mut RunReport) -> Result<()> {
    let family: Vec<(f64, f64)> = if cfg.delta.is_empty() {
        let measured = timed(report, "estimate_delta", || delta_family(cfg))?;
        let hs: Vec<f64> = measured.iter().map(|f| f.1).collect();
        let ds: Vec<f64> = measured.iter().map(|f| f.2).collect();
        let c = fit_h2_constant(&hs, &ds);
        report.values.insert("c_h2".into(), c);
        hs.iter().map(|&h| (h, c * h * h)).collect()
    } else {
        cfg.n_div
            .iter()
            .zip(&cfg.delta)
            .map(|(&n, &d)| (1.0 / n as f64, d))
            .collect()
    };
    let schedules = cfg.schedules()?;
    let rep = stopping_index_report(&schedules, &family, cfg.c_budget)?;
    write_csv(
        dir,
        "stopping_index.csv",
        report,
        "h,delta,k",
        rep.entries.iter().map(|e| format!("{:e},{:e},{}", e.h, e.delta, e.k)),
    )?;
    for e in &rep.entries {
        report.values.insert(format!("k_h{:e}", e.h), k_value(e.k));
    }
    let sums = summability(&schedules, 100_000)?;
    report.values.insert("sc_summable".into(), f64::from(u8::from(sums.sc_summable)));
    report.values.insert("asc_condition".into(), f64::from(u8::from(sums.asc_condition)));
    if let Some(strict) = rep.strictly_increases {
        report.values.insert("strictly_increases".into(), f64::from(u8::from(strict)));
    }
    if rep.nondecreasing.is_some() {
        // Entries run from coarse to fine.
        let step = rep
            .entries
            .windows(2)
            .map(|w| {
                let (a, b) = (k_value(w[0].k), k_value(w[1].k));
                if a == b {
                    0.0
                } else {
                    b - a
                }
            })
            .fold(f64::INFINITY, f64::min);
        report.checks.push(Check::at_least("smallest k(h) step as h decreases", step, 0.0));
    }
    Ok(())
}

fn random_p1(mesh: &Arc<TriangularMesh>, rng: &mut ChaCha8Rng, amplitude: f64) -> FEFunction {
    let coeffs = (0..mesh.num_nodes()).map(|_| rng.random_range(-amplitude..amplitude)).collect();
    FEFunction::from_coeffs(Arc::clone(mesh), coeffs).expect("length matches mesh")
}

/// Random dual variable vanishing on the boundary, like an accumulated adjoint.
fn random_lambda(problem: &ProblemData, rng: &mut ChaCha8Rng, amplitude: f64) -> DualVariable {
    let mesh = problem.disc().mesh();
    let mut f = random_p1(mesh, rng, amplitude);
    for (c, &b) in f.coeffs_mut().iter_mut().zip(mesh.boundary_mask()) {
        if b {
            *c = 0.0;
        }
    }
    DualVariable::from_function(f)
}

/// `‖u − û‖ / B(u)` over `count` controls `P(ĝ + τ d)`, `τ` log-uniform in
/// `[1e-4, 1]`.
fn estimator_ratios(spec: &SubproblemSpec<'_>, minimiser: &Control, rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<f64>> {
    let disc = spec.problem().disc();
    (0..count)
        .map(|_| {
            let tau = 10f64.powf(rng.random_range(-4.0..0.0));
            let mut g = minimiser.base().clone();
            g.axpy(tau, &random_p1(minimiser.mesh(), rng, 1.0))?;
            let u = project_uad(g, minimiser.bounds());
            let b = estimator_b(spec, &u)?;
            let d = control_distance(disc, &u, minimiser)?;
            Ok(if b == 0.0 { 0.0 } else { d / b })
        })
        .collect()
}

fn self_adjointness(cfg: &RunConfig, hooks: Hooks, rng: &mut ChaCha8Rng, report: &mut RunReport) -> Result<()> {
    let n = cfg.n_div.iter().copied().min().unwrap_or(8).min(64);
    let mut disc = Discretization::new(Arc::new(TriangularMesh::new(n)?), cfg.rule())?;
    if hooks.corrupt_mass {
        let mesh = Arc::clone(disc.mesh());
        let (row, col) = (mesh.node_index(n / 2, n / 2), mesh.node_index(n / 2 + 1, n / 2));
        let delta = disc.h() * disc.h();
        disc = disc.with_corrupted_mass(row, col, delta);
    }
    let mesh = Arc::clone(disc.mesh());
    let (mut mass_route, mut quad_route) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let f = random_p1(&mesh, rng, 3.0);
        let g = random_p1(&mesh, rng, 3.0);
        let lhs = disc.p1_inner(&disc.apply_sh_p1(&f)?, &g);
        let rhs = disc.p1_inner(&f, &disc.apply_sh_p1(&g)?);
        mass_route = mass_route.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        let lhs = disc.l2_inner(&disc.apply_sh(&f)?, &g);
        let rhs = disc.l2_inner(&f, &disc.apply_sh_adjoint(&g)?);
        quad_route = quad_route.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    report.checks.push(Check::at_most(
        &format!("self-adjointness, mass-matrix load, n_div={n}"),
        mass_route,
        1e-10,
    ));
    report.checks.push(Check::at_most(
        &format!("self-adjointness, quadrature load, n_div={n}"),
        quad_route,
        1e-10,
    ));
    Ok(())
}

fn oracle_equivalence(cfg: &RunConfig, rng: &mut ChaCha8Rng, report: &mut RunReport) -> Result<()> {
    let problem = build_example().problem(cfg.discretization(8)?)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let alpha = rng.random_range(0.05..=1.0);
        let lambda = random_lambda(&problem, rng, 2.0);
        let spec = SubproblemSpec::new(&problem, alpha, &lambda)?;
        let ssn = solve_ssn(&spec, 1e-12, cfg.ssn_max_iter)?;
        let pg = solve_oracle_pg(&spec, 1e-12)?;
        worst = worst.max(control_distance(problem.disc(), &ssn.u, &pg.u)?);
    }
    report.checks.push(Check::at_most("SSN vs oracle distance, 20 specs, n_div=8", worst, 1e-7));
    Ok(())
}

fn estimator_soundness(cfg: &RunConfig, rng: &mut ChaCha8Rng, report: &mut RunReport) -> Result<()> {
    for n in [8, 16] {
        let problem = build_example().problem(cfg.discretization(n)?)?;
        let lambda = random_lambda(&problem, rng, 1.0);
        let spec = SubproblemSpec::new(&problem, 0.1, &lambda)?;
        let u_hat = solve_oracle_pg(&spec, 1e-12)?.u;
        report.checks.push(Check::at_most(
            &format!("B at oracle minimiser, n_div={n}"),
            estimator_b(&spec, &u_hat)?,
            1e-8,
        ));
        let c_fit = estimator_ratios(&spec, &u_hat, rng, 50)?.into_iter().fold(0.0, f64::max);
        let held_out = estimator_ratios(&spec, &u_hat, rng, 50)?.into_iter().fold(0.0, f64::max);
        report.values.insert(format!("estimator_c_fit_n{n}"), c_fit);
        report.checks.push(Check::at_most(
            &format!("held-out distance/B over c_fit, n_div={n}"),
            if c_fit > 0.0 { held_out / c_fit } else { f64::INFINITY },
            1.5,
        ));
    }
    Ok(())
}

fn optimality(cfg: &RunConfig, report: &mut RunReport) -> Result<()> {
    let truth = build_example();
    let mut meshes: Vec<usize> = cfg.n_div.iter().map(|&n| n.min(64)).collect();
    meshes.sort_unstable();
    meshes.dedup();
    for n in meshes {
        let rep = verify_optimality(&truth, cfg.discretization(n)?, cfg.seed, 100)?;
        report.checks.push(Check::at_least(&format!("sign relation fraction, n_div={n}"), rep.sign_fraction(), 1.0));
        report.checks.push(Check::at_least(
            &format!("variational inequality minimum, n_div={n}"),
            rep.vi_min,
            -1e-6,
        ));
        report.values.insert(format!("adjoint_error_n{n}"), rep.adjoint_error);
    }
    Ok(())
}

fn validate(cfg: &RunConfig, hooks: Hooks, report: &mut RunReport) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let phase = |report: &mut RunReport, name: &str, start: Instant| {
        report.timings.insert(name.into(), start.elapsed().as_secs_f64());
    };
    let start = Instant::now();
    self_adjointness(cfg, hooks, &mut rng, report)?;
    phase(report, "self_adjointness", start);
    let start = Instant::now();
    estimator_soundness(cfg, &mut rng, report)?;
    phase(report, "estimator_soundness", start);
    let start = Instant::now();
    oracle_equivalence(cfg, &mut rng, report)?;
    phase(report, "oracle_equivalence", start);
    let start = Instant::now();
    asc_checks(cfg, None, report)?;
    phase(report, "asc", start);
    let start = Instant::now();
    optimality(cfg, report)?;
    phase(report, "optimality", start);
    Ok(())
}
