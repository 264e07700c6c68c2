//! One function per subcommand. Each returns a short human-readable summary.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;

use crossbar_core::noise::{monte_carlo_validate, McOptions, Verdict};
use crossbar_core::problems::write_matrix_market;
use crossbar_core::spectral::{condition_number_estimate, PowerOptions};
use crossbar_core::{
    flops_digital_run, ilu0_build, spai_build, speedup_ideal, speedup_total, DeviceConfig,
    ExecMode, SpaiParams,
};

use crate::args::{
    BitsArgs, BoundsArgs, CommonArgs, DensityArgs, PrecondArgs, PrecondKind, ProblemKind,
    SolveArgs, SolverKind, SolverSetArgs,
};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, fmt_opt, OutputDir, Table};
use crate::run::{
    median_curve, median_outcome, rho_hybrid_proxy, rho_i_minus_ma, Outcome, Prepared,
};
use crate::spec::ExperimentSpec;

/// Digital MVMs with `M` that programming the array is assumed to cost.
pub const PROGRAM_COST_MVMS: u64 = 7;

const DEFAULT_PROBLEMS: [ProblemKind; 2] = [ProblemKind::Fd3d, ProblemKind::FeSquare];

fn proxy_power() -> PowerOptions {
    PowerOptions {
        tol: 1e-4,
        max_iters: 300,
        ..PowerOptions::default()
    }
}

fn with_meta(spec: &ExperimentSpec, extra: &[(&str, String)]) -> Vec<(String, String)> {
    let mut meta = spec.metadata();
    meta.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    meta
}

fn exec_mode(solver: SolverKind) -> ExecMode {
    if solver == SolverKind::SpaiHybrid {
        ExecMode::Hybrid
    } else {
        ExecMode::Digital
    }
}

fn precond_nnz(prep: &Prepared, solver: SolverKind) -> usize {
    match solver {
        SolverKind::None => 0,
        SolverKind::SpaiDigital | SolverKind::SpaiHybrid => {
            prep.spai_matrix().map_or(0, |m| m.nnz())
        }
        SolverKind::Ilu0 => match &prep.ilu {
            Some(Ok(f)) => f.nnz(),
            _ => 0,
        },
    }
}

pub fn table2(args: &CommonArgs) -> CliResult<String> {
    let mut spec = ExperimentSpec::from_args("table2", args, &DEFAULT_PROBLEMS)?;
    spec.solvers = vec![
        SolverKind::None,
        SolverKind::SpaiDigital,
        SolverKind::SpaiHybrid,
    ];
    let mut out = OutputDir::create(&spec.output_dir)?;
    let mut table = Table::new(&[
        "problem",
        "n",
        "kappa",
        "nnz_a_per_n",
        "nnz_m_per_n",
        "rho_i_minus_a",
        "rho_i_minus_mda",
        "rho_i_minus_mha_proxy",
        "m",
        "m_d",
        "m_h",
        "m_h_reps",
        "flops_md",
        "flops_mh",
        "speedup_total",
    ]);
    let mut summary = String::new();
    let power = PowerOptions::default();
    for &kind in &spec.problems {
        let prep = Prepared::new(spec.build_problem(kind)?, &spec.solvers, &spec.spai);
        let p = &prep.problem;
        let (n, nnz_a) = (p.n(), p.a.nnz());
        let kappa = condition_number_estimate(&p.a, &power).unwrap_or(f64::NAN);
        let identity = crossbar_core::SparseMatrix::identity(n);
        let rho_a = rho_i_minus_ma(&p.a, &identity, &power);

        let plain = prep.run(SolverKind::None, &spec.device, &spec.solve, 0);
        let digital = prep.run(SolverKind::SpaiDigital, &spec.device, &spec.solve, 0);
        let hybrid = prep.run_reps(
            SolverKind::SpaiHybrid,
            &spec.device,
            &spec.solve,
            spec.repetitions,
        );
        let hybrid_outcomes: Vec<Outcome> = hybrid.iter().map(|r| r.outcome.clone()).collect();
        let m_h = median_outcome(&hybrid_outcomes);

        let (nnz_m, rho_md, rho_mh) = match prep.spai_matrix() {
            Some(m) => (
                m.nnz(),
                rho_i_minus_ma(&p.a, m, &power),
                rho_hybrid_proxy(&p.a, m, &spec.device, spec.repetitions, &proxy_power())
                    .unwrap_or(f64::NAN),
            ),
            None => (0, f64::NAN, f64::NAN),
        };
        let m_d_run = digital.outcome.iterations_run();
        let flops_md = flops_digital_run(m_d_run, n, nnz_a, nnz_m, ExecMode::Digital);
        let flops_mh = flops_digital_run(m_h.iterations_run(), n, nnz_a, nnz_m, ExecMode::Hybrid);
        if digital.outcome.iterations_run() > 0 && digital.digital_flops != flops_md {
            return Err(CliError::RunFailed(format!(
                "FLOP counter {} disagrees with the closed form {flops_md}",
                digital.digital_flops
            )));
        }
        let speedup = match (digital.outcome.converged(), m_h.converged()) {
            (Some(d), Some(h)) => speedup_total(d, h, n, nnz_a, nnz_m),
            _ => f64::NAN,
        };
        table.push(vec![
            kind.name().to_string(),
            n.to_string(),
            fmt_f64(kappa),
            fmt_f64(nnz_a as f64 / n as f64),
            fmt_f64(nnz_m as f64 / n as f64),
            fmt_f64(rho_a),
            fmt_f64(rho_md),
            fmt_f64(rho_mh),
            plain.outcome.to_string(),
            digital.outcome.to_string(),
            m_h.to_string(),
            hybrid_outcomes
                .iter()
                .map(|o| o.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            flops_md.to_string(),
            flops_mh.to_string(),
            fmt_f64(speedup),
        ]);
        let _ = writeln!(
            summary,
            "{}: n={n} m={} m_d={} m_h={} flops {} / {}",
            kind.name(),
            plain.outcome,
            digital.outcome,
            m_h,
            flops_md,
            flops_mh
        );
    }
    let meta = with_meta(
        &spec,
        &[(
            "rho_i_minus_mha_proxy",
            "power iteration on the repetition-averaged analog operator".into(),
        )],
    );
    out.csv("table2.csv", &table, &meta)?;
    out.json(
        "table2.json",
        &json!({ "rows": table.to_json(), "meta": meta_json(&meta) }),
    )?;
    Ok(summary)
}

fn meta_json(meta: &[(String, String)]) -> serde_json::Value {
    serde_json::Value::Object(
        meta.iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect(),
    )
}

fn residual_table(history: &[f64]) -> Table {
    let mut t = Table::new(&["iteration", "relative_residual"]);
    for (i, r) in history.iter().enumerate() {
        t.push(vec![i.to_string(), fmt_f64(*r)]);
    }
    t
}

pub fn curves(args: &SolverSetArgs) -> CliResult<String> {
    let mut spec = ExperimentSpec::from_args("curves", &args.common, &[ProblemKind::Fd3d])?;
    spec.solvers = args.solvers.clone();
    let mut out = OutputDir::create(&spec.output_dir)?;
    let mut summary_table = Table::new(&["problem", "solver", "rep", "outcome", "final_residual"]);
    for &kind in &spec.problems {
        let prep = Prepared::new(spec.build_problem(kind)?, &spec.solvers, &spec.spai);
        for &solver in &spec.solvers {
            let runs = prep.run_reps(solver, &spec.device, &spec.solve, spec.repetitions);
            for (rep, run) in runs.iter().enumerate() {
                let meta = with_meta(
                    &spec,
                    &[
                        ("problem", kind.name().into()),
                        ("solver", solver.name().into()),
                        ("rep", rep.to_string()),
                        ("outcome", run.outcome.to_string()),
                    ],
                );
                out.csv(
                    &format!("curves_{}_{}_rep{rep}.csv", kind.name(), solver.name()),
                    &residual_table(&run.residual_history),
                    &meta,
                )?;
                summary_table.push(vec![
                    kind.name().into(),
                    solver.name().into(),
                    rep.to_string(),
                    run.outcome.to_string(),
                    fmt_f64(run.residual_history.last().copied().unwrap_or(f64::NAN)),
                ]);
            }
            let outcomes: Vec<Outcome> = runs.iter().map(|r| r.outcome.clone()).collect();
            let meta = with_meta(
                &spec,
                &[
                    ("problem", kind.name().into()),
                    ("solver", solver.name().into()),
                    ("median_outcome", median_outcome(&outcomes).to_string()),
                ],
            );
            out.csv(
                &format!("curves_{}_{}_median.csv", kind.name(), solver.name()),
                &residual_table(&median_curve(&runs)),
                &meta,
            )?;
        }
    }
    out.csv("curves_summary.csv", &summary_table, &spec.metadata())?;
    Ok(format!(
        "wrote {} files to {}\n",
        out.written().len(),
        spec.output_dir.display()
    ))
}

pub fn flops(args: &SolverSetArgs) -> CliResult<String> {
    let mut spec = ExperimentSpec::from_args("flops", &args.common, &[ProblemKind::Fd3d])?;
    spec.solvers = args.solvers.clone();
    let mut out = OutputDir::create(&spec.output_dir)?;
    let mut summary = String::new();
    for &kind in &spec.problems {
        let prep = Prepared::new(spec.build_problem(kind)?, &spec.solvers, &spec.spai);
        let (n, nnz_a) = (prep.problem.n(), prep.problem.a.nnz());
        let mut curve = Table::new(&[
            "solver",
            "rep",
            "iteration",
            "cumulative_digital_flops",
            "relative_residual",
        ]);
        let mut totals = Table::new(&[
            "solver",
            "median_outcome",
            "flops_per_iteration",
            "median_digital_flops",
        ]);
        for &solver in &spec.solvers {
            let runs = prep.run_reps(solver, &spec.device, &spec.solve, spec.repetitions);
            for (rep, run) in runs.iter().enumerate() {
                for (i, (f, r)) in run
                    .cumulative_flops()
                    .iter()
                    .zip(&run.residual_history)
                    .enumerate()
                {
                    curve.push(vec![
                        solver.name().into(),
                        rep.to_string(),
                        i.to_string(),
                        f.to_string(),
                        fmt_f64(*r),
                    ]);
                }
            }
            let outcomes: Vec<Outcome> = runs.iter().map(|r| r.outcome.clone()).collect();
            let med = median_outcome(&outcomes);
            let nnz_m = precond_nnz(&prep, solver);
            let per = flops_digital_run(1, n, nnz_a, nnz_m, exec_mode(solver));
            let total = per * med.iterations_run() as u64;
            totals.push(vec![
                solver.name().into(),
                med.to_string(),
                per.to_string(),
                total.to_string(),
            ]);
            let _ = writeln!(
                summary,
                "{} {}: {} iterations, {total} digital FLOPs",
                kind.name(),
                solver.name(),
                med
            );
        }
        let meta = with_meta(&spec, &[("problem", kind.name().into())]);
        out.csv(&format!("flops_{}.csv", kind.name()), &curve, &meta)?;
        out.csv(
            &format!("flops_{}_summary.csv", kind.name()),
            &totals,
            &meta,
        )?;
    }
    Ok(summary)
}

pub fn density(args: &DensityArgs) -> CliResult<String> {
    if args.gammas.is_empty() || args.gammas.iter().any(|g| !(*g > 0.0)) {
        return Err(CliError::Usage("--gammas must be positive".into()));
    }
    let mut spec = ExperimentSpec::from_args("density", &args.common, &[ProblemKind::FeSquare])?;
    spec.solvers = vec![SolverKind::SpaiDigital, SolverKind::SpaiHybrid];
    let mut out = OutputDir::create(&spec.output_dir)?;
    let mut summary = String::new();
    for &kind in &spec.problems {
        let problem = spec.build_problem(kind)?;
        let (n, nnz_a) = (problem.n(), problem.a.nnz());
        let mut stages = Table::new(&[
            "gamma",
            "nnz_budget",
            "nnz_m",
            "within_budget",
            "capped_columns",
            "build_ls_flops",
            "program_cost_flops",
            "mvm_digital_flops",
            "break_even_iterations",
            "iteration_flops_digital",
            "iteration_flops_hybrid",
            "m_d",
            "m_h",
            "total_flops_digital",
            "total_flops_hybrid",
        ]);
        let mut prep = Prepared {
            problem,
            spai: None,
            ilu: None,
        };
        for &gamma in &args.gammas {
            let params = SpaiParams {
                budget_factor: gamma,
                ..spec.spai
            };
            let budget = params.budget(&prep.problem.a);
            let build = spai_build(&prep.problem.a, &params).map_err(|e| e.to_string());
            let (nnz_m, capped, ls) = match &build {
                Ok(b) => (b.m.nnz(), b.capped_columns(), b.ls_flops),
                Err(_) => (0, 0, 0),
            };
            let build_error = build.as_ref().err().cloned();
            prep.spai = Some(build);
            let digital = prep.run(SolverKind::SpaiDigital, &spec.device, &spec.solve, 0);
            let hybrid = prep.run_reps(
                SolverKind::SpaiHybrid,
                &spec.device,
                &spec.solve,
                spec.repetitions,
            );
            let outcomes: Vec<Outcome> = hybrid.iter().map(|r| r.outcome.clone()).collect();
            let m_h = median_outcome(&outcomes);

            let mut curve = Table::new(&[
                "solver",
                "rep",
                "iteration",
                "cumulative_digital_flops",
                "relative_residual",
            ]);
            for (solver, runs) in [
                (SolverKind::SpaiDigital, std::slice::from_ref(&digital)),
                (SolverKind::SpaiHybrid, hybrid.as_slice()),
            ] {
                for (rep, run) in runs.iter().enumerate() {
                    for (i, (f, r)) in run
                        .cumulative_flops()
                        .iter()
                        .zip(&run.residual_history)
                        .enumerate()
                    {
                        curve.push(vec![
                            solver.name().into(),
                            rep.to_string(),
                            i.to_string(),
                            f.to_string(),
                            fmt_f64(*r),
                        ]);
                    }
                }
            }
            let g = fmt_f64(gamma);
            let mut extra = vec![
                ("problem", kind.name().to_string()),
                ("gamma", g.clone()),
                ("nnz_budget", budget.to_string()),
                ("nnz_m", nnz_m.to_string()),
                ("nnz_m_within_budget", (nnz_m <= budget).to_string()),
            ];
            if let Some(e) = &build_error {
                extra.push(("spai_error", e.clone()));
            }
            out.csv(
                &format!("density_{}_gamma{gamma}.csv", kind.name()),
                &curve,
                &with_meta(&spec, &extra),
            )?;

            let mvm = 2 * nnz_m as u64;
            let iter_d = flops_digital_run(1, n, nnz_a, nnz_m, ExecMode::Digital);
            let iter_h = flops_digital_run(1, n, nnz_a, nnz_m, ExecMode::Hybrid);
            let program = PROGRAM_COST_MVMS * mvm;
            stages.push(vec![
                g.clone(),
                budget.to_string(),
                nnz_m.to_string(),
                (nnz_m <= budget).to_string(),
                capped.to_string(),
                ls.to_string(),
                program.to_string(),
                mvm.to_string(),
                program
                    .checked_div(mvm)
                    .map_or("NaN".into(), |k| k.to_string()),
                iter_d.to_string(),
                iter_h.to_string(),
                digital.outcome.to_string(),
                m_h.to_string(),
                (iter_d * digital.outcome.iterations_run() as u64).to_string(),
                (iter_h * m_h.iterations_run() as u64).to_string(),
            ]);
            let _ = writeln!(
                summary,
                "{} gamma={gamma}: nnz(M)={nnz_m} m_d={} m_h={} speedup_ideal={:.2}",
                kind.name(),
                digital.outcome,
                m_h,
                speedup_ideal(n, nnz_a, nnz_m)
            );
        }
        out.csv(
            &format!("density_{}_stages.csv", kind.name()),
            &stages,
            &with_meta(
                &spec,
                &[
                    ("problem", kind.name().into()),
                    (
                        "program_cost_model",
                        format!("{PROGRAM_COST_MVMS} digital MVMs with M"),
                    ),
                ],
            ),
        )?;
    }
    Ok(summary)
}

pub fn bits(args: &BitsArgs) -> CliResult<String> {
    if args.dac_bits.iter().any(|&b| b == 0 || b + 2 > 52) {
        return Err(CliError::Usage("--dac-bits must be in 1..=50".into()));
    }
    if args.sweep_max_it == 0 {
        return Err(CliError::Usage("--sweep-max-it must be at least 1".into()));
    }
    let mut spec = ExperimentSpec::from_args("bits", &args.common, &DEFAULT_PROBLEMS)?;
    spec.solvers = vec![SolverKind::SpaiHybrid];
    spec.solve.max_it = args.sweep_max_it;
    let mut out = OutputDir::create(&spec.output_dir)?;
    let mut table = Table::new(&[
        "problem",
        "dac_bits",
        "adc_bits",
        "median_iterations",
        "status",
        "converged_reps",
        "rep_outcomes",
    ]);
    let mut summary = String::new();
    for &kind in &spec.problems {
        let prep = Prepared::new(spec.build_problem(kind)?, &spec.solvers, &spec.spai);
        let mut settings: Vec<(String, String, DeviceConfig)> = args
            .dac_bits
            .iter()
            .map(|&d| {
                let cfg = DeviceConfig {
                    dac_bits: d,
                    adc_bits: d + 2,
                    ..spec.device
                };
                (d.to_string(), (d + 2).to_string(), cfg)
            })
            .collect();
        settings.push((
            "off".into(),
            "off".into(),
            DeviceConfig {
                dac_bits: 0,
                adc_bits: 0,
                ..spec.device
            },
        ));
        for (dac, adc, cfg) in settings {
            let runs = prep.run_reps(SolverKind::SpaiHybrid, &cfg, &spec.solve, spec.repetitions);
            let outcomes: Vec<Outcome> = runs.into_iter().map(|r| r.outcome).collect();
            let med = median_outcome(&outcomes);
            let status = match &med {
                Outcome::Converged(_) => "converged",
                Outcome::MaxIterations(_) => "not_converged",
                Outcome::Diverged(_) => "diverged",
                Outcome::Failed(_) => "failed",
            };
            let converged = outcomes.iter().filter(|o| o.converged().is_some()).count();
            table.push(vec![
                kind.name().into(),
                dac.clone(),
                adc,
                fmt_opt(med.converged()),
                status.into(),
                converged.to_string(),
                outcomes
                    .iter()
                    .map(|o| o.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            ]);
            let _ = writeln!(
                summary,
                "{} dac={dac}: {med} ({converged}/{} converged)",
                kind.name(),
                outcomes.len()
            );
        }
    }
    out.csv("bits.csv", &table, &spec.metadata())?;
    Ok(summary)
}

#[derive(Serialize)]
struct BoundsFile<'a> {
    problem: &'a str,
    verdict: &'a str,
    report: &'a crossbar_core::noise::NoiseBoundReport,
}

pub fn bounds(args: &BoundsArgs) -> CliResult<String> {
    if args.trials < 2 {
        return Err(CliError::Usage("--trials must be at least 2".into()));
    }
    let mut spec = ExperimentSpec::from_args("bounds", &args.common, &[ProblemKind::Fd3d])?;
    spec.solvers = vec![SolverKind::SpaiHybrid];
    let mut out = OutputDir::create(&spec.output_dir)?;
    let opts = McOptions {
        trials: args.trials,
        ..McOptions::default()
    };
    let mut summary = String::new();
    let mut uncertified = Vec::new();
    for &kind in &spec.problems {
        let p = spec.build_problem(kind)?;
        let m = spai_build(&p.a, &spec.spai)?.m;
        let rep = monte_carlo_validate(&p.a, &m, &spec.device, &opts)?;
        let name = kind.name();
        out.json(
            &format!("bounds_{name}.json"),
            &BoundsFile {
                problem: name,
                verdict: rep.verdict.label(),
                report: &rep,
            },
        )?;
        let mut samples = Table::new(&["trial", "frobenius", "spectral"]);
        for (t, (f, s)) in rep
            .frobenius_samples
            .iter()
            .zip(&rep.spectral_samples)
            .enumerate()
        {
            samples.push(vec![t.to_string(), fmt_f64(*f), fmt_f64(*s)]);
        }
        out.csv(
            &format!("bounds_{name}_samples.csv"),
            &samples,
            &with_meta(
                &spec,
                &[
                    ("problem", name.into()),
                    ("verdict", rep.verdict.label().into()),
                ],
            ),
        )?;
        let _ = writeln!(
            summary,
            "{name}: {}\n  margin (1 - |I-MA|)/|A| = {:e}, sufficient sigma = {:e}, sigma = {:e}\n  mean |E|_F = {:e} (bound {:e}, within: {})\n  var |E|_F = {:e} (bound {:e}, within: {})\n  |E|_2 <= |E|_F on every draw: {}, share of draws inside margin: {:.3}",
            rep.verdict.label(),
            rep.margin,
            rep.sigma_sufficient,
            rep.sigma,
            rep.mean_frobenius,
            rep.mean_bound,
            rep.mean_within_bound,
            rep.var_frobenius,
            rep.var_bound,
            rep.var_within_bound,
            rep.spectral_below_frobenius,
            rep.fraction_within_margin,
        );
        if rep.verdict != Verdict::ConvergenceSufficient {
            uncertified.push(format!("{name}: {}", rep.verdict.label()));
        }
    }
    if uncertified.is_empty() {
        Ok(summary)
    } else {
        print!("{summary}");
        Err(CliError::Certification(uncertified.join(", ")))
    }
}

pub fn gen(args: &CommonArgs) -> CliResult<String> {
    let spec = ExperimentSpec::from_args("gen", args, &DEFAULT_PROBLEMS)?;
    let mut out = OutputDir::create(&spec.output_dir)?;
    let mut summary = String::new();
    for &kind in &spec.problems {
        let p = spec.build_problem(kind)?;
        let name = kind.name();
        let path = out.path(&format!("{name}_A.mtx"));
        write_matrix_market(&p.a, &path)?;
        let mut b = Table::new(&["i", "b"]);
        for (i, v) in p.b.iter().enumerate() {
            b.push(vec![i.to_string(), fmt_f64(*v)]);
        }
        let mut extra: Vec<(&str, String)> = vec![("problem", name.into())];
        extra.extend(p.meta.iter().map(|(k, v)| (k.as_str(), v.clone())));
        out.csv(&format!("{name}_b.csv"), &b, &with_meta(&spec, &extra))?;
        let _ = writeln!(
            summary,
            "{name}: n={} nnz={} -> {}",
            p.n(),
            p.a.nnz(),
            path.display()
        );
    }
    Ok(summary)
}

pub fn precond(args: &PrecondArgs) -> CliResult<String> {
    let spec = ExperimentSpec::from_args("precond", &args.common, &[ProblemKind::Fd3d])?;
    let mut out = OutputDir::create(&spec.output_dir)?;
    let mut summary = String::new();
    for &kind in &spec.problems {
        let p = spec.build_problem(kind)?;
        let name = kind.name();
        match args.kind {
            PrecondKind::Spai => {
                let b = spai_build(&p.a, &spec.spai)?;
                write_matrix_market(&b.m, &out.path(&format!("{name}_spai.mtx")))?;
                let mut cols = Table::new(&["column", "residual", "nnz", "stop"]);
                let t = b.m.transpose();
                for (j, r) in b.residuals.iter().enumerate() {
                    cols.push(vec![
                        j.to_string(),
                        fmt_f64(*r),
                        t.row(j).0.len().to_string(),
                        format!("{:?}", b.stops[j]),
                    ]);
                }
                let extra = [
                    ("problem", name.to_string()),
                    ("nnz_m", b.m.nnz().to_string()),
                    ("capped_columns", b.capped_columns().to_string()),
                    ("ls_flops", b.ls_flops.to_string()),
                    ("budget_warning", b.warning.to_string()),
                ];
                out.csv(
                    &format!("{name}_spai_columns.csv"),
                    &cols,
                    &with_meta(&spec, &extra),
                )?;
                let _ = writeln!(
                    summary,
                    "{name}: nnz(M)={} ({:.1}/row), capped columns {}",
                    b.m.nnz(),
                    b.m.nnz() as f64 / p.n() as f64,
                    b.capped_columns()
                );
            }
            PrecondKind::Ilu0 => {
                let f = ilu0_build(&p.a)?;
                write_matrix_market(&f.l, &out.path(&format!("{name}_ilu0_L.mtx")))?;
                write_matrix_market(&f.u, &out.path(&format!("{name}_ilu0_U.mtx")))?;
                let _ = writeln!(summary, "{name}: nnz(L)+nnz(U)={}", f.nnz());
            }
        }
    }
    Ok(summary)
}

pub fn solve_cmd(args: &SolveArgs) -> CliResult<String> {
    let mut spec = ExperimentSpec::from_args("solve", &args.common, &[ProblemKind::Fd3d])?;
    spec.solvers = vec![args.solver];
    let mut out = OutputDir::create(&spec.output_dir)?;
    let mut summary = String::new();
    let mut diverged = Vec::new();
    for &kind in &spec.problems {
        let prep = Prepared::new(spec.build_problem(kind)?, &spec.solvers, &spec.spai);
        let run = prep.run(args.solver, &spec.device, &spec.solve, args.rep);
        let name = format!("solve_{}_{}", kind.name(), args.solver.name());
        let extra = [
            ("problem", kind.name().to_string()),
            ("rep", args.rep.to_string()),
            ("outcome", run.outcome.to_string()),
            ("digital_flops", run.digital_flops.to_string()),
        ];
        out.csv(
            &format!("{name}.csv"),
            &residual_table(&run.residual_history),
            &with_meta(&spec, &extra),
        )?;
        out.json(&format!("{name}.json"), &run)?;
        let _ = writeln!(
            summary,
            "{} {}: {} (final residual {}, {} digital FLOPs)",
            kind.name(),
            args.solver.name(),
            run.outcome,
            fmt_f64(run.residual_history.last().copied().unwrap_or(f64::NAN)),
            run.digital_flops
        );
        if matches!(run.outcome, Outcome::Diverged(_) | Outcome::Failed(_)) {
            diverged.push(format!("{}: {}", kind.name(), run.outcome));
        }
    }
    if diverged.is_empty() {
        Ok(summary)
    } else {
        print!("{summary}");
        Err(CliError::RunFailed(diverged.join(", ")))
    }
}
