use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use crossbar_core::DeviceConfig;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossbar-precond"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn code(args: &[&str], out: &Path) -> i32 {
    run(args, out).status.code().unwrap()
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_crossbar-precond");
    assert_eq!(
        Command::new(bin)
            .arg("--help")
            .output()
            .unwrap()
            .status
            .code(),
        Some(0)
    );
    assert_eq!(Command::new(bin).output().unwrap().status.code(), Some(1));
    assert_eq!(code(&["table2", "--no-such-flag"], dir.path()), 1);
    assert_eq!(code(&["solve", "--problem", "mm_file"], dir.path()), 1);
    assert_eq!(code(&["curves", "--reps", "0"], dir.path()), 1);
    assert_eq!(
        code(
            &["solve", "--device-config", "/nonexistent/cfg"],
            dir.path()
        ),
        1
    );
}

#[test]
fn divergence_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "solve", "--solver", "none", "--k", "4", "--alpha", "3", "--max-it", "200",
    ];
    assert_eq!(code(&args, dir.path()), 2);
}

#[test]
fn bounds_exit_code_follows_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("noiseless.cfg");
    DeviceConfig::noiseless().save(&cfg).unwrap();
    let quiet = [
        "bounds",
        "--k",
        "4",
        "--trials",
        "10",
        "--device-config",
        cfg.to_str().unwrap(),
    ];
    let out = run(&quiet, dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("CONVERGENCE-SUFFICIENT"));

    let out = run(&["bounds", "--k", "4", "--trials", "10"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("NOT CERTIFIED"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bounds_fd3d.json")).unwrap())
            .unwrap();
    assert_eq!(json["verdict"], "NOT CERTIFIED");
    assert_eq!(json["report"]["trials"], 10);
}

#[test]
fn csv_files_carry_the_full_spec() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(
            &["table2", "--k", "4", "--m", "6", "--reps", "3", "--seed", "9"],
            dir.path()
        ),
        0
    );
    let csv = fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("problem,n,kappa,"));
    let rows: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("fd3d,64,"));
    assert!(rows[1].starts_with("fe_square,36,"));
    for key in [
        "command = table2",
        "seed = 9",
        "repetitions = 3",
        "spai.tol = ",
        "device.dac_bits = 7",
        "solve.max_it = 50",
    ] {
        assert!(csv.contains(&format!("# {key}")), "missing {key}");
    }
    let trailing = csv.lines().skip_while(|l| !l.starts_with('#'));
    assert!(trailing.into_iter().all(|l| l.starts_with("# ")));
    assert!(dir.path().join("table2.json").exists());
}

#[test]
fn table2_flops_match_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(
            &["table2", "--problem", "fd3d", "--k", "5", "--reps", "3"],
            dir.path()
        ),
        0
    );
    let csv = fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    let n: usize = col("n").parse().unwrap();
    let nnz_a = (col("nnz_a_per_n").parse::<f64>().unwrap() * n as f64).round() as usize;
    let nnz_m = (col("nnz_m_per_n").parse::<f64>().unwrap() * n as f64).round() as usize;
    let m_d: usize = col("m_d").parse().unwrap();
    let m_h: usize = col("m_h").parse().unwrap();
    use crossbar_core::{flops_digital_run, ExecMode};
    assert_eq!(
        col("flops_md"),
        flops_digital_run(m_d, n, nnz_a, nnz_m, ExecMode::Digital).to_string()
    );
    assert_eq!(
        col("flops_mh"),
        flops_digital_run(m_h, n, nnz_a, nnz_m, ExecMode::Hybrid).to_string()
    );
    assert!(col("m").starts_with("MaxIterations(50)"));
}

#[test]
fn generated_matrix_round_trips_through_mm_file() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&["gen", "--problem", "fd3d", "--k", "4"], dir.path()),
        0
    );
    let mtx = dir.path().join("fd3d_A.mtx");
    let mtx = mtx.to_str().unwrap();
    let a = ["solve", "--matrix", mtx, "--solver", "spai-digital"];
    let b = [
        "solve",
        "--problem",
        "fd3d",
        "--k",
        "4",
        "--solver",
        "spai-digital",
    ];
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&a, da.path()), 0);
    assert_eq!(code(&b, db.path()), 0);
    let history = |p: &Path| -> Vec<f64> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    let ha = history(&da.path().join("solve_mm_file_spai-digital.csv"));
    let hb = history(&db.path().join("solve_fd3d_spai-digital.csv"));
    // rescaling the already unit-diagonal system only perturbs rounding
    assert_eq!(ha.len(), hb.len());
    for (x, y) in ha.iter().zip(&hb) {
        assert!((x - y).abs() <= 1e-10 * x.abs(), "{x} vs {y}");
    }
}

#[test]
fn digital_curves_are_identical_across_repetitions() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "curves",
        "--k",
        "5",
        "--reps",
        "3",
        "--solvers",
        "spai-digital,spai-hybrid",
    ];
    assert_eq!(code(&args, dir.path()), 0);
    let read = |name: &str| fs::read_to_string(dir.path().join(name)).unwrap();
    let body = |s: String| {
        s.lines()
            .filter(|l| !l.starts_with("# rep"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        body(read("curves_fd3d_spai-digital_rep0.csv")),
        body(read("curves_fd3d_spai-digital_rep2.csv"))
    );
    let h0 = read("curves_fd3d_spai-hybrid_rep0.csv");
    let h1 = read("curves_fd3d_spai-hybrid_rep1.csv");
    assert_ne!(body(h0.clone()), body(h1.clone()));
    for h in [h0, h1] {
        assert_eq!(h.lines().nth(1), Some("0,1e0"));
    }
}

#[test]
fn density_stage_table_models_programming_cost() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "density",
        "--problem",
        "fe_square",
        "--m",
        "8",
        "--reps",
        "3",
        "--gammas",
        "5,20",
    ];
    assert_eq!(code(&args, dir.path()), 0);
    let csv = fs::read_to_string(dir.path().join("density_fe_square_stages.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').collect())
        .collect();
    let col =
        |r: &Vec<&str>, name: &str| r[header.iter().position(|h| *h == name).unwrap()].to_string();
    for r in &rows {
        assert_eq!(col(r, "within_budget"), "true");
        assert_eq!(col(r, "break_even_iterations"), "7");
    }
    let per_d: Vec<u64> = rows
        .iter()
        .map(|r| col(r, "iteration_flops_digital").parse().unwrap())
        .collect();
    let per_h: Vec<String> = rows
        .iter()
        .map(|r| col(r, "iteration_flops_hybrid"))
        .collect();
    assert!(per_d[0] < per_d[1]);
    assert_eq!(per_h[0], per_h[1]);
    assert!(dir.path().join("density_fe_square_gamma5.csv").exists());
}
