use std::path::PathBuf;

use crossbar_core::problems::read_matrix_market;
use crossbar_core::sparse::spmv;
use crossbar_core::spectral::{condition_number_estimate, spectral_radius_estimate, PowerOptions};
use crossbar_core::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn rho_i_minus_ma(a: &SparseMatrix, m: &SparseMatrix) -> f64 {
    spectral_radius_estimate(
        |x| {
            let max = spmv(m, &spmv(a, x).unwrap()).unwrap();
            x.iter().zip(&max).map(|(u, v)| u - v).collect()
        },
        a.n_rows(),
        &PowerOptions::default(),
    )
    .value
}

fn builtins() -> Vec<ProblemInstance> {
    let circle = read_matrix_market(&fixture("fe_circle.mtx"))
        .unwrap()
        .jacobi_scaled()
        .unwrap();
    vec![
        fd_laplacian_3d(8).unwrap(),
        fe_laplacian_square(25).unwrap(),
        circle,
    ]
}

#[test]
fn circle_fixture_is_spd_stiffness() {
    let p = read_matrix_market(&fixture("fe_circle.mtx")).unwrap();
    assert_eq!(p.n(), 361);
    assert!(p.a.is_symmetric());
    assert!(p.a.diagonal().iter().all(|&d| d > 0.0));
    let kappa = condition_number_estimate(&p.a, &PowerOptions::default()).unwrap();
    assert!(kappa > 10.0 && kappa < 1e4, "{kappa}");
}

#[test]
fn unpreconditioned_richardson_fails_on_builtins() {
    for p in builtins() {
        let rep = solve(
            &p.a,
            &p.b,
            &mut Preconditioner::Identity,
            &SolveOptions::default(),
            None,
        )
        .unwrap();
        assert_eq!(rep.status, SolveStatus::MaxIterations, "{}", p.label);
        assert_eq!(rep.iterations, 50);
    }
}

#[test]
fn spai_contracts_on_builtins() {
    for p in builtins() {
        let params = SpaiParams::default();
        let build = spai_build(&p.a, &params).unwrap();
        for (j, r) in build.residuals.iter().enumerate() {
            if !build.stops[j].is_capped() {
                assert!(*r <= params.tol);
            }
        }
        let rho = rho_i_minus_ma(&p.a, &build.m);
        assert!(rho < 1.0, "{}: {rho}", p.label);
        let rep = solve(
            &p.a,
            &p.b,
            &mut Preconditioner::SpaiDigital(build.m.clone()),
            &SolveOptions::default(),
            None,
        )
        .unwrap();
        assert_eq!(rep.status, SolveStatus::Converged, "{}", p.label);
        assert_eq!(
            rep.counter.digital_flops,
            flops_digital_run(
                rep.iterations,
                p.n(),
                p.a.nnz(),
                build.m.nnz(),
                ExecMode::Digital
            )
        );
    }
}

#[test]
fn fd_condition_number_and_fill() {
    let p = fd_laplacian_3d(8).unwrap();
    let kappa = condition_number_estimate(&p.a, &PowerOptions::default()).unwrap();
    // exact value for the k = 8 Dirichlet Laplacian: (1 + cos(π/9)) / (1 − cos(π/9))
    let c = (std::f64::consts::PI / 9.0).cos();
    assert!((kappa - (1.0 + c) / (1.0 - c)).abs() < 1e-4 * kappa);
    let m = spai_build(&p.a, &SpaiParams::default()).unwrap().m;
    let fill = m.nnz() as f64 / p.n() as f64;
    assert!((40.0..=140.0).contains(&fill), "{fill}");
}

#[test]
fn digital_solves_are_bitwise_reproducible() {
    let p = fe_laplacian_square(10).unwrap();
    let m = spai_build(&p.a, &SpaiParams::default()).unwrap().m;
    let run = || {
        solve(
            &p.a,
            &p.b,
            &mut Preconditioner::SpaiDigital(m.clone()),
            &SolveOptions::default(),
            None,
        )
        .unwrap()
    };
    let (r1, r2) = (run(), run());
    assert_eq!(r1.residual_history, r2.residual_history);
    assert_eq!(r1.x, r2.x);
}

#[test]
fn zero_noise_hybrid_matches_digital() {
    let p = fd_laplacian_3d(6).unwrap();
    let m = spai_build(&p.a, &SpaiParams::default()).unwrap().m;
    let d = solve(
        &p.a,
        &p.b,
        &mut Preconditioner::SpaiDigital(m.clone()),
        &SolveOptions::default(),
        None,
    )
    .unwrap();
    let dev = CrossbarDevice::program(&m, &DeviceConfig::noiseless()).unwrap();
    let h = solve(
        &p.a,
        &p.b,
        &mut Preconditioner::hybrid(m, dev).unwrap(),
        &SolveOptions::default(),
        None,
    )
    .unwrap();
    assert_eq!(d.iterations, h.iterations);
    for (x, y) in d.residual_history.iter().zip(&h.residual_history) {
        assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-300));
    }
}

#[test]
fn ilu0_reference_converges_on_fe_square() {
    let p = fe_laplacian_square(25).unwrap();
    let f = ilu0_build(&p.a).unwrap();
    let nnz = f.nnz();
    let mut pre = Preconditioner::Ilu0(f);
    let rep = solve(
        &p.a,
        &p.b,
        &mut pre,
        &SolveOptions {
            max_it: 500,
            ..SolveOptions::default()
        },
        None,
    )
    .unwrap();
    assert_eq!(rep.status, SolveStatus::Converged);
    assert_eq!(
        rep.counter.digital_flops,
        flops_digital_run(rep.iterations, p.n(), p.a.nnz(), nnz, ExecMode::Digital)
    );
}
