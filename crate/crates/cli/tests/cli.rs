use std::path::Path;
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn expint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expint")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn bench_emits_one_row_per_method() {
    let out = expint(&["bench", "--grid", "12", "--method", "naive,tiled", "--repetitions", "3", "--warmup", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("device,kernel,grid,boundary,method,precision,workers"));
    let checksum = |l: &str| l.rsplit(',').next().unwrap().to_string();
    assert!(lines[1].contains(",naive,") && lines[2].contains(",tiled,"));
    assert_eq!(checksum(lines[1]), checksum(lines[2]));
}

#[test]
fn bench_records_the_boundary_expression() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "bench.csv");
    let out = expint(&[
        "bench", "--grid", "8", "--boundary", "z*(1-z)*x*y", "--repetitions", "3", "--out", &csv,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",z*(1-z)*x*y,naive,"), "{text}");

    let out = expint(&["bench", "--grid", "8", "--repetitions", "3", "--json"]);
    assert_eq!(code(&out), 0);
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rows[0]["boundary"], "homogeneous");
}

#[test]
fn combustion_output_does_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |m: &str| {
        let u = path(dir.path(), &format!("u{m}.bin"));
        let steps = path(dir.path(), &format!("steps{m}.csv"));
        let out = expint(&[
            "solve-combustion", "--grid", "33", "--h", "1e-4", "--tol", "1e-4", "--workers", m, "--out", &u,
            "--steps-csv", &steps,
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        (std::fs::read(u).unwrap(), std::fs::read_to_string(steps).unwrap())
    };
    let (u1, s1) = run("1");
    let (u4, s4) = run("4");
    assert!(!u1.is_empty());
    assert_eq!(u1, u4);
    assert_eq!(s1, s4);
    assert_eq!(s1.lines().count(), 2);
}

#[test]
fn configuration_errors_exit_with_one() {
    assert_eq!(code(&expint(&["solve-combustion", "--grid", "5", "--h", "0"])), 1);
    assert_eq!(code(&expint(&["solve-combustion", "--grid", "5", "--boundary", "none"])), 1);
    assert_eq!(code(&expint(&["bench", "--kernel", "nonsense"])), 1);
    assert_eq!(code(&expint(&["verify", "--grid", "5"])), 1);
    assert_eq!(code(&expint(&["frobnicate"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "run.cfg");
    std::fs::write(&cfg, "grid = 5\ncolour = red\n").unwrap();
    assert_eq!(code(&expint(&["solve-combustion", "--config", &cfg])), 1);
    std::fs::write(&cfg, "grid = 5\nt_end = 2e-4\nh = 1e-4\n").unwrap();
    let out = expint(&["solve-combustion", "--config", &cfg, "--json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["steps"], 2);
}

fn write_hermitian(path: &str, h: &DMatrix<Complex64>) {
    let n = h.nrows();
    let mut entries = Vec::new();
    for j in 0..n {
        for i in j..n {
            if h[(i, j)] != Complex64::new(0.0, 0.0) {
                entries.push(format!("{} {} {:e} {:e}", i + 1, j + 1, h[(i, j)].re, h[(i, j)].im));
            }
        }
    }
    let text = format!(
        "%%MatrixMarket matrix coordinate complex hermitian\n{n} {n} {}\n{}\n",
        entries.len(),
        entries.join("\n")
    );
    std::fs::write(path, text).unwrap();
}

fn write_vector(path: &str, v: &[Complex64]) {
    let text: String = v.iter().map(|z| format!("{:e} {:e}\n", z.re, z.im)).collect();
    std::fs::write(path, text).unwrap();
}

fn read_vector(path: &str) -> Vec<Complex64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut it = l.split_whitespace().map(|s| s.parse::<f64>().unwrap());
            Complex64::new(it.next().unwrap(), it.next().unwrap())
        })
        .collect()
}

fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

#[test]
fn hermitian_propagation_matches_dense_oracle() {
    let n = 64;
    let t = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = random_hermitian(n, &mut rng);
    let psi: Vec<Complex64> =
        (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();

    let dir = tempfile::tempdir().unwrap();
    let (mtx, init) = (path(dir.path(), "h.mtx"), path(dir.path(), "psi.txt"));
    write_hermitian(&mtx, &h);
    write_vector(&init, &psi);

    let eig = h.clone().symmetric_eigen();
    let q = &eig.eigenvectors;
    let phase = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&l| Complex64::new(0.0, -t * l).exp()));
    let want = q * DMatrix::from_diagonal(&phase) * q.adjoint() * DVector::from_column_slice(&psi);

    for workers in ["1", "3"] {
        let out_path = path(dir.path(), &format!("out{workers}.txt"));
        let ledger = path(dir.path(), "ledger.csv");
        let out = expint(&[
            "propagate", "--matrix", &mtx, "--initial", &init, "--hermitian", "--t-end", "0.1", "--tol", "1e-8",
            "--workers", workers, "--out", &out_path, "--ledger", &ledger, "--json",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let got = read_vector(&out_path);
        let err = got.iter().zip(want.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / want.norm();
        assert!(err <= 1e-6, "workers {workers}: error {err:e}");
        let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert!(summary["norm_drift"].as_f64().unwrap() <= 1e-7);
        if workers == "3" {
            let matvecs = summary["matvecs"].as_u64().unwrap();
            assert_eq!(summary["scalars_moved"].as_u64().unwrap(), matvecs * 2 * n as u64);
            assert!(std::fs::read_to_string(&ledger).unwrap().starts_with("apply,scalars_moved,cumulative_bytes"));
        }
    }
}

#[test]
fn zero_hamiltonian_leaves_the_state_unchanged() {
    let n = 10;
    let dir = tempfile::tempdir().unwrap();
    let (mtx, init, out_path) = (path(dir.path(), "z.mtx"), path(dir.path(), "psi.txt"), path(dir.path(), "out.txt"));
    std::fs::write(&mtx, format!("%%MatrixMarket matrix coordinate complex hermitian\n{n} {n} 0\n")).unwrap();
    let psi: Vec<Complex64> = (0..n).map(|k| Complex64::new(k as f64 * 0.25, 1.0 - k as f64)).collect();
    write_vector(&init, &psi);
    let out = expint(&["propagate", "--matrix", &mtx, "--initial", &init, "--hermitian", "--t-end", "3", "--out", &out_path]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_vector(&out_path), psi);
}

#[test]
fn propagate_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (mtx, init) = (path(dir.path(), "a.mtx"), path(dir.path(), "psi.txt"));
    std::fs::write(&mtx, "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 2 1.0\n2 1 -1.0\n").unwrap();
    write_vector(&init, &[Complex64::new(1.0, 0.0); 2]);
    let run = |extra: &[&str]| {
        let mut args = vec!["propagate", "--matrix", &mtx, "--initial", &init];
        args.extend_from_slice(extra);
        code(&expint(&args))
    };
    assert_eq!(run(&[]), 1, "missing --t-end");
    assert_eq!(run(&["--t-end", "1", "--hermitian"]), 2, "not Hermitian");
    assert_eq!(run(&["--t-end", "1", "--grid", "4"]), 1);
    write_vector(&init, &[Complex64::new(1.0, 0.0); 3]);
    assert_eq!(run(&["--t-end", "1"]), 2, "length mismatch");
}

#[test]
fn verify_exit_codes() {
    let out = expint(&["verify", "--only", "leja"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.lines().all(|l| !l.starts_with("[FAIL]")));
    assert!(text.contains("[PASS] leja:"));

    let out = expint(&["verify", "--only", "leja", "--inject-failure"]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("[FAIL] leja: injected failure"));

    assert_eq!(code(&expint(&["verify", "--only", "leja,bogus"])), 1);
    assert_eq!(code(&expint(&["--help"])), 0);
}
