use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use paramtrack_cli::commands::quality_file;
use paramtrack_cli::pipeline::distort;
use paramtrack_core::mesh::generate;
use paramtrack_core::mesh::gmsh::write_gmsh;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_paramtrack"))
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_config(dir: &Path, max_iters: usize) -> std::path::PathBuf {
    let mesh = dir.join("grid.msh");
    write_gmsh(&generate::unit_square(8, 0.0, 0).unwrap(), &mesh).unwrap();
    let cfg = dir.join(format!("run{max_iters}.toml"));
    fs::write(
        &cfg,
        format!(
            "[mesh]\npath = \"grid.msh\"\nmode = \"volume2d\"\n\
             [initial_distortion]\nx = \"0.02*sin(6*x)*sin(5*y)\"\n\
             [optimizer]\ngrad_tol = {{ relative = 1e-2 }}\nmax_iters = {max_iters}\nsnapshot_every = 2\n\
             [output]\ndir = \"out{max_iters}\"\n"
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn identical_runs_write_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 200);
    let mut logs = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("o{k}"));
        let out = bin()
            .arg("optimize")
            .arg(&cfg)
            .arg("--output-dir")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out_dir.join("final.vtk").exists());
        assert!(out_dir.join("iter_0000.vtk").exists());
        logs.push(fs::read(out_dir.join("log.csv")).unwrap());
    }
    assert!(!logs[0].is_empty());
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn iteration_limit_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1);
    let out = bin().arg("optimize").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 2);
    let log = fs::read_to_string(dir.path().join("out1/log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        "[mesh]\npath = \"missing.msh\"\nmode = \"volume2d\"\n",
    )
    .unwrap();
    let out = bin().arg("optimize").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.msh"));
    let out = bin()
        .args(["optimize", "--preset", "exp9"])
        .output()
        .unwrap();
    assert_ne!(code(&out), 0);
}

#[test]
fn check_passes_and_catches_a_flipped_derivative() {
    let out = bin()
        .args(["check", "--preset", "exp1", "--seed", "3"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{text}");
    assert!(text.contains("PASS circle rotate pi"));
    let out = bin()
        .args(["check", "--preset", "exp1", "--negate-derivative"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL finite differences"));
}

#[test]
fn distortion_shows_up_in_quality() {
    let dir = tempfile::tempdir().unwrap();
    let grid = generate::unit_square(16, 0.0, 0).unwrap();
    let plain = dir.path().join("plain.msh");
    let bent = dir.path().join("bent.msh");
    write_gmsh(&grid, &plain).unwrap();
    let x = "0.025*sin(25.5*x)".to_string();
    let zero = "0".to_string();
    write_gmsh(&distort(&grid, [&x, &zero, &zero]).unwrap(), &bent).unwrap();
    let q0 = quality_file(&plain).unwrap();
    let q1 = quality_file(&bent).unwrap();
    assert!(q0.volume_rel_variance < 1e-24);
    assert!(q1.volume_rel_variance > 1e-4);
    assert!(q1.quality_min < q0.quality_min);

    let out = bin().arg("quality").arg(&bent).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("radius ratio min"));
}
