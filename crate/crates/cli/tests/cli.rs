use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ostl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ostl"))
        .args(args)
        .env("OSTL_DATA_DIR", dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(dir: &Path) -> (PathBuf, PathBuf) {
    let sys = dir.join("dimer.txt");
    fs::write(&sys, "# dimer\n2\n0 60\n60 180\n").unwrap();
    let grid = dir.join("grid.toml");
    fs::write(
        &grid,
        "lambdas = [20.0, 80.0]\ngammas = [50.0, 200.0]\ntemperatures = [100.0, 300.0]\nsites = [0, 1]\n",
    )
    .unwrap();
    (sys, grid)
}

fn generate(dir: &Path, out: &str, jobs: &str) -> Output {
    let (sys, grid) = setup(dir);
    ostl(
        dir,
        &[
            "generate",
            "--system",
            sys.to_str().unwrap(),
            "--grid",
            grid.to_str().unwrap(),
            "--t-max",
            "50",
            "--jobs",
            jobs,
            "--out",
            dir.join(out).to_str().unwrap(),
        ],
    )
}

fn traj_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "traj"))
        .collect();
    v.sort();
    v
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(ostl(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(ostl(tmp.path(), &["train", "--epochs", "many"]).status.code(), Some(1));
    assert_eq!(ostl(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn generate_is_resumable_and_parallelism_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = generate(d, "a", "1");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("generated=16 skipped=0 total=16"));
    let a = traj_files(&d.join("a"));
    assert_eq!(a.len(), 16);

    let again = generate(d, "a", "1");
    assert!(stdout(&again).contains("generated=0 skipped=16"));

    // Truncated file is detected by checksum and regenerated.
    let victim = &a[3];
    let bytes = fs::read(victim).unwrap();
    fs::write(victim, &bytes[..bytes.len() / 2]).unwrap();
    let fix = generate(d, "a", "1");
    assert!(stdout(&fix).contains("generated=1 skipped=15"));
    assert_eq!(fs::read(victim).unwrap(), bytes);

    let p = generate(d, "b", "2");
    assert!(p.status.success());
    let b = traj_files(&d.join("b"));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert!(generate(d, "trajectories", "0").status.success());

    let too_many = ostl(d, &["build-dataset", "--train-per-site", "7", "--val-per-site", "2"]);
    assert_eq!(too_many.status.code(), Some(2));
    assert!(stderr(&too_many).contains("j=0"));

    let build = |out: &str| ostl(d, &["build-dataset", "--train-per-site", "5", "--val-per-site", "2", "--out", out]);
    let b1 = build(d.join("ds1.bin").to_str().unwrap());
    assert!(b1.status.success(), "{}", stderr(&b1));
    assert_eq!(stdout(&b1).trim(), "train=10 val=4 test=2");
    assert!(build(d.join("dataset.bin").to_str().unwrap()).status.success());
    assert_eq!(fs::read(d.join("ds1.bin")).unwrap(), fs::read(d.join("dataset.bin")).unwrap());
    assert!(d.join("dataset.bin.manifest.json").exists());

    let train = |extra: &[&str]| {
        let mut args = vec!["train", "--epochs", "5", "--seed", "3", "--log-every", "0"];
        args.extend_from_slice(extra);
        ostl(d, &args)
    };
    let t = train(&[]);
    assert!(t.status.success(), "{}", stderr(&t));
    assert!(stdout(&t).contains("best_epoch="));
    assert!(train(&["--out", d.join("model2.bin").to_str().unwrap()]).status.success());
    assert_eq!(fs::read(d.join("model.bin")).unwrap(), fs::read(d.join("model2.bin")).unwrap());
    let model = d.join("model2.bin");
    let history = fs::read_to_string(d.join("model2.bin.history.txt")).unwrap();
    assert_eq!(history.lines().count(), 6);

    let pred = ostl(
        d,
        &["predict", "--model", model.to_str().unwrap(), "--j", "1", "--lambda", "500", "--gamma", "100", "--temperature", "200"],
    );
    assert!(pred.status.success(), "{}", stderr(&pred));
    assert!(stderr(&pred).contains("warning"));
    assert!(stdout(&pred).contains("prediction_ms="));
    let csv = fs::read_to_string(d.join("prediction.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 11);
    assert!(csv.starts_with("t_fs,"));

    let eval = |out: &str| ostl(d, &["evaluate", "--model", model.to_str().unwrap(), "--out", out]);
    let e1 = eval(d.join("e1").to_str().unwrap());
    assert!(e1.status.success(), "{}", stderr(&e1));
    assert!(eval(d.join("e2").to_str().unwrap()).status.success());
    for f in ["errors.txt", "errors.csv", "interpolation.txt", "physicality.txt"] {
        assert_eq!(fs::read(d.join("e1").join(f)).unwrap(), fs::read(d.join("e2").join(f)).unwrap());
    }
    assert!(stdout(&e1).contains("mae_diagonal"));

    let bench = ostl(d, &["bench", "--model", model.to_str().unwrap(), "--repetitions", "5"]);
    assert!(bench.status.success());
    assert!(stdout(&bench).contains("median_ms="));
    assert_eq!(ostl(d, &["bench", "--model", model.to_str().unwrap(), "--repetitions", "0"]).status.code(), Some(2));
}

#[test]
fn missing_and_corrupt_inputs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert!(generate(d, "trajectories", "1").status.success());
    let files = traj_files(&d.join("trajectories"));
    fs::remove_file(&files[0]).unwrap();
    let o = ostl(d, &["build-dataset", "--train-per-site", "2", "--val-per-site", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing"));

    fs::write(d.join("dataset.bin"), b"OSTLDSET\x09\x00\x00\x00garbage").unwrap();
    assert_eq!(ostl(d, &["train", "--epochs", "1"]).status.code(), Some(2));
}

#[test]
fn divergent_training_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert!(generate(d, "trajectories", "1").status.success());
    assert!(ostl(d, &["build-dataset", "--train-per-site", "4", "--val-per-site", "2"]).status.success());
    let o = ostl(d, &["train", "--epochs", "50", "--lr", "1e300", "--log-every", "0"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
