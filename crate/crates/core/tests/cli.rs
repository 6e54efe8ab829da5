use std::f64::consts::{E, PI};
use std::path::Path;
use std::process::{Command, Output};

use specpred::cli::read_series;

fn specpred(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specpred"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPECPRED_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value_of(csv: &str, key: &str) -> String {
    csv.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} in {csv}"))
        .to_string()
}

fn sigma2_column(csv: &str) -> Vec<f64> {
    csv.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("n,"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn gm_examples() {
    let dir = tempfile::tempdir().unwrap();
    let o = specpred(&["gm", "abs_sin(center=0,alpha=2)"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let g: f64 = value_of(&stdout(&o), "G").parse().unwrap();
    assert!((g - 0.25).abs() < 1e-12);

    let o = specpred(&["gm", "const(0.5)"], dir.path());
    assert_eq!(value_of(&stdout(&o), "G"), "0.5");

    let o = specpred(&["gm", "pollaczek(a=1)", "--format", "json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["G"], 0.0);
    assert_eq!(v["divergent"], true);
    assert_eq!(v["verdict"], "deterministic");
}

#[test]
fn parse_errors_exit_1_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let o = specpred(&["gm", "pollaczek(a=1) *"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("column 17"), "{err}");
    assert!(err.contains('^'));
    let o = specpred(&["gm", "frobnicate(2)"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = specpred(&["predict", "const(1)", "--precision", "100"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = specpred(&["nosuchverb"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn inapplicable_factor_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = specpred(
        &["ratio", "pollaczek(a=1)", "pollaczek(a=2)", "--n", "8"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn breakdown_exits_3_with_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = specpred(
        &[
            "predict",
            "hat(a=300)",
            "--n",
            "40",
            "--max-precision",
            "128",
            "--out",
            "partial.csv",
        ],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("partial.csv")).unwrap();
    assert!(text.starts_with("# partial: ill-conditioned after n = "));
    let rows = sigma2_column(&text);
    assert!(!rows.is_empty() && rows.len() < 40);
}

#[test]
fn predict_examples() {
    let dir = tempfile::tempdir().unwrap();
    let o = specpred(&["predict", "const(0.159154943)", "--n", "8"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = sigma2_column(&stdout(&o));
    assert_eq!(s.len(), 8);
    // the constant is 1/(2π) to nine digits
    assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-8), "{s:?}");

    let o = specpred(&["predict", "ma1(theta=0.5)", "--n", "1"], dir.path());
    let s = sigma2_column(&stdout(&o));
    assert_eq!(s.len(), 1);
    assert!((s[0] - 1.05).abs() < 1e-15);

    let o = specpred(
        &["predict", "pollaczek(a=1)", "--n", "256", "--format", "csv"],
        dir.path(),
    );
    let s = sigma2_column(&stdout(&o));
    assert_eq!(s.len(), 256);
    assert!(s.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn json_round_trip_is_bit_exact_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.json", "b.json"] {
        let o = specpred(
            &[
                "predict",
                "abs_sin(center=0,alpha=2) * pollaczek(a=1)",
                "--n",
                "24",
                "--precision",
                "256",
                "--format",
                "json",
                "--out",
                name,
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0));
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);

    let s = read_series(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(s.precision_bits(), 256);
    assert_eq!(s.len(), 24);
    assert_eq!(specpred::cli::series_to_json(&s).as_bytes(), &a[..]);
}

#[test]
fn config_file_sits_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "# defaults\nn = 5\nformat = json\n",
    )
    .unwrap();
    let o = specpred(&["predict", "const(1)", "--config", "run.cfg"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 5);
    let o = specpred(
        &[
            "predict", "const(1)", "--config", "run.cfg", "--n", "3", "--format", "csv",
        ],
        dir.path(),
    );
    assert_eq!(sigma2_column(&stdout(&o)).len(), 3);
    std::fs::write(dir.path().join("bad.cfg"), "colour = red\n").unwrap();
    let o = specpred(&["predict", "const(1)", "--config", "bad.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn out_dir_override() {
    let dir = tempfile::tempdir().unwrap();
    let target = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_specpred"))
        .args(["predict", "const(1)", "--n", "2", "--out", "s.csv"])
        .current_dir(dir.path())
        .env("SPECPRED_OUT_DIR", target.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.path().join("s.csv").is_file());
    assert!(!dir.path().join("s.csv").exists());
}

#[test]
fn ratio_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = specpred(
        &["ratio", "pollaczek(a=1)", "const(2)", "--n", "32"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("# target = 2\n"));
    let ratios: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("n,"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(ratios.iter().all(|&r| r == 2.0), "{ratios:?}");

    let o = specpred(
        &[
            "ratio",
            "pollaczek(a=1)",
            "abs_poly([0,1], alpha=1)",
            "--n",
            "16",
            "--format",
            "json",
        ],
        dir.path(),
    );
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["target"].as_f64().unwrap() - PI / E).abs() < 1e-12);
}

#[test]
fn table1_layout() {
    let dir = tempfile::tempdir().unwrap();
    let o = specpred(&["table1", "--a", "1,2"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][..2], ["1.0", "0.159"]);
    assert_eq!(rows[1][..2], ["2.0", "0.250"]);
    assert!(rows
        .iter()
        .all(|r| r.len() == 4 && r[2].split('.').nth(1).unwrap().len() == 3));

    let o = specpred(&["table1", "--a", "1", "--format", "json"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["a"], 1.0);
}

fn plot_points(path: &Path) -> Vec<(f64, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split_whitespace().map(|t| t.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect()
}

#[test]
fn plotdata_grid_of_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = specpred(&["plotdata", "const(1)", "--grid", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let pts = plot_points(&dir.path().join("density_0.txt"));
    assert_eq!(pts, vec![(-PI, 1.0), (PI, 1.0)]);
    let o = specpred(&["plotdata", "const(1)", "--grid", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn separation_and_series_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let o = specpred(
        &[
            "predict",
            "pollaczek(a=1)",
            "--n",
            "64",
            "--format",
            "json",
            "--out",
            "p.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let o = specpred(&["weakvar", "p.json", "--window", "16"], dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let o = specpred(&["fit", "p.json", "--window", "16:64"], dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let o = specpred(
        &["separation", "pollaczek(a=1)", "hat1(a=1)", "--n", "32"],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
