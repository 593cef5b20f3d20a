//! End-to-end runs of the installed binary: flag plumbing, output formats,
//! determinism, and the exit-code contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mdqda::la::DataMatrix;
use mdqda::qda::{fit, Variant};
use nalgebra::DMatrix;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdqda"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

fn stderr_str(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 output")
}

/// Two interleaved Gaussian-ish clouds, far apart, written as observation
/// rows. Deterministic: a tiny hand-rolled congruential stream is plenty for
/// fixture data.
fn write_toy_pair(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let mut state = 0x2545f4914f6cdd1du64;
    let mut unit = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        // 53-bit mantissa, shifted to (-1, 1)
        ((state >> 11) as f64 / (1u64 << 52) as f64) - 1.0
    };
    let p1 = dir.join("class1.csv");
    let p2 = dir.join("class2.csv");
    let mut c1 = String::from("x,y\n");
    let mut c2 = String::new();
    for _ in 0..50 {
        c1.push_str(&format!("{:.6},{:.6}\n", unit(), 0.5 * unit()));
        c2.push_str(&format!("{:.6},{:.6}\n", 6.0 + unit(), 6.0 + 2.0 * unit()));
    }
    fs::write(&p1, c1).unwrap();
    fs::write(&p2, c2).unwrap();
    (p1, p2)
}

#[test]
fn simulate_repeats_byte_identically_and_reports_each_rule() {
    let args = [
        "simulate",
        "--case",
        "1",
        "--n",
        "60",
        "--p",
        "12",
        "--reps",
        "8",
        "--rules",
        "sample,generalized,optimal,subgroup,componentwise,split-weighted,split-majority",
        "--p0",
        "4",
        "--H",
        "2",
        "--seed",
        "7",
    ];
    let first = run(&args);
    assert!(first.status.success(), "{}", stderr_str(&first));
    let second = run(&args);
    assert_eq!(first.stdout, second.stdout);

    let text = stdout_str(&first);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "case,rule,p,n1,n2,reps,seed,p_2given1,p_1given2,rate,std_err"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 7, "one row per requested rule");
    assert!(rows.iter().any(|r| r.contains(",subgroup(4),")));
    assert!(rows.iter().any(|r| r.contains(",split_weighted(2),")));
}

#[test]
fn simulate_output_does_not_depend_on_the_thread_count() {
    let base = [
        "simulate",
        "--case",
        "3",
        "--n",
        "40",
        "--p",
        "8",
        "--reps",
        "6",
        "--mean-mode",
        "uniform",
        "--seed",
        "11",
    ];
    let one = run(&[&base[..], &["--threads", "1"]].concat());
    let four = run(&[&base[..], &["--threads", "4"]].concat());
    assert!(one.status.success(), "{}", stderr_str(&one));
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn simulate_resolves_p_from_the_ratio_and_auto_p0() {
    // p = floor(0.3 * 50) = 15, p0 = 3 * floor(sqrt(15)) = 9
    let out = run(&[
        "simulate",
        "--case",
        "5",
        "--n",
        "50",
        "--ratio",
        "0.3",
        "--reps",
        "4",
        "--rules",
        "generalized,subgroup,componentwise",
    ]);
    assert!(out.status.success(), "{}", stderr_str(&out));
    let text = stdout_str(&out);
    assert!(text.contains("case5,generalized,15,50,50,4,42,"));
    assert!(text.contains(",subgroup(9),"));
    assert!(text.contains(",componentwise(9),"));
}

#[test]
fn simulate_rejects_unknown_rules_and_bad_ratios() {
    let out = run(&[
        "simulate",
        "--case",
        "1",
        "--n",
        "60",
        "--rules",
        "optimal,telepathy",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("telepathy"));

    let out = run(&["simulate", "--case", "1", "--n", "60", "--ratio", "1.5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["simulate", "--case", "9", "--n", "60"]);
    assert_eq!(out.status.code(), Some(2), "case range is validated");
}

#[test]
fn theory_reports_the_scale_free_first_moment_and_regime() {
    let out = run(&["theory", "--case", "1", "--n", "1000", "--ratio", "0.5"]);
    assert!(out.status.success(), "{}", stderr_str(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert!((report["moments"]["m1"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(report["regime"], "easy_separable");
    assert_eq!(report["inputs"]["p"], 500);
    // splitting 5 ways at c = 0.5 pushes a group's ratio past 1
    assert_eq!(report["spreads"]["split_samples"]["feasible"], false);
    assert!(report["rate_limits"]["split_samples"].is_null());
    let gen = report["rate_limits"]["generalized"]["rate"]
        .as_f64()
        .unwrap();
    let opt = report["rate_limits"]["optimal"]["rate"].as_f64().unwrap();
    assert!(gen > opt && opt > 0.0);
}

#[test]
fn theory_classifies_the_block_scenario_as_hard() {
    let out = run(&[
        "theory", "--case", "5", "--p", "400", "--n", "1000", "--H", "2",
    ]);
    assert!(out.status.success(), "{}", stderr_str(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(report["regime"], "hard");
    // 3 * floor(sqrt(400)) inflated eigenvalues, counted on the sqrt(p) scale
    assert_eq!(report["separation"]["s_eps"], 60);
    assert!((report["separation"]["zeta_eps"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert_eq!(report["spreads"]["split_samples"]["feasible"], true);
    assert!(report["rate_limits"]["split_samples"]["rate"]
        .as_f64()
        .is_some());
}

#[test]
fn theory_handles_identical_custom_populations() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = dir.path().join("sigma.csv");
    fs::write(&sigma, "2,0.5,0\n0.5,1,0\n0,0,1\n").unwrap();
    let out = run(&[
        "theory",
        "--sigma1",
        sigma.to_str().unwrap(),
        "--sigma2",
        sigma.to_str().unwrap(),
        "--n",
        "100",
    ]);
    assert!(out.status.success(), "{}", stderr_str(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(report["regime"], "easy_degenerate");
    assert_eq!(report["inputs"]["scenario"], "custom");
    for rule in ["optimal", "generalized"] {
        let rate = report["rate_limits"][rule]["rate"].as_f64().unwrap();
        assert!((rate - 0.5).abs() < 1e-12, "{rule} limit {rate}");
    }
    assert_eq!(report["rate_limits"]["optimal"]["degenerate"], true);
}

#[test]
fn theory_requires_a_scenario_or_a_complete_custom_pair() {
    let out = run(&["theory", "--n", "100"]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let sigma = dir.path().join("sigma.csv");
    fs::write(&sigma, "1,0\n0,1\n").unwrap();
    let out = run(&["theory", "--sigma1", sigma.to_str().unwrap(), "--n", "100"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("--sigma2"));
}

#[test]
fn fit_predict_round_trip_matches_the_library_bitwise_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let (c1, c2) = write_toy_pair(dir.path());
    let model_path = dir.path().join("model.json");

    let out = run(&[
        "fit",
        c1.to_str().unwrap(),
        c2.to_str().unwrap(),
        "--out",
        model_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_str(&out));

    let out = run(&[
        "predict",
        model_path.to_str().unwrap(),
        c1.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_str(&out));
    let text = stdout_str(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "row_index,label,score");

    // the same fit done in memory must agree with the saved/reloaded scores
    let rows = |path: &Path| {
        let body = fs::read_to_string(path).unwrap();
        let data: Vec<Vec<f64>> = body
            .lines()
            .filter(|l| {
                l.chars()
                    .next()
                    .is_some_and(|c| c.is_ascii_digit() || c == '-')
            })
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        let p = data[0].len();
        DataMatrix::new(DMatrix::from_fn(p, data.len(), |i, j| data[j][i])).unwrap()
    };
    let train1 = rows(&c1);
    let train2 = rows(&c2);
    let model = fit(&train1, &train2, Variant::Generalized).unwrap();

    let mut misclassified = 0usize;
    for (j, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0].parse::<usize>().unwrap(), j);
        let label: u32 = fields[1].parse().unwrap();
        let score: f64 = fields[2].parse().unwrap();
        let expected = model.discriminant(&train1.column(j)).unwrap();
        assert!(
            (score - expected).abs() <= 1e-12 * expected.abs().max(1.0),
            "row {j}: {score} vs {expected}"
        );
        if label != 1 {
            misclassified += 1;
        }
    }
    // well-separated clouds: far below the 0.2 sanity bar
    assert!((misclassified as f64) < 0.2 * train1.count() as f64);
}

#[test]
fn predict_validates_the_model_and_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let (c1, c2) = write_toy_pair(dir.path());
    let model_path = dir.path().join("model.json");
    let out = run(&[
        "fit",
        c1.to_str().unwrap(),
        c2.to_str().unwrap(),
        "--out",
        model_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    // wrong width
    let narrow = dir.path().join("narrow.csv");
    fs::write(&narrow, "x\n1.0\n2.0\n").unwrap();
    let out = run(&[
        "predict",
        model_path.to_str().unwrap(),
        narrow.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // corrupted model document
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\"format_version\": 999}").unwrap();
    let out = run(&["predict", broken.to_str().unwrap(), c1.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // malformed data CSV names the line
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x,y\n1.0,2.0\n3.0,oops\n").unwrap();
    let out = run(&[
        "predict",
        model_path.to_str().unwrap(),
        bad.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("line 3"));
}

#[test]
fn degenerate_training_data_exits_with_the_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let (_, c2) = write_toy_pair(dir.path());
    let flat = dir.path().join("flat.csv");
    let mut body = String::new();
    for i in 0..50 {
        // second coordinate constant: the class covariance is singular
        body.push_str(&format!("{}.0,7.0\n", i % 5));
    }
    fs::write(&flat, body).unwrap();
    let out = run(&["fit", flat.to_str().unwrap(), c2.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_str(&out));
}

#[test]
fn oracle_reports_match_their_closed_form_targets() {
    let out = run(&["oracle", "rmt", "--p", "40", "--n", "80", "--reps", "20"]);
    assert!(out.status.success(), "{}", stderr_str(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(report["target"], 4.0);
    assert!(report["estimate"].as_f64().unwrap() > 0.0);
    assert!(report["relative_error"].as_f64().unwrap() < 0.5);

    let out = run(&[
        "oracle", "clt", "--p", "50", "--n", "250", "--reps", "400", "--noise", "normal",
    ]);
    assert!(out.status.success(), "{}", stderr_str(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(report["target_variance"], 3.90625);
    assert!(report["relative_error"].as_f64().unwrap() < 0.3);

    let out = run(&["oracle", "palmistry"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn outputs_land_in_the_requested_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rates.csv");
    let args = [
        "simulate",
        "--case",
        "2",
        "--n",
        "30",
        "--p",
        "6",
        "--reps",
        "3",
        "--rules",
        "generalized",
        "--out",
        path.to_str().unwrap(),
    ];
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr_str(&out));
    assert!(stdout_str(&out).is_empty());
    let written = fs::read_to_string(&path).unwrap();

    let piped = run(&args[..args.len() - 2]);
    assert_eq!(written, stdout_str(&piped));
}
