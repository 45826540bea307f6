mod common;

use std::fs;

use common::*;
use diffmatch::att::{estimate_att, estimate_att_crossfit};
use diffmatch::data::split_three_way;
use diffmatch::ite::{predict_ite, IteModel};
use diffmatch::simulate::{generate, DgpConfig};

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn noiseless_fixture_gives_zero_effect() {
    let data = fixture("noiseless_null.csv");
    for extra in [&[][..], &["--crossfit"][..]] {
        let v = run_json(&dgp_args("estimate", path_str(&data), extra));
        assert!(v["theta_hat"].as_f64().unwrap().abs() <= 1e-8, "{v}");
        assert_eq!(v["n"], 60);
        assert_eq!(
            v["n_treated"].as_u64().unwrap() + v["n_control"].as_u64().unwrap(),
            60
        );
        assert!(
            schema_errors("estimate", &v).is_empty(),
            "{:?}",
            schema_errors("estimate", &v)
        );
        assert_eq!(v["manifest"]["input_digest"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn estimate_is_deterministic() {
    let data = fixture("noiseless_null.csv");
    let args = dgp_args("estimate", path_str(&data), &["--seed", "42", "--crossfit"]);
    assert_eq!(
        without_duration(run_json(&args)),
        without_duration(run_json(&args))
    );
}

#[test]
fn tiny_bootstrap_on_fixture() {
    let data = fixture("noiseless_null.csv");
    let v = run_json(&dgp_args(
        "bootstrap",
        path_str(&data),
        &["--b", "2", "--level", "0.9"],
    ));
    assert!(v["sigma2_hat"].as_f64().unwrap().is_finite());
    assert_eq!(v["b"], 2);
    assert!(
        schema_errors("bootstrap", &v).is_empty(),
        "{:?}",
        schema_errors("bootstrap", &v)
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("noiseless_null.csv");
    let d = path_str(&data);

    let out = run(&[
        "estimate", "--data", d, "--y", "y", "--q", "score", "--x", "x1", "--z", "x4", "--tau", "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("score"), "{msg}");
    assert_eq!(msg.trim().lines().count(), 1);
    assert!(out.stdout.is_empty());

    let missing = dir.path().join("absent.csv");
    let out = run(&dgp_args("estimate", path_str(&missing), &[]));
    assert_eq!(out.status.code(), Some(2));

    let out = run(&[
        "estimate", "--data", d, "--y", "y", "--q", "q", "--x", "x1", "--z", "x1,x1", "--tau", "0",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank deficient"));

    let text = fs::read_to_string(&data).unwrap();
    let small = dir.path().join("small.csv");
    fs::write(
        &small,
        text.lines().take(13).collect::<Vec<_>>().join("\n") + "\n",
    )
    .unwrap();
    let args = [
        "bootstrap",
        "--data",
        path_str(&small),
        "--y",
        "y",
        "--q",
        "q",
        "--x",
        "x1",
        "--z",
        "x4",
        "--tau",
        "0",
    ];
    let out = run(&[&args[..], &["--b", "50", "--seed", "1"]].concat());
    assert_eq!(out.status.code(), Some(4));
    let out = run(&[&args[..], &["--b", "50", "--level", "1.5"]].concat());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_smallest_legal_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let v = run_json(&[
        "simulate",
        "--mode",
        "gen",
        "--n",
        "9",
        "--seed",
        "3",
        "--out",
        path_str(&out),
    ]);
    assert!(
        schema_errors("simulate", &v).is_empty(),
        "{:?}",
        schema_errors("simulate", &v)
    );
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "y,x1,x2,x3,x4,q");
    assert_eq!(lines.len(), 10);
    assert_eq!(
        run(&["simulate", "--mode", "gen", "--n", "8"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn gen_then_estimate_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let (n, seed) = (3000usize, 17u64);
    run_json(&[
        "simulate",
        "--mode",
        "gen",
        "--n",
        "3000",
        "--seed",
        "17",
        "--out",
        path_str(&out),
    ]);
    let obs = generate(&DgpConfig::new(n, seed)).unwrap();

    let v = run_json(&dgp_args("estimate", path_str(&out), &["--seed", "17"]));
    let direct = estimate_att(&obs, &split_three_way(n, seed, true).unwrap()).unwrap();
    assert_eq!(
        v["theta_hat"].as_f64().unwrap().to_bits(),
        direct.theta_hat.to_bits()
    );
    let beta: Vec<f64> = serde_json::from_value(v["beta_hat"].clone()).unwrap();
    assert_eq!(beta, direct.beta.beta_hat);

    let v = run_json(&dgp_args(
        "estimate",
        path_str(&out),
        &["--seed", "17", "--crossfit"],
    ));
    let cf = estimate_att_crossfit(&obs, seed).unwrap();
    assert_eq!(
        v["theta_hat"].as_f64().unwrap().to_bits(),
        cf.theta_cf.to_bits()
    );
}

#[test]
fn crossfit_estimate_on_generated_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    run_json(&[
        "simulate",
        "--mode",
        "gen",
        "--n",
        "12000",
        "--seed",
        "5",
        "--out",
        path_str(&out),
    ]);
    let v = run_json(&dgp_args(
        "estimate",
        path_str(&out),
        &["--crossfit", "--seed", "5"],
    ));
    let theta = v["theta_hat"].as_f64().unwrap();
    assert!((theta - 4.0 / 3.0).abs() <= 0.7, "{theta}");
    assert_eq!(v["rotations"].as_array().unwrap().len(), 3);
}

#[test]
fn ite_model_and_predictions_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("g.csv");
    run_json(&[
        "simulate",
        "--mode",
        "gen",
        "--n",
        "6000",
        "--seed",
        "8",
        "--out",
        path_str(&data),
    ]);
    let grid = dir.path().join("grid.csv");
    fs::write(
        &grid,
        "x1,x2,x3,eta\n0.1,0.2,0.8,-0.5\n0.1,-0.2,0.8,0\n0.5,0.5,-0.5,0.9\n",
    )
    .unwrap();
    let model_path = dir.path().join("model.txt");
    let preds = dir.path().join("pred.csv");
    let v = run_json(&dgp_args(
        "ite",
        path_str(&data),
        &[
            "--df-grid",
            "3,5",
            "--include-eta",
            "true",
            "--model-out",
            path_str(&model_path),
            "--predict-grid",
            path_str(&grid),
            "--predict-out",
            path_str(&preds),
        ],
    ));
    assert!(
        schema_errors("ite", &v).is_empty(),
        "{:?}",
        schema_errors("ite", &v)
    );
    assert!([3, 5].contains(&v["chosen_df"].as_u64().unwrap()));
    assert_eq!(v["cv_mse"].as_array().unwrap().len(), 2);

    let model = IteModel::from_text(&fs::read_to_string(&model_path).unwrap()).unwrap();
    let text = fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,x3,eta,alpha_hat"));
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let p = predict_ite(&model, &f[..3], Some(f[3])).unwrap();
        assert_eq!(p.to_bits(), f[4].to_bits());
    }

    let inline = run_json(&dgp_args(
        "ite",
        path_str(&data),
        &[
            "--df-grid",
            "3,5",
            "--model-out",
            path_str(&model_path),
            "--predict-grid",
            path_str(&grid),
        ],
    ));
    assert_eq!(inline["predictions"].as_array().unwrap().len(), 3);

    let bad_grid = dir.path().join("bad.csv");
    fs::write(&bad_grid, "x1,x2,x3\n0,0,0\n").unwrap();
    let out = run(&dgp_args(
        "ite",
        path_str(&data),
        &[
            "--model-out",
            path_str(&model_path),
            "--predict-grid",
            path_str(&bad_grid),
        ],
    ));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mc_att_report_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("h.csv");
    let v = run_json(&[
        "simulate",
        "--mode",
        "mc-att",
        "--n",
        "900",
        "--reps",
        "40",
        "--seed",
        "2",
        "--out",
        path_str(&hist),
    ]);
    assert!(
        schema_errors("simulate", &v).is_empty(),
        "{:?}",
        schema_errors("simulate", &v)
    );
    assert_eq!(v["zetas"].as_array().unwrap().len(), 40);
    let text = fs::read_to_string(&hist).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bin_left,bin_right,count"));
    let total: u64 = lines
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 40);
    assert_eq!(
        run(&["simulate", "--mode", "mc-att", "--n", "900", "--reps", "10"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn mc_ite_report() {
    let v = run_json(&[
        "simulate", "--mode", "mc-ite", "--n", "3000", "--reps", "3", "--seed", "4", "--kind",
        "x-only",
    ]);
    assert!(
        schema_errors("simulate", &v).is_empty(),
        "{:?}",
        schema_errors("simulate", &v)
    );
    assert_eq!(v["mse"].as_array().unwrap().len(), 3);
    assert_eq!(v["include_eta"], false);
}
