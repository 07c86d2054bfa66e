use std::path::Path;
use std::process::{Command, Output};

use monattn::attn::EnergyParams;
use monattn::checkpoint::ModelCheckpoint;

fn monattn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monattn"))
        .args(args)
        .env("MONATTN_LOG", "quiet")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small, quick training run.
fn train(dir: &Path, name: &str, extra: &[&str]) -> Output {
    let out = dir.join(name);
    let mut args = vec![
        "train",
        "--seed",
        "7",
        "--steps",
        "30",
        "--d-model",
        "12",
        "--batch-size",
        "4",
        "--eval-interval",
        "15",
        "--eval-examples",
        "10",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    monattn(&args)
}

#[test]
fn train_without_out_is_usage_error() {
    let out = monattn(&["train", "--steps", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--out"));
}

#[test]
fn bad_flag_is_usage_error() {
    assert_eq!(code(&monattn(&["train", "--no-such-flag"])), 2);
    assert_eq!(code(&monattn(&["train", "--out", "x.json", "--lr", "-1"])), 2);
    assert_eq!(code(&monattn(&["frobnicate"])), 2);
}

#[test]
fn train_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = train(dir.path(), "a.json", &[]);
    let b = train(dir.path(), "b.json", &[]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0);
    let ma = std::fs::read(dir.path().join("a.metrics.csv")).unwrap();
    let mb = std::fs::read(dir.path().join("b.metrics.csv")).unwrap();
    assert_eq!(ma, mb);
    assert!(String::from_utf8(ma)
        .unwrap()
        .starts_with("step,loss,token_acc_soft,token_acc_hard,seq_acc,agreement\n15,"));
    assert_eq!(
        std::fs::read(dir.path().join("a.json")).unwrap(),
        std::fs::read(dir.path().join("b.json")).unwrap()
    );
    assert!(stdout(&a).contains("token_acc_soft"));
}

#[test]
fn train_echoes_resolved_config_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "c.json", &[]);
    let err = stderr(&out);
    assert!(err.starts_with("# resolved configuration\n"));
    assert!(err.contains("seed = 7\n"));
    assert!(err.contains("steps = 30\n"));
    assert!(err.contains("energy = modified\n"));
}

#[test]
fn energy_flag_selects_dot_product() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "dot.json", &["--energy", "dot"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ck = ModelCheckpoint::load(&dir.path().join("dot.json")).unwrap();
    assert!(matches!(ck.params.attn, EnergyParams::Dot(_)));
    assert_eq!(code(&train(dir.path(), "x.json", &["--energy", "cosine"])), 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# toy run\nsteps = 20\nlr = 0.002\nd-model = 10\n").unwrap();
    let out = train(dir.path(), "f.json", &["--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("steps = 30\n"), "flag wins: {err}");
    assert!(err.contains("lr = 0.002\n"), "file value used: {err}");

    std::fs::write(&cfg, "stpes = 20\n").unwrap();
    let out = train(dir.path(), "g.json", &["--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("stpes"));

    std::fs::write(&cfg, "just some words\n").unwrap();
    assert_eq!(code(&train(dir.path(), "h.json", &["--config", cfg.to_str().unwrap()])), 2);
}

fn saturated_checkpoint(dir: &Path, r: f64) -> String {
    let out = train(dir, "base.json", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut ck = ModelCheckpoint::load(&dir.join("base.json")).unwrap();
    match &mut ck.params.attn {
        EnergyParams::Modified(p) => {
            p.r = r;
            p.g = 0.0;
        }
        EnergyParams::Dot(_) => unreachable!(),
    }
    let path = dir.join(format!("saturated{r}.json"));
    ck.save(&path).unwrap();
    path.to_str().unwrap().to_string()
}

fn output_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| l.starts_with("output:")).collect()
}

#[test]
fn hard_and_soft_decode_agree_on_saturated_model() {
    let dir = tempfile::tempdir().unwrap();
    for r in [60.0, -60.0] {
        let ck = saturated_checkpoint(dir.path(), r);
        let hard = monattn(&["decode", "--checkpoint", &ck, "--mode", "hard", "--examples", "8"]);
        let soft = monattn(&["decode", "--checkpoint", &ck, "--mode", "soft", "--examples", "8"]);
        assert_eq!(code(&hard), 0, "{}", stderr(&hard));
        assert_eq!(code(&soft), 0);
        let (h, s) = (stdout(&hard), stdout(&soft));
        assert_eq!(output_lines(&h).len(), 8);
        assert_eq!(output_lines(&h), output_lines(&s));
    }
}

#[test]
fn dumped_alpha_rows_are_substochastic() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "m.json", &[]);
    assert_eq!(code(&out), 0);
    let ck = dir.path().join("m.json");
    let out = monattn(&["decode", "--checkpoint", ck.to_str().unwrap(), "--mode", "soft", "--examples", "5", "--dump-alpha"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let mut rows = 0;
    let mut in_alpha = false;
    for line in text.lines() {
        if line == "alpha:" {
            in_alpha = true;
            continue;
        }
        if line.contains(':') {
            in_alpha = false;
            continue;
        }
        if in_alpha {
            let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            assert!(vals.iter().all(|&v| v >= 0.0));
            assert!(vals.iter().sum::<f64>() <= 1.0 + 1e-9, "{line}");
            rows += 1;
        }
    }
    assert!(rows > 5);

    let out = monattn(&["decode", "--checkpoint", ck.to_str().unwrap(), "--input", "1 2 3", "--dump-alpha"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let path = text.lines().find(|l| l.starts_with("path:")).expect("hard mode prints a path");
    let mut last = 0;
    for j in path["path:".len()..].split_whitespace() {
        if let Ok(j) = j.parse::<usize>() {
            assert!((1..=3).contains(&j) && j >= last);
            last = j;
        }
    }
}

#[test]
fn decode_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "ok.json", &[]);
    assert_eq!(code(&out), 0);
    let ck = dir.path().join("ok.json");
    let good = std::fs::read_to_string(&ck).unwrap();

    let out = monattn(&["decode", "--checkpoint", ck.to_str().unwrap(), "--mode", "greedy"]);
    assert_eq!(code(&out), 2);

    let truncated = dir.path().join("truncated.json");
    std::fs::write(&truncated, &good[..good.len() / 2]).unwrap();
    let out = monattn(&["decode", "--checkpoint", truncated.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("checkpoint"));

    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, good.replacen("\"step\": 30", "\"step\": 31", 1)).unwrap();
    let out = monattn(&["decode", "--checkpoint", tampered.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("checksum"), "{}", stderr(&out));

    let out = monattn(&["decode", "--checkpoint", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn simulate_exit_codes() {
    let out = monattn(&["simulate", "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("max |recurrence - exact|"));
    assert!(stdout(&out).contains("max |scan - exact|"));
    assert_eq!(code(&monattn(&["simulate", "--tol", "0"])), 1);
    assert_eq!(code(&monattn(&["simulate", "--t", "9"])), 2);
    assert_eq!(code(&monattn(&["simulate", "--u", "7"])), 2);
}

#[test]
fn simulate_reports_rescanning_gap() {
    let out = monattn(&[
        "simulate", "--semantics", "rescanning", "--report-gap", "--instances", "3", "--samples", "20000",
    ]);
    assert_eq!(code(&out), 0);
    let line = stdout(&out)
        .lines()
        .find(|l| l.starts_with("max |monte_carlo(rescanning"))
        .map(str::to_string)
        .expect("gap line");
    let gap: f64 = line.split(" = ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
    // Rescanning keeps mass that absorbing semantics throws away.
    assert!(gap > 0.02, "{line}");
}

fn worst_rel(text: &str, op: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(op)).expect("op row");
    line.split_whitespace().nth(2).unwrap().parse().unwrap()
}

#[test]
fn checkgrad_single_op_and_coarse_step() {
    let out = monattn(&["checkgrad", "--op", "monotonic_alpha"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    assert!(!text.contains("softmax"));
    let fine = worst_rel(&text, "monotonic_alpha");

    assert!(fine < 1e-5);

    // The alpha recurrence is linear in each input separately, so central
    // differences are exact there at any step; the sigmoid is not.
    let fine = worst_rel(&stdout(&monattn(&["checkgrad", "--op", "sigmoid"])), "sigmoid");
    let out = monattn(&["checkgrad", "--op", "sigmoid", "--h", "1e-2"]);
    let coarse = worst_rel(&stdout(&out), "sigmoid");
    assert!(coarse > fine, "{coarse} vs {fine}");
    assert!(code(&out) == 0 || code(&out) == 1);

    assert_eq!(code(&monattn(&["checkgrad", "--op", "no_such_op"])), 2);
}

#[test]
fn checkgrad_full_suite_passes() {
    let out = monattn(&["checkgrad"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert_eq!(stdout(&out).lines().filter(|l| l.ends_with("pass")).count(), 13);
}

fn csv_body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn bench_default_grid_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    let out = monattn(&["bench", "--d", "4", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&path).unwrap();
    let body = csv_body(&text);
    assert_eq!(body[0], "T,U,softmax_s,hard_s,speedup,hard_energy_evals");
    assert_eq!(body.len(), 21);
    for row in &body[1..] {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 6);
        let (t, u, evals): (usize, usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap(), f[5].parse().unwrap());
        assert!(evals <= t + u);
    }

    let summary = stdout(&out);
    let num = |key: &str| -> f64 {
        let rest = &summary[summary.find(key).unwrap() + key.len()..];
        rest.split('x').next().unwrap().trim().parse().unwrap()
    };
    assert!(num("x max ") >= num("speedup min "), "{summary}");
}

#[test]
fn bench_schema_is_independent_of_trials_and_appends() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    let p = path.to_str().unwrap();
    for trials in ["10", "30"] {
        let out = monattn(&["bench", "--d", "4", "--t-values", "5,10", "--u-values", "4", "--trials", trials, "--out", p]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let text = std::fs::read_to_string(&path).unwrap();
    let body = csv_body(&text);
    assert_eq!(body.len(), 6);
    assert_eq!(body[0], body[3]);
    assert!(text.contains("trials=10") && text.contains("trials=30"));

    assert_eq!(code(&monattn(&["bench", "--trials", "3", "--out", p])), 2);
    assert_eq!(code(&monattn(&["bench", "--t-values", "5,x", "--out", p])), 2);
    let out = monattn(&["bench", "--d", "4", "--t-values", "5", "--u-values", "4", "--out", "/nonexistent/dir/b.csv"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn bench_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.json");
    let out = monattn(&["bench", "--json", "--d", "4", "--t-values", "6", "--u-values", "3,5", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.matches("\"median_speedup\"").count(), 2);
}
