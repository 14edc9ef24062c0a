//! End-to-end checks of the binary: reproducibility, exit codes, and output
//! formats.

use std::process::Command;

fn depclt(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_depclt"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn simulate_is_byte_reproducible() {
    let args = [
        "simulate",
        "--model",
        "window",
        "--m",
        "1",
        "--noise",
        "rademacher",
        "--sizes",
        "16,32,64",
        "--reps",
        "400",
        "--p",
        "1",
        "--seed",
        "5",
    ];
    let a = depclt(&args);
    let b = depclt(&args);
    assert!(a.status.success());
    assert_eq!(
        a.stdout, b.stdout,
        "same config+seed must reproduce byte-for-byte"
    );
    let mut changed = args.to_vec();
    let last = changed.len() - 1;
    changed[last] = "6";
    let c = depclt(&changed);
    assert_ne!(a.stdout, c.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("# depclt v1\nsize,p,wp,floor,se\n"));
    assert!(text.lines().last().unwrap().starts_with("# slope="));
}

#[test]
fn config_errors_exit_2() {
    let out = depclt(&["simulate", "--model", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
    let out = depclt(&["simulate", "--sizes", "64,32,16"]);
    assert_eq!(out.status.code(), Some(2));
    let out = depclt(&["simulate", "--sizes", "16,32,64", "--reps", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn degeneracy_exits_4() {
    let out = depclt(&[
        "simulate", "--model", "window", "--kernel", "zero", "--sizes", "16,32,64", "--reps", "400",
    ]);
    assert_eq!(out.status.code(), Some(4));
    let out = depclt(&[
        "simulate", "--model", "ustat", "--kernel", "product", "--sizes", "16,32,64", "--reps",
        "400",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn verify_suite_runs_green() {
    let out = depclt(&["verify", "--suite", "step1"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("step1"));
    assert!(text.lines().skip(2).all(|l| l.ends_with("true")));
    // unknown selector is a config error
    let out = depclt(&["verify", "--suite", "no-such-item"]);
    assert_eq!(out.status.code(), Some(2));
    // an impossible tolerance turns the suite red: exit code 3
    let out = depclt(&["verify", "--suite", "step1", "--tol", "1e-30"]);
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().skip(2).any(|l| l.ends_with("false")));
}

#[test]
fn genogram_round_trip_and_counts() {
    let text = "p=[.,1,1,1,4,5,5]; s=[0,2,1,0,-1,2,0]";
    let out = depclt(&["genogram", "inspect", text]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["text"], text);
    assert_eq!(json["valid"], true);
    assert_eq!(json["negatives"], 1);

    let out = depclt(&["genogram", "enumerate", "--order", "4", "--id-cap", "4"]);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["tree_shapes"], 5); // Catalan C_3
    assert_eq!(json["p0"], 4); // 2^{k-2}

    let out = depclt(&[
        "genogram",
        "coeff",
        "--g",
        "p=[.]; s=[0]",
        "--h",
        "p=[.,1]; s=[0,0]",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("b=-1/1"), "{text}");
}

#[test]
fn rate_table_row() {
    let out = depclt(&["rate", "--u", "1.5", "--d", "1", "--p", "1", "--integer-p"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("1.0000000000000001e-1"), "{text}");
    assert!(text.contains("dp < u < d(p+1)"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = std::env::temp_dir().join(format!("depclt-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"model":"window","m":1,"noise":"rademacher","sizes":[16,32,64],"reps":400,"p":1.0,"seed":9}"#,
    )
    .unwrap();
    let from_file = depclt(&["--config", cfg.to_str().unwrap(), "simulate"]);
    assert!(
        from_file.status.success(),
        "{}",
        String::from_utf8_lossy(&from_file.stderr)
    );
    let from_flags = depclt(&[
        "simulate",
        "--model",
        "window",
        "--m",
        "1",
        "--noise",
        "rademacher",
        "--sizes",
        "16,32,64",
        "--reps",
        "400",
        "--p",
        "1",
        "--seed",
        "9",
    ]);
    assert_eq!(from_file.stdout, from_flags.stdout);
    // a flag overrides the file
    let overridden = depclt(&[
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "10",
        "simulate",
    ]);
    assert_ne!(from_file.stdout, overridden.stdout);
    // --out writes the same bytes to a file
    let out_path = dir.join("rows.csv");
    let to_file = depclt(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "simulate",
    ]);
    assert!(to_file.status.success());
    assert_eq!(std::fs::read(&out_path).unwrap(), from_file.stdout);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn tail_without_model_uses_given_k() {
    let out = depclt(&[
        "tail", "--size", "100", "--p", "2", "--k", "1", "--t-grid", "1.0,2.0",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# K_p=1.0000000000000000e0"));
    assert_eq!(text.lines().count(), 3 + 2);
}
