use std::path::Path;
use std::process::{Command, Output};

fn cgrem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgrem"))
        .args(args)
        .env_remove("CGREM_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn odd_p_check_exits_one_with_witness() {
    let o = cgrem(&["check", "--model", "pspin:3", "--n", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.starts_with("# cgrem "));
    assert!(text.contains("n,partition_mask,n1,max_gap,witness_sigma,witness_tau,verdict"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r[6], "VIOLATED");
        assert!((r[3].parse::<f64>().unwrap() - 8.0 / 27.0).abs() < 1e-12);
    }
}

#[test]
fn even_p_check_exits_zero() {
    let o = cgrem(&["check", "--model", "sk", "--n", "2", "--n-max", "6", "--mode", "all"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("VIOLATED"));
}

#[test]
fn size_range_from_one_skips_the_unsplittable_size() {
    let o = cgrem(&["check", "--model", "pspin:4", "--n", "1", "--n-max", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = data_rows(&stdout(&o));
    // canonical splits: 1 + 2 + 3
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[0] != "1"));

    let o = cgrem(&["check", "--model", "sk", "--n", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn alpha_at_zero_beta_is_exact() {
    let o = cgrem(&["alpha", "--model", "rem", "--n", "6", "--beta", "0", "--samples", "10"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = data_rows(&stdout(&o));
    assert_eq!(rows[0][4].parse::<f64>().unwrap(), std::f64::consts::LN_2);
    assert_eq!(rows[0][5], "0.0");
    assert_eq!(rows[0][3], "10");
}

#[test]
fn interp_scan_rows_and_rerun() {
    let args = [
        "interp", "--model", "sk", "--n", "6", "--n1", "3", "--beta", "1", "--tgrid", "0.1:0.9:9", "--samples",
        "5000", "--seed", "42",
    ];
    let a = cgrem(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(data_rows(&stdout(&a)).len(), 9);
    let b = cgrem(&args);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_comes_from_the_environment() {
    let args = ["alpha", "--model", "sk", "--n", "3", "--beta", "1", "--samples", "50"];
    let with_env = |seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_cgrem"))
            .args(args)
            .env("CGREM_SEED", seed)
            .output()
            .unwrap()
            .stdout
    };
    let flag = cgrem(&[&args[..], &["--seed", "9"]].concat()).stdout;
    assert_eq!(with_env("9"), flag);
    assert_ne!(with_env("10"), flag);
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["check", "--model", "mixed:2=0.5", "--n", "3"],
        vec!["check", "--model", "spherical", "--n", "3"],
        vec!["check", "--model", "sk", "--n", "11"],
        vec!["alpha", "--model", "sk", "--n", "3", "--beta", "-1"],
        vec!["superadd", "--model", "sk", "--n", "4", "--beta", "1"],
        vec!["check", "--model", "grem:/no/such/file", "--n", "3"],
        vec!["frobnicate"],
    ] {
        let o = cgrem(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn grem_tree_files() {
    let dir = tempfile::tempdir().unwrap();
    let tree = write(dir.path(), "tree.txt", "2 2\n1 1\n0.6 0.4\n");
    let spec = format!("grem:{tree}");
    let o = cgrem(&["psd", "--model", &spec]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = cgrem(&["check", "--model", &spec]);
    assert_eq!(o.status.code(), Some(0));

    let big = write(dir.path(), "big.txt", "2 4\n2 2\n0.5 0.5\n");
    let o = cgrem(&["grem-verify", "--tree", &big]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    for check in ["validate_tree", "psd", "lift_block1", "lift_block2", "condition_audit"] {
        assert!(text.contains(check), "{check}");
    }
    let o = cgrem(&["grem-verify", "--tree", &big, "--n1-exponents", "1,1", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), 5);

    let bad = write(dir.path(), "bad.txt", "2 4\n2 1\n0.5 0.5\n");
    assert_eq!(cgrem(&["grem-verify", "--tree", &bad]).status.code(), Some(2));
}

#[test]
fn custom_matrix_needs_block_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let eye = |n: usize| {
        let d = 1 << n;
        let mut s = format!("{d}\n");
        for i in 0..d {
            let row: Vec<&str> = (0..d).map(|j| if i == j { "1" } else { "0" }).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    };
    let m2 = write(dir.path(), "m2.txt", &eye(2));
    let m1 = write(dir.path(), "m1.txt", &eye(1));
    let o = cgrem(&["check", "--model", &format!("custom:{m2}")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing"));
    let o = cgrem(&["check", "--model", &format!("custom:{m2},{m1}")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = cgrem(&["alpha", "--model", &format!("custom:{m2},{m1}"), "--beta", "1", "--samples", "20"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn superadd_and_fd_outputs() {
    let o = cgrem(&["superadd", "--model", "sk", "--n", "4", "--n1", "2", "--beta", "0,1", "--samples", "200"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("margin_std_error"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][7], "0.0");

    let o = cgrem(&[
        "interp", "--model", "sk", "--n", "4", "--n1", "2", "--beta", "1", "--check", "fd", "--h", "0.2", "--samples",
        "200",
    ]);
    let text = stdout(&o);
    assert!(text.contains("step_warning"));
    assert_eq!(data_rows(&text)[0][13], "true");
}

#[test]
fn sample_dump_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dump.txt");
    let o = cgrem(&[
        "sample-dump", "--model", "sk", "--n", "3", "--draws", "4", "--output", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let draws = cgrem::disorder::read_dump(text.as_bytes()).unwrap();
    assert_eq!(draws.len(), 4);
    assert_eq!(draws[0].energies().len(), 8);
}

#[test]
fn toml_config_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.toml",
        "command = \"alpha\"\nmodel = \"sk\"\nn = 4\nbeta = [0.5, 1.0]\nsamples = 100\nseed = 3\n",
    );
    let from_file = cgrem(&["run", &cfg]);
    assert_eq!(from_file.status.code(), Some(0));
    let from_flags = cgrem(&["alpha", "--model", "sk", "--n", "4", "--beta", "0.5,1", "--samples", "100", "--seed", "3"]);
    assert_eq!(data_rows(&stdout(&from_file)), data_rows(&stdout(&from_flags)));
    let bad = write(dir.path(), "bad.toml", "command = \"alpha\"\nmodle = \"sk\"\n");
    assert_eq!(cgrem(&["run", &bad]).status.code(), Some(2));
}

#[test]
fn wall_clock_is_opt_in() {
    let args = ["alpha", "--model", "sk", "--n", "3", "--beta", "1", "--samples", "20"];
    assert!(!stdout(&cgrem(&args)).contains("wall_clock"));
    let o = cgrem(&[&args[..], &["--record-time"]].concat());
    assert!(stdout(&o).contains("# wall_clock_seconds: "));
}

#[test]
fn json_mirrors_csv() {
    let args = ["alpha", "--model", "rem", "--n", "3", "--beta", "1", "--samples", "30"];
    let csv = data_rows(&stdout(&cgrem(&args)));
    let o = cgrem(&[&args[..], &["--format", "json"]].concat());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rec = &v["records"][0];
    assert_eq!(rec["value"].as_f64().unwrap(), csv[0][4].parse::<f64>().unwrap());
    assert_eq!(rec["verdict"], "SATISFIED");
    assert_eq!(v["config"]["samples"], 30);
    assert!(v["version"].is_string());
}
