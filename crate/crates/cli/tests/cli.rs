use std::fs;
use std::process::{Command, Output};

fn snlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snlab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn gammas_to_stdout() {
    let o = snlab(&["gammas", "--lmin", "20", "--lmax", "22"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,status,l,gamma_l,l2gamma_l");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,ok,20,"));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("3 records, 0 failed, config "));
}

#[test]
fn unknown_key_exits_with_two() {
    let o = snlab(&["chi", "bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`bogus`"));
    assert!(o.stdout.is_empty());
}

#[test]
fn bad_config_file_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    fs::write(&path, "kind = gammas\n  nonsense\n").unwrap();
    let o = snlab(&["gammas", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn invalid_value_names_its_key() {
    let o = snlab(&["gammas", "--lmin", "30", "--lmax", "20"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("l_max"));
}

#[test]
fn output_file_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let o = snlab(&[
        "gammas",
        "--lmin",
        "20",
        "--lmax",
        "21",
        "--format",
        "json",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("{\n  \"kind\": \"gammas\","));
    assert!(text.contains("\"records\": ["));
}

#[test]
fn worker_count_does_not_change_the_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("chi.conf");
    fs::write(
        &conf,
        "kind = chi\ngamma_min = 1e-4\ngamma_max = 1e-3\npoints = 4\nn = 100000\nseeds = 2\nlyap_n = 20000\n",
    )
    .unwrap();
    let c = conf.to_str().unwrap();
    let one = snlab(&["chi", "--config", c, "--workers", "1"]);
    let many = snlab(&["chi", "--config", c, "--workers", "4"]);
    assert!(one.status.success() && many.status.success());
    assert_eq!(one.stdout, many.stdout);
    let seeded = snlab(&["chi", "--config", c, "--seed", "3"]);
    assert_ne!(one.stdout, seeded.stdout);
}

#[test]
fn positional_overrides_win() {
    let o = snlab(&["gammas", "--lmin", "20", "--lmax", "30", "l_max=20"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn failed_rows_keep_the_header() {
    let o = snlab(&["measure", "gamma=0.5", "bins=8", "n=1000"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("index,status,bin_lo,bin_hi,mass"));
    assert!(text.lines().skip(1).all(|l| !l.contains(",ok,")));
}

#[test]
fn unwritable_output_is_a_run_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("out.csv");
    let o = snlab(&["gammas", "--lmin", "20", "--lmax", "20", "--output", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: writing"));
}
