use serde_json::Value;
use std::io::Write;
use std::process::{Command, Output};

fn hypermod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypermod")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn config_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn verify_csv_columns_and_rows() {
    let o = hypermod(&["verify", "--scenario", "prop-2.3", "--primes", "5..30", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p,lhs,rhs,modulus,verdict"));
    let ps: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ps, ["5", "13", "17", "29"]);
    assert!(text.contains("5,-10,-10,exact,pass"));
}

#[test]
fn verify_is_deterministic() {
    let args = ["verify", "--scenario", "thm-2.4", "--primes", "3..60", "--format", "json"];
    let a = hypermod(&args);
    let b = hypermod(&args);
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["passed"], Value::Bool(true));
    assert_eq!(v["scenarios"][0]["scenario"], "thm-2.4");
}

#[test]
fn empty_range_succeeds_with_empty_table() {
    let o = hypermod(&["verify", "--scenario", "prop-2.3", "--primes", "50..40", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "p,lhs,rhs,modulus,verdict\n");
}

#[test]
fn exit_codes() {
    assert_eq!(hypermod(&["verify", "--scenario", "no-such"]).status.code(), Some(2));
    assert_eq!(hypermod(&["verify", "--bogus-flag"]).status.code(), Some(2));
    assert_eq!(hypermod(&["verify", "--scenario", "ao2000", "--primes", "3..x"]).status.code(), Some(2));

    let bad = config_file("[[scenario]]\nname = \"x\"\nkind = \"trace\"\nalpha = \"1/2,1/2\"\nbeta = \"1,1\"\nroute = \"q\"\n");
    let o = hypermod(&["verify", "--all", "--config", bad.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    let wrong = config_file(
        "[[scenario]]\nname = \"wrong\"\nkind = \"k2-coefficients\"\nr = \"1/8\"\ns = \"1\"\nrescale = 16\nexpected = { 9 = 3 }\n",
    );
    let o = hypermod(&["verify", "--all", "--config", wrong.path().to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("q^9,-3,3,exact,FAIL"));

    let short = config_file("[[scenario]]\nname = \"short\"\nbuiltin = \"ao2000\"\nprimes = \"3..13\"\norder = 60\n");
    let o = hypermod(&["verify", "--all", "--config", short.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn multi_scenario_csv_has_scenario_column() {
    let cfg = config_file(
        "[[scenario]]\nname = \"a\"\nbuiltin = \"k2-coefficients\"\n\n[[scenario]]\nname = \"b\"\nbuiltin = \"prop-7.1\"\n",
    );
    let o = hypermod(&["verify", "--all", "--config", cfg.path().to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("scenario,p,lhs,rhs,modulus,verdict\n"));
    assert!(text.lines().skip(1).all(|l| l.starts_with("a,") || l.starts_with("b,")));
}

#[test]
fn psum_and_hp_agree() {
    let o = hypermod(&["psum", "--alpha", "1/2,1/2", "--beta", "1,1", "--lambda", "2", "--p", "13"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    // y^2 = x(1-x)(1-2x) over F_13 has 8 points with the one at infinity, so P = 8 - 13 - 1
    assert_eq!(v["integer"], "-6");

    let o = hypermod(&["hp", "--alpha", "1/2,1/2,1/2,1/2", "--beta", "1,1,1,1", "--p", "7"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    // H_7 - 7 = a_7 of eta(2t)^4 eta(4t)^4 = q - 4q^3 - 2q^5 + 24q^7 + ...
    assert_eq!(v["lift"], 31);
    assert_eq!(v["weil_admissible"], true);
}

#[test]
fn series_commands() {
    let o = hypermod(&["qexp", "--expr", "eta(2)^4*eta(4)^4", "--order", "12"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let c = &v["coefficients"];
    assert_eq!((c["1"].as_str(), c["3"].as_str(), c["5"].as_str()), (Some("1"), Some("-4"), Some("-2")));

    let o = hypermod(&["k2", "--r", "1/8", "--s", "1", "--rescale", "16", "--order", "42"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["coefficients"]["41"], "-66");
}

#[test]
fn hecke_and_residues_commands() {
    let o = hypermod(&[
        "hecke",
        "--basis",
        "k2:1/8:1@16,k2:3/8:1@16,k2:5/8:1@16,k2:7/8:1@16",
        "--ell",
        "3,5",
        "--order",
        "300",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["matrices"]["T3"][1][0], "-12");
    assert_eq!(v["eigenforms"].as_array().unwrap().len(), 4);

    let o = hypermod(&["residues", "--alpha", "1/2,1/2,1/4", "--beta", "3/4,1,1", "--p", "13"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);

    let o = hypermod(&["super", "--alpha", "1/2,1/2,1/4", "--beta", "3/4,1,1", "--primes", "5..30"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("p,ordinary,gk_leg,dwork_leg,combined\n5,"));
}

#[test]
fn shipped_config_covers_registry() {
    let list = hypermod::verify::parse_config(include_str!("../../../scenarios.toml")).unwrap();
    for s in hypermod::verify::registry() {
        assert!(list.iter().any(|c| c.name == s.name && c.kind == s.kind), "{} missing", s.name);
    }
}
