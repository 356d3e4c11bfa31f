use std::process::{Command, Output};

use mersenne_lab::cli::{IdentitiesReport, PhiReport, PsiRowsReport};
use mersenne_lab::explore::{ExploreReport, FactorReport, ScanReport};
use mersenne_lab::primality::{PerfectVerdict, TestVerdict};
use mersenne_lab::verify::VerifyReport;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mersenne-lab"))
        .args(args)
        .env_remove("MERSENNE_LAB_MAX_TABLE")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Parses the report, re-emits it, and checks both directions agree.
fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(args: &[&str]) -> T {
    let o = bin(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let parsed: T = serde_json::from_str(&text).unwrap();
    let again: T = serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
    assert_eq!(parsed, again);
    let original: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_value(&parsed).unwrap(), original, "{args:?}");
    parsed
}

#[test]
fn test_json_report() {
    let o = bin(&["test", "--p", "5", "--variant", "v2", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["p"], 5);
    assert_eq!(v["variant"], "v2");
    assert_eq!(v["verdict"], "prime");
    assert_eq!(v["residue"], "0");
}

#[test]
fn psi_csv_rows() {
    let o = bin(&["psi", "--n", "6", "--format", "csv"]);
    let text = stdout(&o);
    assert!(text.starts_with("n,k,psi\n"));
    assert!(text.lines().any(|l| l == "6,1,-3"));
}

#[test]
fn factor_sum_lists_paper_factors() {
    let r: FactorReport = round_trip(&["factor-sum", "--p", "5"]);
    let primes: Vec<String> = r.factors.iter().map(|f| f.prime.to_string()).collect();
    assert_eq!(primes, vec!["2", "31", "607"]);
    let csv = stdout(&bin(&["factor-sum", "--p", "5", "--format", "csv"]));
    assert_eq!(csv, "prime,multiplicity\n2,1\n31,1\n607,1\n");
}

#[test]
fn explore_csv_trace() {
    let csv = stdout(&bin(&["explore", "--p", "5", "--format", "csv"]));
    assert_eq!(csv, "k,term,running_sum\n8,2,2\n0,2,4\n2,-8,-4\n4,5,1\n6,-1,0\n");
}

#[test]
fn every_report_round_trips() {
    let _: TestVerdict = round_trip(&["test", "--p", "11", "--variant", "v3", "--direction", "backward"]);
    let _: TestVerdict = round_trip(&["test", "--p", "7", "--variant", "classic"]);
    let _: PsiRowsReport = round_trip(&["psi", "--n-max", "12"]);
    let _: PhiReport = round_trip(&["phi", "--p", "7"]);
    let _: PhiReport = round_trip(&["phi", "--n", "16", "--k", "4"]);
    let _: VerifyReport = round_trip(&["verify", "--n-max", "24"]);
    let _: IdentitiesReport = round_trip(&["identities", "--n", "64"]);
    let _: ExploreReport = round_trip(&["explore", "--p", "11"]);
    let _: PerfectVerdict = round_trip(&["perfect", "--N", "496"]);
    let _: ScanReport = round_trip(&["scan", "--family", "2^a+1", "--a-range", "2..=4"]);
}

#[test]
fn variants_emit_identical_verdicts() {
    for p in ["5", "7", "11", "13"] {
        let mut seen = Vec::new();
        for variant in ["classic", "v1", "v2", "v3"] {
            let v: TestVerdict = round_trip(&["test", "--p", p, "--variant", variant]);
            seen.push(v.verdict);
        }
        let v: TestVerdict = round_trip(&["test", "--p", p, "--variant", "v3", "--direction", "backward"]);
        seen.push(v.verdict);
        assert!(seen.windows(2).all(|w| w[0] == w[1]), "p={p}: {seen:?}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(bin(&["nonsense"]).status.code(), Some(64));
    assert_eq!(bin(&["test", "--p", "9"]).status.code(), Some(64));
    assert_eq!(bin(&["test", "--p", "5", "--variant", "v9"]).status.code(), Some(64));
    assert_eq!(bin(&["test", "--p", "17", "--variant", "v1"]).status.code(), Some(64));
    assert_eq!(bin(&["scan", "--family", "2^a+1", "--a-range", "5..=2"]).status.code(), Some(64));
    assert_eq!(bin(&["test", "--p", "11", "--exit-verdict"]).status.code(), Some(20));
    assert_eq!(bin(&["test", "--p", "13", "--variant", "criterion", "--exit-verdict"]).status.code(), Some(21));
    assert_eq!(bin(&["test", "--p", "13", "--exit-verdict"]).status.code(), Some(0));
    assert_eq!(bin(&["test", "--p", "11"]).status.code(), Some(0));
}

#[test]
fn table_cap_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_mersenne-lab"))
        .args(["psi", "--n-max", "40"])
        .env("MERSENNE_LAB_MAX_TABLE", "32")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));
    assert_eq!(bin(&["psi", "--n-max", "40"]).status.code(), Some(0));
}

#[test]
fn text_format_is_readable() {
    let text = stdout(&bin(&["perfect", "--N", "28", "--format", "text"]));
    assert_eq!(text.trim(), "28 is even perfect: 2^2 (2^3 - 1)");
    let text = stdout(&bin(&["test", "--p", "11", "--format", "text"]));
    assert!(text.starts_with("2^11 - 1: composite [v2]"));
}
