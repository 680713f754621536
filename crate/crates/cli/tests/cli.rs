//! End-to-end behavior of the command-line interface: emitted documents,
//! exit codes, error reporting, and schema round trips.

use gooddeal_cli::{
    ConvolveJson, ErrorJson, EstimateJson, FtapJson, PriceJson, RiskJson, TranchePlanJson,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::PathBuf;
use tempfile::TempDir;

const TWO_POINT: &str = r#"{"labels": ["up", "down"], "probs": [0.5, 0.5],
  "columns": {"stock": [1.0, -1.0], "claim": [1.0, 0.0]}}"#;

const FREE_MONEY: &str = r#"{"labels": ["a", "b"], "probs": [0.5, 0.5],
  "columns": {"stock": [1.0, 1.0]}}"#;

const UNIFORM_FOUR: &str = r#"{"labels": ["w1", "w2", "w3", "w4"],
  "probs": [0.25, 0.25, 0.25, 0.25],
  "columns": {"claim": [1.0, 0.0, -1.0, -2.0],
              "xi": [0.5, 0.9, 1.1, 1.5],
              "flat": [1.0, 1.0, 1.0, 1.0]}}"#;

const THREE_SCENARIO: &str = r#"{"labels": ["a", "b", "c"], "probs": [0.2, 0.3, 0.5],
  "columns": {"asset": [1.0, 1.0, -1.0], "claim": [2.0, -1.0, 0.5]}}"#;

const MU_HALF_PAIR: &str = r#"{"type": "discrete",
  "atoms": [[0.3333333333333333, 0.5], [1.0, 0.5]]}"#;

const MU_TAIL_TWO_THIRDS: &str = r#"{"type": "tailvar", "lambda": 0.6666666666666666}"#;

const SAMPLES: &str = "x,y\n1.0,2.0\n2.0,4.0\n3.0,6.0\n4.0,8.0\n";

struct Fixtures {
    dir: TempDir,
}

impl Fixtures {
    fn new() -> Self {
        Fixtures {
            dir: TempDir::new().expect("temp dir"),
        }
    }

    fn write(&self, name: &str, content: &str) -> String {
        let path: PathBuf = self.dir.path().join(name);
        std::fs::write(&path, content).expect("write fixture");
        path.to_str().expect("utf-8 path").to_string()
    }
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["gooddeal"];
    argv.extend_from_slice(args);
    let code = gooddeal_cli::run_with(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).expect("utf-8 stdout"),
        String::from_utf8(err).expect("utf-8 stderr"),
    )
}

/// Parse an emitted document and confirm it survives a serialize/parse
/// round trip through the same schema.
fn parse_doc<T: DeserializeOwned + Serialize>(text: &str) -> T {
    let doc: T = serde_json::from_str(text.trim()).expect("document parses through its schema");
    let again = serde_json::to_string(&doc).expect("document re-serializes");
    serde_json::from_str::<T>(&again).expect("round-tripped document re-parses")
}

fn expect_error(stderr: &str, kind: &str) {
    let doc: ErrorJson = serde_json::from_str(stderr.trim()).expect("stderr is one JSON line");
    assert_eq!(doc.error, kind, "stderr was: {stderr}");
    assert!(!doc.message.is_empty());
}

#[test]
fn two_point_price_collapses_and_round_trips() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", TWO_POINT);
    let (code, out, err) = run(&[
        "price",
        "--scenarios",
        &scen,
        "--claim",
        "claim",
        "--asset",
        "stock",
        "--group",
        "tailvar:0.5",
        "--mode",
        "conv",
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let doc: PriceJson = parse_doc(&out);
    assert!((doc.interval[0] - 0.5).abs() <= 1e-9);
    assert!((doc.interval[1] - 0.5).abs() <= 1e-9);
    assert_eq!(doc.hedge_upper.len(), 1);
    assert_eq!(doc.hedge_lower.len(), 1);
    assert!(doc.oracle_interval.is_none());
}

#[test]
fn oracle_cross_check_agrees_with_the_interval() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", THREE_SCENARIO);
    let (code, out, err) = run(&[
        "price",
        "--scenarios",
        &scen,
        "--claim",
        "claim",
        "--asset",
        "asset",
        "--group",
        "tailvar:0.7",
        "--oracle",
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let doc: PriceJson = parse_doc(&out);
    let oracle = doc.oracle_interval.expect("--oracle reports the dual interval");
    assert!((doc.interval[0] - oracle[0]).abs() <= 1e-7);
    assert!((doc.interval[1] - oracle[1]).abs() <= 1e-7);
}

#[test]
fn convolve_emits_the_combined_measure() {
    let fx = Fixtures::new();
    let mu1 = fx.write("mu1.json", MU_HALF_PAIR);
    let mu2 = fx.write("mu2.json", MU_TAIL_TWO_THIRDS);
    let (code, out, _) = run(&[
        "convolve",
        "--group",
        &format!("file:{mu1}"),
        "--group",
        &format!("file:{mu2}"),
    ]);
    assert_eq!(code, 0);
    let doc: ConvolveJson = parse_doc(&out);
    assert_eq!(doc.atoms, vec![[0.5, 0.5], [1.0, 0.5]]);
    assert_eq!(doc.knots, vec![[0.0, 0.0], [0.5, 0.75], [1.0, 1.0]]);
}

#[test]
fn free_money_is_reported_with_a_certificate_and_exit_4() {
    let fx = Fixtures::new();
    let scen = fx.write("free.json", FREE_MONEY);
    let (code, out, err) = run(&[
        "ftap",
        "--scenarios",
        &scen,
        "--asset",
        "stock",
        "--group",
        "tailvar:0.5",
    ]);
    assert_eq!(code, 4);
    let doc: FtapJson = parse_doc(&out);
    assert!(!doc.holds);
    match doc.certificate.expect("violation carries a certificate") {
        gooddeal_cli::CertificateJson::AcceptableTrade { hedge } => {
            assert_eq!(hedge.len(), 1);
            assert!(hedge[0] > 0.0);
        }
        other => panic!("expected an acceptable-trade certificate, got {other:?}"),
    }
    expect_error(&err, "nsao-violated");
}

#[test]
fn balanced_market_passes_the_opportunity_check() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", TWO_POINT);
    let (code, out, err) = run(&[
        "ftap",
        "--scenarios",
        &scen,
        "--asset",
        "stock",
        "--group",
        "tailvar:0.5",
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let doc: FtapJson = parse_doc(&out);
    assert!(doc.holds);
    assert!(doc.certificate.is_none());
    assert!(err.is_empty());
}

#[test]
fn superrep_reports_the_residual_and_balanced_shifts() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", UNIFORM_FOUR);
    let mu1 = fx.write("mu1.json", MU_HALF_PAIR);
    let mu2 = fx.write("mu2.json", MU_TAIL_TWO_THIRDS);
    let (code, out, err) = run(&[
        "superrep",
        "--scenarios",
        &scen,
        "--claim",
        "claim",
        "--group",
        &format!("file:{mu1}"),
        "--group",
        &format!("file:{mu2}"),
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let doc: TranchePlanJson = parse_doc(&out);
    assert!(doc.hedge.is_empty());
    let expected = [-1.0, 0.0, 1.0, 2.0];
    for (got, want) in doc.residual.iter().zip(expected) {
        assert!((got - want).abs() <= 1e-9, "residual {got} vs {want}");
    }
    assert_eq!(doc.groups.len(), 2);
    let shift_sum: f64 = doc.groups.iter().map(|g| g.shift).sum();
    assert!(shift_sum.abs() <= 1e-9);
    for j in 0..4 {
        let total: f64 = doc.groups.iter().map(|g| g.payoff[j]).sum();
        assert!((total - doc.residual[j]).abs() <= 1e-9);
    }
}

#[test]
fn liquidity_matches_the_box_closed_form() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", TWO_POINT);
    let (code, out, err) = run(&[
        "liquidity",
        "--scenarios",
        &scen,
        "--claim",
        "claim",
        "--asset",
        "stock",
        "--bounds",
        "stock:-1:1",
        "--group",
        "tailvar:0.5",
        "--volumes",
        "0.5,1,2,4,8",
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("v,upper,lower"));
    for line in lines {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.parse().expect("numeric CSV cell"))
            .collect();
        assert_eq!(cells.len(), 3);
        let v = cells[0];
        let want = if v <= 2.0 { 0.5 } else { 1.0 - 1.0 / v };
        assert!((cells[1] - want).abs() <= 1e-8, "upper at v={v}");
        assert!((cells[2] - (1.0 - want)).abs() <= 1e-8, "lower at v={v}");
    }
}

#[test]
fn bounds_accept_infinite_sides() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", TWO_POINT);
    let (code, out, err) = run(&[
        "liquidity",
        "--scenarios",
        &scen,
        "--claim",
        "claim",
        "--asset",
        "stock",
        "--bounds",
        "stock:-inf:inf",
        "--group",
        "tailvar:0.5",
        "--volumes",
        "1,10",
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    for line in out.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cells[1] - 0.5).abs() <= 1e-9, "unbounded upper stays at the frictionless price");
        assert!((cells[2] - 0.5).abs() <= 1e-9);
    }

    let (code, _, err) = run(&[
        "liquidity",
        "--scenarios",
        &scen,
        "--claim",
        "claim",
        "--asset",
        "stock",
        "--bounds",
        "bond:-1:1",
        "--group",
        "tailvar:0.5",
        "--volumes",
        "1",
    ]);
    assert_eq!(code, 2);
    expect_error(&err, "usage");
}

#[test]
fn risk_flags_select_the_transform() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", UNIFORM_FOUR);

    let (code, out, _) = run(&[
        "risk", "--scenarios", &scen, "--var", "claim", "--group", "tailvar:0.5",
    ]);
    assert_eq!(code, 0);
    let doc: RiskJson = parse_doc(&out);
    assert!((doc.risk.expect("plain risk") - 1.5).abs() <= 1e-12);
    assert!(doc.factor_risk.is_none() && doc.contribution.is_none());

    let (code, out, _) = run(&[
        "risk", "--scenarios", &scen, "--var", "claim", "--factor", "xi", "--group",
        "tailvar:0.5",
    ]);
    assert_eq!(code, 0);
    let doc: RiskJson = parse_doc(&out);
    assert!(doc.factor_risk.is_some() && doc.risk.is_none());

    let (code, out, _) = run(&[
        "risk", "--scenarios", &scen, "--var", "claim", "--portfolio", "claim", "--group",
        "tailvar:0.5",
    ]);
    assert_eq!(code, 0);
    let doc: RiskJson = parse_doc(&out);
    // Contribution of a portfolio to itself is the portfolio's own risk.
    assert!((doc.contribution.expect("contribution") - 1.5).abs() <= 1e-12);
    assert_eq!(doc.unique, Some(true));

    let (code, _, err) = run(&[
        "risk", "--scenarios", &scen, "--var", "claim", "--factor", "xi", "--portfolio",
        "claim", "--group", "tailvar:0.5",
    ]);
    assert_eq!(code, 2);
    expect_error(&err, "usage");
}

#[test]
fn risk_convolves_repeated_groups() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", UNIFORM_FOUR);
    let mu1 = fx.write("mu1.json", MU_HALF_PAIR);
    let mu2 = fx.write("mu2.json", MU_TAIL_TWO_THIRDS);
    let combined = fx.write(
        "combined.json",
        r#"{"type": "discrete", "atoms": [[0.5, 0.5], [1.0, 0.5]]}"#,
    );

    let (code, out_pair, _) = run(&[
        "risk",
        "--scenarios",
        &scen,
        "--var",
        "claim",
        "--group",
        &format!("file:{mu1}"),
        "--group",
        &format!("file:{mu2}"),
    ]);
    assert_eq!(code, 0);
    let (code, out_combined, _) = run(&[
        "risk",
        "--scenarios",
        &scen,
        "--var",
        "claim",
        "--group",
        &format!("file:{combined}"),
    ]);
    assert_eq!(code, 0);
    assert_eq!(out_pair, out_combined);
}

#[test]
fn constant_payoff_delta_is_a_singleton() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", UNIFORM_FOUR);
    let (code, out, err) = run(&[
        "delta",
        "--scenarios",
        &scen,
        "--xi",
        "flat",
        "--group",
        "tailvar:0.5",
        "--payoff",
        "call",
        "--spot",
        "1.0",
        "--strike",
        "0.5",
        "--rate",
        "0.0",
        "--expiry",
        "1.0",
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let doc: PriceJson = parse_doc(&out);
    assert!((doc.interval[0] - 1.0).abs() <= 1e-9);
    assert!((doc.interval[1] - 1.0).abs() <= 1e-9);
}

#[test]
fn bond_delta_reads_the_schedule_file() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", UNIFORM_FOUR);
    let sched = fx.write("sched.json", r#"{"cashflows": [[1.0, 1.0]]}"#);
    let (code, out, err) = run(&[
        "delta",
        "--scenarios",
        &scen,
        "--xi",
        "flat",
        "--group",
        "tailvar:0.5",
        "--payoff",
        "bond",
        "--strike",
        "0.5",
        "--rate",
        "0.1",
        "--expiry",
        "0.5",
        "--schedule",
        &sched,
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let doc: PriceJson = parse_doc(&out);
    // Flat rate factor makes the derivative constant, so the interval is a
    // singleton: -(T_1 - T) e^{-T r0 x} e^{-T_1 ... } collapses to one value.
    assert!((doc.interval[1] - doc.interval[0]).abs() <= 1e-9);
    assert!(doc.interval[0] < 0.0, "bond price falls as rates rise");

    let bad = fx.write("bad_sched.json", r#"{"cashflows": "nope"}"#);
    let (code, _, err) = run(&[
        "delta",
        "--scenarios",
        &scen,
        "--xi",
        "flat",
        "--group",
        "tailvar:0.5",
        "--payoff",
        "bond",
        "--strike",
        "0.5",
        "--rate",
        "0.1",
        "--expiry",
        "0.5",
        "--schedule",
        &bad,
    ]);
    assert_eq!(code, 3);
    expect_error(&err, "data-format");
}

#[test]
fn estimate_wvar_is_exact_on_small_samples() {
    let fx = Fixtures::new();
    let samples = fx.write("s.csv", SAMPLES);
    let (code, out, err) = run(&[
        "estimate",
        "--samples",
        &samples,
        "--estimator",
        "wvar",
        "--column",
        "x",
        "--measure",
        "tailvar:0.5",
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let doc: EstimateJson = parse_doc(&out);
    assert!((doc.estimate - (-1.5)).abs() <= 1e-12);
    assert!(doc.std_error.is_none());
}

#[test]
fn estimate_bootstrap_is_seed_deterministic() {
    let fx = Fixtures::new();
    let samples = fx.write("s.csv", SAMPLES);
    let with_seed = |seed: &str| {
        run(&[
            "estimate",
            "--samples",
            &samples,
            "--estimator",
            "alphavar",
            "--column",
            "x",
            "--alpha",
            "2",
            "--resamples",
            "5000",
            "--seed",
            seed,
        ])
    };
    let (code_a, out_a, _) = with_seed("42");
    let (code_b, out_b, _) = with_seed("42");
    let (code_c, out_c, _) = with_seed("43");
    assert_eq!(code_a, 0);
    assert_eq!(code_b, 0);
    assert_eq!(code_c, 0);
    assert_eq!(out_a, out_b, "same seed reproduces byte-identical output");
    assert_ne!(out_a, out_c, "different seed gives a different resample set");
    let doc: EstimateJson = parse_doc(&out_a);
    assert!(doc.std_error.expect("bootstrap reports a standard error") > 0.0);
}

#[test]
fn estimate_upper_price_uses_hedge_candidates() {
    let fx = Fixtures::new();
    let samples = fx.write("s.csv", SAMPLES);
    let base = [
        "estimate",
        "--samples",
        &samples,
        "--estimator",
        "upperprice",
        "--claim",
        "x",
        "--measure",
        "tailvar:0.5",
    ];

    let (code, out, _) = run(&base);
    assert_eq!(code, 0);
    let unhedged: EstimateJson = parse_doc(&out);
    assert!((unhedged.estimate - 3.5).abs() <= 1e-12);

    let mut with_candidate = base.to_vec();
    with_candidate.extend_from_slice(&["--candidate", "y"]);
    let (code, out, _) = run(&with_candidate);
    assert_eq!(code, 0);
    let hedged: EstimateJson = parse_doc(&out);
    assert!((hedged.estimate - (-1.5)).abs() <= 1e-12);
    assert!(hedged.estimate <= unhedged.estimate);
}

#[test]
fn usage_errors_exit_2_with_a_json_report() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", TWO_POINT);

    let (code, _, err) = run(&["frobnicate"]);
    assert_eq!(code, 2);
    expect_error(&err, "usage");

    let (code, _, err) = run(&[
        "price", "--scenarios", &scen, "--claim", "claim", "--group", "tailvar:0.5",
        "--mode", "median",
    ]);
    assert_eq!(code, 2);
    expect_error(&err, "usage");

    let (code, _, err) = run(&[
        "price", "--scenarios", &scen, "--claim", "claim", "--group", "quantile:0.5",
    ]);
    assert_eq!(code, 2);
    expect_error(&err, "usage");

    let (code, _, err) = run(&[
        "price", "--scenarios", &scen, "--claim", "claim", "--group", "tailvar:0",
    ]);
    assert_eq!(code, 2);
    expect_error(&err, "usage");

    let (code, _, err) = run(&["price", "--scenarios", &scen, "--claim", "claim"]);
    assert_eq!(code, 2);
    expect_error(&err, "usage");

    let samples = fx.write("s.csv", SAMPLES);
    let (code, _, err) = run(&[
        "estimate", "--samples", &samples, "--estimator", "alphavar", "--column", "x",
        "--alpha", "2", "--resamples", "10", "--measure", "tailvar:0.5",
    ]);
    assert_eq!(code, 2);
    expect_error(&err, "usage");
}

#[test]
fn data_errors_exit_3_with_a_json_report() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", TWO_POINT);

    let (code, _, err) = run(&[
        "risk", "--scenarios", "/nonexistent/m.json", "--var", "claim", "--group",
        "tailvar:0.5",
    ]);
    assert_eq!(code, 3);
    expect_error(&err, "data-format");

    let (code, _, err) = run(&[
        "risk", "--scenarios", &scen, "--var", "missing", "--group", "tailvar:0.5",
    ]);
    assert_eq!(code, 3);
    expect_error(&err, "data-format");

    let broken = fx.write("broken.json", r#"{"type": "tailvar"}"#);
    let (code, _, err) = run(&[
        "risk", "--scenarios", &scen, "--var", "claim", "--group",
        &format!("file:{broken}"),
    ]);
    assert_eq!(code, 3);
    expect_error(&err, "data-format");
}

#[test]
fn help_and_version_exit_0() {
    let (code, out, err) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("price"));
    assert!(err.is_empty());

    let (code, out, _) = run(&["--version"]);
    assert_eq!(code, 0);
    assert!(!out.trim().is_empty());
}

#[test]
fn binary_honors_the_thread_cap_and_exit_codes() {
    let fx = Fixtures::new();
    let scen = fx.write("m.json", TWO_POINT);
    let free = fx.write("free.json", FREE_MONEY);
    let bin = env!("CARGO_BIN_EXE_gooddeal");
    let price_args = [
        "price",
        "--scenarios",
        scen.as_str(),
        "--claim",
        "claim",
        "--asset",
        "stock",
        "--group",
        "tailvar:0.5",
    ];

    let bad = std::process::Command::new(bin)
        .args(price_args)
        .env("COHERENT_DEAL_THREADS", "abc")
        .output()
        .expect("spawn");
    assert_eq!(bad.status.code(), Some(2));
    expect_error(&String::from_utf8(bad.stderr).unwrap(), "usage");

    let plain = std::process::Command::new(bin)
        .args(price_args)
        .env_remove("COHERENT_DEAL_THREADS")
        .output()
        .expect("spawn");
    let capped = std::process::Command::new(bin)
        .args(price_args)
        .env("COHERENT_DEAL_THREADS", "1")
        .output()
        .expect("spawn");
    assert_eq!(plain.status.code(), Some(0));
    assert_eq!(capped.status.code(), Some(0));
    assert_eq!(plain.stdout, capped.stdout, "thread cap never changes results");

    let violated = std::process::Command::new(bin)
        .args([
            "ftap",
            "--scenarios",
            free.as_str(),
            "--asset",
            "stock",
            "--group",
            "tailvar:0.5",
        ])
        .output()
        .expect("spawn");
    assert_eq!(violated.status.code(), Some(4));
}
