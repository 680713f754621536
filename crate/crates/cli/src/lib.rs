//! Command-line front end for the good-deal risk and pricing engine.
//!
//! Every subcommand reads scenario tables, sample files, or measure specs,
//! dispatches to the core crate, and emits machine-readable results: one
//! JSON document per run on stdout (CSV for curve data), and on failure a
//! single JSON error line on stderr.
//!
//! Exit codes: `0` success, `2` usage error, `3` data/format error, `4`
//! no-strictly-acceptable-opportunity violation, `5` numerical conditioning
//! failure.
//!
//! All emitted numbers are rounded to 12 significant digits; CSV always
//! uses `.` as the decimal separator.

// Validation guards are deliberately spelled `!(x > limit)` rather than
// `x <= limit`: the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Once;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use gooddeal::algebra::convolve;
use gooddeal::error::Error;
use gooddeal::estimation::{
    est_beta_var, est_factor_risk, est_risk_contribution, est_upper_price, est_wvar,
};
use gooddeal::pricing::{
    dual_price_bound, liquidity_curve, nsao_check, price_interval, superreplication_split,
    Aggregation, MarketModel, NsaoCertificate, NsaoOutcome, Side, TranchePlan, ValuationGroup,
};
use gooddeal::scenario::{RandomVariable, ScenarioTable};
use gooddeal::sensitivity::{bond_option_delta_payoff, call_delta_payoff, delta_interval};
use gooddeal::spectral::{MeasureSpec, WeightingMeasure};
use gooddeal::transforms::{factor_risk, risk_contribution};

type Measure64 = WeightingMeasure<f64>;
type Table64 = ScenarioTable<f64>;
type Market64 = MarketModel<f64>;

// ---------------------------------------------------------------------------
// Failure handling: every error becomes an exit code and a one-line JSON
// object on stderr.
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Nsao(String),
    Conditioning(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Nsao(_) => 4,
            Failure::Conditioning(_) => 5,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Data(_) => "data-format",
            Failure::Nsao(_) => "nsao-violated",
            Failure::Conditioning(_) => "conditioning",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Nsao(m) | Failure::Conditioning(m) => {
                m
            }
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NsaoViolated(_) => Failure::Nsao(e.to_string()),
            Error::Conditioning(_) => Failure::Conditioning(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(format!("i/o: {e}"))
    }
}

/// One-line machine-parsable error report.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorJson {
    pub error: String,
    pub message: String,
}

// ---------------------------------------------------------------------------
// Emitted document schemas. Everything the CLI prints re-loads through
// these types (tests rely on that round trip).
// ---------------------------------------------------------------------------

/// `price` and `delta` output.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceJson {
    pub interval: [f64; 2],
    pub hedge_upper: Vec<f64>,
    pub hedge_lower: Vec<f64>,
    /// Dual cross-check interval, present when `--oracle` is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_interval: Option<[f64; 2]>,
}

/// `ftap` output.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FtapJson {
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateJson>,
}

/// Evidence attached to a violated no-free-lunch check.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CertificateJson {
    /// Positions whose P&L is strictly acceptable at any scale.
    AcceptableTrade { hedge: Vec<f64> },
    /// No risk-neutral measure lies in the valuation set.
    EmptyIntersection,
}

/// `superrep` output.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranchePlanJson {
    pub hedge: Vec<f64>,
    pub upper_price: f64,
    pub residual: Vec<f64>,
    pub groups: Vec<TrancheGroupJson>,
}

/// One group's slice of a tranche plan: active probability intervals, the
/// carving map as breakpoints/values/slopes, the zero-risk shift, and the
/// final payoff per scenario.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrancheGroupJson {
    pub active: Vec<[f64; 2]>,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
    pub slope_below: f64,
    pub slope_above: f64,
    pub shift: f64,
    pub payoff: Vec<f64>,
}

/// `risk` output: exactly one of the value fields is set.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor_risk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contribution: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unique: Option<bool>,
}

/// `estimate` output.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateJson {
    pub estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unique: Option<bool>,
}

/// `convolve` output: the combined weighting measure and its distortion.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvolveJson {
    pub atoms: Vec<[f64; 2]>,
    pub knots: Vec<[f64; 2]>,
}

/// Bond schedule file for `delta --payoff bond`: cashflows as
/// `[maturity, coupon]` pairs, optional curve-shape values per cashflow gap
/// (default zero) and at the option expiry.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleJson {
    pub cashflows: Vec<[f64; 2]>,
    #[serde(default)]
    pub shape_at_gaps: Option<Vec<f64>>,
    #[serde(default)]
    pub shape_at_expiry: f64,
}

// ---------------------------------------------------------------------------
// Number formatting: round to 12 significant digits before emission.
// ---------------------------------------------------------------------------

fn r12(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0; // normalizes -0.0
    }
    if !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float reparses")
}

fn r12_vec(xs: &[f64]) -> Vec<f64> {
    xs.iter().copied().map(r12).collect()
}

fn csv_num(x: f64) -> String {
    // `Display` for floats never uses a locale-dependent separator.
    format!("{}", r12(x))
}

fn emit<W: Write + ?Sized, S: Serialize>(out: &mut W, doc: &S) -> Result<(), Failure> {
    let line = serde_json::to_string(doc)
        .map_err(|e| Failure::Conditioning(format!("serialization: {e}")))?;
    writeln!(out, "{line}")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Argument grammar.
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "gooddeal",
    version,
    about = "Exact coherent-risk pricing on finite scenario markets",
    long_about = "Evaluates spectral risk measures exactly on finite scenario spaces and \
derives good-deal price intervals, no-free-lunch checks, superreplication \
tranche plans, liquidity curves, sensitivity intervals and Monte-Carlo \
estimates from them."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral risk of a scenario column; conditional-factor and
    /// contribution variants via flags.
    Risk(RiskArgs),
    /// Good-deal price interval of a claim under hedging.
    Price(PriceArgs),
    /// Check that the market admits no strictly acceptable opportunity.
    Ftap(FtapArgs),
    /// Superreplication tranche plan: hedge, residual, per-group tranches.
    Superrep(SuperrepArgs),
    /// Volume-dependent price bounds as CSV (`v,upper,lower`).
    Liquidity(LiquidityArgs),
    /// Sensitivity interval of a payoff derivative.
    Delta(DeltaArgs),
    /// Empirical and bootstrap estimators on sample files.
    Estimate(EstimateArgs),
    /// Combine weighting measures by infimal convolution.
    Convolve(ConvolveArgs),
}

/// Valuation group specs are repeatable and ordered; their order is the
/// tie-break for tranche assignment (earlier groups win shared regions).
#[derive(Args)]
struct GroupFlags {
    /// Group spec: tailvar:L | alphavar:A:GRID | betavar:A:B:GRID | file:PATH
    #[arg(long = "group", value_name = "SPEC", required = true)]
    groups: Vec<String>,
}

#[derive(Args)]
struct MarketFlags {
    /// Scenario table file, JSON or CSV by extension.
    #[arg(long, value_name = "FILE")]
    scenarios: PathBuf,
    /// Column to trade as a hedging asset (repeatable).
    #[arg(long = "asset", value_name = "COLUMN")]
    assets: Vec<String>,
}

#[derive(Args)]
struct RiskArgs {
    /// Scenario table file, JSON or CSV by extension.
    #[arg(long, value_name = "FILE")]
    scenarios: PathBuf,
    /// Column holding the position to evaluate.
    #[arg(long, value_name = "COLUMN")]
    var: String,
    #[command(flatten)]
    groups: GroupFlags,
    /// Evaluate the risk of the conditional expectation given this column.
    #[arg(long, value_name = "COLUMN", conflicts_with = "portfolio")]
    factor: Option<String>,
    /// Evaluate the risk contribution of `--var` to this portfolio column.
    #[arg(long, value_name = "COLUMN")]
    portfolio: Option<String>,
}

#[derive(Args)]
struct PriceArgs {
    #[command(flatten)]
    market: MarketFlags,
    /// Column holding the claim to price.
    #[arg(long, value_name = "COLUMN")]
    claim: String,
    #[command(flatten)]
    groups: GroupFlags,
    /// Aggregation across groups: conv (intersection) or max (union).
    #[arg(long, value_name = "MODE", default_value = "conv")]
    mode: String,
    /// Cross-check against the brute-force dual and report its interval.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct FtapArgs {
    #[command(flatten)]
    market: MarketFlags,
    #[command(flatten)]
    groups: GroupFlags,
    /// Aggregation across groups: conv (intersection) or max (union).
    #[arg(long, value_name = "MODE", default_value = "conv")]
    mode: String,
}

#[derive(Args)]
struct SuperrepArgs {
    #[command(flatten)]
    market: MarketFlags,
    /// Column holding the claim to superreplicate.
    #[arg(long, value_name = "COLUMN")]
    claim: String,
    #[command(flatten)]
    groups: GroupFlags,
}

#[derive(Args)]
struct LiquidityArgs {
    #[command(flatten)]
    market: MarketFlags,
    /// Column holding the claim.
    #[arg(long, value_name = "COLUMN")]
    claim: String,
    /// Position bounds per asset: NAME:LO:HI with `-inf`/`inf` for
    /// unbounded sides (repeatable; unlisted assets stay unbounded).
    #[arg(long = "bounds", value_name = "NAME:LO:HI")]
    bounds: Vec<String>,
    #[command(flatten)]
    groups: GroupFlags,
    /// Comma-separated trade volumes to evaluate.
    #[arg(long, value_name = "V1,V2,...")]
    volumes: String,
}

#[derive(Args)]
struct DeltaArgs {
    #[command(flatten)]
    market: MarketFlags,
    /// Column holding the scenario driver (price relative or rate factor).
    #[arg(long, value_name = "COLUMN")]
    xi: String,
    #[command(flatten)]
    groups: GroupFlags,
    /// Aggregation across groups: conv (intersection) or max (union).
    #[arg(long, value_name = "MODE", default_value = "conv")]
    mode: String,
    /// Payoff family: call or bond.
    #[arg(long, value_name = "KIND")]
    payoff: String,
    /// Spot price (call only).
    #[arg(long, value_name = "S")]
    spot: Option<f64>,
    /// Strike.
    #[arg(long, value_name = "K")]
    strike: f64,
    /// Interest rate (call) or today's short rate (bond).
    #[arg(long, value_name = "R")]
    rate: f64,
    /// Option expiry in years.
    #[arg(long, value_name = "T")]
    expiry: f64,
    /// Bond schedule JSON file (bond only).
    #[arg(long, value_name = "FILE")]
    schedule: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Sample CSV file: header row of names, one column per variable.
    #[arg(long, value_name = "FILE")]
    samples: PathBuf,
    /// Estimator: wvar | alphavar | betavar | contribution | factor |
    /// upperprice.
    #[arg(long, value_name = "NAME")]
    estimator: String,
    /// Measure spec (same grammar as --group). Repeatable for upperprice.
    #[arg(long = "measure", value_name = "SPEC")]
    measures: Vec<String>,
    /// Sample column to estimate on.
    #[arg(long, value_name = "COLUMN")]
    column: Option<String>,
    /// Portfolio column (contribution).
    #[arg(long, value_name = "COLUMN")]
    portfolio: Option<String>,
    /// Factor column (factor).
    #[arg(long, value_name = "COLUMN")]
    factor: Option<String>,
    /// Equal-frequency bin count (factor).
    #[arg(long, value_name = "N")]
    bins: Option<usize>,
    /// Number of independent draws per resample (alphavar, betavar).
    #[arg(long, value_name = "N")]
    alpha: Option<usize>,
    /// Order-statistic depth (betavar).
    #[arg(long, value_name = "N")]
    beta: Option<usize>,
    /// Number of bootstrap resamples (alphavar, betavar).
    #[arg(long, value_name = "M")]
    resamples: Option<usize>,
    /// RNG seed for bootstrap estimators.
    #[arg(long, value_name = "SEED", default_value_t = 0)]
    seed: u64,
    /// Claim sample column (upperprice).
    #[arg(long, value_name = "COLUMN")]
    claim: Option<String>,
    /// Hedge-candidate sample column (upperprice, repeatable).
    #[arg(long = "candidate", value_name = "COLUMN")]
    candidates: Vec<String>,
}

#[derive(Args)]
struct ConvolveArgs {
    #[command(flatten)]
    groups: GroupFlags,
}

// ---------------------------------------------------------------------------
// Input loading and flag parsing.
// ---------------------------------------------------------------------------

/// Parse one group/measure spec. Inline spec mistakes are usage errors;
/// problems inside referenced files are data errors.
fn parse_measure_spec(spec: &str) -> Result<Measure64, Failure> {
    let usage = |m: String| Failure::Usage(m);
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "tailvar" => {
            let lambda: f64 = rest
                .parse()
                .map_err(|_| usage(format!("tailvar level '{rest}' is not a number")))?;
            WeightingMeasure::tail_var(lambda).map_err(|e| usage(e.to_string()))
        }
        "alphavar" => {
            let (a, g) = rest
                .split_once(':')
                .ok_or_else(|| usage(format!("alphavar spec '{spec}' needs ALPHA:GRID")))?;
            let alpha: f64 = a
                .parse()
                .map_err(|_| usage(format!("alphavar alpha '{a}' is not a number")))?;
            let grid: usize = g
                .parse()
                .map_err(|_| usage(format!("alphavar grid '{g}' is not a count")))?;
            WeightingMeasure::alpha_var_grid(alpha, grid).map_err(|e| usage(e.to_string()))
        }
        "betavar" => {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(usage(format!(
                    "betavar spec '{spec}' needs ALPHA:BETA:GRID"
                )));
            }
            let alpha: f64 = parts[0]
                .parse()
                .map_err(|_| usage(format!("betavar alpha '{}' is not a number", parts[0])))?;
            let beta: f64 = parts[1]
                .parse()
                .map_err(|_| usage(format!("betavar beta '{}' is not a number", parts[1])))?;
            let grid: usize = parts[2]
                .parse()
                .map_err(|_| usage(format!("betavar grid '{}' is not a count", parts[2])))?;
            WeightingMeasure::beta_var_grid(alpha, beta, grid).map_err(|e| usage(e.to_string()))
        }
        "file" => {
            if rest.is_empty() {
                return Err(usage("file spec needs a path: file:PATH".to_string()));
            }
            let text = std::fs::read_to_string(rest)
                .map_err(|e| Failure::Data(format!("measure file '{rest}': {e}")))?;
            let spec: MeasureSpec<f64> = MeasureSpec::from_json_str(&text)
                .map_err(|e| Failure::Data(format!("measure file '{rest}': {e}")))?;
            spec.build()
                .map_err(|e| Failure::Data(format!("measure file '{rest}': {e}")))
        }
        other => Err(usage(format!(
            "unknown group spec '{other}'; expected tailvar:, alphavar:, betavar: or file:"
        ))),
    }
}

fn parse_measures(specs: &[String]) -> Result<Vec<Measure64>, Failure> {
    specs.iter().map(|s| parse_measure_spec(s)).collect()
}

fn spectral_groups(measures: &[Measure64]) -> Vec<ValuationGroup<f64>> {
    measures
        .iter()
        .cloned()
        .map(ValuationGroup::Spectral)
        .collect()
}

fn parse_mode(mode: &str) -> Result<Aggregation, Failure> {
    match mode {
        "conv" => Ok(Aggregation::Convolution),
        "max" => Ok(Aggregation::Maximum),
        other => Err(Failure::Usage(format!(
            "unknown mode '{other}'; expected conv or max"
        ))),
    }
}

fn load_table(path: &Path) -> Result<Table64, Failure> {
    ScenarioTable::from_path(path).map_err(Failure::from)
}

fn build_market(table: &Table64, asset_names: &[String]) -> Result<Market64, Failure> {
    let mut assets = Vec::with_capacity(asset_names.len());
    for name in asset_names {
        let rv = table.column(name)?;
        assets.push((name.clone(), rv.clone()));
    }
    MarketModel::new(table.space().clone(), assets).map_err(Failure::from)
}

fn parse_bound_side(text: &str, which: &str, spec: &str) -> Result<Option<f64>, Failure> {
    let v: f64 = text.parse().map_err(|_| {
        Failure::Usage(format!("{which} bound '{text}' in '{spec}' is not a number"))
    })?;
    Ok(if v.is_infinite() { None } else { Some(v) })
}

fn apply_bounds(market: &mut Market64, bounds: &[String]) -> Result<(), Failure> {
    for spec in bounds {
        let parts: Vec<&str> = spec.rsplitn(3, ':').collect();
        if parts.len() != 3 {
            return Err(Failure::Usage(format!(
                "bounds spec '{spec}' must be NAME:LO:HI"
            )));
        }
        let (name, lo_text, hi_text) = (parts[2], parts[1], parts[0]);
        let lo = parse_bound_side(lo_text, "lower", spec)?;
        let hi = parse_bound_side(hi_text, "upper", spec)?;
        let idx = market
            .asset_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| {
                Failure::Usage(format!("bounds name '{name}' is not a listed --asset"))
            })?;
        market.set_bounds(idx, lo, hi).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn parse_volumes(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("volume '{part}' is not a number")))
        })
        .collect()
}

/// Sample CSV: header row of variable names, numeric rows below.
fn load_samples(path: &Path) -> Result<Vec<(String, Vec<f64>)>, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::Data(format!("samples '{}': {e}", path.display())))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Failure::Data(format!("samples '{}': {e}", path.display())))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    if names.is_empty() {
        return Err(Failure::Data(format!(
            "samples '{}': header row is empty",
            path.display()
        )));
    }
    let mut columns: Vec<(String, Vec<f64>)> =
        names.into_iter().map(|n| (n, Vec::new())).collect();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Failure::Data(format!("samples '{}': {e}", path.display())))?;
        if record.len() != columns.len() {
            return Err(Failure::Data(format!(
                "samples '{}': row {} has {} fields, expected {}",
                path.display(),
                i + 2,
                record.len(),
                columns.len()
            )));
        }
        for (field, column) in record.iter().zip(&mut columns) {
            let v: f64 = field.parse().map_err(|_| {
                Failure::Data(format!(
                    "samples '{}': '{field}' in row {} is not a number",
                    path.display(),
                    i + 2
                ))
            })?;
            column.1.push(v);
        }
    }
    Ok(columns)
}

fn sample_column<'a>(
    samples: &'a [(String, Vec<f64>)],
    name: &str,
) -> Result<&'a [f64], Failure> {
    samples
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, v)| v.as_slice())
        .ok_or_else(|| Failure::Data(format!("sample file has no column '{name}'")))
}

fn require_flag<T>(value: Option<T>, flag: &str, estimator: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::Usage(format!("{estimator} requires {flag}")))
}

// ---------------------------------------------------------------------------
// Subcommand implementations.
// ---------------------------------------------------------------------------

fn exec_risk<W: Write + ?Sized>(a: &RiskArgs, out: &mut W) -> Result<(), Failure> {
    let table = load_table(&a.scenarios)?;
    let x = table.column(&a.var)?;
    let measures = parse_measures(&a.groups.groups)?;
    let mu = convolve(&measures)?;
    let space = table.space();

    let doc = if let Some(factor) = &a.factor {
        let y = table.column(factor)?;
        RiskJson {
            risk: None,
            factor_risk: Some(r12(factor_risk(&mu, space, x, y)?)),
            contribution: None,
            unique: None,
        }
    } else if let Some(portfolio) = &a.portfolio {
        let w = table.column(portfolio)?;
        let c = risk_contribution(&mu, space, x, w)?;
        RiskJson {
            risk: None,
            factor_risk: None,
            contribution: Some(r12(c.value)),
            unique: Some(c.unique),
        }
    } else {
        RiskJson {
            risk: Some(r12(mu.risk(space, x)?)),
            factor_risk: None,
            contribution: None,
            unique: None,
        }
    };
    emit(out, &doc)
}

fn price_json(market: &Market64, groups: &[ValuationGroup<f64>], f: &RandomVariable<f64>, mode: Aggregation, oracle: bool) -> Result<PriceJson, Failure> {
    let p = price_interval(market, groups, f, mode)?;
    let oracle_interval = if oracle {
        let lo = dual_price_bound(market, groups, f, Side::Lower)?;
        let hi = dual_price_bound(market, groups, f, Side::Upper)?;
        Some([r12(lo), r12(hi)])
    } else {
        None
    };
    Ok(PriceJson {
        interval: [r12(p.lower), r12(p.upper)],
        hedge_upper: r12_vec(&p.hedge_upper.unwrap_or_default()),
        hedge_lower: r12_vec(&p.hedge_lower.unwrap_or_default()),
        oracle_interval,
    })
}

fn exec_price<W: Write + ?Sized>(a: &PriceArgs, out: &mut W) -> Result<(), Failure> {
    let table = load_table(&a.market.scenarios)?;
    let market = build_market(&table, &a.market.assets)?;
    let f = table.column(&a.claim)?;
    let groups = spectral_groups(&parse_measures(&a.groups.groups)?);
    let mode = parse_mode(&a.mode)?;
    let doc = price_json(&market, &groups, f, mode, a.oracle)?;
    emit(out, &doc)
}

fn exec_ftap<W: Write + ?Sized>(a: &FtapArgs, out: &mut W) -> Result<(), Failure> {
    let table = load_table(&a.market.scenarios)?;
    let market = build_market(&table, &a.market.assets)?;
    let groups = spectral_groups(&parse_measures(&a.groups.groups)?);
    let mode = parse_mode(&a.mode)?;
    match nsao_check(&market, &groups, mode)? {
        NsaoOutcome::Holds => emit(
            out,
            &FtapJson {
                holds: true,
                certificate: None,
            },
        ),
        NsaoOutcome::Violated(cert) => {
            let (json_cert, detail) = match cert {
                NsaoCertificate::AcceptableTrade { hedge } => (
                    CertificateJson::AcceptableTrade {
                        hedge: r12_vec(&hedge),
                    },
                    "a strictly acceptable trade exists".to_string(),
                ),
                NsaoCertificate::EmptyIntersection => (
                    CertificateJson::EmptyIntersection,
                    "no risk-neutral measure lies in the valuation set".to_string(),
                ),
            };
            emit(
                out,
                &FtapJson {
                    holds: false,
                    certificate: Some(json_cert),
                },
            )?;
            Err(Failure::Nsao(detail))
        }
    }
}

fn tranche_plan_json(plan: &TranchePlan<f64>) -> TranchePlanJson {
    TranchePlanJson {
        hedge: r12_vec(&plan.hedge),
        upper_price: r12(plan.upper_price),
        residual: r12_vec(plan.residual.values()),
        groups: plan
            .groups
            .iter()
            .map(|g| {
                let (below, above) = g.payoff_map.edge_slopes();
                TrancheGroupJson {
                    active: g.active.iter().map(|&(a, b)| [r12(a), r12(b)]).collect(),
                    breakpoints: r12_vec(g.payoff_map.breakpoints()),
                    values: r12_vec(g.payoff_map.values_at_breakpoints()),
                    slopes: g.payoff_map.interior_slopes().to_vec(),
                    slope_below: below,
                    slope_above: above,
                    shift: r12(g.shift),
                    payoff: r12_vec(g.payoff.values()),
                }
            })
            .collect(),
    }
}

fn exec_superrep<W: Write + ?Sized>(a: &SuperrepArgs, out: &mut W) -> Result<(), Failure> {
    let table = load_table(&a.market.scenarios)?;
    let market = build_market(&table, &a.market.assets)?;
    let f = table.column(&a.claim)?;
    let groups = spectral_groups(&parse_measures(&a.groups.groups)?);
    let plan = superreplication_split(&market, &groups, f)?;
    emit(out, &tranche_plan_json(&plan))
}

fn exec_liquidity<W: Write + ?Sized>(a: &LiquidityArgs, out: &mut W) -> Result<(), Failure> {
    let table = load_table(&a.market.scenarios)?;
    let mut market = build_market(&table, &a.market.assets)?;
    apply_bounds(&mut market, &a.bounds)?;
    let f = table.column(&a.claim)?;
    let groups = spectral_groups(&parse_measures(&a.groups.groups)?);
    let volumes = parse_volumes(&a.volumes)?;
    let curve = liquidity_curve(&market, &groups, f, &volumes)?;
    writeln!(out, "v,upper,lower")?;
    for point in curve {
        writeln!(
            out,
            "{},{},{}",
            csv_num(point.volume),
            csv_num(point.upper),
            csv_num(point.lower)
        )?;
    }
    Ok(())
}

fn exec_delta<W: Write + ?Sized>(a: &DeltaArgs, out: &mut W) -> Result<(), Failure> {
    let table = load_table(&a.market.scenarios)?;
    let market = build_market(&table, &a.market.assets)?;
    let xi = table.column(&a.xi)?;
    let groups = spectral_groups(&parse_measures(&a.groups.groups)?);
    let mode = parse_mode(&a.mode)?;

    let deriv = match a.payoff.as_str() {
        "call" => {
            let spot = require_flag(a.spot, "--spot", "--payoff call")?;
            if !(spot > 0.0) || !spot.is_finite() {
                return Err(Failure::Usage(format!(
                    "--spot must be positive and finite, got {spot}"
                )));
            }
            if !(a.expiry >= 0.0) || !a.expiry.is_finite() {
                return Err(Failure::Usage(format!(
                    "--expiry must be nonnegative and finite, got {}",
                    a.expiry
                )));
            }
            call_delta_payoff(spot, a.strike, a.rate, a.expiry, xi)?
        }
        "bond" => {
            let path = a
                .schedule
                .as_ref()
                .ok_or_else(|| Failure::Usage("--payoff bond requires --schedule".to_string()))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Data(format!("schedule '{}': {e}", path.display())))?;
            let schedule: ScheduleJson = serde_json::from_str(&text)
                .map_err(|e| Failure::Data(format!("schedule '{}': {e}", path.display())))?;
            let cashflows: Vec<(f64, f64)> =
                schedule.cashflows.iter().map(|&[m, c]| (m, c)).collect();
            let shapes = schedule
                .shape_at_gaps
                .unwrap_or_else(|| vec![0.0; cashflows.len()]);
            bond_option_delta_payoff(
                a.rate,
                a.strike,
                a.expiry,
                &cashflows,
                &shapes,
                schedule.shape_at_expiry,
                xi,
            )?
        }
        other => {
            return Err(Failure::Usage(format!(
                "unknown payoff '{other}'; expected call or bond"
            )))
        }
    };

    let p = delta_interval(&market, &groups, &deriv, mode)?;
    emit(
        out,
        &PriceJson {
            interval: [r12(p.lower), r12(p.upper)],
            hedge_upper: r12_vec(&p.hedge_upper.unwrap_or_default()),
            hedge_lower: r12_vec(&p.hedge_lower.unwrap_or_default()),
            oracle_interval: None,
        },
    )
}

fn exec_estimate<W: Write + ?Sized>(a: &EstimateArgs, out: &mut W) -> Result<(), Failure> {
    let samples = load_samples(&a.samples)?;
    let measures = parse_measures(&a.measures)?;
    let single_measure = || -> Result<&Measure64, Failure> {
        if measures.len() == 1 {
            Ok(&measures[0])
        } else {
            Err(Failure::Usage(format!(
                "this estimator takes exactly one --measure, got {}",
                measures.len()
            )))
        }
    };

    let doc = match a.estimator.as_str() {
        "wvar" => {
            let column = require_flag(a.column.as_ref(), "--column", "wvar")?;
            let xs = sample_column(&samples, column)?;
            EstimateJson {
                estimate: r12(est_wvar(xs, single_measure()?)?),
                std_error: None,
                unique: None,
            }
        }
        "alphavar" | "betavar" => {
            let column = require_flag(a.column.as_ref(), "--column", &a.estimator)?;
            let alpha = require_flag(a.alpha, "--alpha", &a.estimator)?;
            let beta = if a.estimator == "betavar" {
                require_flag(a.beta, "--beta", "betavar")?
            } else {
                1
            };
            let resamples = require_flag(a.resamples, "--resamples", &a.estimator)?;
            if !a.measures.is_empty() {
                return Err(Failure::Usage(
                    "bootstrap estimators define their own measure; drop --measure".to_string(),
                ));
            }
            let xs = sample_column(&samples, column)?;
            let est = est_beta_var(xs, alpha, beta, resamples, a.seed)?;
            EstimateJson {
                estimate: r12(est.value),
                std_error: Some(r12(est.std_error)),
                unique: None,
            }
        }
        "contribution" => {
            let column = require_flag(a.column.as_ref(), "--column", "contribution")?;
            let portfolio = require_flag(a.portfolio.as_ref(), "--portfolio", "contribution")?;
            let xs = sample_column(&samples, column)?;
            let ws = sample_column(&samples, portfolio)?;
            let pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ws.iter().copied()).collect();
            let c = est_risk_contribution(&pairs, single_measure()?)?;
            EstimateJson {
                estimate: r12(c.value),
                std_error: None,
                unique: Some(c.unique),
            }
        }
        "factor" => {
            let column = require_flag(a.column.as_ref(), "--column", "factor")?;
            let factor = require_flag(a.factor.as_ref(), "--factor", "factor")?;
            let bins = require_flag(a.bins, "--bins", "factor")?;
            let xs = sample_column(&samples, column)?;
            let ys = sample_column(&samples, factor)?;
            let pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
            EstimateJson {
                estimate: r12(est_factor_risk(&pairs, single_measure()?, bins)?),
                std_error: None,
                unique: None,
            }
        }
        "upperprice" => {
            let claim = require_flag(a.claim.as_ref(), "--claim", "upperprice")?;
            let f = sample_column(&samples, claim)?;
            let candidates: Vec<Vec<f64>> = a
                .candidates
                .iter()
                .map(|name| sample_column(&samples, name).map(|s| s.to_vec()))
                .collect::<Result<_, _>>()?;
            if measures.is_empty() {
                return Err(Failure::Usage(
                    "upperprice requires at least one --measure".to_string(),
                ));
            }
            EstimateJson {
                estimate: r12(est_upper_price(f, &candidates, &measures)?),
                std_error: None,
                unique: None,
            }
        }
        other => {
            return Err(Failure::Usage(format!(
                "unknown estimator '{other}'; expected wvar, alphavar, betavar, contribution, \
                 factor or upperprice"
            )))
        }
    };
    emit(out, &doc)
}

fn exec_convolve<W: Write + ?Sized>(a: &ConvolveArgs, out: &mut W) -> Result<(), Failure> {
    let measures = parse_measures(&a.groups.groups)?;
    let mu = convolve(&measures)?;
    let doc = ConvolveJson {
        atoms: mu.atoms().iter().map(|&(l, w)| [r12(l), r12(w)]).collect(),
        knots: mu
            .distortion()
            .knots()
            .iter()
            .map(|&(x, y)| [r12(x), r12(y)])
            .collect(),
    };
    emit(out, &doc)
}

// ---------------------------------------------------------------------------
// Entry point.
// ---------------------------------------------------------------------------

static POOL_INIT: Once = Once::new();

/// Honor the thread cap from the environment. The global worker pool can
/// only be sized once per process; the first capped invocation pins it.
fn apply_thread_cap() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("COHERENT_DEAL_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            Failure::Usage(format!(
                "COHERENT_DEAL_THREADS must be a positive integer, got '{raw}'"
            ))
        })?;
    POOL_INIT.call_once(|| {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    });
    Ok(())
}

fn dispatch<W: Write + ?Sized>(cmd: &Command, out: &mut W) -> Result<(), Failure> {
    match cmd {
        Command::Risk(a) => exec_risk(a, out),
        Command::Price(a) => exec_price(a, out),
        Command::Ftap(a) => exec_ftap(a, out),
        Command::Superrep(a) => exec_superrep(a, out),
        Command::Liquidity(a) => exec_liquidity(a, out),
        Command::Delta(a) => exec_delta(a, out),
        Command::Estimate(a) => exec_estimate(a, out),
        Command::Convolve(a) => exec_convolve(a, out),
    }
}

fn report<W: Write + ?Sized>(err: &mut W, failure: &Failure) -> i32 {
    let doc = ErrorJson {
        error: failure.kind().to_string(),
        message: failure.message().to_string(),
    };
    // Serialization of two strings cannot fail; degrade silently if the
    // stream is gone.
    if let Ok(line) = serde_json::to_string(&doc) {
        let _ = writeln!(err, "{line}");
    }
    failure.code()
}

/// Run the CLI against explicit arguments and output streams; returns the
/// process exit code. `args` must include the program name.
pub fn run_with<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            return report(err, &Failure::Usage(e.to_string()));
        }
    };
    if let Err(f) = apply_thread_cap() {
        return report(err, &f);
    }
    match dispatch(&cli.cmd, out) {
        Ok(()) => 0,
        Err(f) => report(err, &f),
    }
}
