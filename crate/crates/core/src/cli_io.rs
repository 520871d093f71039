//! Dataset descriptors, the bundled example descriptors, and the
//! orchestration behind the command-line tool.
//!
//! A descriptor is a flat TOML document:
//!
//! ```toml
//! label = "Abel Prize vs composite citation indicator"
//! pool_size = 96619
//! winner_count = 22
//! observed_ranks = [3, 41, "?"]   # "?" marks a listed winner with unknown rank
//! censored_count = 16
//! list_cutoff_rank = 898          # optional unless censored_count > 0
//! notes = "free text"             # optional
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{Error, Result};
use crate::inference::{self, DatasetFields, EstimateReport, PosteriorGrid, PrizeDataset, RankEntry, Thresholds};
use crate::simulation::{self, Coupling, OverlapResult, ScanPoint, ScanRange, SimConfig};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const PLACEHOLDER: &str = "?";

/// Descriptors shipped with the crate.
pub mod bundled {
    pub const NOBEL: &str = include_str!("../descriptors/nobel.toml");
    pub const ABEL: &str = include_str!("../descriptors/abel.toml");
    pub const FIELDS: &str = include_str!("../descriptors/fields.toml");
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDescriptor {
    label: Spanned<String>,
    pool_size: Spanned<u64>,
    winner_count: Spanned<u64>,
    observed_ranks: Spanned<Vec<Spanned<toml::Value>>>,
    censored_count: Spanned<u64>,
    list_cutoff_rank: Option<Spanned<u64>>,
    notes: Option<Spanned<String>>,
}

/// A parsed descriptor plus any non-fatal findings.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDescriptor {
    pub dataset: PrizeDataset,
    pub warnings: Vec<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of the first `key = ...` assignment, or 1 when absent.
fn line_of_key(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let t = l.trim_start();
            t.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(1, |i| i + 1)
}

fn parse_error(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn key_from_serde_message(message: &str) -> String {
    // serde phrases these as "unknown field `x`" / "missing field `x`"
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".to_string())
}

fn rank_entry(text: &str, value: &Spanned<toml::Value>) -> Result<RankEntry> {
    let line = line_of(text, value.span().start);
    match value.get_ref() {
        toml::Value::Integer(k) if *k > 0 => Ok(RankEntry::Known(*k as u64)),
        toml::Value::Integer(k) => Err(parse_error(
            line,
            "observed_ranks",
            format!("rank {k} must be positive"),
        )),
        toml::Value::String(s) if s == PLACEHOLDER => Ok(RankEntry::Unrecorded),
        other => Err(parse_error(
            line,
            "observed_ranks",
            format!("entries must be positive integers or \"{PLACEHOLDER}\", got {other}"),
        )),
    }
}

/// Parse and validate descriptor text.
pub fn parse_descriptor_str(text: &str) -> Result<ParsedDescriptor> {
    let raw: RawDescriptor = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| line_of(text, s.start));
        let message = e.message().to_string();
        let key = key_from_serde_message(&message);
        parse_error(line, &key, message)
    })?;

    let observed_ranks = raw
        .observed_ranks
        .get_ref()
        .iter()
        .map(|v| rank_entry(text, v))
        .collect::<Result<Vec<_>>>()?;

    let fields = DatasetFields {
        label: raw.label.into_inner(),
        pool_size: raw.pool_size.into_inner(),
        winner_count: raw.winner_count.into_inner(),
        observed_ranks,
        censored_count: raw.censored_count.into_inner(),
        list_cutoff_rank: raw.list_cutoff_rank.map(Spanned::into_inner),
        notes: raw.notes.map(Spanned::into_inner).unwrap_or_default(),
    };

    let dataset = PrizeDataset::try_from(fields).map_err(|e| match e {
        Error::InvalidDataset { field, message } => parse_error(line_of_key(text, field), field, message),
        other => other,
    })?;

    let mut warnings = Vec::new();
    if dataset.has_placeholders() {
        warnings.push(format!(
            "observed_ranks: {} of {} entries are placeholders; only the exceedance method can use this descriptor",
            dataset.unrecorded_count(),
            dataset.listed_count()
        ));
    }
    Ok(ParsedDescriptor { dataset, warnings })
}

pub fn parse_descriptor(path: &Path) -> Result<ParsedDescriptor> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("cannot read descriptor {}: {e}", path.display())))?;
    parse_descriptor_str(&text)
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Canonical descriptor text for a dataset.
pub fn serialize_descriptor(ds: &PrizeDataset) -> String {
    let fields = ds.to_fields();
    let ranks: Vec<String> = fields
        .observed_ranks
        .iter()
        .map(|e| match e {
            RankEntry::Known(k) => k.to_string(),
            RankEntry::Unrecorded => toml_string(PLACEHOLDER),
        })
        .collect();
    let mut out = String::new();
    writeln!(out, "label = {}", toml_string(&fields.label)).unwrap();
    writeln!(out, "pool_size = {}", fields.pool_size).unwrap();
    writeln!(out, "winner_count = {}", fields.winner_count).unwrap();
    writeln!(out, "observed_ranks = [{}]", ranks.join(", ")).unwrap();
    writeln!(out, "censored_count = {}", fields.censored_count).unwrap();
    if let Some(cutoff) = fields.list_cutoff_rank {
        writeln!(out, "list_cutoff_rank = {cutoff}").unwrap();
    }
    writeln!(out, "notes = {}", toml_string(&fields.notes)).unwrap();
    out
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_full(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMethod {
    Mle,
    Posterior,
    Exceedance,
}

impl std::str::FromStr for EstimationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mle" => Ok(Self::Mle),
            "posterior" => Ok(Self::Posterior),
            "exceedance" => Ok(Self::Exceedance),
            other => Err(Error::InvalidConfig(format!(
                "unknown method `{other}` (mle|posterior|exceedance)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub method: EstimationMethod,
    pub grid_step: f64,
    pub credible_level: f64,
    pub out_posterior: Option<PathBuf>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            method: EstimationMethod::Mle,
            grid_step: 0.001,
            credible_level: 0.95,
            out_posterior: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Units {
    pub thresholds: &'static str,
    pub correlation: &'static str,
    pub fractions: &'static str,
}

const UNITS: Units = Units {
    thresholds: "standard-normal z-scores",
    correlation: "Pearson correlation coefficient",
    fractions: "probabilities",
};

#[derive(Debug, Clone, Serialize)]
pub struct DatasetEcho {
    pub label: String,
    pub pool_size: u64,
    pub winner_count: u64,
    pub observed_ranks: Vec<u64>,
    pub placeholder_ranks: u64,
    pub censored_count: u64,
    pub list_cutoff_rank: Option<u64>,
}

impl From<&PrizeDataset> for DatasetEcho {
    fn from(ds: &PrizeDataset) -> Self {
        Self {
            label: ds.label().to_string(),
            pool_size: ds.pool_size(),
            winner_count: ds.winner_count(),
            observed_ranks: ds.observed_ranks().to_vec(),
            placeholder_ranks: ds.unrecorded_count(),
            censored_count: ds.censored_count(),
            list_cutoff_rank: ds.list_cutoff_rank(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub config: SimConfig,
    pub overlap: OverlapResult,
    pub observed_overlap: Option<usize>,
    /// Fraction of replications whose overlap equals `observed_overlap`.
    pub fraction_at_observed: Option<f64>,
    pub scan: Option<Vec<ScanPoint>>,
    pub scan_argmax: Option<ScanPoint>,
}

/// Everything a command produced, written to standard output as JSON.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub descriptor: Option<String>,
    pub dataset: Option<DatasetEcho>,
    pub method: Option<String>,
    pub options: Option<serde_json::Value>,
    pub thresholds: Option<Thresholds>,
    pub estimates: Vec<EstimateReport>,
    pub simulation: Option<SimulationSummary>,
    pub posterior_csv: Option<String>,
    pub histogram_csv: Option<String>,
    pub scan_csv: Option<String>,
    pub seed: Option<u64>,
    pub units: Units,
    pub warnings: Vec<String>,
}

impl RunReport {
    fn new(command: &str) -> Self {
        Self {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            command: command.to_string(),
            descriptor: None,
            dataset: None,
            method: None,
            options: None,
            thresholds: None,
            estimates: Vec::new(),
            simulation: None,
            posterior_csv: None,
            histogram_csv: None,
            scan_csv: None,
            seed: None,
            units: UNITS,
            warnings: Vec::new(),
        }
    }

    /// Rejects reports carrying a NaN or infinite number.
    pub fn check_finite(&self) -> Result<()> {
        let mut bad = Vec::new();
        for e in &self.estimates {
            let nums = [
                Some(e.r_hat),
                Some(e.noise_prefactor),
                Some(e.thresholds.x_c),
                e.thresholds.y_c,
            ];
            if nums.iter().flatten().any(|x| !x.is_finite()) {
                bad.push(e.method.tag());
            }
        }
        if let Some(t) = self.thresholds
            && (!t.x_c.is_finite() || t.y_c.is_some_and(|y| !y.is_finite()))
        {
            bad.push("thresholds");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::EstimationFailure(format!(
                "non-finite values in report: {}",
                bad.join(", ")
            )))
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn posterior_csv(grid: &PosteriorGrid) -> String {
    let mut out = String::from("r,posterior_mass\n");
    for (r, m) in grid.r_values.iter().zip(&grid.posterior_masses) {
        writeln!(out, "{},{}", format_full(*r), format_full(*m)).unwrap();
    }
    out
}

pub fn histogram_csv(result: &OverlapResult) -> String {
    let mut out = String::from("k,count,fraction\n");
    for (k, &count) in result.histogram.iter().enumerate() {
        writeln!(out, "{k},{count},{}", format_full(result.fraction_at(k))).unwrap();
    }
    out
}

pub fn scan_csv(points: &[ScanPoint]) -> String {
    let mut out = String::from("r,fraction_matching\n");
    for p in points {
        writeln!(out, "{},{}", format_full(p.r), format_full(p.fraction_matching)).unwrap();
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn run_thresholds(path: &Path) -> Result<RunReport> {
    let parsed = parse_descriptor(path)?;
    let mut report = RunReport::new("thresholds");
    report.descriptor = Some(path.display().to_string());
    report.thresholds = Some(inference::derive_thresholds(&parsed.dataset)?);
    report.dataset = Some(DatasetEcho::from(&parsed.dataset));
    report.warnings = parsed.warnings;
    report.check_finite()?;
    Ok(report)
}

/// Run one estimation method on an already-parsed dataset.
pub fn estimate_dataset(ds: &PrizeDataset, opts: &EstimateOptions) -> Result<(EstimateReport, Option<PosteriorGrid>)> {
    match opts.method {
        EstimationMethod::Mle => Ok((inference::mle(ds, opts.grid_step)?, None)),
        EstimationMethod::Posterior => {
            let (grid, report) = inference::posterior(ds, opts.grid_step, opts.credible_level)?;
            Ok((report, Some(grid)))
        }
        EstimationMethod::Exceedance => Ok((inference::infer_by_exceedance(ds)?, None)),
    }
}

pub fn run_estimation(path: &Path, opts: &EstimateOptions) -> Result<RunReport> {
    let parsed = parse_descriptor(path)?;
    let ds = &parsed.dataset;
    let method_name = match opts.method {
        EstimationMethod::Mle => "mle",
        EstimationMethod::Posterior => "posterior",
        EstimationMethod::Exceedance => "exceedance",
    };
    let (estimate, grid) = estimate_dataset(ds, opts).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("method `{method_name}`: {msg}")),
        Error::EstimationFailure(msg) => Error::EstimationFailure(format!("method `{method_name}`: {msg}")),
        other => other,
    })?;

    let mut report = RunReport::new("estimate");
    report.descriptor = Some(path.display().to_string());
    report.dataset = Some(DatasetEcho::from(ds));
    report.method = Some(method_name.to_string());
    report.options = Some(serde_json::json!({
        "grid_step": opts.grid_step,
        "credible_level": opts.credible_level,
    }));
    report.thresholds = Some(estimate.thresholds);
    report.warnings = parsed.warnings;
    if let (Some(grid), Some(out)) = (grid.as_ref(), opts.out_posterior.as_ref()) {
        write_file(out, &posterior_csv(grid))?;
        report.posterior_csv = Some(out.display().to_string());
    }
    report.estimates.push(estimate);
    report.check_finite()?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub config: SimConfig,
    pub observed_overlap: Option<usize>,
    pub scan: Option<ScanRange>,
    pub out_csv: Option<PathBuf>,
    pub out_scan: Option<PathBuf>,
}

/// Parse `LO:HI:STEP`.
pub fn parse_scan_range(s: &str) -> Result<ScanRange> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::InvalidConfig(format!("scan range must look like LO:HI:STEP, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    let range = ScanRange {
        low: nums[0],
        high: nums[1],
        step: nums[2],
    };
    range.points()?;
    Ok(range)
}

pub fn run_simulation(opts: &SimulateOptions) -> Result<RunReport> {
    let cfg = opts.config;
    cfg.validate()?;
    if opts.scan.is_some() && opts.observed_overlap.is_none() {
        return Err(Error::InvalidConfig("--scan needs --observed-overlap".into()));
    }
    if cfg.coupling != Coupling::Gaussian && opts.scan.is_some() {
        return Err(Error::InvalidConfig(
            "the profile scan uses gaussian coupling only".into(),
        ));
    }
    if let Some(k) = opts.observed_overlap
        && k > cfg.winner_count
    {
        return Err(Error::InvalidConfig(format!(
            "observed overlap {k} exceeds the winner count {}",
            cfg.winner_count
        )));
    }

    let overlap = simulation::overlap_experiment(&cfg)?;
    let scan = opts
        .scan
        .map(|range| {
            simulation::profile_likelihood_scan(
                cfg.pool_size,
                cfg.winner_count,
                opts.observed_overlap.expect("checked above"),
                range,
                cfg.replications,
                cfg.seed,
            )
        })
        .transpose()?;

    let mut report = RunReport::new("simulate");
    report.seed = Some(cfg.seed);
    if let Some(out) = &opts.out_csv {
        write_file(out, &histogram_csv(&overlap))?;
        report.histogram_csv = Some(out.display().to_string());
    }
    if let (Some(points), Some(out)) = (scan.as_ref(), opts.out_scan.as_ref()) {
        write_file(out, &scan_csv(points))?;
        report.scan_csv = Some(out.display().to_string());
    }
    report.simulation = Some(SimulationSummary {
        config: cfg,
        fraction_at_observed: opts.observed_overlap.map(|k| overlap.fraction_at(k)),
        observed_overlap: opts.observed_overlap,
        scan_argmax: scan.as_deref().and_then(simulation::scan_argmax),
        scan,
        overlap,
    });
    Ok(report)
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::InvalidDataset { .. } | Error::InvalidConfig(_) | Error::Io(_) => 2,
        Error::Config(_) | Error::EmptyDataset(_) => 3,
        Error::Domain(_) | Error::Convergence { .. } | Error::NoSolution { .. } | Error::EstimationFailure(_) => 4,
    }
}

/// Stable code printed in front of every CLI error.
pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::Parse { .. } | Error::InvalidDataset { .. } => "E_PARSE",
        Error::InvalidConfig(_) => "E_USAGE",
        Error::Io(_) => "E_IO",
        Error::EmptyDataset(_) => "E_EMPTY",
        Error::Config(_) => "E_DATA",
        Error::NoSolution { .. } => "E_NO_SOLUTION",
        Error::Domain(_) | Error::Convergence { .. } | Error::EstimationFailure(_) => "E_NUMERIC",
    }
}

/// `error[CODE]: message` on a single line.
pub fn error_line(e: &Error) -> String {
    let text = e.to_string().replace(['\n', '\r'], " ");
    format!("error[{}]: {text}", error_code(e))
}
