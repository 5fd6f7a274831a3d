//! Suite-level results: per-episode scores, their aggregate, and the
//! fixed-width result tables.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::engine::AgentConfig;

/// The part of a suite's configuration that describes the experiment
/// itself. Where outputs go, how work is scheduled, and which backend
/// served the calls deliberately stay out, so that a replayed suite
/// reports byte-identically to the recorded one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub world: PathBuf,
    pub episodes: PathBuf,
    pub prompt_pack: Option<PathBuf>,
    pub agent: AgentConfig,
    pub seed: u64,
}

/// Scores of one episode, plus the error that cut it short, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub id: String,
    pub tl: f64,
    /// Meters to the goal; unreachable goals make this infinite, which
    /// serializes as `null`.
    #[serde(serialize_with = "float_or_null", deserialize_with = "null_as_infinity")]
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Suite means: `tl` and `ne` in meters, the rates in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub episodes: usize,
    pub tl: f64,
    #[serde(serialize_with = "float_or_null", deserialize_with = "null_as_infinity")]
    pub ne: f64,
    pub osr: f64,
    pub sr: f64,
    pub spl: f64,
}

/// Everything one suite run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    /// Row label in result tables.
    pub label: String,
    pub config: ConfigEcho,
    pub aggregate: Aggregate,
    pub episodes: Vec<EpisodeResult>,
    /// Requests per role (attempts not counted), over the whole suite.
    pub calls_by_role: BTreeMap<String, u64>,
}

impl SuiteReport {
    pub fn aggregate_of(label: &str, config: ConfigEcho, episodes: Vec<EpisodeResult>) -> Self {
        let n = episodes.len();
        let mean = |f: fn(&EpisodeResult) -> f64| {
            if n == 0 {
                0.0
            } else {
                episodes.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let aggregate = Aggregate {
            episodes: n,
            tl: mean(|e| e.tl),
            ne: mean(|e| e.ne),
            osr: mean(|e| e.osr) * 100.0,
            sr: mean(|e| e.sr) * 100.0,
            spl: mean(|e| e.spl) * 100.0,
        };
        SuiteReport {
            label: label.to_string(),
            config,
            aggregate,
            episodes,
            calls_by_role: BTreeMap::new(),
        }
    }
}

const METHOD_WIDTH: usize = 38;

/// Renders suite aggregates as a fixed-width table, one row per report.
pub fn render_table(reports: &[&SuiteReport]) -> String {
    let mut out = format!(
        "{:<METHOD_WIDTH$} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "Method", "TL", "NE", "OSR", "SR", "SPL"
    );
    for report in reports {
        let a = &report.aggregate;
        out.push_str(&format!(
            "{:<METHOD_WIDTH$} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
            report.label, a.tl, a.ne, a.osr, a.sr, a.spl
        ));
    }
    out
}

/// Renders the ablation table: all rows, then each disabled variant's
/// success-rate drop against the full method (the first report).
pub fn render_ablation_table(reports: &[&SuiteReport]) -> String {
    let mut out = render_table(reports);
    let Some((full, rest)) = reports.split_first() else {
        return out;
    };
    out.push('\n');
    out.push_str(&format!("SR difference vs {}:\n", full.label));
    for report in rest {
        out.push_str(&format!(
            "{:<METHOD_WIDTH$} {:>+8.2}\n",
            report.label,
            report.aggregate.sr - full.aggregate.sr
        ));
    }
    out
}

fn float_or_null<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    if value.is_finite() {
        serializer.serialize_f64(*value)
    } else {
        serializer.serialize_none()
    }
}

fn null_as_infinity<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
    let value: Option<f64> = Option::deserialize(deserializer)?;
    Ok(value.unwrap_or(f64::INFINITY))
}
