//! CSV and JSON file formats.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::BucketStat;
use crate::counterfactual::{PropensityEntry, PropensityTable};
use crate::error::{Error, Result};
use crate::simulator::{Example, LoggedImpression};
use crate::trainer::{EpochRecord, TrainHistory};

pub const IMPRESSION_HEADER: [&str; 7] = [
    "example_id",
    "position",
    "clicked",
    "converted",
    "bid",
    "randomized",
    "reward",
];

fn data_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn flush(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn b01(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn parse_bool(s: &str, path: &Path, line: u64) -> Result<bool> {
    match s.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(data_err(path, format!("line {line}: expected 0/1, got `{other}`"))),
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str, path: &Path, line: u64) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| data_err(path, format!("line {line}: cannot parse {what} from `{s}`")))
}

pub fn write_impressions_csv(path: &Path, log: &[LoggedImpression]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(IMPRESSION_HEADER)?;
    for i in log {
        w.write_record([
            i.example_id.to_string(),
            i.position.to_string(),
            b01(i.clicked).into(),
            b01(i.converted).into(),
            i.bid.to_string(),
            b01(i.randomized).into(),
            i.reward.to_string(),
        ])?;
    }
    flush(w, path)
}

/// Reads an impression log. Slates are recovered from position resets and
/// `examined` is set to `clicked`.
pub fn read_impressions_csv(path: &Path) -> Result<Vec<LoggedImpression>> {
    let mut r = reader(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != IMPRESSION_HEADER {
        return Err(data_err(
            path,
            format!("expected header {}, got {}", IMPRESSION_HEADER.join(","), header.join(",")),
        ));
    }
    let mut out: Vec<LoggedImpression> = Vec::new();
    let mut slate = 0usize;
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let position: usize = parse(&rec[1], "position", path, line)?;
        if position == 0 {
            return Err(data_err(path, format!("line {line}: positions are 1-based")));
        }
        if let Some(prev) = out.last() {
            if position <= prev.position {
                slate += 1;
            }
        }
        let clicked = parse_bool(&rec[2], path, line)?;
        let converted = parse_bool(&rec[3], path, line)?;
        if converted && !clicked {
            return Err(data_err(path, format!("line {line}: conversion without click")));
        }
        out.push(LoggedImpression {
            slate,
            example_id: parse(&rec[0], "example_id", path, line)?,
            position,
            examined: clicked,
            clicked,
            converted,
            bid: parse(&rec[4], "bid", path, line)?,
            randomized: parse_bool(&rec[5], path, line)?,
            reward: parse(&rec[6], "reward", path, line)?,
        });
    }
    Ok(out)
}

/// One column per feature: `id,segment,dense_0..,cat_0..,true_ctr,true_cvr,true_revenue,true_risk`.
pub fn write_examples_csv(path: &Path, examples: &[Example]) -> Result<()> {
    let mut w = writer(path)?;
    let (nd, nc) = examples.first().map(|e| (e.dense.len(), e.cats.len())).unwrap_or((0, 0));
    let mut header = vec!["id".to_string(), "segment".to_string()];
    header.extend((0..nd).map(|i| format!("dense_{i}")));
    header.extend((0..nc).map(|i| format!("cat_{i}")));
    header.extend(["true_ctr", "true_cvr", "true_revenue", "true_risk"].map(String::from));
    w.write_record(&header)?;
    for e in examples {
        if e.dense.len() != nd || e.cats.len() != nc {
            return Err(Error::FeatureShape {
                what: "features per example",
                expected: nd + nc,
                got: e.dense.len() + e.cats.len(),
            });
        }
        let mut row = vec![e.id.to_string(), e.segment.to_string()];
        row.extend(e.dense.iter().map(|x| x.to_string()));
        row.extend(e.cats.iter().map(|x| x.to_string()));
        row.extend([e.true_ctr, e.true_cvr, e.true_revenue, e.true_risk].map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    flush(w, path)
}

pub fn read_examples_csv(path: &Path) -> Result<Vec<Example>> {
    let mut r = reader(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| data_err(path, format!("missing column `{name}`")));
    let (id, seg) = (need("id")?, need("segment")?);
    let truth = [need("true_ctr")?, need("true_cvr")?, need("true_revenue")?, need("true_risk")?];
    let dense: Vec<usize> = (0..).map_while(|i| col(&format!("dense_{i}"))).collect();
    let cats: Vec<usize> = (0..).map_while(|i| col(&format!("cat_{i}"))).collect();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let f = |i: usize, what: &str| parse::<f64>(&rec[i], what, path, line);
        out.push(Example {
            id: parse(&rec[id], "id", path, line)?,
            segment: parse(&rec[seg], "segment", path, line)?,
            dense: dense.iter().map(|&i| f(i, "dense feature")).collect::<Result<_>>()?,
            cats: cats
                .iter()
                .map(|&i| parse(&rec[i], "category id", path, line))
                .collect::<Result<_>>()?,
            true_ctr: f(truth[0], "true_ctr")?,
            true_cvr: f(truth[1], "true_cvr")?,
            true_revenue: f(truth[2], "true_revenue")?,
            true_risk: f(truth[3], "true_risk")?,
        });
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| data_err(path, e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `position,propensity,clicks,expected_clicks,count`
pub fn write_propensity_csv(path: &Path, table: &PropensityTable) -> Result<()> {
    let mut w = writer(path)?;
    for e in &table.entries {
        w.serialize(e)?;
    }
    flush(w, path)
}

pub fn read_propensity_csv(path: &Path, epsilon_min: f64) -> Result<PropensityTable> {
    let mut r = reader(path)?;
    let entries: Vec<PropensityEntry> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    for (i, e) in entries.iter().enumerate() {
        if e.position != i + 1 {
            return Err(data_err(path, format!("positions must be 1..n in order, found {}", e.position)));
        }
    }
    Ok(PropensityTable { entries, epsilon_min })
}

/// `task,bucket,count,mean_pred,empirical_rate,abs_gap`
pub fn write_bucket_report_csv(path: &Path, stats: &[BucketStat]) -> Result<()> {
    let mut w = writer(path)?;
    if stats.is_empty() {
        w.write_record(["task", "bucket", "count", "mean_pred", "empirical_rate", "abs_gap"])?;
    }
    for s in stats {
        w.serialize(s)?;
    }
    flush(w, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintTraceRow {
    pub epoch: usize,
    pub cpc: f64,
    pub cpc_violation: f64,
    pub mean_risk: f64,
    pub risk_violation: f64,
    pub lambda_c: f64,
    pub lambda_r: f64,
}

impl From<&EpochRecord> for ConstraintTraceRow {
    fn from(e: &EpochRecord) -> Self {
        ConstraintTraceRow {
            epoch: e.epoch,
            cpc: e.cpc,
            cpc_violation: e.cpc_violation,
            mean_risk: e.mean_risk,
            risk_violation: e.risk_violation,
            lambda_c: e.lambda_c,
            lambda_r: e.lambda_r,
        }
    }
}

/// `epoch,cpc,cpc_violation,mean_risk,risk_violation,lambda_c,lambda_r`
pub fn write_constraint_trace_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut w = writer(path)?;
    if history.epochs.is_empty() {
        w.write_record(["epoch", "cpc", "cpc_violation", "mean_risk", "risk_violation", "lambda_c", "lambda_r"])?;
    }
    for e in &history.epochs {
        w.serialize(ConstraintTraceRow::from(e))?;
    }
    flush(w, path)
}

pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut w = writer(path)?;
    if history.epochs.is_empty() {
        w.write_record(["epoch"])?;
    }
    for e in &history.epochs {
        w.serialize(e)?;
    }
    flush(w, path)
}

pub fn read_history_csv(path: &Path) -> Result<TrainHistory> {
    let mut r = reader(path)?;
    let epochs: Vec<EpochRecord> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    Ok(TrainHistory {
        epochs,
        stopped_early: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("calicausal-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn impressions_round_trip_and_slates_recovered() {
        let mk = |slate, pos, clicked| LoggedImpression {
            slate,
            example_id: (slate * 10 + pos) as u64,
            position: pos,
            examined: clicked,
            clicked,
            converted: false,
            bid: 0.1 + pos as f64 / 3.0,
            randomized: slate == 1,
            reward: 0.0,
        };
        let log = vec![mk(0, 1, true), mk(0, 2, false), mk(1, 1, false), mk(1, 2, true), mk(2, 1, false)];
        let p = tmp("imps.csv");
        write_impressions_csv(&p, &log).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("example_id,position,clicked,converted,bid,randomized,reward\n"));
        assert_eq!(read_impressions_csv(&p).unwrap(), log);
    }

    #[test]
    fn conversion_without_click_is_rejected() {
        let p = tmp("bad.csv");
        fs::write(&p, "example_id,position,clicked,converted,bid,randomized,reward\n1,1,0,1,1.0,0,1.0\n").unwrap();
        assert!(matches!(read_impressions_csv(&p), Err(Error::Data { .. })));
    }
}
