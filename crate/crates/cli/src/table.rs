//! Instance tables: CSV with a header row.
//!
//! Columns `id`, `score` and `group` identify an instance; `y`, `stratum`,
//! `p_hat` and `decision` are optional. Empty cells of optional columns read
//! as missing. Unknown columns are ignored.

use std::path::Path;

use fairdecide::LabeledInstance;

use crate::error::CliError;

pub const COLUMNS: [&str; 7] = ["id", "score", "group", "y", "stratum", "p_hat", "decision"];

/// Group assigned when the table has no `group` column.
pub const SINGLE_GROUP: &str = "all";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub instances: Vec<LabeledInstance>,
    pub has_group: bool,
    pub has_outcome: bool,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

/// Reads a table, insisting on the columns in `required`.
pub fn read_table(path: &Path, required: &[&str]) -> Result<Table, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let schema = |msg: String| CliError::Schema(format!("{}: {msg}", path.display()));
    let headers = rdr.headers().map_err(|e| schema(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    for name in ["id", "score"].iter().chain(required) {
        if col(name).is_none() {
            return Err(schema(format!("missing column {name}")));
        }
    }
    let idx: Vec<Option<usize>> = COLUMNS.iter().map(|c| col(c)).collect();
    let mut table = Table { instances: Vec::new(), has_group: idx[2].is_some(), has_outcome: idx[3].is_some() };
    let mut seen = std::collections::BTreeSet::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| schema(format!("line {line}: {e}")))?;
        let cell = |k: usize| idx[k].and_then(|i| rec.get(i)).filter(|s| !s.is_empty());
        let bad = |name: &str, v: &str| schema(format!("line {line} column {name}: cannot read {v:?}"));
        let id = cell(0).ok_or_else(|| schema(format!("line {line} column id: empty")))?;
        if !seen.insert(id.to_owned()) {
            return Err(schema(format!("line {line} column id: duplicate id {id:?}")));
        }
        let score_text = cell(1).ok_or_else(|| schema(format!("line {line} column score: empty")))?;
        let score: f64 = score_text.parse().ok().filter(|s: &f64| s.is_finite()).ok_or_else(|| bad("score", score_text))?;
        let group = match idx[2] {
            Some(_) => cell(2).ok_or_else(|| schema(format!("line {line} column group: empty")))?,
            None => SINGLE_GROUP,
        };
        let mut inst = LabeledInstance::new(id, score, group);
        if let Some(v) = cell(3) {
            inst = inst.with_outcome(parse_bool(v).ok_or_else(|| bad("y", v))?);
        } else if required.contains(&"y") {
            return Err(schema(format!("line {line} column y: empty")));
        }
        if let Some(v) = cell(4) {
            inst = inst.with_stratum(v);
        }
        if let Some(v) = cell(5) {
            let p: f64 = v.parse().ok().filter(|p| (0.0..=1.0).contains(p)).ok_or_else(|| bad("p_hat", v))?;
            inst = inst.with_calibrated(p);
        } else if required.contains(&"p_hat") {
            return Err(schema(format!("line {line} column p_hat: empty")));
        }
        if let Some(v) = cell(6) {
            inst = inst.with_decision(parse_bool(v).ok_or_else(|| bad("decision", v))?);
        } else if required.contains(&"decision") {
            return Err(schema(format!("line {line} column decision: empty")));
        }
        table.instances.push(inst);
    }
    Ok(table)
}

/// Writes the columns any instance fills, in the fixed column order.
pub fn write_table(path: &Path, instances: &[LabeledInstance]) -> Result<(), CliError> {
    let present = [
        true,
        true,
        true,
        instances.iter().any(|i| i.outcome.is_some()),
        instances.iter().any(|i| i.stratum.is_some()),
        instances.iter().any(|i| i.calibrated_p.is_some()),
        instances.iter().any(|i| i.decision.is_some()),
    ];
    let io = |e: csv::Error| CliError::Io { path: path.to_path_buf(), source: e.into() };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let header: Vec<&str> = COLUMNS.iter().zip(present).filter(|(_, p)| *p).map(|(c, _)| *c).collect();
    w.write_record(&header).map_err(io)?;
    let flag = |b: Option<bool>| b.map_or(String::new(), |b| (b as u8).to_string());
    for i in instances {
        let all = [
            i.id.clone(),
            i.raw_score.to_string(),
            i.group.to_string(),
            flag(i.outcome),
            i.stratum.clone().unwrap_or_default(),
            i.calibrated_p.map_or(String::new(), |p| p.to_string()),
            flag(i.decision),
        ];
        let rec: Vec<&String> = all.iter().zip(present).filter(|(_, p)| *p).map(|(v, _)| v).collect();
        w.write_record(rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
