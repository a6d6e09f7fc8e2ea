//! On-disk formats: model checkpoints, JSONL datasets, score CSVs and
//! reports.
//!
//! `scores.csv` has the fixed header `id,fn,k,base_score,fsd_score,label`.
//! `k` is empty except for `mink`, `fsd_score` is empty when no fine-tuned
//! model was used, and `label` is 1 for members and 0 for non-members.
//!
//! `report.csv` has the header `fn,k,variant,metric,value`, optionally
//! preceded by a `size` (data-size ablation) or `transform` (shift study)
//! column.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use fsdlab_core::eval::{EvalReport, ScoreRecord};
use fsdlab_core::fsd::{Label, LabeledDataset};
use fsdlab_core::lm::checkpoint::{decode_model, encode_model};
use fsdlab_core::scoring::ScoreFunctionId;
use fsdlab_core::LanguageModel;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const SCORES_HEADER: [&str; 6] = ["id", "fn", "k", "base_score", "fsd_score", "label"];
pub const REPORT_HEADER: [&str; 5] = ["fn", "k", "variant", "metric", "value"];

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(LabError::io(path))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(LabError::io(dir))?;
    }
    fs::write(path, bytes).map_err(LabError::io(path))
}

pub fn save_model(path: &Path, model: &LanguageModel) -> Result<()> {
    write(path, &encode_model(model))
}

pub fn load_model(path: &Path) -> Result<LanguageModel> {
    decode_model(&read(path)?).map_err(|source| LabError::Checkpoint { path: path.into(), source })
}

#[derive(Serialize)]
struct JsonlOut<'a> {
    input: &'a str,
    label: u8,
}

#[derive(Deserialize)]
struct JsonlIn {
    input: String,
    label: serde_json::Value,
}

fn label_code(label: Label) -> u8 {
    match label {
        Label::Member => 1,
        Label::NonMember => 0,
    }
}

pub fn save_jsonl(path: &Path, ds: &LabeledDataset) -> Result<()> {
    let mut out = Vec::new();
    for e in ds.examples() {
        serde_json::to_writer(&mut out, &JsonlOut { input: &e.text, label: label_code(e.label) }).expect("record serializes");
        out.push(b'\n');
    }
    write(path, &out)
}

/// One `{"input": …, "label": 1|0}` object per line; blank lines are
/// skipped and ids are assigned by position.
pub fn load_jsonl(path: &Path) -> Result<LabeledDataset> {
    let file = fs::File::open(path).map_err(LabError::io(path))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(LabError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| LabError::MalformedLine { path: path.into(), line: i + 1, message };
        let rec: JsonlIn = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let label = match rec.label.as_i64() {
            Some(1) => Label::Member,
            Some(0) => Label::NonMember,
            _ => return Err(LabError::UnknownLabel { path: path.into(), line: i + 1, value: rec.label.to_string() }),
        };
        if rec.input.is_empty() {
            return Err(malformed("empty input text".into()));
        }
        items.push((rec.input, label));
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(LabeledDataset::from_texts(items, name)?)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> LabError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => LabError::Io { path: path.into(), source },
        other => LabError::MalformedLine { path: path.into(), line: 0, message: format!("{other:?}") },
    }
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = csv_err(path);
    w.write_record(SCORES_HEADER).map_err(&err)?;
    for r in records {
        w.write_record([
            r.id.to_string(),
            r.function.name().to_string(),
            r.function.k_percent().map(|k| k.to_string()).unwrap_or_default(),
            r.base_score.to_string(),
            r.fsd_score.map(|s| s.to_string()).unwrap_or_default(),
            label_code(r.label).to_string(),
        ])
        .map_err(&err)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io { path: path.into(), source: e.into_error() })?;
    write(path, &bytes)
}

/// Records plus the functions in order of first appearance.
pub fn read_scores(path: &Path) -> Result<(Vec<ScoreRecord>, Vec<ScoreFunctionId>)> {
    let bytes = read(path)?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let err = csv_err(path);
    let header = rdr.headers().map_err(&err)?.clone();
    if header.iter().ne(SCORES_HEADER) {
        return Err(LabError::MalformedLine {
            path: path.into(),
            line: 1,
            message: format!("expected header {}", SCORES_HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    let mut functions: Vec<ScoreFunctionId> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(&err)?;
        let line = i + 2;
        let bad = |message: String| LabError::MalformedLine { path: path.into(), line, message };
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(format!("bad {what} {s:?}")));
        let k = if row[2].is_empty() { None } else { Some(num(&row[2], "k")?) };
        let function = ScoreFunctionId::parse(&row[1], k).map_err(|e| bad(e.to_string()))?;
        let label = match &row[5] {
            "1" => Label::Member,
            "0" => Label::NonMember,
            other => return Err(LabError::UnknownLabel { path: path.into(), line, value: other.into() }),
        };
        if !functions.contains(&function) {
            functions.push(function);
        }
        records.push(ScoreRecord {
            id: row[0].parse().map_err(|_| bad(format!("bad id {:?}", &row[0])))?,
            function,
            base_score: num(&row[3], "base_score")?,
            fsd_score: if row[4].is_empty() { None } else { Some(num(&row[4], "fsd_score")?) },
            label,
        });
    }
    Ok((records, functions))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    write(path, &bytes)
}

/// Report rows, each prefixed by `prefix` values under `prefix_cols`.
pub fn write_report_csv(path: &Path, prefix_cols: &[&str], reports: &[(Vec<String>, &EvalReport)]) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(prefix_cols.iter().copied().chain(REPORT_HEADER)).map_err(&err)?;
    for (prefix, report) in reports {
        for (f, k, variant, metric, value) in report.rows() {
            let row = [f.to_string(), k.map(|k| k.to_string()).unwrap_or_default(), variant.into(), metric.into(), value.to_string()];
            w.write_record(prefix.iter().cloned().chain(row)).map_err(&err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io { path: path.into(), source: e.into_error() })?;
    write(path, &bytes)
}
