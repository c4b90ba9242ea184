//! Benchmark loaders.
//!
//! StrategyQA: a JSON array or JSON lines of `{"qid"?, "question", "answer"}`
//! where `answer` is a boolean or one of true/false/yes/no.
//!
//! MMLU: headerless CSV rows `question,A,B,C,D,answer` (a single file or a
//! directory of `<subject>_<split>.csv` files), or JSON lines of
//! `{"question", "choices", "answer", "subject"?}`. Letters A-D map to 0-3.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::HarnessError;
use crate::record::{DatasetKind, QuestionRecord};

fn row_error(path: &Path, row: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Row { path: path.to_path_buf(), row, message: message.into() }
}

/// Case-insensitive true/false/yes/no.
pub fn parse_bool(text: &str) -> Option<bool> {
    match text.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" => Some(true),
        "false" | "no" => Some(false),
        _ => None,
    }
}

/// `A`-`D` (either case) or `0`-`3`.
pub fn parse_choice(text: &str) -> Option<usize> {
    let t = text.trim();
    match t.to_ascii_uppercase().as_str() {
        "A" => Some(0),
        "B" => Some(1),
        "C" => Some(2),
        "D" => Some(3),
        _ => t.parse::<usize>().ok().filter(|i| *i < 4),
    }
}

/// Rows of a JSON array file, or of a JSON-lines file, numbered from 1.
fn json_rows(path: &Path) -> Result<Vec<(usize, Value)>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
    if text.trim_start().starts_with('[') {
        let rows: Vec<Value> = serde_json::from_str(&text).map_err(|e| row_error(path, e.line(), e.to_string()))?;
        return Ok(rows.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect());
    }
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(line).map_err(|e| row_error(path, i + 1, e.to_string()))?;
        rows.push((i + 1, v));
    }
    Ok(rows)
}

fn text_field<'a>(path: &Path, row: usize, v: &'a Value, key: &str) -> Result<&'a str, HarnessError> {
    v.get(key)
        .and_then(Value::as_str)
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| row_error(path, row, format!("missing or empty string field {key:?}")))
}

pub fn load_strategyqa(path: &Path) -> Result<Vec<QuestionRecord>, HarnessError> {
    json_rows(path)?
        .into_iter()
        .map(|(row, v)| {
            let question = text_field(path, row, &v, "question")?;
            let gold = match v.get("answer") {
                Some(Value::Bool(b)) => *b,
                Some(Value::String(s)) => {
                    parse_bool(s).ok_or_else(|| row_error(path, row, format!("cannot read {s:?} as a boolean")))?
                }
                other => return Err(row_error(path, row, format!("bad answer field: {other:?}"))),
            };
            let id = v
                .get("qid")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("strategyqa-{row}"));
            Ok(QuestionRecord::strategyqa(id, question.trim(), gold))
        })
        .collect()
}

/// Question text with the four options listed by index.
pub fn mmlu_text(question: &str, choices: &[String]) -> String {
    let mut out = question.trim().to_string();
    for (i, c) in choices.iter().enumerate() {
        out.push_str(&format!("\n({i}) {}", c.trim()));
    }
    out
}

fn subject_from_file(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let subject = ["_test", "_dev", "_val", "_auxiliary_train", "_train"]
        .iter()
        .find_map(|s| stem.strip_suffix(s))
        .unwrap_or(stem);
    Some(subject.to_string())
}

fn load_mmlu_csv(path: &Path) -> Result<Vec<QuestionRecord>, HarnessError> {
    let subject = subject_from_file(path);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| row_error(path, 0, e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| row_error(path, row, e.to_string()))?;
        if rec.len() != 6 {
            return Err(row_error(path, row, format!("expected 6 columns, found {}", rec.len())));
        }
        let gold = parse_choice(&rec[5]).ok_or_else(|| row_error(path, row, format!("bad answer {:?}", &rec[5])))?;
        let choices: Vec<String> = (1..5).map(|c| rec[c].to_string()).collect();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mmlu");
        out.push(QuestionRecord::mmlu(format!("{stem}-{row}"), mmlu_text(&rec[0], &choices), gold, subject.clone()));
    }
    Ok(out)
}

fn load_mmlu_jsonl(path: &Path) -> Result<Vec<QuestionRecord>, HarnessError> {
    json_rows(path)?
        .into_iter()
        .map(|(row, v)| {
            let question = text_field(path, row, &v, "question")?;
            let choices: Vec<String> = v
                .get("choices")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(|c| c.as_str().map(str::to_string)).collect())
                .unwrap_or_default();
            if choices.len() != 4 {
                return Err(row_error(path, row, "expected four string choices"));
            }
            let gold = match v.get("answer") {
                Some(Value::Number(n)) => n.as_u64().map(|n| n as usize).filter(|n| *n < 4),
                Some(Value::String(s)) => parse_choice(s),
                _ => None,
            }
            .ok_or_else(|| row_error(path, row, format!("bad answer field: {:?}", v.get("answer"))))?;
            let subject = v.get("subject").and_then(Value::as_str).map(str::to_string);
            let id = v
                .get("id")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("mmlu-{row}"));
            Ok(QuestionRecord::mmlu(id, mmlu_text(question, &choices), gold, subject))
        })
        .collect()
}

/// Loads a CSV file, a directory of CSV files (sorted by name), or JSON lines.
pub fn load_mmlu(path: &Path) -> Result<Vec<QuestionRecord>, HarnessError> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            out.extend(load_mmlu_csv(&f)?);
        }
        return Ok(out);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => load_mmlu_csv(path),
        _ => load_mmlu_jsonl(path),
    }
}

pub fn load_dataset(kind: DatasetKind, path: &Path) -> Result<Vec<QuestionRecord>, HarnessError> {
    let records = match kind {
        DatasetKind::StrategyQa => load_strategyqa(path)?,
        DatasetKind::Mmlu => load_mmlu(path)?,
    };
    if records.is_empty() {
        return Err(HarnessError::Validation(format!("{} holds no records", path.display())));
    }
    Ok(records)
}

/// Normalized records as JSON lines.
pub fn save_records(path: &Path, records: &[QuestionRecord]) -> Result<(), HarnessError> {
    let io = |e| HarnessError::Io { path: path.to_path_buf(), source: e };
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r).expect("records serialize")).map_err(io)?;
    }
    f.flush().map_err(io)
}

pub fn load_records(path: &Path) -> Result<Vec<QuestionRecord>, HarnessError> {
    let io = |e| HarnessError::Io { path: path.to_path_buf(), source: e };
    let f = fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| row_error(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::Label;

    #[test]
    fn strategyqa_rows_and_bool_spellings() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        fs::write(
            &p,
            r#"[{"qid":"a","question":"Q1?","answer":true},{"question":"Q2?","answer":"No"},{"question":"Q3?","answer":"YES"}]"#,
        )
        .unwrap();
        let r = load_strategyqa(&p).unwrap();
        assert_eq!(r[0].gold, Label::from("True"));
        assert_eq!(r[0].question_id, "a");
        assert_eq!(r[1].gold, Label::from("False"));
        assert_eq!(r[1].question_id, "strategyqa-2");
        assert_eq!(r[2].gold, Label::from("True"));
    }

    #[test]
    fn strategyqa_bad_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        fs::write(&p, "{\"question\":\"ok?\",\"answer\":false}\n{\"question\":\"bad?\",\"answer\":\"maybe\"}\n").unwrap();
        let err = load_strategyqa(&p).unwrap_err();
        assert!(matches!(err, HarnessError::Row { row: 2, .. }), "{err}");
    }

    #[test]
    fn mmlu_letters_map_to_indices() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("astronomy_test.csv");
        fs::write(&p, "What orbits?,Sun,Moon,Mars,Venus,C\n\"Which, one?\",a,b,c,d,a\n").unwrap();
        let r = load_mmlu(dir.path()).unwrap();
        assert_eq!(r[0].gold, Label::from("2"));
        assert_eq!(r[1].gold, Label::from("0"));
        assert_eq!(r[0].subject.as_deref(), Some("astronomy"));
        assert!(r[0].text.contains("(2) Mars"));
        fs::write(&p, "What?,a,b,c,d,E\n").unwrap();
        assert!(matches!(load_mmlu(&p).unwrap_err(), HarnessError::Row { row: 1, .. }));
    }

    #[test]
    fn mmlu_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        fs::write(&p, r#"{"question":"Q?","choices":["w","x","y","z"],"answer":3,"subject":"law"}"#).unwrap();
        let r = load_mmlu(&p).unwrap();
        assert_eq!(r[0].gold, Label::from("3"));
        assert_eq!(r[0].subject.as_deref(), Some("law"));
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let recs = vec![
            QuestionRecord::strategyqa("a", "Q?", true),
            QuestionRecord::mmlu("b", "M?", 1, Some("law".into())),
        ];
        save_records(&p, &recs).unwrap();
        assert_eq!(load_records(&p).unwrap(), recs);
    }
}
