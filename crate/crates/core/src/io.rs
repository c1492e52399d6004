//! Reading and writing of datasets, alignments, attribution files, and
//! evaluation reports. All files are UTF-8; writers are deterministic and
//! atomic (temp file + rename).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::data::{
    AlignmentSet, AttributionVector, DatasetEntry, EvalReport, HighlightMask, Label, TokenizedPair,
};
use crate::error::{Error, Result};

/// Report serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `contents` to `path` via a temp file in the same directory followed
/// by a rename, so readers never observe a partial file.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let stamp = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp: PathBuf = match dir {
        Some(dir) => dir.join(format!(".{file_name}.{}.{stamp}.tmp", std::process::id())),
        None => PathBuf::from(format!(".{file_name}.{}.{stamp}.tmp", std::process::id())),
    };
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(contents).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Wire format of one dataset line.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetRecord {
    id: String,
    language: String,
    premise: Vec<String>,
    hypothesis: Vec<String>,
    label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    highlight: Option<Vec<bool>>,
}

/// Parses a JSON-lines dataset. Blank lines are not allowed; a `highlight`
/// field, when present, is surfaced as an attached [`HighlightMask`].
pub fn parse_dataset(path: &Path) -> Result<Vec<DatasetEntry>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let record: DatasetRecord = serde_json::from_str(line)
            .map_err(|e| parse_err(path, lineno, format!("malformed dataset line: {e}")))?;
        let label = Label::parse(&record.label)
            .ok_or_else(|| parse_err(path, lineno, format!("unknown label \"{}\"", record.label)))?;
        let word_count = record.premise.len() + record.hypothesis.len();
        let pair = TokenizedPair::new(
            record.id.clone(),
            record.language.clone(),
            record.premise,
            record.hypothesis,
            label,
        )
        .map_err(|e| parse_err(path, lineno, e.to_string()))?;
        let highlight = match record.highlight {
            Some(mask) => {
                if mask.len() != word_count {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!(
                            "highlight length {} does not match {} words",
                            mask.len(),
                            word_count
                        ),
                    ));
                }
                Some(HighlightMask::new(record.id, record.language, mask))
            }
            None => None,
        };
        entries.push(DatasetEntry { pair, highlight });
    }
    Ok(entries)
}

/// Writes a dataset as JSON-lines in entry order.
pub fn write_dataset(entries: &[DatasetEntry], path: &Path) -> Result<()> {
    let mut out = String::new();
    for entry in entries {
        let record = DatasetRecord {
            id: entry.pair.id.clone(),
            language: entry.pair.language.clone(),
            premise: entry.pair.premise_words.clone(),
            hypothesis: entry.pair.hypothesis_words.clone(),
            label: entry.pair.label.as_str().to_string(),
            highlight: entry.highlight.as_ref().map(|h| h.mask.clone()),
        };
        out.push_str(&serde_json::to_string(&record).expect("dataset record serializes"));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Parses a Pharaoh-style alignment file: `<instance_id>\t<k-j> <k-j> ...`
/// with zero-based indices over non-special word positions. The format does
/// not carry language codes, so the caller supplies them.
pub fn parse_alignments(
    path: &Path,
    source_language: &str,
    target_language: &str,
) -> Result<Vec<AlignmentSet>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut sets = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let (id, rest) = match line.split_once('\t') {
            Some((id, rest)) => (id, rest),
            None => (line, ""),
        };
        if id.is_empty() {
            return Err(parse_err(path, lineno, "empty instance id"));
        }
        let mut pairs = Vec::new();
        for token in rest.split_whitespace() {
            let (k, j) = token.split_once('-').ok_or_else(|| {
                parse_err(path, lineno, format!("malformed alignment pair \"{token}\""))
            })?;
            let k: usize = k.parse().map_err(|_| {
                parse_err(path, lineno, format!("invalid source index in \"{token}\""))
            })?;
            let j: usize = j.parse().map_err(|_| {
                parse_err(path, lineno, format!("invalid target index in \"{token}\""))
            })?;
            pairs.push((k, j));
        }
        sets.push(AlignmentSet::new(
            id,
            source_language,
            target_language,
            pairs,
        ));
    }
    Ok(sets)
}

/// Writes alignments in the Pharaoh format, pairs sorted.
pub fn write_alignments(sets: &[AlignmentSet], path: &Path) -> Result<()> {
    let mut out = String::new();
    for set in sets {
        out.push_str(&set.instance_id);
        out.push('\t');
        let pairs: Vec<String> = set.pairs.iter().map(|(k, j)| format!("{k}-{j}")).collect();
        out.push_str(&pairs.join(" "));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Parses an attribution file (JSON-lines of [`AttributionVector`]).
pub fn parse_attributions(path: &Path) -> Result<Vec<AttributionVector>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut vectors = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let v: AttributionVector = serde_json::from_str(line)
            .map_err(|e| parse_err(path, lineno, format!("malformed attribution line: {e}")))?;
        v.validate().map_err(|e| parse_err(path, lineno, e.to_string()))?;
        vectors.push(v);
    }
    Ok(vectors)
}

/// Writes attribution vectors as JSON-lines in input order.
pub fn write_attributions(vectors: &[AttributionVector], path: &Path) -> Result<()> {
    let mut out = String::new();
    for v in vectors {
        v.validate()?;
        out.push_str(&serde_json::to_string(v).expect("attribution vector serializes"));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Groups attribution vectors as language -> instance id -> vector.
pub fn attributions_by_language(
    vectors: Vec<AttributionVector>,
) -> BTreeMap<String, BTreeMap<String, AttributionVector>> {
    let mut map: BTreeMap<String, BTreeMap<String, AttributionVector>> = BTreeMap::new();
    for v in vectors {
        map.entry(v.language.clone())
            .or_default()
            .insert(v.instance_id.clone(), v);
    }
    map
}

/// Writes a report. JSON is the canonical round-trippable form; CSV is a
/// flat export with one `key,value` row per entry under `#`-marked sections,
/// empty sections omitted.
pub fn write_report(report: &EvalReport, path: &Path, format: ReportFormat) -> Result<()> {
    report.validate()?;
    match format {
        ReportFormat::Json => {
            let mut text =
                serde_json::to_string_pretty(report).expect("report serializes to JSON");
            text.push('\n');
            atomic_write(path, text.as_bytes())
        }
        ReportFormat::Csv => atomic_write(path, report_csv(report).as_bytes()),
    }
}

/// Reads back a JSON report.
pub fn read_report_json(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let report: EvalReport =
        serde_json::from_str(&text).map_err(|e| parse_err(path, 1, format!("bad report: {e}")))?;
    report.validate()?;
    Ok(report)
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn report_csv(report: &EvalReport) -> String {
    let mut out = String::new();
    if !report.config.is_empty() {
        out.push_str("# config\n");
        for (key, value) in &report.config {
            let rendered = match value {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push_str(&format!("{},{}\n", csv_field(key), csv_field(&rendered)));
        }
    }
    if !report.metrics.is_empty() {
        out.push_str("# metrics\n");
        for (key, value) in &report.metrics {
            out.push_str(&format!("{},{}\n", csv_field(key), value));
        }
    }
    if !report.per_language.is_empty() {
        out.push_str("# per_language\n");
        for (lang, value) in &report.per_language {
            out.push_str(&format!("{},{}\n", csv_field(lang), value));
        }
    }
    if !report.per_instance.is_empty() {
        out.push_str("# per_instance\n");
        for (id, value) in &report.per_instance {
            out.push_str(&format!("{},{}\n", csv_field(id), value));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_lines(path: &Path, lines: &[&str]) {
        fs::write(path, lines.join("\n") + "\n").unwrap();
    }

    #[test]
    fn parse_simple_dataset_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write_lines(
            &path,
            &[r#"{"id":"e1","language":"en","premise":["a","b"],"hypothesis":["a"],"label":"entailment"}"#],
        );
        let entries = parse_dataset(&path).unwrap();
        assert_eq!(entries.len(), 1);
        let pair = &entries[0].pair;
        assert_eq!(pair.word_count(), 3);
        assert_eq!(pair.label, Label::Entailment);
        assert!(entries[0].highlight.is_none());
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        fs::write(&path, "").unwrap();
        assert!(parse_dataset(&path).unwrap().is_empty());
    }

    #[test]
    fn unknown_label_names_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write_lines(
            &path,
            &[r#"{"id":"e1","language":"en","premise":["a"],"hypothesis":["b"],"label":"maybe"}"#],
        );
        let err = parse_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("unknown label"), "{err}");
        assert!(err.contains(":1"), "{err}");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write_lines(
            &path,
            &[
                r#"{"id":"e1","language":"en","premise":["a"],"hypothesis":["b"],"label":"neutral"}"#,
                "{not json",
            ],
        );
        let err = parse_dataset(&path).unwrap_err().to_string();
        assert!(err.contains(":2"), "{err}");
    }

    #[test]
    fn highlight_length_mismatch_is_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write_lines(
            &path,
            &[r#"{"id":"e1","language":"en","premise":["a"],"hypothesis":["b"],"label":"neutral","highlight":[true]}"#],
        );
        assert!(parse_dataset(&path).is_err());
    }

    #[test]
    fn alignment_parse_cases() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("align.tsv");
        write_lines(&path, &["e1\t0-0 1-2 1-3", "e2\t", "e3\t0-0 0-0"]);
        let sets = parse_alignments(&path, "en", "de").unwrap();
        assert_eq!(sets.len(), 3);
        assert_eq!(
            sets[0].pairs,
            [(0, 0), (1, 2), (1, 3)].into_iter().collect()
        );
        assert!(sets[1].pairs.is_empty());
        assert_eq!(sets[2].pairs.len(), 1);
        assert_eq!(sets[0].source_language, "en");
        assert_eq!(sets[0].target_language, "de");
    }

    #[test]
    fn alignment_bad_index_is_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("align.tsv");
        write_lines(&path, &["e1\t0-x"]);
        assert!(parse_alignments(&path, "en", "de").is_err());
        write_lines(&path, &["e1\t-1-2"]);
        assert!(parse_alignments(&path, "en", "de").is_err());
    }

    #[test]
    fn report_csv_shape() {
        let mut report = EvalReport::new();
        report.set_config("method", "occlusion");
        report.metrics.insert("rho_overall".into(), 0.5);
        report.per_language.insert("de".into(), 0.5);
        let dir = tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report(&report, &path, ReportFormat::Csv).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().any(|l| l == "de,0.5"), "{text}");
        assert!(!text.contains("per_instance"));
    }

    #[test]
    fn report_writes_are_deterministic() {
        let mut report = EvalReport::new();
        report.set_config("seed", 7);
        report.metrics.insert("rho_overall".into(), 0.25);
        report.per_instance.insert("e1".into(), 0.1);
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        write_report(&report, &a, ReportFormat::Json).unwrap();
        write_report(&report, &b, ReportFormat::Json).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let parsed = read_report_json(&a).unwrap();
        assert_eq!(parsed, report);
    }
}
