//! File formats: CSV readers and writers for predictions, embeddings, and
//! generated benchmarks, plus JSONL report streams.
//!
//! Prediction CSVs carry a `label` column followed by either `p0..p{K-1}`
//! (probabilities) or `z0..z{K-1}` (logits); the column prefix selects the
//! interpretation. Probability rows are repaired only within a 1e-6 drift
//! budget; anything worse is a validation error naming the offending data
//! row (1-based, header excluded). Floats are written with Rust's shortest
//! round-trip formatting, so write-then-read reproduces values exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::PredictionSet;
use crate::mixsim::{Benchmark, MixSample, MixSet, MixWorld, OneHotSample};
use crate::reannotate::EmbeddingSet;
use crate::simplex::{LogitVector, ProbVector};
use crate::tempscale::apply_temperature;

/// Contents of a prediction CSV, preserving whether the file carried
/// probabilities or raw logits.
#[derive(Debug, Clone)]
pub enum PredictionsFile {
    Probabilities(PredictionSet),
    Logits {
        logits: Vec<LogitVector>,
        labels: Vec<usize>,
    },
}

impl PredictionsFile {
    pub fn n_rows(&self) -> usize {
        match self {
            PredictionsFile::Probabilities(set) => set.len(),
            PredictionsFile::Logits { labels, .. } => labels.len(),
        }
    }

    /// View as probabilities, softmaxing logit rows at temperature 1.
    pub fn to_prediction_set(&self) -> Result<PredictionSet> {
        match self {
            PredictionsFile::Probabilities(set) => Ok(set.clone()),
            PredictionsFile::Logits { logits, labels } => {
                PredictionSet::new(apply_temperature(logits, 1.0)?, labels.to_vec())
            }
        }
    }

    /// The logit rows, when the file carried logits.
    pub fn logit_rows(&self) -> Option<(&[LogitVector], &[usize])> {
        match self {
            PredictionsFile::Logits { logits, labels } => Some((logits, labels)),
            PredictionsFile::Probabilities(_) => None,
        }
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

/// Check a header of the form `<label_col>,<prefix>0,<prefix>1,...` and
/// return the column count after the label.
fn check_header(header: &csv::StringRecord, label_col: &str, prefix: &str) -> Result<usize> {
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header needs a label column and at least one {prefix} column"
            ),
        });
    }
    if header.get(0) != Some(label_col) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "first column must be '{label_col}', got '{}'",
                header.get(0).unwrap_or("")
            ),
        });
    }
    for (i, name) in header.iter().skip(1).enumerate() {
        let expected = format!("{prefix}{i}");
        if name != expected {
            return Err(Error::Parse {
                line: 1,
                message: format!("column {} must be '{expected}', got '{name}'", i + 1),
            });
        }
    }
    Ok(header.len() - 1)
}

fn parse_label(field: &str, row: usize) -> Result<usize> {
    field.parse::<usize>().map_err(|_| Error::Parse {
        line: row,
        message: format!("label '{field}' is not a non-negative integer"),
    })
}

fn parse_float(field: &str, row: usize, column: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse {
        line: row,
        message: format!("{column} value '{field}' is not a number"),
    })
}

fn numeric_row(
    record: &csv::StringRecord,
    width: usize,
    row: usize,
) -> Result<(usize, Vec<f64>)> {
    if record.len() != width + 1 {
        return Err(Error::Parse {
            line: row,
            message: format!(
                "expected {} fields, got {}",
                width + 1,
                record.len()
            ),
        });
    }
    let label = parse_label(record.get(0).unwrap_or(""), row)?;
    let mut values = Vec::with_capacity(width);
    for (i, field) in record.iter().skip(1).enumerate() {
        values.push(parse_float(field, row, &format!("column {}", i + 1))?);
    }
    Ok((label, values))
}

/// Read a prediction CSV from any reader. The second header column decides
/// the mode: `p0` means probabilities, `z0` means logits.
pub fn read_predictions<R: Read>(reader: R) -> Result<PredictionsFile> {
    read_predictions_named(reader, "label")
}

/// [`read_predictions`] with a caller-chosen name for the label column.
pub fn read_predictions_named<R: Read>(reader: R, label_col: &str) -> Result<PredictionsFile> {
    let mut csv = csv_reader(reader);
    let header = csv
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mode = header.get(1).map(|name| name.chars().next()).flatten();
    match mode {
        Some('p') => {
            let k = check_header(&header, label_col, "p")?;
            let mut probs = Vec::new();
            let mut labels = Vec::new();
            for (i, record) in csv.records().enumerate() {
                let row = i + 1;
                let record = record.map_err(|e| Error::Parse {
                    line: row,
                    message: e.to_string(),
                })?;
                let (label, values) = numeric_row(&record, k, row)?;
                let p = ProbVector::normalized(values).map_err(|e| Error::Validation {
                    row,
                    message: e.to_string(),
                })?;
                probs.push(p);
                labels.push(label);
            }
            Ok(PredictionsFile::Probabilities(PredictionSet::new(
                probs, labels,
            )?))
        }
        Some('z') => {
            let k = check_header(&header, label_col, "z")?;
            let mut logits = Vec::new();
            let mut labels = Vec::new();
            for (i, record) in csv.records().enumerate() {
                let row = i + 1;
                let record = record.map_err(|e| Error::Parse {
                    line: row,
                    message: e.to_string(),
                })?;
                let (label, values) = numeric_row(&record, k, row)?;
                let z = LogitVector::new(values).map_err(|e| Error::Validation {
                    row,
                    message: e.to_string(),
                })?;
                logits.push(z);
                labels.push(label);
            }
            Ok(PredictionsFile::Logits { logits, labels })
        }
        _ => Err(Error::Parse {
            line: 1,
            message: format!(
                "second column must start with 'p' (probabilities) or 'z' (logits), got '{}'",
                header.get(1).unwrap_or("")
            ),
        }),
    }
}

pub fn read_predictions_path(path: &Path) -> Result<PredictionsFile> {
    read_predictions(BufReader::new(File::open(path)?))
}

/// Write a prediction set as a probability CSV (`label,p0,...`).
pub fn write_predictions<W: Write>(writer: W, set: &PredictionSet) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let k = set.n_classes();
    let mut header = vec!["label".to_string()];
    header.extend((0..k).map(|i| format!("p{i}")));
    out.write_record(&header)?;
    for (p, &label) in set.probs().iter().zip(set.labels()) {
        let mut record = vec![label.to_string()];
        record.extend(p.iter().map(|v| format!("{v}")));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Read an embedding CSV (`label,e0,...,e{d-1}`).
pub fn read_embeddings<R: Read>(reader: R) -> Result<EmbeddingSet> {
    let mut csv = csv_reader(reader);
    let header = csv
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let dim = check_header(&header, "label", "e")?;
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            line: row,
            message: e.to_string(),
        })?;
        let (label, values) = numeric_row(&record, dim, row)?;
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation {
                row,
                message: format!("embedding entry {bad} is not finite"),
            });
        }
        vectors.push(values);
        labels.push(label);
    }
    EmbeddingSet::new(vectors, labels)
}

pub fn read_embeddings_path(path: &Path) -> Result<EmbeddingSet> {
    read_embeddings(BufReader::new(File::open(path)?))
}

pub fn write_embeddings<W: Write>(writer: W, set: &EmbeddingSet) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string()];
    header.extend((0..set.dim()).map(|i| format!("e{i}")));
    out.write_record(&header)?;
    for (v, &label) in set.vectors().iter().zip(set.labels()) {
        let mut record = vec![label.to_string()];
        record.extend(v.iter().map(|x| format!("{x}")));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Serialize items as JSON Lines: one object per line, fields in struct
/// declaration order.
pub fn write_jsonl<W: Write, T: Serialize>(writer: W, items: &[T]) -> Result<()> {
    let mut out = BufWriter::new(writer);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: Read, T: DeserializeOwned>(reader: R) -> Result<Vec<T>> {
    let mut items = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

/// On-disk layout of a generated benchmark:
/// `world.json` (the world), `mixed.csv` (one row per mixed sample with its
/// set index, class pair, and both coefficients), `onehot.csv`.
pub fn write_benchmark(dir: &Path, world: &MixWorld, benchmark: &Benchmark) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let world_json = serde_json::to_string_pretty(world).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    std::fs::write(dir.join("world.json"), world_json)?;

    let mut mixed = csv::Writer::from_writer(BufWriter::new(File::create(
        dir.join("mixed.csv"),
    )?));
    let mut header = vec![
        "set".to_string(),
        "class_i".to_string(),
        "class_j".to_string(),
        "lambda_hat".to_string(),
        "lambda_true".to_string(),
    ];
    header.extend((0..world.dim()).map(|i| format!("x{i}")));
    mixed.write_record(&header)?;
    for (set_index, set) in benchmark.sets.iter().enumerate() {
        for sample in &set.samples {
            let mut record = vec![
                set_index.to_string(),
                set.class_i.to_string(),
                set.class_j.to_string(),
                format!("{}", sample.lambda_hat),
                format!("{}", sample.lambda_true),
            ];
            record.extend(sample.x.iter().map(|v| format!("{v}")));
            mixed.write_record(&record)?;
        }
    }
    mixed.flush()?;

    let mut onehot = csv::Writer::from_writer(BufWriter::new(File::create(
        dir.join("onehot.csv"),
    )?));
    let mut header = vec!["label".to_string()];
    header.extend((0..world.dim()).map(|i| format!("x{i}")));
    onehot.write_record(&header)?;
    for sample in &benchmark.onehot {
        let mut record = vec![sample.label.to_string()];
        record.extend(sample.x.iter().map(|v| format!("{v}")));
        onehot.write_record(&record)?;
    }
    onehot.flush()?;
    Ok(())
}

/// Read a benchmark directory written by [`write_benchmark`]. Values come
/// back bit-identical.
pub fn read_benchmark(dir: &Path) -> Result<(MixWorld, Benchmark)> {
    let world: MixWorld = serde_json::from_str(&std::fs::read_to_string(
        dir.join("world.json"),
    )?)
    .map_err(|e| Error::Parse {
        line: 0,
        message: format!("world.json: {e}"),
    })?;
    let dim = world.dim();

    let mut mixed = csv_reader(BufReader::new(File::open(dir.join("mixed.csv"))?));
    let mut sets: Vec<MixSet> = Vec::new();
    for (i, record) in mixed.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            line: row,
            message: e.to_string(),
        })?;
        if record.len() != dim + 5 {
            return Err(Error::Parse {
                line: row,
                message: format!("expected {} fields, got {}", dim + 5, record.len()),
            });
        }
        let set_index = parse_label(record.get(0).unwrap_or(""), row)?;
        let class_i = parse_label(record.get(1).unwrap_or(""), row)?;
        let class_j = parse_label(record.get(2).unwrap_or(""), row)?;
        let lambda_hat = parse_float(record.get(3).unwrap_or(""), row, "lambda_hat")?;
        let lambda_true = parse_float(record.get(4).unwrap_or(""), row, "lambda_true")?;
        let mut x = Vec::with_capacity(dim);
        for (d, field) in record.iter().skip(5).enumerate() {
            x.push(parse_float(field, row, &format!("x{d}"))?);
        }
        if set_index == sets.len() {
            sets.push(MixSet {
                class_i,
                class_j,
                samples: Vec::new(),
            });
        } else if set_index + 1 != sets.len() {
            return Err(Error::Validation {
                row,
                message: format!("set index {set_index} is out of order"),
            });
        }
        let set = sets.last_mut().expect("just ensured nonempty");
        if set.class_i != class_i || set.class_j != class_j {
            return Err(Error::Validation {
                row,
                message: format!(
                    "class pair ({class_i}, {class_j}) disagrees with set {set_index}"
                ),
            });
        }
        set.samples.push(MixSample {
            x,
            lambda_hat,
            lambda_true,
        });
    }

    let mut onehot_csv = csv_reader(BufReader::new(File::open(dir.join("onehot.csv"))?));
    let header = onehot_csv
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let width = check_header(&header, "label", "x")?;
    if width != dim {
        return Err(Error::Parse {
            line: 1,
            message: format!("onehot.csv has dimension {width}, world has {dim}"),
        });
    }
    let mut onehot = Vec::new();
    for (i, record) in onehot_csv.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            line: row,
            message: e.to_string(),
        })?;
        let (label, x) = numeric_row(&record, dim, row)?;
        if label >= world.n_classes() {
            return Err(Error::Validation {
                row,
                message: format!(
                    "label {label} out of range for {} classes",
                    world.n_classes()
                ),
            });
        }
        onehot.push(OneHotSample { x, label });
    }
    Ok((world, Benchmark { sets, onehot }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixsim::{build_benchmark, lambda_grid, BenchmarkConfig};

    fn probs_csv() -> &'static str {
        "label,p0,p1,p2\n0,0.7,0.2,0.1\n2,0.25,0.25,0.5\n"
    }

    #[test]
    fn reads_probability_files() {
        let file = read_predictions(probs_csv().as_bytes()).unwrap();
        let set = match &file {
            PredictionsFile::Probabilities(set) => set,
            other => panic!("wrong mode: {other:?}"),
        };
        assert_eq!(set.len(), 2);
        assert_eq!(set.labels(), &[0, 2]);
        assert_eq!(set.probs()[0].as_slice(), &[0.7, 0.2, 0.1]);
    }

    #[test]
    fn reads_logit_files_and_softmaxes_on_demand() {
        let file =
            read_predictions("label,z0,z1\n0,2.0,0.0\n1,-1.0,4.0\n".as_bytes()).unwrap();
        let (logits, labels) = file.logit_rows().unwrap();
        assert_eq!(labels, &[0, 1]);
        assert_eq!(logits[0].as_slice(), &[2.0, 0.0]);
        let set = file.to_prediction_set().unwrap();
        assert!((set.probs()[0].get(0) - 0.8807970779778823).abs() < 1e-12);
    }

    #[test]
    fn header_prefix_selects_mode_strictly() {
        assert!(read_predictions("label,q0,q1\n0,1.0,0.0\n".as_bytes()).is_err());
        assert!(read_predictions("label,p0,p2\n0,1.0,0.0\n".as_bytes()).is_err());
        assert!(read_predictions("score,p0,p1\n0,1.0,0.0\n".as_bytes()).is_err());
        assert!(read_predictions("label\n0\n".as_bytes()).is_err());
    }

    #[test]
    fn simplex_violation_names_the_row() {
        let bad = "label,p0,p1\n0,0.5,0.5\n1,0.9,0.2\n";
        match read_predictions(bad.as_bytes()) {
            Err(Error::Validation { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected a validation error, got {other:?}"),
        }
        // Drift within the 1e-6 budget is repaired, not rejected.
        let ok = "label,p0,p1\n0,0.5000002,0.5\n";
        let file = read_predictions(ok.as_bytes()).unwrap();
        let set = file.to_prediction_set().unwrap();
        let sum: f64 = set.probs()[0].as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parse_errors_name_the_row() {
        match read_predictions("label,p0,p1\n0,0.5,0.5\nx,0.5,0.5\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
        match read_predictions("label,p0,p1\n0,0.5\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn predictions_round_trip_bitwise() {
        let file = read_predictions(probs_csv().as_bytes()).unwrap();
        let set = match file {
            PredictionsFile::Probabilities(set) => set,
            _ => unreachable!(),
        };
        let mut buf = Vec::new();
        write_predictions(&mut buf, &set).unwrap();
        let again = read_predictions(buf.as_slice()).unwrap();
        let set2 = match again {
            PredictionsFile::Probabilities(set) => set,
            _ => unreachable!(),
        };
        assert_eq!(set.labels(), set2.labels());
        for (a, b) in set.probs().iter().zip(set2.probs()) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }

    #[test]
    fn embeddings_round_trip_bitwise() {
        let set = EmbeddingSet::new(
            vec![vec![0.1, -2.5, 3.0], vec![1.0 / 3.0, 0.0, -0.7]],
            vec![0, 1],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &set).unwrap();
        let again = read_embeddings(buf.as_slice()).unwrap();
        assert_eq!(set.labels(), again.labels());
        for (a, b) in set.vectors().iter().zip(again.vectors()) {
            assert_eq!(a, b);
        }
        assert!(read_embeddings("label,e0\n0,inf\n".as_bytes()).is_err());
    }

    #[test]
    fn jsonl_round_trips_and_counts_lines() {
        #[derive(Serialize, serde::Deserialize, PartialEq, Debug)]
        struct Row {
            a: usize,
            b: f64,
        }
        let rows = vec![Row { a: 1, b: 0.5 }, Row { a: 2, b: 1.0 / 3.0 }];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &rows).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2);
        let back: Vec<Row> = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        let bad: Result<Vec<Row>> = read_jsonl("{\"a\":1,\"b\":0.5}\nnope\n".as_bytes());
        match bad {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn benchmark_directory_round_trips_bitwise() {
        let world = MixWorld::regular(3, 3, 2.0, 0.7, 2.0, 99).unwrap();
        let config = BenchmarkConfig {
            n_sets: 4,
            lambdas: lambda_grid(5).unwrap(),
            onehot_per_class: 3,
        };
        let bench = build_benchmark(&world, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_benchmark(dir.path(), &world, &bench).unwrap();
        let (world2, bench2) = read_benchmark(dir.path()).unwrap();
        assert_eq!(
            serde_json::to_string(&world).unwrap(),
            serde_json::to_string(&world2).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&bench).unwrap(),
            serde_json::to_string(&bench2).unwrap()
        );
    }
}
