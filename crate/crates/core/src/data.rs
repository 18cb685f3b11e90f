//! Epileptic Seizure Recognition dataset handling: CSV parsing, label
//! grouping, stratified train/validation/test splits, and normalization.
//!
//! The expected file is comma-separated with one header row, an optional
//! leading ID column (auto-detected by its first field failing numeric
//! parse), 178 numeric sample columns, and one integer label column in
//! 1..=5 (classes A..E). The official file carries 11500 records, 2300 per
//! label.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Samples per EEG window.
pub const SAMPLES_PER_RECORD: usize = 178;
/// Record and per-label counts of the official file.
pub const OFFICIAL_RECORD_COUNT: usize = 11500;
pub const OFFICIAL_PER_LABEL_COUNT: usize = 2300;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: expected {expected} columns, got {got}")]
    WrongColumnCount {
        line: u64,
        expected: usize,
        got: usize,
    },
    #[error("line {line}, column {column}: non-numeric sample value {value:?}")]
    NonNumericSample {
        line: u64,
        column: usize,
        value: String,
    },
    #[error("line {line}: label {value:?} outside 1..=5")]
    LabelOutOfRange { line: u64, value: String },
    #[error("file {path} contains no data rows")]
    EmptyFile { path: String },
    #[error("split ratios must sum to 1, got {sum}")]
    RatioSum { sum: f64 },
    #[error("training data has zero standard deviation (constant values)")]
    ZeroStd,
    #[error("dataset has no split assignment; run a stratified split first")]
    MissingSplit,
    #[error("split {split} contains no records")]
    EmptySplit { split: Split },
    #[error(
        "dataset does not match the official shape: {records} records, per-label counts {counts:?}"
    )]
    NotOfficialShape {
        records: usize,
        counts: Vec<usize>,
    },
    #[error("split manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
}

/// One 178-sample EEG window with its raw class label (1..=5, A..E).
#[derive(Clone, Debug, PartialEq)]
pub struct EegRecord {
    pub id: Option<String>,
    pub samples: [f32; SAMPLES_PER_RECORD],
    pub label: u8,
}

/// Task grouping: the prediction task folds A/B into one healthy class and
/// drops inter-ictal C; the diagnosis task keeps all five classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupMode {
    ThreeClass,
    FiveClass,
}

impl fmt::Display for GroupMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupMode::ThreeClass => write!(f, "three-class"),
            GroupMode::FiveClass => write!(f, "five-class"),
        }
    }
}

impl FromStr for GroupMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "three" | "three-class" | "3" => Ok(GroupMode::ThreeClass),
            "five" | "five-class" | "5" => Ok(GroupMode::FiveClass),
            other => Err(format!("unknown group mode {other:?} (use three|five)")),
        }
    }
}

/// Label-to-target mapping for a group mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupMapping {
    pub mode: GroupMode,
}

impl GroupMapping {
    pub fn new(mode: GroupMode) -> Self {
        Self { mode }
    }

    pub fn class_count(&self) -> usize {
        match self.mode {
            GroupMode::ThreeClass => 3,
            GroupMode::FiveClass => 5,
        }
    }

    /// Target index for a raw label, or `None` when the label is excluded
    /// from the task.
    pub fn target_of(&self, label: u8) -> Option<usize> {
        match self.mode {
            GroupMode::ThreeClass => match label {
                1 | 2 => Some(0),
                4 => Some(1),
                5 => Some(2),
                _ => None,
            },
            GroupMode::FiveClass => match label {
                1..=5 => Some(label as usize - 1),
                _ => None,
            },
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        match self.mode {
            GroupMode::ThreeClass => vec!["healthy", "pre-ictal", "ictal"],
            GroupMode::FiveClass => vec!["A", "B", "C", "D", "E"],
        }
        .into_iter()
        .map(str::to_owned)
        .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split tag {other:?}")),
        }
    }
}

/// Scalar normalization statistics over all training sample values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// Apply `(x - mean) / std` to one window.
pub fn normalize(samples: &[f32; SAMPLES_PER_RECORD], stats: &NormStats) -> [f32; SAMPLES_PER_RECORD] {
    let mean = stats.mean as f32;
    let inv = (1.0 / stats.std) as f32;
    let mut out = [0.0f32; SAMPLES_PER_RECORD];
    for (o, &s) in out.iter_mut().zip(samples.iter()) {
        *o = (s - mean) * inv;
    }
    out
}

/// The labeled collection with its task mapping, split assignment, and
/// normalization statistics. Read-only after construction steps complete.
#[derive(Clone, Debug)]
pub struct EegDataset {
    pub records: Vec<EegRecord>,
    pub targets: Vec<usize>,
    pub mapping: GroupMapping,
    pub splits: Option<Vec<Split>>,
    pub norm: Option<NormStats>,
}

/// Parse a dataset CSV. Records keep file order; the initial mapping is
/// five-class identity.
pub fn load_csv(path: impl AsRef<Path>) -> Result<EegDataset, DataError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => DataError::Csv(e),
        })?;

    let mut records = Vec::new();
    let mut has_id: Option<bool> = None;

    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        // The first data row decides whether a leading ID column exists.
        let id_cols = *has_id.get_or_insert_with(|| {
            row.get(0)
                .map(|f| f64::from_str(f).is_err())
                .unwrap_or(false)
        }) as usize;

        let expected = id_cols + SAMPLES_PER_RECORD + 1;
        if row.len() != expected {
            return Err(DataError::WrongColumnCount {
                line,
                expected,
                got: row.len(),
            });
        }

        let id = (id_cols == 1).then(|| row.get(0).unwrap_or_default().to_owned());
        let mut samples = [0.0f32; SAMPLES_PER_RECORD];
        for (i, sample) in samples.iter_mut().enumerate() {
            let field = row.get(id_cols + i).unwrap_or_default();
            *sample = f32::from_str(field).map_err(|_| DataError::NonNumericSample {
                line,
                column: id_cols + i + 1,
                value: field.to_owned(),
            })?;
            if !sample.is_finite() {
                return Err(DataError::NonNumericSample {
                    line,
                    column: id_cols + i + 1,
                    value: field.to_owned(),
                });
            }
        }

        let label_field = row.get(id_cols + SAMPLES_PER_RECORD).unwrap_or_default();
        let label: u8 = label_field
            .parse::<i64>()
            .ok()
            .filter(|l| (1..=5).contains(l))
            .map(|l| l as u8)
            .ok_or_else(|| DataError::LabelOutOfRange {
                line,
                value: label_field.to_owned(),
            })?;

        records.push(EegRecord { id, samples, label });
    }

    if records.is_empty() {
        return Err(DataError::EmptyFile {
            path: path.display().to_string(),
        });
    }

    let targets = records.iter().map(|r| r.label as usize - 1).collect();
    Ok(EegDataset {
        records,
        targets,
        mapping: GroupMapping::new(GroupMode::FiveClass),
        splits: None,
        norm: None,
    })
}

/// Re-target a dataset for a task grouping; three-class mode drops label C
/// records. Idempotent. Clears any split assignment.
pub fn map_group(dataset: EegDataset, mode: GroupMode) -> EegDataset {
    let mapping = GroupMapping::new(mode);
    let mut records = Vec::with_capacity(dataset.records.len());
    let mut targets = Vec::with_capacity(dataset.records.len());
    for record in dataset.records {
        if let Some(target) = mapping.target_of(record.label) {
            records.push(record);
            targets.push(target);
        }
    }
    EegDataset {
        records,
        targets,
        mapping,
        splits: None,
        norm: dataset.norm,
    }
}

impl EegDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Raw label histogram indexed by label-1.
    pub fn label_histogram(&self) -> [usize; 5] {
        let mut counts = [0usize; 5];
        for r in &self.records {
            counts[r.label as usize - 1] += 1;
        }
        counts
    }

    /// Target histogram under the current mapping.
    pub fn target_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.mapping.class_count()];
        for &t in &self.targets {
            counts[t] += 1;
        }
        counts
    }

    /// Check the official 11500-record / 2300-per-label shape.
    pub fn verify_official_counts(&self) -> Result<(), DataError> {
        let counts = self.label_histogram();
        if self.records.len() != OFFICIAL_RECORD_COUNT
            || counts.iter().any(|&c| c != OFFICIAL_PER_LABEL_COUNT)
        {
            return Err(DataError::NotOfficialShape {
                records: self.records.len(),
                counts: counts.to_vec(),
            });
        }
        Ok(())
    }

    /// Deterministic label-stratified split. Per target class, validation
    /// and test sizes are `round(n * ratio)` and training takes the rest,
    /// so per-class proportions hold within one record.
    pub fn stratified_split(
        &mut self,
        ratios: (f64, f64, f64),
        seed: u64,
    ) -> Result<(), DataError> {
        let sum = ratios.0 + ratios.1 + ratios.2;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::RatioSum { sum });
        }

        let mut by_target: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (idx, &t) in self.targets.iter().enumerate() {
            by_target.entry(t).or_default().push(idx);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut splits = vec![Split::Train; self.records.len()];
        for indices in by_target.values_mut() {
            // Fisher-Yates with the shared seeded stream.
            for i in (1..indices.len()).rev() {
                let j = rng.random_range(0..=i);
                indices.swap(i, j);
            }
            let n = indices.len();
            let n_val = (n as f64 * ratios.1).round() as usize;
            let n_test = (n as f64 * ratios.2).round() as usize;
            for (pos, &idx) in indices.iter().enumerate() {
                splits[idx] = if pos < n_val {
                    Split::Val
                } else if pos < n_val + n_test {
                    Split::Test
                } else {
                    Split::Train
                };
            }
        }
        self.splits = Some(splits);
        Ok(())
    }

    pub fn indices_of(&self, split: Split) -> Result<Vec<usize>, DataError> {
        let splits = self.splits.as_ref().ok_or(DataError::MissingSplit)?;
        Ok(splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect())
    }

    pub fn split_sizes(&self) -> Result<(usize, usize, usize), DataError> {
        let splits = self.splits.as_ref().ok_or(DataError::MissingSplit)?;
        let mut sizes = (0, 0, 0);
        for s in splits {
            match s {
                Split::Train => sizes.0 += 1,
                Split::Val => sizes.1 += 1,
                Split::Test => sizes.2 += 1,
            }
        }
        Ok(sizes)
    }

    /// Scalar mean/std over every sample value in the training split,
    /// stored on the dataset and returned. Uses population variance.
    pub fn compute_norm_stats(&mut self) -> Result<NormStats, DataError> {
        let train = self.indices_of(Split::Train)?;
        if train.is_empty() {
            return Err(DataError::EmptySplit { split: Split::Train });
        }
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for &i in &train {
            for &v in &self.records[i].samples {
                sum += v as f64;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let mut var_sum = 0.0f64;
        for &i in &train {
            for &v in &self.records[i].samples {
                let d = v as f64 - mean;
                var_sum += d * d;
            }
        }
        let std = (var_sum / count as f64).sqrt();
        if std <= 0.0 || !std.is_finite() {
            return Err(DataError::ZeroStd);
        }
        let stats = NormStats { mean, std };
        self.norm = Some(stats);
        Ok(stats)
    }

    /// Write the split assignment as `<record index> <tag>` lines.
    pub fn save_split_manifest(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let splits = self.splits.as_ref().ok_or(DataError::MissingSplit)?;
        let mut out = String::with_capacity(splits.len() * 8);
        for (i, s) in splits.iter().enumerate() {
            out.push_str(&format!("{i} {s}\n"));
        }
        fs::write(path.as_ref(), out).map_err(|e| DataError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })
    }

    /// Load a split manifest written by [`EegDataset::save_split_manifest`]
    /// and attach it to this dataset.
    pub fn load_split_manifest(&mut self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| DataError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })?;
        let mut splits = vec![None; self.records.len()];
        for (line_no, line) in text.lines().enumerate() {
            let line_no = line_no + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let idx: usize = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| DataError::BadManifest {
                    line: line_no,
                    reason: "missing or non-numeric record index".into(),
                })?;
            let tag: Split = parts
                .next()
                .ok_or_else(|| DataError::BadManifest {
                    line: line_no,
                    reason: "missing split tag".into(),
                })?
                .parse()
                .map_err(|reason| DataError::BadManifest {
                    line: line_no,
                    reason,
                })?;
            if idx >= splits.len() {
                return Err(DataError::BadManifest {
                    line: line_no,
                    reason: format!("record index {idx} out of range ({} records)", splits.len()),
                });
            }
            splits[idx] = Some(tag);
        }
        let splits: Option<Vec<Split>> = splits.into_iter().collect();
        match splits {
            Some(s) => {
                self.splits = Some(s);
                Ok(())
            }
            None => Err(DataError::BadManifest {
                line: 0,
                reason: "manifest does not cover every record".into(),
            }),
        }
    }
}

/// Write records in the dataset CSV layout (with an ID column when records
/// carry IDs).
pub fn write_csv(path: impl AsRef<Path>, records: &[EegRecord]) -> Result<(), DataError> {
    let path = path.as_ref();
    let with_id = records.first().map(|r| r.id.is_some()).unwrap_or(false);
    let file = fs::File::create(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        source: e,
    };

    let mut header = String::new();
    if with_id {
        header.push_str("id,");
    }
    for i in 1..=SAMPLES_PER_RECORD {
        header.push_str(&format!("X{i},"));
    }
    header.push('y');
    writeln!(w, "{header}").map_err(io_err)?;

    for record in records {
        let mut line = String::new();
        if with_id {
            line.push_str(record.id.as_deref().unwrap_or(""));
            line.push(',');
        }
        for v in &record.samples {
            line.push_str(&format!("{v},"));
        }
        line.push_str(&record.label.to_string());
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Build a deterministic sample-count-preserving shuffle of record indices.
pub fn shuffled_indices(count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..count).collect();
    for i in (1..count).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    indices
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp_csv(name: &str, body: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(format!("epilnet-data-test-{name}-{}.csv", std::process::id()));
        let mut f = fs::File::create(&path).unwrap();
        write!(f, "{body}").unwrap();
        path
    }

    fn csv_row(id: Option<&str>, fill: f32, label: u8) -> String {
        let mut row = String::new();
        if let Some(id) = id {
            row.push_str(id);
            row.push(',');
        }
        for i in 0..SAMPLES_PER_RECORD {
            row.push_str(&format!("{},", fill + i as f32));
        }
        row.push_str(&label.to_string());
        row
    }

    fn header(with_id: bool) -> String {
        let mut h = String::new();
        if with_id {
            h.push_str("id,");
        }
        for i in 1..=SAMPLES_PER_RECORD {
            h.push_str(&format!("X{i},"));
        }
        h.push('y');
        h
    }

    #[test]
    fn loads_with_and_without_id_column() {
        let body = format!(
            "{}\n{}\n{}\n",
            header(true),
            csv_row(Some("X21.V1.791"), 1.0, 1),
            csv_row(Some("X15.V1.123"), -3.0, 5),
        );
        let path = write_temp_csv("with-id", &body);
        let ds = load_csv(&path).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.records[0].id.as_deref(), Some("X21.V1.791"));
        assert_eq!(ds.records[0].samples[0], 1.0);
        assert_eq!(ds.records[1].label, 5);
        // Loading the same file twice yields identical datasets, in file
        // order.
        let again = load_csv(&path).unwrap();
        assert_eq!(again.records, ds.records);
        assert_eq!(again.targets, ds.targets);
        fs::remove_file(path).ok();

        let body = format!("{}\n{}\n", header(false), csv_row(None, 2.0, 3));
        let path = write_temp_csv("no-id", &body);
        let ds = load_csv(&path).unwrap();
        assert_eq!(ds.len(), 1);
        assert!(ds.records[0].id.is_none());
        fs::remove_file(path).ok();
    }

    #[test]
    fn short_row_reports_line() {
        let mut short = csv_row(None, 0.0, 2);
        // Drop one sample column (177 samples + label).
        let cut = short.find(',').unwrap();
        short.replace_range(..=cut, "");
        let body = format!("{}\n{}\n{}\n", header(false), csv_row(None, 0.0, 1), short);
        let path = write_temp_csv("short-row", &body);
        match load_csv(&path).unwrap_err() {
            DataError::WrongColumnCount { line, expected, got } => {
                assert_eq!(line, 3);
                assert_eq!(expected, 179);
                assert_eq!(got, 178);
            }
            other => panic!("unexpected error: {other}"),
        }
        fs::remove_file(path).ok();
    }

    #[test]
    fn non_numeric_sample_and_bad_label() {
        let mut bad = csv_row(None, 0.0, 1);
        bad = bad.replacen("1,", "abc,", 1);
        let body = format!("{}\n{}\n", header(false), bad);
        let path = write_temp_csv("bad-sample", &body);
        assert!(matches!(
            load_csv(&path).unwrap_err(),
            DataError::NonNumericSample { line: 2, .. }
        ));
        fs::remove_file(path).ok();

        let body = format!("{}\n{}\n", header(false), csv_row(None, 0.0, 9));
        let path = write_temp_csv("bad-label", &body);
        assert!(matches!(
            load_csv(&path).unwrap_err(),
            DataError::LabelOutOfRange { line: 2, .. }
        ));
        fs::remove_file(path).ok();
    }

    fn synthetic_dataset(per_label: usize) -> EegDataset {
        let records: Vec<EegRecord> = (0..per_label * 5)
            .map(|i| EegRecord {
                id: None,
                samples: [i as f32; SAMPLES_PER_RECORD],
                label: (i % 5) as u8 + 1,
            })
            .collect();
        let targets = records.iter().map(|r| r.label as usize - 1).collect();
        EegDataset {
            records,
            targets,
            mapping: GroupMapping::new(GroupMode::FiveClass),
            splits: None,
            norm: None,
        }
    }

    #[test]
    fn three_class_mapping_drops_c_and_remaps() {
        let ds = map_group(synthetic_dataset(20), GroupMode::ThreeClass);
        assert_eq!(ds.len(), 80);
        assert!(ds.records.iter().all(|r| r.label != 3));
        assert_eq!(ds.target_histogram(), vec![40, 20, 20]);
        // Idempotent.
        let again = map_group(ds.clone(), GroupMode::ThreeClass);
        assert_eq!(again.target_histogram(), ds.target_histogram());
    }

    #[test]
    fn five_class_mapping_keeps_everything() {
        let ds = map_group(synthetic_dataset(10), GroupMode::FiveClass);
        assert_eq!(ds.len(), 50);
        assert_eq!(ds.target_histogram(), vec![10; 5]);
    }

    #[test]
    fn stratified_split_is_deterministic_and_balanced() {
        let mut a = synthetic_dataset(100);
        a.stratified_split((0.76, 0.12, 0.12), 42).unwrap();
        let mut b = synthetic_dataset(100);
        b.stratified_split((0.76, 0.12, 0.12), 42).unwrap();
        assert_eq!(a.splits, b.splits);

        assert_eq!(a.split_sizes().unwrap(), (380, 60, 60));
        // Per-class stratification within one record.
        for split in [Split::Train, Split::Val, Split::Test] {
            let idx = a.indices_of(split).unwrap();
            let mut per_class = vec![0usize; 5];
            for i in idx {
                per_class[a.targets[i]] += 1;
            }
            let expected = per_class.iter().sum::<usize>() as f64 / 5.0;
            for &c in &per_class {
                assert!((c as f64 - expected).abs() <= 1.0);
            }
        }

        let mut c = synthetic_dataset(100);
        c.stratified_split((0.76, 0.12, 0.12), 43).unwrap();
        assert_ne!(a.splits, c.splits);
    }

    #[test]
    fn ratio_sum_is_validated() {
        let mut ds = synthetic_dataset(10);
        assert!(matches!(
            ds.stratified_split((0.7, 0.12, 0.12), 1).unwrap_err(),
            DataError::RatioSum { .. }
        ));
    }

    #[test]
    fn norm_stats_standardize_training_values() {
        let mut ds = synthetic_dataset(40);
        ds.stratified_split((0.76, 0.12, 0.12), 7).unwrap();
        let stats = ds.compute_norm_stats().unwrap();
        let train = ds.indices_of(Split::Train).unwrap();
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        let mut n = 0usize;
        for &i in &train {
            for v in normalize(&ds.records[i].samples, &stats) {
                sum += v as f64;
                sq += (v as f64) * (v as f64);
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let std = (sq / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 1e-6);
        assert!((std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_training_data_is_zero_std() {
        let mut ds = synthetic_dataset(10);
        for r in &mut ds.records {
            r.samples = [5.0; SAMPLES_PER_RECORD];
        }
        ds.stratified_split((0.76, 0.12, 0.12), 7).unwrap();
        assert!(matches!(
            ds.compute_norm_stats().unwrap_err(),
            DataError::ZeroStd
        ));
    }

    #[test]
    fn identity_stats_leave_values_unchanged() {
        let stats = NormStats { mean: 0.0, std: 1.0 };
        let samples = [3.25f32; SAMPLES_PER_RECORD];
        assert_eq!(normalize(&samples, &stats), samples);
    }

    #[test]
    fn split_manifest_roundtrip() {
        let mut ds = synthetic_dataset(20);
        ds.stratified_split((0.76, 0.12, 0.12), 3).unwrap();
        let path = std::env::temp_dir().join(format!("epilnet-manifest-{}.txt", std::process::id()));
        ds.save_split_manifest(&path).unwrap();
        let saved = ds.splits.clone();
        let mut other = synthetic_dataset(20);
        other.load_split_manifest(&path).unwrap();
        assert_eq!(other.splits, saved);
        fs::remove_file(path).ok();
    }

    #[test]
    fn official_shape_split_arithmetic() {
        // With 2300 records per label, 76/12/12 splits come out exact.
        let mut five = synthetic_dataset(2300);
        assert!(five.verify_official_counts().is_ok());
        five.stratified_split((0.76, 0.12, 0.12), 42).unwrap();
        assert_eq!(five.split_sizes().unwrap(), (8740, 1380, 1380));

        let mut three = map_group(synthetic_dataset(2300), GroupMode::ThreeClass);
        assert_eq!(three.len(), 9200);
        assert_eq!(three.target_histogram(), vec![4600, 2300, 2300]);
        three.stratified_split((0.76, 0.12, 0.12), 42).unwrap();
        assert_eq!(three.split_sizes().unwrap(), (6992, 1104, 1104));
    }

    #[test]
    fn splits_partition_the_dataset() {
        let mut ds = synthetic_dataset(33);
        ds.stratified_split((0.76, 0.12, 0.12), 11).unwrap();
        let (train, val, test) = ds.split_sizes().unwrap();
        assert_eq!(train + val + test, ds.len());
        let mut seen = vec![false; ds.len()];
        for split in [Split::Train, Split::Val, Split::Test] {
            for i in ds.indices_of(split).unwrap() {
                assert!(!seen[i], "record {i} assigned twice");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
