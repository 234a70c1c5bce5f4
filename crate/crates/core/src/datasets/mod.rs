//! Dataset profiles, sample loading, preprocessing and splits.
//!
//! A dataset is a directory with a `profile.json` and either one
//! sub-directory per sample (`<id>/tables/*.csv` and `<id>/report.txt`) or a
//! `samples.jsonl` file with one JSON record per match.

mod preprocess;

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::table::{parse_csv_table, CsvError, TableError, TableSet};

pub use preprocess::{
    preprocess_mlb, preprocess_rotowire, preprocess_shuttleset, reorder_columns, MlbConfig,
    ShuttleSetConfig,
};

pub const PROFILE_FILE: &str = "profile.json";
pub const JSONL_FILE: &str = "samples.jsonl";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("record has no {0} section")]
    MissingSection(String),
    #[error("section {0} is not a record, list of records or column map")]
    BadSection(String),
    #[error("rally grouping column {0} is missing")]
    MissingGroupColumn(String),
    #[error("table {table} has no column {column}")]
    MissingColumn { table: String, column: String },
    #[error("stroke preprocessing reads table directories, not JSON records")]
    RecordsNotSupported,
    #[error("sample {0} has an empty report")]
    EmptyReport(String),
    #[error("sample {0} has no tables")]
    NoTables(String),
    #[error("{samples} samples cannot fill splits with ratios {ratios:?}")]
    TooFewSamples { samples: usize, ratios: [u32; 3] },
    #[error("split ratios must not all be zero")]
    ZeroRatios,
    #[error("no samples found under {0}")]
    Empty(PathBuf),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Csv(#[from] CsvError),
}

fn io_err(path: &Path, e: impl ToString) -> DatasetError {
    DatasetError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Conversion applied to each raw sample.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preprocess {
    /// Tables are used as they are.
    #[default]
    None,
    Shuttleset(ShuttleSetConfig),
    Rotowire,
    Mlb(MlbConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetProfile {
    pub name: String,
    /// Fills the role sentence of every prompt ("... for the badminton game
    /// report").
    pub sport: String,
    /// table → column → description.
    #[serde(default)]
    pub table_descriptions: IndexMap<String, IndexMap<String, String>>,
    /// table → leading columns, in order.
    #[serde(default)]
    pub column_order: IndexMap<String, Vec<String>>,
    /// Worked example shown to the LLM relation extractor.
    #[serde(default)]
    pub ie_example: Option<String>,
    #[serde(default)]
    pub preprocess: Preprocess,
}

impl DatasetProfile {
    pub fn new(name: impl Into<String>, sport: impl Into<String>) -> Self {
        DatasetProfile {
            name: name.into(),
            sport: sport.into(),
            table_descriptions: IndexMap::new(),
            column_order: IndexMap::new(),
            ie_example: None,
            preprocess: Preprocess::None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// The text bound to the prompts' table description.
    pub fn table_description(&self) -> String {
        self.table_descriptions
            .iter()
            .map(|(table, cols)| {
                let mut lines = vec![format!("Table {table}:")];
                lines.extend(cols.iter().map(|(c, d)| format!("- {c}: {d}")));
                lines.join("\n")
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Preprocessing followed by column reordering.
    pub fn prepare(&self, raw: &TableSet) -> Result<TableSet, DatasetError> {
        let ts = match &self.preprocess {
            Preprocess::Shuttleset(cfg) => preprocess_shuttleset(raw, cfg)?,
            _ => raw.clone(),
        };
        reorder_columns(&ts, &self.column_order)
    }

    /// Converts one JSON record to tables.
    pub fn prepare_record(&self, doc: &Value) -> Result<TableSet, DatasetError> {
        let ts = match &self.preprocess {
            Preprocess::None | Preprocess::Rotowire => preprocess_rotowire(doc)?,
            Preprocess::Mlb(cfg) => preprocess_mlb(doc, cfg)?,
            Preprocess::Shuttleset(_) => return Err(DatasetError::RecordsNotSupported),
        };
        reorder_columns(&ts, &self.column_order)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub tables: TableSet,
    pub gold_report: String,
}

impl Sample {
    pub fn new(id: impl Into<String>, tables: TableSet, gold_report: impl Into<String>) -> Result<Self, DatasetError> {
        let s = Sample {
            id: id.into(),
            tables,
            gold_report: gold_report.into(),
        };
        if s.tables.is_empty() {
            return Err(DatasetError::NoTables(s.id));
        }
        if s.gold_report.trim().is_empty() {
            return Err(DatasetError::EmptyReport(s.id));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub profile: DatasetProfile,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self, DatasetError> {
        let profile = DatasetProfile::load(&root.join(PROFILE_FILE))?;
        let jsonl = root.join(JSONL_FILE);
        let samples = if jsonl.is_file() {
            load_jsonl(&jsonl, &profile)?
        } else {
            load_sample_dirs(root, &profile)?
        };
        if samples.is_empty() {
            return Err(DatasetError::Empty(root.to_path_buf()));
        }
        Ok(Dataset {
            root: root.to_path_buf(),
            profile,
            samples,
        })
    }
}

/// Reads `<root>/<id>/tables/*.csv` and `<root>/<id>/report.txt` for every
/// sample directory, in id order. Tables named in the profile's column
/// order come first, the rest by file name.
pub fn load_sample_dirs(root: &Path, profile: &DatasetProfile) -> Result<Vec<Sample>, DatasetError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| io_err(root, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join("tables").is_dir())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| load_sample_dir(d, profile)).collect()
}

pub fn load_sample_dir(dir: &Path, profile: &DatasetProfile) -> Result<Sample, DatasetError> {
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let table_dir = dir.join("tables");
    let mut files: Vec<PathBuf> = fs::read_dir(&table_dir)
        .map_err(|e| io_err(&table_dir, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let rank = |p: &PathBuf| {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        profile.column_order.get_index_of(&stem).unwrap_or(usize::MAX)
    };
    files.sort_by_key(rank);
    let mut tables = Vec::new();
    for f in &files {
        let text = fs::read_to_string(f).map_err(|e| io_err(f, e))?;
        let name = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        tables.push(parse_csv_table(&text, &name).map_err(|e| DatasetError::Parse {
            path: f.clone(),
            message: e.to_string(),
        })?);
    }
    let report_path = dir.join("report.txt");
    let report = fs::read_to_string(&report_path).map_err(|e| io_err(&report_path, e))?;
    let tables = profile.prepare(&TableSet::new(tables)?)?;
    Sample::new(id, tables, report.trim())
}

/// Reads one record per line. The gold report is the `report` field, or
/// `summary` as a string or token list; the id is `id` or the line number.
pub fn load_jsonl(path: &Path, profile: &DatasetProfile) -> Result<Vec<Sample>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut samples = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| DatasetError::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {message}", n + 1),
        };
        let doc: Value = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        let id = match doc.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(x)) => x.to_string(),
            _ => format!("{n:04}"),
        };
        let report = match doc.get("report").or_else(|| doc.get("summary")) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Array(tokens)) => tokens
                .iter()
                .filter_map(Value::as_str)
                .collect::<Vec<_>>()
                .join(" "),
            _ => return Err(at("record has no report or summary".into())),
        };
        let tables = profile
            .prepare_record(&doc)
            .map_err(|e| at(e.to_string()))?;
        samples.push(Sample::new(id, tables, report.trim())?);
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    /// train : validation : test
    pub ratios: [u32; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [40, 9, 9],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

/// Sizes of the three parts: validation and test get
/// `floor(n · ratio / total)`, train takes the rest.
pub fn split_sizes(n: usize, ratios: [u32; 3]) -> Result<[usize; 3], DatasetError> {
    let total: u64 = ratios.iter().map(|&r| u64::from(r)).sum();
    if total == 0 {
        return Err(DatasetError::ZeroRatios);
    }
    let part = |r: u32| (n as u64 * u64::from(r) / total) as usize;
    let (val, test) = (part(ratios[1]), part(ratios[2]));
    let sizes = [n - val - test, val, test];
    if sizes.iter().zip(ratios).any(|(&s, r)| r > 0 && s == 0) {
        return Err(DatasetError::TooFewSamples { samples: n, ratios });
    }
    Ok(sizes)
}

/// Shuffles with a seeded ChaCha8 generator, then slices train, validation
/// and test in that order.
pub fn split<T>(mut items: Vec<T>, opts: &SplitSpec) -> Result<Split<T>, DatasetError> {
    let [train, val, _] = split_sizes(items.len(), opts.ratios)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    items.shuffle(&mut rng);
    let mut rest = items.split_off(train);
    let test = rest.split_off(val);
    Ok(Split {
        train: items,
        validation: rest,
        test,
    })
}

impl<T> Split<T> {
    pub fn take(self, name: SplitName) -> Vec<T> {
        match name {
            SplitName::Train => self.train,
            SplitName::Validation => self.validation,
            SplitName::Test => self.test,
            SplitName::All => {
                let mut all = self.train;
                all.extend(self.validation);
                all.extend(self.test);
                all
            }
        }
    }
}
