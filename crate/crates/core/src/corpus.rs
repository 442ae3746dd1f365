//! Labeled comment datasets: loading, class distributions and splitting.
//!
//! Dataset files are UTF-8, tab-separated, with a single header row naming
//! at least the `comment` and `category` columns (an `id` column is
//! optional). Quotes carry no special meaning, so a comment may contain any
//! character except a tab or a newline.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::atomic_write;

pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];
pub const DEFAULT_SPLIT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("dataset file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("unknown label {value:?} at row {row}")]
    UnknownLabel { value: String, row: usize },
    #[error("class {label} has {available} records but the split needs at least {required}")]
    EmptyClass {
        label: CategoryLabel,
        available: usize,
        required: usize,
    },
    #[error("cannot split an empty dataset")]
    EmptyDataset,
    #[error("invalid split ratios {0:?}: must be positive and sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("{language} class distribution does not match the reference counts: {}", format_deltas(.deltas))]
    DistributionMismatch {
        language: Language,
        deltas: Vec<CountDelta>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid split metadata in {path}: {reason}")]
    BadMetadata { path: PathBuf, reason: String },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The three target classes, in the fixed order used for every report row,
/// confusion-matrix axis and probability column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CategoryLabel {
    Homophobic,
    Transphobic,
    NonAntiLGBT,
}

impl CategoryLabel {
    pub const ALL: [CategoryLabel; 3] = [
        CategoryLabel::Homophobic,
        CategoryLabel::Transphobic,
        CategoryLabel::NonAntiLGBT,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// The label string as it appears in dataset files and reports.
    pub fn as_str(self) -> &'static str {
        match self {
            CategoryLabel::Homophobic => "Homophobic",
            CategoryLabel::Transphobic => "Transphobic",
            CategoryLabel::NonAntiLGBT => "Non-anti-LGBT+content",
        }
    }
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown label {0:?}")]
pub struct ParseLabelError(pub String);

impl FromStr for CategoryLabel {
    type Err = ParseLabelError;

    /// Case-insensitive; spaces, hyphens and underscores are ignored so
    /// "Non-anti-LGBT+content", "non anti lgbt+ content" and
    /// "NON_ANTI_LGBT+CONTENT" all parse.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' ' | '\u{2010}' | '\u{2011}'))
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "homophobic" => Ok(CategoryLabel::Homophobic),
            "transphobic" => Ok(CategoryLabel::Transphobic),
            "nonantilgbt+content" | "nonantilgbtcontent" | "nonantilgbt+" | "nonantilgbt" => {
                Ok(CategoryLabel::NonAntiLGBT)
            }
            _ => Err(ParseLabelError(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Malayalam,
    Tamil,
}

impl Language {
    pub fn code(self) -> &'static str {
        match self {
            Language::Malayalam => "ml",
            Language::Tamil => "ta",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Malayalam => "malayalam",
            Language::Tamil => "tamil",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "malayalam" | "ml" => Ok(Language::Malayalam),
            "tamil" | "ta" => Ok(Language::Tamil),
            other => Err(format!("unknown language {other:?} (expected malayalam or tamil)")),
        }
    }
}

/// One comment. `label` is `None` only for unlabeled prediction input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommentRecord {
    pub id: String,
    pub text: String,
    pub label: Option<CategoryLabel>,
    pub language: Language,
}

struct Columns {
    id: Option<usize>,
    comment: usize,
    category: Option<usize>,
    width: usize,
}

fn parse_header(fields: &csv::StringRecord) -> Result<Columns> {
    let mut id = None;
    let mut comment = None;
    let mut category = None;
    for (i, name) in fields.iter().enumerate() {
        let name = name.trim_start_matches('\u{feff}').trim().to_ascii_lowercase();
        match name.as_str() {
            "id" => id = Some(i),
            "comment" | "text" => comment = Some(i),
            "category" | "label" => category = Some(i),
            _ => {}
        }
    }
    let comment = comment.ok_or_else(|| CorpusError::MalformedRow {
        row: 1,
        reason: "header has no `comment` column".into(),
    })?;
    Ok(Columns {
        id,
        comment,
        category,
        width: fields.len(),
    })
}

fn read_records(path: &Path, language: Language, require_label: bool) -> Result<Vec<CommentRecord>> {
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        })?;

    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| malformed_csv(1, e))?,
        None => {
            return Err(CorpusError::MalformedRow {
                row: 1,
                reason: "file is empty (missing header row)".into(),
            })
        }
    };
    let cols = parse_header(&header)?;
    if require_label && cols.category.is_none() {
        return Err(CorpusError::MalformedRow {
            row: 1,
            reason: "header has no `category` column".into(),
        });
    }

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rows.enumerate() {
        // 1-based file line number; the header is line 1
        let line = i + 2;
        let row = row.map_err(|e| malformed_csv(line, e))?;
        if row.len() == 1 && row[0].trim().is_empty() {
            continue;
        }
        if row.len() != cols.width {
            return Err(CorpusError::MalformedRow {
                row: line,
                reason: format!("expected {} fields, found {}", cols.width, row.len()),
            });
        }
        let text = row[cols.comment].to_string();
        if text.trim().is_empty() {
            return Err(CorpusError::MalformedRow {
                row: line,
                reason: "empty comment".into(),
            });
        }
        let label = match cols.category {
            Some(c) => {
                let raw = row[c].trim();
                if raw.is_empty() && !require_label {
                    None
                } else {
                    Some(raw.parse::<CategoryLabel>().map_err(|_| CorpusError::UnknownLabel {
                        value: raw.to_string(),
                        row: line,
                    })?)
                }
            }
            None => None,
        };
        let id = match cols.id {
            Some(c) => row[c].trim().to_string(),
            None => format!("{}-{:05}", language.code(), out.len() + 1),
        };
        if !seen.insert(id.clone()) {
            return Err(CorpusError::MalformedRow {
                row: line,
                reason: format!("duplicate id {id:?}"),
            });
        }
        out.push(CommentRecord {
            id,
            text,
            label,
            language,
        });
    }
    Ok(out)
}

fn malformed_csv(row: usize, e: csv::Error) -> CorpusError {
    CorpusError::MalformedRow {
        row,
        reason: e.to_string(),
    }
}

/// Loads a labeled dataset. Every returned record carries a label.
pub fn load_dataset(path: &Path, language: Language) -> Result<Vec<CommentRecord>> {
    read_records(path, language, true)
}

/// Loads comments for prediction; the `category` column is optional.
pub fn load_unlabeled(path: &Path, language: Language) -> Result<Vec<CommentRecord>> {
    read_records(path, language, false)
}

/// Writes records as `id<TAB>comment<TAB>category` with a header row.
pub fn write_records(path: &Path, records: &[CommentRecord]) -> Result<()> {
    let mut buf = String::from("id\tcomment\tcategory\n");
    for r in records {
        buf.push_str(&sanitize_field(&r.id));
        buf.push('\t');
        buf.push_str(&sanitize_field(&r.text));
        buf.push('\t');
        if let Some(l) = r.label {
            buf.push_str(l.as_str());
        }
        buf.push('\n');
    }
    atomic_write(path, buf.as_bytes()).map_err(io_err(path))
}

/// Tabs and line breaks would break the row structure.
pub fn sanitize_field(s: &str) -> String {
    s.chars()
        .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
        .collect()
}

/// Per-class record counts in [`CategoryLabel`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: [usize; 3],
}

impl ClassDistribution {
    pub fn get(&self, label: CategoryLabel) -> usize {
        self.counts[label.index()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CategoryLabel, usize)> + '_ {
        CategoryLabel::ALL.iter().map(move |&l| (l, self.get(l)))
    }
}

impl fmt::Display for ClassDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, n) in self.iter() {
            writeln!(f, "{:<24}{n:>6}", l.as_str())?;
        }
        write!(f, "{:<24}{:>6}", "Total", self.total())
    }
}

/// Counts labeled records per class; unlabeled records are not counted.
pub fn class_distribution(records: &[CommentRecord]) -> ClassDistribution {
    let mut d = ClassDistribution::default();
    for l in records.iter().filter_map(|r| r.label) {
        d.counts[l.index()] += 1;
    }
    d
}

/// Published per-class counts of the full public corpora.
pub fn reference_distribution(language: Language) -> ClassDistribution {
    match language {
        Language::Malayalam => ClassDistribution {
            counts: [2434, 491, 189],
        },
        Language::Tamil => ClassDistribution {
            counts: [2022, 485, 155],
        },
    }
}

/// Difference between an observed and an expected count. `label == None`
/// refers to the total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountDelta {
    pub label: Option<CategoryLabel>,
    pub expected: usize,
    pub actual: usize,
}

impl fmt::Display for CountDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.label.map(|l| l.as_str()).unwrap_or("total");
        let diff = self.actual as i64 - self.expected as i64;
        write!(
            f,
            "{name}: expected {}, found {} ({diff:+})",
            self.expected, self.actual
        )
    }
}

fn format_deltas(deltas: &[CountDelta]) -> String {
    deltas
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Compares `observed` with the published counts for `language`; the error
/// lists every differing class and the total.
pub fn check_reference(language: Language, observed: &ClassDistribution) -> Result<()> {
    let expected = reference_distribution(language);
    let mut deltas: Vec<CountDelta> = CategoryLabel::ALL
        .iter()
        .filter(|&&l| expected.get(l) != observed.get(l))
        .map(|&l| CountDelta {
            label: Some(l),
            expected: expected.get(l),
            actual: observed.get(l),
        })
        .collect();
    if expected.total() != observed.total() {
        deltas.push(CountDelta {
            label: None,
            expected: expected.total(),
            actual: observed.total(),
        });
    }
    if deltas.is_empty() {
        Ok(())
    } else {
        Err(CorpusError::DistributionMismatch { language, deltas })
    }
}

/// Train/validation/test partition of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<CommentRecord>,
    pub validation: Vec<CommentRecord>,
    pub test: Vec<CommentRecord>,
    pub language: Language,
    pub seed: u64,
    pub meta: SplitParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub ratios: [f64; 3],
    pub stratified: bool,
}

impl Eq for SplitParams {}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            ratios: DEFAULT_SPLIT_RATIOS,
            stratified: true,
        }
    }
}

pub fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    let ok = ratios.iter().all(|r| r.is_finite() && *r > 0.0)
        && (ratios.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
    if ok {
        Ok(())
    } else {
        Err(CorpusError::InvalidRatios(ratios))
    }
}

/// Largest-remainder allocation of `n` items over three ratios.
fn allocate(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact = ratios.map(|r| n as f64 * r);
    let mut alloc = exact.map(|x| (x + 1e-9).floor() as usize);
    let mut rest = n - alloc.iter().sum::<usize>().min(n);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - alloc[a] as f64;
        let fb = exact[b] - alloc[b] as f64;
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        alloc[i] += 1;
        rest -= 1;
    }
    alloc
}

/// Splits records into train/validation/test.
///
/// Records are shuffled with a ChaCha8 stream seeded by `seed`; each split
/// keeps the input order of its members. In stratified mode the allocation
/// is done per class and every split receives at least one record of every
/// class, which requires at least three records per class.
pub fn split_dataset(
    records: &[CommentRecord],
    ratios: [f64; 3],
    seed: u64,
    stratified: bool,
) -> Result<DatasetSplit> {
    validate_ratios(ratios)?;
    let language = records.first().ok_or(CorpusError::EmptyDataset)?.language;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assigned: [Vec<usize>; 3] = Default::default();

    if stratified {
        for label in CategoryLabel::ALL {
            let mut idx: Vec<usize> = records
                .iter()
                .enumerate()
                .filter(|(_, r)| r.label == Some(label))
                .map(|(i, _)| i)
                .collect();
            if idx.len() < 3 {
                return Err(CorpusError::EmptyClass {
                    label,
                    available: idx.len(),
                    required: 3,
                });
            }
            idx.shuffle(&mut rng);
            let mut alloc = allocate(idx.len(), ratios);
            for s in 0..3 {
                if alloc[s] == 0 {
                    let donor = (0..3).max_by_key(|&j| (alloc[j], 3 - j)).unwrap();
                    alloc[donor] -= 1;
                    alloc[s] = 1;
                }
            }
            let mut it = idx.into_iter();
            for (s, &n) in alloc.iter().enumerate() {
                assigned[s].extend(it.by_ref().take(n));
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..records.len()).collect();
        idx.shuffle(&mut rng);
        let alloc = allocate(idx.len(), ratios);
        let mut it = idx.into_iter();
        for (s, &n) in alloc.iter().enumerate() {
            assigned[s].extend(it.by_ref().take(n));
        }
    }

    let [train, validation, test] = assigned.map(|mut idx| {
        idx.sort_unstable();
        idx.into_iter().map(|i| records[i].clone()).collect::<Vec<_>>()
    });
    Ok(DatasetSplit {
        train,
        validation,
        test,
        language,
        seed,
        meta: SplitParams { ratios, stratified },
    })
}

/// Contents of `split.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitMetadata {
    pub language: Language,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub stratified: bool,
    pub counts: SplitCounts,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: ClassDistribution,
    pub validation: ClassDistribution,
    pub test: ClassDistribution,
}

pub const SPLIT_FILES: [&str; 3] = ["train.tsv", "validation.tsv", "test.tsv"];
pub const SPLIT_METADATA_FILE: &str = "split.json";

impl DatasetSplit {
    pub fn parts(&self) -> [&[CommentRecord]; 3] {
        [&self.train, &self.validation, &self.test]
    }

    pub fn metadata(&self) -> SplitMetadata {
        SplitMetadata {
            language: self.language,
            seed: self.seed,
            ratios: self.meta.ratios,
            stratified: self.meta.stratified,
            counts: SplitCounts {
                train: class_distribution(&self.train),
                validation: class_distribution(&self.validation),
                test: class_distribution(&self.test),
            },
        }
    }

    /// Writes `train.tsv`, `validation.tsv`, `test.tsv` and `split.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, part) in SPLIT_FILES.iter().zip(self.parts()) {
            write_records(&dir.join(name), part)?;
        }
        let meta_path = dir.join(SPLIT_METADATA_FILE);
        let mut json = serde_json::to_string_pretty(&self.metadata()).expect("metadata serializes");
        json.push('\n');
        atomic_write(&meta_path, json.as_bytes()).map_err(io_err(&meta_path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(SPLIT_METADATA_FILE);
        let raw = fs::read_to_string(&meta_path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CorpusError::MissingFile(meta_path.clone())
            } else {
                io_err(&meta_path)(e)
            }
        })?;
        let meta: SplitMetadata =
            serde_json::from_str(&raw).map_err(|e| CorpusError::BadMetadata {
                path: meta_path.clone(),
                reason: e.to_string(),
            })?;
        let [train, validation, test] =
            SPLIT_FILES.map(|name| load_dataset(&dir.join(name), meta.language));
        Ok(DatasetSplit {
            train: train?,
            validation: validation?,
            test: test?,
            language: meta.language,
            seed: meta.seed,
            meta: SplitParams {
                ratios: meta.ratios,
                stratified: meta.stratified,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn rec(id: usize, label: CategoryLabel) -> CommentRecord {
        CommentRecord {
            id: format!("r{id}"),
            text: format!("comment {id}"),
            label: Some(label),
            language: Language::Tamil,
        }
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn label_parsing_is_lenient() {
        for s in [
            "Non-anti-LGBT+content",
            "non-anti-lgbt+content",
            "Non - anti - LGBT+ content",
            "NON_ANTI_LGBT+CONTENT",
        ] {
            assert_eq!(s.parse::<CategoryLabel>().unwrap(), CategoryLabel::NonAntiLGBT);
        }
        assert_eq!("HOMOPHOBIC".parse::<CategoryLabel>().unwrap(), CategoryLabel::Homophobic);
        assert_eq!(" transphobic ".parse::<CategoryLabel>().unwrap(), CategoryLabel::Transphobic);
        assert!("Hope_speech".parse::<CategoryLabel>().is_err());
    }

    #[test]
    fn loads_tsv_rows() {
        let f = write_tmp("comment\tcategory\nfirst one\tHomophobic\n\"quoted\" text\tNon-anti-LGBT+content\n");
        let recs = load_dataset(f.path(), Language::Malayalam).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].text, "\"quoted\" text");
        assert_eq!(recs[1].label, Some(CategoryLabel::NonAntiLGBT));
        assert_eq!(recs[0].id, "ml-00001");
    }

    #[test]
    fn header_only_gives_empty_list() {
        let f = write_tmp("comment\tcategory\n");
        assert!(load_dataset(f.path(), Language::Tamil).unwrap().is_empty());
    }

    #[test]
    fn empty_file_is_malformed() {
        let f = write_tmp("");
        assert!(matches!(
            load_dataset(f.path(), Language::Tamil),
            Err(CorpusError::MalformedRow { row: 1, .. })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_dataset(Path::new("/nonexistent/x.tsv"), Language::Tamil),
            Err(CorpusError::MissingFile(_))
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write_tmp("comment\tcategory\nok\tHomophobic\nno label column here\n");
        match load_dataset(f.path(), Language::Tamil) {
            Err(CorpusError::MalformedRow { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label() {
        let f = write_tmp("comment\tcategory\nok\tHope_speech\n");
        match load_dataset(f.path(), Language::Tamil) {
            Err(CorpusError::UnknownLabel { value, row }) => {
                assert_eq!(value, "Hope_speech");
                assert_eq!(row, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unlabeled_input_allows_missing_category() {
        let f = write_tmp("id\tcomment\na1\thello\n");
        let recs = load_unlabeled(f.path(), Language::Tamil).unwrap();
        assert_eq!(recs[0].id, "a1");
        assert_eq!(recs[0].label, None);
        assert!(load_dataset(f.path(), Language::Tamil).is_err());
    }

    #[test]
    fn distribution_counts() {
        assert_eq!(class_distribution(&[]).counts, [0, 0, 0]);
        let recs = vec![
            rec(0, CategoryLabel::Homophobic),
            rec(1, CategoryLabel::NonAntiLGBT),
            rec(2, CategoryLabel::NonAntiLGBT),
        ];
        assert_eq!(class_distribution(&recs).counts, [1, 0, 2]);
    }

    #[test]
    fn reference_tables() {
        assert_eq!(reference_distribution(Language::Malayalam).total(), 3114);
        assert_eq!(reference_distribution(Language::Tamil).total(), 2662);
        let bad = ClassDistribution { counts: [2434, 490, 189] };
        match check_reference(Language::Malayalam, &bad) {
            Err(CorpusError::DistributionMismatch { deltas, .. }) => {
                assert_eq!(deltas.len(), 2);
                assert_eq!(deltas[0].label, Some(CategoryLabel::Transphobic));
                assert_eq!(deltas[1].label, None);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let recs: Vec<_> = (0..10).map(|i| rec(i, CategoryLabel::ALL[i % 3])).collect();
        let a = split_dataset(&recs, [0.8, 0.1, 0.1], 7, false).unwrap();
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (8, 1, 1));
        let b = split_dataset(&recs, [0.8, 0.1, 0.1], 7, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stratified_balanced_proportions() {
        let recs: Vec<_> = (0..300).map(|i| rec(i, CategoryLabel::ALL[i % 3])).collect();
        let s = split_dataset(&recs, DEFAULT_SPLIT_RATIOS, 42, true).unwrap();
        for part in s.parts() {
            let d = class_distribution(part);
            let third = part.len() as f64 / 3.0;
            for (_, n) in d.iter() {
                assert!((n as f64 - third).abs() <= 1.0, "{d:?}");
            }
        }
    }

    #[test]
    fn stratified_needs_three_per_class() {
        let recs = vec![
            rec(0, CategoryLabel::Homophobic),
            rec(1, CategoryLabel::Homophobic),
            rec(2, CategoryLabel::Homophobic),
            rec(3, CategoryLabel::Transphobic),
        ];
        assert!(matches!(
            split_dataset(&recs, DEFAULT_SPLIT_RATIOS, 1, true),
            Err(CorpusError::EmptyClass { label: CategoryLabel::Transphobic, available: 1, .. })
        ));
    }

    #[test]
    fn bad_ratios_rejected() {
        let recs = vec![rec(0, CategoryLabel::Homophobic)];
        assert!(matches!(
            split_dataset(&recs, [0.5, 0.5, 0.1], 1, false),
            Err(CorpusError::InvalidRatios(_))
        ));
        assert!(split_dataset(&recs, [1.0, 0.0, 0.0], 1, false).is_err());
    }

    #[test]
    fn split_roundtrips_through_disk() {
        let recs: Vec<_> = (0..30).map(|i| rec(i, CategoryLabel::ALL[i % 3])).collect();
        let s = split_dataset(&recs, DEFAULT_SPLIT_RATIOS, 3, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        let back = DatasetSplit::load(dir.path()).unwrap();
        assert_eq!(back, s);
    }

    fn arb_records() -> impl Strategy<Value = Vec<CommentRecord>> {
        prop::collection::vec(0usize..3, 9..120).prop_map(|labels| {
            labels
                .into_iter()
                .enumerate()
                .map(|(i, l)| rec(i, CategoryLabel::ALL[l]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn split_is_a_partition(recs in arb_records(), seed in any::<u64>(), stratified in any::<bool>()) {
            let s = match split_dataset(&recs, DEFAULT_SPLIT_RATIOS, seed, stratified) {
                Ok(s) => s,
                Err(CorpusError::EmptyClass { .. }) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            let mut ids: Vec<&str> = s.parts().iter().flat_map(|p| p.iter().map(|r| r.id.as_str())).collect();
            prop_assert_eq!(ids.len(), recs.len());
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), recs.len());
            if stratified {
                for part in s.parts() {
                    let d = class_distribution(part);
                    prop_assert!(d.counts.iter().all(|&n| n >= 1));
                }
            }
        }

        #[test]
        fn distribution_sums_to_len(recs in arb_records()) {
            prop_assert_eq!(class_distribution(&recs).total(), recs.len());
        }
    }
}
