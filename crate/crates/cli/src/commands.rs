use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use htdetect_core::artifact::{sha256_file, sha256_hex};
use htdetect_core::corpus::{
    check_reference, class_distribution, load_dataset, load_unlabeled, reference_distribution, sanitize_field,
    split_dataset, CorpusError, DatasetSplit, SPLIT_METADATA_FILE,
};
use htdetect_core::metrics::{render_table, EvaluationReport};
use htdetect_core::models::{CheckpointStore, Classifier, Prediction};
use htdetect_core::trainer::{build_model, records_hash, train, LabeledInput, RunManifest};
use htdetect_core::{clean_text, CategoryLabel, CleanText, CommentRecord, Language};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config;
use crate::failure::{self, CliResult, Failure};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CLEANED_FILE: &str = "cleaned.tsv";
const PREDICT_BATCH: usize = 32;

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s.into_bytes()
}

fn dataset_hash(path: &Path) -> CliResult<String> {
    sha256_file(path).map_err(|e| Failure::runtime(anyhow::Error::new(e).context(format!("cannot hash {}", path.display()))))
}

pub struct PrepareArgs {
    pub dataset: PathBuf,
    pub language: Language,
    pub out: PathBuf,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub stratified: bool,
    pub verify_counts: bool,
}

#[derive(Debug, Serialize)]
struct PrepareSummary {
    language: Language,
    dataset_sha256: String,
    total: usize,
    counts: BTreeMap<&'static str, usize>,
    reference_total: usize,
    matches_reference: bool,
    deltas: Vec<DeltaJson>,
    seed: u64,
    ratios: [f64; 3],
    stratified: bool,
    manifest_hash: String,
}

#[derive(Debug, Serialize)]
struct DeltaJson {
    label: &'static str,
    expected: usize,
    observed: usize,
}

/// Loads, checks and splits a labeled dataset; writes raw split files, the
/// cleaned corpus and a distribution summary.
pub fn prepare(args: &PrepareArgs) -> CliResult<String> {
    let records = load_dataset(&args.dataset, args.language)?;
    if records.is_empty() {
        return Err(CorpusError::EmptyDataset.into());
    }
    let dist = class_distribution(&records);
    let (matches_reference, deltas) = match check_reference(args.language, &dist) {
        Ok(()) => (true, Vec::new()),
        Err(CorpusError::DistributionMismatch { deltas, .. }) => {
            if args.verify_counts {
                return Err(CorpusError::DistributionMismatch {
                    language: args.language,
                    deltas,
                }
                .into());
            }
            log::warn!(
                "class counts differ from the reference {} corpus; pass --verify-counts to make this an error",
                args.language
            );
            (false, deltas)
        }
        Err(e) => return Err(e.into()),
    };
    let split = split_dataset(&records, args.ratios, args.seed, args.stratified)?;
    let dataset_sha256 = dataset_hash(&args.dataset)?;

    split.save(&args.out)?;
    let mut cleaned = String::from("id\tcomment\tcategory\n");
    for r in &records {
        let label = r.label.map_or("", |l| l.as_str());
        writeln!(cleaned, "{}\t{}\t{label}", sanitize_field(&r.id), clean_text(&r.text).as_str()).unwrap();
    }
    failure::write(&args.out.join(CLEANED_FILE), cleaned.as_bytes())?;

    let manifest_hash = sha256_hex(
        json!({
            "dataset": dataset_sha256,
            "language": args.language,
            "seed": args.seed,
            "ratios": args.ratios,
            "stratified": args.stratified,
        })
        .to_string()
        .as_bytes(),
    );
    let summary = PrepareSummary {
        language: args.language,
        dataset_sha256,
        total: dist.total(),
        counts: dist.iter().map(|(l, n)| (l.as_str(), n)).collect(),
        reference_total: reference_distribution(args.language).total(),
        matches_reference,
        deltas: deltas
            .iter()
            .map(|d| DeltaJson {
                label: d.label.map_or("total", |l| l.as_str()),
                expected: d.expected,
                observed: d.actual,
            })
            .collect(),
        seed: args.seed,
        ratios: args.ratios,
        stratified: args.stratified,
        manifest_hash,
    };
    failure::write(&args.out.join(SUMMARY_FILE), &json_bytes(&summary))?;

    let mut out = format!("{} comments: {}\n", args.language, dist.total());
    for (label, n) in dist.iter() {
        writeln!(out, "  {:<24}{n}", label.as_str()).unwrap();
    }
    let m = split.metadata();
    writeln!(
        out,
        "split (seed {}): train {}, validation {}, test {}",
        args.seed,
        m.counts.train.total(),
        m.counts.validation.total(),
        m.counts.test.total()
    )
    .unwrap();
    if !matches_reference {
        out.push_str("class counts differ from the reference corpus:\n");
        for d in &deltas {
            let label = d.label.map_or("total", |l| l.as_str());
            writeln!(out, "  {label:<24}expected {}, found {}", d.expected, d.actual).unwrap();
        }
    }
    Ok(out)
}

/// Loads a prepared split directory, or splits a labeled TSV on the fly.
fn load_split(data: &Path, language: Option<Language>, split: &config::SplitSection, seed: u64) -> CliResult<DatasetSplit> {
    if data.join(SPLIT_METADATA_FILE).is_file() {
        let s = DatasetSplit::load(data)?;
        if let Some(l) = language.filter(|l| *l != s.language) {
            return Err(Failure::validation(anyhow!(
                "config language {l} does not match the prepared {} split",
                s.language
            )));
        }
        return Ok(s);
    }
    let language = language.ok_or_else(|| {
        Failure::validation(anyhow!("`language` is required when `data` is a TSV file rather than a prepared split"))
    })?;
    let records = load_dataset(data, language)?;
    Ok(split_dataset(&records, split.ratios, seed, split.stratified)?)
}

pub struct TrainArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub language: Option<Language>,
}

/// Builds, trains and saves a model; the run directory holds the model
/// artifact, `manifest.json` and `history.jsonl`.
pub fn train_cmd(args: &TrainArgs) -> CliResult<String> {
    let cfg = config::load(&args.config, args.seed)?;
    let out = args
        .out
        .clone()
        .or(cfg.out.clone())
        .ok_or_else(|| Failure::validation(anyhow!("no output directory: pass --out or set `out` in the config")))?;
    let language = args.language.or(cfg.language);
    let split = load_split(&cfg.data, language, &cfg.split, cfg.train.seed)?;
    if split.train.is_empty() {
        return Err(Failure::validation(anyhow!("training split is empty")));
    }
    let store = CheckpointStore::from_env();
    let mut model = build_model(&cfg.model, &split.train, &store, &cfg.base_dir, cfg.train.seed)?;
    log::info!(
        "training {} on {} {} comments ({} parameters, {} epochs, batch {}, lr {})",
        model.spec().display_name(),
        split.train.len(),
        split.language,
        model.parameter_count(),
        cfg.train.epochs,
        cfg.train.batch_size,
        cfg.train.learning_rate
    );
    let manifest = RunManifest::new(&model, &split, &cfg.train, Some(cfg.hash.clone()));
    let history = train(&mut model, &split, &cfg.train)?;
    model.save(&out)?;
    failure::write(&out.join(HISTORY_FILE), history.to_jsonl().as_bytes())?;
    let mut manifest_json: serde_json::Value = serde_json::from_str(&manifest.to_json()).expect("manifest is json");
    manifest_json["inputs_hash"] = json!(manifest.inputs_hash());
    failure::write(&out.join(MANIFEST_FILE), &json_bytes(&manifest_json))?;
    Ok(format!(
        "trained {} for {} epochs; final train loss {:.4}; artifact in {}\n",
        model.spec().display_name(),
        history.len(),
        history.final_train_loss().unwrap_or(f64::NAN),
        out.display()
    ))
}

#[derive(Debug, Deserialize)]
struct ManifestRef {
    language: Language,
    inputs_hash: String,
}

fn read_manifest(model_dir: &Path) -> CliResult<ManifestRef> {
    let path = model_dir.join(MANIFEST_FILE);
    let text = failure::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::validation(anyhow::Error::new(e).context(format!("invalid {}", path.display()))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Part {
    Train,
    Validation,
    Test,
}

impl Part {
    fn as_str(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Validation => "validation",
            Part::Test => "test",
        }
    }
}

pub struct EvaluateArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub part: Part,
    pub out: PathBuf,
    pub language: Option<Language>,
}

/// Scores a trained model on a labeled split; writes `report.json`,
/// `report.txt` and `evaluation.json`.
pub fn evaluate(args: &EvaluateArgs) -> CliResult<String> {
    let manifest = read_manifest(&args.model)?;
    let model = Classifier::load(&args.model)?;
    let language = args.language.unwrap_or(manifest.language);
    let records: Vec<CommentRecord> = if args.data.is_dir() {
        let split = DatasetSplit::load(&args.data)?;
        match args.part {
            Part::Train => split.train,
            Part::Validation => split.validation,
            Part::Test => split.test,
        }
    } else {
        load_dataset(&args.data, language)?
    };
    if records.is_empty() {
        return Err(Failure::validation(anyhow!("no records to evaluate in {}", args.data.display())));
    }
    let data = LabeledInput::from_records(&model, &records)?;
    let pred = model.predict_input(&data.input, PREDICT_BATCH)?;
    let report = EvaluationReport::from_predictions(
        model.spec().display_name(),
        language,
        &data.labels,
        &pred.labels,
        manifest.inputs_hash.clone(),
    )?;
    let data_hash = records_hash(&records);
    let evaluation = json!({
        "model_manifest": manifest.inputs_hash,
        "data_hash": data_hash,
        "part": args.part.as_str(),
        "inputs_hash": sha256_hex(format!("{}:{}", manifest.inputs_hash, data_hash).as_bytes()),
    });
    let table = render_table(&capitalize(language.as_str()), std::slice::from_ref(&report));
    failure::write(&args.out.join(REPORT_JSON), report.to_json().as_bytes())?;
    failure::write(&args.out.join(REPORT_TXT), table.as_bytes())?;
    failure::write(&args.out.join(EVALUATION_FILE), &json_bytes(&evaluation))?;
    Ok(table)
}

pub struct PredictArgs {
    pub model: PathBuf,
    pub input: PathBuf,
    pub out: PathBuf,
    pub language: Option<Language>,
}

/// Writes `id, label, p(Homophobic), p(Transphobic), p(Non-anti-LGBT+content)`
/// per input comment, plus a `<out>.meta.json` sidecar with input hashes.
pub fn predict(args: &PredictArgs) -> CliResult<String> {
    let manifest = read_manifest(&args.model)?;
    let model = Classifier::load(&args.model)?;
    let language = args.language.unwrap_or(manifest.language);
    let empty_file = std::fs::metadata(&args.input).map(|m| m.len() == 0).unwrap_or(false);
    let records = if empty_file {
        Vec::new()
    } else {
        load_unlabeled(&args.input, language)?
    };
    let texts: Vec<CleanText> = records.iter().map(|r| clean_text(&r.text)).collect();
    let pred = if texts.is_empty() {
        Prediction {
            probabilities: Vec::new(),
            labels: Vec::new(),
        }
    } else {
        model.predict(&texts, PREDICT_BATCH)?
    };
    let mut out = String::from("id\tlabel");
    for l in CategoryLabel::ALL {
        out.push('\t');
        out.push_str(l.as_str());
    }
    out.push('\n');
    for ((r, label), p) in records.iter().zip(&pred.labels).zip(&pred.probabilities) {
        writeln!(out, "{}\t{}\t{}\t{}\t{}", sanitize_field(&r.id), label.as_str(), p[0], p[1], p[2]).unwrap();
    }
    let input_hash = dataset_hash(&args.input)?;
    let meta = json!({
        "model_manifest": manifest.inputs_hash,
        "input_sha256": input_hash,
        "rows": records.len(),
        "inputs_hash": sha256_hex(format!("{}:{}", manifest.inputs_hash, input_hash).as_bytes()),
    });
    failure::write(&args.out, out.as_bytes())?;
    let mut meta_path = args.out.clone().into_os_string();
    meta_path.push(".meta.json");
    failure::write(Path::new(&meta_path), &json_bytes(&meta))?;
    Ok(format!("{} predictions written to {}\n", records.len(), args.out.display()))
}

/// Expected weighted F1 per (language, model) for the extended comparison.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpectedFile {
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(rename = "row")]
    rows: Vec<ExpectedRow>,
}

fn default_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpectedRow {
    language: Language,
    model: String,
    weighted_f1: f64,
}

pub struct ReportArgs {
    pub inputs: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub expected: Option<PathBuf>,
    pub language: Option<Language>,
}

fn collect_reports(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut found = Vec::new();
    for p in inputs {
        if p.is_file() {
            found.push(p.clone());
        } else if p.join(REPORT_JSON).is_file() {
            found.push(p.join(REPORT_JSON));
        } else if p.is_dir() {
            let mut children: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Failure::runtime(anyhow::Error::new(e).context(format!("cannot list {}", p.display()))))?
                .filter_map(|e| e.ok().map(|e| e.path().join(REPORT_JSON)))
                .filter(|p| p.is_file())
                .collect();
            children.sort();
            found.extend(children);
        } else {
            return Err(Failure::validation(anyhow!("{} is neither a report file nor a directory", p.display())));
        }
    }
    if found.is_empty() {
        return Err(Failure::validation(anyhow!("no {REPORT_JSON} files found")));
    }
    Ok(found)
}

fn model_rank(name: &str) -> usize {
    ["CNN(GloVe)", "LSTM(GloVe)", "mBERT", "IndicBERT"]
        .iter()
        .position(|m| *m == name)
        .unwrap_or(usize::MAX)
}

/// Aggregates evaluation reports into one table per language, optionally
/// comparing weighted F1 with expected values. Returns the rendered text and
/// whether every expected row was within tolerance.
pub fn report(args: &ReportArgs) -> CliResult<(String, bool)> {
    let mut reports = Vec::new();
    for path in collect_reports(&args.inputs)? {
        let text = failure::read_to_string(&path)?;
        let r = EvaluationReport::from_json(&text)
            .map_err(|e| Failure::validation(anyhow::Error::new(e).context(format!("invalid report {}", path.display()))))?;
        if args.language.is_none_or(|l| l == r.language) {
            reports.push(r);
        }
    }
    reports.sort_by(|a, b| {
        (a.language.as_str(), model_rank(&a.model), &a.model).cmp(&(b.language.as_str(), model_rank(&b.model), &b.model))
    });
    let mut out = String::new();
    let mut languages: Vec<Language> = reports.iter().map(|r| r.language).collect();
    languages.dedup();
    for lang in &languages {
        let rows: Vec<EvaluationReport> = reports.iter().filter(|r| r.language == *lang).cloned().collect();
        out.push_str(&render_table(&capitalize(lang.as_str()), &rows));
        out.push('\n');
    }
    let mut all_ok = true;
    if let Some(path) = &args.expected {
        let expected: ExpectedFile = toml::from_str(&failure::read_to_string(path)?)
            .map_err(|e| Failure::validation(anyhow::Error::new(e).context(format!("invalid {}", path.display()))))?;
        writeln!(out, "weighted F1 vs expected (tolerance ±{}):", expected.tolerance).unwrap();
        for row in expected.rows.iter().filter(|r| args.language.is_none_or(|l| l == r.language)) {
            match reports.iter().find(|r| r.language == row.language && r.model == row.model) {
                Some(r) => {
                    let diff = r.weighted_f1 - row.weighted_f1;
                    let ok = diff.abs() <= expected.tolerance + 1e-12;
                    all_ok &= ok;
                    writeln!(
                        out,
                        "  {} {:<9} {:<12} expected {:.2} got {:.4} ({:+.4})",
                        if ok { "PASS" } else { "FAIL" },
                        row.language.as_str(),
                        row.model,
                        row.weighted_f1,
                        r.weighted_f1,
                        diff
                    )
                    .unwrap();
                }
                None => {
                    writeln!(out, "  SKIP {:<9} {:<12} no report", row.language.as_str(), row.model).unwrap();
                }
            }
        }
    }
    if let Some(path) = &args.out {
        failure::write(path, out.as_bytes())?;
    }
    Ok((out, all_ok))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}
