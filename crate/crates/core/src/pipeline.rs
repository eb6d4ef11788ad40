//! Config-driven commands behind the `treebench` binary.
//!
//! Every command is a function of the config file, its input files and the
//! seed. One seed fans out to all stochastic parts through [`derive_seed`]
//! with fixed component names, and all outputs are plain text.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{
    filter_curve_cohort, load_delimited, recode, CategoricalTable, CohortCounts, CurveCohort, DelimitedOptions,
    FeatureSpec, RecodeAudit, RecodeRuleSet,
};
use crate::error::{Error, Result};
use crate::eval::{compare_models, make_folds, Leaderboard, RosterEntry};
use crate::forest::{train_forest, Forest, ForestParams};
use crate::model::{Model, ModelSpec};
use crate::seed::derive_seed;
use crate::shap::{attributions_csv, backward_eliminate, explain_rows, BackgroundSet, EliminationSpec, EliminationTrace};
use crate::tree::{export_dot, predictor_importance, Algorithm};

pub const CODED_TABLE: &str = "coded.csv";
pub const SCHEMA: &str = "schema.json";
pub const INGEST_AUDIT: &str = "ingest_audit.json";
pub const TRACE: &str = "elimination_trace.json";
pub const SELECTED: &str = "selected_features.txt";
pub const FOREST: &str = "forest.json";
pub const LEADERBOARD: &str = "leaderboard.txt";
pub const REPORT: &str = "compare_report.json";
pub const COINCIDENCE: &str = "coincidence.txt";
pub const IMPORTANCE: &str = "importance.tsv";
pub const TREE_DOT: &str = "tree.dot";
pub const SHAP_VALUES: &str = "shap_values.csv";
pub const SHAP_RANKING: &str = "shap_importance.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Raw delimited extract.
    pub raw: PathBuf,
    /// Recode rules (TOML) defining the target and every predictor.
    pub rules: PathBuf,
    #[serde(default = "comma")]
    pub delimiter: char,
    /// Drop rows with missing raw values instead of failing.
    #[serde(default = "yes")]
    pub strict: bool,
    #[serde(default)]
    pub cohort: Option<CurveCohort>,
}

fn comma() -> char {
    ','
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub stratified: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 10, stratified: true }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    #[default]
    All,
    /// The features chosen by `select-features`.
    Selected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub forest: ForestParams,
    pub background_size: usize,
    pub explain_rows: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        let spec = EliminationSpec::default();
        SelectionConfig {
            forest: ForestParams::default(),
            background_size: spec.background_size,
            explain_rows: spec.explain_rows,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub features: FeatureSet,
    /// Families to compare; empty means the eight default families.
    pub roster: Vec<RosterEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Row indices of the coded table to attribute; empty means all rows.
    pub rows: Vec<usize>,
    pub background_size: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig { rows: Vec::new(), background_size: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
}

/// A parsed config with paths resolved and the seed fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub config: PipelineConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

impl Run {
    /// Read `path`; relative paths inside resolve against its directory.
    /// `out` and `seed` override the config values.
    pub fn load(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = PipelineConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        config.data.raw = resolve(&config.data.raw);
        config.data.rules = resolve(&config.data.rules);
        let seed = seed
            .or(config.seed)
            .ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))?;
        let out_dir = match (out, &config.out_dir) {
            (Some(o), _) => o.to_path_buf(),
            (None, Some(o)) => resolve(o),
            (None, None) => base.join("out"),
        };
        Ok(Run { config, seed, out_dir })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn require(&self, name: &str, producer: &str) -> Result<PathBuf> {
        let path = self.out(name);
        if !path.is_file() {
            return Err(Error::Config(format!("{} not found; run `{producer}` first", path.display())));
        }
        Ok(path)
    }

    /// The coded table written by `ingest`.
    pub fn coded_table(&self) -> Result<CategoricalTable> {
        let table = self.require(CODED_TABLE, "ingest")?;
        let schema = self.require(SCHEMA, "ingest")?;
        let schema: Vec<FeatureSpec> =
            serde_json::from_str(&fs::read_to_string(&schema).map_err(|e| Error::io(&schema, e))?)?;
        CategoricalTable::from_csv(&fs::read_to_string(&table).map_err(|e| Error::io(&table, e))?, schema)
    }

    fn selected_table(&self, data: &CategoricalTable) -> Result<CategoricalTable> {
        let path = self.require(SELECTED, "select-features")?;
        let names: Vec<String> = fs::read_to_string(&path)
            .map_err(|e| Error::io(&path, e))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().to_string())
            .collect();
        data.project_names(&names)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestAudit {
    pub raw_rows: usize,
    pub cohort: Option<CohortCounts>,
    pub recode: RecodeAudit,
    pub coded_rows: usize,
    pub positives: usize,
    pub schema_hash: String,
}

pub fn cmd_ingest(run: &Run) -> Result<Vec<PathBuf>> {
    let data = &run.config.data;
    for (what, path) in [("raw extract", &data.raw), ("recode rules", &data.rules)] {
        if !path.is_file() {
            return Err(Error::Config(format!("{what} {} not found", path.display())));
        }
    }
    if !data.delimiter.is_ascii() {
        return Err(Error::Config(format!("delimiter {:?} is not ASCII", data.delimiter)));
    }
    let rules = RecodeRuleSet::load(&data.rules)?;
    let mut columns = rules.source_fields();
    if let Some(c) = &data.cohort {
        for f in [&c.alignment_field, &c.negotiating_field] {
            if !columns.iter().any(|o| o.eq_ignore_ascii_case(f)) {
                columns.push(f.clone());
            }
        }
    }
    let options = DelimitedOptions { delimiter: data.delimiter as u8, has_header: true };
    let raw = load_delimited(&data.raw, &columns, options)?;
    let raw_rows = raw.n_rows();
    let (raw, cohort) = match &data.cohort {
        Some(c) => {
            let (kept, counts) = filter_curve_cohort(&raw, c)?;
            (kept, Some(counts))
        }
        None => (raw, None),
    };
    let (table, audit) = recode(&raw, &rules, data.strict)?;
    log::info!("ingested {} of {raw_rows} raw rows", table.n_rows());
    let report = IngestAudit {
        raw_rows,
        cohort,
        recode: audit,
        coded_rows: table.n_rows(),
        positives: table.positives(),
        schema_hash: table.schema_hash(),
    };
    Ok(vec![
        run.write(CODED_TABLE, &table.to_csv()?)?,
        run.write(SCHEMA, &serde_json::to_string_pretty(table.schema())?)?,
        run.write(INGEST_AUDIT, &serde_json::to_string_pretty(&report)?)?,
    ])
}

fn selection_forest(run: &Run) -> ForestParams {
    ForestParams { seed: derive_seed(run.seed, "forest"), ..run.config.selection.forest.clone() }
}

/// Backward elimination, then a forest on the selected features for `explain`.
pub fn cmd_select_features(run: &Run) -> Result<Vec<PathBuf>> {
    let data = run.coded_table()?;
    let sel = &run.config.selection;
    let spec = EliminationSpec {
        folds: run.config.cv.folds,
        stratified: run.config.cv.stratified,
        background_size: sel.background_size,
        explain_rows: sel.explain_rows,
        seed: derive_seed(run.seed, "elimination"),
    };
    let params = selection_forest(run);
    let trace = backward_eliminate(&data, &params, &spec)?;
    let selected = data.project_names(trace.selected_features())?;
    let forest = train_forest(
        &selected,
        &ForestParams {
            features_per_split: params.features_per_split.map(|k| k.min(selected.n_features())),
            ..params
        },
    )?;
    let mut names = trace.selected_features().join("\n");
    names.push('\n');
    Ok(vec![
        run.write(TRACE, &trace.to_json()?)?,
        run.write(SELECTED, &names)?,
        run.write(FOREST, &forest.to_json()?)?,
    ])
}

pub fn load_trace(path: &Path) -> Result<EliminationTrace> {
    EliminationTrace::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub seed: u64,
    pub features: Vec<String>,
    pub n_rows: usize,
    pub leaderboard: Leaderboard,
}

/// Cross-validated comparison of the roster on one fold plan, plus C5.0
/// predictor importance and the best tree as DOT, both fit on all rows.
pub fn cmd_compare(run: &Run) -> Result<Vec<PathBuf>> {
    let all = run.coded_table()?;
    let data = match run.config.compare.features {
        FeatureSet::All => all,
        FeatureSet::Selected => run.selected_table(&all)?,
    };
    let cv = &run.config.cv;
    let plan = make_folds(data.n_rows(), cv.folds, cv.stratified, data.target(), derive_seed(run.seed, "folds"))?;
    let roster: Vec<RosterEntry> = if run.config.compare.roster.is_empty() {
        ModelSpec::roster().into_iter().map(RosterEntry::from).collect()
    } else {
        run.config.compare.roster.clone()
    };
    let roster: Vec<RosterEntry> = roster
        .into_iter()
        .map(|e| RosterEntry { spec: e.spec.with_seed(run.seed), search: e.search })
        .collect();
    let board = compare_models(&data, &roster, &plan)?;

    let mut coincidence = String::new();
    for row in &board.rows {
        coincidence += &format!("# {}\n{}\n", row.name, row.coincidence.render());
    }
    let report = CompareReport {
        seed: run.seed,
        features: data.feature_names(),
        n_rows: data.n_rows(),
        leaderboard: board.clone(),
    };
    let mut written = vec![
        run.write(LEADERBOARD, &board.render())?,
        run.write(REPORT, &serde_json::to_string_pretty(&report)?)?,
        run.write(COINCIDENCE, &coincidence)?,
    ];

    let c50 = board
        .rows
        .iter()
        .find(|r| matches!(r.spec, ModelSpec::Tree { algorithm: Algorithm::C50, .. }))
        .map_or_else(|| ModelSpec::tree(Algorithm::C50), |r| r.spec.clone());
    if let Model::Tree(tree) = c50.fit(&data)? {
        written.push(run.write(IMPORTANCE, &predictor_importance(&tree, &data)?.render())?);
    }
    if let Some(best) = board.rows.iter().find(|r| matches!(r.spec, ModelSpec::Tree { .. })) {
        if let Model::Tree(tree) = best.spec.fit(&data)? {
            written.push(run.write(TREE_DOT, &export_dot(&tree))?);
        }
    }
    Ok(written)
}

/// Largest tolerated gap between a row's output and base plus attributions.
pub const LOCAL_ACCURACY_TOLERANCE: f64 = 1e-9;

pub fn cmd_explain(run: &Run) -> Result<Vec<PathBuf>> {
    let path = run.require(FOREST, "select-features")?;
    let forest = Forest::from_json(&fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?;
    let all = run.coded_table()?;
    let names: Vec<String> = forest.schema.iter().map(|f| f.name.clone()).collect();
    let data = all.project_names(&names)?;
    let rows: Vec<usize> = if run.config.explain.rows.is_empty() {
        (0..data.n_rows()).collect()
    } else {
        run.config.explain.rows.clone()
    };
    if let Some(&bad) = rows.iter().find(|&&r| r >= data.n_rows()) {
        return Err(Error::Config(format!("explain row {bad} out of range ({} rows)", data.n_rows())));
    }
    let background =
        BackgroundSet::sample(&data, run.config.explain.background_size, derive_seed(run.seed, "explain/background"))?;
    let (attributions, global) = explain_rows(&forest, &data, &rows, &background)?;
    if let Some((i, a)) = attributions
        .iter()
        .enumerate()
        .find(|(_, a)| a.local_accuracy_error() > LOCAL_ACCURACY_TOLERANCE)
    {
        return Err(Error::InvalidParams(format!(
            "attributions for row {} miss the model output by {:e}",
            rows[i],
            a.local_accuracy_error()
        )));
    }
    Ok(vec![
        run.write(SHAP_VALUES, &attributions_csv(&names, &rows, &attributions))?,
        run.write(SHAP_RANKING, &global.to_csv())?,
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Ingest,
    SelectFeatures,
    Compare,
    Explain,
}

pub fn execute(command: Command, run: &Run) -> Result<Vec<PathBuf>> {
    match command {
        Command::Ingest => cmd_ingest(run),
        Command::SelectFeatures => cmd_select_features(run),
        Command::Compare => cmd_compare(run),
        Command::Explain => cmd_explain(run),
    }
}

/// Process exit status for a command outcome: 2 for usage and config
/// problems, 1 for failures during computation.
pub fn exit_code(result: &Result<Vec<PathBuf>>) -> i32 {
    match result {
        Ok(_) => 0,
        Err(Error::Config(_) | Error::InvalidSchema(_)) => 2,
        Err(_) => 1,
    }
}
