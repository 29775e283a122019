//! Experiment configuration and the stage functions that chain the modules into one run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bank::{build_bank, RepresentationBank, SelectionMethod};
use crate::comparator::{
    make_pair_dataset, train_comparator, ComparatorEpoch, ComparatorModel, HeadMode, Standardizer,
};
use crate::data::cifar;
use crate::data::shapes::{generate_dataset, ShapeClass, ShapeVariation};
use crate::data::{filter_classes, split, ClassAttribute, ClassInfo, LabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::eval::{Composition, EvalSets, Pipeline, Pooling, SweepReport};
use crate::joint::{train_joint, JointConfig};
use crate::nn::SgdConfig;
use crate::primary::{build_model, calibrate_uncertainty, train_primary, ModelKind, PrimaryModel, TrainReport, FC2};
use crate::relation::RelationTargets;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Shapes,
    Cifar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub seed: u64,
    pub known: Vec<String>,
    pub novel: String,
    /// Synthetic shapes: image counts.
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_novel: usize,
    pub variation: ShapeVariation,
    /// CIFAR: directory holding the binary batches.
    pub cifar_dir: Option<PathBuf>,
    /// CIFAR: training images kept per known class (0 = all).
    pub per_class: usize,
    /// CIFAR: fraction of the kept training images held out for validation.
    pub val_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Shapes,
            seed: 1,
            known: ShapeClass::KNOWN.iter().map(|c| c.name().to_string()).collect(),
            novel: ShapeClass::Angle.name().to_string(),
            n_train: 8000,
            n_val: 1000,
            n_test: 2000,
            n_novel: 1000,
            variation: ShapeVariation::default(),
            cifar_dir: None,
            per_class: 0,
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrimaryConfig {
    pub kind: ModelKind,
    pub point: String,
    pub init_seed: u64,
    pub sgd: SgdConfig,
}

impl Default for PrimaryConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::ConvNet,
            point: FC2.to_string(),
            init_seed: 7,
            sgd: SgdConfig { learning_rate: 0.1, batch_size: 16, epochs: 20, decay_every: 8, ..SgdConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankConfig {
    pub m: usize,
    pub method: SelectionMethod,
    pub seed: u64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self { m: 100, method: SelectionMethod::Greedy, seed: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparatorConfig {
    pub mode: HeadMode,
    pub head_hidden: usize,
    pub drop_fraction: f64,
    pub symmetrize: bool,
    pub standardize: bool,
    pub lambda: f64,
    pub init_seed: u64,
    pub pair_seed: u64,
    pub sgd: SgdConfig,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        Self {
            mode: HeadMode::Antisymmetric,
            head_hidden: 0,
            drop_fraction: 0.2,
            symmetrize: false,
            standardize: true,
            lambda: 0.0,
            init_seed: 13,
            pair_seed: 17,
            sgd: SgdConfig {
                learning_rate: 0.05,
                batch_size: 32,
                epochs: 30,
                decay_every: 10,
                seed: 19,
                ..SgdConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub gammas: Vec<f64>,
    pub bank_sizes: Vec<usize>,
    /// Threshold used for single-point evaluation and the bank-size sweep.
    pub gamma: f64,
    pub composition: Composition,
    pub pooling: Pooling,
    pub out_dir: PathBuf,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            gammas: vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.30],
            bank_sizes: vec![20, 40, 60, 80, 100, 200],
            gamma: 0.2,
            composition: Composition::ComparatorOnly,
            pooling: Pooling::Mean,
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// One reproducible experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub primary: PrimaryConfig,
    pub bank: BankConfig,
    pub comparator: ComparatorConfig,
    pub evaluation: EvaluationConfig,
}

/// Field-level configuration problem.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

fn merge_tables(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn field_err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), message: message.into() }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, ConfigError> {
        let user: toml::Table = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("bytes {}..{}", s.start, s.end)).unwrap_or_else(|| "config".into());
            field_err(&field, e.message())
        })?;
        // Partial nested tables keep the section's own defaults, not the bare struct defaults.
        let mut merged = toml::Table::try_from(Self::default()).expect("config serializes");
        merge_tables(&mut merged, user);
        let cfg: Self =
            toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| field_err("config", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| field_err("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn known_classes(&self) -> std::result::Result<Vec<ClassInfo>, ConfigError> {
        match self.dataset.kind {
            DatasetKind::Shapes => self
                .dataset
                .known
                .iter()
                .map(|n| {
                    n.parse::<ShapeClass>().map(ShapeClass::info).map_err(|e| field_err("dataset.known", e.to_string()))
                })
                .collect(),
            DatasetKind::Cifar => {
                let table = cifar::class_table();
                self.dataset
                    .known
                    .iter()
                    .map(|n| {
                        table
                            .iter()
                            .find(|c| &c.name == n)
                            .cloned()
                            .ok_or_else(|| field_err("dataset.known", format!("unknown CIFAR-10 class {n:?}")))
                    })
                    .collect()
            }
        }
    }

    pub fn novel_attribute(&self) -> std::result::Result<ClassAttribute, ConfigError> {
        let name = &self.dataset.novel;
        match self.dataset.kind {
            DatasetKind::Shapes => name
                .parse::<ShapeClass>()
                .map(|c| c.info().attribute)
                .map_err(|e| field_err("dataset.novel", e.to_string())),
            DatasetKind::Cifar => cifar::class_table()
                .into_iter()
                .find(|c| &c.name == name)
                .map(|c| c.attribute)
                .ok_or_else(|| field_err("dataset.novel", format!("unknown CIFAR-10 class {name:?}"))),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let d = &self.dataset;
        let known = self.known_classes()?;
        if known.len() < 2 {
            return Err(field_err("dataset.known", "at least two known classes are needed"));
        }
        self.novel_attribute()?;
        if d.known.contains(&d.novel) {
            return Err(field_err("dataset.novel", "the novel class must not be a known class"));
        }
        let c = known.len();
        if d.kind == DatasetKind::Shapes {
            for (name, n) in [("n_train", d.n_train), ("n_val", d.n_val), ("n_test", d.n_test)] {
                if n == 0 || n % c != 0 {
                    return Err(field_err(&format!("dataset.{name}"), format!("must be a positive multiple of {c}")));
                }
            }
            if d.n_novel == 0 {
                return Err(field_err("dataset.n_novel", "must be positive"));
            }
        } else if !(d.val_fraction > 0.0 && d.val_fraction < 1.0) {
            return Err(field_err("dataset.val_fraction", "must lie in (0, 1)"));
        }
        if let Some(dir) = &d.cifar_dir {
            if !dir.is_dir() {
                return Err(field_err("dataset.cifar_dir", format!("{} is not a directory", dir.display())));
            }
        }
        for (name, sgd) in [("primary.sgd", &self.primary.sgd), ("comparator.sgd", &self.comparator.sgd)] {
            sgd.validate().map_err(|e| field_err(name, e.to_string()))?;
        }
        if !["FLATTEN0", "FC1", "FC2"].contains(&self.primary.point.as_str()) {
            return Err(field_err("primary.point", "must be one of FLATTEN0, FC1, FC2"));
        }
        if self.bank.m < c {
            return Err(field_err("bank.m", format!("must be at least the {c} known classes")));
        }
        let cmp = &self.comparator;
        if !(0.0..1.0).contains(&cmp.drop_fraction) {
            return Err(field_err("comparator.drop_fraction", "must lie in [0, 1)"));
        }
        if !(cmp.lambda >= 0.0) {
            return Err(field_err("comparator.lambda", "must be non-negative"));
        }
        let e = &self.evaluation;
        if e.gammas.iter().any(|&g| !(g >= 0.0)) || !(e.gamma >= 0.0) {
            return Err(field_err("evaluation.gammas", "γ values must be non-negative"));
        }
        if e.gammas.windows(2).any(|w| w[1] < w[0]) {
            return Err(field_err("evaluation.gammas", "must be sorted ascending"));
        }
        if e.bank_sizes.iter().any(|&m| m < c || m % c != 0) {
            return Err(field_err(
                "evaluation.bank_sizes",
                format!("each size must be a multiple of {c} and at least {c}"),
            ));
        }
        if e.pooling == Pooling::Vote && cmp.mode != HeadMode::ThreeClass {
            return Err(field_err("evaluation.pooling", "vote pooling needs comparator.mode = \"three_class\""));
        }
        Ok(())
    }
}

/// Datasets for one run. `novel` carries the novel class as its only class.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBundle {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
    pub novel: LabeledDataset,
}

impl DataBundle {
    const NAMES: [&'static str; 4] = ["train", "val", "test", "novel"];

    pub fn parts(&self) -> [(&'static str, &LabeledDataset); 4] {
        [
            (Self::NAMES[0], &self.train),
            (Self::NAMES[1], &self.val),
            (Self::NAMES[2], &self.test),
            (Self::NAMES[3], &self.novel),
        ]
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, ds) in self.parts() {
            ds.save(dir.join(format!("{name}.rlds")))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let load = |name: &str| LabeledDataset::load(dir.join(format!("{name}.rlds")));
        Ok(Self { train: load("train")?, val: load("val")?, test: load("test")?, novel: load("novel")? })
    }

    pub fn exists(dir: &Path) -> bool {
        Self::NAMES.iter().all(|n| dir.join(format!("{n}.rlds")).is_file())
    }
}

fn shape_list(names: &[String]) -> Result<Vec<ShapeClass>> {
    names.iter().map(|n| n.parse()).collect()
}

/// Generates (shapes) or loads (CIFAR-10) the datasets described by `cfg`.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<DataBundle> {
    let d = &cfg.dataset;
    match d.kind {
        DatasetKind::Shapes => {
            let known = shape_list(&d.known)?;
            let novel = shape_list(std::slice::from_ref(&d.novel))?;
            let s = d.seed.wrapping_mul(4);
            Ok(DataBundle {
                train: generate_dataset(d.n_train, &known, &d.variation, s)?,
                val: generate_dataset(d.n_val, &known, &d.variation, s + 1)?,
                test: generate_dataset(d.n_test, &known, &d.variation, s + 2)?,
                novel: generate_dataset(d.n_novel, &novel, &d.variation, s + 3)?,
            })
        }
        DatasetKind::Cifar => {
            let dir = d.cifar_dir.as_ref().ok_or_else(|| invalid("CIFAR runs need dataset.cifar_dir"))?;
            let (train_all, test_all) = cifar::load_cifar10_dir(dir)?;
            cifar_bundle(cfg, &train_all, &test_all)
        }
    }
}

/// Filters CIFAR-10 splits down to the configured known and novel classes.
pub fn cifar_bundle(
    cfg: &ExperimentConfig,
    train_all: &LabeledDataset,
    test_all: &LabeledDataset,
) -> Result<DataBundle> {
    let d = &cfg.dataset;
    let known: Vec<&str> = d.known.iter().map(String::as_str).collect();
    let mut train = filter_classes(train_all, &known, true)?;
    if d.per_class > 0 {
        let keep: Vec<usize> = (0..train.num_classes())
            .flat_map(|k| train.indices_of(k).into_iter().take(d.per_class))
            .collect::<Vec<_>>();
        let mut keep = keep;
        keep.sort_unstable();
        train = train.subset(&keep)?;
    }
    let parts = split(&train, &[1.0 - d.val_fraction, d.val_fraction], d.seed)?;
    let test = filter_classes(test_all, &known, true)?;
    let novel = filter_classes(test_all, &[d.novel.as_str()], true)?;
    Ok(DataBundle { train: parts[0].clone(), val: parts[1].clone(), test, novel })
}

/// Builds, trains and calibrates the primary learner.
///
/// A positive `comparator.lambda` trains it jointly with a throwaway comparator, which only shapes the
/// representation; the bank comparator is trained afterwards as usual.
pub fn run_primary(cfg: &ExperimentConfig, data: &DataBundle) -> Result<(PrimaryModel, TrainReport)> {
    let p = &cfg.primary;
    let c = &cfg.comparator;
    let model = build_model(p.kind, data.train.image_shape(), data.train.classes(), p.init_seed)?;
    let (mut model, report) = if c.lambda > 0.0 {
        let z = RelationTargets::from_classes(data.train.classes())?;
        let cmp = ComparatorModel::new(c.mode, model.representation_width(&p.point)?, c.head_hidden, c.init_seed)?;
        let joint =
            JointConfig { lambda: c.lambda, point: p.point.clone(), pair_seed: c.pair_seed, comparator_l2: c.sgd.l2 };
        let (model, _, report) = train_joint(model, cmp, &data.train, &data.val, &z, &joint, &p.sgd)?;
        (model, report.primary)
    } else {
        train_primary(model, &data.train, &data.val, &p.sgd)?
    };
    model.gate = Some(calibrate_uncertainty(&model, &data.val)?);
    Ok((model, report))
}

pub fn run_bank(
    cfg: &ExperimentConfig,
    model: &PrimaryModel,
    train: &LabeledDataset,
    m: usize,
) -> Result<RepresentationBank> {
    build_bank(model, train, &cfg.primary.point, m, cfg.bank.method, cfg.bank.seed)
}

/// Trains a comparator on all ordered bank pairs.
pub fn run_comparator(
    cfg: &ExperimentConfig,
    bank: &RepresentationBank,
) -> Result<(ComparatorModel, Vec<ComparatorEpoch>)> {
    let c = &cfg.comparator;
    let z = RelationTargets::from_classes(&bank.classes)?;
    let symmetrize = c.symmetrize || c.mode == HeadMode::ThreeClass;
    let pairs = make_pair_dataset(bank, &z, c.drop_fraction, symmetrize, c.pair_seed)?;
    let mut model = ComparatorModel::new(c.mode, bank.width(), c.head_hidden, c.init_seed)?;
    if c.standardize {
        model.standardizer = Some(Standardizer::fit(&bank.rows));
    }
    train_comparator(model, &pairs, &c.sgd)
}

/// Headline numbers of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub gamma: f64,
    pub novelty_detection_rate: f64,
    pub false_positive_rate: f64,
    pub characterization_accuracy: f64,
    pub uncertainty_baseline: f64,
    pub primary_test_accuracy: f64,
    pub gamma_sweep: SweepReport,
}

pub fn pipeline<'a>(
    cfg: &ExperimentConfig,
    model: &'a PrimaryModel,
    comparator: &'a ComparatorModel,
    bank: &'a RepresentationBank,
) -> Result<Pipeline<'a>> {
    let mut p = Pipeline::new(model, comparator, bank)?;
    p.composition = cfg.evaluation.composition;
    p.pooling = cfg.evaluation.pooling;
    Ok(p)
}

pub fn eval_sets(cfg: &ExperimentConfig, p: &Pipeline, data: &DataBundle) -> Result<EvalSets> {
    let attr = cfg.novel_attribute().map_err(|e| invalid(e.to_string()))?;
    EvalSets::new(p, &data.test, data.novel.images(), attr)
}

pub fn run_evaluation(
    cfg: &ExperimentConfig,
    model: &PrimaryModel,
    comparator: &ComparatorModel,
    bank: &RepresentationBank,
    data: &DataBundle,
) -> Result<EvalSummary> {
    let p = pipeline(cfg, model, comparator, bank)?;
    let sets = eval_sets(cfg, &p, data)?;
    let row = sets.row(&p, cfg.evaluation.gamma, cfg.evaluation.gamma, cfg.dataset.seed)?;
    let gate = model.gate.ok_or_else(|| invalid("primary model has no calibrated gate"))?;
    Ok(EvalSummary {
        gamma: cfg.evaluation.gamma,
        novelty_detection_rate: row.novelty_detection_rate,
        false_positive_rate: row.false_positive_rate,
        characterization_accuracy: row.characterization_accuracy,
        uncertainty_baseline: crate::eval::eval_uncertainty_baseline(model, &gate, data.novel.images())?,
        primary_test_accuracy: crate::primary::accuracy(model, &data.test)?,
        gamma_sweep: crate::eval::sweep_gamma(&p, &sets, &cfg.evaluation.gammas, cfg.dataset.seed)?,
    })
}

/// Rebuilds the bank and retrains the comparator at each size; one row per size at `cfg.evaluation.gamma`.
pub fn sweep_bank_size(
    cfg: &ExperimentConfig,
    model: &PrimaryModel,
    data: &DataBundle,
    sizes: &[usize],
) -> Result<SweepReport> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &m in sizes {
        let bank = run_bank(cfg, model, &data.train, m)?;
        let (comparator, _) = run_comparator(cfg, &bank)?;
        let p = pipeline(cfg, model, &comparator, &bank)?;
        let sets = eval_sets(cfg, &p, data)?;
        rows.push(sets.row(&p, cfg.evaluation.gamma, m as f64, cfg.bank.seed)?);
    }
    Ok(SweepReport { rows })
}

/// Markdown summary of an evaluation and optional bank-size sweep.
pub fn render_report(title: &str, summary: &EvalSummary, bank_sweep: Option<&SweepReport>) -> String {
    let mut out = format!("# {title}\n\n");
    out += &format!("- primary test accuracy: {:.4}\n", summary.primary_test_accuracy);
    out += &format!("- uncertainty baseline (novel flagged uncertain): {:.4}\n", summary.uncertainty_baseline);
    out += &format!(
        "- at gamma {}: novelty detection {:.4}, false positives {:.4}, characterization {:.4}\n",
        summary.gamma, summary.novelty_detection_rate, summary.false_positive_rate, summary.characterization_accuracy
    );
    let table = |out: &mut String, head: &str, r: &SweepReport| {
        *out += &format!("\n| {head} | novelty detection | false positives | characterization |\n|---|---|---|---|\n");
        for row in &r.rows {
            *out += &format!(
                "| {} | {:.4} | {:.4} | {:.4} |\n",
                row.sweep_param, row.novelty_detection_rate, row.false_positive_rate, row.characterization_accuracy
            );
        }
    };
    table(&mut out, "gamma", &summary.gamma_sweep);
    if let Some(r) = bank_sweep {
        table(&mut out, "M", r);
    }
    out
}

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        Error::InvalidArgument(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("[bank]\nm = 40\n[evaluation]\ngammas = [0.1]\n").unwrap();
        assert_eq!(cfg.bank.m, 40);
        assert_eq!(cfg.dataset.n_train, 8000);
    }

    #[test]
    fn partial_nested_table_keeps_section_defaults() {
        let cfg = ExperimentConfig::from_toml("[primary.sgd]\nepochs = 3\n").unwrap();
        let mut want = ExperimentConfig::default().primary.sgd;
        want.epochs = 3;
        assert_eq!(cfg.primary.sgd, want);
        assert_eq!(cfg.comparator.sgd, ExperimentConfig::default().comparator.sgd);
        let err = ExperimentConfig::from_toml("[primary.sgd]\nlr = 3\n").unwrap_err();
        assert!(err.to_string().contains("lr"), "{err}");
    }

    #[test]
    fn invalid_fields_are_named() {
        let cases = [
            ("[bank]\nm = 3\n", "bank.m"),
            ("[dataset]\nnovel = \"line\"\n", "dataset.novel"),
            ("[evaluation]\ngammas = [0.2, 0.1]\n", "evaluation.gammas"),
            ("[evaluation]\nbank_sizes = [10]\n", "evaluation.bank_sizes"),
            ("[comparator]\ndrop_fraction = 1.0\n", "comparator.drop_fraction"),
            ("[primary.sgd]\nlearning_rate = 0.0\n", "primary.sgd"),
            ("[dataset]\nknown = [\"line\", \"hexagon\"]\n", "dataset.known"),
        ];
        for (text, field) in cases {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert_eq!(err.field, field, "{text}");
        }
        let err = ExperimentConfig::from_toml("[bank]\nbudget = 3\n").unwrap_err();
        assert!(err.message.contains("budget"), "{err}");
    }

    #[test]
    fn shapes_bundle_sizes() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.n_train = 40;
        cfg.dataset.n_val = 8;
        cfg.dataset.n_test = 12;
        cfg.dataset.n_novel = 5;
        let data = prepare_data(&cfg).unwrap();
        assert_eq!([data.train.len(), data.val.len(), data.test.len(), data.novel.len()], [40, 8, 12, 5]);
        assert_eq!(data.novel.classes()[0].name, "angle");
        assert_eq!(prepare_data(&cfg).unwrap(), data);
        let dir = tempfile::tempdir().unwrap();
        data.save(dir.path()).unwrap();
        assert!(DataBundle::exists(dir.path()));
        assert_eq!(DataBundle::load(dir.path()).unwrap(), data);
    }
}
