use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use relmem::bank::{build_memory_graph, RepresentationBank};
use relmem::comparator::ComparatorModel;
use relmem::eval::{signatures_csv, sweep_gamma, SweepReport};
use relmem::pipeline::{
    eval_sets, pipeline, prepare_data, render_report, run_bank, run_comparator, run_evaluation, run_primary,
    sweep_bank_size, DataBundle, EvalSummary, ExperimentConfig,
};
use relmem::primary::{accuracy, PrimaryModel};
use relmem::selftest::{gradient_suite, submodular_suite};

use crate::error::{io, CliError};
use crate::manifest::{config_hash, Manifest, VERSION};
use crate::Command;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub threads: Option<usize>,
    hash: String,
}

const DATA: &str = "data";
const PRIMARY: &str = "primary.rlnn";
const BANK: &str = "bank.rbnk";
const COMPARATOR: &str = "comparator.rlnn";
const SUMMARY: &str = "summary.json";
const BANK_SWEEP: &str = "bank_sweep.csv";

impl Context {
    pub fn new(
        config: Option<&Path>,
        seed: Option<u64>,
        out: Option<PathBuf>,
        threads: Option<usize>,
    ) -> Result<Self, CliError> {
        let mut cfg = match config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = seed {
            cfg.dataset.seed = s;
            cfg.validate()?;
        }
        let out = out.unwrap_or_else(|| cfg.evaluation.out_dir.clone());
        let hash = config_hash(&cfg.to_toml());
        Ok(Self { cfg, out, threads, hash })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Path of an upstream artifact, or the exit-3 error naming the command that makes it.
    fn require(&self, name: &str, command: &'static str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        let present = if name == DATA { DataBundle::exists(&p) } else { p.is_file() };
        if present {
            Ok(p)
        } else {
            Err(CliError::Missing { artifact: p, command })
        }
    }

    fn data(&self) -> Result<DataBundle, CliError> {
        Ok(DataBundle::load(&self.require(DATA, "gen-data")?)?)
    }

    fn primary(&self) -> Result<PrimaryModel, CliError> {
        Ok(PrimaryModel::load(self.require(PRIMARY, "train-primary")?)?)
    }

    fn bank(&self) -> Result<RepresentationBank, CliError> {
        Ok(RepresentationBank::load(self.require(BANK, "build-bank")?)?)
    }

    fn comparator(&self) -> Result<ComparatorModel, CliError> {
        Ok(ComparatorModel::load(self.require(COMPARATOR, "train-comparator")?)?)
    }

    fn write(&self, name: &str, text: &str) -> Result<String, CliError> {
        let p = self.path(name);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(io(dir))?;
        }
        std::fs::write(&p, text).map_err(io(&p))?;
        Ok(name.to_string())
    }

    fn mkdir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out).map_err(io(&self.out))
    }
}

pub fn dispatch(ctx: &Context, command: Command) -> Result<(), CliError> {
    let start = Instant::now();
    let (artifacts, details) = match command {
        Command::GenData => gen_data(ctx)?,
        Command::TrainPrimary => train_primary(ctx)?,
        Command::BuildBank => build_bank(ctx)?,
        Command::TrainComparator => train_comparator(ctx)?,
        Command::Evaluate => evaluate(ctx)?,
        Command::Sweep { bank_sizes } => sweep(ctx, bank_sizes)?,
        Command::Report => report(ctx)?,
        Command::Selftest => selftest()?,
    };
    let manifest = Manifest {
        command: command.name(),
        version: VERSION,
        config_hash: ctx.hash.clone(),
        seed: ctx.cfg.dataset.seed,
        threads: ctx.threads,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        artifacts,
        details,
    };
    ctx.mkdir()?;
    manifest.write(&ctx.out)
}

type Outcome = Result<(Vec<String>, serde_json::Value), CliError>;

fn gen_data(ctx: &Context) -> Outcome {
    let data = prepare_data(&ctx.cfg)?;
    let dir = ctx.path(DATA);
    data.save(&dir)?;
    ctx.write("config.toml", &ctx.cfg.to_toml())?;
    let mut artifacts = vec!["config.toml".to_string()];
    let mut prints = serde_json::Map::new();
    for (name, ds) in data.parts() {
        let fp = format!("{:016x}", ds.fingerprint());
        println!("{name}: {} examples, fingerprint {fp}", ds.len());
        artifacts.push(format!("{DATA}/{name}.rlds"));
        prints.insert(name.to_string(), json!({ "examples": ds.len(), "fingerprint": fp }));
    }
    Ok((artifacts, serde_json::Value::Object(prints)))
}

fn train_primary(ctx: &Context) -> Outcome {
    let data = ctx.data()?;
    let (model, report) = run_primary(&ctx.cfg, &data)?;
    ctx.mkdir()?;
    model.save(ctx.path(PRIMARY))?;
    let mut csv = String::from("epoch,learning_rate,train_loss,train_accuracy,val_accuracy\n");
    for h in &report.history {
        let _ = writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6}",
            h.epoch, h.learning_rate, h.train_loss, h.train_accuracy, h.val_accuracy
        );
    }
    let history = ctx.write("primary_history.csv", &csv)?;
    let test = accuracy(&model, &data.test)?;
    let tau = model.gate.map(|g| g.threshold);
    println!("best epoch {} val {:.4} test {:.4} gate {:?}", report.best_epoch, report.best_val_accuracy, test, tau);
    Ok((
        vec![PRIMARY.into(), history],
        json!({ "best_epoch": report.best_epoch, "val_accuracy": report.best_val_accuracy, "test_accuracy": test, "tau_u": tau }),
    ))
}

fn build_bank(ctx: &Context) -> Outcome {
    let data = ctx.data()?;
    let model = ctx.primary()?;
    let bank = run_bank(&ctx.cfg, &model, &data.train, ctx.cfg.bank.m)?;
    bank.save(ctx.path(BANK))?;
    let graph = build_memory_graph(&bank, &bank.classes)?;
    let graph_csv = ctx.write("memory_graph.csv", &graph.to_csv())?;
    let fp = format!("{:016x}", bank.fingerprint());
    println!(
        "bank: {} rows of width {} at {} ({}), fingerprint {fp}",
        bank.len(),
        bank.width(),
        bank.layer,
        bank.method
    );
    Ok((vec![BANK.into(), graph_csv], json!({ "rows": bank.len(), "width": bank.width(), "fingerprint": fp })))
}

fn train_comparator(ctx: &Context) -> Outcome {
    let bank = ctx.bank()?;
    let (model, history) = run_comparator(&ctx.cfg, &bank)?;
    model.save(ctx.path(COMPARATOR))?;
    let mut csv = String::from("epoch,loss,pair_accuracy\n");
    for h in &history {
        let _ = writeln!(csv, "{},{:.6},{:.6}", h.epoch, h.loss, h.accuracy);
    }
    let hist = ctx.write("comparator_history.csv", &csv)?;
    let last = history.last().map(|h| (h.loss, h.accuracy));
    println!("comparator ({}) final loss/pair accuracy {:?}", model.mode, last);
    Ok((vec![COMPARATOR.into(), hist], json!({ "final": last })))
}

fn evaluate(ctx: &Context) -> Outcome {
    let data = ctx.data()?;
    let model = ctx.primary()?;
    let bank = ctx.bank()?;
    let cmp = ctx.comparator()?;
    let summary = run_evaluation(&ctx.cfg, &model, &cmp, &bank, &data)?;
    let summary_file = ctx.write(SUMMARY, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    let p = pipeline(&ctx.cfg, &model, &cmp, &bank)?;
    let gamma = ctx.cfg.evaluation.gamma;
    let mut results = p.characterize_set(data.test.images(), gamma)?;
    let mut truth: Vec<String> = data.test.labels().iter().map(|&l| data.test.classes()[l].name.clone()).collect();
    results.extend(p.characterize_set(data.novel.images(), gamma)?);
    truth.extend(std::iter::repeat(ctx.cfg.dataset.novel.clone()).take(data.novel.len()));
    let sigs = ctx.write("signatures.csv", &signatures_csv(&results, &truth, &bank.classes))?;
    println!(
        "gamma {}: novelty detection {:.4}, false positives {:.4}, characterization {:.4}, uncertainty baseline {:.4}",
        summary.gamma,
        summary.novelty_detection_rate,
        summary.false_positive_rate,
        summary.characterization_accuracy,
        summary.uncertainty_baseline
    );
    Ok((vec![summary_file, sigs], serde_json::to_value(&summary)?))
}

fn sweep(ctx: &Context, bank_sizes: bool) -> Outcome {
    let data = ctx.data()?;
    let model = ctx.primary()?;
    let bank = ctx.bank()?;
    let cmp = ctx.comparator()?;
    let p = pipeline(&ctx.cfg, &model, &cmp, &bank)?;
    let sets = eval_sets(&ctx.cfg, &p, &data)?;
    let report = sweep_gamma(&p, &sets, &ctx.cfg.evaluation.gammas, ctx.cfg.dataset.seed)?;
    print!("{}", report.to_csv());
    let mut artifacts = vec![ctx.write("gamma_sweep.csv", &report.to_csv())?];
    if bank_sizes {
        let m = sweep_bank_size(&ctx.cfg, &model, &data, &ctx.cfg.evaluation.bank_sizes)?;
        print!("{}", m.to_csv());
        artifacts.push(ctx.write(BANK_SWEEP, &m.to_csv())?);
    }
    Ok((artifacts, json!({ "gammas": ctx.cfg.evaluation.gammas, "bank_sizes": bank_sizes })))
}

fn report(ctx: &Context) -> Outcome {
    let path = ctx.require(SUMMARY, "evaluate")?;
    let text = std::fs::read_to_string(&path).map_err(io(&path))?;
    let summary: EvalSummary = serde_json::from_str(&text)?;
    let bank_sweep = match std::fs::read_to_string(ctx.path(BANK_SWEEP)) {
        Ok(t) => Some(SweepReport::from_csv(&t)?),
        Err(_) => None,
    };
    let title = format!("relmem: {} with novel class {}", ctx.cfg.dataset.known.join(", "), ctx.cfg.dataset.novel);
    let md = render_report(&title, &summary, bank_sweep.as_ref());
    print!("{md}");
    Ok((vec![ctx.write("report.md", &md)?], json!({ "bank_sweep": bank_sweep.is_some() })))
}

fn selftest() -> Outcome {
    let grads = gradient_suite()?;
    for g in &grads {
        println!(
            "{} {}: max relative error {:.3e} (tolerance {:.0e}, {} parameters)",
            if g.passed() { "PASS" } else { "FAIL" },
            g.name,
            g.max_relative_error,
            g.tolerance,
            g.checked
        );
    }
    let sub = submodular_suite(200, 8, 1)?;
    println!(
        "{} submodularity: {} triples, {} greedy runs, worst greedy/optimal {:.4}",
        if sub.passed() { "PASS" } else { "FAIL" },
        sub.triples,
        sub.greedy_runs,
        sub.worst_greedy_ratio
    );
    if !(sub.passed() && grads.iter().all(|g| g.passed())) {
        return Err(CliError::Failed("selftest failed".into()));
    }
    Ok((Vec::new(), json!({ "gradients": grads, "submodular": sub })))
}
