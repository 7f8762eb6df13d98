//! The experiment stages. Each reads what earlier stages wrote to the
//! output directory and returns a one-line summary.

use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Instant;

use beatgan::classifier::{predict, train_classifier, ClassifierError, CnnConfig, CnnModel};
use beatgan::data::{
    self, load_csv, rebalance, save_csv, surrogate, write_histogram_csv, BalancePlan, BalancePolicy, BeatPool,
    ClassAction, DataError, Dataset, Origin,
};
use beatgan::gan::{self, GanConfig, GanError, GanModel, TrainingTrace};
use beatgan::metrics::{render_delta, render_report, MetricsError, MetricsReport, ReportFormat};
use beatgan::rng::{self, stage_seed};
use log::{info, warn};
use rand::seq::SliceRandom;

use crate::config::RunConfig;
use crate::waveforms::export_waveforms;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Failure {
    Usage,
    Data,
    Training,
}

impl Failure {
    pub fn exit_code(self) -> i32 {
        match self {
            Failure::Usage => 1,
            Failure::Data => 2,
            Failure::Training => 3,
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub kind: Failure,
    pub message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            Failure::Usage => "usage error",
            Failure::Data => "data error",
            Failure::Training => "training failure",
        };
        write!(f, "{kind} in stage {}: {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

pub type StageResult<T> = Result<T, StageError>;

fn fail(stage: &'static str, kind: Failure, message: impl fmt::Display) -> StageError {
    StageError {
        stage,
        kind,
        message: message.to_string(),
    }
}

fn data(stage: &'static str) -> impl Fn(DataError) -> StageError {
    move |e| fail(stage, Failure::Data, e)
}

fn io<'a>(stage: &'static str, path: &'a Path) -> impl Fn(io::Error) -> StageError + 'a {
    move |e| fail(stage, Failure::Data, format!("{}: {e}", path.display()))
}

fn gan_failure(stage: &'static str) -> impl Fn(GanError) -> StageError {
    move |e| {
        let kind = match e {
            GanError::Diverged { .. } | GanError::Nn(_) => Failure::Training,
            GanError::Config(_) => Failure::Usage,
            GanError::Training(_) | GanError::Checkpoint(_) => Failure::Data,
        };
        fail(stage, kind, e)
    }
}

fn classifier_failure(stage: &'static str) -> impl Fn(ClassifierError) -> StageError {
    move |e| {
        let kind = match e {
            ClassifierError::Diverged { .. } | ClassifierError::Nn(_) => Failure::Training,
            ClassifierError::Config(_) => Failure::Usage,
            ClassifierError::Training(_) | ClassifierError::Checkpoint(_) => Failure::Data,
        };
        fail(stage, kind, e)
    }
}

fn metrics_failure(stage: &'static str) -> impl Fn(MetricsError) -> StageError {
    move |e| fail(stage, Failure::Data, e)
}

/// Writes through a temporary sibling and renames, so a file is either the
/// old or the complete new version.
fn write_atomic(stage: &'static str, path: &Path, bytes: &[u8]) -> StageResult<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(io(stage, &tmp))?;
    fs::rename(&tmp, path).map_err(io(stage, path))
}

fn csv_bytes(ds: &Dataset, with_origin: bool) -> Vec<u8> {
    let mut buf = Vec::new();
    data::write_csv(ds, &mut buf, with_origin).expect("writing to memory");
    buf
}

/// Holds `<out>/.beatgan.lock` for as long as it lives.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(out: &Path) -> StageResult<Self> {
        fs::create_dir_all(out).map_err(io("lock", out))?;
        let path = out.join(".beatgan.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(fail(
                "lock",
                Failure::Data,
                format!(
                    "{} is in use by another run (delete {} if that run is gone)",
                    out.display(),
                    path.display()
                ),
            )),
            Err(e) => Err(io("lock", &path)(e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn gan_ckpt_name(class: u8) -> String {
    format!("gan_class{class}.ckpt")
}

pub fn synthetic_name(class: u8) -> String {
    format!("synthetic_class{class}.csv")
}

pub const BALANCED_TRAIN: &str = "balanced_train.csv";

fn load(stage: &'static str, path: &Path) -> StageResult<Dataset> {
    load_csv(path).map_err(data(stage))
}

pub fn balance_policy(cfg: &RunConfig) -> BalancePolicy {
    BalancePolicy::uniform(cfg.balance_target(), stage_seed(cfg.seed, rng::BALANCE_OFFSET))
}

fn balance_plan(stage: &'static str, cfg: &RunConfig, train: &Dataset) -> StageResult<BalancePlan> {
    balance_policy(cfg).plan(&train.class_histogram()).map_err(data(stage))
}

fn synthesized_classes(plan: &BalancePlan) -> Vec<u8> {
    plan.classes
        .iter()
        .filter(|c| c.action == ClassAction::Synthesize)
        .map(|c| c.class)
        .collect()
}

pub fn gan_config(cfg: &RunConfig, class: u8) -> GanConfig {
    GanConfig {
        seed: stage_seed(cfg.seed, rng::GAN_OFFSET) + u64::from(class),
        ..cfg.gan
    }
}

pub fn cnn_config(cfg: &RunConfig) -> CnnConfig {
    CnnConfig {
        seed: stage_seed(cfg.seed, rng::CNN_OFFSET),
        ..cfg.cnn
    }
}

fn secs(start: Instant) -> String {
    format!("{:.1} s", start.elapsed().as_secs_f64())
}

pub fn stats(cfg: &RunConfig) -> StageResult<String> {
    const STAGE: &str = "stats";
    let train = load(STAGE, &cfg.train_csv)?;
    let hist = train.class_histogram();
    let mut buf = Vec::new();
    write_histogram_csv(&hist, &mut buf).expect("writing to memory");
    write_atomic(STAGE, &cfg.out_path("histogram.csv"), &buf)?;
    Ok(format!("stats: class counts {hist} ({} beats)", hist.total()))
}

/// Real beats of `class` that its GAN trains on.
pub fn gan_training_beats(cfg: &RunConfig, train: &Dataset, class: u8) -> Dataset {
    let real = train.of_class(class);
    match cfg.gan_cap() {
        Some(cap) => data::cap_classes(&real, cap, stage_seed(cfg.seed, rng::CAP_OFFSET)),
        None => real,
    }
}

type GanOutcome = Result<(GanModel, TrainingTrace), GanError>;

pub fn train_gan(cfg: &RunConfig) -> StageResult<String> {
    const STAGE: &str = "train-gan";
    let start = Instant::now();
    let train = load(STAGE, &cfg.train_csv)?;
    let plan = balance_plan(STAGE, cfg, &train)?;
    let classes = cfg.classes.clone().unwrap_or_else(|| synthesized_classes(&plan));
    if classes.is_empty() {
        return Ok("train-gan: no class needs synthetic beats".into());
    }
    let sets: Vec<(u8, Dataset)> = classes
        .iter()
        .map(|&c| (c, gan_training_beats(cfg, &train, c)))
        .collect();
    let results: Vec<(u8, GanOutcome)> = thread::scope(|s| {
        let handles: Vec<_> = sets
            .iter()
            .map(|(class, beats)| {
                let gcfg = gan_config(cfg, *class);
                let class = *class;
                s.spawn(move || {
                    info!(
                        "class {class}: training GAN on {} real beats for {} epochs",
                        beats.len(),
                        gcfg.epochs
                    );
                    let res = gan::train_gan(beats.beats(), class, gcfg, &mut |e| {
                        if e.epoch % 10 == 0 || e.epoch == gcfg.epochs {
                            info!(
                                "class {class} epoch {}: L_D {:.4} L_G {:.4} D(x) {:.3} D(G(z)) {:.3}",
                                e.epoch, e.loss_d, e.loss_g, e.d_real, e.d_fake
                            );
                        }
                    });
                    (class, res)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("GAN worker panicked"))
            .collect()
    });
    let mut parts = Vec::new();
    for (class, res) in results {
        let (model, trace) = res.map_err(gan_failure(STAGE))?;
        let mut ckpt = Vec::new();
        model
            .checkpoint()
            .write_to(&mut ckpt)
            .map_err(|e| fail(STAGE, Failure::Data, e))?;
        write_atomic(STAGE, &cfg.out_path(&gan_ckpt_name(class)), &ckpt)?;
        write_atomic(
            STAGE,
            &cfg.out_path(&format!("gan_class{class}_trace.csv")),
            trace.to_csv().as_bytes(),
        )?;
        let last = trace.last().expect("at least one epoch");
        parts.push(format!(
            "class {class} D(G(z)) {:.3} L_G {:.3}",
            last.d_fake, last.loss_g
        ));
    }
    Ok(format!("train-gan: {} ({})", parts.join(", "), secs(start)))
}

pub fn synthesize(cfg: &RunConfig) -> StageResult<String> {
    const STAGE: &str = "synthesize";
    let train = load(STAGE, &cfg.train_csv)?;
    let plan = balance_plan(STAGE, cfg, &train)?;
    let mut parts = Vec::new();
    for c in plan.classes.iter().filter(|c| c.action == ClassAction::Synthesize) {
        if cfg.classes.as_ref().is_some_and(|list| !list.contains(&c.class)) {
            continue;
        }
        let path = cfg.out_path(&gan_ckpt_name(c.class));
        if !path.exists() {
            return Err(fail(
                STAGE,
                Failure::Data,
                format!(
                    "class {} needs {} synthetic beats but {} is missing; run train-gan first",
                    c.class,
                    c.delta,
                    path.display()
                ),
            ));
        }
        let model = GanModel::load(&path).map_err(gan_failure(STAGE))?;
        let seed = stage_seed(cfg.seed, rng::SYNTH_OFFSET) + u64::from(c.class);
        let beats = gan::synthesize(&model, c.delta as usize, seed).map_err(gan_failure(STAGE))?;
        let ds = Dataset::from_beats(beats, Origin::Synthetic);
        write_atomic(STAGE, &cfg.out_path(&synthetic_name(c.class)), &csv_bytes(&ds, true))?;
        parts.push(format!("class {} +{}", c.class, ds.len()));
    }
    if parts.is_empty() {
        return Ok("synthesize: nothing to synthesize".into());
    }
    Ok(format!("synthesize: {}", parts.join(", ")))
}

pub fn balance(cfg: &RunConfig) -> StageResult<String> {
    const STAGE: &str = "balance";
    let train = load(STAGE, &cfg.train_csv)?;
    let policy = balance_policy(cfg);
    let plan = policy.plan(&train.class_histogram()).map_err(data(STAGE))?;
    let mut pool = BeatPool::new();
    for class in synthesized_classes(&plan) {
        let path = cfg.out_path(&synthetic_name(class));
        if !path.exists() {
            return Err(fail(
                STAGE,
                Failure::Data,
                format!(
                    "class {class} needs synthetic beats but {} is missing; run synthesize first",
                    path.display()
                ),
            ));
        }
        pool.add(load(STAGE, &path)?.beats().iter().cloned());
    }
    let (balanced, plan) = rebalance(&train, &policy, &mut pool).map_err(data(STAGE))?;
    write_atomic(STAGE, &cfg.out_path(BALANCED_TRAIN), &csv_bytes(&balanced, true))?;
    write_atomic(STAGE, &cfg.out_path("balance_plan.csv"), plan.to_csv().as_bytes())?;
    let deltas: Vec<String> = plan.classes.iter().map(|c| format!("{:+}", c.delta)).collect();
    Ok(format!(
        "balance: class counts {} ({} beats), deltas {}",
        balanced.class_histogram(),
        balanced.len(),
        deltas.join("/")
    ))
}

/// Trains the classifier on `train`, evaluates on `test` and writes the
/// `cnn_{name}`, `report_{name}` and `confusion_{name}` artifacts.
pub fn run_experiment(
    stage: &'static str,
    cfg: &RunConfig,
    name: &str,
    train: &Dataset,
    test: &Dataset,
) -> StageResult<MetricsReport> {
    let ccfg = cnn_config(cfg);
    info!(
        "{name}: training classifier on {} beats ({})",
        train.len(),
        train.class_histogram()
    );
    let (model, trace) = train_classifier(train, ccfg, &mut |epoch, loss| {
        info!("{name} epoch {epoch}: mean loss {loss:.4}")
    })
    .map_err(classifier_failure(stage))?;
    let report = evaluate(stage, &model, test)?;
    let mut ckpt = Vec::new();
    model
        .checkpoint()
        .write_to(&mut ckpt)
        .map_err(|e| fail(stage, Failure::Data, e))?;
    write_atomic(stage, &cfg.out_path(&format!("cnn_{name}.ckpt")), &ckpt)?;
    write_atomic(
        stage,
        &cfg.out_path(&format!("cnn_{name}_trace.csv")),
        trace.to_csv().as_bytes(),
    )?;
    write_atomic(
        stage,
        &cfg.out_path(&format!("report_{name}.json")),
        &render_report(&report, ReportFormat::JsonDoc),
    )?;
    write_atomic(
        stage,
        &cfg.out_path(&format!("report_{name}.txt")),
        &render_report(&report, ReportFormat::PlainTable),
    )?;
    write_atomic(
        stage,
        &cfg.out_path(&format!("confusion_{name}.csv")),
        report.confusion.to_csv().as_bytes(),
    )?;
    Ok(report)
}

pub fn evaluate(stage: &'static str, model: &CnnModel, test: &Dataset) -> StageResult<MetricsReport> {
    let pred: Vec<usize> = predict(model, test)
        .map_err(classifier_failure(stage))?
        .into_iter()
        .map(usize::from)
        .collect();
    MetricsReport::evaluate(&test.labels(), &pred, data::NUM_CLASSES).map_err(metrics_failure(stage))
}

fn load_balanced(stage: &'static str, cfg: &RunConfig) -> StageResult<Dataset> {
    let path = cfg.out_path(BALANCED_TRAIN);
    if !path.exists() {
        return Err(fail(
            stage,
            Failure::Data,
            format!("{} is missing; run balance first", path.display()),
        ));
    }
    load(stage, &path)
}

pub fn train_eval(cfg: &RunConfig) -> StageResult<String> {
    const STAGE: &str = "train-eval";
    let start = Instant::now();
    let train = load_balanced(STAGE, cfg)?;
    let test = load(STAGE, &cfg.test_csv)?;
    let r = run_experiment(STAGE, cfg, "balanced", &train, &test)?;
    Ok(format!(
        "train-eval: balanced accuracy {:.4}, macro recall {:.4}, macro F1 {:.4} ({})",
        r.accuracy,
        r.macro_avg.recall,
        r.macro_avg.f1,
        secs(start)
    ))
}

/// Training set of the unbalanced experiment: the original proportions,
/// subsampled per class at desk scale.
pub fn unbalanced_train(cfg: &RunConfig, train: &Dataset) -> Result<Dataset, DataError> {
    data::stratified_subsample(
        train,
        cfg.unbalanced_fraction(),
        stage_seed(cfg.seed, rng::SUBSAMPLE_OFFSET),
    )
}

pub fn compare(cfg: &RunConfig) -> StageResult<String> {
    const STAGE: &str = "compare";
    let start = Instant::now();
    let balanced_train = load_balanced(STAGE, cfg)?;
    let train = load(STAGE, &cfg.train_csv)?;
    let test = load(STAGE, &cfg.test_csv)?;
    let unbalanced_train = unbalanced_train(cfg, &train).map_err(data(STAGE))?;
    let before = run_experiment(STAGE, cfg, "unbalanced", &unbalanced_train, &test)?;
    let after = run_experiment(STAGE, cfg, "balanced", &balanced_train, &test)?;
    let delta = render_delta(&before, &after, "unbalanced", "balanced");
    write_atomic(STAGE, &cfg.out_path("delta_report.txt"), delta.as_bytes())?;
    Ok(format!(
        "compare: macro recall {:.4} -> {:.4}, class 3 recall {:.4} -> {:.4}, class 3 F1 {:.4} -> {:.4} ({})",
        before.macro_avg.recall,
        after.macro_avg.recall,
        before.classes[3].recall,
        after.classes[3].recall,
        before.classes[3].f1,
        after.classes[3].f1,
        secs(start)
    ))
}

pub fn waveforms(cfg: &RunConfig) -> StageResult<String> {
    const STAGE: &str = "waveforms";
    let train = load(STAGE, &cfg.train_csv)?;
    let mut rng = rng::seeded(stage_seed(cfg.seed, rng::WAVEFORM_OFFSET));
    let mut picked = Dataset::new();
    for class in 0..data::NUM_CLASSES as u8 {
        if cfg.classes.as_ref().is_some_and(|list| !list.contains(&class)) {
            continue;
        }
        let path = cfg.out_path(&synthetic_name(class));
        if !path.exists() {
            warn!(
                "class {class}: no synthetic beats at {}, skipping waveform export",
                path.display()
            );
            continue;
        }
        let synthetic = load(STAGE, &path)?;
        let real = train.of_class(class);
        let mut order: Vec<usize> = (0..real.len()).collect();
        order.shuffle(&mut rng);
        order.truncate(cfg.waveform_pairs);
        order.sort_unstable();
        picked.extend(real.select(&order));
        let n = cfg.waveform_pairs.min(synthetic.len());
        picked.extend(synthetic.select(&(0..n).collect::<Vec<_>>()));
    }
    let files = export_waveforms(&picked, cfg.waveform_pairs, &cfg.out).map_err(io(STAGE, &cfg.out))?;
    Ok(format!("waveforms: wrote {} files", files.len()))
}

pub fn surrogate_data(cfg: &RunConfig) -> StageResult<String> {
    const STAGE: &str = "surrogate";
    let train = surrogate::generate(surrogate::TRAIN_COUNTS, cfg.seed);
    let test = surrogate::generate(surrogate::TEST_COUNTS, cfg.seed.wrapping_add(1));
    for (path, ds) in [(&cfg.train_csv, &train), (&cfg.test_csv, &test)] {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io(STAGE, dir))?;
        }
        save_csv(ds, path, false).map_err(data(STAGE))?;
    }
    Ok(format!(
        "surrogate: wrote {} ({} beats) and {} ({} beats)",
        cfg.train_csv.display(),
        train.len(),
        cfg.test_csv.display(),
        test.len()
    ))
}
