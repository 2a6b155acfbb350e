//! `softattn train|eval|viz|gradcheck` and the `key = value` run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::attention::{KernelExtent, SoftAttentionConfig};
use crate::autodiff::{finite_diff_check, GradCheckReport, Tape};
use crate::data::{
    load_manifest, load_samples, rebalance, save_image, stratified_split, synth_lesion_dataset, RebalancePolicy,
    RebalanceTarget, Sample, SplitSpec, SynthSpec,
};
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use crate::train::{
    build_mininet_sized, evaluate, forward_layers, metrics_from_confusion, one_hot, stack_images, train_loop,
    AdamConfig, EarlyStopping, Layer, ModelGraph, TrainConfig,
};
use crate::viz::{default_gradcam_layer, gradcam, overlap_topq, render_heatmap};

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code when a check or threshold fails.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Exit code for bad usage, configuration or input paths.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "softattn", version, about = "Soft-attention CNN classifier toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write model.json, history.tsv and config.txt.
    Train(CommonArgs),
    /// Evaluate a trained model on the test split and write metrics.
    Eval(CommonArgs),
    /// Export attention heatmaps, overlays and Grad-CAM maps.
    Viz(CommonArgs),
    /// Finite-difference check of the model gradients.
    Gradcheck(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set optim.lr=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Fully resolved parameters of one command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// `None` selects the synthetic lesion set.
    pub manifest: Option<PathBuf>,
    pub image_size: usize,
    pub synth: SynthSpec,
    pub attention: bool,
    pub sa: SoftAttentionConfig,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub stratified: bool,
    pub split_seed: u64,
    pub rebalance: Option<RebalanceTarget>,
    pub rebalance_seed: u64,
    /// Defaults to `<out>/model.json`.
    pub model_path: Option<PathBuf>,
    pub viz_samples: usize,
    pub viz_blend: f64,
    pub viz_q: f64,
    pub gradcam_layer: Option<usize>,
    pub gradcheck_h: f64,
    pub gradcheck_tol: f64,
    pub gradcheck_batch: usize,
    /// Value the attention gate is set to before checking; `None` keeps the
    /// initialized value.
    pub gradcheck_gamma: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("out"),
            manifest: None,
            image_size: 32,
            synth: SynthSpec { n_per_class: 40, ..SynthSpec::default() },
            attention: true,
            sa: SoftAttentionConfig::default(),
            adam: AdamConfig::default(),
            epochs: 150,
            batch_size: 16,
            patience: 30,
            test_fraction: 0.15,
            val_fraction: 0.15,
            stratified: true,
            split_seed: 42,
            rebalance: Some(RebalanceTarget::Mean),
            rebalance_seed: 42,
            model_path: None,
            viz_samples: 4,
            viz_blend: 0.5,
            viz_q: 0.5,
            gradcam_layer: None,
            gradcheck_h: 1e-5,
            gradcheck_tol: 1e-4,
            gradcheck_batch: 2,
            gradcheck_gamma: Some(1.0),
        }
    }
}

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value.parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

fn opt_path(value: &str, base: &Path) -> Option<PathBuf> {
    match value {
        "" | "none" => None,
        v => Some(base.join(v)),
    }
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".into(), |p| p.display().to_string())
}

impl RunConfig {
    /// Sets one key. Relative paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "out" => self.out = base.join(v),
            "data.manifest" => self.manifest = opt_path(v, base),
            "data.image_size" => self.image_size = parse(key, v)?,
            "synth.n_per_class" => self.synth.n_per_class = parse(key, v)?,
            "synth.patch_size" => self.synth.patch_size = parse(key, v)?,
            "synth.noise_std" => self.synth.noise_std = parse(key, v)?,
            "model.sa" => self.attention = parse_bool(key, v)?,
            "model.sa.k" => self.sa.k = parse(key, v)?,
            "model.sa.kernel" => {
                self.sa.extent = if v == "full" {
                    KernelExtent::FullMap
                } else {
                    let k = parse(key, v)?;
                    KernelExtent::Local(k, k)
                }
            }
            "model.sa.gamma_init" => self.sa.gamma_init = parse(key, v)?,
            "model.sa.dropout" => self.sa.dropout = parse(key, v)?,
            "model.path" => self.model_path = opt_path(v, base),
            "optim.lr" => self.adam.lr = parse(key, v)?,
            "optim.eps" => self.adam.eps = parse(key, v)?,
            "optim.beta1" => self.adam.beta1 = parse(key, v)?,
            "optim.beta2" => self.adam.beta2 = parse(key, v)?,
            "train.epochs" => self.epochs = parse(key, v)?,
            "train.batch_size" => self.batch_size = parse(key, v)?,
            "train.patience" => self.patience = parse(key, v)?,
            "split.test_fraction" => self.test_fraction = parse(key, v)?,
            "split.val_fraction" => self.val_fraction = parse(key, v)?,
            "split.stratified" => self.stratified = parse_bool(key, v)?,
            "split.seed" => self.split_seed = parse(key, v)?,
            "rebalance.target" => {
                self.rebalance = match v {
                    "none" => None,
                    "mean" => Some(RebalanceTarget::Mean),
                    "max" => Some(RebalanceTarget::Max),
                    "min" => Some(RebalanceTarget::Min),
                    n => Some(RebalanceTarget::Count(parse(key, n)?)),
                }
            }
            "rebalance.seed" => self.rebalance_seed = parse(key, v)?,
            "viz.samples" => self.viz_samples = parse(key, v)?,
            "viz.blend" => self.viz_blend = parse(key, v)?,
            "viz.q" => self.viz_q = parse(key, v)?,
            "viz.gradcam_layer" => self.gradcam_layer = if v == "auto" { None } else { Some(parse(key, v)?) },
            "gradcheck.h" => self.gradcheck_h = parse(key, v)?,
            "gradcheck.tol" => self.gradcheck_tol = parse(key, v)?,
            "gradcheck.batch" => self.gradcheck_batch = parse(key, v)?,
            "gradcheck.gamma" => self.gradcheck_gamma = if v == "init" { None } else { Some(parse(key, v)?) },
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            self.set(k.trim(), v, base).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Defaults, then the config file, then `--set` overrides, then `--seed`
    /// and `--out`. Split and rebalance seeds follow `seed` unless set
    /// explicitly.
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let text = fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
        let parent = args.config.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = fs::canonicalize(parent).map_err(|e| Error::io(parent, e))?;
        let mut probe = Self::default();
        probe.apply_text(&text, &base)?;
        let explicit = |key: &str| {
            text.lines().any(|l| l.split('#').next().unwrap_or("").split('=').next().map(str::trim) == Some(key))
                || args.overrides.iter().any(|o| o.split('=').next().map(str::trim) == Some(key))
        };
        let (split_set, rebalance_set) = (explicit("split.seed"), explicit("rebalance.seed"));

        let cwd = std::env::current_dir().map_err(|e| Error::io(Path::new("."), e))?;
        let mut cfg = probe;
        for o in &args.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            cfg.set(k.trim(), v, &cwd)?;
        }
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &args.out {
            cfg.out = cwd.join(out);
        }
        if !split_set {
            cfg.split_seed = cfg.seed;
        }
        if !rebalance_set {
            cfg.rebalance_seed = cfg.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("split.test_fraction must be in (0,1), got {}", self.test_fraction));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("split.val_fraction must be in (0,1), got {}", self.val_fraction));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return bad("train.batch_size and train.patience must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.viz_blend) || !(self.viz_q > 0.0 && self.viz_q < 1.0) {
            return bad("viz.blend must be in [0,1] and viz.q in (0,1)".into());
        }
        self.sa.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model_file(&self) -> PathBuf {
        self.model_path.clone().unwrap_or_else(|| self.out.join("model.json"))
    }

    /// Every key with its resolved value, one per line, in a fixed order.
    /// Feeding this back as a config file reproduces the run.
    pub fn to_text(&self) -> String {
        let rebalance = match self.rebalance {
            None => "none".to_string(),
            Some(RebalanceTarget::Mean) => "mean".into(),
            Some(RebalanceTarget::Max) => "max".into(),
            Some(RebalanceTarget::Min) => "min".into(),
            Some(RebalanceTarget::Count(n)) => n.to_string(),
        };
        let kernel = match self.sa.extent {
            KernelExtent::FullMap => "full".to_string(),
            KernelExtent::Local(k, _) => k.to_string(),
        };
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("data.manifest", show_path(&self.manifest)),
            ("data.image_size", self.image_size.to_string()),
            ("synth.n_per_class", self.synth.n_per_class.to_string()),
            ("synth.patch_size", self.synth.patch_size.to_string()),
            ("synth.noise_std", self.synth.noise_std.to_string()),
            ("model.sa", self.attention.to_string()),
            ("model.sa.k", self.sa.k.to_string()),
            ("model.sa.kernel", kernel),
            ("model.sa.gamma_init", self.sa.gamma_init.to_string()),
            ("model.sa.dropout", self.sa.dropout.to_string()),
            ("model.path", show_path(&self.model_path)),
            ("optim.lr", self.adam.lr.to_string()),
            ("optim.eps", self.adam.eps.to_string()),
            ("optim.beta1", self.adam.beta1.to_string()),
            ("optim.beta2", self.adam.beta2.to_string()),
            ("train.epochs", self.epochs.to_string()),
            ("train.batch_size", self.batch_size.to_string()),
            ("train.patience", self.patience.to_string()),
            ("split.test_fraction", self.test_fraction.to_string()),
            ("split.val_fraction", self.val_fraction.to_string()),
            ("split.stratified", self.stratified.to_string()),
            ("split.seed", self.split_seed.to_string()),
            ("rebalance.target", rebalance),
            ("rebalance.seed", self.rebalance_seed.to_string()),
            ("viz.samples", self.viz_samples.to_string()),
            ("viz.blend", self.viz_blend.to_string()),
            ("viz.q", self.viz_q.to_string()),
            ("viz.gradcam_layer", self.gradcam_layer.map_or_else(|| "auto".into(), |l| l.to_string())),
            ("gradcheck.h", self.gradcheck_h.to_string()),
            ("gradcheck.tol", self.gradcheck_tol.to_string()),
            ("gradcheck.batch", self.gradcheck_batch.to_string()),
            ("gradcheck.gamma", self.gradcheck_gamma.map_or_else(|| "init".into(), |g| g.to_string())),
        ];
        entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Train, validation and test samples plus class names.
pub struct Dataset {
    pub class_names: Vec<String>,
    pub train: Vec<Sample<f64>>,
    pub val: Vec<Sample<f64>>,
    pub test: Vec<Sample<f64>>,
}

/// Loads the manifest (or generates the synthetic set) and splits it. Only
/// the training part is rebalanced.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let (class_names, samples) = match &cfg.manifest {
        Some(path) => {
            let m = load_manifest(path)?;
            let rows: Vec<usize> = (0..m.rows.len()).collect();
            let samples = load_samples(&m, &rows, cfg.image_size)?;
            (m.class_names, samples)
        }
        None => {
            let spec = SynthSpec { image_size: cfg.image_size, ..cfg.synth };
            let samples = synth_lesion_dataset(&spec, &mut SeededRng::new(cfg.seed).fork(1))?;
            (vec!["normal".to_string(), "lesion".to_string()], samples)
        }
    };
    let split = |fraction, seed| SplitSpec { test_fraction: fraction, seed, stratified: cfg.stratified };
    let (rest, test) = stratified_split(&samples, &split(cfg.test_fraction, cfg.split_seed))?;
    let (train, val) = stratified_split(&rest, &split(cfg.val_fraction, cfg.split_seed.wrapping_add(1)))?;
    let train = match cfg.rebalance {
        Some(target) => rebalance(&train, &RebalancePolicy { target, seed: cfg.rebalance_seed })?,
        None => train,
    };
    log::info!("{} train, {} validation, {} test samples", train.len(), val.len(), test.len());
    Ok(Dataset { class_names, train, val, test })
}

fn build_model(cfg: &RunConfig, classes: usize) -> Result<ModelGraph<f64>> {
    let sa = cfg.attention.then(|| cfg.sa.clone());
    build_mininet_sized(classes, cfg.image_size, sa, &mut SeededRng::new(cfg.seed).fork(2))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))
}

fn load_model(cfg: &RunConfig) -> Result<ModelGraph<f64>> {
    let path = cfg.model_file();
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    ModelGraph::from_json(&text)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<i32> {
    let data = load_dataset(cfg)?;
    let mut model = build_model(cfg, data.class_names.len())?;
    create_out(cfg)?;
    let tc = TrainConfig { epochs: cfg.epochs, batch_size: cfg.batch_size.min(data.train.len()), adam: cfg.adam };
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut rng = SeededRng::new(cfg.seed).fork(3);
    let history = train_loop(&mut model, &data.train, &data.val, &tc, &mut stopper, &mut rng)?;
    write(&cfg.model_file(), &model.to_json()?)?;
    write(&cfg.out.join("history.tsv"), &history.to_tsv())?;
    write(&cfg.out.join("config.txt"), &cfg.to_text())?;
    if let Some(last) = history.epochs.last() {
        println!(
            "trained {} epochs (best {:?}); final train acc {:.4}, val loss {:.4}",
            last.epoch, history.best_epoch, last.train_accuracy, last.val_loss
        );
    }
    Ok(EXIT_OK)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<i32> {
    let data = load_dataset(cfg)?;
    let mut model = load_model(cfg)?;
    if model.num_classes != data.class_names.len() {
        return Err(Error::Config(format!(
            "model has {} classes, dataset has {}",
            model.num_classes,
            data.class_names.len()
        )));
    }
    let (cm, scores) = evaluate(&mut model, &data.test)?;
    let labels: Vec<usize> = data.test.iter().map(|s| s.label).collect();
    let report = metrics_from_confusion(&cm, &scores, &labels)?.with_class_names(&data.class_names);
    create_out(cfg)?;
    write(&cfg.out.join("metrics.txt"), &report.to_text())?;
    write(&cfg.out.join("metrics.tsv"), &report.to_tsv())?;
    print!("{}", report.to_text());
    Ok(EXIT_OK)
}

fn file_id(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn to_255(image: &Tensor<f64>) -> Tensor<f64> {
    image.map(|v| v * 255.0)
}

pub fn cmd_viz(cfg: &RunConfig) -> Result<i32> {
    let data = load_dataset(cfg)?;
    let mut model = load_model(cfg)?;
    let layer = match cfg.gradcam_layer.or_else(|| default_gradcam_layer(&model)) {
        Some(l) => l,
        None => return Err(Error::Config("model has no spatial layer for Grad-CAM".into())),
    };
    create_out(cfg)?;
    let mut overlap = String::from("sample\tclass\tiou\n");
    for sample in data.test.iter().take(cfg.viz_samples) {
        let id = file_id(&sample.source_id);
        let image = to_255(&sample.image);
        let probs = model.predict_proba(&[sample])?;
        let class = crate::train::predicted_classes(&probs)[0];
        let cam = gradcam(&mut model, sample, layer, class)?;
        let cam_mass = cam.sum() > 0.0;
        if cam_mass {
            let (cam_map, _) = render_heatmap(&cam, &image, cfg.viz_blend)?;
            save_image(&cfg.out.join(format!("gradcam_{id}.ppm")), &cam_map)?;
        } else {
            log::warn!("Grad-CAM of {id} is identically zero; rendering skipped");
        }
        if model.sa_insertion().is_none() {
            continue;
        }
        let mut tape = Tape::new();
        let x = tape.constant(stack_images(&[sample])?);
        let trace = model.forward(&mut tape, x, Mode::Infer, &mut SeededRng::new(0))?;
        let alpha = trace.attention.expect("attention layer present").alpha_map(&tape, 0)?;
        let (map, over) = render_heatmap(&alpha, &image, cfg.viz_blend)?;
        save_image(&cfg.out.join(format!("alpha_{id}.ppm")), &map)?;
        save_image(&cfg.out.join(format!("overlay_{id}.ppm")), &over)?;
        if cam_mass && cam.shape() == alpha.shape() {
            let stat = overlap_topq(&alpha, &cam, cfg.viz_q)?;
            overlap.push_str(&format!("{id}\t{class}\t{:.6}\n", stat.iou));
        }
    }
    write(&cfg.out.join("overlap.tsv"), &overlap)?;
    Ok(EXIT_OK)
}

/// Finite-difference check of MiniNet (with attention unless disabled) on a
/// fixed synthetic batch, dropout off. Batch normalization runs in train
/// mode when the batch has at least two samples.
///
/// With the gate at its small initial value the head gradients are of order
/// 1e-8, below what a central difference with `h = 1e-5` can resolve against
/// the rounding of an O(1) loss; `gradcheck.gamma` moves the check to a
/// point where every entry is resolvable.
pub fn model_gradcheck(cfg: &RunConfig) -> Result<GradCheckReport> {
    let classes = 2;
    let mut sa = cfg.sa.clone();
    sa.dropout = 0.0;
    let sa = cfg.attention.then_some(sa);
    let mut model = build_mininet_sized::<f64>(classes, cfg.image_size, sa, &mut SeededRng::new(cfg.seed).fork(2))?;
    if let (Some(g), Some(i)) = (cfg.gradcheck_gamma, model.sa_insertion()) {
        if let Layer::SoftAttention(state) = &model.layers[i] {
            model.params.get_mut(state.gamma).value = Tensor::scalar(g);
        }
    }
    let batch_size = cfg.gradcheck_batch.max(1);
    let spec = SynthSpec { n_per_class: batch_size.div_ceil(2), image_size: cfg.image_size, ..cfg.synth };
    let samples = synth_lesion_dataset::<f64>(&spec, &mut SeededRng::new(cfg.seed).fork(1))?;
    let batch: Vec<&Sample<f64>> = samples.iter().take(batch_size).collect();
    let x = stack_images(&batch)?;
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    let targets = one_hot::<f64>(&labels, classes)?;
    let mode = if batch.len() >= 2 { Mode::Train } else { Mode::Infer };
    let mut layers = model.layers.clone();
    finite_diff_check(&mut model.params, cfg.gradcheck_h, |tape, store| {
        let xv = tape.constant(x.clone());
        let trace = forward_layers(&mut layers, store, tape, xv, mode, &mut SeededRng::new(0))?;
        let probs = tape.softmax_last(trace.logits)?;
        tape.cce_loss(probs, targets.clone())
    })
}

pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<i32> {
    let report = model_gradcheck(cfg)?;
    let worst = report.worst.as_ref().map(|(n, i)| {
        let (a, b) = report.worst_values;
        format!(", worst {n}[{i}]: analytic {a:.6e}, numeric {b:.6e}")
    });
    println!(
        "gradcheck: {} entries, max relative error {:.3e} (tolerance {:.1e}){}",
        report.entries_checked,
        report.max_rel_error,
        cfg.gradcheck_tol,
        worst.unwrap_or_default()
    );
    Ok(if report.max_rel_error < cfg.gradcheck_tol { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Exit code for an error: 2 for usage, configuration and input problems,
/// 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io { .. } | Error::Decode { .. } | Error::Schema(_) | Error::Data(_) => EXIT_USAGE,
        Error::Parameter(_) => EXIT_USAGE,
        _ => EXIT_CHECK_FAILED,
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (args, cmd): (&CommonArgs, fn(&RunConfig) -> Result<i32>) = match &cli.command {
        Command::Train(a) => (a, cmd_train),
        Command::Eval(a) => (a, cmd_eval),
        Command::Viz(a) => (a, cmd_viz),
        Command::Gradcheck(a) => (a, cmd_gradcheck),
    };
    match RunConfig::resolve(args).and_then(|cfg| cmd(&cfg)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses `argv` and runs it. Usage errors exit with code 2; `--help` and
/// `--version` print and exit with 0.
pub fn run_from<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
