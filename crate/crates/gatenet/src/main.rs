//! Command-line front door: dataset generation, training, gradient
//! checking, analogy evaluation, and model persistence.
//!
//! Every command reads its hyperparameters from an optional `--config`
//! file of `key=value` lines plus trailing `KEY=VALUE` overrides; unknown
//! keys are rejected with their line number. Identical configuration and
//! seed produce bitwise-identical outputs (pass `timing=off` to zero the
//! wall-clock column of metrics files).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use gatenet::activations::Activation;
use gatenet::config::{take_activation, take_train_config, ConfigMap};
use gatenet::data_io::{
    gen_blobs, gen_periodic, gen_rotation_pairs, gen_shift_pairs, load_dataset, save_dataset,
    Dataset,
};
use gatenet::error::{Error, Result};
use gatenet::gated::{GatedModel, TyingMode};
use gatenet::gradcheck::{run_default_grid, DEFAULT_EPS, DEFAULT_TOLERANCE};
use gatenet::model_io::{
    load_any, load_clustering, load_gated, load_mrnn, save_clustering, save_gated, save_mrnn,
    ModelFile,
};
use gatenet::mrnn::{
    dataset_to_sequences, mrnn_loss, mrnn_train_observed, next_symbol_accuracy, MRnnLoss,
    MRnnModel,
};
use gatenet::numerics::{Rng, Vector};
use gatenet::training::train_observed;
use gatenet::variants::{
    analogy, cluster_purity, clustering_loss, clustering_train_observed, ClusteringModel,
};
use gatenet::training::CorruptionDraws;

#[derive(Parser)]
#[command(
    name = "gatenet",
    version,
    about = "Factored gated networks: synthetic data, training, gradient checks, analogies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (kind=shift|rotation|blobs|periodic)
    GenData(Shared),
    /// Train a gated autoencoder on paired data
    Train(Shared),
    /// Train the self-clustering autoencoder
    TrainCluster(Shared),
    /// Train the multiplicative recurrent network
    TrainMrnn(Shared),
    /// Verify analytic gradients against finite differences
    Gradcheck(Shared),
    /// Infer the relation from the first pair and apply it to the rest
    Analogy(Shared),
    /// Evaluate a saved model on a dataset
    Eval(Shared),
}

#[derive(Args)]
struct Shared {
    /// Config file of key=value lines ('#' comments)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed override (wins over the config file)
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output path (dataset, model, or fantasy file)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Input dataset
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Saved model to load
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Trailing KEY=VALUE overrides, applied after the config file
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    // Die silently on a closed pipe (`gatenet eval | head`) like any other
    // command-line tool, instead of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenData(s) => cmd_gen_data(&s),
        Command::Train(s) => cmd_train(&s),
        Command::TrainCluster(s) => cmd_train_cluster(&s),
        Command::TrainMrnn(s) => cmd_train_mrnn(&s),
        Command::Gradcheck(s) => cmd_gradcheck(&s),
        Command::Analogy(s) => cmd_analogy(&s),
        Command::Eval(s) => cmd_eval(&s),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Assembles the configuration: file, then trailing overrides, then the
/// `--seed` flag, later layers winning.
fn build_config(shared: &Shared) -> Result<ConfigMap> {
    let mut cfg = match &shared.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            ConfigMap::parse(&text)?
        }
        None => ConfigMap::default(),
    };
    for raw in &shared.overrides {
        let (key, value) = raw.split_once('=').ok_or_else(|| Error::Config {
            line: 0,
            msg: format!("override `{raw}` is not of the form KEY=VALUE"),
        })?;
        cfg.set(key.trim(), value.trim());
    }
    if let Some(seed) = shared.seed {
        cfg.set("seed", seed.to_string());
    }
    Ok(cfg)
}

fn require<'a>(opt: &'a Option<PathBuf>, flag: &str, why: &str) -> Result<&'a Path> {
    opt.as_deref().ok_or_else(|| Error::InvalidArgument {
        op: "cli",
        msg: format!("--{flag} is required ({why})"),
    })
}

fn load_data(path: &Path) -> Result<Dataset> {
    load_dataset(path)
}

/// One metrics row per epoch; `wall_ms` is cumulative wall-clock time,
/// written as 0 when `timing=off` keeps runs bitwise reproducible.
fn write_metrics(path: &Path, rows: &[(usize, f64, u128)]) -> Result<()> {
    let mut text = String::from("epoch,mean_loss,wall_ms\n");
    for (epoch, loss, ms) in rows {
        text.push_str(&format!("{epoch},{loss},{ms}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn loss_summary(trace: &[f64]) -> String {
    match trace.last() {
        Some(l) => format!("final mean loss {l}"),
        None => "no epochs run".into(),
    }
}

fn metrics_path(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.metrics.csv", out.display()))
}

fn take_timing(cfg: &mut ConfigMap) -> Result<bool> {
    cfg.take_named("timing", true, "on, off", |s| match s {
        "on" => Some(true),
        "off" => Some(false),
        _ => None,
    })
}

/// Collects per-epoch metrics rows around any of the trainers.
struct EpochLog {
    rows: Vec<(usize, f64, u128)>,
    start: Instant,
    timing: bool,
}

impl EpochLog {
    fn new(timing: bool) -> Self {
        EpochLog { rows: Vec::new(), start: Instant::now(), timing }
    }

    fn observer(&mut self) -> impl FnMut(usize, f64) + '_ {
        |epoch, loss| {
            let ms = if self.timing { self.start.elapsed().as_millis() } else { 0 };
            self.rows.push((epoch, loss, ms));
        }
    }
}

fn cmd_gen_data(shared: &Shared) -> Result<ExitCode> {
    let mut cfg = build_config(shared)?;
    let out = require(&shared.out, "out", "where to write the dataset")?;
    let (kind, kind_line) = cfg.take_required("kind")?;
    let seed: u64 = cfg.take_or("seed", 42)?;
    let n: usize = cfg.take_or("n", 200)?;
    let mut rng = Rng::new(seed);

    let mut data = match kind.as_str() {
        "shift" => {
            let width: usize = cfg.take_or("width", 16)?;
            let shift: i64 = cfg.take_or("shift", 1)?;
            let density: f64 = cfg.take_or("density", 0.3)?;
            gen_shift_pairs(&mut rng, n, width, shift, density)?
        }
        "rotation" => {
            let side: usize = cfg.take_or("side", 4)?;
            let angle: u32 = cfg.take_or("angle", 90)?;
            gen_rotation_pairs(&mut rng, n, side, angle)?
        }
        "blobs" => {
            let dim: usize = cfg.take_or("dim", 8)?;
            let k: usize = cfg.take_or("k", 2)?;
            let center_scale: f64 = cfg.take_or("center_scale", 1.0)?;
            let blob_sigma: f64 = cfg.take_or("blob_sigma", 0.1)?;
            let centers: Vec<Vector> = (0..k)
                .map(|_| (0..dim).map(|_| center_scale * rng.next_gaussian()).collect())
                .collect();
            gen_blobs(&mut rng, n, dim, &centers, blob_sigma)?
        }
        "periodic" => {
            let alphabet: usize = cfg.take_or("alphabet", 4)?;
            gen_periodic(n, alphabet)?
        }
        other => {
            return Err(Error::Config {
                line: kind_line,
                msg: format!(
                    "key `kind`: unknown value `{other}` (expected one of: shift, rotation, \
                     blobs, periodic)"
                ),
            })
        }
    };
    cfg.finish()?;
    data.meta = format!("kind={kind} n={n} seed={seed}");
    save_dataset(&data, out)?;
    println!(
        "wrote {} examples (n_x={}, n_y={}, label_len={}) to {}",
        data.len(),
        data.n_x,
        data.n_y,
        data.label_len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(shared: &Shared) -> Result<ExitCode> {
    let mut cfg = build_config(shared)?;
    let out = require(&shared.out, "out", "where to write the trained model")?;
    let data = load_data(require(&shared.data, "data", "training pairs")?)?;

    let had_loss_key = cfg.take("loss").map(|(v, _)| cfg.set("loss", v)).is_some();
    let timing = take_timing(&mut cfg)?;
    let mut tc = take_train_config(&mut cfg)?;

    let model = match &shared.model {
        Some(path) => {
            let (model, stored_loss) = load_gated(path)?;
            if !had_loss_key {
                tc.loss = stored_loss;
            }
            reject_arch_keys(&mut cfg)?;
            model
        }
        None => {
            let n_h: usize = cfg.take_or("n_h", 8)?;
            let n_f: usize = cfg.take_or("n_f", 16)?;
            let tying = cfg.take_named("tying", TyingMode::Tied, "tied, untied", |s| match s {
                "tied" => Some(TyingMode::Tied),
                "untied" => Some(TyingMode::Untied),
                _ => None,
            })?;
            let act_x = take_activation(&mut cfg, "act_x", Activation::Identity)?;
            let act_y = take_activation(&mut cfg, "act_y", Activation::Identity)?;
            let act_h = take_activation(&mut cfg, "act_h", Activation::Sigmoid)?;
            let mut rng = Rng::new(tc.seed);
            match cfg.take("init_sigma") {
                Some((raw, line)) => {
                    let sigma: f64 = raw.parse().map_err(|e| Error::Config {
                        line,
                        msg: format!("key `init_sigma`: cannot parse `{raw}`: {e}"),
                    })?;
                    GatedModel::init_with_sigma(
                        data.n_x, data.n_y, n_h, n_f, tying,
                        [act_x, act_y, act_h], sigma, &mut rng,
                    )
                }
                None => GatedModel::init(
                    data.n_x, data.n_y, n_h, n_f, tying,
                    [act_x, act_y, act_h], &mut rng,
                ),
            }
        }
    };
    cfg.finish()?;

    let mut log = EpochLog::new(timing);
    let (trained, trace) = train_observed(model, &data, &tc, log.observer())?;
    save_gated(out, &trained, &tc.loss)?;
    write_metrics(&metrics_path(out), &log.rows)?;
    println!(
        "trained {} epochs on {} examples; {}",
        trace.len(),
        data.len(),
        loss_summary(&trace)
    );
    println!("model -> {}", out.display());
    println!("metrics -> {}", metrics_path(out).display());
    Ok(ExitCode::SUCCESS)
}

/// When continuing from a saved model, architecture keys would silently
/// disagree with the loaded shapes, so they are rejected outright.
fn reject_arch_keys(cfg: &mut ConfigMap) -> Result<()> {
    for key in ["n_h", "n_f", "k", "tying", "act_x", "act_y", "act_h", "init_sigma"] {
        if let Some((_, line)) = cfg.take(key) {
            return Err(Error::Config {
                line,
                msg: format!("key `{key}` conflicts with --model (architecture is loaded)"),
            });
        }
    }
    Ok(())
}

fn cmd_train_cluster(shared: &Shared) -> Result<ExitCode> {
    let mut cfg = build_config(shared)?;
    let out = require(&shared.out, "out", "where to write the trained model")?;
    let data = load_data(require(&shared.data, "data", "training inputs")?)?;

    if cfg.take("loss").map(|(v, _)| cfg.set("loss", v)).is_none() {
        cfg.set("loss", "reconstruct-x");
    }
    let timing = take_timing(&mut cfg)?;
    let tc = take_train_config(&mut cfg)?;

    let model = match &shared.model {
        Some(path) => {
            let model = load_clustering(path)?;
            reject_arch_keys(&mut cfg)?;
            model
        }
        None => {
            let default_k = if data.label_len() > 0 { data.label_len() } else { 2 };
            let k: usize = cfg.take_or("k", default_k)?;
            let n_h: usize = cfg.take_or("n_h", 8)?;
            let n_f: usize = cfg.take_or("n_f", 16)?;
            let act_x = take_activation(&mut cfg, "act_x", Activation::Identity)?;
            let sigma: f64 = cfg.take_or("init_sigma", 0.1)?;
            let mut rng = Rng::new(tc.seed);
            ClusteringModel::init_with_sigma(data.n_x, k, n_h, n_f, act_x, sigma, &mut rng)
        }
    };
    cfg.finish()?;

    let mut log = EpochLog::new(timing);
    let (trained, trace) = clustering_train_observed(model, &data, &tc, log.observer())?;
    save_clustering(out, &trained)?;
    write_metrics(&metrics_path(out), &log.rows)?;
    println!(
        "trained {} epochs on {} examples; {}",
        trace.len(),
        data.len(),
        loss_summary(&trace)
    );
    if data.label_len() > 0 {
        println!("purity {}", cluster_purity(&trained, &data)?);
    }
    println!("model -> {}", out.display());
    println!("metrics -> {}", metrics_path(out).display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_train_mrnn(shared: &Shared) -> Result<ExitCode> {
    let mut cfg = build_config(shared)?;
    let out = require(&shared.out, "out", "where to write the trained model")?;
    let data = load_data(require(&shared.data, "data", "step-aligned sequence data")?)?;

    let timing = take_timing(&mut cfg)?;
    let tc = take_train_config(&mut cfg)?;
    let seq_len: usize = cfg.take_or("seq_len", data.len())?;
    let sequences = dataset_to_sequences(&data, seq_len)?;

    let model = match &shared.model {
        Some(path) => {
            let model = load_mrnn(path)?;
            reject_arch_keys(&mut cfg)?;
            model
        }
        None => {
            let n_h: usize = cfg.take_or("n_h", 8)?;
            let n_f: usize = cfg.take_or("n_f", 8)?;
            let sigma: f64 = cfg.take_or("init_sigma", 0.25)?;
            let mut rng = Rng::new(tc.seed);
            MRnnModel::init_with_sigma(data.n_x, n_h, n_f, sigma, &mut rng)
        }
    };
    cfg.finish()?;

    let mut log = EpochLog::new(timing);
    let (trained, trace) = mrnn_train_observed(model, &sequences, &tc, log.observer())?;
    save_mrnn(out, &trained)?;
    write_metrics(&metrics_path(out), &log.rows)?;
    println!(
        "trained {} epochs on {} sequences; {}",
        trace.len(),
        sequences.len(),
        loss_summary(&trace)
    );
    println!("accuracy {}", next_symbol_accuracy(&trained, &sequences)?);
    println!("model -> {}", out.display());
    println!("metrics -> {}", metrics_path(out).display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(shared: &Shared) -> Result<ExitCode> {
    let mut cfg = build_config(shared)?;
    let n_seeds: u64 = cfg.take_or("seeds", 5)?;
    let eps: f64 = cfg.take_or("eps", DEFAULT_EPS)?;
    let tolerance: f64 = cfg.take_or("tolerance", DEFAULT_TOLERANCE)?;
    cfg.finish()?;

    let seeds: Vec<u64> = (0..n_seeds).collect();
    let report = run_default_grid(&seeds, eps)?;
    println!(
        "checked {} cells: max rel err {:.3e} (worst: {})",
        report.cells, report.max_rel_err, report.worst
    );
    if report.max_rel_err < tolerance {
        println!("PASS (tolerance {tolerance:.1e})");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAIL (tolerance {tolerance:.1e})");
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_analogy(shared: &Shared) -> Result<ExitCode> {
    let cfg = build_config(shared)?;
    cfg.finish()?;
    let data = load_data(require(&shared.data, "data", "source pair plus queries")?)?;
    let model_path = require(&shared.model, "model", "a trained gated model")?;
    let (model, _) = match load_any(model_path)? {
        ModelFile::Gated { model, loss } => (model, loss),
        _ => {
            return Err(Error::InvalidArgument {
                op: "analogy",
                msg: "analogy needs a gated model file".into(),
            })
        }
    };
    if data.len() < 2 {
        return Err(Error::InvalidArgument {
            op: "analogy",
            msg: "need at least two examples: a source pair and one query".into(),
        });
    }

    let src = &data.examples[0];
    let mut fantasies = Dataset::new(data.n_x, data.n_y, "analogy fantasies");
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for ex in &data.examples[1..] {
        let yhat = analogy(&model, &src.x, &src.y, &ex.x)?;
        for (a, b) in yhat.iter().zip(&ex.y) {
            sq_sum += (a - b) * (a - b);
            count += 1;
        }
        fantasies.push(ex.x.clone(), yhat, None)?;
    }
    let rms = (sq_sum / count as f64).sqrt();
    println!("rms {rms}");
    if let Some(out) = &shared.out {
        save_dataset(&fantasies, out)?;
        println!("fantasies -> {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(shared: &Shared) -> Result<ExitCode> {
    let mut cfg = build_config(shared)?;
    let data = load_data(require(&shared.data, "data", "evaluation examples")?)?;
    let model_path = require(&shared.model, "model", "a trained model")?;

    match load_any(model_path)? {
        ModelFile::Gated { model, loss } => {
            cfg.finish()?;
            let mut total = 0.0;
            for ex in &data.examples {
                total += gatenet::training::loss(
                    &model,
                    &ex.x,
                    &ex.y,
                    ex.label.as_deref(),
                    loss,
                    &CorruptionDraws::none(),
                )?;
            }
            println!("kind gated");
            println!("loss_mode {}", loss.name());
            println!("mean_loss {}", total / data.len() as f64);
        }
        ModelFile::Clustering(model) => {
            cfg.finish()?;
            let mut total = 0.0;
            for ex in &data.examples {
                total += clustering_loss(&model, &ex.x, &CorruptionDraws::none())?;
            }
            println!("kind clustering");
            println!("mean_loss {}", total / data.len() as f64);
            if data.label_len() > 0 {
                println!("purity {}", cluster_purity(&model, &data)?);
            }
        }
        ModelFile::MRnn(model) => {
            let seq_len: usize = cfg.take_or("seq_len", data.len())?;
            cfg.finish()?;
            let sequences = dataset_to_sequences(&data, seq_len)?;
            let mut total = 0.0;
            for seq in &sequences {
                total += mrnn_loss(&model, seq, MRnnLoss::Squared)?;
            }
            println!("kind mrnn");
            println!("mean_loss {}", total / sequences.len() as f64);
            println!("accuracy {}", next_symbol_accuracy(&model, &sequences)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
