//! `scgan`: corpus synthesis, SCGAN training, noise extraction, pair
//! construction and denoiser training, all driven by one JSON config.
//!
//! Every subcommand writes under `--out` (default: the config's `out`) and
//! leaves a `run.json` next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use scgan_core::config::{resolve_path, validate_config, RunConfig};
use scgan_core::corpus::{load_dir, png_files, write_noise_map, PairedCorpus, UnpairedCorpus};
use scgan_core::eval::{
    evaluate_generator, grid_rows, mean_psnr, report, run_ablation, ReportInput, Summary, SummaryRow,
};
use scgan_core::models::Generator;
use scgan_core::patch::{load_patch, save_patch, PEAK_8BIT};
use scgan_core::pipeline::{
    construct_pairs, construct_sr_pairs, denoise_all, extract_noise_maps, train_denoiser, Denoiser,
};
use scgan_core::schedule::Variant;
use scgan_core::synth::derive_seed;
use scgan_core::training::{
    latest_checkpoint, load_generator, read_metrics, write_metrics, CheckpointManifest, Trainer, Work,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const GIT: &str = env!("SCGAN_GIT_DESCRIBE");

#[derive(Parser, Debug)]
#[command(
    name = "scgan",
    version,
    about = "Noise extraction, paired-data construction and denoising"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output root.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the preset the config builds on.
    #[arg(long, global = true, value_parser = ["desk", "paper"])]
    preset: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the unpaired corpus into OUT/corpus.
    Synth,
    /// Train SCGAN on OUT/corpus; checkpoints go to OUT/train/checkpoints.
    Train {
        /// Corpus directory (default OUT/corpus).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Continue from the latest checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Extract noise maps from a directory of PNGs into OUT/extract.
    Extract {
        /// Checkpoint directory (default: latest under OUT/train/checkpoints).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// PNG directory (default OUT/corpus/noisy).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Construct a paired corpus into OUT/pairs.
    Pairs {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Noisy PNGs to draw noise from (default OUT/corpus/noisy).
        #[arg(long)]
        noisy: Option<PathBuf>,
        /// Clean PNGs to degrade (default OUT/corpus/clean).
        #[arg(long)]
        clean: Option<PathBuf>,
        /// Build super-resolution pairs with this downscale factor (2-4).
        #[arg(long)]
        sr_scale: Option<usize>,
    },
    /// Train the denoiser on OUT/pairs; the model goes to OUT/denoiser.
    DenoiseTrain {
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Denoise a directory of PNGs into OUT/denoised.
    Denoise {
        /// Denoiser directory (default OUT/denoiser).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Evaluate the generator (and denoiser, if trained) on held-out patches.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the three ablation variants into OUT/ablate.
    Ablate {
        /// Variants to train (default all).
        #[arg(long, value_delimiter = ',', value_parser = ["net1", "net2", "net3"])]
        variants: Vec<String>,
    },
    /// Render loss curves, noise grids and a summary into OUT/report.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train { .. } => "train",
            Command::Extract { .. } => "extract",
            Command::Pairs { .. } => "pairs",
            Command::DenoiseTrain { .. } => "denoise-train",
            Command::Denoise { .. } => "denoise",
            Command::Eval { .. } => "eval",
            Command::Ablate { .. } => "ablate",
            Command::Report => "report",
        }
    }
}

/// Failure classes with distinct exit codes.
enum Failure {
    /// 2: bad invocation.
    Usage(String),
    /// 3: invalid config or missing input path.
    Config(anyhow::Error),
    /// 4: missing or unreadable checkpoint.
    Checkpoint(anyhow::Error),
    /// 1: anything else.
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<scgan_core::Error> for Failure {
    fn from(e: scgan_core::Error) -> Self {
        Failure::Run(e.into())
    }
}

type Outcome<T> = Result<T, Failure>;

struct Layout {
    root: PathBuf,
}

impl Layout {
    fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }
    fn train(&self) -> PathBuf {
        self.root.join("train")
    }
    fn checkpoints(&self) -> PathBuf {
        self.train().join("checkpoints")
    }
    fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, err) = match f {
                Failure::Usage(msg) => {
                    eprintln!("error: {msg}\n\nUsage: scgan --config FILE <COMMAND>\nRun `scgan --help` for the command list.");
                    return ExitCode::from(2);
                }
                Failure::Config(e) => (3, e),
                Failure::Checkpoint(e) => (4, e),
                Failure::Run(e) => (1, e),
            };
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Outcome<()> {
    let cfg = resolve_config(&cli.common)?;
    let layout = Layout { root: cfg.out.clone() };
    let name = cli.command.name();
    let dir = match cli.command {
        Command::Synth => synth(&cfg, &layout)?,
        Command::Train { corpus, resume } => train(&cfg, &layout, corpus, resume)?,
        Command::Extract { checkpoint, input } => extract(&layout, checkpoint, input)?,
        Command::Pairs {
            checkpoint,
            noisy,
            clean,
            sr_scale,
        } => pairs(&cfg, &layout, checkpoint, noisy, clean, sr_scale)?,
        Command::DenoiseTrain { pairs } => denoise_train(&cfg, &layout, pairs)?,
        Command::Denoise { model, input } => denoise(&layout, model, input)?,
        Command::Eval { checkpoint } => eval(&cfg, &layout, checkpoint)?,
        Command::Ablate { variants } => ablate(&cfg, &layout, &variants)?,
        Command::Report => report_cmd(&cfg, &layout)?,
    };
    write_run_record(&dir, name, &cfg)?;
    Ok(())
}

fn resolve_config(common: &Common) -> Outcome<RunConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config FILE is required".into()))?;
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Config(anyhow!("cannot read config {}: {e}", path.display())))?;
    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(anyhow!("config {} is not valid JSON: {e}", path.display())))?;
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| Failure::Config(anyhow!("config {} must be a JSON object", path.display())))?;
    if let Some(s) = common.seed {
        obj.insert("seed".into(), json!(s));
    }
    if let Some(o) = &common.out {
        obj.insert("out".into(), json!(o));
    }
    if let Some(p) = &common.preset {
        obj.insert("preset".into(), json!(p));
    }
    validate_config(&doc)
        .map_err(|errs| Failure::Config(anyhow!("invalid config {}:\n  {}", path.display(), errs.join("\n  "))))
}

fn write_run_record(dir: &Path, command: &str, cfg: &RunConfig) -> Outcome<()> {
    let record = json!({
        "command": command,
        "version": VERSION,
        "git": GIT,
        "seed": cfg.seed,
        "argv": std::env::args().collect::<Vec<_>>(),
        "config": cfg,
    });
    let path = dir.join("run.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&record).expect("run record serializes"),
    )
    .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// A user-supplied input path (resolved against `SCGAN_DATA_DIR`) or the
/// default, which must exist as a directory.
fn input_dir(given: Option<PathBuf>, default: PathBuf, what: &str) -> Outcome<PathBuf> {
    let dir = given.as_deref().map(resolve_path).unwrap_or(default);
    if dir.is_dir() {
        Ok(dir)
    } else {
        Err(Failure::Config(anyhow!(
            "{what} directory not found: {}",
            dir.display()
        )))
    }
}

fn checkpoint_dir(given: Option<PathBuf>, layout: &Layout) -> Outcome<PathBuf> {
    match given {
        Some(p) => {
            let p = resolve_path(&p);
            if p.join("checkpoint.json").is_file() {
                Ok(p)
            } else {
                Err(Failure::Checkpoint(anyhow!("checkpoint not found: {}", p.display())))
            }
        }
        None => latest_checkpoint(&layout.checkpoints()).ok_or_else(|| {
            Failure::Checkpoint(anyhow!(
                "no checkpoint under {} (run `scgan train` first)",
                layout.checkpoints().display()
            ))
        }),
    }
}

fn generator_from(given: Option<PathBuf>, layout: &Layout) -> Outcome<(Generator<Work>, CheckpointManifest, PathBuf)> {
    let dir = checkpoint_dir(given, layout)?;
    let (g, m) = load_generator(&dir)
        .map_err(|e| Failure::Checkpoint(anyhow!(e).context(format!("loading {}", dir.display()))))?;
    Ok((g, m, dir))
}

fn load_corpus(given: Option<PathBuf>, layout: &Layout) -> Outcome<UnpairedCorpus> {
    let dir = given.as_deref().map(resolve_path).unwrap_or_else(|| layout.corpus());
    if !dir.join("manifest.json").is_file() {
        return Err(Failure::Config(anyhow!(
            "corpus not found: {} (run `scgan synth` first)",
            dir.display()
        )));
    }
    Ok(UnpairedCorpus::load(&dir)?)
}

fn create(dir: &Path) -> Outcome<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn synth(cfg: &RunConfig, layout: &Layout) -> Outcome<PathBuf> {
    let corpus = cfg.build_corpus()?;
    let dir = layout.corpus();
    corpus.save(&dir)?;
    eprintln!(
        "corpus: {} noisy / {} clean patches -> {}",
        corpus.noisy().len(),
        corpus.clean().len(),
        dir.display()
    );
    Ok(dir)
}

fn train(cfg: &RunConfig, layout: &Layout, corpus: Option<PathBuf>, resume: bool) -> Outcome<PathBuf> {
    let corpus = load_corpus(corpus, layout)?;
    let dir = layout.train();
    create(&dir)?;
    let metrics = dir.join("metrics.csv");
    let mut trainer = if resume {
        let ck = checkpoint_dir(None, layout)?;
        let log = if metrics.is_file() {
            read_metrics(&metrics)?
        } else {
            Vec::new()
        };
        eprintln!("resuming from {}", ck.display());
        Trainer::resume(&corpus, &ck, log).map_err(|e| Failure::Checkpoint(anyhow!(e)))?
    } else {
        Trainer::new(&corpus, cfg.train_config())?
    };
    let ep3 = trainer.config().schedule.ep3;
    while trainer.epoch() < ep3 {
        let rows = trainer.run_epoch()?.to_vec();
        let n = rows.len().max(1) as f64;
        let mean =
            |f: fn(&scgan_core::losses::LossBreakdown) -> f64| rows.iter().map(|r| f(&r.losses)).sum::<f64>() / n;
        let w = rows.last().map(|r| r.weights);
        eprintln!(
            "epoch {:>3}/{ep3}  l_d {:.4}  l_g {:.4}  clean {:.5}  pn {:.5}  rec {:.5}  weights {}",
            trainer.epoch(),
            mean(|b| b.l_gan_d),
            mean(|b| b.l_gan_g),
            mean(|b| b.l_clean),
            mean(|b| b.l_pn),
            mean(|b| b.l_rec),
            w.map_or("-".into(), |w| format!("{:.2}/{:.2}/{:.2}", w.w1, w.w2, w.w3)),
        );
        if trainer.is_checkpoint_epoch() {
            trainer.save_checkpoint(&layout.checkpoints())?;
        }
        write_metrics(&metrics, trainer.log())?;
    }
    eprintln!("metrics -> {}", metrics.display());
    Ok(dir)
}

fn extract(layout: &Layout, checkpoint: Option<PathBuf>, input: Option<PathBuf>) -> Outcome<PathBuf> {
    let (g, manifest, _) = generator_from(checkpoint, layout)?;
    let input = input_dir(input, layout.corpus().join("noisy"), "input")?;
    let files = png_files(&input)?;
    let patches = files.iter().map(load_patch).collect::<Result<Vec<_>, _>>()?;
    let maps = extract_noise_maps(&g, manifest.config.scaling, &patches)?;
    let dir = layout.dir("extract");
    create(&dir)?;
    for ((file, patch), map) in files.iter().zip(&patches).zip(&maps) {
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("patch");
        write_noise_map(map, dir.join(format!("{stem}_noise")))?;
        save_patch(
            &patch.sub_noise(map)?.clamp_storage(),
            dir.join(format!("{stem}_estimate.png")),
        )?;
    }
    eprintln!("{} noise maps -> {}", maps.len(), dir.display());
    Ok(dir)
}

fn pairs(
    cfg: &RunConfig,
    layout: &Layout,
    checkpoint: Option<PathBuf>,
    noisy: Option<PathBuf>,
    clean: Option<PathBuf>,
    sr_scale: Option<usize>,
) -> Outcome<PathBuf> {
    let (g, manifest, _) = generator_from(checkpoint, layout)?;
    let noisy = load_dir(&input_dir(noisy, layout.corpus().join("noisy"), "noisy")?)?;
    let clean = load_dir(&input_dir(clean, layout.corpus().join("clean"), "clean")?)?;
    let seed = derive_seed(cfg.seed, &[50]);
    let scaling = manifest.config.scaling;
    let corpus = match sr_scale {
        None => construct_pairs(&g, scaling, &noisy, &clean, seed)?,
        Some(r) => construct_sr_pairs(&g, scaling, &clean, &noisy, r, seed)?,
    };
    let dir = layout.dir("pairs");
    corpus.save(&dir)?;
    eprintln!("{} pairs -> {}", corpus.len(), dir.display());
    Ok(dir)
}

fn denoise_train(cfg: &RunConfig, layout: &Layout, pairs: Option<PathBuf>) -> Outcome<PathBuf> {
    let src = input_dir(pairs, layout.dir("pairs"), "pairs")?;
    let corpus = PairedCorpus::load(&src)?;
    let (mut model, epochs) = train_denoiser(&corpus, &cfg.denoiser, derive_seed(cfg.seed, &[60]))?;
    let dir = layout.dir("denoiser");
    model.save(&dir)?;
    let mut csv = String::from("epoch,loss\n");
    for e in &epochs {
        csv.push_str(&format!("{},{:e}\n", e.epoch, e.loss));
    }
    fs::write(dir.join("metrics.csv"), csv).context("writing denoiser metrics")?;
    if let Some(last) = epochs.last() {
        eprintln!(
            "denoiser: {} epochs, final loss {:.6} -> {}",
            epochs.len(),
            last.loss,
            dir.display()
        );
    }
    Ok(dir)
}

fn load_denoiser(given: Option<PathBuf>, layout: &Layout) -> Outcome<Denoiser> {
    let dir = given
        .as_deref()
        .map(resolve_path)
        .unwrap_or_else(|| layout.dir("denoiser"));
    if !dir.join("denoiser.json").is_file() {
        return Err(Failure::Checkpoint(anyhow!(
            "denoiser not found: {} (run `scgan denoise-train` first)",
            dir.display()
        )));
    }
    Denoiser::load(&dir).map_err(|e| Failure::Checkpoint(anyhow!(e)))
}

fn denoise(layout: &Layout, model: Option<PathBuf>, input: PathBuf) -> Outcome<PathBuf> {
    let model = load_denoiser(model, layout)?;
    let input = input_dir(Some(input), PathBuf::new(), "input")?;
    let files = png_files(&input)?;
    let patches = files.iter().map(load_patch).collect::<Result<Vec<_>, _>>()?;
    let out = denoise_all(&model, &patches)?;
    let dir = layout.dir("denoised");
    create(&dir)?;
    for (file, p) in files.iter().zip(&out) {
        save_patch(p, dir.join(file.file_name().expect("png files have names")))?;
    }
    eprintln!("{} images -> {}", out.len(), dir.display());
    Ok(dir)
}

fn eval(cfg: &RunConfig, layout: &Layout, checkpoint: Option<PathBuf>) -> Outcome<PathBuf> {
    let (g, manifest, ck) = generator_from(checkpoint, layout)?;
    let held = cfg.held_out()?;
    let ge = evaluate_generator(&g, manifest.config.scaling, &held)?;
    let noisy_psnr = mean_psnr(&held.noisy, &held.truth, PEAK_8BIT)?;
    let denoiser_gain = if layout.dir("denoiser").join("denoiser.json").is_file() {
        let model = load_denoiser(None, layout)?;
        Some(mean_psnr(&denoise_all(&model, &held.noisy)?, &held.truth, PEAK_8BIT)? - noisy_psnr)
    } else {
        None
    };
    let dir = layout.dir("eval");
    create(&dir)?;
    let doc = json!({
        "checkpoint": ck,
        "held_out": held.noisy.len(),
        "noisy_psnr_db": noisy_psnr,
        "generator": ge,
        "denoiser_psnr_gain_db": denoiser_gain,
    });
    fs::write(
        dir.join("eval.json"),
        serde_json::to_string_pretty(&doc).expect("eval serializes"),
    )
    .context("writing eval.json")?;
    let s = &ge.stats;
    eprintln!(
        "extracted noise: mean {:+.4} std {:.4} (normalized)  skew {:+.3}  excess kurtosis {:+.3}{}",
        s.mean,
        s.std,
        s.skewness,
        s.excess_kurtosis,
        if s.looks_gaussian() {
            ""
        } else {
            "  [not Gaussian-looking]"
        }
    );
    eprintln!(
        "clean response mean|G| {:.4}  generator PSNR gain {:+.2} dB",
        ge.clean_response_mean_abs, ge.psnr_gain_db
    );
    if let Some(g) = denoiser_gain {
        eprintln!("denoiser PSNR gain {g:+.2} dB over {noisy_psnr:.2} dB noisy input");
    }
    Ok(dir)
}

fn ablate(cfg: &RunConfig, layout: &Layout, names: &[String]) -> Outcome<PathBuf> {
    let variants: Vec<Variant> = if names.is_empty() {
        Variant::ALL.to_vec()
    } else {
        Variant::ALL
            .into_iter()
            .filter(|v| names.iter().any(|n| n == v.name()))
            .collect()
    };
    let corpus = load_corpus(None, layout)?;
    let held = cfg.held_out()?;
    let dir = layout.dir("ablate");
    let results = run_ablation(&corpus, &cfg.train_config(), &variants, &held, Some(&dir))?;
    let summary: Summary = results
        .iter()
        .map(|r| (r.variant.name().to_string(), SummaryRow::from(&r.eval)))
        .collect();
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .context("writing summary.json")?;
    for (name, row) in &summary {
        eprintln!(
            "{name}: clean response {:.4}  edge corr {}  std {:.4}",
            row.clean_response_mean_abs,
            row.edge_correlation.map_or("n/a".into(), |c| format!("{c:+.3}")),
            row.extracted_std
        );
    }
    Ok(dir)
}

fn report_cmd(cfg: &RunConfig, layout: &Layout) -> Outcome<PathBuf> {
    let held = cfg.held_out()?;
    let shown = &held.noisy[..held.noisy.len().min(4)];
    let mut input = ReportInput {
        title: format!("SCGAN run {}", layout.root.display()),
        ..Default::default()
    };
    let ablate = layout.dir("ablate");
    let runs: Vec<(String, PathBuf)> = if ablate.join("summary.json").is_file() {
        let text = fs::read_to_string(ablate.join("summary.json")).context("reading summary.json")?;
        input.summary = serde_json::from_str(&text).context("parsing summary.json")?;
        Variant::ALL
            .iter()
            .map(|v| (v.name().to_string(), ablate.join(v.name())))
            .filter(|(_, d)| d.is_dir())
            .collect()
    } else if layout.train().join("metrics.csv").is_file() {
        vec![("train".into(), layout.train())]
    } else {
        return Err(Failure::Config(anyhow!(
            "nothing to report under {} (run `scgan train` or `scgan ablate` first)",
            layout.root.display()
        )));
    };
    for (name, dir) in runs {
        input.logs.push((name.clone(), read_metrics(&dir.join("metrics.csv"))?));
        if let Some(ck) = latest_checkpoint(&dir.join("checkpoints")) {
            let (g, m) = load_generator(&ck).map_err(|e| Failure::Checkpoint(anyhow!(e)))?;
            input.grids.push((name, grid_rows(&g, m.config.scaling, shown)?));
        }
    }
    let dir = layout.dir("report");
    let index = report(&input, &dir)?;
    eprintln!("report -> {}", index.display());
    Ok(dir)
}
