//! `snnstory`: builds the scrollytelling bundle stage by stage and serves it.
//!
//! Exit codes: 0 success, 1 data error, 2 usage error.

use std::fs;
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use snnstory_client::Client;
use snnstory_core::bundle::{
    build_bundle, default_quiz, parity_fixtures, validate_bundle_str, BundleInputs, NarrativePack,
    Violation,
};
use snnstory_core::dataset::{
    generate_synthetic, load_directory, read_ppm, synthetic_image, write_directory, LabeledDataset,
    SyntheticConfig,
};
use snnstory_core::inference::{build_inference, InferenceResult, DEFAULT_K};
use snnstory_core::losses::{LossKind, Margin};
use snnstory_core::net::{EmbeddingNet, NetArchitecture};
use snnstory_core::pipeline::{run_pipeline, PipelineConfig};
use snnstory_core::projection::{project_run, FramesFile, TsneConfig};
use snnstory_core::stats::{embedded_study_data, study_report, StudyData};
use snnstory_core::trainer::{train, HyperParams, SamplingStrategy, TrainingRun, TrainingRunFile};
use snnstory_core::Error;
use snnstory_server::{router, Content, Server, PARITY_SEED};

/// Generator settings written next to a generated dataset.
const SYNTHETIC_FILE: &str = "synthetic.json";

#[derive(Debug, Parser)]
#[command(
    name = "snnstory",
    version,
    about = "Metric-learning scrollytelling pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create or import a labeled image dataset.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train the embedding network and record per-epoch snapshots.
    Train(TrainArgs),
    /// Project every snapshot to 2D with t-SNE.
    Project(ProjectArgs),
    /// Rank the gallery against a query image and place it in the last frame.
    Infer(InferArgs),
    /// Compile the story bundle.
    Bundle(BundleArgs),
    /// Print the user-study report.
    Stats(StatsArgs),
    /// Serve a bundle and an optional UI directory over HTTP.
    Serve(ServeArgs),
    /// Check a bundle file or a served bundle.
    Validate(ValidateArgs),
    /// Download and check a served bundle.
    Fetch(FetchArgs),
    /// Write the loss parity fixtures.
    Parity(ParityArgs),
    /// Run every stage with one config and write all artifacts.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Generate the seeded synthetic dataset.
    Gen(GenArgs),
    /// Import `<dir>/<class>/*.ppm` and write it back with a manifest.
    Import(ImportArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = SyntheticConfig::default().num_classes)]
    classes: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().per_class)]
    per_class: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().image_size)]
    size: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().noise_sigma)]
    noise: f64,
    #[arg(long, default_value_t = SyntheticConfig::default().seed)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossArg {
    Triplet,
    Contrastive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SamplingArg {
    Random,
    SemiHard,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = HyperParams::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = HyperParams::default().batch_triplets)]
    batch: usize,
    #[arg(long, default_value_t = HyperParams::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = Margin::DEFAULT.value())]
    margin: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Triplet)]
    loss: LossArg,
    #[arg(long, value_enum, default_value_t = SamplingArg::Random)]
    sampling: SamplingArg,
    /// Seeds both network initialization and triplet sampling.
    #[arg(long, default_value_t = HyperParams::default().seed)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = TsneConfig::default().perplexity)]
    perplexity: f64,
    #[arg(long, default_value_t = TsneConfig::default().iterations)]
    iterations: usize,
    #[arg(long, default_value_t = TsneConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = TsneConfig::default().exaggeration_iters)]
    exaggeration_iters: usize,
    #[arg(long, default_value_t = TsneConfig::default().seed)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    /// Query PPM; without it a fresh synthetic image is drawn.
    #[arg(long, conflicts_with_all = ["query_class", "query_seed"])]
    query: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    query_class: usize,
    #[arg(long, default_value_t = PipelineConfig::default().query_seed)]
    query_seed: u64,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BundleArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    inference: PathBuf,
    /// TOML narrative pack replacing the built-in texts.
    #[arg(long)]
    narrative: Option<PathBuf>,
    #[arg(long)]
    no_quiz: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// `group,pid,pre,post` scores; defaults to the embedded study data.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ValidateArgs {
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Server root, e.g. `http://127.0.0.1:8080`.
    #[arg(long)]
    url: Option<String>,
}

#[derive(Debug, Args)]
struct FetchArgs {
    #[arg(long)]
    url: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    parity_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ParityArgs {
    #[arg(long, default_value_t = PARITY_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// JSON `PipelineConfig`; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn load_data(dir: &Path) -> Result<LabeledDataset> {
    load_directory(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn load_run(path: &Path) -> Result<TrainingRun> {
    let file: TrainingRunFile = read_json(path)?;
    TrainingRun::try_from(file).with_context(|| format!("loading {}", path.display()))
}

/// Fails unless the artifact at `path` was built from the dataset at `data`.
fn check_fingerprint(path: &Path, fp: u64, data: &Path, data_fp: u64) -> Result<()> {
    if fp != data_fp {
        return Err(Error::Fingerprint {
            left_name: path.display().to_string(),
            left: fp,
            right_name: data.display().to_string(),
            right: data_fp,
        }
        .into());
    }
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Runtime::new()?)
}

fn report_violations(source: &str, violations: &[Violation]) -> Result<()> {
    if violations.is_empty() {
        println!("{source}: ok");
        return Ok(());
    }
    for v in violations {
        eprintln!("{source}: {}: {}", v.path, v.message);
    }
    bail!("{source}: {} validation errors", violations.len())
}

fn dataset_gen(args: GenArgs) -> Result<()> {
    let config = SyntheticConfig {
        num_classes: args.classes,
        per_class: args.per_class,
        image_size: args.size,
        noise_sigma: args.noise,
        seed: args.seed,
    };
    let data = generate_synthetic(&config)?;
    let manifest = write_directory(&data, &args.out)?;
    write_json(&args.out.join(SYNTHETIC_FILE), &config)?;
    println!(
        "{} images in {} classes, fingerprint {}",
        manifest.items.len(),
        manifest.classes.len(),
        manifest.dataset_fingerprint
    );
    Ok(())
}

fn dataset_import(args: ImportArgs) -> Result<()> {
    let data = load_data(&args.from)?;
    let manifest = write_directory(&data, &args.out)?;
    println!(
        "{} images in {} classes, fingerprint {}",
        manifest.items.len(),
        manifest.classes.len(),
        manifest.dataset_fingerprint
    );
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let hp = HyperParams {
        epochs: args.epochs,
        batch_triplets: args.batch,
        learning_rate: args.learning_rate,
        margin: Margin::new(args.margin)?,
        loss_kind: match args.loss {
            LossArg::Triplet => LossKind::Triplet,
            LossArg::Contrastive => LossKind::Contrastive,
        },
        sampling: match args.sampling {
            SamplingArg::Random => SamplingStrategy::Random,
            SamplingArg::SemiHard => SamplingStrategy::SemiHard,
        },
        seed: args.seed,
    };
    let shape = data
        .input_shape()
        .ok_or_else(|| anyhow!("{} is empty", args.data.display()))?;
    let net = EmbeddingNet::init(NetArchitecture::default(), shape, args.seed)?;
    let run = train(&net, &data, &hp)?;
    write_json(&args.out, &TrainingRunFile::from(&run))?;
    let curve = run.loss_curve();
    println!(
        "{} epochs, loss {:.4} -> {:.4}",
        hp.epochs,
        curve[0],
        curve[curve.len() - 1]
    );
    Ok(())
}

fn project_cmd(args: ProjectArgs) -> Result<()> {
    let run = load_run(&args.run)?;
    let config = TsneConfig {
        perplexity: args.perplexity,
        iterations: args.iterations,
        learning_rate: args.learning_rate,
        exaggeration_iters: args.exaggeration_iters,
        seed: args.seed,
        ..TsneConfig::default()
    };
    let frames = project_run(&run, &config)?;
    let file = FramesFile::new(run.dataset_fingerprint, config, frames);
    write_json(&args.out, &file)?;
    println!("{} frames", file.frames.len());
    Ok(())
}

fn infer_cmd(args: InferArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let run = load_run(&args.run)?;
    let frames: FramesFile = read_json(&args.frames)?;
    let fp = data.fingerprint();
    check_fingerprint(&args.run, run.dataset_fingerprint, &args.data, fp)?;
    check_fingerprint(&args.frames, frames.fingerprint()?, &args.data, fp)?;
    let query = match &args.query {
        Some(path) => {
            let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let mut img =
                read_ppm(&bytes).with_context(|| format!("decoding {}", path.display()))?;
            img.id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            img
        }
        None => {
            let path = args.data.join(SYNTHETIC_FILE);
            let config: SyntheticConfig = read_json(&path).context(
                "a synthetic query needs the generator settings; pass --query for imported data",
            )?;
            synthetic_image(&config, args.query_class, args.query_seed)?
        }
    };
    let result = build_inference(&run.final_net, &data, &frames.frames, &query, args.k)?;
    write_json(&args.out, &result)?;
    for n in &result.neighbors {
        println!("{}\t{:.6}", n.id, n.distance);
    }
    Ok(())
}

fn bundle_cmd(args: BundleArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let run = load_run(&args.run)?;
    let frames: FramesFile = read_json(&args.frames)?;
    let inference: InferenceResult = read_json(&args.inference)?;
    let fp = data.fingerprint();
    check_fingerprint(&args.run, run.dataset_fingerprint, &args.data, fp)?;
    check_fingerprint(&args.frames, frames.fingerprint()?, &args.data, fp)?;
    check_fingerprint(&args.inference, inference.fingerprint()?, &args.data, fp)?;
    let narrative = match &args.narrative {
        Some(path) => NarrativePack::from_toml(
            &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )?,
        None => NarrativePack::default(),
    };
    let bundle = build_bundle(&BundleInputs {
        run: &run,
        frames: &frames,
        inference: &inference,
        dataset: &data,
        narrative: &narrative,
        quiz: (!args.no_quiz).then(default_quiz),
    })?;
    let mut text = bundle.to_json()?;
    text.push('\n');
    write_bytes(&args.out, text.as_bytes())?;
    println!("bundle {} ok", args.out.display());
    Ok(())
}

fn stats_cmd(args: StatsArgs) -> Result<()> {
    let data = match &args.csv {
        Some(path) => StudyData::from_csv(
            fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
        )
        .with_context(|| format!("reading {}", path.display()))?,
        None => embedded_study_data(),
    };
    let report = study_report(&data)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn serve_cmd(args: ServeArgs) -> Result<()> {
    let content = Content::load(&args.bundle)?;
    let app = router(content, args.ui_dir.as_deref())?;
    runtime()?.block_on(async {
        let server = Server::bind(SocketAddr::new(args.host, args.port), app).await?;
        eprintln!("serving http://{}", server.local_addr());
        server.run().await?;
        Ok(())
    })
}

fn validate_cmd(args: ValidateArgs) -> Result<()> {
    match (args.bundle, args.url) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            report_violations(&path.display().to_string(), &validate_bundle_str(&text)?)
        }
        (None, Some(url)) => {
            let client = Client::new(url);
            let bytes = runtime()?.block_on(client.get_bytes("/bundle.json"))?;
            let text = String::from_utf8(bytes).context("bundle is not UTF-8")?;
            report_violations(client.base(), &validate_bundle_str(&text)?)
        }
        (None, None) => unreachable!("clap requires one source"),
    }
}

fn fetch_cmd(args: FetchArgs) -> Result<()> {
    let client = Client::new(args.url);
    let rt = runtime()?;
    let bytes = rt.block_on(client.get_bytes("/bundle.json"))?;
    let text = std::str::from_utf8(&bytes).context("bundle is not UTF-8")?;
    report_violations(client.base(), &validate_bundle_str(text)?)?;
    write_bytes(&args.out, &bytes)?;
    if let Some(path) = &args.parity_out {
        write_bytes(path, &rt.block_on(client.get_bytes("/parity.json"))?)?;
    }
    Ok(())
}

fn parity_cmd(args: ParityArgs) -> Result<()> {
    write_json(&args.out, &parity_fixtures(args.seed))
}

fn pipeline_cmd(args: PipelineArgs) -> Result<()> {
    let config: PipelineConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => PipelineConfig::default(),
    };
    let a = run_pipeline(&config)?;
    let out = &args.out;
    write_directory(&a.dataset, &out.join("data"))?;
    write_json(&out.join("data").join(SYNTHETIC_FILE), &config.synthetic)?;
    write_json(&out.join("config.json"), &config)?;
    write_json(&out.join("run.json"), &TrainingRunFile::from(&a.run))?;
    write_json(&out.join("frames.json"), &a.frames)?;
    write_json(&out.join("inference.json"), &a.inference)?;
    let mut text = a.bundle.to_json()?;
    text.push('\n');
    write_bytes(&out.join("bundle.json"), text.as_bytes())?;
    write_json(&out.join("parity.json"), &parity_fixtures(PARITY_SEED))?;
    println!("artifacts in {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset(DatasetCommand::Gen(a)) => dataset_gen(a),
        Command::Dataset(DatasetCommand::Import(a)) => dataset_import(a),
        Command::Train(a) => train_cmd(a),
        Command::Project(a) => project_cmd(a),
        Command::Infer(a) => infer_cmd(a),
        Command::Bundle(a) => bundle_cmd(a),
        Command::Stats(a) => stats_cmd(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Validate(a) => validate_cmd(a),
        Command::Fetch(a) => fetch_cmd(a),
        Command::Parity(a) => parity_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
