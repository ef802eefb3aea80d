mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use gcdr::diagnose::{diagnose, DiagnoseConfig};
use gcdr::eval::{kary_agreement, KSpec};
use gcdr::io::{
    artifact_path, load_csv, load_embedding, render_svg_scatter, save_embedding, CsvOptions,
    LabelColumn, LabeledDataset, SvgOptions,
};
use gcdr::pipeline::{initialize, input_affinity, run, InitKind, RunSpec};
use gcdr::synthetic::gaussian_blobs;
use gcdr::{Error, MethodKind, PriorKind, Result};

use config::Settings;

#[derive(Parser, Debug)]
#[command(
    name = "gcdr",
    version,
    about = "Neighbor embeddings as coupled latent graphs"
)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embed a dataset: affinities, initialization, optimization and scores.
    Fit(FitArgs),
    /// Compute an initialization only.
    Init(InitArgs),
    /// Score an embedding against its input data.
    Eval(EvalArgs),
    /// Draw a 2-D embedding as an SVG scatter plot.
    Plot(PlotArgs),
    /// Check the model's degeneracy properties on a dataset.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Input CSV.
    input: PathBuf,
    /// Field delimiter.
    #[arg(long)]
    delimiter: Option<char>,
    /// The first row holds data, not column names.
    #[arg(long)]
    no_header: bool,
    /// Label column, by name or zero-based index.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// sne, tsne, largevis or umap.
    #[arg(long)]
    method: Option<String>,
    /// random, pca, le or ccpca.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    perplexity: Option<f64>,
    /// Embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Runs with seeds seed, seed+1, ...
    #[arg(long)]
    repeat: Option<usize>,
    #[arg(long, env = "GCDR_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// pca, le or ccpca.
    #[arg(long)]
    method: Option<String>,
    /// Posterior graphs averaged by ccPCA.
    #[arg(long)]
    samples: Option<usize>,
    /// Graph prior for ccPCA: b, d or e.
    #[arg(long)]
    prior: Option<String>,
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "GCDR_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Embedding CSV written by `fit` or `init`.
    #[arg(long)]
    embedding: PathBuf,
    /// Neighborhood sizes: counts, fractions of n or `n/<d>`.
    #[arg(long, value_delimiter = ',')]
    k: Vec<String>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Embedding CSV with two coordinate columns.
    embedding: PathBuf,
    /// Output SVG; defaults to the embedding path with an .svg extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Input CSV; built-in synthetic clusters when omitted.
    input: Option<PathBuf>,
    #[arg(long)]
    delimiter: Option<char>,
    #[arg(long)]
    no_header: bool,
    #[arg(long)]
    label: Option<String>,
    /// Random graphs per check.
    #[arg(long)]
    trials: Option<usize>,
    /// Monte-Carlo samples per prior.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let threads = cli.threads.or(settings.get("threads")?);
    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            if t == 0 {
                return Err(Error::Parameter("--threads must be at least 1".into()));
            }
            builder = builder.num_threads(t);
        }
        builder
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?
    };
    pool.install(|| match cli.command {
        Command::Fit(args) => fit(args, &settings),
        Command::Init(args) => init(args, &settings),
        Command::Eval(args) => eval(args, &settings),
        Command::Plot(args) => plot(args),
        Command::Diagnose(args) => run_diagnose(args, &settings),
    })
}

fn csv_options(args: &InputArgs, settings: &Settings) -> Result<CsvOptions> {
    csv_options_from(
        args.delimiter,
        args.no_header,
        args.label.as_deref(),
        settings,
    )
}

fn csv_options_from(
    delimiter: Option<char>,
    no_header: bool,
    label: Option<&str>,
    settings: &Settings,
) -> Result<CsvOptions> {
    let delimiter = match delimiter.or(settings.get("delimiter")?) {
        None => b',',
        Some(c) if c.is_ascii() => c as u8,
        Some(c) => return Err(Error::Parameter(format!("delimiter '{c}' is not ASCII"))),
    };
    let header = !no_header && settings.get::<bool>("header")?.unwrap_or(true);
    let label = label
        .map(str::to_string)
        .or(settings.get::<String>("label")?)
        .map(|l| match l.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(l),
        });
    Ok(CsvOptions {
        delimiter,
        header,
        label,
    })
}

fn load(args: &InputArgs, settings: &Settings) -> Result<LabeledDataset> {
    let ds = load_csv(&args.input, &csv_options(args, settings)?)?;
    info!(
        "loaded {} x {} from {}",
        ds.x.rows(),
        ds.x.cols(),
        args.input.display()
    );
    Ok(ds)
}

fn out_dir(flag: Option<PathBuf>, settings: &Settings) -> Result<PathBuf> {
    Ok(flag
        .or(settings.get::<String>("out-dir")?.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(".")))
}

fn fit(args: FitArgs, settings: &Settings) -> Result<ExitCode> {
    let ds = load(&args.input, settings)?;
    let method: MethodKind = pick(args.method, settings, "method")?.unwrap_or(MethodKind::Tsne);
    let mut spec = RunSpec::new(method);
    if let Some(init) = pick::<InitKind>(args.init, settings, "init")? {
        spec.init = init;
    }
    if let Some(p) = args.perplexity.or(settings.get("perplexity")?) {
        spec.perplexity = p;
    }
    if let Some(q) = args.dim.or(settings.get("dim")?) {
        spec.q = q;
    }
    if let Some(it) = args.iterations.or(settings.get("iterations")?) {
        spec.optimizer.iterations = it;
    }
    if let Some(lr) = settings.get::<f64>("learning-rate")? {
        spec.optimizer.learning_rate = lr;
        spec.auto_learning_rate = false;
    }
    if let Some(s) = settings.get::<usize>("samples")? {
        spec.ccpca.samples = s;
    }
    if let Some(p) = pick::<PriorKind>(None, settings, "prior")? {
        spec.ccpca.prior = p;
    }
    let base_seed = args.seed.or(settings.get("seed")?).unwrap_or(0);
    let repeat = args.repeat.or(settings.get("repeat")?).unwrap_or(1);
    if repeat == 0 {
        return Err(Error::Parameter("--repeat must be at least 1".into()));
    }
    let dir = out_dir(args.out_dir, settings)?;

    let mut all_scores: Vec<Vec<f64>> = Vec::new();
    for r in 0..repeat {
        let seed = base_seed
            .checked_add(r as u64)
            .ok_or_else(|| Error::Parameter("seed overflow".into()))?;
        let spec = spec.clone().with_seed(seed);
        let suffix = if repeat == 1 {
            String::new()
        } else {
            format!("-seed{seed}")
        };
        let mut out = run(&spec, &ds.x, None)?;

        let z_path = artifact_path(&dir, &format!("embedding{suffix}.csv"))?;
        save_embedding(&z_path, &out.z, ds.labels.as_ref()).map_err(|e| e.in_stage("save"))?;
        out.manifest.artifacts.push(z_path.display().to_string());
        if spec.q == 2 {
            let svg = artifact_path(&dir, &format!("embedding{suffix}.svg"))?;
            render_svg_scatter(&svg, &out.z, ds.labels.as_ref(), &SvgOptions::default())
                .map_err(|e| e.in_stage("save"))?;
            out.manifest.artifacts.push(svg.display().to_string());
        }
        let manifest_path = artifact_path(&dir, &format!("manifest{suffix}.toml"))?;
        std::fs::write(&manifest_path, out.manifest.to_toml()?)
            .map_err(|e| Error::from(e).in_stage("save"))?;

        let line: Vec<String> = out
            .manifest
            .scores
            .iter()
            .map(|s| format!("R({}) = {:.4}", s.k, s.r))
            .collect();
        println!(
            "seed {seed}: loss {:.6}, {}; wrote {}",
            out.manifest.final_loss,
            line.join(", "),
            manifest_path.display()
        );
        all_scores.push(out.manifest.scores.iter().map(|s| s.r).collect());
    }

    if repeat > 1 {
        let ks = gcdr::pipeline::eval_ks(ds.x.rows());
        for (c, k) in ks.iter().enumerate() {
            let vals: Vec<f64> = all_scores.iter().map(|s| s[c]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var =
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            println!(
                "R({k}): mean {mean:.4}, sd {:.4} over {repeat} seeds",
                var.sqrt()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn init(args: InitArgs, settings: &Settings) -> Result<ExitCode> {
    let ds = load(&args.input, settings)?;
    let kind: InitKind = pick(args.method, settings, "init")?.unwrap_or(InitKind::Ccpca);
    if kind == InitKind::Random {
        return Err(Error::Parameter(
            "init method must be pca, le or ccpca".into(),
        ));
    }
    // Laplacian eigenmaps use the t-SNE input affinity.
    let mut spec = RunSpec::new(MethodKind::Tsne).with_init(kind);
    if let Some(p) = args.perplexity.or(settings.get("perplexity")?) {
        spec.perplexity = p;
    }
    if let Some(q) = args.dim.or(settings.get("dim")?) {
        spec.q = q;
    }
    if let Some(s) = args.samples.or(settings.get("samples")?) {
        spec.ccpca.samples = s;
    }
    if let Some(p) = pick::<PriorKind>(args.prior, settings, "prior")? {
        spec.ccpca.prior = p;
    }
    spec.seed = args.seed.or(settings.get("seed")?).unwrap_or(0);
    let (n, p) = ds.x.shape();
    spec.validate(n, p).map_err(|e| e.in_stage("spec"))?;

    let input =
        input_affinity(&ds.x, spec.method, spec.perplexity).map_err(|e| e.in_stage("affinity"))?;
    let z = initialize(&spec, &ds.x, &input).map_err(|e| e.in_stage("init"))?;
    let dir = out_dir(args.out_dir, settings)?;
    let path = artifact_path(&dir, &format!("init-{kind}.csv"))?;
    save_embedding(&path, &z, ds.labels.as_ref())?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn eval(args: EvalArgs, settings: &Settings) -> Result<ExitCode> {
    let ds = load(&args.input, settings)?;
    let (z, _) = load_embedding(&args.embedding)?;
    let n = ds.x.rows();
    let specs: Vec<KSpec> = if args.k.is_empty() {
        vec![KSpec::Divisor(4), KSpec::Divisor(2)]
    } else {
        args.k.iter().map(|s| s.parse()).collect::<Result<_>>()?
    };
    for spec in specs {
        let score = kary_agreement(&ds.x, &z, spec.resolve(n))?;
        println!("K = {}: Q = {:.6}, R = {:.6}", score.k, score.q, score.r);
    }
    Ok(ExitCode::SUCCESS)
}

fn plot(args: PlotArgs) -> Result<ExitCode> {
    let (z, labels) = load_embedding(&args.embedding)?;
    let out = args
        .out
        .unwrap_or_else(|| args.embedding.with_extension("svg"));
    render_svg_scatter(&out, &z, labels.as_ref(), &SvgOptions::default())?;
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn run_diagnose(args: DiagnoseArgs, settings: &Settings) -> Result<ExitCode> {
    let mut cfg = DiagnoseConfig::default();
    if let Some(t) = args.trials.or(settings.get("trials")?) {
        cfg.trials = t;
    }
    if let Some(s) = args.samples.or(settings.get("samples")?) {
        cfg.samples = s;
    }
    cfg.seed = args.seed.or(settings.get("seed")?).unwrap_or(0);
    let x = match &args.input {
        Some(path) => {
            let opts = csv_options_from(
                args.delimiter,
                args.no_header,
                args.label.as_deref(),
                settings,
            )?;
            load_csv(path, &opts)?.x
        }
        None => gaussian_blobs(&[4, 4, 4], 3, 4.0, cfg.seed).0,
    };
    let checks = diagnose(&x, &cfg)?;
    for c in &checks {
        println!("{c}");
    }
    if checks.iter().all(|c| c.passed) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(4))
    }
}

/// Flag value, else config value, parsed with the library's `FromStr`.
fn pick<T: std::str::FromStr<Err = Error>>(
    flag: Option<String>,
    settings: &Settings,
    key: &str,
) -> Result<Option<T>> {
    match flag.or(settings.get::<String>(key)?) {
        Some(s) => s.parse().map(Some),
        None => Ok(None),
    }
}
