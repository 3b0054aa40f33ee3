use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fusesr_core::bench::{bench_model, BenchReport};
use fusesr_core::brdf::{precompute_lut, EnvBrdfLut};
use fusesr_core::dataset::{write_pfm, Dataset, DatasetManifest, LrMode};
use fusesr_core::eval::{evaluate, Method};
use fusesr_core::gradcheck::GradcheckOptions;
use fusesr_core::hnet::{gradcheck_model, load_model_dir, HNetConfig, HNetModel};
use fusesr_core::pipeline::{prepare_frame, super_resolve};
use fusesr_core::threads::init_thread_pool;
use fusesr_core::train::{TrainData, TrainOptions, TrainRun};

#[derive(Parser)]
#[command(name = "fusesr", version, about = "Real-time rendering super-resolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Precompute the split-sum BRDF lookup table.
    Lut(LutArgs),
    /// Render a paired LR/HR dataset.
    Gen(GenArgs),
    /// Train a model on a generated dataset.
    Train(TrainArgs),
    /// Super-resolve one frame.
    Infer(InferArgs),
    /// Write per-frame PSNR/SSIM for models and baselines as CSV.
    Eval(EvalArgs),
    /// Time inference per stage and write a JSON report.
    Bench(BenchArgs),
    /// Check analytic gradients of a model config by finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct LutArgs {
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 1024)]
    samples: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Downsample {
    Native,
    Box,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    scene_seed: u64,
    /// Camera path seed; defaults to the scene seed.
    #[arg(long)]
    path_seed: Option<u64>,
    #[arg(long, default_value_t = 20)]
    frames: usize,
    /// HR width.
    #[arg(long, default_value_t = 512)]
    hr: usize,
    /// HR height; defaults to the width.
    #[arg(long)]
    hr_height: Option<usize>,
    #[arg(long, default_value_t = 4)]
    r: usize,
    /// How LR frames are produced.
    #[arg(long, value_enum, default_value = "native")]
    downsample: Downsample,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Full,
    Lite,
    Toy,
}

#[derive(Args)]
struct ModelArgs {
    /// Model config JSON; overrides --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "toy")]
    preset: Preset,
    /// Upscale factor for presets; defaults to the dataset's factor.
    #[arg(long)]
    r: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset root written by `gen`.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Training options JSON; flags below override its fields.
    #[arg(long)]
    options: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_p: Option<f64>,
    #[arg(long)]
    lambda_s: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Continue from a checkpoint directory.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// LUT file; the default table is computed when absent.
    #[arg(long)]
    lut: Option<PathBuf>,
    /// Output checkpoint directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset root written by `gen`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long)]
    lut: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Test,
    Train,
    All,
}

#[derive(Args)]
struct EvalArgs {
    /// Model directory, optionally `NAME=DIR`. Repeatable.
    #[arg(long)]
    model: Vec<String>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    /// Skip the bicubic and bilinear rows.
    #[arg(long)]
    no_baselines: bool,
    #[arg(long)]
    lut: Option<PathBuf>,
    /// CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Model config JSON files; defaults to full r=4, full r=8 and lite r=4.
    #[arg(long)]
    config: Vec<PathBuf>,
    /// HR output width and height.
    #[arg(long, default_value_t = 256)]
    hr: usize,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// LR input side.
    #[arg(long, default_value_t = 8)]
    size: usize,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    /// Probe at most this many entries per block.
    #[arg(long, default_value_t = 16)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_lut(path: Option<&Path>) -> Result<EnvBrdfLut> {
    Ok(match path {
        Some(p) => EnvBrdfLut::read(p)?,
        None => EnvBrdfLut::default_table(0),
    })
}

fn model_config(args: &ModelArgs, default_r: usize) -> Result<HNetConfig> {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = HNetConfig::from_json(&text)?;
        if let Some(r) = args.r {
            cfg.r = r;
            cfg.validate()?;
        }
        return Ok(cfg);
    }
    let r = args.r.unwrap_or(default_r);
    Ok(match args.preset {
        Preset::Full => HNetConfig::full(r),
        Preset::Lite => HNetConfig::lite(r),
        Preset::Toy => HNetConfig::toy(r),
    })
}

fn lut(a: LutArgs) -> Result<()> {
    let table = precompute_lut(a.size, a.size, a.samples, a.seed)?;
    table.write(&a.out)?;
    log::info!("wrote {}x{} LUT to {}", a.size, a.size, a.out.display());
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    let mode = match a.downsample {
        Downsample::Native => LrMode::Native,
        Downsample::Box => LrMode::Box,
    };
    let hr = (a.hr, a.hr_height.unwrap_or(a.hr));
    let manifest = DatasetManifest::new(a.scene_seed, a.path_seed.unwrap_or(a.scene_seed), a.frames, hr, a.r, mode);
    let ds = Dataset::generate(manifest)?;
    ds.write(&a.out)?;
    log::info!("wrote {} frames to {}", a.frames, a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let ds = Dataset::read(&a.data)?;
    let lut = load_lut(a.lut.as_deref())?;
    let mut run = match &a.resume {
        Some(dir) => TrainRun::load_checkpoint(dir)?,
        None => {
            let cfg = model_config(&a.model, ds.manifest.r)?;
            let mut o: TrainOptions = match &a.options {
                Some(p) => read_json(p)?,
                None => TrainOptions::default(),
            };
            o.batch = a.batch.unwrap_or(o.batch);
            o.crop = a.crop.unwrap_or(o.crop);
            o.adam.lr = a.lr.unwrap_or(o.adam.lr);
            o.seed = a.seed.unwrap_or(o.seed);
            o.loss.lambda_p = a.lambda_p.unwrap_or(o.loss.lambda_p);
            o.loss.lambda_s = a.lambda_s.unwrap_or(o.loss.lambda_s);
            TrainRun::new(cfg, o)?
        }
    };
    if let Some(s) = a.steps {
        run.options.steps = s;
    }
    if let Some(c) = a.checkpoint_every {
        run.options.checkpoint_every = c;
    }
    if run.model.config().r != ds.manifest.r {
        bail!("model factor r={} does not match dataset r={}", run.model.config().r, ds.manifest.r);
    }
    let data = TrainData::new(&ds.frames, &ds.manifest.train_frames, run.model.config(), &lut)?;
    let start = run.step;
    run.run(&data, Some(&a.out))?;
    if run.step == start {
        run.save_checkpoint(&a.out)?;
    }
    let last = run.loss_history.last().copied().unwrap_or(f64::NAN);
    println!("trained {} steps, final loss {last:.6}, checkpoint {}", run.step, a.out.display());
    Ok(())
}

fn infer(a: InferArgs) -> Result<()> {
    let model = load_model_dir::<f32>(&a.model)?;
    let ds = Dataset::read(&a.input)?;
    let lut = load_lut(a.lut.as_deref())?;
    let features = prepare_frame(&ds.frames, a.frame, model.config(), &lut)?;
    let out = super_resolve(&model, &features)?;
    write_pfm(&a.out, &out)?;
    let s = out.shape();
    println!("wrote {}x{} prediction to {}", s.width, s.height, a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ds = Dataset::read(&a.data)?;
    let lut = load_lut(a.lut.as_deref())?;
    let mut models: Vec<(String, HNetModel<f32>)> = Vec::new();
    for spec in &a.model {
        let (name, dir) = match spec.split_once('=') {
            Some((n, d)) => (n.to_string(), PathBuf::from(d)),
            None => {
                let d = PathBuf::from(spec);
                let n = d.file_name().map_or("model".into(), |f| f.to_string_lossy().into_owned());
                (n, d)
            }
        };
        models.push((name, load_model_dir(&dir)?));
    }
    let mut methods: Vec<Method> = models.iter().map(|(n, m)| Method::Model { name: n, model: m }).collect();
    if !a.no_baselines {
        methods.push(Method::Bicubic);
        methods.push(Method::Bilinear);
    }
    if methods.is_empty() {
        bail!("nothing to evaluate: pass --model or drop --no-baselines");
    }
    let m = &ds.manifest;
    let frames: Vec<usize> = match a.split {
        Split::Test => m.test_frames.clone(),
        Split::Train => m.train_frames.clone(),
        Split::All => (0..m.frames).collect(),
    };
    let report = evaluate(&methods, &ds.frames, &frames, &lut)?;
    for t in &report.timings {
        log::info!("{}: {:.2} ms/frame", t.method, t.mean_ms);
    }
    let csv = report.to_csv();
    match &a.out {
        Some(p) => std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let configs: Vec<(String, HNetConfig)> = if a.config.is_empty() {
        vec![
            ("full-r4".into(), HNetConfig::full(4)),
            ("full-r8".into(), HNetConfig::full(8)),
            ("lite-r4".into(), HNetConfig::lite(4)),
        ]
    } else {
        a.config
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let name = p.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
                Ok((name, HNetConfig::from_json(&text)?))
            })
            .collect::<Result<_>>()?
    };
    let mut report = BenchReport::default();
    for (name, cfg) in configs {
        let model = HNetModel::<f32>::new(cfg, a.seed)?;
        let res = bench_model(&name, &model, a.hr, a.hr, a.warmup, a.runs)?;
        log::info!("{name}: median {:.2} ms", res.median.total_ms);
        report.results.push(res);
    }
    report.compute_ratios();
    let json = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(p) => std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let cfg = model_config(&a.model, 2)?;
    let opts = GradcheckOptions {
        tolerance: a.tolerance,
        max_probes: Some(a.probes),
        seed: a.seed,
        ..Default::default()
    };
    let report = gradcheck_model(&cfg, a.size, &opts)?;
    println!("{report}");
    if !report.passed() {
        bail!("gradient check failed in {} block(s)", report.failing().len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = init_thread_pool().map_err(anyhow::Error::from).and_then(|_| match cli.command {
        Command::Lut(a) => lut(a),
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Gradcheck(a) => gradcheck(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
