use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use seqsr_core::metrics::LossWeights;
use seqsr_core::ordering::PlanReport;
use seqsr_core::pipeline::{EvalReport, Pipeline, PipelineConfig, UpsamplerConfig};
use seqsr_core::raster::BackgroundPolicy;
use seqsr_core::{synthetic, MeasureKind, OrderingConfig, Plan};

#[derive(Parser, Debug)]
#[command(name = "seqsr", version, about = "Order unordered multi-view images into clips for video super-resolution")]
struct Cli {
    /// Directory every other path is relative to.
    #[arg(long, global = true)]
    root: Option<PathBuf>,

    /// Pipeline config (JSON). Flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bicubic-downsample the HR dataset into lr/.
    Degrade,
    /// Order the LR frames into clips; write plan and upsample manifest.
    Plan,
    /// Super-resolve every clip of the manifest.
    Upsample,
    /// Pick one upsampled image per frame; write the HR dataset.
    Aggregate,
    /// PSNR / SSIM / losses of a prediction against a reference.
    Eval {
        /// Predicted transforms.json (default: <output>/hr/transforms.json).
        #[arg(long)]
        predicted: Option<PathBuf>,
        /// Reference transforms.json (default: the dataset).
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Rebuild report.json from the stored plan.
    Report,
    /// degrade, plan, upsample, aggregate and eval in one go.
    Run,
    /// Print the effective config as JSON.
    PrintConfig,
    /// Write a synthetic textured dataset.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory, relative to the root.
    #[arg(long, default_value = "scene")]
    out: PathBuf,
    #[arg(long, default_value_t = 24)]
    frames: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, value_enum, default_value_t = Rig::Ring)]
    rig: Rig,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Rig {
    Ring,
    TwoCluster,
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// Object-centric scenes: ORB neighbours, 15/30/45 degree rounds, lambda_ren 0.6.
    Blender,
    /// Unbounded scenes: pose neighbours, rank rounds 30/50, lambda_ren 0.4.
    MipNerf360,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Background {
    Black,
    White,
    Keep,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// HR transforms.json.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    scale_factor: Option<usize>,
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[arg(long, global = true)]
    select_measure: Option<MeasureKind>,
    #[arg(long, global = true)]
    threshold_measure: Option<MeasureKind>,
    /// Round thresholds in degrees for angle measures, raw units otherwise.
    #[arg(long, global = true, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long, global = true)]
    min_subseq_len: Option<usize>,
    /// Point the angle-to-origin measure is taken about, as x,y,z.
    #[arg(long, global = true, value_parser = parse_point, allow_hyphen_values = true)]
    scene_origin: Option<[f64; 3]>,
    #[arg(long, global = true, value_enum)]
    background: Option<Background>,
    /// External upsampler command with {manifest} and {outdir} placeholders.
    #[arg(long, global = true)]
    upsampler_command: Option<String>,
    /// Invoke the external upsampler once per clip.
    #[arg(long, global = true)]
    per_subsequence: bool,
    /// Use the in-process bicubic upsampler.
    #[arg(long, global = true, conflicts_with = "upsampler_command")]
    reference_upsampler: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        match self.preset {
            Some(Preset::Blender) => {
                cfg.ordering = OrderingConfig::object_centric();
                cfg.loss_weights = LossWeights::BLENDER;
            }
            Some(Preset::MipNerf360) => {
                cfg.ordering = OrderingConfig::unbounded_scene();
                cfg.loss_weights = LossWeights::MIP_NERF_360;
            }
            None => {}
        }
        if let Some(v) = &self.dataset {
            cfg.dataset = v.clone();
        }
        if let Some(v) = &self.output {
            cfg.output = v.clone();
        }
        if let Some(v) = self.scale_factor {
            cfg.scale_factor = v;
        }
        if let Some(v) = self.select_measure {
            cfg.ordering.select_measure = v;
        }
        if let Some(v) = self.threshold_measure {
            cfg.ordering.threshold_measure = v;
        }
        if let Some(v) = &self.thresholds {
            let angular = !cfg.ordering.threshold_by_center_rank
                && matches!(
                    cfg.ordering.threshold_measure,
                    MeasureKind::PoseAngleToOrigin | MeasureKind::PoseDirectionAngle
                );
            cfg.ordering.thresholds = v.iter().map(|t| if angular { t.to_radians() } else { *t }).collect();
        }
        if let Some(v) = self.min_subseq_len {
            cfg.ordering.min_subseq_len = v;
        }
        if let Some(v) = self.scene_origin {
            cfg.ordering.scene_origin = v;
        }
        if let Some(bg) = self.background {
            cfg.background = match bg {
                Background::Black => BackgroundPolicy::Composite { color: [0.0; 3] },
                Background::White => BackgroundPolicy::Composite { color: [1.0; 3] },
                Background::Keep => BackgroundPolicy::Keep,
            };
        }
        if self.reference_upsampler {
            cfg.upsampler = UpsamplerConfig::ReferenceBicubic;
        }
        if let Some(command) = &self.upsampler_command {
            let timeout_secs = match &cfg.upsampler {
                UpsamplerConfig::External { timeout_secs, .. } => *timeout_secs,
                UpsamplerConfig::ReferenceBicubic => None,
            };
            cfg.upsampler = UpsamplerConfig::External {
                command: command.clone(),
                per_subsequence: self.per_subsequence,
                timeout_secs,
            };
        } else if self.per_subsequence {
            match &mut cfg.upsampler {
                UpsamplerConfig::External { per_subsequence, .. } => *per_subsequence = true,
                UpsamplerConfig::ReferenceBicubic => bail!("--per-subsequence needs an external upsampler"),
            }
        }
        Ok(())
    }
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected x,y,z, got {} values", v.len()))
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn load_config(cli: &Cli, root: &Path) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let path = resolve(root, path);
            PipelineConfig::load(&path).with_context(|| format!("loading config {}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    cli.overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn print_plan(plan: &Plan, report: &PlanReport) {
    println!("frames: {}", plan.frame_count);
    for r in &plan.rounds {
        let threshold = match r.threshold {
            Some(t) if !plan.threshold_by_center_rank && plan.threshold_measure != MeasureKind::PoseCenterDistance => {
                format!("{:.1} deg", t.to_degrees())
            }
            Some(t) => format!("{t}"),
            None => "single frames".into(),
        };
        println!(
            "round {} ({threshold}): {} starts, {} accepted, +{} covered, {}/{} total",
            r.round, r.starts, r.accepted, r.newly_covered, r.covered_total, plan.frame_count
        );
    }
    println!("clips: {}", plan.subsequences.len());
    let hist: Vec<String> = report.length_histogram.iter().map(|(l, c)| format!("{l}:{c}")).collect();
    println!("clip lengths (length:count): {}", hist.join(" "));
    print!("misalignments (>45 deg) in clips: {}", report.total_misalignments);
    match report.full_greedy_misalignments {
        Some(full) => println!(", single greedy chain: {full}"),
        None => println!(),
    }
}

fn print_eval(report: &EvalReport) {
    println!(
        "{} frames: mean PSNR {:.3} dB, mean SSIM {:.4}, mean L1 {:.5}",
        report.frames.len(),
        EvalReport::table_psnr(report.mean_psnr),
        report.mean_ssim,
        report.mean_l1
    );
}

fn synth(root: &Path, args: &SynthArgs) -> Result<()> {
    let poses = match args.rig {
        Rig::Ring => synthetic::uniform_ring(args.frames, 4.0),
        Rig::TwoCluster => synthetic::two_cluster_rig(),
        Rig::Random => synthetic::seeded_random_rig(args.seed, args.frames),
    };
    let path = synthetic::write_dataset(&resolve(root, &args.out), &poses, args.size, args.size)?;
    println!("wrote {} frames to {}", poses.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let root = cli.root.clone().context("--root is required")?;
    if let Command::Synth(args) = &cli.command {
        return synth(&root, args);
    }
    let cfg = load_config(&cli, &root)?;
    if let Command::PrintConfig = cli.command {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let pipeline = Pipeline::new(&root, cfg)?;
    match &cli.command {
        Command::Degrade => {
            let sidecar = pipeline.degrade()?;
            let [w, h] = sidecar.frames[0].output_size;
            println!("degraded {} frames to {w}x{h}", sidecar.frames.len());
        }
        Command::Plan => {
            let outcome = pipeline.plan()?;
            print_plan(&outcome.plan, &outcome.report);
        }
        Command::Upsample => {
            let s = pipeline.upsample()?;
            println!("upsampled {} frames in {} clips", s.frames, s.subsequences);
        }
        Command::Aggregate => {
            let s = pipeline.aggregate()?;
            println!("aggregated {} frames at {}x{}", s.frames, s.width, s.height);
        }
        Command::Eval { predicted, reference } => {
            print_eval(&pipeline.eval(predicted.as_deref(), reference.as_deref())?);
        }
        Command::Report => {
            let report = pipeline.report()?;
            print_plan(&pipeline.load_plan()?, &report);
        }
        Command::Run => {
            let s = pipeline.run()?;
            println!("degraded {} frames", s.degraded);
            print_plan(&s.plan.plan, &s.plan.report);
            println!("upsampled {} frames in {} clips", s.upsample.frames, s.upsample.subsequences);
            println!("aggregated {} frames at {}x{}", s.aggregate.frames, s.aggregate.width, s.aggregate.height);
            print_eval(&s.eval);
        }
        Command::PrintConfig | Command::Synth(_) => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
