use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use wavesplat::bench::{run_benchmark, BenchmarkPlan};
use wavesplat::image::{load_image, save_image, BitDepth};
use wavesplat::losses::lf_energy_map;
use wavesplat::metrics::{evaluate, EvalOptions, METRICS_HEADER};
use wavesplat::render::{checkpoint, rasterize, Modality};
use wavesplat::scene::{
    generate_synthetic_scene, load_scene, save_scene, select_train_views, SplitProtocol,
    SyntheticSpec,
};
use wavesplat::train::{train_to_dir, Preset, TrainConfig};
use wavesplat::wavelet::{dwt2_multi, Band};
use wavesplat::{Error, Image};

#[derive(Parser)]
#[command(
    name = "wavesplat",
    version,
    about = "Gaussian splatting with wavelet-domain supervision"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    Uniform,
    SeededRandom,
}

impl From<Protocol> for SplitProtocol {
    fn from(p: Protocol) -> Self {
        match p {
            Protocol::Uniform => SplitProtocol::Uniform,
            Protocol::SeededRandom => SplitProtocol::SeededRandom,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModalityArg {
    Rgb,
    Nir,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

#[derive(Subcommand)]
enum Command {
    /// Write the Haar sub-bands of an image as PNGs plus a JSON sidecar.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        levels: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the low-frequency energy map as a heat map and raw f32 values.
    Lfmap {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic scene with exact poses.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        gaussians: usize,
        #[arg(long, default_value_t = 10)]
        views: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        multispectral: bool,
    },
    /// Train on a scene directory; writes checkpoint.wspl and log.csv.
    Train {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of training views; all views when omitted.
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long, value_enum, default_value = "uniform")]
        protocol: Protocol,
    },
    /// Render one view of a checkpoint.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        view: usize,
        #[arg(long, value_enum, default_value = "rgb")]
        modality: ModalityArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the held-out views of a scene.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        n_train: usize,
        #[arg(long, value_enum, default_value = "uniform")]
        protocol: Protocol,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "eval")]
        label: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Train and evaluate every (scene, preset, seed) cell.
    Benchmark {
        #[arg(long, value_delimiter = ',', required = true)]
        scenes: Vec<PathBuf>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "single,single+dwt,multi,multi+dwt"
        )]
        configs: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 3)]
        n_train: usize,
        #[arg(long)]
        out: PathBuf,
        /// Base training config shared by all cells.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "uniform")]
        protocol: Protocol,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

/// Bad input paths or arguments exit with 2, everything else with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::MissingFile(_) | Error::InvalidArgument(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<TrainConfig> {
    Ok(match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    })
}

fn require(path: &Path) -> anyhow::Result<()> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()).into());
    }
    Ok(())
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Decompose { input, levels, out } => decompose(&input, levels, &out),
        Command::Lfmap { input, out } => lfmap(&input, &out),
        Command::Synth {
            seed,
            out,
            gaussians,
            views,
            size,
            multispectral,
        } => {
            let (cloud, scene) = generate_synthetic_scene(&SyntheticSpec {
                n_gaussians: gaussians,
                n_views: views,
                image_size: size,
                seed,
                multispectral,
            })?;
            save_scene(&scene, &out)?;
            checkpoint::save(&cloud, out.join("ground_truth.wspl"))?;
            Ok(())
        }
        Command::Train {
            scene,
            config,
            out,
            n_train,
            protocol,
        } => {
            require(&scene)?;
            let cfg = load_config(config.as_deref())?;
            let mut s = load_scene(&scene, cfg.multispectral)?;
            if let Some(n) = n_train {
                s = select_train_views(&s, n, protocol.into(), cfg.seed)?;
            }
            let arts = train_to_dir(&s, &cfg, &out)?;
            println!("{}", arts.checkpoint.display());
            Ok(())
        }
        Command::Render {
            checkpoint: ckpt,
            scene,
            view,
            modality,
            out,
        } => {
            require(&scene)?;
            let cloud = checkpoint::load(&ckpt)?;
            let s = load_scene(&scene, false)?;
            let cam = s
                .cameras
                .get(view)
                .ok_or_else(|| Error::InvalidArgument(format!("view {view} of {}", s.n_views())))?;
            let (m, bg): (Modality, &[f64]) = match modality {
                ModalityArg::Rgb => (Modality::Rgb, &[0.0; 3]),
                ModalityArg::Nir => (Modality::Nir, &[0.0]),
            };
            let img = rasterize(&cloud, cam, m, bg)?.color;
            save_image(&img, &out, BitDepth::Sixteen)?;
            Ok(())
        }
        Command::Eval {
            checkpoint: ckpt,
            scene,
            n_train,
            protocol,
            seed,
            label,
            format,
        } => {
            require(&scene)?;
            let cloud = checkpoint::load(&ckpt)?;
            let s = load_scene(&scene, cloud.has_nir())?;
            let s = select_train_views(&s, n_train, protocol.into(), seed)?;
            let id = scene
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let opts = EvalOptions {
                multispectral: cloud.has_nir(),
                ..Default::default()
            };
            let rows = evaluate(&cloud, &s, &label, &id, seed, &opts)?;
            match format {
                Format::Csv => {
                    println!("{METRICS_HEADER}");
                    rows.iter().for_each(|r| println!("{}", r.csv()));
                }
                Format::Markdown => {
                    println!("| Scene | Config | Modality | PSNR | SSIM | LPIPS |");
                    println!("|---|---|---|---:|---:|---:|");
                    for r in &rows {
                        println!(
                            "| {} | {} | {} | {:.2} | {:.3} |  |",
                            r.scene, r.config, r.modality, r.psnr, r.ssim
                        );
                    }
                }
            }
            Ok(())
        }
        Command::Benchmark {
            scenes,
            configs,
            seeds,
            n_train,
            out,
            config,
            protocol,
            workers,
        } => {
            for s in &scenes {
                require(s)?;
            }
            let configs = configs
                .iter()
                .map(|c| Preset::parse(c))
                .collect::<Result<Vec<_>, _>>()?;
            let plan = BenchmarkPlan {
                scenes,
                configs,
                seeds,
                n_train_views: n_train,
                output: out,
                base: load_config(config.as_deref())?,
                protocol: protocol.into(),
                workers,
            };
            let report = run_benchmark(&plan)?;
            for c in report.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!(
                    "cell {}/{}/{} failed: {}",
                    c.scene,
                    c.preset.name(),
                    c.seed,
                    c.error.as_deref().unwrap_or_default()
                );
            }
            print!(
                "{}",
                std::fs::read_to_string(plan.output.join("summary.md"))?
            );
            Ok(())
        }
    }
}

/// Min/max rescaling of one band to `[0, 1]` for display.
fn normalise(img: &Image) -> (Image, f64, f64) {
    let lo = img.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    (img.map(|v| (v - lo) / span), lo, hi)
}

fn decompose(input: &Path, levels: usize, out: &Path) -> anyhow::Result<()> {
    require(input)?;
    if !(1..=2).contains(&levels) {
        return Err(Error::InvalidArgument(format!("levels must be 1 or 2, got {levels}")).into());
    }
    let img = load_image(input)?;
    let pyramid = dwt2_multi(&img, levels)?;
    std::fs::create_dir_all(out)?;
    let mut sidecar = serde_json::Map::new();
    for (l, sb) in pyramid.levels.iter().enumerate() {
        for band in Band::ALL {
            let name = band.name().to_string();
            let stem = if levels == 1 {
                name
            } else {
                format!("l{}_{name}", l + 1)
            };
            let (vis, lo, hi) = normalise(sb.band(band));
            save_image(&vis, out.join(format!("{stem}.png")), BitDepth::Sixteen)?;
            sidecar.insert(
                stem,
                json!({"min": lo, "max": hi, "width": vis.width(), "height": vis.height()}),
            );
        }
    }
    let meta = json!({
        "source": input.display().to_string(),
        "width": img.width(),
        "height": img.height(),
        "channels": img.channels(),
        "levels": levels,
        "bands": sidecar,
    });
    std::fs::write(
        out.join("subbands.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

fn lfmap(input: &Path, out: &Path) -> anyhow::Result<()> {
    require(input)?;
    let img = load_image(input)?;
    if img.width() < 2 || img.height() < 2 {
        bail!(Error::InvalidArgument("image must be at least 2x2".into()));
    }
    let map = lf_energy_map(&img).context("computing energy map")?;
    let v = &map.values;
    std::fs::create_dir_all(out)?;
    // red where LF energy is low, blue where it dominates
    let heat = Image::from_fn(v.width(), v.height(), 3, |c, r, x| {
        let e = v.get(0, r, x);
        match c {
            0 => 1.0 - e,
            1 => 0.0,
            _ => e,
        }
    });
    save_image(&heat, out.join("lfmap.png"), BitDepth::Eight)?;
    let raw: Vec<u8> = v
        .data()
        .iter()
        .flat_map(|&x| (x as f32).to_le_bytes())
        .collect();
    std::fs::write(out.join("lfmap.f32"), raw)?;
    let header = json!({"height": v.height(), "width": v.width(), "dtype": "f32"});
    std::fs::write(
        out.join("lfmap.json"),
        serde_json::to_string_pretty(&header)?,
    )?;
    Ok(())
}
