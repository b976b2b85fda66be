//! The four-configuration benchmark: every (scene, preset, seed) cell is
//! trained, evaluated on held-out views and aggregated over seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalOptions, MetricsRow, METRICS_HEADER};
use crate::render::checkpoint;
use crate::scene::{load_scene, select_train_views, SplitProtocol};
use crate::train::{train_to_dir, Preset, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkPlan {
    pub scenes: Vec<PathBuf>,
    pub configs: Vec<Preset>,
    pub seeds: Vec<u64>,
    pub n_train_views: usize,
    pub output: PathBuf,
    /// Settings shared by every cell; presets override modality and loss weights.
    pub base: TrainConfig,
    pub protocol: SplitProtocol,
    /// Cells trained concurrently; results do not depend on it.
    pub workers: usize,
}

impl BenchmarkPlan {
    pub fn validate(&self) -> Result<()> {
        if self.scenes.is_empty() || self.configs.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument(
                "benchmark needs scenes, configs and seeds".into(),
            ));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be >= 1".into()));
        }
        self.base.validate()
    }
}

/// Outcome of one cell; `error` is set when the cell failed.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub scene: String,
    pub preset: Preset,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub cells: Vec<CellResult>,
    /// Per (scene, preset, modality) means over the successful seeds.
    pub summary: Vec<MetricsRow>,
}

fn scene_id(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn run_cell(
    plan: &BenchmarkPlan,
    scene_dir: &Path,
    preset: Preset,
    seed: u64,
) -> Result<Vec<MetricsRow>> {
    let id = scene_id(scene_dir);
    let scene = load_scene(scene_dir, preset.multispectral())?;
    let scene = select_train_views(&scene, plan.n_train_views, plan.protocol, seed)?;
    let mut cfg = preset.apply(&plan.base);
    cfg.seed = seed;
    let dir = plan
        .output
        .join(&id)
        .join(preset.name())
        .join(seed.to_string());
    let arts = train_to_dir(&scene, &cfg, &dir)?;
    let cloud = checkpoint::load(&arts.checkpoint)?;
    let opts = EvalOptions {
        rgb_background: cfg.rgb_background,
        nir_background: cfg.nir_background,
        multispectral: preset.multispectral(),
    };
    let rows = evaluate(&cloud, &scene, preset.name(), &id, seed, &opts)?;
    write_rows(&rows, dir.join("metrics.csv"))?;
    Ok(rows)
}

fn write_rows(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn summarise(cells: &[CellResult]) -> Vec<MetricsRow> {
    let mut groups: BTreeMap<(String, Preset, String), Vec<&MetricsRow>> = BTreeMap::new();
    for cell in cells {
        for r in &cell.rows {
            groups
                .entry((cell.scene.clone(), cell.preset, r.modality.clone()))
                .or_default()
                .push(r);
        }
    }
    groups
        .into_iter()
        .map(|((scene, preset, modality), rows)| {
            let n = rows.len() as f64;
            MetricsRow {
                scene,
                config: preset.name().to_string(),
                modality,
                psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / n,
                ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
                n_views_train: rows[0].n_views_train,
                seed: rows.len() as u64,
            }
        })
        .collect()
}

/// Runs every cell, writing per-cell artifacts under
/// `output/<scene>/<preset>/<seed>/` and the aggregate files
/// `results.csv`, `summary.csv`, `failures.csv` and `summary.md` under
/// `output`. A failing cell is recorded and does not stop the others.
pub fn run_benchmark(plan: &BenchmarkPlan) -> Result<BenchmarkReport> {
    plan.validate()?;
    std::fs::create_dir_all(&plan.output)?;
    let mut jobs = Vec::new();
    for scene in &plan.scenes {
        for &preset in &plan.configs {
            for &seed in &plan.seeds {
                jobs.push((scene.clone(), preset, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let cells: Vec<CellResult> = pool.install(|| {
        jobs.par_iter()
            .map(|(scene, preset, seed)| {
                let out = run_cell(plan, scene, *preset, *seed);
                CellResult {
                    scene: scene_id(scene),
                    preset: *preset,
                    seed: *seed,
                    error: out.as_ref().err().map(|e| e.to_string()),
                    rows: out.unwrap_or_default(),
                }
            })
            .collect()
    });
    let report = BenchmarkReport {
        summary: summarise(&cells),
        cells,
    };
    write_report(&report, plan)?;
    Ok(report)
}

fn write_report(report: &BenchmarkReport, plan: &BenchmarkPlan) -> Result<()> {
    let all: Vec<MetricsRow> = report.cells.iter().flat_map(|c| c.rows.clone()).collect();
    write_rows(&all, plan.output.join("results.csv"))?;
    let mut summary = String::from("scene,config,modality,psnr,ssim,lpips,n_views_train,n_seeds\n");
    for r in &report.summary {
        summary.push_str(&r.csv());
        summary.push('\n');
    }
    std::fs::write(plan.output.join("summary.csv"), summary)?;
    let mut failures = String::from("scene,config,seed,error\n");
    for c in report.cells.iter().filter(|c| c.error.is_some()) {
        let msg = c
            .error
            .as_deref()
            .unwrap_or_default()
            .replace([',', '\n'], ";");
        let _ = writeln!(
            failures,
            "{},{},{},{}",
            c.scene,
            c.preset.name(),
            c.seed,
            msg
        );
    }
    std::fs::write(plan.output.join("failures.csv"), failures)?;
    std::fs::write(
        plan.output.join("summary.md"),
        markdown_table(&report.summary, &plan.configs),
    )?;
    Ok(())
}

/// Rows are scenes, column groups are configurations (PSNR, SSIM, LPIPS).
/// Multispectral configurations report the RGB/NIR mean row; the others
/// report RGB. LPIPS is not computed and left blank.
pub fn markdown_table(summary: &[MetricsRow], configs: &[Preset]) -> String {
    let mut scenes: Vec<&str> = summary.iter().map(|r| r.scene.as_str()).collect();
    scenes.dedup();
    let mut s = String::from("| Scene |");
    for p in configs {
        let _ = write!(
            s,
            " {} PSNR | {} SSIM | {} LPIPS |",
            p.name(),
            p.name(),
            p.name()
        );
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(3 * configs.len()));
    s.push('\n');
    for scene in scenes {
        let _ = write!(s, "| {scene} |");
        for p in configs {
            let want = if p.multispectral() { "mean" } else { "rgb" };
            match summary
                .iter()
                .find(|r| r.scene == scene && r.config == p.name() && r.modality == want)
            {
                Some(r) => {
                    let _ = write!(s, " {:.2} | {:.3} |  |", r.psnr, r.ssim);
                }
                None => s.push_str(" failed | failed |  |"),
            }
        }
        s.push('\n');
    }
    s
}
