use std::path::{Path, PathBuf};

use activermap_core::active::{run_active_reconstruction, ActiveConfig, NbvPolicy, StopReason};
use activermap_core::eval::{psnr, ssim, EvalReport};
use activermap_core::mapping::TrainConfig;
use activermap_core::model::Checkpoint;
use activermap_core::render::{render_image, Image, RayRenderer};
use activermap_core::{AnalyticScene, Error as CoreError};
use anyhow::{bail, Context, Result};
use log::info;
use serde::Serialize;

use crate::artifacts::{checksums, write_report_csv, write_run, FileEntry};
use crate::config::{ConfigError, RunConfig};
use crate::poses::{PoseEntry, PosesFile, POSES_VERSION};

pub const MANIFEST_VERSION: u32 = 1;

/// 2 for numerical failures and unreadable checkpoints, 1 for everything
/// else (bad configs, missing files).
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            if core.is_numerical() || matches!(core, CoreError::Checkpoint(_) | CoreError::MalformedBlob(_)) {
                return 2;
            }
        }
    }
    1
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: u32,
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    scene: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop_reason: Option<StopReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<ActiveConfig>,
    #[serde(rename = "file")]
    files: Vec<FileEntry>,
}

impl<'a> Manifest<'a> {
    fn new(command: &'a str, files: Vec<FileEntry>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            command,
            scene: None,
            seed: None,
            seeds: None,
            workers: rayon::current_num_threads(),
            stop_reason: None,
            report: None,
            config: None,
            files,
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).context("serializing manifest")?;
        std::fs::write(dir.join("manifest.toml"), text)?;
        Ok(())
    }
}

fn set_workers(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(ConfigError::Parse {
                path: PathBuf::from("--workers"),
                message: "must be at least 1".into(),
            }
            .into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(())
}

fn load_scene(path: &Path) -> Result<AnalyticScene> {
    Ok(AnalyticScene::load(path)?)
}

pub fn run(config: &Path, seed: Option<u64>, workers: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    set_workers(workers)?;
    let seed = seed.unwrap_or(cfg.seed);
    let dir = out.unwrap_or_else(|| cfg.output.clone());
    let scene = load_scene(&cfg.scene)?;
    info!("run: scene {} policy {:?} seed {seed}", cfg.scene.display(), cfg.active.policy);
    let output = run_active_reconstruction(&scene, cfg.active, seed)?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = write_run(&dir, &output)?;

    // Held-out poses with their ground truth, ready for `render`.
    let poses = PosesFile {
        version: POSES_VERSION,
        width: cfg.active.image_width,
        height: cfg.active.image_height,
        fov_deg: cfg.active.fov_deg,
        background: cfg.active.background,
        poses: output
            .test_views
            .iter()
            .enumerate()
            .map(|(i, v)| PoseEntry {
                truth: Some(PathBuf::from(format!("views/truth_{i:03}.png"))),
                state: v.state,
            })
            .collect(),
    };
    let poses_path = dir.join("test_poses.toml");
    std::fs::write(&poses_path, toml::to_string(&poses)?)?;
    files.push(poses_path);

    let mut manifest = Manifest::new("run", checksums(&dir, &files)?);
    manifest.scene = Some(cfg.scene.display().to_string());
    manifest.seed = Some(seed);
    manifest.stop_reason = Some(output.stop_reason);
    manifest.report = Some(output.report);
    manifest.config = Some(cfg.active);
    manifest.write(&dir)?;
    let r = output.report;
    println!(
        "psnr {:.2} ssim {:.3} accuracy {:.3} completeness {:.3} f1 {:.3} chamfer {:.4} ({} views, {:?})",
        r.psnr,
        r.ssim,
        r.accuracy,
        r.completeness,
        r.f1,
        r.chamfer,
        output.visited.len(),
        output.stop_reason
    );
    Ok(())
}

fn policy_name(p: NbvPolicy) -> &'static str {
    match p {
        NbvPolicy::Entropy => "entropy",
        NbvPolicy::Random => "random",
        NbvPolicy::Fvs => "fvs",
    }
}

pub fn compare(config: &Path, seeds: u64, workers: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    for p in [NbvPolicy::Entropy, NbvPolicy::Fvs, NbvPolicy::Random] {
        if !cfg.policies.contains(&p) {
            return Err(ConfigError::Parse {
                path: config.to_path_buf(),
                message: format!("policy set lacks {}", policy_name(p)),
            }
            .into());
        }
    }
    if seeds == 0 {
        bail!(ConfigError::Parse {
            path: PathBuf::from("--seeds"),
            message: "must be at least 1".into()
        });
    }
    set_workers(workers)?;
    let dir = out.unwrap_or_else(|| cfg.output.clone());
    let scene = load_scene(&cfg.scene)?;
    let seed_list: Vec<u64> = (0..seeds).map(|i| cfg.seed + i).collect();
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for policy in [NbvPolicy::Entropy, NbvPolicy::Fvs, NbvPolicy::Random] {
        let name = policy_name(policy);
        let mut mean = [0.0; 6];
        for &seed in &seed_list {
            info!("compare: {name} seed {seed}");
            let active = ActiveConfig { policy, ..cfg.active };
            let output = run_active_reconstruction(&scene, active, seed)?;
            let run_dir = dir.join(name).join(format!("seed_{seed}"));
            std::fs::create_dir_all(&run_dir)?;
            let metrics = run_dir.join("metrics.csv");
            activermap_core::active::write_epochs_csv(&output.epochs, std::fs::File::create(&metrics)?)?;
            let report = run_dir.join("report.csv");
            write_report_csv(&report, &[("coarse", output.coarse_report), ("fine", output.report)])?;
            files.extend([metrics, report]);
            let r = output.report;
            for (m, v) in mean.iter_mut().zip([r.psnr, r.ssim, r.accuracy, r.completeness, r.f1, r.chamfer]) {
                *m += v / seed_list.len() as f64;
            }
        }
        rows.push((name, mean));
    }
    let table = dir.join("compare.csv");
    let mut w = csv::Writer::from_path(&table)?;
    w.write_record(["policy", "psnr", "ssim", "accuracy", "completeness", "f1", "chamfer"])?;
    for (name, m) in &rows {
        let mut rec = vec![name.to_string()];
        rec.extend(m.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    drop(w);
    files.push(table);
    for (name, m) in &rows {
        println!(
            "{name:>8}: psnr {:.2} ssim {:.3} acc {:.3} comp {:.3} f1 {:.3} chamfer {:.4}",
            m[0], m[1], m[2], m[3], m[4], m[5]
        );
    }
    let mut manifest = Manifest::new("compare", checksums(&dir, &files)?);
    manifest.scene = Some(cfg.scene.display().to_string());
    manifest.seeds = Some(seed_list);
    manifest.config = Some(cfg.active);
    manifest.write(&dir)
}

pub fn render(checkpoint: &Path, poses: &Path, out: Option<PathBuf>) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let poses_file = PosesFile::load(poses)?;
    let dir = out.unwrap_or_else(|| poses.parent().unwrap_or(Path::new(".")).join("renders"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let intrinsics = poses_file.intrinsics();
    let train = TrainConfig::default();
    let (model, voxel): (&dyn RayRenderer, f64) = match &ckpt.fine {
        Some(f) => (f, f.bounds().min_voxel_size()),
        None => (&ckpt.coarse, ckpt.coarse.bounds().min_voxel_size()),
    };
    let settings = train.render_settings(voxel, poses_file.background);
    let mut files = Vec::new();
    let mut scores = Vec::new();
    for (i, pose) in poses_file.poses.iter().enumerate() {
        let camera = pose.state.camera(intrinsics);
        let image = render_image(model, &camera, &settings);
        let path = dir.join(format!("view_{i:03}.png"));
        image.save_png(&path)?;
        files.push(path);
        if let Some(t) = &pose.truth {
            let truth = Image::load_png(t).with_context(|| format!("loading ground truth {}", t.display()))?;
            scores.push((i, psnr(&image, &truth)?, ssim(&image, &truth)?));
        }
    }
    if !scores.is_empty() {
        let path = dir.join("metrics.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["view", "psnr", "ssim"])?;
        for (i, p, s) in &scores {
            w.write_record([i.to_string(), p.to_string(), s.to_string()])?;
        }
        w.flush()?;
        files.push(path);
    }
    println!("rendered {} views into {}", poses_file.poses.len(), dir.display());
    Manifest::new("render", checksums(&dir, &files)?).write(&dir)
}
