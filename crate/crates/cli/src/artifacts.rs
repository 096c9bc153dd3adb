use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use activermap_core::active::{write_epochs_csv, RunOutput};
use activermap_core::eval::{write_ply, EvalReport};
use activermap_core::mapping::write_telemetry;
use activermap_core::model::Checkpoint;
use activermap_core::planner::write_trajectory_csv;
use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Relative path, size and SHA-256 of every file, sorted by path.
pub fn checksums(root: &Path, files: &[PathBuf]) -> Result<Vec<FileEntry>> {
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let data = std::fs::read(f).with_context(|| format!("reading {}", f.display()))?;
        let rel = f.strip_prefix(root).unwrap_or(f);
        out.push(FileEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(&data)),
        });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn write_report_csv(path: &Path, rows: &[(&str, EvalReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["model", "psnr", "ssim", "accuracy", "completeness", "f1", "chamfer"])?;
    for (name, r) in rows {
        let vals = [r.psnr, r.ssim, r.accuracy, r.completeness, r.f1, r.chamfer];
        let mut rec = vec![name.to_string()];
        rec.extend(vals.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write every artifact of a finished run under `dir`; returns the files.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut track = |p: PathBuf| -> PathBuf {
        files.push(p.clone());
        p
    };
    write_epochs_csv(&out.epochs, create(&track(dir.join("metrics.csv")))?)?;
    write_telemetry(&out.telemetry, create(&track(dir.join("telemetry.csv")))?)?;
    write_trajectory_csv(&out.visited, create(&track(dir.join("trajectory.csv")))?)?;
    for (i, plan) in out.trajectories.iter().enumerate() {
        write_trajectory_csv(plan, create(&track(dir.join(format!("plans/plan_{i:03}.csv"))))?)?;
    }
    write_report_csv(
        &track(dir.join("report.csv")),
        &[("coarse", out.coarse_report), ("fine", out.report)],
    )?;
    write_ply(&out.model_points, create(&track(dir.join("points_model.ply")))?)?;
    write_ply(&out.reference_points, create(&track(dir.join("points_reference.ply")))?)?;
    std::fs::create_dir_all(dir.join("views"))?;
    for (i, v) in out.test_views.iter().enumerate() {
        v.rendered.save_png(&track(dir.join(format!("views/test_{i:03}.png"))))?;
        v.truth.save_png(&track(dir.join(format!("views/truth_{i:03}.png"))))?;
    }
    let ckpt = Checkpoint {
        coarse: out.coarse.clone(),
        fine: Some(out.fine.clone()),
    };
    files.extend(ckpt.save(&dir.join("checkpoint"))?);
    Ok(files)
}
