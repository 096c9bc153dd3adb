//! Radiance-field models and their optimizer.

mod adam;
mod coarse;
mod fine;
mod mlp;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use adam::AdamState;
pub use coarse::CoarseModel;
pub use fine::{FineConfig, FineGrads, FineModel};
pub use mlp::{encoding_dim, positional_encoding, LayerLayout, MlpCache, MlpConfig, ShallowMlp};

use crate::error::{Error, Result};
use crate::grid::{EntropyVolume, VoxelGrid};

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "checkpoint.toml";

/// Trained models written to or read from a checkpoint directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub coarse: CoarseModel,
    pub fine: Option<FineModel>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    shift_b: f64,
    coarse_density: String,
    coarse_color: String,
    entropy_alpha: String,
    entropy_mask: String,
    fine: Option<FineManifest>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FineManifest {
    config: FineConfig,
    density: String,
    feature: String,
    mlp_weights: String,
    /// Input width and the placement of every layer in the weight file.
    mlp: MlpConfig,
    layers: Vec<LayerLayout>,
}

fn ckpt_err(path: &Path, what: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("{}: {what}", path.display()))
}

fn read_grid(dir: &Path, name: &str) -> Result<VoxelGrid> {
    let path = dir.join(name);
    let bytes = std::fs::read(&path).map_err(|e| ckpt_err(&path, e))?;
    VoxelGrid::from_bytes(&bytes).map_err(|e| ckpt_err(&path, e))
}

impl Checkpoint {
    /// Write every model file into `dir` and return the paths written.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: &[u8]| -> Result<String> {
            let p = dir.join(name);
            std::fs::write(&p, bytes)?;
            written.push(p);
            Ok(name.to_string())
        };
        let c = &self.coarse;
        let mask: Vec<u8> = c.entropy.synchronized.iter().map(|s| u8::from(*s)).collect();
        let mut manifest = Manifest {
            version: CHECKPOINT_VERSION,
            shift_b: c.shift_b,
            coarse_density: put("coarse_density.grid", &c.density.to_bytes())?,
            coarse_color: put("coarse_color.grid", &c.color.to_bytes())?,
            entropy_alpha: put("entropy_alpha.grid", &c.entropy.alpha.to_bytes())?,
            entropy_mask: put("entropy_mask.bin", &mask)?,
            fine: None,
        };
        if let Some(f) = &self.fine {
            let weights: Vec<u8> = f
                .mlp
                .params()
                .iter()
                .flat_map(|p| (*p as f32).to_le_bytes())
                .collect();
            manifest.fine = Some(FineManifest {
                config: f.config,
                density: put("fine_density.grid", &f.density.to_bytes())?,
                feature: put("fine_feature.grid", &f.feature.to_bytes())?,
                mlp_weights: put("mlp_weights.f32", &weights)?,
                mlp: f.mlp.config,
                layers: f.mlp.layout.clone(),
            });
        }
        let text = toml::to_string(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
        put(MANIFEST, text.as_bytes())?;
        Ok(written)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&mpath).map_err(|e| ckpt_err(&mpath, e))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| ckpt_err(&mpath, e))?;
        if m.version != CHECKPOINT_VERSION {
            return Err(ckpt_err(&mpath, format!("unsupported version {}", m.version)));
        }
        let density = read_grid(dir, &m.coarse_density)?;
        let color = read_grid(dir, &m.coarse_color)?;
        let alpha = read_grid(dir, &m.entropy_alpha)?;
        let mask_path = dir.join(&m.entropy_mask);
        let mask = std::fs::read(&mask_path).map_err(|e| ckpt_err(&mask_path, e))?;
        if density.channels != 1
            || color.channels != 3
            || color.bounds != density.bounds
            || alpha.bounds != density.bounds
            || mask.len() != density.num_voxels()
        {
            return Err(ckpt_err(dir, "coarse grids disagree in shape"));
        }
        let coarse = CoarseModel {
            density,
            color,
            entropy: EntropyVolume {
                alpha,
                synchronized: mask.iter().map(|b| *b != 0).collect(),
            },
            shift_b: m.shift_b,
        };
        let fine = match m.fine {
            None => None,
            Some(fm) => {
                let density = read_grid(dir, &fm.density)?;
                let feature = read_grid(dir, &fm.feature)?;
                let wpath = dir.join(&fm.mlp_weights);
                let bytes = std::fs::read(&wpath).map_err(|e| ckpt_err(&wpath, e))?;
                if bytes.len() % 4 != 0 {
                    return Err(ckpt_err(&wpath, "truncated weight file"));
                }
                let params: Vec<f64> = bytes
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                    .collect();
                let mlp = ShallowMlp::from_params(fm.mlp, params).map_err(|e| ckpt_err(&wpath, e))?;
                if mlp.layout != fm.layers
                    || fm.mlp != fm.config.mlp_config()
                    || feature.channels != fm.config.feature_channels
                    || feature.bounds != density.bounds
                    || density.channels != 1
                {
                    return Err(ckpt_err(dir, "fine model layout disagrees with its files"));
                }
                Some(FineModel {
                    density,
                    feature,
                    mlp,
                    shift_b: m.shift_b,
                    config: fm.config,
                })
            }
        };
        Ok(Self { coarse, fine })
    }
}
