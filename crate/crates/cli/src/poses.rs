use std::path::{Path, PathBuf};

use activermap_core::render::Intrinsics;
use activermap_core::{AgentState, Rgb};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const POSES_VERSION: u32 = 1;

/// Cameras to render: shared intrinsics plus one pose per image, each
/// optionally paired with a ground-truth PNG (relative to the file).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosesFile {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub background: Rgb,
    #[serde(rename = "pose")]
    pub poses: Vec<PoseEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    pub state: AgentState,
}

impl PosesFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading poses {}", path.display()))?;
        let mut file: PosesFile = toml::from_str(&text).with_context(|| format!("parsing poses {}", path.display()))?;
        if file.version != POSES_VERSION {
            bail!("poses {}: unsupported version {}", path.display(), file.version);
        }
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut file.poses {
            if let Some(t) = &mut p.truth {
                if t.is_relative() {
                    *t = base.join(&*t);
                }
            }
        }
        Ok(file)
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::from_fov(self.width, self.height, self.fov_deg.to_radians())
    }
}
