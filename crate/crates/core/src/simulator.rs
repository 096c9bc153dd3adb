//! Ground-truth scenes built from analytic primitives, their baked voxel
//! form used to render observations, and the view spaces agents move in.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{alpha_from_density, GridBounds, VoxelGrid};
use crate::planner::AgentState;
use crate::render::{render_image, render_ray, Camera, Image, Ray, RayRenderer, RenderSettings};
use crate::{Rgb, Vec3};

pub const SCENE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    /// Axis-aligned box given by its half extents.
    Cuboid { half: Vec3 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub center: Vec3,
    pub density: f64,
    pub rgb: Rgb,
}

impl Primitive {
    /// Signed distance to the surface, negative inside.
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        let p = x - self.center;
        match self.shape {
            Shape::Sphere { radius } => p.norm() - radius,
            Shape::Cuboid { half } => {
                let q = p.abs() - half;
                let outside = q.map(|v| v.max(0.0)).norm();
                outside + q.max().min(0.0)
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self.shape {
            Shape::Sphere { radius } => 4.0 * PI * radius * radius,
            Shape::Cuboid { half: h } => 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z),
        }
    }

    /// Uniform point on the surface.
    pub fn sample_surface<R: Rng>(&self, rng: &mut R) -> Vec3 {
        match self.shape {
            Shape::Sphere { radius } => {
                let z: f64 = rng.random_range(-1.0..=1.0);
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                let s = (1.0 - z * z).sqrt();
                self.center + Vec3::new(s * phi.cos(), s * phi.sin(), z) * radius
            }
            Shape::Cuboid { half: h } => {
                // Faces normal to x, y, z have areas 4 h_y h_z, 4 h_x h_z, 4 h_x h_y.
                let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
                let mut pick = rng.random_range(0.0..areas.iter().sum::<f64>());
                let mut axis = 2;
                for (a, area) in areas.iter().enumerate() {
                    if pick < *area {
                        axis = a;
                        break;
                    }
                    pick -= area;
                }
                let mut p = Vec3::from_fn(|a, _| rng.random_range(-h[a]..=h[a]));
                p[axis] = if rng.random_bool(0.5) { h[axis] } else { -h[axis] };
                self.center + p
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    version: u32,
    bounds: BoundsSpec,
    #[serde(default, rename = "primitive")]
    primitives: Vec<PrimitiveSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsSpec {
    min: [f64; 3],
    max: [f64; 3],
}

/// One primitive as written in a scene file. `size` is `[radius]` for a
/// sphere, half extents `[x, y, z]` for a box, and `[major, minor]` radii
/// for a torus lying in the xy plane.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrimitiveSpec {
    #[serde(rename = "type")]
    kind: String,
    center: [f64; 3],
    size: Vec<f64>,
    density: f64,
    rgb: [f64; 3],
}

/// Density and color defined by a union of primitives. Where primitives
/// overlap the densest one wins; ties go to the earlier one.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticScene {
    pub min: Vec3,
    pub max: Vec3,
    pub primitives: Vec<Primitive>,
}

impl AnalyticScene {
    pub fn new(min: Vec3, max: Vec3, primitives: Vec<Primitive>) -> Result<Self> {
        if !(0..3).all(|a| min[a] < max[a]) {
            return Err(Error::InvalidBounds(format!("{min:?} .. {max:?}")));
        }
        for (i, p) in primitives.iter().enumerate() {
            if !(p.density >= 0.0 && p.density.is_finite()) {
                return Err(Error::Scene(format!("primitive {i}: density must be finite and non-negative")));
            }
        }
        Ok(Self { min, max, primitives })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SceneFile = toml::from_str(text).map_err(|e| Error::Scene(e.to_string()))?;
        if file.version != SCENE_VERSION {
            return Err(Error::Scene(format!("unsupported scene version {}", file.version)));
        }
        let mut prims = Vec::new();
        for (i, p) in file.primitives.iter().enumerate() {
            let center = Vec3::from(p.center);
            let rgb = Rgb::from(p.rgb);
            if rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Scene(format!("primitive {i}: rgb must lie in [0, 1]")));
            }
            let bad_size = || Error::Scene(format!("primitive {i}: wrong size for {}", p.kind));
            let positive = p.size.iter().all(|s| *s > 0.0);
            match (p.kind.as_str(), p.size.len()) {
                ("sphere", 1) if positive => prims.push(Primitive {
                    shape: Shape::Sphere { radius: p.size[0] },
                    center,
                    density: p.density,
                    rgb,
                }),
                ("box", 3) if positive => prims.push(Primitive {
                    shape: Shape::Cuboid {
                        half: Vec3::new(p.size[0], p.size[1], p.size[2]),
                    },
                    center,
                    density: p.density,
                    rgb,
                }),
                ("torus", 2) if positive && p.size[1] < p.size[0] => {
                    prims.extend(torus_spheres(center, p.size[0], p.size[1], p.density, rgb))
                }
                ("sphere" | "box" | "torus", _) => return Err(bad_size()),
                (other, _) => return Err(Error::Scene(format!("primitive {i}: unknown type {other:?}"))),
            }
        }
        Self::new(Vec3::from(file.bounds.min), Vec3::from(file.bounds.max), prims)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scene(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Scene(format!("{}: {e}", path.display())))
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    /// Reconstruction lattice over the scene box.
    pub fn grid_bounds(&self, nodes: usize) -> Result<GridBounds> {
        GridBounds::cube(self.min, self.max, nodes)
    }

    pub fn query(&self, x: &Vec3) -> (f64, Rgb) {
        let mut best: Option<&Primitive> = None;
        for p in &self.primitives {
            if p.signed_distance(x) <= 0.0 && best.is_none_or(|b| p.density > b.density) {
                best = Some(p);
            }
        }
        match best {
            Some(p) => (p.density, p.rgb),
            None => (0.0, self.nearest_color(x)),
        }
    }

    fn nearest_color(&self, x: &Vec3) -> Rgb {
        self.primitives
            .iter()
            .map(|p| (p.signed_distance(x), p.rgb))
            .fold(None, |acc: Option<(f64, Rgb)>, (d, c)| match acc {
                Some((bd, _)) if bd <= d => acc,
                _ => Some((d, c)),
            })
            .map_or(Rgb::zeros(), |(_, c)| c)
    }

    /// Sample the fields on a lattice with `factor` times finer spacing
    /// than a reconstruction grid of `nodes` per axis.
    pub fn bake(&self, nodes: usize, factor: usize) -> Result<BakedScene> {
        let n = (nodes - 1) * factor + 1;
        let bounds = self.grid_bounds(n)?;
        let density = VoxelGrid::from_fn(bounds, 1, |p, out| out[0] = self.query(p).0);
        let color = VoxelGrid::from_fn(bounds, 3, |p, out| {
            out.copy_from_slice(self.query(p).1.as_slice());
        });
        Ok(BakedScene { density, color })
    }

    /// Uniform surface points of the primitives dense enough to count as
    /// surfaces (`alpha` over `delta_ref` of at least 0.5). Points inside
    /// another such primitive or outside the scene box are rejected.
    pub fn surface_points(&self, count: usize, delta_ref: f64, seed: u64) -> Result<Vec<Vec3>> {
        let solid: Vec<&Primitive> = self
            .primitives
            .iter()
            .filter(|p| alpha_from_density(p.density, delta_ref) >= 0.5)
            .collect();
        if solid.is_empty() || count == 0 {
            return Err(Error::NoSurface);
        }
        let areas: Vec<f64> = solid.iter().map(|p| p.area()).collect();
        let total: f64 = areas.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count {
            attempts += 1;
            if attempts > 1000 * count {
                return Err(Error::NoSurface);
            }
            let mut pick = rng.random_range(0.0..total);
            let mut idx = solid.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    idx = i;
                    break;
                }
                pick -= a;
            }
            let x = solid[idx].sample_surface(&mut rng);
            let inside_other = solid
                .iter()
                .enumerate()
                .any(|(j, p)| j != idx && p.signed_distance(&x) < -1e-9);
            let in_box = (0..3).all(|a| x[a] >= self.min[a] && x[a] <= self.max[a]);
            if !inside_other && in_box {
                out.push(x);
            }
        }
        Ok(out)
    }
}

/// Spheres of radius `minor` along a circle of radius `major` in the xy
/// plane, spaced at half the minor radius.
fn torus_spheres(center: Vec3, major: f64, minor: f64, density: f64, rgb: Rgb) -> Vec<Primitive> {
    let n = ((2.0 * PI * major) / (0.5 * minor)).ceil() as usize;
    (0..n)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / n as f64;
            Primitive {
                shape: Shape::Sphere { radius: minor },
                center: center + Vec3::new(phi.cos(), phi.sin(), 0.0) * major,
                density,
                rgb,
            }
        })
        .collect()
}

/// Scene fields sampled on a fine lattice; this is what observations are
/// rendered from.
#[derive(Clone, Debug, PartialEq)]
pub struct BakedScene {
    pub density: VoxelGrid,
    pub color: VoxelGrid,
}

impl BakedScene {
    pub fn render_settings(&self, background: Rgb) -> RenderSettings {
        RenderSettings::new(0.5 * self.density.bounds.min_voxel_size(), background)
    }

    pub fn oracle_render(&self, camera: &Camera, background: Rgb) -> Image {
        render_image(self, camera, &self.render_settings(background))
    }
}

impl RayRenderer for BakedScene {
    fn render_color(&self, ray: &Ray, settings: &RenderSettings) -> Rgb {
        let Some(samples) = settings.samples_in(&self.density.bounds, ray) else {
            return settings.background;
        };
        render_ray(
            ray,
            &samples,
            |x| self.density.query_scalar(x).max(0.0),
            |x| {
                let mut c = [0.0; 3];
                self.color.query_into(x, &mut c);
                Rgb::new(c[0], c[1], c[2])
            },
            &settings.background,
        )
        .rgb
    }
}

/// Where the camera may be placed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ViewSpace {
    /// Camera centers on a spherical shell above the ground plane through
    /// `center`, looking at `center`. Elevations in radians.
    Hemisphere {
        center: Vec3,
        min_radius: f64,
        max_radius: f64,
        min_elevation: f64,
        max_elevation: f64,
    },
    /// Camera centers anywhere in a box, initially looking at `target`.
    Box { min: Vec3, max: Vec3, target: Vec3 },
}

impl ViewSpace {
    pub fn hemisphere(center: Vec3, min_radius: f64, max_radius: f64) -> Self {
        ViewSpace::Hemisphere {
            center,
            min_radius,
            max_radius,
            min_elevation: 10f64.to_radians(),
            max_elevation: 70f64.to_radians(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ViewSpace::Hemisphere {
                min_radius,
                max_radius,
                min_elevation,
                max_elevation,
                ..
            } => {
                0.0 < min_radius
                    && min_radius <= max_radius
                    && 0.0 <= min_elevation
                    && min_elevation <= max_elevation
                    && max_elevation < PI / 2.0
            }
            ViewSpace::Box { min, max, .. } => (0..3).all(|a| min[a] <= max[a]),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid view space {self:?}")))
        }
    }

    fn state_at(&self, rng: &mut ChaCha8Rng, surface: bool) -> AgentState {
        match *self {
            ViewSpace::Hemisphere {
                center,
                min_radius,
                max_radius,
                min_elevation,
                max_elevation,
            } => {
                // Uniform area on the sphere: sin(elevation) is uniform.
                // Uniform volume in the shell: radius cubed is uniform.
                let (s0, s1) = (min_elevation.sin(), max_elevation.sin());
                let elevation = rng.random_range(s0..=s1).asin();
                let azimuth = rng.random_range(-PI..PI);
                let radius = if surface {
                    max_radius
                } else {
                    rng.random_range(min_radius.powi(3)..=max_radius.powi(3)).cbrt()
                };
                AgentState::Spherical {
                    radius,
                    azimuth,
                    elevation,
                    center,
                }
            }
            ViewSpace::Box { min, max, target } => {
                let p = Vec3::from_fn(|a, _| rng.random_range(min[a]..=max[a]));
                AgentState::free_looking_at(p, &target)
            }
        }
    }

    /// `count` states uniform over the space's parameterization.
    pub fn sample_goal_candidates(&self, count: usize, seed: u64) -> Vec<AgentState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.state_at(&mut rng, false)).collect()
    }

    /// Discrete viewpoints: on the outer shell for hemispheres, anywhere
    /// in the box otherwise.
    pub fn sample_viewpoints(&self, count: usize, seed: u64) -> Vec<AgentState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.state_at(&mut rng, true)).collect()
    }

    pub fn contains(&self, state: &AgentState) -> bool {
        const EPS: f64 = 1e-9;
        match (*self, state) {
            (
                ViewSpace::Hemisphere {
                    center: c,
                    min_radius,
                    max_radius,
                    min_elevation,
                    max_elevation,
                },
                AgentState::Spherical {
                    radius,
                    elevation,
                    center,
                    ..
                },
            ) => {
                (c - center).norm() < EPS
                    && *radius >= min_radius - EPS
                    && *radius <= max_radius + EPS
                    && *elevation >= min_elevation - EPS
                    && *elevation <= max_elevation + EPS
            }
            (ViewSpace::Box { min, max, .. }, s @ AgentState::Free { .. }) => {
                let p = s.position();
                (0..3).all(|a| p[a] >= min[a] - EPS && p[a] <= max[a] + EPS)
            }
            _ => false,
        }
    }

    /// Coordinate box for planning control points. Azimuth and rotation
    /// coordinates are unbounded.
    pub fn control_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let inf = f64::INFINITY;
        match *self {
            ViewSpace::Hemisphere {
                min_radius,
                max_radius,
                min_elevation,
                max_elevation,
                ..
            } => (
                DVector::from_column_slice(&[min_radius, -inf, min_elevation]),
                DVector::from_column_slice(&[max_radius, inf, max_elevation]),
            ),
            ViewSpace::Box { min, max, .. } => (
                DVector::from_column_slice(&[-inf, -inf, -inf, min.x, min.y, min.z]),
                DVector::from_column_slice(&[inf, inf, inf, max.x, max.y, max.z]),
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionMode {
    /// Free motion along planned trajectories.
    Continuous,
    /// Jump to any unvisited viewpoint.
    DiscreteFree,
    /// Jump to one of the nearest unvisited viewpoints.
    #[default]
    DiscreteLocal,
}

impl MotionMode {
    pub fn is_discrete(self) -> bool {
        !matches!(self, MotionMode::Continuous)
    }
}

/// Number of neighbours offered in the local discrete mode.
pub const LOCAL_NEIGHBOURS: usize = 3;

/// Indices of the viewpoints reachable from `current`. Continuous mode
/// offers every viewpoint; discrete modes only unvisited ones, and the
/// local mode only the nearest few by camera-center distance (ties by
/// index), sorted by distance.
pub fn legal_moves(
    mode: MotionMode,
    current: &AgentState,
    viewpoints: &[AgentState],
    visited: &[bool],
) -> Result<Vec<usize>> {
    if viewpoints.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let unvisited = (0..viewpoints.len()).filter(|i| !visited.get(*i).copied().unwrap_or(false));
    match mode {
        MotionMode::Continuous => Ok((0..viewpoints.len()).collect()),
        MotionMode::DiscreteFree => Ok(unvisited.collect()),
        MotionMode::DiscreteLocal => {
            let p = current.position();
            let mut v: Vec<(f64, usize)> = unvisited
                .map(|i| ((viewpoints[i].position() - p).norm(), i))
                .collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            Ok(v.into_iter().take(LOCAL_NEIGHBOURS).map(|(_, i)| i).collect())
        }
    }
}
