use activermap_core::simulator::legal_moves;
use activermap_core::{AgentState, AnalyticScene, Image, Intrinsics, MotionMode, Rgb, Vec3, ViewSpace};

const WHITE: Rgb = Rgb::new(1.0, 1.0, 1.0);

fn sphere_scene(radius: f64, density: f64) -> AnalyticScene {
    AnalyticScene::from_toml(&format!(
        r#"
version = 1
bounds = {{ min = [-1, -1, -1], max = [1, 1, 1] }}

[[primitive]]
type = "sphere"
center = [0, 0, 0]
size = [{radius}]
density = {density}
rgb = [1, 0, 0]
"#
    ))
    .unwrap()
}

fn spherical(radius: f64, azimuth: f64, elevation: f64) -> AgentState {
    AgentState::Spherical {
        radius,
        azimuth,
        elevation,
        center: Vec3::zeros(),
    }
}

#[test]
fn opaque_sphere_covers_its_projected_disk() {
    let (r, d) = (0.5, 3.0);
    // The default 64-node reconstruction grid, baked 4x finer.
    let baked = sphere_scene(r, 400.0).bake(64, 4).unwrap();
    let k = Intrinsics::from_fov(100, 100, 40f64.to_radians());
    let img = baked.oracle_render(&spherical(d, 0.8, 0.5).camera(k), WHITE);
    // A pixel is on the disk when it is closer to red than to white.
    let on_disk = img.pixels.iter().filter(|p| p.y < 0.5).count() as f64;
    // Silhouette of a sphere centered on the optical axis: a circle of
    // image radius f * tan(asin(r / d)).
    let image_radius = k.focal * r / (d * d - r * r).sqrt();
    let expected = std::f64::consts::PI * image_radius * image_radius;
    let rel = (on_disk - expected).abs() / expected;
    assert!(rel < 0.05, "{on_disk} pixels vs {expected:.1} expected");
}

#[test]
fn empty_scene_renders_uniform_background() {
    let scene = AnalyticScene::new(Vec3::repeat(-1.0), Vec3::repeat(1.0), Vec::new()).unwrap();
    let baked = scene.bake(8, 2).unwrap();
    let k = Intrinsics::from_fov(16, 16, 0.7);
    let bg = Rgb::new(0.2, 0.4, 0.6);
    let img = baked.oracle_render(&spherical(3.0, 0.1, 0.3).camera(k), bg);
    assert!(img.pixels.iter().all(|p| *p == bg));
}

#[test]
fn mirrored_azimuths_give_mirrored_images() {
    let scene = AnalyticScene::from_toml(
        r#"
version = 1
bounds = { min = [-1, -1, -1], max = [1, 1, 1] }

[[primitive]]
type = "box"
center = [0.3, 0, 0]
size = [0.2, 0.4, 0.3]
density = 50
rgb = [0.1, 0.8, 0.3]

[[primitive]]
type = "sphere"
center = [-0.3, 0, 0.2]
size = [0.35]
density = 50
rgb = [0.9, 0.5, 0.1]
"#,
    )
    .unwrap();
    // Symmetric under y -> -y.
    let baked = scene.bake(17, 4).unwrap();
    let k = Intrinsics::from_fov(40, 30, 0.8);
    let a: Image = baked.oracle_render(&spherical(3.2, 0.9, 0.4).camera(k), WHITE);
    let b: Image = baked.oracle_render(&spherical(3.2, -0.9, 0.4).camera(k), WHITE);
    let mut worst: f64 = 0.0;
    for v in 0..k.height {
        for u in 0..k.width {
            worst = worst.max((a.get(u, v) - b.get(k.width - 1 - u, v)).amax());
        }
    }
    assert!(worst < 1e-9, "largest mirrored pixel difference {worst:e}");
}

#[test]
fn oracle_rendering_is_deterministic() {
    let baked = sphere_scene(0.4, 50.0).bake(12, 4).unwrap();
    let k = Intrinsics::from_fov(24, 24, 0.7);
    let cam = spherical(3.0, 2.0, 0.6).camera(k);
    let a = baked.oracle_render(&cam, WHITE);
    let b = baked.oracle_render(&cam, WHITE);
    assert_eq!(a.to_rgb8(), b.to_rgb8());
    assert_eq!(a, b);
}

#[test]
fn hemisphere_elevations_are_area_uniform() {
    let (lo, hi) = (10f64.to_radians(), 70f64.to_radians());
    let space = ViewSpace::hemisphere(Vec3::zeros(), 3.0, 4.0);
    let states = space.sample_goal_candidates(1000, 17);
    assert_eq!(states.len(), 1000);
    // Equal-area bins are equal-width bins in sin(elevation).
    let bins = 10;
    let mut counts = vec![0usize; bins];
    for s in &states {
        assert!(space.contains(s));
        let AgentState::Spherical { elevation, .. } = s else { panic!("hemisphere gave {s:?}") };
        let u = (elevation.sin() - lo.sin()) / (hi.sin() - lo.sin());
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = 1000.0 / bins as f64;
    let chi2: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-squared with 9 degrees of freedom.
    assert!(chi2 < 27.88, "chi2 {chi2:.2}, counts {counts:?}");
}

#[test]
fn single_candidate_is_deterministic() {
    let space = ViewSpace::Box {
        min: Vec3::new(-2.0, -2.0, 0.5),
        max: Vec3::new(2.0, 2.0, 2.0),
        target: Vec3::zeros(),
    };
    let a = space.sample_goal_candidates(1, 5);
    assert_eq!(a, space.sample_goal_candidates(1, 5));
    assert!(space.contains(&a[0]));
}

#[test]
fn free_discrete_mode_offers_every_unvisited_viewpoint() {
    let vps: Vec<AgentState> = (0..6).map(|i| spherical(3.0 + i as f64 * 0.1, i as f64, 0.3)).collect();
    let mut visited = vec![false; 6];
    visited[2] = true;
    visited[4] = true;
    let moves = legal_moves(MotionMode::DiscreteFree, &vps[2], &vps, &visited).unwrap();
    assert_eq!(moves, vec![0, 1, 3, 5]);
    let moves = legal_moves(MotionMode::Continuous, &vps[2], &vps, &visited).unwrap();
    assert_eq!(moves, (0..6).collect::<Vec<_>>());
    // Fewer than three left in local mode.
    let visited = vec![true, true, true, true, false, true];
    let moves = legal_moves(MotionMode::DiscreteLocal, &vps[0], &vps, &visited).unwrap();
    assert_eq!(moves, vec![4]);
    assert!(legal_moves(MotionMode::DiscreteFree, &vps[0], &[], &[]).is_err());
}

#[test]
fn unit_sphere_surface_points_lie_on_the_sphere() {
    let scene = AnalyticScene::from_toml(
        r#"
version = 1
bounds = { min = [-1.5, -1.5, -1.5], max = [1.5, 1.5, 1.5] }

[[primitive]]
type = "sphere"
center = [0, 0, 0]
size = [1.0]
density = 50
rgb = [0.5, 0.5, 0.5]
"#,
    )
    .unwrap();
    let bounds = scene.grid_bounds(32).unwrap();
    let voxel = bounds.min_voxel_size();
    let pts = scene.surface_points(10_000, bounds.voxel_diagonal(), 3).unwrap();
    assert_eq!(pts.len(), 10_000);
    assert!(pts.iter().all(|p| (p.norm() - 1.0).abs() <= voxel));
    assert_eq!(pts, scene.surface_points(10_000, bounds.voxel_diagonal(), 3).unwrap());
}

#[test]
fn two_blob_surface_points_cover_both_blobs() {
    let scene = AnalyticScene::from_toml(include_str!("../../../scenes/two_blob.toml")).unwrap();
    let pts = scene.surface_points(4000, scene.grid_bounds(64).unwrap().voxel_diagonal(), 9).unwrap();
    let left = pts.iter().filter(|p| p.x < 0.0).count();
    let right = pts.len() - left;
    // Equal radii: each blob should hold roughly half.
    assert!(left > 1600 && right > 1600, "left {left}, right {right}");
}

#[test]
fn empty_scene_has_no_surface() {
    let scene = AnalyticScene::new(Vec3::repeat(-1.0), Vec3::repeat(1.0), Vec::new()).unwrap();
    assert!(scene.surface_points(10, 0.1, 0).is_err());
    // Too faint to count as a surface.
    let faint = sphere_scene(0.5, 1e-3);
    assert!(faint.surface_points(10, 0.05, 0).is_err());
}
