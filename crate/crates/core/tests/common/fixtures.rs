use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use std::collections::BTreeMap;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;
use splatgen::compose::RigidTransform;
use splatgen::geometry::{icosphere, TriangleMesh};
use splatgen::physics::{spawn_drop, BodyDesc, ConvexHull, DropRegion, PhysicsParams, StaticEnvironment, World};
use splatgen::raster::{render, render_silhouette, CameraView, Intrinsics, RenderOptions};
use splatgen::scene_gen::{annotate_frame, FrameAnnotation, InstanceInfo};
use splatgen::splat_model::{dc_from_rgb, generate_test_asset, save_splat_ply, AssetKind, AssetParams};
use splatgen::{merge_clouds, translate_cloud, Gaussian, GaussianCloud};

/// Size knobs of the synthetic table-top dataset.
#[derive(Debug, Clone, Copy)]
pub struct Desk {
    pub width: u32,
    pub height: u32,
    pub env_splats: usize,
    pub object_splats: usize,
    pub object_types: usize,
    pub scenes: u32,
    pub views: u32,
    pub seed: u64,
}

impl Desk {
    pub fn small() -> Self {
        Desk {
            width: 160,
            height: 120,
            env_splats: 3000,
            object_splats: 600,
            object_types: 2,
            scenes: 2,
            views: 3,
            seed: 17,
        }
    }
}

/// Writes splat assets and a manifest into `dir`; returns the manifest
/// path. The environment is a 0.8 m square table top at z = 0; objects
/// are a sphere and two boxes, and their meshes are reconstructed from
/// the splats at load time.
pub fn write_desk(dir: &Path, d: &Desk) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let env = generate_test_asset(
        AssetKind::Plane,
        &AssetParams::new([0.8, 0.8, 0.0], d.env_splats, [0.55, 0.5, 0.45]),
        d.seed,
    )
    .unwrap();
    save_splat_ply(&env, dir.join("table.ply")).unwrap();
    let kinds = [
        ("sphere", AssetKind::Sphere, [0.035, 0.0, 0.0], [0.85, 0.2, 0.15]),
        ("block", AssetKind::Box, [0.07, 0.05, 0.04], [0.15, 0.7, 0.25]),
        ("tower", AssetKind::Box, [0.04, 0.04, 0.08], [0.2, 0.3, 0.85]),
    ];
    let mut objects = Vec::new();
    for (i, (name, kind, extent, color)) in kinds.iter().take(d.object_types).enumerate() {
        let cloud =
            generate_test_asset(*kind, &AssetParams::new(*extent, d.object_splats, *color), d.seed + 1 + i as u64)
                .unwrap();
        let file = format!("{name}.ply");
        save_splat_ply(&cloud, dir.join(&file)).unwrap();
        objects.push(json!({
            "asset": { "splat": file },
            "object_id": i + 1,
            "count": { "min": 1, "max": 2 },
        }));
    }
    let f = 0.9 * d.width as f64;
    let manifest = json!({
        "seed": d.seed,
        "scenes": d.scenes,
        "views_per_scene": d.views,
        "environment": { "splat": "table.ply" },
        "objects": objects,
        "camera": {
            "intrinsics": {
                "fx": f, "fy": f,
                "cx": d.width as f64 / 2.0, "cy": d.height as f64 / 2.0,
                "width": d.width, "height": d.height,
            },
            "poses": { "hemisphere": { "radius": 0.55, "elevation_deg": [40.0, 75.0], "count": 24 } },
        },
        "drop_region": { "x": [-0.12, 0.12], "y": [-0.12, 0.12] },
    });
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    path
}

/// Every file under `root` with its bytes, sorted by relative path.
pub fn tree_bytes(root: &Path, skip: &[&str]) -> Vec<(String, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, skip: &[&str], out: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
            if skip.contains(&rel.as_str()) {
                continue;
            }
            if p.is_dir() {
                walk(base, &p, skip, out);
            } else {
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, skip, &mut out);
    out.sort();
    out
}

pub fn random_rotation<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    let mut q = || -> f64 { StandardNormal.sample(rng) };
    UnitQuaternion::from_quaternion(Quaternion::new(q(), q(), q(), q()))
}

pub fn random_transform<R: Rng>(rng: &mut R) -> RigidTransform {
    let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    RigidTransform::new(random_rotation(rng), t)
}

/// Anisotropic splats with full degree-3 colour in a 1.2 m cube about the
/// origin, seen from a random direction 2.5 m away.
pub fn random_scene<R: Rng>(rng: &mut R, n: usize, size: usize) -> (GaussianCloud, CameraView) {
    let splats = (0..n)
        .map(|_| {
            let mean = Vector3::from_fn(|_, _| rng.random_range(-0.6..0.6));
            let mut g = Gaussian::isotropic(mean, 0.01, rng.random_range(0.05..1.0), [0.0; 3]);
            g.scale = Vector3::from_fn(|_, _| 10f64.powf(rng.random_range(-2.4..-1.4)));
            g.orientation = random_rotation(rng);
            g.sh = dc_from_rgb([rng.random(), rng.random(), rng.random()]);
            for row in &mut g.sh {
                for c in row.iter_mut().skip(1) {
                    *c = 0.15 * Distribution::<f64>::sample(&StandardNormal, rng);
                }
            }
            g
        })
        .collect();
    let cloud = GaussianCloud::new(splats, 1);
    let dir = random_rotation(rng) * Vector3::z();
    let up = if dir.z.abs() > 0.9 { Vector3::x() } else { Vector3::z() };
    let f = size as f64;
    let k = Intrinsics { fx: f, fy: f, cx: f / 2.0 - 0.5, cy: f / 2.0 - 0.5, width: size as u32, height: size as u32 };
    (cloud, CameraView::look_at(k, dir * 2.5, Vector3::zeros(), up))
}

/// A flat square of splats facing the camera of [`front_camera`].
pub fn square(side: f64, n: usize, z: f64, x: f64, color: [f64; 3]) -> GaussianCloud {
    let c = generate_test_asset(AssetKind::Plane, &AssetParams::new([side, side, 0.0], n, color), 5).unwrap();
    translate_cloud(&c, &Vector3::new(x, 0.0, z))
}

/// 256 x 256 pinhole camera at the origin looking along +z.
pub fn front_camera() -> CameraView {
    let k = Intrinsics { fx: 800.0, fy: 800.0, cx: 128.0, cy: 128.0, width: 256, height: 256 };
    CameraView::new(k, RigidTransform::identity())
}

/// Renders `target` (instance 1) and `occluder` (instance 2) together and
/// annotates the frame.
pub fn annotate_two(target: GaussianCloud, occluder: GaussianCloud) -> FrameAnnotation {
    let view = front_camera();
    let scene = merge_clouds(&[(target.clone(), 1), (occluder.clone(), 2)]).unwrap();
    let out = render(&scene, &view, &RenderOptions::default()).unwrap();
    let mut sil = BTreeMap::new();
    sil.insert(1, render_silhouette(&target.with_object_id(1), &view).unwrap());
    sil.insert(2, render_silhouette(&occluder.with_object_id(2), &view).unwrap());
    let info = |id| InstanceInfo {
        instance_id: id,
        obj_id: id,
        object_to_world: RigidTransform::identity(),
        model_bounds: (Vector3::repeat(-0.05), Vector3::repeat(0.05)),
    };
    annotate_frame(&out, &sil, &[info(1), info(2)], &view, 0, 0).0
}

/// Target: 0.1 m square at 1 m. Occluder: 0.2 m square at 0.8 m whose
/// left edge projects onto the target's vertical centre line.
pub fn half_occlusion() -> FrameAnnotation {
    annotate_two(square(0.1, 10000, 1.0, 0.0, [1.0, 0.0, 0.0]), square(0.2, 24000, 0.8, 0.1, [0.0, 0.0, 1.0]))
}

/// Square floor of half-width `half` at z = 0.
pub fn floor(half: f64) -> StaticEnvironment {
    let v = vec![
        Vector3::new(-half, -half, 0.0),
        Vector3::new(half, -half, 0.0),
        Vector3::new(half, half, 0.0),
        Vector3::new(-half, half, 0.0),
    ];
    StaticEnvironment::from_mesh(&TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]])).unwrap()
}

pub fn cuboid(h: Vector3<f64>) -> Arc<ConvexHull> {
    let pts: Vec<Vector3<f64>> = (0..8)
        .map(|i| {
            Vector3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            )
        })
        .collect();
    Arc::new(ConvexHull::from_points(&pts).unwrap())
}

pub fn ball(sub: usize, r: f64) -> Arc<ConvexHull> {
    Arc::new(ConvexHull::from_mesh(&icosphere(sub, r)).unwrap())
}

pub fn world_vertices(w: &World, i: usize) -> Vec<Vector3<f64>> {
    let b = &w.bodies[i];
    b.shape
        .vertices
        .iter()
        .map(|v| b.state.orientation * v + b.state.position)
        .collect()
}

pub fn ten_objects() -> Vec<BodyDesc> {
    let shapes = [
        cuboid(Vector3::new(0.03, 0.03, 0.03)),
        cuboid(Vector3::new(0.05, 0.03, 0.02)),
        cuboid(Vector3::new(0.04, 0.015, 0.015)),
        ball(1, 0.03),
        cuboid(Vector3::new(0.025, 0.025, 0.05)),
    ];
    (0..10)
        .map(|i| BodyDesc {
            object_id: 1 + (i % 5) as u32,
            shape: shapes[i % 5].clone(),
            mass: 0.1,
        })
        .collect()
}

pub fn drop_world(seed: u64) -> World {
    let env = floor(1.0);
    let descs = ten_objects();
    let region = DropRegion { x: [-0.25, 0.25], y: [-0.25, 0.25] };
    let states = spawn_drop(&descs, &region, &env, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let mut w = World::new(env, PhysicsParams::default());
    for (d, s) in descs.iter().zip(states) {
        w.add_body(d, s).unwrap();
    }
    w
}
