//! Dataset generation: scene building, camera paths, rendering and
//! annotation.
//!
//! A scene is a pure function of the manifest and its index. The per-scene
//! random stream is ChaCha8 seeded with the manifest seed, with the scene
//! index as the stream number, so scenes can be generated in any order, on
//! any number of workers, or alone, with identical results.

mod annotate;
mod trajectory;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use annotate::{annotate_frame, box_corners, FrameAnnotation, InstanceInfo, ObjectAnnotation, ObjectMasks};
pub use trajectory::{hemisphere_poses, sample_trajectory, slerp};

use crate::bop_io::{self, DEFAULT_DEPTH_SCALE};
use crate::compose::{merge_clouds, transform_cloud, RigidTransform};
use crate::error::{Error, Result};
use crate::geometry::{mesh_from_cloud, read_mesh, MeshParams, TriangleMesh};
use crate::physics::{
    simulate_until_settled, spawn_drop, BodyDesc, BodyTrajectory, ConvexHull, DropRegion, PhysicsParams,
    StaticEnvironment, World,
};
use crate::raster::{render, render_silhouette, CameraView, Intrinsics, RenderOptions};
use crate::splat_model::{load_splat_ply, GaussianCloud, ENVIRONMENT_ID};

/// A splat asset and, optionally, its geometric entity. Without a mesh
/// one is reconstructed from the splats with the manifest's mesh settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetRef {
    pub splat: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRange {
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub asset: AssetRef,
    /// Model id in the dataset, at least 1.
    pub object_id: u32,
    /// Instances per scene, drawn uniformly from `[min, max]`.
    pub count: CountRange,
    /// Kilograms.
    #[serde(default = "default_mass")]
    pub mass: f64,
}

fn default_mass() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HemisphereSpec {
    pub radius: f64,
    pub elevation_deg: [f64; 2],
    pub count: usize,
    /// Look-at point; defaults to the centre of the drop region at the
    /// height of the environment surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 3]>,
}

/// Where candidate camera poses come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PoseSource {
    /// JSON array of world-to-camera transforms `{"q": [w,x,y,z], "t": [x,y,z]}`.
    File(PathBuf),
    Hemisphere(HemisphereSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub intrinsics: Intrinsics,
    pub poses: PoseSource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RenderMode {
    /// Every frame shows the settled scene.
    #[default]
    Static,
    /// Frame `j` shows the objects at physics step `j * frame_stride`.
    Dynamic { frame_stride: usize },
}

/// Everything that defines a dataset. Relative paths are resolved against
/// the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub seed: u64,
    pub scenes: u32,
    pub views_per_scene: u32,
    pub environment: AssetRef,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    pub camera: CameraSpec,
    #[serde(default)]
    pub mode: RenderMode,
    /// Key poses per camera path.
    #[serde(default = "default_k_keys")]
    pub k_keys: usize,
    /// Defaults to the middle half of the environment's xy extent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_region: Option<DropRegion>,
    #[serde(default)]
    pub physics: PhysicsParams,
    #[serde(default)]
    pub mesh: MeshParams,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_k_keys() -> usize {
    4
}

fn default_depth_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

impl SceneManifest {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: SceneManifest =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        m.base_dir = base_dir.into();
        m.check()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.scenes == 0 || self.views_per_scene == 0 {
            return bad("scenes and views_per_scene must be at least 1".into());
        }
        if self.k_keys < 2 {
            return bad(format!("k_keys must be at least 2, got {}", self.k_keys));
        }
        if !(self.depth_scale > 0.0) {
            return bad(format!("depth_scale must be positive, got {}", self.depth_scale));
        }
        if let RenderMode::Dynamic { frame_stride: 0 } = self.mode {
            return bad("dynamic frame_stride must be at least 1".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for o in &self.objects {
            if o.object_id == ENVIRONMENT_ID || !ids.insert(o.object_id) {
                return bad(format!("object_id {} is reserved or repeated", o.object_id));
            }
            if o.count.min == 0 || o.count.min > o.count.max {
                return bad(format!("object {}: count needs 1 <= min <= max", o.object_id));
            }
            if !(o.mass > 0.0) {
                return bad(format!("object {}: mass must be positive", o.object_id));
            }
        }
        self.camera.intrinsics.check().map_err(|e| Error::Config(e.to_string()))
    }
}

/// A loaded object model.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub obj_id: u32,
    pub cloud: GaussianCloud,
    pub mesh: TriangleMesh,
    pub hull: Arc<ConvexHull>,
    pub mass: f64,
    pub count: CountRange,
}

impl ObjectModel {
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        self.mesh.bounds().expect("validated mesh has vertices")
    }
}

/// Assets and derived data shared by every scene of a manifest.
#[derive(Debug, Clone)]
pub struct SceneAssets {
    pub environment: GaussianCloud,
    pub environment_mesh: TriangleMesh,
    pub env: StaticEnvironment,
    pub objects: Vec<ObjectModel>,
    pub region: DropRegion,
    pub poses: Vec<RigidTransform>,
}

fn load_asset(m: &SceneManifest, a: &AssetRef, what: &str) -> Result<(GaussianCloud, TriangleMesh)> {
    let cloud = load_splat_ply(m.resolve(&a.splat))?;
    let mesh = match &a.mesh {
        Some(p) => read_mesh(&m.resolve(p))?,
        None => {
            info!("reconstructing mesh of {what} from {}", a.splat.display());
            mesh_from_cloud(&cloud, &m.mesh)?
        }
    };
    if mesh.triangles.is_empty() {
        return Err(Error::InvalidAsset(format!("{what} mesh has no triangles")));
    }
    Ok((cloud, mesh))
}

impl SceneAssets {
    pub fn load(m: &SceneManifest) -> Result<Self> {
        let (environment, environment_mesh) = load_asset(m, &m.environment, "environment")?;
        let environment = environment.with_object_id(ENVIRONMENT_ID);
        let env = StaticEnvironment::from_mesh(&environment_mesh)?;
        let objects = m
            .objects
            .iter()
            .map(|o| {
                let (cloud, mesh) = load_asset(m, &o.asset, &format!("object {}", o.object_id))?;
                let hull = Arc::new(ConvexHull::from_mesh(&mesh)?);
                Ok(ObjectModel {
                    obj_id: o.object_id,
                    cloud,
                    mesh,
                    hull,
                    mass: o.mass,
                    count: o.count,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let region = m.drop_region.unwrap_or_else(|| {
            let c = (env.lo + env.hi) * 0.5;
            let q = (env.hi - env.lo) * 0.25;
            DropRegion { x: [c.x - q.x, c.x + q.x], y: [c.y - q.y, c.y + q.y] }
        });
        let poses = match &m.camera.poses {
            PoseSource::File(p) => {
                let path = m.resolve(p);
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?
            }
            PoseSource::Hemisphere(h) => {
                let target = match h.target {
                    Some(t) => Vector3::from(t),
                    None => {
                        let z = env.max_height_in(&region).unwrap_or(env.hi.z);
                        Vector3::new((region.x[0] + region.x[1]) * 0.5, (region.y[0] + region.y[1]) * 0.5, z)
                    }
                };
                hemisphere_poses(target, h.radius, h.elevation_deg, h.count)?
            }
        };
        if poses.is_empty() {
            return Err(Error::Config("camera pose set is empty".into()));
        }
        Ok(SceneAssets { environment, environment_mesh, env, objects, region, poses })
    }
}

/// The random stream of scene `index`.
pub fn scene_rng(seed: u64, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// One placed object.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedInstance {
    /// Splat label in the composed cloud, starting at 1.
    pub instance_id: u32,
    pub obj_id: u32,
    /// Index into [`SceneAssets::objects`].
    pub model: usize,
    pub trajectory: BodyTrajectory,
}

impl PlacedInstance {
    pub fn settled_pose(&self) -> RigidTransform {
        self.trajectory.final_pose()
    }
}

#[derive(Debug, Clone)]
pub struct BuiltScene {
    pub scene_index: u32,
    pub instances: Vec<PlacedInstance>,
    /// Environment plus every instance at its settled pose.
    pub cloud: GaussianCloud,
    pub views: Vec<CameraView>,
    pub warnings: Vec<String>,
}

/// Drops the objects of scene `index`, simulates until they settle and
/// samples its camera path. Escaped bodies are left out with a warning.
pub fn build_scene(m: &SceneManifest, assets: &SceneAssets, index: u32) -> Result<BuiltScene> {
    build_scene_inner(m, assets, index).map_err(|e| Error::Scene { scene: index as usize, source: Box::new(e) })
}

fn build_scene_inner(m: &SceneManifest, assets: &SceneAssets, index: u32) -> Result<BuiltScene> {
    let mut rng = scene_rng(m.seed, index);
    let mut descs = Vec::new();
    let mut models = Vec::new();
    for (k, o) in assets.objects.iter().enumerate() {
        let n = rng.random_range(o.count.min..=o.count.max);
        for _ in 0..n {
            descs.push(BodyDesc { object_id: o.obj_id, shape: o.hull.clone(), mass: o.mass });
            models.push(k);
        }
    }
    let mut warnings = Vec::new();
    let mut instances = Vec::new();
    if !descs.is_empty() {
        let states = spawn_drop(&descs, &assets.region, &assets.env, &mut rng)?;
        let mut world = World::new(assets.env.clone(), m.physics.clone());
        for (d, s) in descs.iter().zip(states) {
            world.add_body(d, s)?;
        }
        for (i, tr) in simulate_until_settled(&mut world)?.into_iter().enumerate() {
            let instance_id = i as u32 + 1;
            if tr.escaped {
                warnings.push(format!("scene {index}: instance {instance_id} (object {}) escaped and was removed", tr.object_id));
                continue;
            }
            if !tr.settled {
                warnings.push(format!(
                    "scene {index}: instance {instance_id} (object {}) had not settled after {} s",
                    tr.object_id, m.physics.max_time
                ));
            }
            instances.push(PlacedInstance { instance_id, obj_id: tr.object_id, model: models[i], trajectory: tr });
        }
    }
    for w in &warnings {
        warn!("{w}");
    }

    let n = m.views_per_scene as usize;
    let k = m.k_keys.min(n).min(assets.poses.len());
    let views = if k >= 2 {
        sample_trajectory(&assets.poses, &m.camera.intrinsics, k, n, &mut rng)?
    } else {
        let pose = assets.poses[rng.random_range(0..assets.poses.len())];
        vec![CameraView::new(m.camera.intrinsics, pose); n]
    };

    let poses: Vec<RigidTransform> = instances.iter().map(PlacedInstance::settled_pose).collect();
    let cloud = compose_scene(assets, &instances, &poses)?;
    Ok(BuiltScene { scene_index: index, instances, cloud, views, warnings })
}

fn instance_cloud(assets: &SceneAssets, inst: &PlacedInstance, pose: &RigidTransform) -> GaussianCloud {
    transform_cloud(&assets.objects[inst.model].cloud, pose).with_object_id(inst.instance_id)
}

/// Environment plus each instance moved to the matching pose.
pub fn compose_scene(assets: &SceneAssets, instances: &[PlacedInstance], poses: &[RigidTransform]) -> Result<GaussianCloud> {
    let mut parts = vec![(assets.environment.clone(), ENVIRONMENT_ID)];
    for (inst, pose) in instances.iter().zip(poses) {
        parts.push((instance_cloud(assets, inst, pose), inst.instance_id));
    }
    merge_clouds(&parts)
}

/// Buffers and ground truth of one frame, ready for the BOP writer.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub annotation: FrameAnnotation,
    /// Interleaved 8-bit RGB.
    pub rgb8: Vec<u8>,
    /// Metres, 0 on background.
    pub depth: Vec<f64>,
    /// Parallel to `annotation.objects`.
    pub masks: Vec<ObjectMasks>,
}

impl BuiltScene {
    /// Object poses shown in frame `frame`.
    pub fn poses_at(&self, mode: RenderMode, frame: u32) -> Vec<RigidTransform> {
        self.instances
            .iter()
            .map(|inst| match mode {
                RenderMode::Static => inst.settled_pose(),
                RenderMode::Dynamic { frame_stride } => {
                    let s = &inst.trajectory.samples;
                    s[(frame as usize * frame_stride).min(s.len() - 1)].pose
                }
            })
            .collect()
    }

    /// Renders and annotates frame `frame`.
    pub fn render_frame(&self, assets: &SceneAssets, mode: RenderMode, frame: u32, opts: &RenderOptions) -> Result<RenderedFrame> {
        let view = self.views.get(frame as usize).ok_or_else(|| {
            Error::Config(format!("frame {frame} out of range (scene has {} views)", self.views.len()))
        })?;
        let poses = self.poses_at(mode, frame);
        let cloud = match mode {
            RenderMode::Static => self.cloud.clone(),
            RenderMode::Dynamic { .. } => compose_scene(assets, &self.instances, &poses)?,
        };
        let output = render(&cloud, view, opts)?;
        let mut silhouettes = std::collections::BTreeMap::new();
        let mut infos = Vec::new();
        for (inst, pose) in self.instances.iter().zip(&poses) {
            let alone = instance_cloud(assets, inst, pose);
            silhouettes.insert(inst.instance_id, render_silhouette(&alone, view)?);
            infos.push(InstanceInfo {
                instance_id: inst.instance_id,
                obj_id: inst.obj_id,
                object_to_world: *pose,
                model_bounds: assets.objects[inst.model].bounds(),
            });
        }
        let (annotation, masks) = annotate_frame(&output, &silhouettes, &infos, view, self.scene_index, frame);
        Ok(RenderedFrame { annotation, rgb8: output.rgb8(), depth: output.depth, masks })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneFailure {
    pub scene: u32,
    pub error: String,
}

/// Summary of a [`generate`] run. Only the timing fields vary between
/// identical runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationReport {
    pub scenes: u32,
    pub scenes_ok: u32,
    pub frames: usize,
    pub failures: Vec<SceneFailure>,
    pub warnings: Vec<String>,
    pub workers: usize,
    pub wall_time_s: f64,
    pub frames_per_s: f64,
}

pub const REPORT_FILE: &str = "generation_report.json";

/// Builds, renders and writes scene `index` into `root`.
pub fn generate_scene(m: &SceneManifest, assets: &SceneAssets, index: u32, root: &Path) -> Result<(usize, Vec<String>)> {
    let scene = build_scene(m, assets, index)?;
    let opts = RenderOptions::default();
    let frames = (0..m.views_per_scene)
        .map(|f| scene.render_frame(assets, m.mode, f, &opts))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Scene { scene: index as usize, source: Box::new(e) })?;
    bop_io::write_scene(root, index, &frames, m.depth_scale)
        .map_err(|e| Error::Scene { scene: index as usize, source: Box::new(e) })?;
    Ok((frames.len(), scene.warnings))
}

/// Generates every scene of `m` into `root` on `workers` threads (all
/// cores when `None`) and writes `models_info.json` and the report.
///
/// A failing scene is removed and reported; the others continue. Asset
/// and configuration problems fail the whole run.
pub fn generate(m: &SceneManifest, root: &Path, workers: Option<usize>) -> Result<GenerationReport> {
    let start = Instant::now();
    let assets = SceneAssets::load(m)?;
    let models: Vec<(u32, &TriangleMesh)> = assets.objects.iter().map(|o| (o.obj_id, &o.mesh)).collect();
    bop_io::write_models_info(root, &models)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let outcomes: Vec<(u32, Result<(usize, Vec<String>)>)> = pool.install(|| {
        (0..m.scenes)
            .into_par_iter()
            .map(|i| (i, generate_scene(m, &assets, i, root)))
            .collect()
    });
    let mut report = GenerationReport {
        scenes: m.scenes,
        scenes_ok: 0,
        frames: 0,
        failures: Vec::new(),
        warnings: Vec::new(),
        workers: threads,
        wall_time_s: 0.0,
        frames_per_s: 0.0,
    };
    for (i, outcome) in outcomes {
        match outcome {
            Ok((frames, warnings)) => {
                report.scenes_ok += 1;
                report.frames += frames;
                report.warnings.extend(warnings);
            }
            Err(e) => {
                warn!("{e}");
                let dir = bop_io::scene_dir(root, i);
                if dir.exists() {
                    fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                }
                report.failures.push(SceneFailure { scene: i, error: e.to_string() });
            }
        }
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.frames_per_s = report.frames as f64 / report.wall_time_s.max(1e-9);
    let value = serde_json::to_value(&report).expect("report serializes");
    bop_io::write_json(&root.join(REPORT_FILE), &value)?;
    Ok(report)
}
