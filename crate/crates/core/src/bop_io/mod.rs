//! BOP dataset layout: writer and validator.
//!
//! ```text
//! {root}/models_info.json
//! {root}/{scene:06}/scene_camera.json
//! {root}/{scene:06}/scene_gt.json
//! {root}/{scene:06}/scene_gt_info.json
//! {root}/{scene:06}/rgb/{frame:06}.png
//! {root}/{scene:06}/depth/{frame:06}.png
//! {root}/{scene:06}/mask/{frame:06}_{gt:06}.png
//! {root}/{scene:06}/mask_visib/{frame:06}_{gt:06}.png
//! ```
//!
//! Translations are in millimetres, rotations are row-major 3x3, depth
//! pixels times `depth_scale` give millimetres. JSON is written with sorted
//! keys and shortest round-trip floats, so identical inputs give identical
//! bytes. `scene_gt_info.json` carries one extension key, `bbox_3d_proj`,
//! with the projected corners of the model box.

mod png_io;
mod validate;

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

pub use png_io::{read_gray16, read_gray8, read_rgb8, write_gray16, write_gray8, write_rgb8};
pub use validate::{validate_dataset, CheckResult, ValidationReport};

use crate::compose::RigidTransform;
use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::scene_gen::RenderedFrame;

/// Depth unit of the written depth images: 0.1 mm per count.
pub const DEFAULT_DEPTH_SCALE: f64 = 0.1;

/// Row-major rotation and millimetre translation of `t`.
pub fn bop_pose(t: &RigidTransform) -> ([f64; 9], [f64; 3]) {
    let r = t.rotation_matrix();
    let rot = [
        r[(0, 0)], r[(0, 1)], r[(0, 2)],
        r[(1, 0)], r[(1, 1)], r[(1, 2)],
        r[(2, 0)], r[(2, 1)], r[(2, 2)],
    ];
    (rot, (t.translation * 1000.0).into())
}

/// Quantizes metric depth to 16-bit counts of `depth_scale` millimetres.
pub fn encode_depth(depth_m: &[f64], depth_scale: f64) -> Result<Vec<u16>> {
    if !(depth_scale > 0.0) {
        return Err(Error::Parameter(format!("depth_scale must be positive, got {depth_scale}")));
    }
    depth_m
        .iter()
        .map(|&d| {
            let v = (d * 1000.0 / depth_scale).round();
            if !(0.0..=u16::MAX as f64).contains(&v) {
                return Err(Error::DepthRange { depth_m: d, depth_scale });
            }
            Ok(v as u16)
        })
        .collect()
}

pub fn decode_depth(counts: &[u16], depth_scale: f64) -> Vec<f64> {
    counts.iter().map(|&c| c as f64 * depth_scale / 1000.0).collect()
}

pub(crate) fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("JSON values serialize");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn scene_dir(root: &Path, scene_id: u32) -> PathBuf {
    root.join(format!("{scene_id:06}"))
}

/// Writes one scene directory. Frames must all belong to `scene_id`.
pub fn write_scene(root: &Path, scene_id: u32, frames: &[RenderedFrame], depth_scale: f64) -> Result<PathBuf> {
    let dir = scene_dir(root, scene_id);
    for sub in ["rgb", "depth", "mask", "mask_visib"] {
        create_dir(&dir.join(sub))?;
    }
    let mut cameras = Map::new();
    let mut gts = Map::new();
    let mut infos = Map::new();
    for frame in frames {
        let ann = &frame.annotation;
        if ann.scene_id != scene_id || frame.masks.len() != ann.objects.len() {
            return Err(Error::Precondition(format!(
                "frame {} of scene {} does not match scene {scene_id} or its masks",
                ann.frame_id, ann.scene_id
            )));
        }
        let (w, h) = (ann.camera.width(), ann.camera.height());
        let f = ann.frame_id;
        let key = f.to_string();

        let (cam_r, cam_t) = bop_pose(&ann.camera.world_to_camera);
        cameras.insert(
            key.clone(),
            json!({
                "cam_K": ann.camera.intrinsics.k_matrix(),
                "depth_scale": depth_scale,
                "cam_R_w2c": cam_r,
                "cam_t_w2c": cam_t,
            }),
        );

        let depth = encode_depth(&frame.depth, depth_scale)?;
        write_rgb8(&dir.join(format!("rgb/{f:06}.png")), w, h, &frame.rgb8)?;
        write_gray16(&dir.join(format!("depth/{f:06}.png")), w, h, &depth)?;

        let mut gt = Vec::new();
        let mut info = Vec::new();
        for (i, (obj, masks)) in ann.objects.iter().zip(&frame.masks).enumerate() {
            let (r, t) = bop_pose(&obj.model_to_camera);
            gt.push(json!({ "cam_R_m2c": r, "cam_t_m2c": t, "obj_id": obj.obj_id }));
            let valid = masks.mask.data.iter().zip(&depth).filter(|(&m, &d)| m && d > 0).count();
            info.push(json!({
                "bbox_obj": obj.bbox_obj,
                "bbox_visib": obj.bbox_visib,
                "px_count_all": obj.px_count_all,
                "px_count_valid": valid,
                "px_count_visib": obj.px_count_visib,
                "visib_fract": obj.visib_fract,
                "bbox_3d_proj": obj.bbox_3d_proj,
            }));
            let to_u8 = |m: &crate::raster::Mask| m.data.iter().map(|&b| if b { 255 } else { 0 }).collect::<Vec<u8>>();
            write_gray8(&dir.join(format!("mask/{f:06}_{i:06}.png")), w, h, &to_u8(&masks.mask))?;
            write_gray8(&dir.join(format!("mask_visib/{f:06}_{i:06}.png")), w, h, &to_u8(&masks.mask_visib))?;
        }
        gts.insert(key.clone(), Value::Array(gt));
        infos.insert(key, Value::Array(info));
    }
    write_json(&dir.join("scene_camera.json"), &Value::Object(cameras))?;
    write_json(&dir.join("scene_gt.json"), &Value::Object(gts))?;
    write_json(&dir.join("scene_gt_info.json"), &Value::Object(infos))?;
    Ok(dir)
}

/// Largest distance between two vertices.
pub fn mesh_diameter(mesh: &TriangleMesh) -> f64 {
    let v = &mesh.vertices;
    let mut best = 0.0f64;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            best = best.max((v[i] - v[j]).norm_squared());
        }
    }
    best.sqrt()
}

/// Writes `{root}/models_info.json`: diameter and AABB of each model in
/// millimetres.
pub fn write_models_info(root: &Path, models: &[(u32, &TriangleMesh)]) -> Result<()> {
    create_dir(root)?;
    let mut out = Map::new();
    for (id, mesh) in models {
        let (lo, hi) = mesh
            .bounds()
            .ok_or_else(|| Error::InvalidAsset(format!("model {id} has no vertices")))?;
        let size = hi - lo;
        out.insert(
            id.to_string(),
            json!({
                "diameter": mesh_diameter(mesh) * 1000.0,
                "min_x": lo.x * 1000.0,
                "min_y": lo.y * 1000.0,
                "min_z": lo.z * 1000.0,
                "size_x": size.x * 1000.0,
                "size_y": size.y * 1000.0,
                "size_z": size.z * 1000.0,
            }),
        );
    }
    write_json(&root.join("models_info.json"), &Value::Object(out))
}
