use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::Serialize;

use crate::compose::RigidTransform;
use crate::raster::{visibility_masks, CameraView, Mask, RenderOutput};

/// What annotation needs to know about one placed object instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceInfo {
    /// Label of the instance's splats in the composed cloud.
    pub instance_id: u32,
    /// Model (object type) id written to the dataset.
    pub obj_id: u32,
    pub object_to_world: RigidTransform,
    /// Model-frame AABB of the geometric entity.
    pub model_bounds: (Vector3<f64>, Vector3<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectAnnotation {
    pub instance_id: u32,
    pub obj_id: u32,
    pub object_to_world: RigidTransform,
    pub model_to_camera: RigidTransform,
    /// Amodal box `[x, y, w, h]` in pixels.
    pub bbox_obj: [i64; 4],
    pub bbox_visib: [i64; 4],
    /// Model AABB corners projected to pixels.
    pub bbox_3d_proj: [[f64; 2]; 8],
    pub px_count_all: usize,
    pub px_count_visib: usize,
    pub visib_fract: f64,
}

/// Ground truth of one rendered view.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameAnnotation {
    pub scene_id: u32,
    pub frame_id: u32,
    pub camera: CameraView,
    pub objects: Vec<ObjectAnnotation>,
}

/// Amodal and visible masks of one annotated object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMasks {
    pub mask: Mask,
    pub mask_visib: Mask,
}

/// The eight corners of `[lo, hi]`, x fastest.
pub fn box_corners(lo: &Vector3<f64>, hi: &Vector3<f64>) -> [Vector3<f64>; 8] {
    std::array::from_fn(|i| {
        Vector3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        )
    })
}

/// Builds the annotation of one frame.
///
/// `silhouettes` holds the amodal mask of each instance rendered alone.
/// The visible mask is the set of pixels the instance wins in the composed
/// render, restricted to its amodal mask. Instances with no amodal or no
/// visible pixel are left out; the returned masks are parallel to
/// `objects`.
pub fn annotate_frame(
    output: &RenderOutput,
    silhouettes: &BTreeMap<u32, Mask>,
    instances: &[InstanceInfo],
    view: &CameraView,
    scene_id: u32,
    frame_id: u32,
) -> (FrameAnnotation, Vec<ObjectMasks>) {
    let visible = visibility_masks(output);
    let mut objects = Vec::new();
    let mut masks = Vec::new();
    for inst in instances {
        let Some(mask) = silhouettes.get(&inst.instance_id) else { continue };
        let mut mask_visib = visible
            .get(&inst.instance_id)
            .cloned()
            .unwrap_or_else(|| Mask::empty(output.width, output.height));
        for (v, &m) in mask_visib.data.iter_mut().zip(&mask.data) {
            *v &= m;
        }
        let (Some(bbox_obj), Some(bbox_visib)) = (mask.bbox(), mask_visib.bbox()) else {
            continue;
        };
        let px_count_all = mask.count();
        let px_count_visib = mask_visib.count();
        let model_to_camera = view.world_to_camera.compose(&inst.object_to_world);
        let (lo, hi) = inst.model_bounds;
        let bbox_3d_proj = box_corners(&lo, &hi).map(|c| {
            let p = view.project_camera_point(&model_to_camera.apply(&c));
            [p.x, p.y]
        });
        objects.push(ObjectAnnotation {
            instance_id: inst.instance_id,
            obj_id: inst.obj_id,
            object_to_world: inst.object_to_world,
            model_to_camera,
            bbox_obj,
            bbox_visib,
            bbox_3d_proj,
            px_count_all,
            px_count_visib,
            visib_fract: px_count_visib as f64 / px_count_all as f64,
        });
        masks.push(ObjectMasks {
            mask: mask.clone(),
            mask_visib,
        });
    }
    let annotation = FrameAnnotation {
        scene_id,
        frame_id,
        camera: *view,
        objects,
    };
    (annotation, masks)
}
