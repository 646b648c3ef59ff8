use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::png_io::read_gray8;

/// Outcome of one named check over the whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub passed: bool,
    /// One line per violation, naming the scene, frame or file.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub root: String,
    pub scenes: usize,
    pub frames: usize,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check == name)
    }
}

const CHECKS: [&str; 8] = [
    "scenes_present",
    "layout",
    "json_schema",
    "mask_count",
    "px_counts",
    "visib_fract",
    "rotation_orthonormal",
    "mask_subset",
];

#[derive(Deserialize)]
struct CameraEntry {
    #[serde(rename = "cam_K")]
    cam_k: Vec<f64>,
    depth_scale: f64,
}

#[derive(Deserialize)]
struct GtEntry {
    #[serde(rename = "cam_R_m2c")]
    cam_r: Vec<f64>,
    #[serde(rename = "cam_t_m2c")]
    cam_t: Vec<f64>,
    #[allow(dead_code)]
    obj_id: u32,
}

#[derive(Deserialize)]
struct GtInfoEntry {
    #[allow(dead_code)]
    bbox_obj: [i64; 4],
    #[allow(dead_code)]
    bbox_visib: [i64; 4],
    px_count_all: usize,
    px_count_visib: usize,
    visib_fract: f64,
}

type PerFrame<T> = BTreeMap<String, T>;

#[derive(Default)]
struct Findings(BTreeMap<&'static str, Vec<String>>);

impl Findings {
    fn fail(&mut self, check: &'static str, msg: String) {
        self.0.entry(check).or_default().push(msg);
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, found: &mut Findings) -> Option<T> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(_) => {
            found.fail("layout", format!("missing {}", path.display()));
            return None;
        }
    };
    match serde_json::from_slice(&bytes) {
        Ok(v) => Some(v),
        Err(e) => {
            found.fail("json_schema", format!("{}: {e}", path.display()));
            None
        }
    }
}

fn mask_pixels(path: &Path, found: &mut Findings) -> Option<Vec<bool>> {
    match read_gray8(path) {
        Ok((_, _, data)) => Some(data.into_iter().map(|v| v > 0).collect()),
        Err(e) => {
            found.fail("layout", e.to_string());
            None
        }
    }
}

fn check_frame(dir: &Path, name: &str, frame: &str, gt: &[GtEntry], info: Option<&Vec<GtInfoEntry>>, found: &mut Findings) {
    let Ok(f) = frame.parse::<u32>() else {
        found.fail("json_schema", format!("{name}: frame key {frame:?} is not an integer"));
        return;
    };
    let image_exists = |sub: &str| ["png", "jpg", "tif"].iter().any(|ext| dir.join(format!("{sub}/{f:06}.{ext}")).is_file());
    for sub in ["rgb", "depth"] {
        if !image_exists(sub) {
            found.fail("layout", format!("missing {}", dir.join(format!("{sub}/{f:06}.png")).display()));
        }
    }
    for (i, e) in gt.iter().enumerate() {
        if e.cam_r.len() != 9 || e.cam_t.len() != 3 {
            found.fail("json_schema", format!("{name} frame {f} gt {i}: cam_R_m2c needs 9 values and cam_t_m2c 3"));
            continue;
        }
        let r = Matrix3::from_row_slice(&e.cam_r);
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(err <= 1e-6) || !(r.determinant() > 0.0) {
            found.fail("rotation_orthonormal", format!("{name} frame {f} gt {i}: |R^T R - I| = {err:e}"));
        }
    }
    let prefix = format!("{f:06}_");
    for sub in ["mask", "mask_visib"] {
        let n = fs::read_dir(dir.join(sub))
            .map(|rd| rd.filter_map(|e| e.ok()).filter(|e| e.file_name().to_string_lossy().starts_with(&prefix)).count())
            .unwrap_or(0);
        if n != gt.len() {
            found.fail("mask_count", format!("{name} frame {f}: {n} {sub} files for {} gt entries", gt.len()));
        }
    }
    let Some(info) = info else {
        found.fail("layout", format!("{name}: frame {f} missing from scene_gt_info.json"));
        return;
    };
    if info.len() != gt.len() {
        found.fail("json_schema", format!("{name} frame {f}: {} gt_info entries for {} gt entries", info.len(), gt.len()));
    }
    for (i, e) in info.iter().enumerate().take(gt.len()) {
        let expected = if e.px_count_all > 0 { e.px_count_visib as f64 / e.px_count_all as f64 } else { 0.0 };
        if (e.visib_fract - expected).abs() > 1e-9 || !(0.0..=1.0).contains(&e.visib_fract) {
            found.fail("visib_fract", format!("{name} frame {f} gt {i}: visib_fract {} but counts give {expected}", e.visib_fract));
        }
        let mask_path = dir.join(format!("mask/{f:06}_{i:06}.png"));
        let visib_path = dir.join(format!("mask_visib/{f:06}_{i:06}.png"));
        let (Some(mask), Some(visib)) = (mask_pixels(&mask_path, found), mask_pixels(&visib_path, found)) else {
            continue;
        };
        let all = mask.iter().filter(|&&b| b).count();
        let vis = visib.iter().filter(|&&b| b).count();
        if all != e.px_count_all || vis != e.px_count_visib {
            found.fail(
                "px_counts",
                format!(
                    "{name} frame {f} gt {i}: masks have {all}/{vis} pixels, gt_info says {}/{}",
                    e.px_count_all, e.px_count_visib
                ),
            );
        }
        if mask.len() != visib.len() || visib.iter().zip(&mask).any(|(&v, &m)| v && !m) {
            found.fail("mask_subset", format!("{name} frame {f} gt {i}: mask_visib is not inside mask"));
        }
    }
}

fn check_scene(dir: &Path, name: &str, found: &mut Findings) -> usize {
    let cams: Option<PerFrame<CameraEntry>> = read_json(&dir.join("scene_camera.json"), found);
    let gts: Option<PerFrame<Vec<GtEntry>>> = read_json(&dir.join("scene_gt.json"), found);
    let infos: Option<PerFrame<Vec<GtInfoEntry>>> = read_json(&dir.join("scene_gt_info.json"), found);
    if let Some(cams) = &cams {
        for (frame, c) in cams {
            if c.cam_k.len() != 9 || !(c.depth_scale > 0.0) {
                found.fail("json_schema", format!("{name} frame {frame}: cam_K needs 9 values and depth_scale > 0"));
            }
        }
    }
    let Some(gts) = gts else { return 0 };
    for (frame, gt) in &gts {
        if cams.as_ref().is_some_and(|c| !c.contains_key(frame)) {
            found.fail("layout", format!("{name}: frame {frame} missing from scene_camera.json"));
        }
        if let Some(infos) = &infos {
            check_frame(dir, name, frame, gt, infos.get(frame), found);
        }
    }
    gts.len()
}

/// Checks a BOP dataset root: layout completeness, JSON schema, mask and
/// pixel-count agreement, `visib_fract` arithmetic, rotation
/// orthonormality and `mask_visib ⊆ mask`. Problems become report entries;
/// this never fails.
pub fn validate_dataset(root: &Path) -> ValidationReport {
    let mut found = Findings::default();
    let mut scenes: Vec<(String, std::path::PathBuf)> = fs::read_dir(root)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .filter(|e| e.path().is_dir())
                .filter_map(|e| {
                    let name = e.file_name().to_string_lossy().into_owned();
                    (name.len() == 6 && name.bytes().all(|b| b.is_ascii_digit())).then(|| (name, e.path()))
                })
                .collect()
        })
        .unwrap_or_default();
    scenes.sort();
    if scenes.is_empty() {
        found.fail("scenes_present", format!("no scenes found under {}", root.display()));
    }
    let mut frames = 0;
    for (name, dir) in &scenes {
        frames += check_scene(dir, name, &mut found);
    }
    let checks: Vec<CheckResult> = CHECKS
        .iter()
        .map(|&check| {
            let failures = found.0.remove(check).unwrap_or_default();
            CheckResult {
                check: check.to_string(),
                passed: failures.is_empty(),
                failures,
            }
        })
        .collect();
    ValidationReport {
        root: root.display().to_string(),
        scenes: scenes.len(),
        frames,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
