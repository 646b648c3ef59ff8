//! `splatgen` command-line front end.
//!
//! Exit status: 0 on success, 1 when the pipeline or validation fails,
//! 2 for usage and configuration errors. `SPLATGEN_LOG` sets the log level.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::{json, Value};
use splatgen::bop_io::{self, validate_dataset};
use splatgen::geometry::{mesh_from_cloud, write_obj, write_stl, MeshParams};
use splatgen::physics::{write_trajectories_jsonl, ConvexHull};
use splatgen::raster::RenderOptions;
use splatgen::scene_gen::{build_scene, generate, SceneAssets, SceneManifest};
use splatgen::splat_model::{generate_test_asset, load_splat_ply, save_splat_ply, AssetKind, AssetParams};
use splatgen::Error;

const RUN_CONFIG: &str = "run_config.json";

#[derive(Parser)]
#[command(name = "splatgen", version, about = "Synthetic 6DoF pose datasets from Gaussian splats")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Sphere,
    Box,
    Plane,
}

#[derive(Subcommand)]
enum Command {
    /// Build the collision mesh and asset descriptor of a splat PLY.
    PrepAsset {
        #[arg(long)]
        splat: PathBuf,
        /// Alpha-shape radius in metres (default: 3x median spacing).
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 10)]
        smooth_iters: usize,
        #[arg(long, default_value_t = 500)]
        target_tris: usize,
        /// Mass written to the descriptor, kg.
        #[arg(long, default_value_t = 0.1)]
        mass: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a procedural splat asset with known geometry.
    MakeAsset {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Sphere: radius. Box: side lengths. Plane: width,height.
        #[arg(long, value_delimiter = ',', num_args = 1..=3)]
        extent: Vec<f64>,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long, value_delimiter = ',', num_args = 3, default_value = "0.7,0.7,0.7")]
        color: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// File name inside `--out`, without extension.
        #[arg(long, default_value = "asset")]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a BOP dataset from a scene manifest.
    Generate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Scene-level worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render one frame of one scene, with its annotation.
    Render {
        #[arg(long = "scene")]
        manifest: PathBuf,
        #[arg(long)]
        scene_index: u32,
        #[arg(long)]
        frame: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Dump the physics trajectories of one scene as JSON lines.
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scene_index: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a BOP dataset; exit 0 only if every check passes.
    Validate {
        #[arg(long)]
        root: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Command outcome: `Ok(false)` means the command ran but found failures.
type Outcome = Result<bool, Error>;

fn write_json(path: &Path, v: &Value) -> Result<(), Error> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("serializable");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|source| Error::Io { path: path.into(), source })
}

fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|source| Error::Io { path: path.into(), source })
}

/// Records what produced the contents of `out`.
fn echo_config(out: &Path, command: &str, config: Value) -> Result<(), Error> {
    let v = json!({
        "command": command,
        "config": config,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_json(&out.join(RUN_CONFIG), &v)
}

fn manifest_config(m: &SceneManifest, path: &Path) -> Value {
    json!({ "manifest_path": path, "base_dir": m.base_dir, "manifest": m, "seed": m.seed })
}

fn prep_asset(splat: &Path, params: MeshParams, mass: f64, out: &Path) -> Outcome {
    let cloud = load_splat_ply(splat)?;
    let mesh = mesh_from_cloud(&cloud, &params)?;
    let hull = ConvexHull::from_mesh(&mesh)?;
    create_dir(out)?;
    let stem = splat.file_stem().and_then(|s| s.to_str()).unwrap_or("asset").to_string();
    write_stl(&mesh, &out.join(format!("{stem}.stl")))?;
    write_obj(&mesh, &out.join(format!("{stem}.obj")))?;
    let (lo, hi) = mesh.bounds().expect("reconstructed mesh has vertices");
    let center = (lo + hi) * 0.5;
    let radius = mesh.vertices.iter().map(|v| (v - center).norm()).fold(0.0, f64::max);
    let descriptor = json!({
        "asset": { "splat": splat, "mesh": format!("{stem}.stl") },
        "mass": mass,
        "bounding_radius": radius,
        "center": [center.x, center.y, center.z],
        "triangles": mesh.triangle_count(),
        "closed": mesh.is_watertight(),
        "volume": mesh.volume(),
        "hull_volume": hull.volume,
    });
    write_json(&out.join(format!("{stem}.json")), &descriptor)?;
    echo_config(out, "prep-asset", json!({ "splat": splat, "mesh": params, "mass": mass }))?;
    eprintln!(
        "{stem}: {} triangles, bounding radius {radius:.4} m -> {}",
        mesh.triangle_count(),
        out.display()
    );
    Ok(true)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::PrepAsset { splat, alpha, smooth_iters, target_tris, mass, out } => {
            let params = MeshParams {
                alpha,
                smooth_iterations: smooth_iters,
                target_triangles: target_tris,
                ..MeshParams::default()
            };
            prep_asset(&splat, params, mass, &out)
        }
        Command::MakeAsset { kind, extent, count, color, seed, name, out } => {
            let mut e = [0.0; 3];
            e[..extent.len()].copy_from_slice(&extent);
            let kind = match kind {
                Kind::Sphere => AssetKind::Sphere,
                Kind::Box => AssetKind::Box,
                Kind::Plane => AssetKind::Plane,
            };
            let params = AssetParams::new(e, count, [color[0], color[1], color[2]]);
            let cloud = generate_test_asset(kind, &params, seed)?;
            create_dir(&out)?;
            let path = out.join(format!("{name}.ply"));
            save_splat_ply(&cloud, &path)?;
            echo_config(&out, "make-asset", json!({ "kind": kind, "params": params, "seed": seed, "name": name }))?;
            eprintln!("wrote {} splats to {}", cloud.len(), path.display());
            Ok(true)
        }
        Command::Generate { manifest, out, workers } => {
            let m = SceneManifest::load(&manifest)?;
            create_dir(&out)?;
            echo_config(&out, "generate", manifest_config(&m, &manifest))?;
            let report = generate(&m, &out, workers)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            eprintln!(
                "{} of {} scenes, {} frames, {} failed, {:.2} s ({:.2} frames/s)",
                report.scenes_ok,
                report.scenes,
                report.frames,
                report.failures.len(),
                report.wall_time_s,
                report.frames_per_s
            );
            for f in &report.failures {
                eprintln!("scene {}: {}", f.scene, f.error);
            }
            Ok(report.failures.is_empty())
        }
        Command::Render { manifest, scene_index, frame, out, workers } => {
            let m = SceneManifest::load(&manifest)?;
            if scene_index >= m.scenes || frame >= m.views_per_scene {
                return Err(Error::Config(format!(
                    "scene {scene_index} frame {frame} out of range: manifest has {} scenes of {} views",
                    m.scenes, m.views_per_scene
                )));
            }
            let assets = SceneAssets::load(&m)?;
            let scene = build_scene(&m, &assets, scene_index)?;
            let opts = RenderOptions { workers, ..RenderOptions::default() };
            let rendered = scene.render_frame(&assets, m.mode, frame, &opts)?;
            create_dir(&out)?;
            echo_config(
                &out,
                "render",
                json!({ "source": manifest_config(&m, &manifest), "scene_index": scene_index, "frame": frame }),
            )?;
            let dir = bop_io::write_scene(&out, scene_index, std::slice::from_ref(&rendered), m.depth_scale)?;
            let ann = serde_json::to_value(&rendered.annotation).expect("serializable");
            write_json(&out.join("annotation.json"), &ann)?;
            eprintln!(
                "scene {scene_index} frame {frame}: {} objects -> {}",
                rendered.annotation.objects.len(),
                dir.display()
            );
            Ok(true)
        }
        Command::Simulate { manifest, scene_index, out } => {
            let m = SceneManifest::load(&manifest)?;
            if scene_index >= m.scenes {
                return Err(Error::Config(format!("scene {scene_index} out of range: manifest has {} scenes", m.scenes)));
            }
            let assets = SceneAssets::load(&m)?;
            let scene = build_scene(&m, &assets, scene_index)?;
            create_dir(&out)?;
            echo_config(&out, "simulate", json!({ "source": manifest_config(&m, &manifest), "scene_index": scene_index }))?;
            let trajs: Vec<_> = scene.instances.iter().map(|i| i.trajectory.clone()).collect();
            write_trajectories_jsonl(&trajs, &out.join("trajectories.jsonl"))?;
            for t in &trajs {
                info!("body {} (object {}): settled {} at {:?} s", t.body, t.object_id, t.settled, t.settle_time);
            }
            eprintln!("{} bodies, {} warnings", trajs.len(), scene.warnings.len());
            Ok(true)
        }
        Command::Validate { root, report } => {
            if !root.is_dir() {
                return Err(Error::Io {
                    path: root,
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
                });
            }
            let r = validate_dataset(&root);
            let v = serde_json::to_value(&r).expect("serializable");
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            if let Some(p) = report {
                write_json(&p, &v)?;
            }
            for c in &r.checks {
                eprintln!("{:<22} {}", c.check, if c.passed { "pass" } else { "FAIL" });
                for f in c.failures.iter().take(10) {
                    eprintln!("    {f}");
                }
            }
            eprintln!("{} scenes, {} frames: {}", r.scenes, r.frames, if r.passed { "valid" } else { "invalid" });
            Ok(r.passed)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPLATGEN_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
