//! Synthetic 6DoF pose datasets from Gaussian-splat reconstructions.
//!
//! Environments and objects are ingested as trained splat clouds. Each
//! object also gets a low-poly collision mesh built from its splat means.
//! Objects are dropped into the environment with a rigid-body simulation,
//! the splat clouds are moved to the resulting poses and merged, and the
//! composed scene is rendered on the CPU along a camera trajectory. RGB,
//! depth, masks, boxes and poses are written in the BOP layout.
//!
//! The narrative guide lives in `book/`; its code listings run as doctests
//! of this crate.

pub mod bop_io;
pub mod compose;
pub mod error;
pub mod geometry;
pub mod physics;
pub mod raster;
pub mod scene_gen;
pub mod sh;
pub mod splat_model;

pub use compose::{merge_clouds, transform_cloud, translate_cloud, RigidTransform};
pub use error::{Error, Result};

pub use raster::{render, CameraView, RenderOptions, RenderOutput};
pub use splat_model::{covariance_of, Gaussian, GaussianCloud};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    pub mod intro {}
    #[doc = include_str!("../../../book/src/splats.md")]
    pub mod splats {}
    #[doc = include_str!("../../../book/src/compose.md")]
    pub mod compose {}
    #[doc = include_str!("../../../book/src/rendering.md")]
    pub mod rendering {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    pub mod geometry {}
    #[doc = include_str!("../../../book/src/physics.md")]
    pub mod physics {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    pub mod scenes {}
    #[doc = include_str!("../../../book/src/bop.md")]
    pub mod bop {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
