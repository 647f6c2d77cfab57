//! Core of the splat capture pipeline: the Gaussian splat model, PLY and
//! COLMAP formats, a tile-based software rasterizer and a CPU optimizer with
//! analytic gradients.

pub mod camera;
pub mod colmap;
pub mod dataset;
pub mod gaussian;
pub mod image;
pub mod math;
pub mod optim;
pub mod ply;
pub mod raster;
pub mod sh;
pub mod synthetic;

pub use camera::{Camera, CameraIntrinsics};
pub use gaussian::{Splat, SplatCloud};
pub use image::ImageBuffer;
