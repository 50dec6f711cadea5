//! Reconstruction of an undeformed surface mosaic and the scanner travel path
//! from contact-deformed surface images and four-point force readings.
//!
//! The crate is `no_std` (with `alloc`). File formats, image codecs and the
//! command line live in the `forcemosaic` companion crate.
//!
//! Processing chain for every frame after the first:
//!
//! ```text
//! forces ──► total load, tilt ──► load field ──► radial rectification
//!                                                   │
//! mosaic crop ──► SIFT ──┐                          ▼
//!                        ├──► match ──► RANSAC ──► pose ──► pose correction
//! rectified frame ──► modified A-SIFT ┘                        │
//!                                                              ▼
//!                                   reprojection ──► stitch + path update
//! ```

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod calibration;
pub mod features;
pub mod force_rect;
pub mod geometry;
pub mod image;
pub mod pipeline;
pub mod pose;
pub mod simulator;
pub mod warp;

pub use geometry::{CameraIntrinsics, ForceSample, GeometryError, MaterialParams, Pose};
pub use image::{Image, ImageError, Interpolation};

/// Items every module pulls in. `Float` supplies the libm-backed math
/// methods when the crate is built without `std`.
pub(crate) mod prelude {
    pub use alloc::vec;
    pub use alloc::vec::Vec;
    #[allow(unused_imports)]
    pub use num_traits::Float;
}
