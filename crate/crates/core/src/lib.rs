//! Building-footprint extraction primitives for off-nadir aerial imagery.
//!
//! A footprint is modelled as the roof polygon translated by a per-building
//! roof-to-footprint offset vector. This crate holds the pure parts of that
//! pipeline and needs only `alloc`:
//!
//! - [`data_model`]: polygons, offsets, annotations and datasets.
//! - [`geometry`]: rasterization, contour extraction, Mask IoU and Boundary IoU.
//! - [`foa`]: rotation of feature maps and offsets, polar form, branch fusion.
//! - [`learning`]: offset encoding, smooth-L1, joint loss and a small
//!   multi-branch offset regressor trained with momentum SGD.
//! - [`eval`]: instance matching, precision/recall/F1, Boundary AP50 and
//!   end-point error.
//! - [`synth`]: seeded synthetic scenes, prediction perturbation and
//!   offset-bearing feature maps.
//!
//! File formats and the command-line tool live in the `offnadir` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data_model;
pub mod error;
pub mod eval;
pub mod foa;
pub mod geometry;
pub mod learning;
pub mod synth;
pub mod toy;

pub use data_model::{
    AnnotationDraft, BBox, BuildingAnnotation, Dataset, ImageRecord, OffsetVector, Point2,
    Polygon, Rule, Split, Violation,
};
pub use error::{Error, Result};
pub use geometry::BitMask;
