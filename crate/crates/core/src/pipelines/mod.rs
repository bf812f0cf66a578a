//! Image segmentation and file formats.

pub mod image;
pub mod io;
pub mod segment;

pub use image::{
    image_to_features, read_pgm, write_pgm_ascii, GrayImage, ImageFeatureSpec, LabelImage,
};
pub use segment::{
    ms_discretized, segment_image, CellCache, DiscretizedOutput, SegmentConfig, SegmentMethod,
    SegmentReport, Segmentation,
};
