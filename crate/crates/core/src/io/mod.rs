//! File formats: NPY arrays, PanNuke fold ingestion, nucleus JSON records and
//! PNG overlays.

pub mod npy;
pub mod overlay;
pub mod pannuke;
pub mod records;

pub use npy::{read_npy, read_npy_strings, write_npy, DType, NpyArray};
pub use overlay::{overlay_rgb, write_overlay_png, TileImage};
pub use pannuke::{fuse_mask_channels, load_pannuke_fold, PannukeFold, PannukeTile};
pub use records::{read_instances_json, write_instances_json, InstanceDocument, NucleusJsonRecord};
