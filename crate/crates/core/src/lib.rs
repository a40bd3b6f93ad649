//! Computational core for distilled HoVer-style nuclei segmentation:
//! distillation losses with analytic gradients, HV-map watershed
//! post-processing, target generation and panoptic evaluation.

pub mod error;
pub mod io;
pub mod maps;
pub mod loss;
pub mod metrics;
pub mod postproc;
pub mod synth;
pub mod targets;

pub use error::{Error, Result};
pub use maps::{ChannelMap, ClassTable, Grid, InstanceMap, Mask, ProbTable};
