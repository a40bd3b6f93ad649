//! Per-tile nucleus records serialized as JSON.
//!
//! Schema: `{"nuclei":[{"bbox":[rmin,cmin,rmax,cmax],"centroid":[r,c],
//! "class_id":int,"class_prob":float,"contour":[[r,c],...],"id":int}],"version":1}`
//! with keys sorted; output is compact and byte-stable.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NucleusJsonRecord {
    pub id: u32,
    pub class_id: u32,
    pub class_prob: f32,
    pub centroid: [f32; 2],
    /// Inclusive pixel bounds `[rmin, cmin, rmax, cmax]`.
    pub bbox: [u32; 4],
    pub contour: Vec<[u32; 2]>,
}

impl NucleusJsonRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("nucleus {}: {msg}", self.id)));
        if self.id == 0 {
            return bad("id must be positive");
        }
        if !(0.0..=1.0).contains(&self.class_prob) {
            return bad("class_prob outside [0, 1]");
        }
        if self.contour.is_empty() {
            return bad("empty contour");
        }
        let [r0, c0, r1, c1] = self.bbox;
        if self
            .contour
            .iter()
            .any(|&[r, c]| r < r0 || r > r1 || c < c0 || c > c1)
        {
            return bad("contour vertex outside bbox");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub version: u32,
    pub nuclei: Vec<NucleusJsonRecord>,
}

impl InstanceDocument {
    pub fn new(nuclei: Vec<NucleusJsonRecord>) -> Self {
        Self {
            version: SCHEMA_VERSION,
            nuclei,
        }
    }

    /// Compact JSON with lexicographically sorted keys.
    pub fn to_json(&self) -> Result<String> {
        let mut ids = HashSet::new();
        for rec in &self.nuclei {
            rec.validate()?;
            if !ids.insert(rec.id) {
                return Err(Error::InvalidArgument(format!("duplicate nucleus id {}", rec.id)));
            }
        }
        // serde_json::Value maps are BTreeMaps, so keys come out sorted.
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_string(&value)?)
    }
}

pub fn write_instances_json(records: &[NucleusJsonRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = InstanceDocument::new(records.to_vec()).to_json()?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_instances_json(path: impl AsRef<Path>) -> Result<InstanceDocument> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
