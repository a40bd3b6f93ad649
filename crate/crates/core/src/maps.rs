//! Dense raster containers shared by every stage of the pipeline.
//!
//! All containers are row-major. Multi-channel maps are channels-last
//! (`H×W×C`), the layout numpy uses for the arrays these maps are read from.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Instance label → class id.
pub type ClassTable = BTreeMap<u32, u32>;

/// Instance label → probability of its assigned class.
pub type ProbTable = BTreeMap<u32, f32>;

/// A single-channel `H×W` raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Copy + Default> Grid<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![T::default(); height * width],
        }
    }
}

impl<T: Copy> Grid<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape([height, width], [data.len()]));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.height, self.width]
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Binary raster, `1` = foreground.
pub type Mask = Grid<u8>;

/// A channels-last `H×W×C` raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMap<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Copy + Default> ChannelMap<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![T::default(); height * width * channels],
        }
    }
}

impl<T: Copy> ChannelMap<T> {
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape([height, width, channels], [data.len()]));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> T {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: T) {
        self.data[(row * self.width + col) * self.channels + ch] = value;
    }

    /// The channel vector at flat pixel index `idx`.
    #[inline]
    pub fn pixel(&self, idx: usize) -> &[T] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> ChannelMap<U> {
        ChannelMap {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies out one channel as a grid.
    pub fn channel(&self, ch: usize) -> Grid<T> {
        Grid {
            height: self.height,
            width: self.width,
            data: self
                .data
                .chunks_exact(self.channels)
                .map(|px| px[ch])
                .collect(),
        }
    }
}

impl<T: Copy + PartialOrd> ChannelMap<T> {
    /// Per-pixel argmax over channels; ties resolve to the lower channel.
    pub fn argmax(&self) -> Grid<u32> {
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| {
                let mut best = 0;
                for (k, v) in px.iter().enumerate().skip(1) {
                    if *v > px[best] {
                        best = k;
                    }
                }
                best as u32
            })
            .collect();
        Grid {
            height: self.height,
            width: self.width,
            data,
        }
    }
}

/// Per-pixel integer instance labels; `0` is background.
///
/// Well-formed maps use exactly the labels `1..=K`. Metrics accept arbitrary
/// positive labels; [`InstanceMap::relabel_sequential`] restores the
/// canonical numbering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
}

impl InstanceMap {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            labels: vec![0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::shape([height, width], [labels.len()]));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, label: u32) {
        self.labels[row * self.width + col] = label;
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.height, self.width]
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Distinct positive labels, ascending.
    pub fn label_set(&self) -> Vec<u32> {
        let mut seen: Vec<u32> = self.labels.iter().copied().filter(|&l| l > 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }

    /// Number of distinct positive labels.
    pub fn count(&self) -> usize {
        self.label_set().len()
    }

    pub fn foreground_pixels(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }

    /// Renumbers labels to `1..=K` in raster order of first appearance.
    pub fn relabel_sequential(&self) -> InstanceMap {
        let mut remap: std::collections::HashMap<u32, u32> = Default::default();
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if l == 0 {
                    0
                } else {
                    let next = remap.len() as u32 + 1;
                    *remap.entry(l).or_insert(next)
                }
            })
            .collect();
        InstanceMap {
            height: self.height,
            width: self.width,
            labels,
        }
    }

    /// True when the positive labels are exactly `1..=K`.
    pub fn is_sequential(&self) -> bool {
        let set = self.label_set();
        set.iter().enumerate().all(|(i, &l)| l == i as u32 + 1)
    }

    /// Flat pixel indices of each label, grouped by label (ascending).
    pub fn pixel_lists(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                out.entry(l).or_default().push(i);
            }
        }
        out
    }

    /// Binary foreground mask.
    pub fn foreground(&self) -> Mask {
        Grid {
            height: self.height,
            width: self.width,
            data: self.labels.iter().map(|&l| u8::from(l > 0)).collect(),
        }
    }

    /// Keeps only the labels for which `keep` returns true.
    pub fn filtered(&self, keep: impl Fn(u32) -> bool) -> InstanceMap {
        InstanceMap {
            height: self.height,
            width: self.width,
            labels: self
                .labels
                .iter()
                .map(|&l| if l > 0 && keep(l) { l } else { 0 })
                .collect(),
        }
    }
}
