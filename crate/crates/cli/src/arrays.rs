//! Loading network outputs and label tiles from `.npy` files.

use std::collections::BTreeMap;
use std::path::Path;

use hoverpost_core::io::{read_npy, NpyArray};
use hoverpost_core::loss::softmax_map;
use hoverpost_core::{ChannelMap, ClassTable, Grid, InstanceMap};

use crate::error::{CliError, CliResult};

pub fn load(path: &Path) -> CliResult<NpyArray> {
    read_npy(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn dims<const N: usize>(arr: &NpyArray, what: &str) -> CliResult<[usize; N]> {
    arr.shape
        .as_slice()
        .try_into()
        .map_err(|_| CliError::Input(format!("{what} must be {N}-dimensional, got shape {:?}", arr.shape)))
}

/// Foreground probabilities from either an `H×W` probability map or `H×W×2`
/// logits.
pub fn np_probabilities(arr: &NpyArray) -> CliResult<Grid<f32>> {
    match arr.shape.len() {
        2 => {
            let [h, w] = dims::<2>(arr, "NP map")?;
            Ok(Grid::from_vec(h, w, arr.to_f32_vec())?)
        }
        3 => {
            let [h, w, c] = dims::<3>(arr, "NP map")?;
            if c != 2 {
                return Err(CliError::Input(format!("NP logits need 2 channels, got shape {:?}", arr.shape)));
            }
            let probs = softmax_map(&ChannelMap::from_vec(h, w, 2, arr.to_f64_vec())?, 1.0);
            Ok(probs.channel(1).map(|p| p as f32))
        }
        _ => Err(CliError::Input(format!("NP map must be H×W or H×W×2, got shape {:?}", arr.shape))),
    }
}

pub fn channel_map(arr: &NpyArray, what: &str) -> CliResult<ChannelMap<f32>> {
    let [h, w, c] = dims::<3>(arr, what)?;
    Ok(ChannelMap::from_vec(h, w, c, arr.to_f32_vec())?)
}

/// Type probabilities; logits are passed through a softmax unless
/// `already_probs`.
pub fn tp_probabilities(arr: &NpyArray, already_probs: bool) -> CliResult<ChannelMap<f32>> {
    let [h, w, c] = dims::<3>(arr, "TP map")?;
    if already_probs {
        return channel_map(arr, "TP map");
    }
    Ok(softmax_map(&ChannelMap::from_vec(h, w, c, arr.to_f64_vec())?, 1.0).map(|p| p as f32))
}

/// An instance tile: `H×W` labels, or `H×W×2` labels plus a per-pixel type
/// map. Instance classes are the majority type over each instance (ties to
/// the lower type); without a type map every instance is class 1.
pub fn label_tile(arr: &NpyArray) -> CliResult<(InstanceMap, ClassTable)> {
    let values = arr.to_u32_exact()?;
    let (h, w, types) = match arr.shape.as_slice() {
        &[h, w] => (h, w, None),
        &[h, w, 2] => (h, w, Some(())),
        other => {
            return Err(CliError::Input(format!(
                "label tile must be H×W or H×W×2, got shape {other:?}"
            )))
        }
    };
    let (labels, type_map): (Vec<u32>, Option<Vec<u32>>) = match types {
        None => (values, None),
        Some(()) => (
            values.iter().step_by(2).copied().collect(),
            Some(values.iter().skip(1).step_by(2).copied().collect()),
        ),
    };
    let inst = InstanceMap::from_vec(h, w, labels)?;
    let mut classes = ClassTable::new();
    match type_map {
        None => {
            for l in inst.label_set() {
                classes.insert(l, 1);
            }
        }
        Some(types) => {
            let mut votes: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
            for (&l, &t) in inst.labels.iter().zip(&types) {
                if l != 0 {
                    *votes.entry(l).or_default().entry(t).or_default() += 1;
                }
            }
            for (l, v) in votes {
                // BTreeMap iteration is ascending, so `>` keeps the lower type on ties
                let best = v.iter().fold((0, 0), |acc, (&t, &n)| if n > acc.1 { (t, n) } else { acc });
                classes.insert(l, best.0);
            }
        }
    }
    Ok((inst, classes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_tile_majority() {
        // labels [1,1,1,2], types [3,3,2,0]
        let arr = NpyArray::from_slice(&[2, 2, 2], &[1u32, 3, 1, 3, 1, 2, 2, 0]).unwrap();
        let (inst, cls) = label_tile(&arr).unwrap();
        assert_eq!(inst.labels, vec![1, 1, 1, 2]);
        assert_eq!(cls, ClassTable::from([(1, 3), (2, 0)]));
    }

    #[test]
    fn logits_become_probabilities() {
        let arr = NpyArray::from_slice(&[1, 2, 2], &[0.0f32, 0.0, 0.0, 10.0]).unwrap();
        let p = np_probabilities(&arr).unwrap();
        assert!((p.data[0] - 0.5).abs() < 1e-6 && p.data[1] > 0.9999);
    }
}
