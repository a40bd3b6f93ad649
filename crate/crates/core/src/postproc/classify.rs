use crate::error::{Error, Result};
use crate::maps::{ChannelMap, ClassTable, InstanceMap, ProbTable};

/// Assigns each instance the majority per-pixel class, ignoring background
/// votes. Ties go to the lower class id. An instance whose pixels all vote
/// background gets the foreground class with the largest summed probability.
/// The reported probability is the mean probability of the chosen class over
/// the instance.
pub fn classify_instances<T: Copy + Into<f64>>(
    inst: &InstanceMap,
    tp_probs: &ChannelMap<T>,
) -> Result<(ClassTable, ProbTable)> {
    if [inst.height, inst.width] != [tp_probs.height, tp_probs.width] {
        return Err(Error::shape(inst.shape(), tp_probs.shape()));
    }
    let nc = tp_probs.channels;
    if nc < 2 {
        return Err(Error::InvalidArgument(format!(
            "type map needs at least 2 channels, got {nc}"
        )));
    }
    let mut classes = ClassTable::new();
    let mut probs = ProbTable::new();
    for (label, pixels) in inst.pixel_lists() {
        let mut votes = vec![0usize; nc];
        let mut sums = vec![0.0f64; nc];
        for &i in &pixels {
            let px = tp_probs.pixel(i);
            let mut best = 0;
            let mut best_p = f64::NEG_INFINITY;
            for (k, &p) in px.iter().enumerate() {
                let p: f64 = p.into();
                sums[k] += p;
                if p > best_p {
                    best_p = p;
                    best = k;
                }
            }
            votes[best] += 1;
        }
        let pick = |score: &dyn Fn(usize) -> f64| {
            (1..nc).fold(1, |acc, k| if score(k) > score(acc) { k } else { acc })
        };
        let class = if votes[1..].iter().any(|&v| v > 0) {
            pick(&|k| votes[k] as f64)
        } else {
            pick(&|k| sums[k])
        };
        classes.insert(label, class as u32);
        probs.insert(label, (sums[class] / pixels.len() as f64).clamp(0.0, 1.0) as f32);
    }
    Ok((classes, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs_for(rows: &[[f32; 3]]) -> ChannelMap<f32> {
        ChannelMap::from_vec(1, rows.len(), 3, rows.concat()).unwrap()
    }

    #[test]
    fn sixty_forty_vote() {
        let mut rows = vec![[0.1f32, 0.7, 0.1, 0.1]; 6];
        rows.extend(vec![[0.1, 0.1, 0.2, 0.6]; 4]);
        let inst = InstanceMap::from_vec(1, 10, vec![1; 10]).unwrap();
        let probs = ChannelMap::from_vec(1, 10, 4, rows.concat()).unwrap();
        let (cls, p) = classify_instances(&inst, &probs).unwrap();
        assert_eq!(cls[&1], 1);
        // (6 * 0.7 + 4 * 0.1) / 10
        assert!((p[&1] - 0.46).abs() < 1e-6);
    }

    #[test]
    fn tie_goes_to_lower_class() {
        let rows = [[0.0, 0.9, 0.1], [0.0, 0.1, 0.9]];
        let inst = InstanceMap::from_vec(1, 2, vec![1, 1]).unwrap();
        let (cls, _) = classify_instances(&inst, &probs_for(&rows)).unwrap();
        assert_eq!(cls[&1], 1);
    }

    #[test]
    fn background_votes_ignored() {
        let rows = [[0.9, 0.05, 0.05], [0.9, 0.02, 0.08], [0.4, 0.5, 0.1]];
        let inst = InstanceMap::from_vec(1, 3, vec![1, 1, 1]).unwrap();
        let (cls, _) = classify_instances(&inst, &probs_for(&rows)).unwrap();
        assert_eq!(cls[&1], 1);
    }

    #[test]
    fn all_background_falls_back_to_probability_mass() {
        let rows = [[0.9, 0.02, 0.08], [0.8, 0.05, 0.15]];
        let inst = InstanceMap::from_vec(1, 2, vec![1, 1]).unwrap();
        let (cls, p) = classify_instances(&inst, &probs_for(&rows)).unwrap();
        assert_eq!(cls[&1], 2);
        assert!((p[&1] - 0.115).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch() {
        let inst = InstanceMap::empty(2, 2);
        assert!(classify_instances(&inst, &ChannelMap::<f32>::zeros(2, 3, 3)).is_err());
    }
}
