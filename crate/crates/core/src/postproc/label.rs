use crate::maps::{Grid, InstanceMap, Mask};

/// 4-connected component labeling of a binary mask. Labels are assigned in
/// raster order of each component's first pixel.
pub fn connected_components(mask: &Mask) -> (InstanceMap, Vec<usize>) {
    let (h, w) = (mask.height, mask.width);
    let mut labels = vec![0u32; h * w];
    // sizes[label - 1]
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if mask.data[start] == 0 || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if mask.data[j] != 0 && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
            if r + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    (
        InstanceMap {
            height: h,
            width: w,
            labels,
        },
        sizes,
    )
}

/// Drops 4-connected components with fewer than `min_size` pixels.
pub fn remove_small_objects(mask: &Mask, min_size: usize) -> Mask {
    if min_size <= 1 {
        return mask.clone();
    }
    let (cc, sizes) = connected_components(mask);
    Grid {
        height: mask.height,
        width: mask.width,
        data: cc
            .labels
            .iter()
            .map(|&l| u8::from(l > 0 && sizes[l as usize - 1] >= min_size))
            .collect(),
    }
}
