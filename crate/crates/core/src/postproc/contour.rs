use crate::maps::InstanceMap;

// Clockwise on screen (rows grow downwards), starting east.
const OFFSETS: [(isize, isize); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

fn direction(from: (isize, isize), to: (isize, isize)) -> usize {
    let d = (to.0 - from.0, to.1 - from.1);
    OFFSETS.iter().position(|&o| o == d).expect("8-neighbour")
}

/// Outer boundary of the 8-connected region of `label` that contains `start`,
/// traced clockwise with Moore-neighbour tracing. `start` must be the region's
/// topmost, then leftmost pixel. Returns `[row, col]` vertices; a lone pixel
/// yields a single vertex.
pub fn trace_contour(inst: &InstanceMap, label: u32, start: (usize, usize)) -> Vec<[u32; 2]> {
    let (h, w) = (inst.height as isize, inst.width as isize);
    let inside = |p: (isize, isize)| {
        p.0 >= 0 && p.1 >= 0 && p.0 < h && p.1 < w && inst.labels[(p.0 * w + p.1) as usize] == label
    };
    // Next boundary pixel clockwise from backtrack `b` around `p`, along with
    // the new backtrack (the last outside neighbour examined).
    let step = |p: (isize, isize), b: (isize, isize)| {
        let d0 = direction(p, b);
        let mut prev = b;
        for i in 1..=8 {
            let o = OFFSETS[(d0 + i) % 8];
            let q = (p.0 + o.0, p.1 + o.1);
            if inside(q) {
                return Some((q, prev));
            }
            prev = q;
        }
        None
    };
    let s = (start.0 as isize, start.1 as isize);
    let vertex = |p: (isize, isize)| [p.0 as u32, p.1 as u32];
    let mut contour = vec![vertex(s)];
    // West of the start is outside by construction.
    let Some((first, b1)) = step(s, (s.0, s.1 - 1)) else {
        return contour;
    };
    let (mut p, mut b) = (first, b1);
    // Each (pixel, entry direction) state occurs at most once per lap.
    let limit = 8 * (h * w) as usize + 8;
    for _ in 0..limit {
        let (q, nb) = step(p, b).expect("connected to predecessor");
        if p == s && q == first {
            break;
        }
        contour.push(vertex(p));
        p = q;
        b = nb;
    }
    contour
}
