//! Upper envelope of affine functions `z -> b_i + s_i z` on an interval.

/// Particle indices sorted by slope, ties by index. Slopes are the same in
/// every column, so the order is computed once per tessellation.
#[derive(Debug, Clone)]
pub(crate) struct SlopeOrder {
    order: Vec<usize>,
}

impl SlopeOrder {
    pub(crate) fn new(slopes: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..slopes.len()).collect();
        order.sort_by(|&a, &b| slopes[a].total_cmp(&slopes[b]).then(a.cmp(&b)));
        Self { order }
    }
}

/// A maximal interval `[lower, upper)` on which one line wins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Piece {
    pub owner: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Scratch space reused across columns.
#[derive(Debug, Default)]
pub(crate) struct EnvelopeScratch {
    hull: Vec<usize>,
}

/// Writes the pieces of `max_i (b_i + s_i z)` over `[lo, hi]` into `out`,
/// in increasing `z`. Lines are visited in `order`; among identical lines
/// the lowest index wins.
pub(crate) fn upper_envelope(
    order: &SlopeOrder,
    slopes: &[f64],
    intercepts: &[f64],
    lo: f64,
    hi: f64,
    scratch: &mut EnvelopeScratch,
    out: &mut Vec<Piece>,
) {
    out.clear();
    let hull = &mut scratch.hull;
    hull.clear();
    for &l in &order.order {
        if let Some(&last) = hull.last() {
            if slopes[last] == slopes[l] {
                if intercepts[l] > intercepts[last] {
                    hull.pop();
                } else {
                    continue;
                }
            }
        }
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // b never wins if the a/b crossing is not left of the b/l crossing.
            let lhs = (intercepts[a] - intercepts[b]) * (slopes[l] - slopes[b]);
            let rhs = (intercepts[b] - intercepts[l]) * (slopes[b] - slopes[a]);
            if lhs >= rhs {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(l);
    }

    let crossing = |a: usize, b: usize| (intercepts[a] - intercepts[b]) / (slopes[b] - slopes[a]);
    let mut start = lo;
    for k in 0..hull.len() {
        let end = if k + 1 < hull.len() {
            crossing(hull[k], hull[k + 1])
        } else {
            f64::INFINITY
        };
        if end <= start {
            continue;
        }
        let upper = end.min(hi);
        out.push(Piece {
            owner: hull[k],
            lower: start,
            upper,
        });
        if upper >= hi {
            break;
        }
        start = upper;
    }
}
