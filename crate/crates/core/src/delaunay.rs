//! Planar Delaunay star of a single point.
//!
//! Neighborhoods are small (k is typically 8 to 30), so the star of the
//! center is found by testing each candidate triangle against every other
//! point with exact orientation and in-circle predicates. Cocircular
//! configurations are resolved by symbolic perturbation of the lifted
//! paraboloid heights: the point with the lowest rank receives the largest
//! perturbation, so ties always resolve the same way for a given ranking.

use robust::Coord;

pub type Point2 = [f64; 2];

fn coord(p: Point2) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

/// Exact sign of the orientation of `(a, b, c)`; positive when
/// counterclockwise.
pub fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    robust::orient2d(coord(a), coord(b), coord(c))
}

/// Exact in-circle test; positive when `d` lies inside the circle through
/// the counterclockwise triangle `(a, b, c)`.
pub fn incircle(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    robust::incircle(coord(a), coord(b), coord(c), coord(d))
}

/// In-circle sign with ties broken by symbolic perturbation. `ranks` must
/// be distinct. Returns `+1` (inside) or `-1` (outside) for a
/// counterclockwise `(a, b, c)`.
pub fn incircle_sos(pts: [Point2; 4], ranks: [usize; 4]) -> i8 {
    let [a, b, c, d] = pts;
    let det = incircle(a, b, c, d);
    if det > 0.0 {
        return 1;
    }
    if det < 0.0 {
        return -1;
    }
    // derivative of the determinant w.r.t. each point's lifted height
    let partials = [
        orient(b, c, d),
        orient(c, a, d),
        orient(a, b, d),
        -orient(a, b, c),
    ];
    let mut order = [0usize, 1, 2, 3];
    order.sort_by_key(|&i| ranks[i]);
    for i in order {
        if partials[i] > 0.0 {
            return 1;
        }
        if partials[i] < 0.0 {
            return -1;
        }
    }
    // only reachable when all four points are collinear
    -1
}

/// Triangles of the Delaunay triangulation of `points` incident to
/// `points[0]`, as counterclockwise local index pairs `(a, b)` meaning the
/// triangle `(0, a, b)`. Points must be pairwise distinct.
pub fn delaunay_star(points: &[Point2], ranks: &[usize]) -> Vec<(usize, usize)> {
    let m = points.len();
    assert_eq!(ranks.len(), m);
    let c = points[0];
    let mut star = Vec::new();
    for a in 1..m {
        for b in 1..m {
            if a == b || orient(c, points[a], points[b]) <= 0.0 {
                continue;
            }
            let empty = (1..m).filter(|&q| q != a && q != b).all(|q| {
                incircle_sos(
                    [c, points[a], points[b], points[q]],
                    [ranks[0], ranks[a], ranks[b], ranks[q]],
                ) < 0
            });
            if empty {
                star.push((a, b));
            }
        }
    }
    star
}

/// Fan over the points `1..` sorted by angle around `points[0]`; used when
/// the star is empty (all points collinear with the center).
pub fn angular_fan(points: &[Point2]) -> Vec<(usize, usize)> {
    let c = points[0];
    let mut idx: Vec<(f64, usize)> = (1..points.len())
        .map(|i| ((points[i][1] - c[1]).atan2(points[i][0] - c[0]), i))
        .collect();
    idx.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut fan: Vec<(usize, usize)> = idx.windows(2).map(|w| (w[0].1, w[1].1)).collect();
    if idx.len() >= 3 {
        let gap = idx[0].0 + std::f64::consts::TAU - idx[idx.len() - 1].0;
        if gap < std::f64::consts::PI {
            fan.push((idx[idx.len() - 1].1, idx[0].1));
        }
    }
    fan
}
