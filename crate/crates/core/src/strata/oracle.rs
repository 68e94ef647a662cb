//! Slow reference implementations for tests, restricted to one and two
//! dimensions. They share no code with the optimized search.

use super::embed::unembed;
use super::pca::PcaBasis;

/// Convex hull of planar points by gift wrapping, counter-clockwise,
/// collinear points dropped.
pub fn gift_wrap_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    if points.len() < 3 {
        return points.to_vec();
    }
    let start = (0..points.len())
        .min_by(|&a, &b| {
            points[a][0]
                .partial_cmp(&points[b][0])
                .unwrap()
                .then(points[a][1].partial_cmp(&points[b][1]).unwrap())
        })
        .unwrap();
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let dist2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut hull = Vec::new();
    let mut current = start;
    loop {
        hull.push(points[current]);
        let mut next = (current + 1) % points.len();
        for i in 0..points.len() {
            let c = cross(points[current], points[next], points[i]);
            // i is to the right of current->next, or collinear and farther
            if c < -1e-12
                || (c.abs() <= 1e-12
                    && dist2(points[current], points[i]) > dist2(points[current], points[next]))
            {
                next = i;
            }
        }
        current = next;
        if current == start || hull.len() > points.len() {
            break;
        }
    }
    hull
}

/// Exhaustive minimal enclosing simplex over hull-facet lines, for `D <= 2`
/// and at most 60 points. Returns the vertices in reduced coordinates and
/// the volume, or `None` when refused or nothing qualifies.
pub fn brute_force_min_simplex(
    points: &[Vec<f64>],
    lift: &PcaBasis,
    lambda: f64,
    singular_tol: f64,
) -> Option<(Vec<Vec<f64>>, f64)> {
    let d = points.first()?.len();
    if points.len() > 60 || !(1..=2).contains(&d) {
        return None;
    }
    let feasible = |y: &[f64]| {
        let w = unembed(&lift.lift(y));
        w.iter().all(|&x| x >= -lambda) && (w.iter().sum::<f64>() - 1.0).abs() <= lambda
    };
    if d == 1 {
        let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = points
            .iter()
            .map(|p| p[0])
            .fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= 0.0 || !feasible(&[lo]) || !feasible(&[hi]) {
            return None;
        }
        return Some((vec![vec![lo], vec![hi]], hi - lo));
    }

    let planar: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
    let hull = gift_wrap_hull_2d(&planar);
    // lines a·x = b with unit normals a, one per hull edge
    let lines: Vec<([f64; 2], f64)> = (0..hull.len())
        .map(|i| {
            let p = hull[i];
            let q = hull[(i + 1) % hull.len()];
            let n = [q[1] - p[1], p[0] - q[0]];
            let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
            let n = [n[0] / len, n[1] / len];
            (n, n[0] * p[0] + n[1] * p[1])
        })
        .collect();
    let meet = |l1: ([f64; 2], f64), l2: ([f64; 2], f64)| -> Option<[f64; 2]> {
        let det = l1.0[0] * l2.0[1] - l1.0[1] * l2.0[0];
        if det.abs() < singular_tol {
            return None;
        }
        let x = (l1.1 * l2.0[1] - l1.0[1] * l2.1) / det;
        let y = (l1.0[0] * l2.1 - l1.1 * l2.0[0]) / det;
        Some([x, y])
    };
    let area = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs() / 2.0
    };
    let inside = |t: [[f64; 2]; 3], p: [f64; 2]| {
        let total = area(t[0], t[1], t[2]);
        let sum = area(p, t[1], t[2]) + area(t[0], p, t[2]) + area(t[0], t[1], p);
        sum <= total * (1.0 + 1e-9) + 1e-9
    };

    let mut best: Option<([[f64; 2]; 3], f64)> = None;
    let m = lines.len();
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                let (Some(a), Some(b), Some(c)) = (
                    meet(lines[j], lines[k]),
                    meet(lines[i], lines[k]),
                    meet(lines[i], lines[j]),
                ) else {
                    continue;
                };
                let tri = [a, b, c];
                let vol = area(a, b, c);
                if vol <= 0.0 || !tri.iter().all(|v| feasible(v)) {
                    continue;
                }
                if !planar.iter().all(|&p| inside(tri, p)) {
                    continue;
                }
                if best.map_or(true, |(_, v)| vol < v) {
                    best = Some((tri, vol));
                }
            }
        }
    }
    best.map(|(t, v)| (t.iter().map(|p| p.to_vec()).collect(), v))
}
