//! Small-volume simplices enclosing a layer's reduced mixture set.

use std::cmp::Ordering;

use rustc_hash::FxHashMap;

use super::embed::{is_feasible, unembed};
use super::hull::{hull_facets, hull_facets_bounded, Hull, Hyperplane};
use super::linalg::{det, factorial, solve, Mat, Vector, MAX_DIM, ZERO_MAT};
use super::pca::PcaBasis;
use super::plan::OptimizerConfig;
use crate::error::{Error, Result};

/// Hull vertices may stick out of an accepted simplex by this much.
pub const ENCLOSURE_TOLERANCE: f64 = 1e-7;

/// Exact hulls growing past this many facets are replaced by support planes
/// of a thinned point set.
const DENSE_HULL_FACETS: usize = 4000;

/// Points kept when thinning a dense set.
const THIN_POINTS: usize = 48;

/// Relative volume difference under which two candidates tie.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    /// `D + 1` points of the reduced `D`-dimensional space.
    pub vertices: Vec<Vec<f64>>,
    pub volume: f64,
}

impl Simplex {
    pub fn new(vertices: Vec<Vec<f64>>) -> Self {
        let volume = simplex_volume(&vertices);
        Simplex { vertices, volume }
    }

    pub fn dimension(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Whether `p` lies inside, allowing `tol` of signed distance past any
    /// facet.
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.facet_planes()
            .iter()
            .all(|h| h.signed_distance(p) <= tol)
    }

    /// Outward facet planes; facet `i` is opposite vertex `i`.
    pub fn facet_planes(&self) -> Vec<Hyperplane> {
        let d = self.dimension();
        if d == 1 {
            let (a, b) = (self.vertices[0][0], self.vertices[1][0]);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let lower = Hyperplane {
                normal: vec![-1.0],
                offset: -lo,
            };
            let upper = Hyperplane {
                normal: vec![1.0],
                offset: hi,
            };
            return if a <= b {
                vec![upper, lower]
            } else {
                vec![lower, upper]
            };
        }
        (0..=d)
            .map(|skip| {
                let pts: Vec<&[f64]> = self
                    .vertices
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, v)| v.as_slice())
                    .collect();
                let normal =
                    super::linalg::hyperplane_normal(&pts, d).unwrap_or_else(|| vec![0.0; d]);
                let offset = super::linalg::dot(&normal, pts[0]);
                let opposite = super::linalg::dot(&normal, &self.vertices[skip]) - offset;
                if opposite > 0.0 {
                    Hyperplane {
                        normal: normal.iter().map(|x| -x).collect(),
                        offset: -offset,
                    }
                } else {
                    Hyperplane { normal, offset }
                }
            })
            .collect()
    }
}

/// `|det(v_i - v_0)| / D!`.
pub fn simplex_volume(vertices: &[Vec<f64>]) -> f64 {
    let d = vertices.len() - 1;
    let mut m = ZERO_MAT;
    for i in 0..d {
        for j in 0..d {
            m[i][j] = vertices[i + 1][j] - vertices[0][j];
        }
    }
    det(&m, d).abs() / factorial(d)
}

/// Barycentric coordinates of `p`; they sum to one exactly.
pub fn barycentric_coords(p: &[f64], simplex: &Simplex) -> Result<Vec<f64>> {
    let d = simplex.dimension();
    if !(simplex.volume > 0.0) {
        return Err(Error::Internal(
            "barycentric coordinates in a degenerate simplex".into(),
        ));
    }
    let v0 = &simplex.vertices[0];
    let mut m = ZERO_MAT;
    for r in 0..d {
        for c in 0..d {
            m[r][c] = simplex.vertices[c + 1][r] - v0[r];
        }
    }
    let rhs: Vec<f64> = (0..d).map(|r| p[r] - v0[r]).collect();
    let beta = solve(&m, &rhs, d)
        .ok_or_else(|| Error::Internal("singular simplex in barycentric solve".into()))?;
    let mut coords = Vec::with_capacity(d + 1);
    coords.push(1.0 - beta[..d].iter().sum::<f64>());
    coords.extend_from_slice(&beta[..d]);
    Ok(coords)
}

/// Lexicographic order of the sorted vertex lists, used to break volume ties.
pub(crate) fn vertex_order(a: &[Vec<f64>], b: &[Vec<f64>]) -> Ordering {
    let sorted = |v: &[Vec<f64>]| {
        let mut s = v.to_vec();
        s.sort_by(|x, y| lex(x, y));
        s
    };
    let (sa, sb) = (sorted(a), sorted(b));
    sa.iter()
        .zip(&sb)
        .map(|(x, y)| lex(x, y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn lex(x: &[f64], y: &[f64]) -> Ordering {
    x.iter()
        .zip(y)
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Outcome of a simplex search, with enumeration bookkeeping.
#[derive(Debug, Clone)]
pub struct SimplexSearch {
    pub simplex: Option<Simplex>,
    pub facet_count: usize,
    pub candidates_tested: usize,
    /// True when `max_candidates` stopped the enumeration early.
    pub capped: bool,
}

struct Enumerator<'a> {
    planes: &'a [Hyperplane],
    d: usize,
    lift: &'a PcaBasis,
    cfg: &'a OptimizerConfig,
    /// Intersection of each D-subset of planes, `None` when singular or
    /// outside the barycentric constraints.
    corners: FxHashMap<u128, Option<Vector>>,
}

impl Enumerator<'_> {
    fn key(subset: &[usize]) -> u128 {
        subset
            .iter()
            .fold(0u128, |k, &i| (k << 20) | (i as u128 + 1))
    }

    fn corner(&mut self, subset: &[usize]) -> Option<Vector> {
        let key = Self::key(subset);
        if let Some(c) = self.corners.get(&key) {
            return *c;
        }
        let c = self.solve_corner(subset);
        self.corners.insert(key, c);
        c
    }

    fn solve_corner(&self, subset: &[usize]) -> Option<Vector> {
        let d = self.d;
        let mut m: Mat = ZERO_MAT;
        let mut rhs = [0.0; MAX_DIM];
        for (r, &i) in subset.iter().enumerate() {
            m[r][..d].copy_from_slice(&self.planes[i].normal);
            rhs[r] = self.planes[i].offset;
        }
        // unit normals: |det| is 1 for orthogonal planes, 0 for dependent ones
        if det(&m, d).abs() < self.cfg.singular_tol {
            return None;
        }
        let x = solve(&m, &rhs[..d], d)?;
        if x[..d].iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mixture = unembed(&self.lift.lift(&x[..d]));
        is_feasible(&mixture, self.cfg.lambda).then_some(x)
    }
}

/// Enumerates every `D + 1`-subset of the hull's facet planes and keeps the
/// smallest simplex that encloses the hull and whose lifted vertices are
/// valid mixtures within `cfg.lambda`.
///
/// `points` live in the first `D` axes of `lift`. Returns `Ok(None)` when no
/// subset qualifies. Only simplices with one hull facet on each of their
/// facets are considered, so the result is an approximation of the true
/// minimum.
pub fn min_enclosing_simplex(
    points: &[Vec<f64>],
    lift: &PcaBasis,
    cfg: &OptimizerConfig,
) -> Result<Option<Simplex>> {
    Ok(search_min_simplex(points, lift, cfg)?.simplex)
}

pub fn search_min_simplex(
    points: &[Vec<f64>],
    lift: &PcaBasis,
    cfg: &OptimizerConfig,
) -> Result<SimplexSearch> {
    let d = points.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::Precondition("simplex search needs D >= 1".into()));
    }
    let hull = match hull_facets_bounded(points, DENSE_HULL_FACETS)? {
        Some(h) => h,
        None => support_hull(points)?,
    };
    Ok(search_over_hull(points, &hull, d, lift, cfg))
}

/// Facet directions of the hull of a farthest-point sample, each moved out
/// to touch the full set. Every point counts as a hull vertex.
fn support_hull(points: &[Vec<f64>]) -> Result<Hull> {
    let mut nearest = vec![f64::INFINITY; points.len()];
    let mut sample = Vec::with_capacity(THIN_POINTS);
    let mut next = (0..points.len())
        .min_by(|&a, &b| points[a][0].total_cmp(&points[b][0]))
        .unwrap_or(0);
    while sample.len() < THIN_POINTS.min(points.len()) {
        sample.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let gap: f64 = p
                .iter()
                .zip(&points[next])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            nearest[i] = nearest[i].min(gap);
        }
        next = (0..points.len())
            .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a)))
            .unwrap();
    }
    let coarse = hull_facets(&sample)?;
    let facets = coarse
        .facets
        .into_iter()
        .map(|h| {
            let offset = points
                .iter()
                .map(|p| super::linalg::dot(&h.normal, p))
                .fold(f64::NEG_INFINITY, f64::max);
            Hyperplane {
                normal: h.normal,
                offset,
            }
        })
        .collect();
    Ok(Hull {
        facets,
        vertices: (0..points.len()).collect(),
    })
}

fn search_over_hull(
    points: &[Vec<f64>],
    hull: &Hull,
    d: usize,
    lift: &PcaBasis,
    cfg: &OptimizerConfig,
) -> SimplexSearch {
    let selected;
    let planes: &[Hyperplane] = match cfg.max_subsets.map(|b| planes_within_budget(b, d + 1)) {
        Some(m) if hull.facets.len() > m => {
            selected = spread_subset(&hull.facets, m);
            &selected
        }
        _ => &hull.facets,
    };
    let f = planes.len();
    let hull_points: Vec<&[f64]> = hull
        .vertices
        .iter()
        .map(|&i| points[i].as_slice())
        .collect();
    let mut en = Enumerator {
        planes,
        d,
        lift,
        cfg,
        corners: FxHashMap::default(),
    };
    let depth: Vec<f64> = planes
        .iter()
        .map(|h| {
            hull_points
                .iter()
                .map(|p| h.signed_distance(p))
                .fold(0.0, f64::min)
        })
        .collect();
    let mut walk = Walk {
        en: &mut en,
        hull_points: &hull_points,
        depth: &depth,
        f,
        best: None,
        tested: 0,
        capped: false,
        subset: vec![0; d + 1],
    };
    if f > d {
        walk.descend(0, 0);
    }
    let (best, tested, capped) = (walk.best, walk.tested, walk.capped);

    SimplexSearch {
        simplex: if capped { None } else { best },
        facet_count: hull.facets.len(),
        candidates_tested: tested,
        capped,
    }
}

/// Depth-first walk over increasing index tuples. The corner opposite the
/// last plane depends only on the first `D` planes, so an infeasible prefix
/// prunes every extension.
struct Walk<'e, 'a> {
    en: &'e mut Enumerator<'a>,
    hull_points: &'e [&'e [f64]],
    /// Most negative signed distance of a hull point to each plane.
    depth: &'e [f64],
    f: usize,
    best: Option<Simplex>,
    tested: usize,
    capped: bool,
    subset: Vec<usize>,
}

impl Walk<'_, '_> {
    fn descend(&mut self, depth: usize, start: usize) {
        let d = self.en.d;
        if self.capped {
            return;
        }
        if depth == d {
            let Some(apex) = self.en.corner(&self.subset[..d]) else {
                return;
            };
            for last in start..self.f {
                if let Some(limit) = self.en.cfg.max_candidates {
                    if self.tested >= limit {
                        self.capped = true;
                        return;
                    }
                }
                self.tested += 1;
                // apex beyond the last plane puts the simplex on the wrong
                // side of a hull facet, so some hull point is left outside
                let plane = &self.en.planes[last];
                if plane.signed_distance(&apex[..d]) > 0.0
                    && self.depth[last] < -ENCLOSURE_TOLERANCE
                {
                    continue;
                }
                self.subset[d] = last;
                if let Some(c) = evaluate(
                    self.en,
                    &self.subset,
                    self.hull_points,
                    self.depth,
                    self.best.as_ref(),
                ) {
                    self.best = Some(c);
                }
            }
            return;
        }
        for i in start..self.f - (d - depth) {
            self.subset[depth] = i;
            self.descend(depth + 1, i + 1);
        }
    }
}

/// Largest plane count whose `size`-subsets number at most `budget`, and
/// never below `size`.
fn planes_within_budget(budget: usize, size: usize) -> usize {
    let subsets = |m: usize| (0..size).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64);
    let mut m = size;
    while subsets(m + 1) <= budget as f64 {
        m += 1;
    }
    m
}

/// Greedy farthest-point choice of `m` planes by normal direction, starting
/// from the first.
fn spread_subset(planes: &[Hyperplane], m: usize) -> Vec<Hyperplane> {
    let mut nearest: Vec<f64> = vec![f64::INFINITY; planes.len()];
    let mut chosen = Vec::with_capacity(m);
    let mut next = 0;
    while chosen.len() < m {
        chosen.push(next);
        let n = &planes[next].normal;
        for (i, p) in planes.iter().enumerate() {
            let gap = 1.0 - super::linalg::dot(n, &p.normal);
            if gap < nearest[i] {
                nearest[i] = gap;
            }
        }
        next = (0..planes.len())
            .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a)))
            .unwrap();
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| planes[i].clone()).collect()
}

fn evaluate(
    en: &mut Enumerator<'_>,
    subset: &[usize],
    hull_points: &[&[f64]],
    depth: &[f64],
    best: Option<&Simplex>,
) -> Option<Simplex> {
    let d = en.d;
    let mut corners = [[0.0; MAX_DIM]; MAX_DIM + 1];
    let mut others = [0usize; MAX_DIM];
    for skip in 0..=d {
        let mut n = 0;
        for (i, &p) in subset.iter().enumerate() {
            if i != skip {
                others[n] = p;
                n += 1;
            }
        }
        corners[skip] = en.corner(&others[..d])?;
        // a vertex beyond its opposite plane leaves the hull partly outside
        let plane = &en.planes[subset[skip]];
        if plane.signed_distance(&corners[skip][..d]) > 0.0
            && depth[subset[skip]] < -ENCLOSURE_TOLERANCE
        {
            return None;
        }
    }
    let mut m = ZERO_MAT;
    for i in 0..d {
        for j in 0..d {
            m[i][j] = corners[i + 1][j] - corners[0][j];
        }
    }
    let volume = det(&m, d).abs() / factorial(d);
    if !(volume > 0.0) || !volume.is_finite() {
        return None;
    }
    let vertices: Vec<Vec<f64>> = corners[..=d].iter().map(|c| c[..d].to_vec()).collect();
    if let Some(b) = best {
        let scale = b.volume.max(volume);
        if volume > b.volume + TIE_TOLERANCE * scale {
            return None;
        }
        if (volume - b.volume).abs() <= TIE_TOLERANCE * scale
            && vertex_order(&vertices, &b.vertices) != Ordering::Less
        {
            return None;
        }
    }
    let candidate = Simplex { vertices, volume };
    let facets = candidate.facet_planes();
    let encloses = hull_points.iter().all(|p| {
        facets
            .iter()
            .all(|h| h.signed_distance(p) <= ENCLOSURE_TOLERANCE)
    });
    encloses.then_some(candidate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barycentric_of_vertices_and_centroid() {
        let s = Simplex::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!((s.volume - 0.5).abs() < 1e-15);
        let b = barycentric_coords(&[1.0, 0.0], &s).unwrap();
        assert!((b[0]).abs() < 1e-15 && (b[1] - 1.0).abs() < 1e-15 && b[2].abs() < 1e-15);
        let c = barycentric_coords(&[1.0 / 3.0, 1.0 / 3.0], &s).unwrap();
        for x in c {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_simplex_is_rejected() {
        let s = Simplex::new(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]);
        assert!(barycentric_coords(&[0.5, 0.5], &s).is_err());
    }

    #[test]
    fn standard_triangle_is_its_own_minimum() {
        let mut pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        pts.extend([vec![0.2, 0.3], vec![0.5, 0.1], vec![0.1, 0.6]]);
        let s = min_enclosing_simplex(&pts, &PcaBasis::identity(2), &OptimizerConfig::default())
            .unwrap()
            .unwrap();
        assert!((s.volume - 0.5).abs() < 1e-12);
        let mut v = s.vertices.clone();
        v.sort_by(|a, b| lex(a, b));
        let expect = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        for (got, want) in v.iter().zip(expect) {
            assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn interval_is_the_unique_one_simplex() {
        let pts = vec![vec![0.1], vec![0.5], vec![0.9]];
        let s = min_enclosing_simplex(&pts, &PcaBasis::identity(1), &OptimizerConfig::default())
            .unwrap()
            .unwrap();
        let mut ends = [s.vertices[0][0], s.vertices[1][0]];
        ends.sort_by(f64::total_cmp);
        assert!((ends[0] - 0.1).abs() < 1e-15 && (ends[1] - 0.9).abs() < 1e-15);
        assert!((s.volume - 0.8).abs() < 1e-12);
    }

    #[test]
    fn square_hull_inside_standard_triangle() {
        // every triple of square sides contains a parallel pair
        let pts = vec![
            vec![0.2, 0.2],
            vec![0.4, 0.2],
            vec![0.4, 0.4],
            vec![0.2, 0.4],
        ];
        let r = min_enclosing_simplex(&pts, &PcaBasis::identity(2), &OptimizerConfig::default())
            .unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn enumeration_cap_reports_no_solution() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.3, 0.3],
        ];
        let cfg = OptimizerConfig {
            max_candidates: Some(0),
            ..OptimizerConfig::default()
        };
        let r = search_min_simplex(&pts, &PcaBasis::identity(2), &cfg).unwrap();
        assert!(r.capped && r.simplex.is_none());
    }
}
