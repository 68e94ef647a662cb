//! Convex hull facets in low dimension (quickhull with simplicial facets).

use std::collections::HashMap;

use super::linalg::{dot, hyperplane_normal, MAX_DIM};
use crate::error::{Error, Result};

/// Points closer than this to a facet plane count as on it.
const PLANE_EPS: f64 = 1e-11;

/// Facet planes closer than this (normal components and offset) are merged.
const MERGE_EPS: f64 = 1e-9;

/// Supporting hyperplane `normal . x = offset`, with the hull on the side
/// `normal . x <= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }
}

#[derive(Debug, Clone)]
pub struct Hull {
    /// Distinct facet hyperplanes; coplanar simplicial facets are merged.
    pub facets: Vec<Hyperplane>,
    /// Indices of the input points that are hull vertices.
    pub vertices: Vec<usize>,
}

struct Facet {
    verts: Vec<usize>,
    plane: Hyperplane,
    /// `neighbors[i]` shares the ridge opposite `verts[i]`.
    neighbors: Vec<usize>,
    outside: Vec<usize>,
    alive: bool,
}

/// Hull facets of points spanning `D` dimensions. `D = 1` yields the two
/// interval ends.
pub fn hull_facets(points: &[Vec<f64>]) -> Result<Hull> {
    hull_facets_bounded(points, usize::MAX)?
        .ok_or_else(|| Error::Internal("unbounded hull gave up".into()))
}

/// Like [`hull_facets`], but gives up with `None` as soon as more than
/// `max_facets` facets are alive during construction.
pub fn hull_facets_bounded(points: &[Vec<f64>], max_facets: usize) -> Result<Option<Hull>> {
    let d = points.first().map_or(0, Vec::len);
    if d == 0 || d > MAX_DIM {
        return Err(Error::Internal(format!(
            "hull in dimension {d} not supported"
        )));
    }
    if points.len() < d + 1 {
        return Err(Error::Internal(format!(
            "{} points cannot span dimension {d}",
            points.len()
        )));
    }
    if d == 1 {
        return interval_hull(points).map(Some);
    }
    QuickHull::new(points, d)?.run(max_facets)
}

fn interval_hull(points: &[Vec<f64>]) -> Result<Hull> {
    let (mut lo, mut hi) = (0, 0);
    for (i, p) in points.iter().enumerate() {
        if p[0] < points[lo][0] {
            lo = i;
        }
        if p[0] > points[hi][0] {
            hi = i;
        }
    }
    if !(points[hi][0] - points[lo][0] > PLANE_EPS) {
        return Err(Error::Internal("degenerate interval hull".into()));
    }
    Ok(Hull {
        facets: vec![
            Hyperplane {
                normal: vec![-1.0],
                offset: -points[lo][0],
            },
            Hyperplane {
                normal: vec![1.0],
                offset: points[hi][0],
            },
        ],
        vertices: vec![lo, hi],
    })
}

struct QuickHull<'a> {
    points: &'a [Vec<f64>],
    d: usize,
    interior: Vec<f64>,
    facets: Vec<Facet>,
}

impl<'a> QuickHull<'a> {
    fn new(points: &'a [Vec<f64>], d: usize) -> Result<Self> {
        let simplex = initial_simplex(points, d)?;
        let mut interior = vec![0.0; d];
        for &i in &simplex {
            for (c, x) in interior.iter_mut().zip(&points[i]) {
                *c += x / (d + 1) as f64;
            }
        }
        let mut hull = QuickHull {
            points,
            d,
            interior,
            facets: Vec::new(),
        };
        for skip in 0..=d {
            let verts: Vec<usize> = simplex
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != skip)
                .map(|(_, &v)| v)
                .collect();
            let plane = hull
                .plane_through(&verts)
                .ok_or_else(|| Error::Internal("degenerate initial simplex".into()))?;
            // facet `skip` borders facet `j` across the ridge missing simplex[j]
            let neighbors = (0..=d).filter(|j| *j != skip).collect();
            hull.facets.push(Facet {
                verts,
                plane,
                neighbors,
                outside: Vec::new(),
                alive: true,
            });
        }
        let mut taken = vec![false; points.len()];
        for &i in &simplex {
            taken[i] = true;
        }
        let all: Vec<usize> = (0..points.len()).filter(|i| !taken[*i]).collect();
        let initial: Vec<usize> = (0..=d).collect();
        hull.assign(&all, &initial);
        Ok(hull)
    }

    fn plane_through(&self, verts: &[usize]) -> Option<Hyperplane> {
        let pts: Vec<&[f64]> = verts.iter().map(|&v| self.points[v].as_slice()).collect();
        let mut normal = hyperplane_normal(&pts, self.d)?;
        let mut offset = dot(&normal, pts[0]);
        if dot(&normal, &self.interior) - offset > 0.0 {
            normal.iter_mut().for_each(|x| *x = -*x);
            offset = -offset;
        }
        Some(Hyperplane { normal, offset })
    }

    fn assign(&mut self, candidates: &[usize], facets: &[usize]) {
        for &p in candidates {
            for &f in facets {
                if self.facets[f].plane.signed_distance(&self.points[p]) > PLANE_EPS {
                    self.facets[f].outside.push(p);
                    break;
                }
            }
        }
    }

    fn run(mut self, max_facets: usize) -> Result<Option<Hull>> {
        let mut stack: Vec<usize> = (0..self.facets.len()).collect();
        let mut alive = self.facets.len();
        while let Some(f) = stack.pop() {
            if !self.facets[f].alive || self.facets[f].outside.is_empty() {
                continue;
            }
            let apex = *self.facets[f]
                .outside
                .iter()
                .max_by(|&&a, &&b| {
                    let pa = self.facets[f].plane.signed_distance(&self.points[a]);
                    let pb = self.facets[f].plane.signed_distance(&self.points[b]);
                    pa.total_cmp(&pb).then(b.cmp(&a))
                })
                .unwrap();
            let (created, removed) = self.add_point(f, apex)?;
            alive = alive + created.len() - removed;
            if alive > max_facets {
                return Ok(None);
            }
            stack.extend(created);
        }

        let alive: Vec<&Facet> = self.facets.iter().filter(|f| f.alive).collect();
        let mut vertices: Vec<usize> = alive.iter().flat_map(|f| f.verts.iter().copied()).collect();
        vertices.sort_unstable();
        vertices.dedup();
        Ok(Some(Hull {
            facets: merge_planes(alive.iter().map(|f| f.plane.clone()).collect()),
            vertices,
        }))
    }

    /// Inserts `apex`, which lies outside facet `start`; returns the new
    /// facet ids and the number of facets removed.
    fn add_point(&mut self, start: usize, apex: usize) -> Result<(Vec<usize>, usize)> {
        let points = self.points;
        let p = &points[apex];
        let mut visible = vec![start];
        let mut seen: HashMap<usize, bool> = HashMap::from([(start, true)]);
        let mut horizon: Vec<(Vec<usize>, usize)> = Vec::new();
        let mut i = 0;
        while i < visible.len() {
            let f = visible[i];
            i += 1;
            for k in 0..self.d {
                let g = self.facets[f].neighbors[k];
                let is_visible = match seen.get(&g) {
                    Some(&v) => v,
                    None => {
                        let v = self.facets[g].plane.signed_distance(p) > PLANE_EPS;
                        seen.insert(g, v);
                        if v {
                            visible.push(g);
                        }
                        v
                    }
                };
                if !is_visible {
                    let ridge: Vec<usize> = self.facets[f]
                        .verts
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != k)
                        .map(|(_, &v)| v)
                        .collect();
                    horizon.push((ridge, g));
                }
            }
        }

        let mut orphans = Vec::new();
        for &f in &visible {
            self.facets[f].alive = false;
            orphans.append(&mut self.facets[f].outside);
        }

        let first_new = self.facets.len();
        let mut open_ridges: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
        for (ridge, outer) in horizon {
            let mut verts = ridge.clone();
            verts.push(apex);
            let plane = self.plane_through(&verts).ok_or_else(|| {
                Error::Internal("degenerate facet during hull construction".into())
            })?;
            let id = self.facets.len();
            let mut neighbors = vec![usize::MAX; self.d];
            neighbors[self.d - 1] = outer;
            // point the outer facet back at the new one
            let outer_facet = &mut self.facets[outer];
            let slot = outer_facet
                .verts
                .iter()
                .position(|v| !ridge.contains(v))
                .ok_or_else(|| Error::Internal("horizon ridge mismatch".into()))?;
            outer_facet.neighbors[slot] = id;
            for k in 0..self.d - 1 {
                let mut key: Vec<usize> = verts
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .map(|(_, &v)| v)
                    .collect();
                key.sort_unstable();
                if let Some((other, other_slot)) = open_ridges.remove(&key) {
                    neighbors[k] = other;
                    self.facets[other].neighbors[other_slot] = id;
                } else {
                    open_ridges.insert(key, (id, k));
                }
            }
            self.facets.push(Facet {
                verts,
                plane,
                neighbors,
                outside: Vec::new(),
                alive: true,
            });
        }
        if !open_ridges.is_empty() {
            return Err(Error::Internal("hull cone left open ridges".into()));
        }
        let created: Vec<usize> = (first_new..self.facets.len()).collect();
        orphans.retain(|&o| o != apex);
        self.assign(&orphans, &created);
        Ok((created, visible.len()))
    }
}

/// Greedy choice of `d + 1` points spanning the widest simplex.
fn initial_simplex(points: &[Vec<f64>], d: usize) -> Result<Vec<usize>> {
    let first = (0..points.len())
        .min_by(|&a, &b| points[a][0].total_cmp(&points[b][0]))
        .unwrap();
    let mut chosen = vec![first];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let origin = &points[first];
    while chosen.len() < d + 1 {
        let mut best = (usize::MAX, 0.0);
        for (i, p) in points.iter().enumerate() {
            let mut r: Vec<f64> = p.iter().zip(origin).map(|(a, b)| a - b).collect();
            for b in &basis {
                let c = dot(&r, b);
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let dist = dot(&r, &r).sqrt();
            if dist > best.1 {
                best = (i, dist);
            }
        }
        if best.0 == usize::MAX || best.1 <= 1e-9 {
            return Err(Error::Internal(format!("points do not span dimension {d}")));
        }
        let mut r: Vec<f64> = points[best.0]
            .iter()
            .zip(origin)
            .map(|(a, b)| a - b)
            .collect();
        for b in &basis {
            let c = dot(&r, b);
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let len = dot(&r, &r).sqrt();
        basis.push(r.into_iter().map(|x| x / len).collect());
        chosen.push(best.0);
    }
    Ok(chosen)
}

/// Collapses facet planes that coincide within `MERGE_EPS`.
fn merge_planes(mut planes: Vec<Hyperplane>) -> Vec<Hyperplane> {
    planes.sort_by(|a, b| {
        a.normal
            .iter()
            .zip(&b.normal)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.offset.total_cmp(&b.offset))
    });
    let same = |q: &Hyperplane, p: &Hyperplane| {
        q.normal
            .iter()
            .zip(&p.normal)
            .all(|(a, b)| (a - b).abs() <= MERGE_EPS)
            && (q.offset - p.offset).abs() <= MERGE_EPS
    };
    let mut merged: Vec<Hyperplane> = Vec::with_capacity(planes.len());
    for p in planes {
        let twin = merged
            .iter_mut()
            .rev()
            .take_while(|q| q.normal[0] >= p.normal[0] - MERGE_EPS)
            .find(|q| same(q, &p));
        match twin {
            Some(q) => q.offset = q.offset.max(p.offset),
            None => merged.push(p),
        }
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_encloses(hull: &Hull, points: &[Vec<f64>]) {
        for f in &hull.facets {
            assert!((dot(&f.normal, &f.normal) - 1.0).abs() < 1e-9);
            for p in points {
                assert!(
                    f.signed_distance(p) <= 1e-9,
                    "point outside facet by {}",
                    f.signed_distance(p)
                );
            }
        }
    }

    #[test]
    fn interval_hull_ends() {
        let pts = vec![vec![0.4], vec![0.1], vec![0.9]];
        let h = hull_facets(&pts).unwrap();
        assert_eq!(h.facets.len(), 2);
        assert_eq!(h.facets[0].normal, vec![-1.0]);
        assert!((h.facets[0].offset + 0.1).abs() < 1e-15);
        assert!((h.facets[1].offset - 0.9).abs() < 1e-15);
    }

    #[test]
    fn square_has_four_facets() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![0.5, 0.5],
        ];
        let h = hull_facets(&pts).unwrap();
        assert_eq!(h.facets.len(), 4);
        assert_eq!(h.vertices, vec![0, 1, 2, 3]);
        assert_encloses(&h, &pts);
    }

    #[test]
    fn cube_facets_merge_to_six_planes() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(vec![
                (i & 1) as f64,
                (i >> 1 & 1) as f64,
                (i >> 2 & 1) as f64,
            ]);
        }
        pts.push(vec![0.5, 0.5, 0.5]);
        let h = hull_facets(&pts).unwrap();
        assert_eq!(h.facets.len(), 6);
        assert_eq!(h.vertices.len(), 8);
        assert_encloses(&h, &pts);
    }

    #[test]
    fn random_points_are_enclosed_in_every_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in 2..=5 {
            let pts: Vec<Vec<f64>> = (0..300)
                .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let h = hull_facets(&pts).unwrap();
            assert!(h.facets.len() >= d + 1);
            assert_encloses(&h, &pts);
        }
    }

    #[test]
    fn degenerate_span_is_an_error() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(hull_facets(&pts), Err(Error::Internal(_))));
    }
}
