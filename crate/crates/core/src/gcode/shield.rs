use super::machine::MachineConfig;
use crate::toolpath::{Layer, PathRole, PathVertex, Toolpath};

/// Closed shield path around a layer and the track length of one purge.
#[derive(Debug, Clone, PartialEq)]
pub struct OozeShield {
    pub path: Toolpath,
    pub purge_length: f64,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub(crate) fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn offset_polygon(hull: &[[f64; 2]], d: f64) -> Vec<[f64; 2]> {
    let n = hull.len();
    let normal = |i: usize| {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dy);
        [dy / len, -dx / len]
    };
    (0..n)
        .map(|i| {
            let n0 = normal((i + n - 1) % n);
            let n1 = normal(i);
            let k = d / (1.0 + n0[0] * n1[0] + n0[1] * n1[1]);
            [
                hull[i][0] + k * (n0[0] + n1[0]),
                hull[i][1] + k * (n0[1] + n1[1]),
            ]
        })
        .collect()
}

/// Ooze shield: the convex hull of the layer's part paths offset outward by
/// `shield_offset` (mitered corners), printed at full layer thickness.
/// Returns `None` for empty layers.
pub fn build_ooze_shield(layer: &Layer, machine: &MachineConfig) -> Option<OozeShield> {
    let points: Vec<[f64; 2]> = layer
        .part_paths()
        .flat_map(|p| p.vertices.iter().map(|v| [v.position[0], v.position[1]]))
        .collect();
    if points.is_empty() {
        return None;
    }
    let hull = convex_hull_2d(&points);
    let d = machine.shield_offset;
    let area: f64 = if hull.len() >= 3 {
        (1..hull.len() - 1)
            .map(|i| cross(hull[0], hull[i], hull[i + 1]))
            .sum::<f64>()
            / 2.0
    } else {
        0.0
    };
    let outline = if hull.len() >= 3 && area > 1e-9 {
        offset_polygon(&hull, d)
    } else {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        vec![
            [lo[0] - d, lo[1] - d],
            [hi[0] + d, lo[1] - d],
            [hi[0] + d, hi[1] + d],
            [lo[0] - d, hi[1] + d],
        ]
    };
    let w = machine.nozzle_diameter;
    Some(OozeShield {
        path: Toolpath {
            vertices: outline
                .iter()
                .map(|p| PathVertex::new(p[0], p[1], layer.z_top))
                .collect(),
            track_width: w,
            closed: true,
            role: PathRole::Shield,
        },
        purge_length: machine.purge_volume / (w * layer.thickness),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_layer(side: f64) -> Layer {
        let pts = [[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]];
        Layer {
            index: 0,
            z_top: 0.3,
            thickness: 0.3,
            toolpaths: vec![Toolpath {
                vertices: pts
                    .iter()
                    .map(|p| PathVertex::new(p[0], p[1], 0.3))
                    .collect(),
                track_width: 0.4,
                closed: true,
                role: PathRole::Perimeter,
            }],
            plan: None,
        }
    }

    #[test]
    fn square_shield_is_offset_square() {
        let shield = build_ooze_shield(&square_layer(20.0), &MachineConfig::default()).unwrap();
        assert!(shield.path.closed);
        let len = shield.path.length();
        assert!(len >= 80.0);
        assert!((len - 4.0 * 26.0).abs() < 1e-9);
        assert!((shield.purge_length - 7.0 / 0.12).abs() < 1e-9);
        assert!(shield.purge_length >= 58.3);
    }

    #[test]
    fn hull_drops_interior_and_collinear_points() {
        let pts = [
            [0.0, 0.0],
            [1.0, 0.0],
            [2.0, 0.0],
            [2.0, 2.0],
            [1.0, 1.0],
            [0.0, 2.0],
        ];
        assert_eq!(convex_hull_2d(&pts).len(), 4);
    }

    #[test]
    fn degenerate_layer_gets_a_rectangle() {
        let mut layer = square_layer(10.0);
        layer.toolpaths[0].vertices.truncate(2);
        layer.toolpaths[0].closed = false;
        let shield = build_ooze_shield(&layer, &MachineConfig::default()).unwrap();
        assert_eq!(shield.path.vertices.len(), 4);
        assert!((shield.path.length() - (2.0 * 16.0 + 2.0 * 6.0)).abs() < 1e-9);
    }

    #[test]
    fn empty_layer_has_no_shield() {
        let mut layer = square_layer(1.0);
        layer.toolpaths.clear();
        assert!(build_ooze_shield(&layer, &MachineConfig::default()).is_none());
    }
}
