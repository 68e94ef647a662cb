//! Sliced print jobs: layers of polyline deposition paths.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::gcode::MachineConfig;
use crate::mix::MixRatio;
use crate::strata::StrataPlan;

/// Header value of the toolpath file format.
pub const TOOLPATH_FORMAT: &str = "strata-toolpaths/1";

/// Vertices closer than this are considered coincident.
pub const COINCIDENT_EPS: f64 = 1e-6;

/// Tolerance of the uniform layer stacking check, mm.
const STACKING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PathVertex {
    /// `z` is the layer top before strata offsets.
    pub position: [f64; 3],
    /// Field value sampled at this vertex; set by [`resample`].
    pub mix: Option<MixRatio>,
    /// Per-stratum thickness fractions; empty until the layer is optimized.
    pub alphas: Vec<f64>,
}

impl PathVertex {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        PathVertex {
            position: [x, y, z],
            mix: None,
            alphas: Vec::new(),
        }
    }

    pub fn xy_distance(&self, other: &PathVertex) -> f64 {
        (self.position[0] - other.position[0]).hypot(self.position[1] - other.position[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathRole {
    Perimeter,
    Infill,
    Shield,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Toolpath {
    pub vertices: Vec<PathVertex>,
    pub track_width: f64,
    /// Closed paths have an implicit segment from the last vertex back to
    /// the first; the first vertex is not repeated.
    pub closed: bool,
    pub role: PathRole,
}

impl Toolpath {
    /// Index pairs of every segment, including the closing one.
    pub fn segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.vertices.len();
        let count = if self.closed && n > 2 {
            n
        } else {
            n.saturating_sub(1)
        };
        (0..count).map(move |i| (i, (i + 1) % n))
    }

    pub fn length(&self) -> f64 {
        self.segments()
            .map(|(a, b)| self.vertices[a].xy_distance(&self.vertices[b]))
            .sum()
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.vertices.len() < 2 {
            return Err(format!("path has {} vertices, need 2", self.vertices.len()));
        }
        if !(self.track_width > 0.0) {
            return Err(format!("track width {} must be positive", self.track_width));
        }
        for (a, b) in self.segments() {
            if self.vertices[a].xy_distance(&self.vertices[b]) <= COINCIDENT_EPS {
                return Err(format!("vertices {a} and {b} coincide"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub index: usize,
    pub z_top: f64,
    /// Layer thickness T.
    pub thickness: f64,
    pub toolpaths: Vec<Toolpath>,
    pub plan: Option<StrataPlan>,
}

impl Layer {
    pub fn z_base(&self) -> f64 {
        self.z_top - self.thickness
    }

    /// Height at which the field is sampled for this layer.
    pub fn z_mid(&self) -> f64 {
        self.z_top - self.thickness / 2.0
    }

    /// Paths belonging to the part (everything but sacrificial shields).
    pub fn part_paths(&self) -> impl Iterator<Item = &Toolpath> {
        self.toolpaths.iter().filter(|p| p.role != PathRole::Shield)
    }

    pub fn is_empty(&self) -> bool {
        self.part_paths().next().is_none()
    }

    /// Volume deposited when every path is printed at full thickness.
    pub fn deposition_volume(&self) -> f64 {
        self.part_paths()
            .map(|p| p.track_width * self.thickness * p.length())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrintJob {
    pub layers: Vec<Layer>,
    pub machine: MachineConfig,
}

impl PrintJob {
    /// Checks the ordering and stacking invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            if !(layer.thickness > 0.0) {
                return Err(Error::Validation(format!(
                    "layer {i}: thickness {} must be positive",
                    layer.thickness
                )));
            }
            if i > 0 {
                let prev = &self.layers[i - 1];
                if !(layer.z_top > prev.z_top) {
                    return Err(Error::Validation(format!(
                        "layer {i}: z_top {} not above previous layer at {}",
                        layer.z_top, prev.z_top
                    )));
                }
                if (layer.z_top - prev.z_top - layer.thickness).abs() > STACKING_TOLERANCE {
                    return Err(Error::Validation(format!(
                        "layer {i}: z_top {} is not previous z_top {} plus thickness {}",
                        layer.z_top, prev.z_top, layer.thickness
                    )));
                }
            }
            for (j, path) in layer.toolpaths.iter().enumerate() {
                path.check()
                    .map_err(|m| Error::Validation(format!("layer {i} path {j}: {m}")))?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileHeader {
    format: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    index: usize,
    z_top: f64,
    thickness: f64,
    paths: Vec<PathRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathRecord {
    closed: bool,
    track_width: f64,
    role: PathRole,
    vertices: Vec<[f64; 2]>,
}

/// Parses a toolpath file: a header line `{"format": "strata-toolpaths/1"}`
/// followed by one JSON layer record per line. Blank lines are skipped.
pub fn parse_toolpaths(text: &str, machine: MachineConfig) -> Result<PrintJob> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (n, header) = lines
        .next()
        .ok_or_else(|| Error::parse("line 1", "empty toolpath file"))?;
    let header: FileHeader = serde_json::from_str(header)
        .map_err(|e| Error::parse(format!("line {n}"), format!("bad header: {e}")))?;
    if header.format != TOOLPATH_FORMAT {
        return Err(Error::parse(
            format!("line {n}"),
            format!("unsupported format {:?}", header.format),
        ));
    }

    let mut layers = Vec::new();
    for (n, line) in lines {
        let record: LayerRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(format!("line {n}"), e.to_string()))?;
        let mut toolpaths = Vec::with_capacity(record.paths.len());
        for (j, p) in record.paths.into_iter().enumerate() {
            let mut vertices: Vec<PathVertex> = Vec::with_capacity(p.vertices.len());
            for [x, y] in p.vertices {
                if !x.is_finite() || !y.is_finite() {
                    return Err(Error::parse(
                        format!("line {n} path {j}"),
                        "non-finite coordinate",
                    ));
                }
                let v = PathVertex::new(x, y, record.z_top);
                if vertices
                    .last()
                    .is_some_and(|last| last.xy_distance(&v) <= COINCIDENT_EPS)
                {
                    continue;
                }
                vertices.push(v);
            }
            if p.closed
                && vertices.len() > 2
                && vertices[0].xy_distance(vertices.last().unwrap()) <= COINCIDENT_EPS
            {
                vertices.pop();
            }
            let path = Toolpath {
                vertices,
                track_width: p.track_width,
                closed: p.closed,
                role: p.role,
            };
            path.check()
                .map_err(|m| Error::parse(format!("line {n} path {j}"), m))?;
            toolpaths.push(path);
        }
        layers.push(Layer {
            index: record.index,
            z_top: record.z_top,
            thickness: record.thickness,
            toolpaths,
            plan: None,
        });
    }
    let job = PrintJob { layers, machine };
    job.validate()?;
    Ok(job)
}

pub fn load_toolpaths(path: impl AsRef<Path>, machine: MachineConfig) -> Result<PrintJob> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_toolpaths(&text, machine)
}

/// Serializes the job's geometry in the toolpath file format.
pub fn write_toolpaths(job: &PrintJob) -> String {
    let mut out = serde_json::to_string(&FileHeader {
        format: TOOLPATH_FORMAT.to_string(),
    })
    .unwrap();
    out.push('\n');
    for layer in &job.layers {
        let record = LayerRecord {
            index: layer.index,
            z_top: layer.z_top,
            thickness: layer.thickness,
            paths: layer
                .toolpaths
                .iter()
                .map(|p| PathRecord {
                    closed: p.closed,
                    track_width: p.track_width,
                    role: p.role,
                    vertices: p
                        .vertices
                        .iter()
                        .map(|v| [v.position[0], v.position[1]])
                        .collect(),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&record).unwrap());
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Built-in shapes

/// Built-in test geometry. Dimensions in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum TestShape {
    /// Single-wall rectangle with corners `(0, 0)` and `(width, depth)`.
    ExtrudedRectangle { width: f64, depth: f64, height: f64 },
    /// Single circular wall centered on the origin.
    Cylinder { radius: f64, height: f64 },
    /// Concentric perimeters filling a disc centered on the origin.
    Disc { radius: f64, height: f64 },
}

/// Longest chord used to approximate circles.
const CIRCLE_CHORD: f64 = 0.4;

fn circle(radius: f64, z: f64, width: f64) -> Toolpath {
    let n = ((TAU * radius / CIRCLE_CHORD).ceil() as usize).max(16);
    let vertices = (0..n)
        .map(|i| {
            let a = TAU * i as f64 / n as f64;
            PathVertex::new(radius * a.cos(), radius * a.sin(), z)
        })
        .collect();
    Toolpath {
        vertices,
        track_width: width,
        closed: true,
        role: PathRole::Perimeter,
    }
}

pub fn generate_test_shape(
    shape: TestShape,
    layer_thickness: f64,
    machine: MachineConfig,
) -> Result<PrintJob> {
    let (dims, height): (Vec<f64>, f64) = match shape {
        TestShape::ExtrudedRectangle {
            width,
            depth,
            height,
        } => (vec![width, depth], height),
        TestShape::Cylinder { radius, height } | TestShape::Disc { radius, height } => {
            (vec![radius], height)
        }
    };
    if dims
        .iter()
        .chain([&height])
        .any(|d| !(*d > 0.0) || !d.is_finite())
    {
        return Err(Error::Argument(format!(
            "{shape:?}: dimensions must be positive"
        )));
    }
    if !(layer_thickness > 0.0) || layer_thickness > machine.nozzle_diameter {
        return Err(Error::Argument(format!(
            "layer thickness {layer_thickness} outside (0, {}]",
            machine.nozzle_diameter
        )));
    }
    let layer_count = (height / layer_thickness + 1e-9).floor() as usize;
    if layer_count == 0 {
        return Err(Error::Argument(format!(
            "height {height} is below one layer of {layer_thickness}"
        )));
    }
    let width = machine.nozzle_diameter;

    let layers = (0..layer_count)
        .map(|i| {
            let z = (i + 1) as f64 * layer_thickness;
            let toolpaths = match shape {
                TestShape::ExtrudedRectangle {
                    width: w, depth: d, ..
                } => vec![Toolpath {
                    vertices: vec![
                        PathVertex::new(0.0, 0.0, z),
                        PathVertex::new(w, 0.0, z),
                        PathVertex::new(w, d, z),
                        PathVertex::new(0.0, d, z),
                    ],
                    track_width: width,
                    closed: true,
                    role: PathRole::Perimeter,
                }],
                TestShape::Cylinder { radius, .. } => vec![circle(radius, z, width)],
                TestShape::Disc { radius, .. } => {
                    let mut rings = Vec::new();
                    let mut r = radius - width / 2.0;
                    while r >= width / 2.0 {
                        rings.push(circle(r, z, width));
                        r -= width;
                    }
                    if rings.is_empty() {
                        rings.push(circle(radius / 2.0, z, width));
                    }
                    rings
                }
            };
            Layer {
                index: i,
                z_top: z,
                thickness: layer_thickness,
                toolpaths,
                plan: None,
            }
        })
        .collect();
    let job = PrintJob { layers, machine };
    job.validate()?;
    Ok(job)
}

// ---------------------------------------------------------------------------
// Resampling and simplification

/// Subdivides every segment to at most `step` and samples the field at each
/// vertex, at the layer's mid-height. Original vertices are kept.
pub fn resample(layer: &Layer, field: &FieldSpec, step: f64) -> Result<Layer> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Argument(format!(
            "resample step {step} must be positive"
        )));
    }
    let z_sample = layer.z_mid();
    let sample = |x: f64, y: f64| -> Result<MixRatio> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::FieldDomain { x, y, z: z_sample });
        }
        Ok(field.sample([x, y, z_sample]))
    };

    let mut toolpaths = Vec::with_capacity(layer.toolpaths.len());
    for path in &layer.toolpaths {
        let mut vertices = Vec::with_capacity(path.vertices.len());
        let n = path.vertices.len();
        for i in 0..n {
            let a = &path.vertices[i];
            vertices.push(PathVertex {
                position: a.position,
                mix: Some(sample(a.position[0], a.position[1])?),
                alphas: Vec::new(),
            });
            let has_next = i + 1 < n || (path.closed && n > 2);
            if !has_next {
                continue;
            }
            let b = &path.vertices[(i + 1) % n];
            let len = a.xy_distance(b);
            let pieces = ((len / step) - 1e-9).ceil().max(1.0) as usize;
            for s in 1..pieces {
                let t = s as f64 / pieces as f64;
                let x = a.position[0] + (b.position[0] - a.position[0]) * t;
                let y = a.position[1] + (b.position[1] - a.position[1]) * t;
                vertices.push(PathVertex {
                    position: [x, y, a.position[2]],
                    mix: Some(sample(x, y)?),
                    alphas: Vec::new(),
                });
            }
        }
        toolpaths.push(Toolpath {
            vertices,
            track_width: path.track_width,
            closed: path.closed,
            role: path.role,
        });
    }
    Ok(Layer {
        index: layer.index,
        z_top: layer.z_top,
        thickness: layer.thickness,
        toolpaths,
        plan: None,
    })
}

/// Chord parameter of `p` projected on `a -> b`, clamped to `[0, 1]`, and
/// the xy distance from `p` to that point.
fn project_on_chord(a: &PathVertex, b: &PathVertex, p: &PathVertex) -> (f64, f64) {
    let (ax, ay) = (a.position[0], a.position[1]);
    let (dx, dy) = (b.position[0] - ax, b.position[1] - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.position[0] - ax) * dx + (p.position[1] - ay) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (ax + dx * t, ay + dy * t);
    (t, (p.position[0] - qx).hypot(p.position[1] - qy))
}

/// How far `p` strays from the chord `a -> b`, relative to the tolerances.
/// Values above 1 mean the vertex must be kept.
fn deviation_score(
    a: &PathVertex,
    b: &PathVertex,
    p: &PathVertex,
    xy_tol: f64,
    alpha_tol: f64,
) -> f64 {
    let (t, xy) = project_on_chord(a, b, p);
    let alpha = a
        .alphas
        .iter()
        .zip(&b.alphas)
        .zip(&p.alphas)
        .map(|((x, y), v)| (v - (x + (y - x) * t)).abs())
        .fold(0.0, f64::max);
    let rel = |dev: f64, tol: f64| {
        if tol > 0.0 {
            dev / tol
        } else if dev > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    rel(xy, xy_tol).max(rel(alpha, alpha_tol))
}

fn split_keep(
    pts: &[&PathVertex],
    lo: usize,
    hi: usize,
    xy_tol: f64,
    alpha_tol: f64,
    keep: &mut Vec<bool>,
) {
    if hi <= lo + 1 {
        return;
    }
    let mut best = (0, 1.0);
    for i in lo + 1..hi {
        let s = deviation_score(pts[lo], pts[hi], pts[i], xy_tol, alpha_tol);
        if s > best.1 {
            best = (i, s);
        }
    }
    if best.0 != 0 {
        keep[best.0] = true;
        split_keep(pts, lo, best.0, xy_tol, alpha_tol, keep);
        split_keep(pts, best.0, hi, xy_tol, alpha_tol, keep);
    }
}

/// Indices of the vertices kept by [`simplify`].
pub fn simplify_indices(path: &Toolpath, xy_tol: f64, alpha_tol: f64) -> Vec<usize> {
    let n = path.vertices.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut keep = vec![false; n + 1];
    keep[0] = true;
    if path.closed {
        // anchor on the vertex farthest from the start, then treat the loop
        // as two open chains
        let far = (1..n)
            .map(|i| (i, path.vertices[0].xy_distance(&path.vertices[i])))
            .fold(
                (1, f64::NEG_INFINITY),
                |acc, x| if x.1 > acc.1 { x } else { acc },
            )
            .0;
        keep[far] = true;
        let mut pts: Vec<&PathVertex> = path.vertices.iter().collect();
        pts.push(&path.vertices[0]);
        split_keep(&pts, 0, far, xy_tol, alpha_tol, &mut keep);
        split_keep(&pts, far, n, xy_tol, alpha_tol, &mut keep);
        keep.truncate(n);
    } else {
        keep.truncate(n);
        keep[n - 1] = true;
        let pts: Vec<&PathVertex> = path.vertices.iter().collect();
        split_keep(&pts, 0, n - 1, xy_tol, alpha_tol, &mut keep);
    }
    keep.iter()
        .enumerate()
        .filter_map(|(i, k)| k.then_some(i))
        .collect()
}

/// Recursive split simplification on xy position and thickness fractions
/// jointly. A vertex survives when it deviates from its chord by more than
/// `xy_tol` in the plane or more than `alpha_tol` in any fraction.
pub fn simplify(path: &Toolpath, xy_tol: f64, alpha_tol: f64) -> Toolpath {
    let kept = simplify_indices(path, xy_tol, alpha_tol);
    Toolpath {
        vertices: kept.into_iter().map(|i| path.vertices[i].clone()).collect(),
        track_width: path.track_width,
        closed: path.closed,
        role: path.role,
    }
}

/// Volume deposited by `stratum` over the segment `v0 -> v1`: a trapezoid
/// whose thickness varies linearly with the stratum's fraction.
pub fn segment_volume(
    v0: &PathVertex,
    v1: &PathVertex,
    stratum: usize,
    track_width: f64,
    layer_thickness: f64,
) -> f64 {
    let len = v0.xy_distance(v1);
    track_width * layer_thickness * len * (v0.alphas[stratum] + v1.alphas[stratum]) / 2.0
}
