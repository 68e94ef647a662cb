//! Volumetric mixing-ratio fields: procedural sources and painted 3D textures.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mix::MixRatio;

/// Header value identifying the texture file layout.
pub const TEXTURE_FORMAT: &str = "strata-texture/1";

/// Voxel validation tolerance; smaller deviations are renormalized away.
const VOXEL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn pick(self, p: [f64; 3]) -> f64 {
        match self {
            Axis::X => p[0],
            Axis::Y => p[1],
            Axis::Z => p[2],
        }
    }
}

/// One control point of a piecewise-linear gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientStop {
    pub at: f64,
    pub mix: MixRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Filtering {
    Nearest,
    #[default]
    Trilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoundingBox {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// The mixing-ratio field `c(x, y, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Constant {
        mix: MixRatio,
    },
    /// Piecewise-linear blend between stops along a world axis; clamps
    /// beyond the first and last stop.
    AxisGradient {
        axis: Axis,
        stops: Vec<GradientStop>,
    },
    /// Sine stripes wrapped around a vertical axis whose cycle count per
    /// turn grows linearly from `cycles_bottom` to `cycles_top`.
    SineAroundAxis {
        center: [f64; 2],
        mix_a: MixRatio,
        mix_b: MixRatio,
        z_bottom: f64,
        z_top: f64,
        cycles_bottom: f64,
        cycles_top: f64,
    },
    /// Hue wheel: `rim` mixtures are spread evenly around the center and
    /// interpolated cyclically; with `center_mix` the disc blends radially
    /// from it to the rim.
    RadialDisc {
        center: [f64; 2],
        radius: f64,
        rim: Vec<MixRatio>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center_mix: Option<MixRatio>,
    },
    VolumeTexture {
        texture: VolumeTexture,
    },
}

impl FieldSpec {
    pub fn constant(mix: MixRatio) -> Self {
        FieldSpec::Constant { mix }
    }

    pub fn axis_gradient(axis: Axis, from: (f64, MixRatio), to: (f64, MixRatio)) -> Self {
        FieldSpec::AxisGradient {
            axis,
            stops: vec![
                GradientStop {
                    at: from.0,
                    mix: from.1,
                },
                GradientStop {
                    at: to.0,
                    mix: to.1,
                },
            ],
        }
    }

    /// A sine field whose narrowest stripe on a cylinder of `radius`
    /// reaches `min_stripe_width` at `z_top`.
    pub fn increasing_sine(
        center: [f64; 2],
        radius: f64,
        mix_a: MixRatio,
        mix_b: MixRatio,
        z_range: (f64, f64),
        cycles_bottom: f64,
        min_stripe_width: f64,
    ) -> Self {
        FieldSpec::SineAroundAxis {
            center,
            mix_a,
            mix_b,
            z_bottom: z_range.0,
            z_top: z_range.1,
            cycles_bottom,
            // one stripe is half a period: pi * r / n
            cycles_top: PI * radius / min_stripe_width,
        }
    }

    /// Filament count of the field's mixtures.
    pub fn k(&self) -> usize {
        match self {
            FieldSpec::Constant { mix } => mix.k(),
            FieldSpec::AxisGradient { stops, .. } => stops.first().map_or(0, |s| s.mix.k()),
            FieldSpec::SineAroundAxis { mix_a, .. } => mix_a.k(),
            FieldSpec::RadialDisc { rim, .. } => rim.first().map_or(0, |m| m.k()),
            FieldSpec::VolumeTexture { texture } => texture.k,
        }
    }

    /// Checks that every embedded mixture agrees on K and the kind's
    /// parameters are usable.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k < 2 {
            return Err(Error::Validation("field has no mixtures".into()));
        }
        let same_k = |m: &MixRatio| {
            if m.k() == k {
                Ok(())
            } else {
                Err(Error::Validation(format!(
                    "field mixes filament counts {k} and {}",
                    m.k()
                )))
            }
        };
        match self {
            FieldSpec::Constant { .. } => {}
            FieldSpec::AxisGradient { stops, .. } => {
                if stops.len() < 2 {
                    return Err(Error::Validation("axis gradient needs 2 stops".into()));
                }
                for pair in stops.windows(2) {
                    if !(pair[1].at > pair[0].at) {
                        return Err(Error::Validation(
                            "axis gradient stops must be strictly increasing".into(),
                        ));
                    }
                }
                stops.iter().try_for_each(|s| same_k(&s.mix))?;
            }
            FieldSpec::SineAroundAxis {
                mix_b,
                z_bottom,
                z_top,
                cycles_bottom,
                cycles_top,
                ..
            } => {
                same_k(mix_b)?;
                if !(z_top >= z_bottom) || *cycles_bottom < 0.0 || *cycles_top < 0.0 {
                    return Err(Error::Validation("bad sine field parameters".into()));
                }
            }
            FieldSpec::RadialDisc {
                radius,
                rim,
                center_mix,
                ..
            } => {
                if !(*radius > 0.0) {
                    return Err(Error::Validation("disc radius must be positive".into()));
                }
                rim.iter().try_for_each(same_k)?;
                if let Some(c) = center_mix {
                    same_k(c)?;
                }
            }
            FieldSpec::VolumeTexture { texture } => texture.validate()?,
        }
        Ok(())
    }

    /// Samples the field. Always yields a valid ratio; points outside a
    /// texture's box are clamped to its edge.
    pub fn sample(&self, p: [f64; 3]) -> MixRatio {
        match self {
            FieldSpec::Constant { mix } => mix.clone(),
            FieldSpec::AxisGradient { axis, stops } => {
                let t = axis.pick(p);
                sample_stops(stops, t)
            }
            FieldSpec::SineAroundAxis {
                center,
                mix_a,
                mix_b,
                ..
            } => {
                let cycles = self.sine_cycles_at(p[2]);
                let theta = angle_from(*center, p);
                let t = 0.5 + 0.5 * (cycles * theta).sin();
                mix_a.lerp(mix_b, t)
            }
            FieldSpec::RadialDisc {
                center,
                radius,
                rim,
                center_mix,
            } => {
                let theta = angle_from(*center, p);
                let m = rim.len();
                let hue = if m == 1 {
                    rim[0].clone()
                } else {
                    let s = theta / TAU * m as f64;
                    let i = (s.floor() as usize).min(m - 1);
                    rim[i].lerp(&rim[(i + 1) % m], s - i as f64)
                };
                match center_mix {
                    Some(c) => {
                        let r = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
                        c.lerp(&hue, (r / radius).min(1.0))
                    }
                    None => hue,
                }
            }
            FieldSpec::VolumeTexture { texture } => texture.sample(p),
        }
    }

    fn sine_cycles_at(&self, z: f64) -> f64 {
        match self {
            FieldSpec::SineAroundAxis {
                z_bottom,
                z_top,
                cycles_bottom,
                cycles_top,
                ..
            } => {
                let span = z_top - z_bottom;
                let t = if span > 0.0 {
                    ((z - z_bottom) / span).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                cycles_bottom + (cycles_top - cycles_bottom) * t
            }
            _ => 0.0,
        }
    }

    /// Distance from `p` to the nearest discontinuity of the field in the
    /// horizontal plane through `p`, or `None` when the field is continuous
    /// there.
    pub fn distance_to_discontinuity(&self, p: [f64; 3]) -> Option<f64> {
        match self {
            FieldSpec::SineAroundAxis { center, .. } => {
                let cycles = self.sine_cycles_at(p[2]);
                if (cycles - cycles.round()).abs() < 1e-9 {
                    return None;
                }
                // wrap seam along the ray theta = 0
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                Some(if dx >= 0.0 { dy.abs() } else { dx.hypot(dy) })
            }
            FieldSpec::RadialDisc {
                center,
                center_mix: None,
                ..
            } => Some((p[0] - center[0]).hypot(p[1] - center[1])),
            FieldSpec::VolumeTexture { texture } if texture.filtering == Filtering::Nearest => {
                Some(texture.distance_to_voxel_face(p))
            }
            _ => None,
        }
    }
}

fn angle_from(center: [f64; 2], p: [f64; 3]) -> f64 {
    let a = (p[1] - center[1]).atan2(p[0] - center[0]);
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

fn sample_stops(stops: &[GradientStop], t: f64) -> MixRatio {
    let first = &stops[0];
    let last = &stops[stops.len() - 1];
    if t <= first.at {
        return first.mix.clone();
    }
    if t >= last.at {
        return last.mix.clone();
    }
    let i = stops.partition_point(|s| s.at <= t).saturating_sub(1);
    let (a, b) = (&stops[i], &stops[i + 1]);
    a.mix.lerp(&b.mix, (t - a.at) / (b.at - a.at))
}

/// A dense voxel grid of mixing ratios enclosing the object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TextureFile", into = "TextureFile")]
pub struct VolumeTexture {
    pub dims: [usize; 3],
    pub bbox: BoundingBox,
    pub k: usize,
    pub filtering: Filtering,
    /// `k` weights per voxel, x fastest then y then z.
    data: Vec<f64>,
}

impl VolumeTexture {
    pub fn new(
        dims: [usize; 3],
        bbox: BoundingBox,
        filtering: Filtering,
        voxels: Vec<MixRatio>,
    ) -> Result<Self> {
        let count: usize = dims.iter().product();
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Validation(format!(
                "texture dimensions {dims:?} must be at least 1"
            )));
        }
        if voxels.len() != count {
            return Err(Error::Validation(format!(
                "texture has {} voxels, dims {dims:?} require {count}",
                voxels.len()
            )));
        }
        let k = voxels[0].k();
        let mut data = Vec::with_capacity(count * k);
        for (i, v) in voxels.iter().enumerate() {
            if v.k() != k {
                return Err(Error::Validation(format!(
                    "voxel {i} has {} components, expected {k}",
                    v.k()
                )));
            }
            data.extend_from_slice(v.weights());
        }
        let tex = VolumeTexture {
            dims,
            bbox,
            k,
            filtering,
            data,
        };
        tex.validate()?;
        Ok(tex)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.bbox.max[i] > self.bbox.min[i]) {
                return Err(Error::Validation(format!(
                    "texture bbox is empty along axis {i}"
                )));
            }
        }
        if self.k < 2 || self.data.len() != self.dims.iter().product::<usize>() * self.k {
            return Err(Error::Validation("texture data size mismatch".into()));
        }
        Ok(())
    }

    pub fn voxel(&self, x: usize, y: usize, z: usize) -> &[f64] {
        let i = x + self.dims[0] * (y + self.dims[1] * z);
        &self.data[i * self.k..(i + 1) * self.k]
    }

    fn voxel_size(&self, axis: usize) -> f64 {
        (self.bbox.max[axis] - self.bbox.min[axis]) / self.dims[axis] as f64
    }

    pub fn sample(&self, p: [f64; 3]) -> MixRatio {
        match self.filtering {
            Filtering::Nearest => {
                let idx: Vec<usize> = (0..3)
                    .map(|a| {
                        let u = (p[a] - self.bbox.min[a]) / self.voxel_size(a);
                        (u.floor().max(0.0) as usize).min(self.dims[a] - 1)
                    })
                    .collect();
                MixRatio::clamp_normalize(self.voxel(idx[0], idx[1], idx[2]).to_vec())
            }
            Filtering::Trilinear => {
                let mut lo = [0usize; 3];
                let mut hi = [0usize; 3];
                let mut frac = [0.0; 3];
                for a in 0..3 {
                    // continuous coordinate with voxel centers on integers
                    let u = ((p[a] - self.bbox.min[a]) / self.voxel_size(a) - 0.5)
                        .clamp(0.0, (self.dims[a] - 1) as f64);
                    let l = (u.floor() as usize).min(self.dims[a] - 1);
                    lo[a] = l;
                    hi[a] = (l + 1).min(self.dims[a] - 1);
                    frac[a] = u - l as f64;
                }
                let mut acc = vec![0.0; self.k];
                for corner in 0..8 {
                    let mut w = 1.0;
                    let mut idx = [0usize; 3];
                    for a in 0..3 {
                        if corner >> a & 1 == 1 {
                            w *= frac[a];
                            idx[a] = hi[a];
                        } else {
                            w *= 1.0 - frac[a];
                            idx[a] = lo[a];
                        }
                    }
                    if w == 0.0 {
                        continue;
                    }
                    for (acc, v) in acc.iter_mut().zip(self.voxel(idx[0], idx[1], idx[2])) {
                        *acc += w * v;
                    }
                }
                MixRatio::clamp_normalize(acc)
            }
        }
    }

    /// Horizontal distance to the nearest interior voxel boundary.
    fn distance_to_voxel_face(&self, p: [f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..2 {
            if self.dims[a] < 2 {
                continue;
            }
            let size = self.voxel_size(a);
            let u = ((p[a] - self.bbox.min[a]) / size).clamp(0.0, self.dims[a] as f64);
            let nearest = u.round().clamp(1.0, (self.dims[a] - 1) as f64);
            best = best.min((u - nearest).abs() * size);
        }
        best
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TextureFile = serde_json::from_str(text).map_err(|e| {
            Error::parse(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        VolumeTexture::try_from(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TextureFile::from(self.clone())).expect("texture serializes")
    }
}

/// On-disk texture layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextureFile {
    pub format: String,
    pub dims: [usize; 3],
    pub bbox: BoundingBox,
    pub k: usize,
    #[serde(default)]
    pub filtering: Filtering,
    pub voxels: Vec<Vec<f64>>,
}

impl TryFrom<TextureFile> for VolumeTexture {
    type Error = Error;

    fn try_from(file: TextureFile) -> Result<Self> {
        if file.format != TEXTURE_FORMAT {
            return Err(Error::parse(
                "header",
                format!("unsupported texture format {:?}", file.format),
            ));
        }
        let [nx, ny, _] = file.dims;
        let mut voxels = Vec::with_capacity(file.voxels.len());
        for (i, v) in file.voxels.into_iter().enumerate() {
            let locus = || {
                let (x, y, z) = (
                    i % nx.max(1),
                    i / nx.max(1) % ny.max(1),
                    i / (nx * ny).max(1),
                );
                format!("voxel {i} ({x},{y},{z})")
            };
            if v.len() != file.k {
                return Err(Error::parse(
                    locus(),
                    format!("has {} components, header says k = {}", v.len(), file.k),
                ));
            }
            let mix = MixRatio::normalized(v, VOXEL_TOLERANCE)
                .map_err(|e| Error::parse(locus(), e.to_string()))?;
            voxels.push(mix);
        }
        VolumeTexture::new(file.dims, file.bbox, file.filtering, voxels)
    }
}

impl From<VolumeTexture> for TextureFile {
    fn from(t: VolumeTexture) -> Self {
        TextureFile {
            format: TEXTURE_FORMAT.to_string(),
            dims: t.dims,
            bbox: t.bbox,
            k: t.k,
            filtering: t.filtering,
            voxels: t.data.chunks(t.k).map(|c| c.to_vec()).collect(),
        }
    }
}
