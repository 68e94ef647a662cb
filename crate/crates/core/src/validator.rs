//! Virtual printer: parses mixing G-code, accumulates deposited filament
//! per grid cell and compares the result with the input field.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::gcode::MachineConfig;
use crate::toolpath::PrintJob;

/// Tolerance on the sum of the ratio words of a move.
pub const RATIO_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Part,
    Shield,
    Unmarked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMove {
    /// 1-based source line.
    pub line: usize,
    pub from: [f64; 3],
    pub to: [f64; 3],
    /// Absolute E after the move.
    pub e: f64,
    /// Filament length deposited by this move.
    pub deposited: f64,
    /// mm/min.
    pub feedrate: f64,
    /// Ratios in effect (modal).
    pub ratios: Option<Vec<f64>>,
    pub section: Section,
    /// The command carried X, Y or Z.
    pub moves_head: bool,
}

fn number(word: &str, line: usize) -> Result<f64> {
    word[1..]
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            Error::parse(
                format!("line {line}"),
                format!("bad number in word '{word}'"),
            )
        })
}

/// Parses the emitted dialect: `G1`/`G0` moves with X Y Z E F and ratio
/// words (`letters`, one per filament), plus `G21`, `G90`, `M82` and
/// `M900 K..`. Comments start with `;`; `;TYPE:part` and `;TYPE:shield`
/// mark sections. Ratio words are modal. Filament is deposited only by
/// moves of the head, by the amount E rises above its previous maximum,
/// so retract/prime pairs deposit nothing.
pub fn parse_gcode(text: &str, letters: &[char]) -> Result<Vec<ParsedMove>> {
    let mut moves = Vec::new();
    let mut pos = [0.0f64; 3];
    let mut e = 0.0f64;
    let mut e_high = 0.0f64;
    let mut feedrate = 0.0f64;
    let mut ratios: Option<Vec<f64>> = None;
    let mut section = Section::Unmarked;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let locus = || format!("line {line}");
        let (code, comment) = match raw.find(';') {
            Some(c) => (&raw[..c], Some(raw[c + 1..].trim())),
            None => (raw, None),
        };
        match comment {
            Some("TYPE:part") => section = Section::Part,
            Some("TYPE:shield") => section = Section::Shield,
            _ => {}
        }
        let mut words = code.split_whitespace();
        let Some(cmd) = words.next() else { continue };
        let cmd = cmd.to_ascii_uppercase();
        match cmd.as_str() {
            "G21" | "G90" | "M82" => {
                if let Some(w) = words.next() {
                    return Err(Error::parse(
                        locus(),
                        format!("unexpected word '{w}' after {cmd}"),
                    ));
                }
            }
            "M900" => {
                for w in words {
                    if !w.starts_with(['K', 'k']) {
                        return Err(Error::parse(locus(), format!("unknown word '{w}' in M900")));
                    }
                    number(w, line)?;
                }
            }
            "G0" | "G1" => {
                let mut target = pos;
                let mut new_e = None;
                let mut head = false;
                let mut mix: Vec<Option<f64>> = vec![None; letters.len()];
                for w in words {
                    let letter = w.chars().next().unwrap().to_ascii_uppercase();
                    let v = number(w, line)?;
                    match letter {
                        'X' => {
                            target[0] = v;
                            head = true;
                        }
                        'Y' => {
                            target[1] = v;
                            head = true;
                        }
                        'Z' => {
                            target[2] = v;
                            head = true;
                        }
                        'E' => new_e = Some(v),
                        'F' => feedrate = v,
                        l => match letters.iter().position(|&c| c == l) {
                            Some(k) => mix[k] = Some(v),
                            None => {
                                return Err(Error::parse(locus(), format!("unknown word '{w}'")))
                            }
                        },
                    }
                }
                if mix.iter().any(Option::is_some) {
                    let r: Vec<f64> = mix.iter().map(|m| m.unwrap_or(0.0)).collect();
                    if r.iter().any(|&x| x < 0.0) {
                        return Err(Error::parse(locus(), "negative mixing ratio"));
                    }
                    let sum: f64 = r.iter().sum();
                    if (sum - 1.0).abs() > RATIO_SUM_TOLERANCE {
                        return Err(Error::parse(locus(), format!("mixing ratios sum to {sum}")));
                    }
                    ratios = Some(r);
                }
                let mut deposited = 0.0;
                if let Some(ne) = new_e {
                    if head {
                        if ne < e - 1e-9 {
                            return Err(Error::parse(
                                locus(),
                                format!("E decreases from {e} to {ne} on a move"),
                            ));
                        }
                        if ne > e_high {
                            deposited = ne - e_high;
                        }
                    }
                    e = ne;
                    e_high = e_high.max(ne);
                }
                if deposited > 0.0 && ratios.is_none() {
                    return Err(Error::parse(locus(), "extrusion before any mixing ratio"));
                }
                moves.push(ParsedMove {
                    line,
                    from: pos,
                    to: target,
                    e,
                    deposited,
                    feedrate,
                    ratios: ratios.clone(),
                    section,
                    moves_head: head,
                });
                pos = target;
            }
            other => return Err(Error::parse(locus(), format!("unknown command '{other}'"))),
        }
    }
    Ok(moves)
}

/// Height band of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSlot {
    pub index: usize,
    pub z_top: f64,
    pub thickness: f64,
}

pub fn layer_table(job: &PrintJob) -> Vec<LayerSlot> {
    job.layers
        .iter()
        .map(|l| LayerSlot {
            index: l.index,
            z_top: l.z_top,
            thickness: l.thickness,
        })
        .collect()
}

/// Grid cell `(ix, iy, layer index)`.
pub type CellKey = (i64, i64, usize);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DepositGrid {
    pub cell_size: f64,
    /// Accumulated volume per filament, mm³.
    pub part: HashMap<CellKey, Vec<f64>>,
    pub shield: HashMap<CellKey, Vec<f64>>,
}

impl DepositGrid {
    /// Total deposited volume per filament, shield included.
    pub fn totals(&self, k: usize) -> Vec<f64> {
        let mut t = vec![0.0; k];
        for v in self.part.values().chain(self.shield.values()) {
            for (a, b) in t.iter_mut().zip(v) {
                *a += b;
            }
        }
        t
    }

    pub fn cell_center(&self, key: CellKey) -> [f64; 2] {
        [
            (key.0 as f64 + 0.5) * self.cell_size,
            (key.1 as f64 + 0.5) * self.cell_size,
        ]
    }
}

fn find_layer(layers: &[LayerSlot], z: f64) -> Option<usize> {
    let i = layers.partition_point(|l| l.z_top + 1e-9 < z);
    layers
        .get(i)
        .filter(|l| z > l.z_top - l.thickness)
        .map(|l| l.index)
}

/// Cells crossed by the XY projection of a segment, with the fraction of
/// its length inside each. A zero-length segment puts everything in the
/// cell holding its start.
fn cell_shares(from: [f64; 3], to: [f64; 3], cell: f64) -> Vec<(i64, i64, f64)> {
    let (dx, dy) = (to[0] - from[0], to[1] - from[1]);
    let mut ix = (from[0] / cell).floor() as i64;
    let mut iy = (from[1] / cell).floor() as i64;
    if dx.hypot(dy) <= 1e-12 {
        return vec![(ix, iy, 1.0)];
    }
    let axis = |d: f64, start: f64, i: i64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((i + 1) as f64 * cell - start) / d, cell / d)
        } else if d < 0.0 {
            (-1, (i as f64 * cell - start) / d, -cell / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (sx, mut tx, step_x) = axis(dx, from[0], ix);
    let (sy, mut ty, step_y) = axis(dy, from[1], iy);
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        let next = tx.min(ty).min(1.0);
        if next > t {
            out.push((ix, iy, next - t));
        }
        if next >= 1.0 {
            break;
        }
        t = next;
        if tx <= ty {
            ix += sx;
            tx += step_x;
        } else {
            iy += sy;
            ty += step_y;
        }
    }
    out
}

/// Rasterizes every depositing move into the cells of its layer. A move
/// belongs to the layer whose height band `(z_top - T, z_top]` holds its
/// midpoint; its volume is split between the cells it crosses in
/// proportion to the length inside each. Moves after `;TYPE:shield` go to the shield map.
pub fn simulate_deposition(
    moves: &[ParsedMove],
    layers: &[LayerSlot],
    machine: &MachineConfig,
    cell_size: f64,
) -> Result<DepositGrid> {
    if !(cell_size > 0.0) {
        return Err(Error::Argument(format!(
            "cell size {cell_size} must be positive"
        )));
    }
    let area = machine.filament_area();
    let mut grid = DepositGrid {
        cell_size,
        ..Default::default()
    };
    for m in moves.iter().filter(|m| m.deposited > 0.0) {
        let ratios = m.ratios.as_ref().expect("checked by the parser");
        let zmid = (m.from[2] + m.to[2]) / 2.0;
        let layer = find_layer(layers, zmid).ok_or_else(|| {
            Error::Validation(format!("line {}: z {zmid} is not inside any layer", m.line))
        })?;
        let volume = m.deposited * area;
        let map = if m.section == Section::Shield {
            &mut grid.shield
        } else {
            &mut grid.part
        };
        for (ix, iy, share) in cell_shares(m.from, m.to, cell_size) {
            let cell = map
                .entry((ix, iy, layer))
                .or_insert_with(|| vec![0.0; ratios.len()]);
            for (c, r) in cell.iter_mut().zip(ratios) {
                *c += volume * share * r;
            }
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerFidelity {
    pub index: usize,
    pub cells: usize,
    pub max_dev: f64,
    pub mean_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityReport {
    pub cells: usize,
    /// Cells skipped for lying near a field discontinuity.
    pub excluded: usize,
    pub max_dev: f64,
    pub p95_dev: f64,
    pub mean_dev: f64,
    pub per_layer: Vec<LayerFidelity>,
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Compares the effective mixture of every part cell with the field at the
/// cell center and layer mid-height. Deviation is the largest component
/// difference. Cells closer than `exclusion_radius` to a field
/// discontinuity are left out.
pub fn compare_to_field(
    grid: &DepositGrid,
    field: &FieldSpec,
    layers: &[LayerSlot],
    exclusion_radius: f64,
) -> FidelityReport {
    let z_mid: HashMap<usize, f64> = layers
        .iter()
        .map(|l| (l.index, l.z_top - l.thickness / 2.0))
        .collect();
    let mut keys: Vec<&CellKey> = grid.part.keys().collect();
    keys.sort_by_key(|k| (k.2, k.1, k.0));
    let mut all = Vec::new();
    let mut excluded = 0;
    let mut per_layer: Vec<LayerFidelity> = Vec::new();
    for key in keys {
        let volumes = &grid.part[key];
        let total: f64 = volumes.iter().sum();
        if !(total > 0.0) {
            continue;
        }
        let c = grid.cell_center(*key);
        let p = [c[0], c[1], z_mid[&key.2]];
        if field
            .distance_to_discontinuity(p)
            .is_some_and(|d| d < exclusion_radius)
        {
            excluded += 1;
            continue;
        }
        let expected = field.sample(p);
        let dev = volumes
            .iter()
            .zip(expected.weights())
            .map(|(v, e)| (v / total - e).abs())
            .fold(0.0, f64::max);
        all.push(dev);
        if per_layer.last().map_or(true, |l| l.index != key.2) {
            per_layer.push(LayerFidelity {
                index: key.2,
                cells: 0,
                max_dev: 0.0,
                mean_dev: 0.0,
            });
        }
        let l = per_layer.last_mut().unwrap();
        l.cells += 1;
        l.max_dev = l.max_dev.max(dev);
        l.mean_dev += dev;
    }
    for l in &mut per_layer {
        l.mean_dev /= l.cells as f64;
    }
    let mean_dev = if all.is_empty() {
        0.0
    } else {
        all.iter().sum::<f64>() / all.len() as f64
    };
    all.sort_by(f64::total_cmp);
    FidelityReport {
        cells: all.len(),
        excluded,
        max_dev: all.last().copied().unwrap_or(0.0),
        p95_dev: percentile(&all, 0.95),
        mean_dev,
        per_layer,
    }
}
