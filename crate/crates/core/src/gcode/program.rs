use std::fmt;

/// Decimals of X/Y words.
pub const XY_DECIMALS: usize = 4;
/// Decimals of Z and E words.
pub const ZE_DECIMALS: usize = 5;
/// Decimals of ratio words.
pub const RATIO_DECIMALS: usize = 4;
/// Decimals of F words (mm/min).
pub const F_DECIMALS: usize = 1;

pub(crate) fn quantize(v: f64, decimals: usize) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let q = (v * scale).round() / scale;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

pub(crate) fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{:.*}", decimals, v);
    // never print a negative zero
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Rounds ratios to `RATIO_DECIMALS` so that the rounded values still sum
/// to exactly one (largest remainder method).
pub fn quantize_ratios(weights: &[f64]) -> Vec<f64> {
    let units = 10u64.pow(RATIO_DECIMALS as u32);
    let sum: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    let scaled: Vec<f64> = weights
        .iter()
        .map(|w| {
            if sum > 0.0 {
                w.max(0.0) / sum * units as f64
            } else {
                units as f64 / weights.len() as f64
            }
        })
        .collect();
    let mut q: Vec<u64> = scaled.iter().map(|s| s.floor() as u64).collect();
    let mut rest = units.saturating_sub(q.iter().sum());
    let mut by_remainder: Vec<usize> = (0..q.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in by_remainder.iter().cycle() {
        if rest == 0 {
            break;
        }
        q[i] += 1;
        rest -= 1;
    }
    q.into_iter().map(|u| u as f64 / units as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    Extrude,
    Travel,
    Retract,
    Prime,
}

/// One `G1` command. Values are stored already rounded to their printed
/// precision; `feedrate` is in mm/min as written.
#[derive(Debug, Clone, PartialEq)]
pub struct Move {
    pub kind: MoveKind,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
    pub e: Option<f64>,
    pub feedrate: f64,
    pub ratios: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GcodeLine {
    Comment(String),
    Command(String),
    Move(Move),
}

/// Formats moves with the ratio word letters of the machine.
pub struct LineDisplay<'a> {
    pub line: &'a GcodeLine,
    pub letters: &'a [char],
}

impl fmt::Display for LineDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            GcodeLine::Comment(c) => write!(f, ";{c}"),
            GcodeLine::Command(c) => f.write_str(c),
            GcodeLine::Move(m) => {
                f.write_str("G1")?;
                if let Some(x) = m.x {
                    write!(f, " X{}", fixed(x, XY_DECIMALS))?;
                }
                if let Some(y) = m.y {
                    write!(f, " Y{}", fixed(y, XY_DECIMALS))?;
                }
                if let Some(z) = m.z {
                    write!(f, " Z{}", fixed(z, ZE_DECIMALS))?;
                }
                if let Some(e) = m.e {
                    write!(f, " E{}", fixed(e, ZE_DECIMALS))?;
                }
                write!(f, " F{}", fixed(m.feedrate, F_DECIMALS))?;
                if let Some(r) = &m.ratios {
                    for (letter, v) in self.letters.iter().zip(r) {
                        write!(f, " {letter}{}", fixed(*v, RATIO_DECIMALS))?;
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcodeProgram {
    pub letters: Vec<char>,
    pub lines: Vec<GcodeLine>,
    /// Extruded volume per filament, mm³, shield included.
    pub totals: Vec<f64>,
    /// Part-only share of `totals`.
    pub part_totals: Vec<f64>,
    pub estimated_time: f64,
}

impl GcodeProgram {
    pub fn moves(&self) -> impl Iterator<Item = &Move> {
        self.lines.iter().filter_map(|l| match l {
            GcodeLine::Move(m) => Some(m),
            _ => None,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(
                &LineDisplay {
                    line,
                    letters: &self.letters,
                }
                .to_string(),
            );
            out.push('\n');
        }
        out
    }
}

/// Sum of move lengths over feedrates, starting at the origin; E-only
/// moves count their filament travel. No acceleration model.
pub fn estimate_print_time(program: &GcodeProgram) -> f64 {
    let mut pos = [0.0f64; 3];
    let mut e = 0.0f64;
    let mut total = 0.0;
    for m in program.moves() {
        let next = [
            m.x.unwrap_or(pos[0]),
            m.y.unwrap_or(pos[1]),
            m.z.unwrap_or(pos[2]),
        ];
        let dist =
            ((next[0] - pos[0]).powi(2) + (next[1] - pos[1]).powi(2) + (next[2] - pos[2]).powi(2))
                .sqrt();
        let len = if dist > 0.0 {
            dist
        } else {
            m.e.map_or(0.0, |ne| (ne - e).abs())
        };
        if m.feedrate > 0.0 {
            total += len / (m.feedrate / 60.0);
        }
        pos = next;
        if let Some(ne) = m.e {
            e = ne;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn program(lines: Vec<GcodeLine>) -> GcodeProgram {
        GcodeProgram {
            letters: vec!['A', 'B', 'C'],
            lines,
            totals: vec![0.0; 3],
            part_totals: vec![0.0; 3],
            estimated_time: 0.0,
        }
    }

    #[test]
    fn ratios_round_to_a_unit_sum() {
        let q = quantize_ratios(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(q, vec![0.3334, 0.3333, 0.3333]);
        let q = quantize_ratios(&[0.2, 0.3, 0.5]);
        assert_eq!(q, vec![0.2, 0.3, 0.5]);
        let units: u64 = quantize_ratios(&[0.123456, 0.654321, 0.222223])
            .iter()
            .map(|r| (r * 1e4).round() as u64)
            .sum();
        assert_eq!(units, 10_000);
    }

    #[test]
    fn extrusion_line_format() {
        let m = Move {
            kind: MoveKind::Extrude,
            x: Some(10.0),
            y: Some(12.0),
            z: Some(3.0),
            e: Some(20.5),
            feedrate: 3000.0,
            ratios: Some(vec![0.2, 0.3, 0.5]),
        };
        let text = program(vec![GcodeLine::Move(m)]).to_text();
        assert_eq!(
            text,
            "G1 X10.0000 Y12.0000 Z3.00000 E20.50000 F3000.0 A0.2000 B0.3000 C0.5000\n"
        );
    }

    #[test]
    fn negative_zero_is_printed_unsigned() {
        assert_eq!(fixed(-0.000001, 4), "0.0000");
        assert_eq!(fixed(-0.5, 1), "-0.5");
    }

    #[test]
    fn time_is_distance_over_speed() {
        assert_eq!(estimate_print_time(&program(vec![])), 0.0);
        let m = Move {
            kind: MoveKind::Extrude,
            x: Some(60.0),
            y: Some(0.0),
            z: Some(0.0),
            e: Some(1.0),
            feedrate: 20.0 * 60.0,
            ratios: Some(vec![1.0, 0.0, 0.0]),
        };
        assert!((estimate_print_time(&program(vec![GcodeLine::Move(m)])) - 3.0).abs() < 1e-12);
    }
}
