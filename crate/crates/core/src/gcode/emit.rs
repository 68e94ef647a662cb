use super::machine::MachineConfig;
use super::program::{
    estimate_print_time, fixed, quantize, quantize_ratios, GcodeLine, GcodeProgram, Move, MoveKind,
    F_DECIMALS, XY_DECIMALS, ZE_DECIMALS,
};
use super::shield::{build_ooze_shield, OozeShield};
use crate::error::{Error, Result};
use crate::toolpath::{Layer, PathVertex, PrintJob, Toolpath};

/// Feedrate in mm/s that keeps the volumetric rate constant for a track of
/// the given cross-section, clamped to `max_feedrate`.
pub fn compute_feedrate(track_width: f64, thickness: f64, machine: &MachineConfig) -> f64 {
    (machine.volumetric_rate / (track_width * thickness)).min(machine.max_feedrate)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Part,
    Shield,
}

struct Emitter<'a> {
    machine: &'a MachineConfig,
    area: f64,
    lines: Vec<GcodeLine>,
    pos: [f64; 3],
    /// Cumulative extrusion before rounding; the emitted value is rounded.
    e_exact: f64,
    e: f64,
    needs_prime: bool,
    extruded: bool,
    section: Option<Section>,
    totals: Vec<f64>,
    part_totals: Vec<f64>,
}

impl<'a> Emitter<'a> {
    fn new(machine: &'a MachineConfig) -> Self {
        Emitter {
            machine,
            area: machine.filament_area(),
            lines: Vec::new(),
            pos: [0.0; 3],
            e_exact: 0.0,
            e: 0.0,
            needs_prime: false,
            extruded: false,
            section: None,
            totals: vec![0.0; machine.k],
            part_totals: vec![0.0; machine.k],
        }
    }

    fn comment(&mut self, text: String) {
        self.lines.push(GcodeLine::Comment(text));
    }

    fn section(&mut self, s: Section) {
        if self.section != Some(s) {
            self.section = Some(s);
            self.comment(match s {
                Section::Part => "TYPE:part".into(),
                Section::Shield => "TYPE:shield".into(),
            });
        }
    }

    fn at(&self, p: [f64; 3]) -> bool {
        quantize(p[0], XY_DECIMALS) == self.pos[0]
            && quantize(p[1], XY_DECIMALS) == self.pos[1]
            && quantize(p[2], ZE_DECIMALS) == self.pos[2]
    }

    fn feed(mm_s: f64) -> f64 {
        quantize(mm_s * 60.0, F_DECIMALS)
    }

    fn travel_to(&mut self, p: [f64; 3]) {
        if self.at(p) {
            return;
        }
        if self.extruded && !self.needs_prime {
            self.lines.push(GcodeLine::Move(Move {
                kind: MoveKind::Retract,
                x: None,
                y: None,
                z: None,
                e: Some(quantize(self.e - self.machine.retraction, ZE_DECIMALS)),
                feedrate: Self::feed(self.machine.retraction_feedrate),
                ratios: None,
            }));
            self.needs_prime = true;
        }
        let z = quantize(p[2], ZE_DECIMALS);
        self.lines.push(GcodeLine::Move(Move {
            kind: MoveKind::Travel,
            x: Some(quantize(p[0], XY_DECIMALS)),
            y: Some(quantize(p[1], XY_DECIMALS)),
            z: (z != self.pos[2]).then_some(z),
            e: None,
            feedrate: Self::feed(self.machine.travel_feedrate),
            ratios: None,
        }));
        self.pos = [quantize(p[0], XY_DECIMALS), quantize(p[1], XY_DECIMALS), z];
    }

    /// Straight extrusion from the current position to `p`.
    fn extrude_to(&mut self, p: [f64; 3], volume: f64, feedrate: f64, ratios: &[f64]) {
        if self.needs_prime {
            self.lines.push(GcodeLine::Move(Move {
                kind: MoveKind::Prime,
                x: None,
                y: None,
                z: None,
                e: Some(self.e),
                feedrate: Self::feed(self.machine.retraction_feedrate),
                ratios: None,
            }));
            self.needs_prime = false;
        }
        self.e_exact += volume / self.area;
        let e = quantize(self.e_exact, ZE_DECIMALS);
        let deposited = (e - self.e) * self.area;
        self.e = e;
        for (i, r) in ratios.iter().enumerate() {
            self.totals[i] += deposited * r;
            if self.section == Some(Section::Part) {
                self.part_totals[i] += deposited * r;
            }
        }
        self.pos = [
            quantize(p[0], XY_DECIMALS),
            quantize(p[1], XY_DECIMALS),
            quantize(p[2], ZE_DECIMALS),
        ];
        self.lines.push(GcodeLine::Move(Move {
            kind: MoveKind::Extrude,
            x: Some(self.pos[0]),
            y: Some(self.pos[1]),
            z: Some(self.pos[2]),
            e: Some(e),
            feedrate: Self::feed(feedrate),
            ratios: Some(ratios.to_vec()),
        }));
        self.extruded = true;
    }

    /// Extrudes `length` mm along the shield loop starting at `cursor`
    /// (segment index, distance into it) and returns the new cursor.
    fn purge(
        &mut self,
        shield: &OozeShield,
        layer: &Layer,
        mut cursor: (usize, f64),
        ratios: &[f64],
    ) -> (usize, f64) {
        let verts = &shield.path.vertices;
        let n = verts.len();
        let point = |seg: usize, off: f64| -> [f64; 3] {
            let a = verts[seg].position;
            let b = verts[(seg + 1) % n].position;
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let t = if len > 0.0 { (off / len).min(1.0) } else { 0.0 };
            [
                a[0] + t * (b[0] - a[0]),
                a[1] + t * (b[1] - a[1]),
                layer.z_top,
            ]
        };
        let w = shield.path.track_width;
        let feedrate = compute_feedrate(w, layer.thickness, self.machine);
        let mut remaining = shield.purge_length;
        self.section(Section::Shield);
        self.travel_to(point(cursor.0, cursor.1));
        let mut guard = 0;
        while remaining > 1e-9 && guard < 100_000 {
            guard += 1;
            let (seg, off) = cursor;
            let a = verts[seg].position;
            let b = verts[(seg + 1) % n].position;
            let seg_len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let step = (seg_len - off).min(remaining);
            if step > 0.0 {
                let end = point(seg, off + step);
                self.extrude_to(end, w * layer.thickness * step, feedrate, ratios);
                remaining -= step;
            }
            cursor = if off + step >= seg_len - 1e-12 {
                ((seg + 1) % n, 0.0)
            } else {
                (seg, off + step)
            };
        }
        cursor
    }
}

fn vertex_z(layer: &Layer, v: &PathVertex, order: &[usize], k: usize) -> f64 {
    if k + 1 == order.len() {
        return layer.z_top;
    }
    let t: f64 = order[..=k].iter().map(|&s| v.alphas[s]).sum::<f64>() * layer.thickness;
    (layer.z_base() + t).min(layer.z_top)
}

fn check_layer(layer: &Layer, machine: &MachineConfig) -> Result<()> {
    if layer.thickness > machine.nozzle_diameter + 1e-12 {
        return Err(Error::Validation(format!(
            "layer {} thickness {} exceeds nozzle diameter {}",
            layer.index, layer.thickness, machine.nozzle_diameter
        )));
    }
    if layer.is_empty() {
        return Ok(());
    }
    let plan = layer
        .plan
        .as_ref()
        .ok_or_else(|| Error::Precondition(format!("layer {} has no strata plan", layer.index)))?;
    let s = plan.s();
    let mut seen = vec![false; s];
    if plan.order.len() != s
        || !plan
            .order
            .iter()
            .all(|&i| i < s && !std::mem::replace(&mut seen[i], true))
    {
        return Err(Error::Precondition(format!(
            "layer {} has an invalid strata order",
            layer.index
        )));
    }
    if plan.base_mixtures.iter().any(|m| m.k() != machine.k) {
        return Err(Error::Precondition(format!(
            "layer {} mixtures do not have {} filaments",
            layer.index, machine.k
        )));
    }
    for p in layer.part_paths() {
        if p.vertices.iter().any(|v| v.alphas.len() != s) {
            return Err(Error::Precondition(format!(
                "layer {} has vertices without strata fractions",
                layer.index
            )));
        }
    }
    Ok(())
}

fn emit_stratum(
    em: &mut Emitter,
    layer: &Layer,
    path: &Toolpath,
    order: &[usize],
    k: usize,
    ratios: &[f64],
) {
    let s = order[k];
    let t = layer.thickness;
    let w = path.track_width;
    for (a, b) in path.segments() {
        let (va, vb) = (&path.vertices[a], &path.vertices[b]);
        let pa = [
            va.position[0],
            va.position[1],
            vertex_z(layer, va, order, k),
        ];
        let pb = [
            vb.position[0],
            vb.position[1],
            vertex_z(layer, vb, order, k),
        ];
        let (a0, a1) = (va.alphas[s], vb.alphas[s]);
        let len = va.xy_distance(vb);
        // moves extrude uniformly, so a thickness ramp becomes short steps
        let by_flow = ((a1 - a0).abs() / em.machine.flow_step).ceil() as usize;
        let by_length = (len / em.machine.min_move_length).floor() as usize;
        let pieces = by_flow.min(by_length).max(1);
        let lerp = |p: [f64; 3], q: [f64; 3], u: f64| {
            [
                p[0] + u * (q[0] - p[0]),
                p[1] + u * (q[1] - p[1]),
                p[2] + u * (q[2] - p[2]),
            ]
        };
        for i in 0..pieces {
            let (u0, u1) = (i as f64 / pieces as f64, (i + 1) as f64 / pieces as f64);
            let alpha = a0 + (a1 - a0) * (u0 + u1) / 2.0;
            let thickness = alpha * t;
            if thickness < em.machine.min_thickness {
                continue;
            }
            em.section(Section::Part);
            em.travel_to(lerp(pa, pb, u0));
            // per piece this is the trapezoid volume of the segment's share
            let volume = w * t * len * (u1 - u0) * alpha;
            em.extrude_to(
                lerp(pa, pb, u1),
                volume,
                compute_feedrate(w, thickness, em.machine),
                ratios,
            );
        }
    }
}

fn ratio_list(r: &[f64]) -> String {
    r.iter().map(|v| fixed(*v, 4)).collect::<Vec<_>>().join(",")
}

/// Emits mixing G-code for an optimized and ordered job.
///
/// Each layer prints its strata in plan order. At a vertex, stratum `k` of
/// the order sits at `z_base + T * sum(alpha)` over the first `k + 1`
/// ordered strata; the last stratum is at `z_top` exactly. Segments whose
/// average stratum thickness is below `min_thickness` are not deposited:
/// the nozzle retracts and travels to the next printed segment. Segments
/// along which a stratum's fraction changes by more than `flow_step` are
/// printed as several moves of constant flow. Every
/// stratum is preceded by a purge of its mixture on the ooze shield.
pub fn emit_strata(job: &PrintJob, machine: &MachineConfig) -> Result<GcodeProgram> {
    machine.validate()?;
    for layer in &job.layers {
        check_layer(layer, machine)?;
    }
    let mut em = Emitter::new(machine);
    em.comment("stratamix mixing G-code".into());
    em.comment(format!(
        "machine {}",
        serde_json::to_string(machine).map_err(|e| Error::Internal(e.to_string()))?
    ));
    for layer in job.layers.iter().filter(|l| !l.is_empty()) {
        let plan = layer.plan.as_ref().expect("checked");
        let mixes: Vec<String> = plan
            .base_mixtures
            .iter()
            .map(|m| ratio_list(m.weights()))
            .collect();
        em.comment(format!(
            "plan layer={} z_top={} strata={} order={} mixtures={}",
            layer.index,
            fixed(layer.z_top, ZE_DECIMALS),
            plan.s(),
            plan.order
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(","),
            mixes.join(";")
        ));
    }
    for cmd in ["G21", "G90", "M82"] {
        em.lines.push(GcodeLine::Command(cmd.into()));
    }
    em.lines.push(GcodeLine::Command(format!(
        "M900 K{}",
        machine.linear_advance_factor
    )));

    for layer in &job.layers {
        if layer.is_empty() {
            continue;
        }
        let plan = layer.plan.as_ref().expect("checked");
        let shield = build_ooze_shield(layer, machine).expect("non-empty layer");
        em.comment(format!(
            "LAYER:{} z_top={} thickness={}",
            layer.index,
            fixed(layer.z_top, ZE_DECIMALS),
            fixed(layer.thickness, ZE_DECIMALS)
        ));
        let mut cursor = (0usize, 0.0f64);
        for (k, &s) in plan.order.iter().enumerate() {
            let ratios = quantize_ratios(plan.base_mixtures[s].weights());
            em.comment(format!("STRATUM:{k} index={s} mix={}", ratio_list(&ratios)));
            em.section = None;
            cursor = em.purge(&shield, layer, cursor, &ratios);
            for path in layer.part_paths() {
                emit_stratum(&mut em, layer, path, &plan.order, k, &ratios);
            }
        }
    }

    let mut program = GcodeProgram {
        letters: machine.ratio_letters[..machine.k].to_vec(),
        lines: em.lines,
        totals: em.totals,
        part_totals: em.part_totals,
        estimated_time: 0.0,
    };
    program.estimated_time = estimate_print_time(&program);
    let usage: Vec<String> = program
        .letters
        .iter()
        .zip(&program.totals)
        .map(|(l, v)| format!("{l}={}", fixed(*v, 3)))
        .collect();
    program.lines.push(GcodeLine::Comment(format!(
        "filament usage mm3 {}",
        usage.join(" ")
    )));
    program.lines.push(GcodeLine::Comment(format!(
        "estimated time s={}",
        fixed(program.estimated_time, 1)
    )));
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mix::MixRatio;
    use crate::strata::{PlanKind, StrataPlan};
    use crate::toolpath::PathRole;

    #[test]
    fn feedrate_formula_and_clamp() {
        let m = MachineConfig::default();
        assert!((compute_feedrate(0.4, 0.3, &m) - 50.0).abs() < 1e-12);
        assert!((compute_feedrate(0.4, 0.15, &m) - 100.0).abs() < 1e-12);
        assert_eq!(compute_feedrate(0.4, 0.0375, &m), 150.0);
    }

    fn two_strata_layer(alphas: [f64; 2]) -> Layer {
        let mut path = Toolpath {
            vertices: vec![
                PathVertex::new(0.0, 0.0, 0.3),
                PathVertex::new(10.0, 0.0, 0.3),
            ],
            track_width: 0.4,
            closed: false,
            role: PathRole::Perimeter,
        };
        for v in &mut path.vertices {
            v.alphas = alphas.to_vec();
        }
        Layer {
            index: 0,
            z_top: 0.3,
            thickness: 0.3,
            toolpaths: vec![path],
            plan: Some(StrataPlan {
                kind: PlanKind::Simplex,
                dimension: 1,
                base_mixtures: vec![MixRatio::unit(3, 0), MixRatio::unit(3, 2)],
                order: vec![0, 1],
                per_stratum_volume: vec![0.6, 0.6],
            }),
        }
    }

    #[test]
    fn cumulative_strata_heights() {
        let layer = two_strata_layer([0.5, 0.5]);
        assert!(
            (vertex_z(&layer, &layer.toolpaths[0].vertices[0], &[0, 1], 0) - 0.15).abs() < 1e-12
        );
        assert_eq!(
            vertex_z(&layer, &layer.toolpaths[0].vertices[0], &[0, 1], 1),
            0.3
        );
    }

    #[test]
    fn thin_stratum_is_skipped() {
        let layer = two_strata_layer([0.05, 0.95]);
        let job = PrintJob {
            layers: vec![layer],
            machine: MachineConfig::default(),
        };
        let prog = emit_strata(&job, &job.machine).unwrap();
        let text = prog.to_text();
        // 0.05 * 0.3 = 0.015 mm < 0.02 mm, so no A1 part line
        let part: Vec<&str> = text
            .lines()
            .skip_while(|l| !l.starts_with(";TYPE:part"))
            .filter(|l| l.starts_with("G1 X") && l.contains(" E"))
            .collect();
        assert!(part.iter().all(|l| l.ends_with("A0.0000 B0.0000 C1.0000")));
        assert!((prog.part_totals[2] - 0.4 * 0.3 * 10.0 * 0.95).abs() < 1e-4);
        assert!(prog.part_totals[0].abs() < 1e-12);
    }

    #[test]
    fn thickness_above_nozzle_is_rejected() {
        let mut layer = two_strata_layer([0.5, 0.5]);
        layer.thickness = 0.5;
        layer.z_top = 0.5;
        let job = PrintJob {
            layers: vec![layer],
            machine: MachineConfig::default(),
        };
        assert!(matches!(
            emit_strata(&job, &job.machine),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn missing_plan_is_a_precondition_error() {
        let mut layer = two_strata_layer([0.5, 0.5]);
        layer.plan = None;
        let job = PrintJob {
            layers: vec![layer],
            machine: MachineConfig::default(),
        };
        assert!(matches!(
            emit_strata(&job, &job.machine),
            Err(Error::Precondition(_))
        ));
    }
}
