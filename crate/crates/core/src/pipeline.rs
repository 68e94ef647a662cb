//! End-to-end compilation: configuration, stage orchestration and reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, VolumeTexture, TEXTURE_FORMAT};
use crate::gcode::{emit_strata, GcodeProgram, MachineConfig};
use crate::mix::MixRatio;
use crate::ordering::order_layers;
use crate::strata::{optimize_layer, unit_vector_layer, OptimizerConfig, PlanKind};
use crate::toolpath::{
    generate_test_shape, load_toolpaths, resample, simplify, Layer, PathRole, PrintJob, TestShape,
};
use crate::validator::{
    compare_to_field, layer_table, parse_gcode, simulate_deposition, FidelityReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub machine: MachineConfig,
    pub optimizer: OptimizerConfig,
    /// Longest segment after resampling; half the nozzle diameter if unset.
    pub resample_step: Option<f64>,
    pub xy_tol: f64,
    pub alpha_tol: f64,
    /// Seed of the first layer's random strata order.
    pub seed: u64,
    /// Off: one stratum of pure filament per filament, in fixed order.
    pub optimize: bool,
    pub field: Option<FieldSpec>,
    /// JSON field description or texture file, used when `field` is unset.
    pub field_file: Option<PathBuf>,
    pub toolpaths: Option<PathBuf>,
    pub test_shape: Option<TestShape>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// Validation grid cell, mm.
    pub cell_size: f64,
    /// Largest accepted 95th-percentile cell deviation.
    pub deviation_budget: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            machine: MachineConfig::default(),
            optimizer: OptimizerConfig::default(),
            resample_step: None,
            xy_tol: 0.01,
            alpha_tol: 0.005,
            seed: 0,
            optimize: true,
            field: None,
            field_file: None,
            toolpaths: None,
            test_shape: None,
            output: None,
            report: None,
            cell_size: 0.2,
            deviation_budget: 0.02,
        }
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Argument(format!("empty override key '{key}'")))?;
    let mut t = table;
    for p in parts {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::Argument(format!("override '{key}': '{p}' is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

fn override_value(raw: &str) -> toml::Value {
    // parse as a TOML value when possible, else take the text verbatim
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl PipelineConfig {
    /// Parses a TOML configuration and applies `key=value` overrides
    /// (dotted keys reach into tables, e.g. `machine.k=4`). Paths are
    /// resolved against `base_dir`.
    ///
    /// Machine defaults follow the field: the filament count comes from
    /// the field and the layer thickness from the filament count unless
    /// either is given.
    pub fn from_toml(text: &str, overrides: &[String], base_dir: Option<&Path>) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let locus = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            Error::parse(locus, e.message().to_string())
        })?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("override '{o}' is not key=value")))?;
            set_dotted(&mut table, k.trim(), override_value(v.trim()))?;
        }
        let machine = table.get("machine").and_then(|m| m.as_table());
        let k_given = machine.is_some_and(|m| m.contains_key("k"));
        let t_given = machine.is_some_and(|m| m.contains_key("layer_thickness"));
        let letters_given = machine.is_some_and(|m| m.contains_key("ratio_letters"));

        let mut cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::parse("config", e.message().to_string()))?;
        if let Some(dir) = base_dir {
            for p in [
                &mut cfg.field_file,
                &mut cfg.toolpaths,
                &mut cfg.output,
                &mut cfg.report,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        if !k_given {
            if let Ok(field) = cfg.load_field() {
                cfg.machine.k = field.k();
            }
        }
        let defaults = MachineConfig::for_filaments(cfg.machine.k);
        if !t_given {
            cfg.machine.layer_thickness = defaults.layer_thickness;
        }
        if !letters_given {
            cfg.machine.ratio_letters = defaults.ratio_letters;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml(&text, overrides, path.parent())
    }

    pub fn resample_step(&self) -> f64 {
        self.resample_step
            .unwrap_or(self.machine.nozzle_diameter / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.machine.validate()?;
        self.optimizer.validate()?;
        for (name, v) in [
            ("resample_step", self.resample_step()),
            ("xy_tol", self.xy_tol),
            ("alpha_tol", self.alpha_tol),
            ("cell_size", self.cell_size),
            ("deviation_budget", self.deviation_budget),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// The field from `field` or `field_file`.
    pub fn load_field(&self) -> Result<FieldSpec> {
        let field = match (&self.field, &self.field_file) {
            (Some(f), _) => f.clone(),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
                    Error::parse(
                        format!("line {} column {}", e.line(), e.column()),
                        e.to_string(),
                    )
                })?;
                if value.get("format").and_then(|f| f.as_str()) == Some(TEXTURE_FORMAT) {
                    FieldSpec::VolumeTexture {
                        texture: VolumeTexture::from_json(&text)?,
                    }
                } else {
                    serde_json::from_value(value)
                        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?
                }
            }
            (None, None) => return Err(Error::Argument("no field or field_file given".into())),
        };
        field.validate()?;
        Ok(field)
    }

    /// The print job from `toolpaths` or `test_shape`.
    pub fn load_job(&self) -> Result<PrintJob> {
        match (&self.toolpaths, &self.test_shape) {
            (Some(path), _) => load_toolpaths(path, self.machine.clone()),
            (None, Some(shape)) => {
                generate_test_shape(*shape, self.machine.layer_thickness, self.machine.clone())
            }
            (None, None) => Err(Error::Argument("no toolpaths or test_shape given".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerStats {
    pub index: usize,
    pub z_top: f64,
    pub strata: usize,
    pub kind: Option<PlanKind>,
    pub dimension: usize,
    pub vertices: usize,
    pub mixtures: Vec<MixRatio>,
    pub order: Vec<usize>,
    pub optimize_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub optimized: bool,
    pub layers: Vec<LayerStats>,
    pub total_strata: usize,
    pub optimize_ms: f64,
    pub ordering_ms: f64,
    pub estimated_time_s: f64,
    /// Per filament, shield included.
    pub filament_usage_mm3: Vec<f64>,
    pub part_usage_mm3: Vec<f64>,
}

/// Strata counts, timings and material use of a compiled job.
pub fn stats_report(
    job: &PrintJob,
    program: &GcodeProgram,
    optimize_ms: &[f64],
    ordering_ms: f64,
) -> StatsReport {
    let layers: Vec<LayerStats> = job
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| LayerStats {
            index: l.index,
            z_top: l.z_top,
            strata: l.plan.as_ref().map_or(0, |p| p.s()),
            kind: l.plan.as_ref().map(|p| p.kind),
            dimension: l.plan.as_ref().map_or(0, |p| p.dimension),
            vertices: l.part_paths().map(|p| p.vertices.len()).sum(),
            mixtures: l
                .plan
                .as_ref()
                .map_or_else(Vec::new, |p| p.base_mixtures.clone()),
            order: l.plan.as_ref().map_or_else(Vec::new, |p| p.order.clone()),
            optimize_ms: optimize_ms.get(i).copied().unwrap_or(0.0),
        })
        .collect();
    StatsReport {
        optimized: layers
            .iter()
            .any(|l| l.kind != Some(PlanKind::UnitVectors) && l.kind.is_some()),
        total_strata: layers.iter().map(|l| l.strata).sum(),
        optimize_ms: optimize_ms.iter().sum(),
        ordering_ms,
        estimated_time_s: program.estimated_time,
        filament_usage_mm3: program.totals.clone(),
        part_usage_mm3: program.part_totals.clone(),
        layers,
    }
}

/// Job after resampling, strata optimization and ordering.
#[derive(Debug, Clone)]
pub struct PlannedJob {
    pub job: PrintJob,
    pub optimize_ms: Vec<f64>,
    pub ordering_ms: f64,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Resamples and optimizes every layer in parallel, then orders strata
/// bottom-up.
pub fn plan_job(job: &PrintJob, field: &FieldSpec, cfg: &PipelineConfig) -> Result<PlannedJob> {
    if field.k() != cfg.machine.k {
        return Err(Error::Validation(format!(
            "field has {} filaments, machine has {}",
            field.k(),
            cfg.machine.k
        )));
    }
    let step = cfg.resample_step();
    let results: Vec<(Layer, f64)> = job
        .layers
        .par_iter()
        .map(|layer| -> Result<(Layer, f64)> {
            if layer.is_empty() {
                return Ok((layer.clone(), 0.0));
            }
            let resampled = resample(layer, field, step)
                .map_err(|e| e.at_stage("resample", Some(layer.index)))?;
            let start = Instant::now();
            let optimized = if cfg.optimize {
                optimize_layer(&resampled, &cfg.optimizer)
            } else {
                unit_vector_layer(&resampled)
            }
            .map_err(|e| e.at_stage("optimize", Some(layer.index)))?;
            Ok((optimized, ms_since(start)))
        })
        .collect::<Result<_>>()?;
    let (layers, optimize_ms): (Vec<Layer>, Vec<f64>) = results.into_iter().unzip();
    let start = Instant::now();
    let resampled = PrintJob {
        layers,
        machine: job.machine.clone(),
    };
    let ordered = if cfg.optimize {
        order_layers(&resampled, cfg.seed).map_err(|e| e.at_stage("order", None))?
    } else {
        resampled
    };
    Ok(PlannedJob {
        job: ordered,
        optimize_ms,
        ordering_ms: ms_since(start),
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Planned job before path simplification.
    pub planned: PrintJob,
    /// Simplified job that was emitted.
    pub emitted: PrintJob,
    pub program: GcodeProgram,
    pub stats: StatsReport,
}

/// Simplifies every part path of a planned job.
pub fn simplify_job(job: &PrintJob, xy_tol: f64, alpha_tol: f64) -> PrintJob {
    let mut out = job.clone();
    for layer in &mut out.layers {
        for path in layer
            .toolpaths
            .iter_mut()
            .filter(|p| p.role != PathRole::Shield)
        {
            if path.vertices.iter().all(|v| !v.alphas.is_empty()) {
                *path = simplify(path, xy_tol, alpha_tol);
            }
        }
    }
    out
}

/// Load or generate, resample, optimize, order, simplify, emit.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let field = cfg
        .load_field()
        .map_err(|e| e.at_stage("load field", None))?;
    let job = cfg
        .load_job()
        .map_err(|e| e.at_stage("load toolpaths", None))?;
    run_pipeline_on(&job, &field, cfg)
}

pub fn run_pipeline_on(
    job: &PrintJob,
    field: &FieldSpec,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let planned = plan_job(job, field, cfg)?;
    let emitted = simplify_job(&planned.job, cfg.xy_tol, cfg.alpha_tol);
    let program = emit_strata(&emitted, &cfg.machine).map_err(|e| e.at_stage("emit", None))?;
    let stats = stats_report(
        &planned.job,
        &program,
        &planned.optimize_ms,
        planned.ordering_ms,
    );
    Ok(PipelineOutput {
        planned: planned.job,
        emitted,
        program,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub moves: usize,
    /// Deposited volume per filament recovered from the G-code, mm³.
    pub deposited_mm3: Vec<f64>,
    pub fidelity: FidelityReport,
    pub budget: f64,
    pub passed: bool,
}

/// Re-reads G-code with the virtual printer and compares the deposits of
/// every part cell with the field.
pub fn validate_gcode(
    text: &str,
    job: &PrintJob,
    field: &FieldSpec,
    cfg: &PipelineConfig,
) -> Result<ValidationReport> {
    let letters = &cfg.machine.ratio_letters[..cfg.machine.k];
    let moves = parse_gcode(text, letters)?;
    let table = layer_table(job);
    let grid = simulate_deposition(&moves, &table, &cfg.machine, cfg.cell_size)?;
    let fidelity = compare_to_field(&grid, field, &table, cfg.machine.nozzle_diameter);
    Ok(ValidationReport {
        moves: moves.len(),
        deposited_mm3: grid.totals(cfg.machine.k),
        passed: fidelity.p95_dev <= cfg.deviation_budget,
        budget: cfg.deviation_budget,
        fidelity,
    })
}

/// Table-1 style summary of an optimized and an unoptimized run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub optimized: StatsReport,
    pub unoptimized: StatsReport,
}

impl Comparison {
    pub fn run(job: &PrintJob, field: &FieldSpec, cfg: &PipelineConfig) -> Result<Self> {
        let mut on = cfg.clone();
        on.optimize = true;
        let mut off = cfg.clone();
        off.optimize = false;
        Ok(Comparison {
            optimized: run_pipeline_on(job, field, &on)?.stats,
            unoptimized: run_pipeline_on(job, field, &off)?.stats,
        })
    }

    /// One row: strata and time, unoptimized values in parentheses.
    pub fn table_row(&self, name: &str) -> String {
        fn hm(s: f64) -> String {
            let m = (s / 60.0).round() as u64;
            format!("{}h{:02}m", m / 60, m % 60)
        }
        format!(
            "{name:<24} layers {:>5}  strata {} ({})  time {} ({})  optimizer {:.1} ms",
            self.optimized.layers.len(),
            self.optimized.total_strata,
            self.unoptimized.total_strata,
            hm(self.optimized.estimated_time_s),
            hm(self.unoptimized.estimated_time_s),
            self.optimized.optimize_ms
        )
    }
}
