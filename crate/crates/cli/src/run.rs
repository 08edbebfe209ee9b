use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use serde::Deserialize;
use whff::model::{build_scan_schedule, ScanKind, ScheduleOverrides, WaferModel};
use whff::pipeline::{
    run_scan, run_scan_with_streams, CompressedSlits, Execution, PassThrough, PipelineConfig,
    Stage, Stall, TimeSource, DEFAULT_BANDWIDTH, DEFAULT_COMPUTE_RATE,
};
use whff::thermal::HeatLoad;

use crate::codec::ModeFlags;
use crate::error::{CliError, CliResult};
use crate::output::{num, Format, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Fast,
    Slow,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Time {
    Simulated,
    Real,
}

/// Run description file; relative paths are resolved against its
/// directory and command-line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub model: Option<PathBuf>,
    pub streams: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub kind: Option<Kind>,
    pub fields: Option<usize>,
    pub t_l: Option<usize>,
    pub t_d: Option<usize>,
    pub budget_ms: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct RunArgs {
    /// Run manifest (TOML) naming model, streams, output and overrides.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Model manifest written by `gen`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    /// Fields to scan (default: every field of the model).
    #[arg(long)]
    fields: Option<usize>,
    #[arg(long)]
    t_l: Option<usize>,
    #[arg(long)]
    t_d: Option<usize>,
    #[arg(long)]
    budget_ms: Option<f64>,
    #[command(flatten)]
    codec: ModeFlags,
    /// Directory of pre-compressed slit streams from `codec compress-model`.
    #[arg(long)]
    streams: Option<PathBuf>,
    /// Link bandwidth, bytes/s.
    #[arg(long, default_value_t = DEFAULT_BANDWIDTH)]
    bandwidth: f64,
    /// Decoder throughput, bytes/s.
    #[arg(long)]
    decode_throughput: Option<f64>,
    /// Modeled compute rate, FLOP/s.
    #[arg(long, default_value_t = DEFAULT_COMPUTE_RATE)]
    compute_rate: f64,
    #[arg(long, default_value_t = 2)]
    queue_depth: usize,
    #[arg(long, default_value_t = 3)]
    axis_workers: usize,
    #[arg(long, value_enum, default_value_t = Time::Simulated)]
    time: Time,
    /// Disable transfer/compute overlap.
    #[arg(long)]
    sequential: bool,
    /// Inject extra stage time: FIELD:transfer|decode|compute:SECONDS.
    #[arg(long, value_parser = parse_stall)]
    stall: Vec<Stall>,
    #[arg(long, default_value_t = 1.0)]
    dose: f32,
    /// Uniform dark-phase load (negative cools).
    #[arg(long, default_value_t = -0.01, allow_hyphen_values = true)]
    dark: f32,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn parse_stall(s: &str) -> Result<Stall, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [field, stage, seconds] = parts.as_slice() else {
        return Err(format!("stall '{s}' is not FIELD:STAGE:SECONDS"));
    };
    let stage = match *stage {
        "transfer" => Stage::Transfer,
        "decode" => Stage::Decode,
        "compute" => Stage::Compute,
        other => return Err(format!("unknown stage '{other}'")),
    };
    Ok(Stall {
        field: field.parse().map_err(|e| format!("stall field: {e}"))?,
        stage,
        seconds: seconds.parse().map_err(|e| format!("stall seconds: {e}"))?,
    })
}

fn load_manifest(path: &Path) -> CliResult<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?;
    let mut m: RunManifest =
        toml::from_str(&text).map_err(|e| CliError::user(format!("{}: {}", path.display(), e.message())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for p in [&mut m.model, &mut m.streams, &mut m.out].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(m)
}

fn must_exist(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::user(format!("{what} {} does not exist", path.display())))
    }
}

pub fn run(a: RunArgs, seed: u64) -> CliResult<()> {
    let manifest = match &a.manifest {
        Some(p) => load_manifest(p)?,
        None => RunManifest::default(),
    };
    let model_path = a
        .model
        .clone()
        .or(manifest.model)
        .ok_or_else(|| CliError::usage("--model or a run manifest naming a model is required"))?;
    must_exist(&model_path, "model manifest")?;
    let streams_path = a.streams.clone().or(manifest.streams);
    if let Some(s) = &streams_path {
        must_exist(s, "stream directory")?;
    }
    let out = a.out.clone().or(manifest.out).unwrap_or_else(|| PathBuf::from("run-out"));
    let seed = manifest.seed.unwrap_or(seed);

    let model = WaferModel::load(&model_path).map_err(|e| CliError::from(e).context(model_path.display()))?;
    let kind = match a.kind.or(manifest.kind).unwrap_or(Kind::Fast) {
        Kind::Fast => ScanKind::Fast,
        Kind::Slow => ScanKind::Slow,
    };
    let n_fields = a.fields.or(manifest.fields).unwrap_or(model.field_count());
    let slits = model.slit_windows(0)?.len();
    let schedule = build_scan_schedule(
        kind,
        n_fields,
        slits,
        ScheduleOverrides {
            t_l: a.t_l.or(manifest.t_l),
            t_d: a.t_d.or(manifest.t_d),
            budget_ms: a.budget_ms.or(manifest.budget_ms),
        },
    )?;
    let load = HeatLoad::synthesize(&model, a.dose, a.dark).map_err(|e| CliError::user(e.to_string()))?;

    let mode = a.codec.to_mode()?;
    if mode.is_some() && streams_path.is_some() {
        return Err(CliError::usage("--mode and --streams are mutually exclusive"));
    }
    let cfg = PipelineConfig {
        bandwidth: a.bandwidth,
        compression: mode,
        decode_throughput: a.decode_throughput,
        compute_rate: a.compute_rate,
        queue_depth: a.queue_depth,
        axis_workers: a.axis_workers,
        time_source: match a.time {
            Time::Simulated => TimeSource::Simulated,
            Time::Real => TimeSource::Real,
        },
        execution: if a.sequential {
            Execution::Sequential
        } else {
            Execution::Overlapped
        },
        stalls: a.stall.clone(),
        resampler: Arc::new(PassThrough),
        ..PipelineConfig::default()
    };
    let output = match &streams_path {
        Some(dir) => {
            let streams = CompressedSlits::load(dir, &model)?;
            run_scan_with_streams(&model, &schedule, &load, &cfg, &streams)?
        }
        None => run_scan(&model, &schedule, &load, &cfg)?,
    };

    std::fs::create_dir_all(&out).map_err(|e| CliError::from(e).context(out.display()))?;
    let stamp = Report::new("run", &[]);
    let mut trace_file = Vec::new();
    stamp.write(&mut trace_file, Format::Csv)?;
    // The empty header row of the stamp report is replaced by the trace header.
    trace_file.truncate(trace_file.len() - 1);
    output.trace.write_csv(&mut trace_file)?;
    std::fs::write(out.join("trace.csv"), trace_file)?;
    output.save_deformations(&out)?;

    let report = output.trace.report();
    let mut summary = Report::new(
        "run",
        &["field", "latency_s", "budget_s", "deadline_met", "thermal_steps", "gemv_calls"],
    );
    summary.comment(format!(
        "seed={seed} time={:?} execution={:?} compression={}",
        cfg.time_source,
        cfg.execution,
        streams_path
            .as_ref()
            .map(|_| "streams".to_string())
            .or(mode.map(|m| m.name().to_string()))
            .unwrap_or_else(|| "none".into())
    ));
    summary.comment(format!(
        "misses={} miss_rate={} worst_latency_s={}",
        report.misses,
        num(report.miss_rate),
        num(report.worst_latency_s)
    ));
    for f in &output.trace.fields {
        summary.row(vec![
            f.field.to_string(),
            num(f.latency_s),
            num(f.budget_s),
            f.deadline_met.to_string(),
            f.thermal_steps.to_string(),
            f.gemv_calls.to_string(),
        ]);
    }
    summary.save(&out.join("summary.csv"))?;
    summary.print(a.format)?;
    Ok(())
}
