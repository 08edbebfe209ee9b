//! The scan loop as a two-stage pipeline.
//!
//! Stage 1 (producer) fetches the slit sub-matrices of each light step,
//! transferring either the raw rows or a pre-compressed stream and decoding
//! it. Stage 2 (consumer) runs source term, thermal update and
//! interpolation every step and the three deformation GEMVs on light steps.
//! The stages are connected by a bounded queue of `queue_depth` buffers.
//!
//! Timing comes from one of two sources. Simulated time derives every stage
//! duration from byte and FLOP counts (or forced constants) and schedules
//! them on a link and a device resource, so traces are deterministic. Real
//! time records wall-clock stamps. Values never depend on either choice.

mod streams;
mod timing;
mod trace;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

pub use streams::CompressedSlits;
pub use timing::{
    compression_beneficial, pipeline_latency, pipeline_period, simulate, stage_times, Durations,
    Stamps,
};
pub use trace::{
    deadline_report, DeadlineReport, FieldSummary, FieldVerdict, PipelineTrace, StepRecord,
    TRACE_HEADER,
};

use crate::codec::{decompress, CodecError, CodecMode, CompressedStream};
use crate::container::{self, ContainerError, Stored};
use crate::matrix::{Dense, DenseView, MatrixError};
use crate::model::{Axis, ModelError, Phase, ScanSchedule, Step, WaferModel};
use crate::mpgemv::{gemv, GemvError, GemvRequest, ReductionShape};
use crate::thermal::{HeatLoad, ThermalError, ThermalState};

/// Interconnect bandwidth of the reference system, bytes/s.
pub const DEFAULT_BANDWIDTH: f64 = 16e9;
/// Decoder output throughput of the reference system, bytes/s.
pub const DEFAULT_DECODE_THROUGHPUT: f64 = 33e9;
/// Sustained GEMV rate of the reference system, FLOP/s.
pub const DEFAULT_COMPUTE_RATE: f64 = 198e9;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("model/schedule mismatch: {0}")]
    Mismatch(String),
    #[error("stage 1 fault in field {field}: {source}")]
    Stage1 { field: usize, source: CodecError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Thermal(#[from] ThermalError),
    #[error(transparent)]
    Gemv(#[from] GemvError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// True when the failure comes from corrupt input data.
    pub fn is_corruption(&self) -> bool {
        match self {
            Self::Stage1 { source, .. } => source.is_corruption(),
            Self::Container(ContainerError::Io(io)) => io.kind() == std::io::ErrorKind::UnexpectedEof,
            Self::Container(_) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeSource {
    Simulated,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    /// Transfer of later steps overlaps compute of earlier ones.
    Overlapped,
    /// Each step is transferred only after the previous one finished.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Transfer,
    Decode,
    Compute,
}

/// Extra time added to one stage of the first light step of `field`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stall {
    pub field: usize,
    pub stage: Stage,
    pub seconds: f64,
}

/// Stage durations that replace the modeled ones in simulated time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ForcedTimes {
    pub transfer: Option<f64>,
    pub decode: Option<f64>,
    pub compute: Option<f64>,
}

/// Post-processing of each axis' deformation vector before delivery.
pub trait Resampler: Send + Sync {
    fn resample(&self, axis: Axis, field: usize, slit: usize, delta: Vec<f32>) -> Vec<f32>;
}

/// Delivers deformations unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThrough;

impl Resampler for PassThrough {
    fn resample(&self, _: Axis, _: usize, _: usize, delta: Vec<f32>) -> Vec<f32> {
        delta
    }
}

#[derive(Clone)]
pub struct PipelineConfig {
    /// Link bandwidth `B`, bytes/s.
    pub bandwidth: f64,
    /// Codec used for the slit operators; `None` transfers raw rows.
    pub compression: Option<CodecMode>,
    /// Decoder throughput `W_c` in output bytes/s; defaults to
    /// [`DEFAULT_DECODE_THROUGHPUT`].
    pub decode_throughput: Option<f64>,
    /// FLOP/s used to model compute time.
    pub compute_rate: f64,
    pub queue_depth: usize,
    /// Threads evaluating the three axes of a light step (1..=3).
    pub axis_workers: usize,
    pub time_source: TimeSource,
    pub execution: Execution,
    pub reduction: ReductionShape,
    pub forced: ForcedTimes,
    pub stalls: Vec<Stall>,
    pub resampler: Arc<dyn Resampler>,
}

impl fmt::Debug for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PipelineConfig")
            .field("bandwidth", &self.bandwidth)
            .field("compression", &self.compression)
            .field("decode_throughput", &self.decode_throughput)
            .field("compute_rate", &self.compute_rate)
            .field("queue_depth", &self.queue_depth)
            .field("axis_workers", &self.axis_workers)
            .field("time_source", &self.time_source)
            .field("execution", &self.execution)
            .field("reduction", &self.reduction)
            .field("forced", &self.forced)
            .field("stalls", &self.stalls)
            .finish_non_exhaustive()
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bandwidth: DEFAULT_BANDWIDTH,
            compression: None,
            decode_throughput: None,
            compute_rate: DEFAULT_COMPUTE_RATE,
            queue_depth: 2,
            axis_workers: 3,
            time_source: TimeSource::Simulated,
            execution: Execution::Overlapped,
            reduction: ReductionShape::Sequential,
            forced: ForcedTimes::default(),
            stalls: Vec::new(),
            resampler: Arc::new(PassThrough),
        }
    }
}

impl PipelineConfig {
    pub fn with_compression(mut self, mode: CodecMode) -> Self {
        self.compression = Some(mode);
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_stall(mut self, stall: Stall) -> Self {
        self.stalls.push(stall);
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |s: String| Err(PipelineError::Config(s));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.bandwidth) {
            return bad(format!("bandwidth {} must be positive", self.bandwidth));
        }
        if !positive(self.compute_rate) {
            return bad(format!("compute rate {} must be positive", self.compute_rate));
        }
        if let Some(w) = self.decode_throughput {
            if !positive(w) {
                return bad(format!("decode throughput {w} must be positive"));
            }
        }
        if self.queue_depth < 2 {
            return bad(format!("queue depth {} must be at least 2", self.queue_depth));
        }
        if !(1..=3).contains(&self.axis_workers) {
            return bad(format!("axis workers {} must be in 1..=3", self.axis_workers));
        }
        if let ReductionShape::FixedTree { fanout } = self.reduction {
            if fanout < 2 || !fanout.is_power_of_two() {
                return bad(format!("tree fanout {fanout} must be a power of two >= 2"));
            }
        }
        if let Some(mode) = self.compression {
            mode.validate()
                .map_err(|e| PipelineError::Config(format!("codec: {e}")))?;
        }
        let forced = [self.forced.transfer, self.forced.decode, self.forced.compute];
        for v in forced.into_iter().flatten().chain(self.stalls.iter().map(|s| s.seconds)) {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("stage time {v} must be finite and >= 0"));
            }
        }
        Ok(())
    }

    fn stall(&self, field: usize, stage: Stage) -> f64 {
        self.stalls
            .iter()
            .filter(|s| s.field == field && s.stage == stage)
            .map(|s| s.seconds)
            .sum()
    }
}

/// Deformations of one light step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDeformation {
    pub field: usize,
    pub k: usize,
    pub slit: usize,
    /// Indexed by [`Axis::index`].
    pub axes: [Vec<f32>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutput {
    pub deformations: Vec<StepDeformation>,
    pub trace: PipelineTrace,
    pub final_state: ThermalState,
}

impl ScanOutput {
    /// All deliveries of one axis concatenated in scan order.
    pub fn axis_vector(&self, axis: Axis) -> Vec<f32> {
        self.deformations
            .iter()
            .flat_map(|d| d.axes[axis.index()].iter().copied())
            .collect()
    }

    /// One row per light step.
    pub fn deformation_matrix(&self, axis: Axis) -> Result<Dense, PipelineError> {
        let cols = self.deformations.first().map_or(0, |d| d.axes[axis.index()].len());
        if self.deformations.iter().any(|d| d.axes[axis.index()].len() != cols) {
            return Err(PipelineError::Mismatch(
                "slit widths differ; deformations do not form a matrix".into(),
            ));
        }
        Ok(Dense::new(self.deformations.len(), cols, self.axis_vector(axis))?)
    }

    /// Writes `deformation_<axis>.whfm` for each axis into `dir`.
    pub fn save_deformations(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, PipelineError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        Axis::ALL
            .into_iter()
            .map(|axis| {
                let path = dir.join(format!("deformation_{}.whfm", axis.name()));
                container::save(&path, &Stored::Dense(self.deformation_matrix(axis)?))?;
                Ok(path)
            })
            .collect()
    }
}

/// One scheduled step in scan order.
#[derive(Debug, Clone, Copy)]
struct Plan<'s> {
    field: usize,
    field_id: usize,
    step: &'s Step,
    /// First light step of its field, where stalls are injected.
    first_light: bool,
}

enum Operator<'a> {
    None,
    Views([DenseView<'a>; 3]),
    Owned([Dense; 3]),
}

impl Operator<'_> {
    fn view(&self, axis: Axis) -> Option<DenseView<'_>> {
        match self {
            Self::None => None,
            Self::Views(v) => Some(v[axis.index()]),
            Self::Owned(m) => Some(m[axis.index()].view()),
        }
    }
}

struct Item<'a> {
    operator: Operator<'a>,
    bytes_in: u64,
    decoded_bytes: u64,
    /// Wall-clock transfer and decode intervals in real time.
    wall: Option<((f64, f64), (f64, f64))>,
}

struct Computed {
    deformation: Option<[Vec<f32>; 3]>,
    wall: Option<(f64, f64)>,
}

fn check_consistency(
    model: &WaferModel,
    schedule: &ScanSchedule,
    load: &HeatLoad,
    streams: Option<&CompressedSlits>,
) -> Result<(), PipelineError> {
    let mismatch = |s: String| Err(PipelineError::Mismatch(s));
    if load.dark_load().len() != model.temperature_points() {
        return mismatch(format!(
            "heat load has {} points, model has {}",
            load.dark_load().len(),
            model.temperature_points()
        ));
    }
    for f in &schedule.fields {
        if f.field_id >= model.field_count() {
            return mismatch(format!(
                "schedule field {} but the model has {} fields",
                f.field_id,
                model.field_count()
            ));
        }
        if f.steps.len() != f.t_l + f.t_d || f.light_steps().count() != f.t_l {
            return mismatch(format!("field {} steps disagree with t_l/t_d", f.field_id));
        }
        let slits = model.slit_windows(f.field_id)?.len();
        for step in &f.steps {
            match (step.phase, step.slit) {
                (Phase::Light, Some(s)) if s < slits => {
                    if load.footprint(f.field_id, s).is_none() {
                        return mismatch(format!("no heat footprint for field {} slit {s}", f.field_id));
                    }
                }
                (Phase::Light, s) => {
                    return mismatch(format!(
                        "light step of field {} has slit {s:?}, the model has {slits}",
                        f.field_id
                    ))
                }
                (Phase::Dark, _) => {}
            }
        }
    }
    if let Some(s) = streams {
        s.check(model)?;
    }
    Ok(())
}

/// FLOPs of one step under the two-per-multiply-add convention.
fn step_flops(model: &WaferModel, step: &Step, rows: usize) -> u64 {
    let t = model.temperature_points() as u64;
    let thermal = 2 * model.a().nnz() as u64 + t;
    let interp = 2 * model.p().nnz() as u64 - model.p().rows() as u64;
    let deformation = match step.phase {
        Phase::Light => 3 * crate::mpgemv::gemv_flops(rows, model.interp_points()),
        Phase::Dark => 0,
    };
    thermal + interp + deformation
}

/// Runs the scan. With `cfg.compression` set, the slit operators are
/// compressed first (offline, untimed) and decoded by stage 1.
pub fn run_scan(
    model: &WaferModel,
    schedule: &ScanSchedule,
    load: &HeatLoad,
    cfg: &PipelineConfig,
) -> Result<ScanOutput, PipelineError> {
    cfg.validate()?;
    match cfg.compression {
        Some(mode) => {
            let streams = CompressedSlits::build(model, mode)?;
            execute(model, schedule, load, cfg, Some(&streams))
        }
        None => execute(model, schedule, load, cfg, None),
    }
}

/// Runs the scan on pre-compressed slit operators.
pub fn run_scan_with_streams(
    model: &WaferModel,
    schedule: &ScanSchedule,
    load: &HeatLoad,
    cfg: &PipelineConfig,
    streams: &CompressedSlits,
) -> Result<ScanOutput, PipelineError> {
    cfg.validate()?;
    execute(model, schedule, load, cfg, Some(streams))
}

struct Producer<'a> {
    model: &'a WaferModel,
    streams: Option<&'a CompressedSlits>,
    cfg: &'a PipelineConfig,
    t0: Instant,
}

fn sleep_secs(s: f64) {
    if s > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(s));
    }
}

impl<'a> Producer<'a> {
    fn real(&self) -> bool {
        self.cfg.time_source == TimeSource::Real
    }

    fn now(&self) -> f64 {
        self.t0.elapsed().as_secs_f64()
    }

    fn produce(&self, plan: &Plan<'_>) -> Result<Item<'a>, PipelineError> {
        let slit = match (plan.step.phase, plan.step.slit) {
            (Phase::Light, Some(s)) => s,
            _ => {
                let t = self.now();
                return Ok(Item {
                    operator: Operator::None,
                    bytes_in: 0,
                    decoded_bytes: 0,
                    wall: self.real().then_some(((t, t), (t, t))),
                });
            }
        };
        let (f, field) = (plan.field_id, plan.field);
        let stall = |stage| {
            if plan.first_light && self.real() {
                sleep_secs(self.cfg.stall(field, stage));
            }
        };
        let ts = self.now();
        match self.streams {
            None => {
                let mut views = Vec::with_capacity(3);
                for axis in Axis::ALL {
                    let fv = self.model.field_submatrix(axis, f)?;
                    views.push(self.model.slit_submatrix(fv, f, slit)?);
                }
                let views: [DenseView<'a>; 3] = views.try_into().expect("three axes");
                let bytes: u64 = views.iter().map(|v| 4 * (v.rows() * v.cols()) as u64).sum();
                let operator = if self.real() {
                    Operator::Owned(views.map(|v| v.to_owned()))
                } else {
                    Operator::Views(views)
                };
                stall(Stage::Transfer);
                let te = self.now();
                stall(Stage::Decode);
                let de = self.now();
                Ok(Item {
                    operator,
                    bytes_in: bytes,
                    decoded_bytes: bytes,
                    wall: self.real().then_some(((ts, te), (te, de))),
                })
            }
            Some(slits) => {
                let fault = |source| PipelineError::Stage1 { field, source };
                let src = slits.get(f, slit).ok_or_else(|| {
                    PipelineError::Mismatch(format!("no compressed stream for field {f} slit {slit}"))
                })?;
                let bytes_in: u64 = src.iter().map(|s| s.encoded_len() as u64).sum();
                let received: Vec<CompressedStream> = if self.real() {
                    src.iter()
                        .map(|s| CompressedStream::from_bytes(&s.to_bytes()))
                        .collect::<Result<_, _>>()
                        .map_err(fault)?
                } else {
                    src.to_vec()
                };
                stall(Stage::Transfer);
                let te = self.now();
                let mut decoded = Vec::with_capacity(3);
                for s in &received {
                    decoded.push(decompress(s).map_err(fault)?);
                }
                let decoded: [Dense; 3] = decoded.try_into().expect("three axes");
                let decoded_bytes = decoded.iter().map(|d| 4 * d.data().len() as u64).sum();
                stall(Stage::Decode);
                let de = self.now();
                Ok(Item {
                    operator: Operator::Owned(decoded),
                    bytes_in,
                    decoded_bytes,
                    wall: self.real().then_some(((ts, te), (te, de))),
                })
            }
        }
    }
}

struct Consumer<'a> {
    model: &'a WaferModel,
    load: &'a HeatLoad,
    cfg: &'a PipelineConfig,
    pool: Option<rayon::ThreadPool>,
    state: ThermalState,
    t0: Instant,
}

impl Consumer<'_> {
    fn consume(&mut self, plan: &Plan<'_>, item: &Item<'_>) -> Result<Computed, PipelineError> {
        let real = self.cfg.time_source == TimeSource::Real;
        let cs = self.t0.elapsed().as_secs_f64();
        self.state.advance(self.model, self.load, plan.field_id, plan.step)?;
        let deformation = match plan.step.phase {
            Phase::Light => {
                let slit = plan.step.slit.expect("checked light step");
                let s = &self.state.interpolated;
                let (reduction, resampler) = (self.cfg.reduction, &self.cfg.resampler);
                let eval = |axis: Axis| -> Result<Vec<f32>, PipelineError> {
                    let view = item.operator.view(axis).expect("light step operator");
                    let delta = gemv(&GemvRequest::mixed(view, s).with_shape(reduction))?;
                    Ok(resampler.resample(axis, plan.field, slit, delta))
                };
                let axes: Vec<Vec<f32>> = match &self.pool {
                    Some(pool) => pool.install(|| {
                        Axis::ALL.into_par_iter().map(eval).collect::<Result<_, _>>()
                    })?,
                    None => Axis::ALL.into_iter().map(eval).collect::<Result<_, _>>()?,
                };
                Some(axes.try_into().expect("three axes"))
            }
            Phase::Dark => None,
        };
        if real && plan.first_light {
            sleep_secs(self.cfg.stall(plan.field, Stage::Compute));
        }
        let ce = self.t0.elapsed().as_secs_f64();
        Ok(Computed {
            deformation,
            wall: real.then_some((cs, ce)),
        })
    }
}

fn execute(
    model: &WaferModel,
    schedule: &ScanSchedule,
    load: &HeatLoad,
    cfg: &PipelineConfig,
    streams: Option<&CompressedSlits>,
) -> Result<ScanOutput, PipelineError> {
    check_consistency(model, schedule, load, streams)?;
    let mut plans = Vec::new();
    for (field, f) in schedule.fields.iter().enumerate() {
        let mut seen_light = false;
        for step in &f.steps {
            let first_light = step.phase == Phase::Light && !seen_light;
            seen_light |= step.phase == Phase::Light;
            plans.push(Plan {
                field,
                field_id: f.field_id,
                step,
                first_light,
            });
        }
    }

    let pool = if cfg.axis_workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.axis_workers)
                .build()
                .map_err(|e| PipelineError::Config(format!("axis pool: {e}")))?,
        )
    } else {
        None
    };
    let t0 = Instant::now();
    let producer = Producer {
        model,
        streams,
        cfg,
        t0,
    };
    let mut consumer = Consumer {
        model,
        load,
        cfg,
        pool,
        state: ThermalState::zeros(model),
        t0,
    };

    // (bytes_in, decoded bytes, wall transfer/decode, computed) per step.
    type Done = (u64, u64, Option<((f64, f64), (f64, f64))>, Computed);
    let mut done: Vec<Done> = Vec::with_capacity(plans.len());
    match cfg.execution {
        Execution::Sequential => {
            for plan in &plans {
                let item = producer.produce(plan)?;
                let c = consumer.consume(plan, &item)?;
                done.push((item.bytes_in, item.decoded_bytes, item.wall, c));
            }
        }
        Execution::Overlapped => {
            std::thread::scope(|scope| -> Result<(), PipelineError> {
                // The consumer holds one buffer and the producer fills
                // another, so the channel itself buffers depth - 2.
                let (tx, rx) = sync_channel(cfg.queue_depth - 2);
                let (producer, plans_ref) = (&producer, &plans);
                scope.spawn(move || {
                    for plan in plans_ref {
                        let item = producer.produce(plan);
                        let failed = item.is_err();
                        if tx.send(item).is_err() || failed {
                            return;
                        }
                    }
                });
                for plan in &plans {
                    let item = rx
                        .recv()
                        .map_err(|_| PipelineError::Config("stage 1 ended early".into()))??;
                    let c = consumer.consume(plan, &item)?;
                    done.push((item.bytes_in, item.decoded_bytes, item.wall, c));
                }
                Ok(())
            })?;
        }
    }

    let stamps: Vec<Stamps> = match cfg.time_source {
        TimeSource::Real => done
            .iter()
            .map(|(_, _, wall, c)| {
                let (transfer, decode) = wall.expect("real-time stamps");
                Stamps {
                    transfer,
                    decode,
                    compute: c.wall.expect("real-time stamps"),
                }
            })
            .collect(),
        TimeSource::Simulated => {
            let w_c = cfg.decode_throughput.unwrap_or(DEFAULT_DECODE_THROUGHPUT);
            let durations: Vec<Durations> = plans
                .iter()
                .zip(&done)
                .map(|(plan, (bytes_in, decoded, _, _))| {
                    let light = plan.step.phase == Phase::Light;
                    let stall = |stage| {
                        if plan.first_light {
                            cfg.stall(plan.field, stage)
                        } else {
                            0.0
                        }
                    };
                    let rows = plan
                        .step
                        .slit
                        .and_then(|s| model.slit_windows(plan.field_id).ok()?.get(s).map(|w| w.len()))
                        .unwrap_or(0);
                    let transfer = if light {
                        cfg.forced.transfer.unwrap_or(*bytes_in as f64 / cfg.bandwidth)
                    } else {
                        0.0
                    };
                    let decode = if light && streams.is_some() {
                        cfg.forced.decode.unwrap_or(*decoded as f64 / w_c)
                    } else {
                        0.0
                    };
                    let compute = cfg
                        .forced
                        .compute
                        .unwrap_or(step_flops(model, plan.step, rows) as f64 / cfg.compute_rate);
                    Durations {
                        transfer: transfer + stall(Stage::Transfer),
                        decode: decode + stall(Stage::Decode),
                        compute: compute + stall(Stage::Compute),
                    }
                })
                .collect();
            simulate(&durations, cfg.queue_depth, cfg.execution)
        }
    };

    let mut fields: Vec<FieldSummary> = schedule
        .fields
        .iter()
        .enumerate()
        .map(|(field, f)| FieldSummary {
            field,
            start_s: f64::INFINITY,
            end_s: 0.0,
            latency_s: 0.0,
            budget_s: f.time_budget_ms / 1e3,
            deadline_met: true,
            thermal_steps: 0,
            gemv_calls: 0,
        })
        .collect();
    for (plan, (st, (_, _, _, c))) in plans.iter().zip(stamps.iter().zip(&done)) {
        let fs = &mut fields[plan.field];
        fs.start_s = fs.start_s.min(st.transfer.0);
        fs.end_s = fs.end_s.max(st.compute.1);
        fs.thermal_steps += 1;
        fs.gemv_calls += if c.deformation.is_some() { 3 } else { 0 };
    }
    for fs in &mut fields {
        fs.latency_s = fs.end_s - fs.start_s;
        fs.deadline_met = fs.latency_s <= fs.budget_s;
    }

    let mut records = Vec::with_capacity(plans.len());
    let mut deformations = Vec::new();
    for (k, ((plan, st), (bytes_in, _, _, c))) in plans.iter().zip(&stamps).zip(done).enumerate() {
        let fs = &fields[plan.field];
        let latency_s = st.compute.1 - fs.start_s;
        let queue_occupancy = stamps[k + 1..]
            .iter()
            .take(cfg.queue_depth)
            .filter(|o| o.transfer.1 <= st.compute.0)
            .count();
        records.push(StepRecord {
            field: plan.field,
            k,
            phase: plan.step.phase,
            slit: plan.step.slit,
            bytes_in,
            stamps: *st,
            queue_occupancy,
            latency_s,
            deadline_met: latency_s <= fs.budget_s,
        });
        if let Some(axes) = c.deformation {
            deformations.push(StepDeformation {
                field: plan.field,
                k,
                slit: plan.step.slit.expect("light step"),
                axes,
            });
        }
    }

    Ok(ScanOutput {
        deformations,
        trace: PipelineTrace {
            time_source: cfg.time_source,
            execution: cfg.execution,
            records,
            fields,
        },
        final_state: consumer.state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_scan_schedule, generate_model, ModelSpec, ScanKind, ScheduleOverrides};

    fn setup(t_l: usize, t_d: usize, fields: usize) -> (WaferModel, ScanSchedule, HeatLoad) {
        let model = generate_model(&ModelSpec::new(8, 8, 24, 48, 4, 5, 11).with_fields(3)).unwrap();
        let slits = model.slit_windows(0).unwrap().len();
        let schedule = build_scan_schedule(
            ScanKind::Fast,
            fields,
            slits,
            ScheduleOverrides {
                t_l: Some(t_l),
                t_d: Some(t_d),
                budget_ms: None,
            },
        )
        .unwrap();
        let load = HeatLoad::synthesize(&model, 1.0, -0.01).unwrap();
        (model, schedule, load)
    }

    #[test]
    fn counting_contract() {
        let (model, schedule, load) = setup(2, 1, 1);
        let out = run_scan(&model, &schedule, &load, &PipelineConfig::default()).unwrap();
        let f = &out.trace.fields[0];
        assert_eq!(f.thermal_steps, 3);
        assert_eq!(f.gemv_calls, 6);
        assert_eq!(out.deformations.len(), 2);
        assert_eq!(out.trace.fields.len(), 1);
        assert_eq!(out.final_state.k, 3);
        assert!(f.deadline_met);
    }

    #[test]
    fn firm_deadlines_never_abort() {
        let (model, schedule, load) = setup(3, 2, 2);
        let cfg = PipelineConfig {
            forced: ForcedTimes {
                compute: Some(1.0),
                ..Default::default()
            },
            ..Default::default()
        };
        let out = run_scan(&model, &schedule, &load, &cfg).unwrap();
        assert_eq!(out.trace.fields.len(), 2);
        assert!(out.trace.fields.iter().all(|f| !f.deadline_met));
        assert_eq!(out.trace.fields[1].thermal_steps, 5);
        assert_eq!(out.deformations.len(), 6);
    }

    #[test]
    fn stall_flags_only_its_field() {
        let (model, schedule, load) = setup(3, 2, 3);
        for stage in [Stage::Transfer, Stage::Decode, Stage::Compute] {
            let cfg = PipelineConfig::default()
                .with_compression(CodecMode::FixedAccuracy { tolerance: 1e-12 })
                .with_stall(Stall {
                    field: 1,
                    stage,
                    seconds: 2.0 * 0.05,
                });
            let report = run_scan(&model, &schedule, &load, &cfg).unwrap().trace.report();
            let met: Vec<bool> = report.verdicts.iter().map(|v| v.met).collect();
            assert_eq!(met, [true, false, true], "{stage:?}");
            assert!((report.miss_rate - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn overlap_changes_time_not_values() {
        let (model, schedule, load) = setup(5, 3, 2);
        let mut base = None;
        for execution in [Execution::Overlapped, Execution::Sequential] {
            for workers in [1, 3] {
                for depth in [2, 4] {
                    let cfg = PipelineConfig {
                        execution,
                        axis_workers: workers,
                        queue_depth: depth,
                        ..Default::default()
                    };
                    let out = run_scan(&model, &schedule, &load, &cfg).unwrap();
                    match &base {
                        None => base = Some(out.deformations),
                        Some(b) => assert_eq!(b, &out.deformations),
                    }
                }
            }
        }
    }

    #[test]
    fn sequential_is_slower_than_overlapped() {
        let (model, schedule, load) = setup(6, 2, 1);
        let run = |execution| {
            let cfg = PipelineConfig {
                execution,
                forced: ForcedTimes {
                    transfer: Some(1e-3),
                    decode: None,
                    compute: Some(1e-3),
                },
                ..Default::default()
            };
            run_scan(&model, &schedule, &load, &cfg).unwrap().trace.fields[0].latency_s
        };
        assert!(run(Execution::Sequential) > run(Execution::Overlapped));
    }

    #[test]
    fn lossless_codec_matches_uncompressed() {
        let (model, schedule, load) = setup(4, 2, 2);
        let plain = run_scan(&model, &schedule, &load, &PipelineConfig::default()).unwrap();
        let exact = PipelineConfig::default().with_compression(CodecMode::FixedAccuracy { tolerance: 0.0 });
        let packed = run_scan(&model, &schedule, &load, &exact).unwrap();
        assert_eq!(plain.deformations, packed.deformations);
        assert!(packed.trace.records.iter().any(|r| r.t_decode() > 0.0));
        assert!(plain.trace.records.iter().all(|r| r.t_decode() == 0.0));
    }

    #[test]
    fn forced_constants_match_table() {
        let (model, schedule, load) = setup(40, 0, 1);
        let cfg = PipelineConfig {
            compression: Some(CodecMode::FixedRate { bpv: 16 }),
            forced: ForcedTimes {
                transfer: Some(4.0),
                decode: Some(1.0),
                compute: Some(2.0),
            },
            ..Default::default()
        };
        let out = run_scan(&model, &schedule, &load, &cfg).unwrap();
        let r = &out.trace.records;
        let latency = r[0].stamps.compute.1 - r[0].stamps.transfer.0;
        assert_eq!(latency, pipeline_latency(4.0, 2.0, 1.0, 1.0, true).unwrap());
        let period = r[39].stamps.compute.1 - r[38].stamps.compute.1;
        assert_eq!(period, pipeline_period(4.0, 2.0, 1.0, 1.0, true).unwrap());
        assert!(r.iter().all(|x| x.queue_occupancy < cfg.queue_depth));
    }

    #[test]
    fn real_time_runs_and_agrees() {
        let (model, schedule, load) = setup(3, 1, 1);
        let sim = run_scan(&model, &schedule, &load, &PipelineConfig::default()).unwrap();
        for compression in [None, Some(CodecMode::FixedAccuracy { tolerance: 0.0 })] {
            let cfg = PipelineConfig {
                time_source: TimeSource::Real,
                compression,
                ..Default::default()
            };
            let real = run_scan(&model, &schedule, &load, &cfg).unwrap();
            assert_eq!(real.deformations, sim.deformations);
            for r in &real.trace.records {
                assert!(r.stamps.transfer.0 <= r.stamps.transfer.1);
                assert!(r.stamps.compute.0 <= r.stamps.compute.1);
            }
        }
    }

    #[test]
    fn trace_csv_layout() {
        let (model, schedule, load) = setup(2, 1, 1);
        let out = run_scan(&model, &schedule, &load, &PipelineConfig::default()).unwrap();
        let csv = out.trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,0,light,0,"));
        assert!(lines[3].starts_with("0,2,dark,,0,"));
        assert!(lines[1].ends_with(",true"));
    }

    #[test]
    fn deformation_export() {
        let (model, schedule, load) = setup(3, 1, 1);
        let out = run_scan(&model, &schedule, &load, &PipelineConfig::default()).unwrap();
        let dir = std::env::temp_dir().join(format!("whff-defo-{}", std::process::id()));
        let paths = out.save_deformations(&dir).unwrap();
        assert_eq!(paths.len(), 3);
        match container::load(&paths[2]).unwrap() {
            Stored::Dense(d) => {
                assert_eq!((d.rows(), d.cols()), (3, 4));
                assert_eq!(d.data(), out.axis_vector(Axis::Z).as_slice());
            }
            other => panic!("unexpected {}", other.kind_name()),
        }
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn mismatches_and_bad_config() {
        let (model, schedule, load) = setup(2, 1, 1);
        let too_many = build_scan_schedule(ScanKind::Fast, 5, 4, Default::default()).unwrap();
        assert!(matches!(
            run_scan(&model, &too_many, &load, &PipelineConfig::default()),
            Err(PipelineError::Mismatch(_))
        ));
        let wide = build_scan_schedule(ScanKind::Fast, 1, 9, Default::default()).unwrap();
        assert!(matches!(
            run_scan(&model, &wide, &load, &PipelineConfig::default()),
            Err(PipelineError::Mismatch(_))
        ));
        for cfg in [
            PipelineConfig {
                queue_depth: 1,
                ..Default::default()
            },
            PipelineConfig {
                axis_workers: 4,
                ..Default::default()
            },
            PipelineConfig {
                bandwidth: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                run_scan(&model, &schedule, &load, &cfg),
                Err(PipelineError::Config(_))
            ));
        }
    }

    #[test]
    fn corrupt_streams_fault_their_field() {
        let (model, _, _) = setup(2, 1, 1);
        let streams = CompressedSlits::build(&model, CodecMode::FixedRate { bpv: 8 }).unwrap();
        let dir = std::env::temp_dir().join(format!("whff-streams-{}", std::process::id()));
        let paths = streams.save(&dir).unwrap();
        assert_eq!(CompressedSlits::load(&dir, &model).unwrap(), streams);
        let victim = paths.iter().find(|p| p.to_string_lossy().contains("_f1_s2")).unwrap();
        let mut bytes = std::fs::read(victim).unwrap();
        bytes[0] = b'X';
        std::fs::write(victim, bytes).unwrap();
        let err = CompressedSlits::load(&dir, &model).unwrap_err();
        assert!(matches!(err, PipelineError::Stage1 { field: 1, .. }));
        assert!(err.is_corruption());
        std::fs::remove_dir_all(dir).unwrap();
    }
}
