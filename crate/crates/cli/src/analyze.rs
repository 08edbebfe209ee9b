use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use whff::analysis::{
    bundled_platforms, flop_cost, io_cost, load_platforms, roofline_table, Bound, CostParams,
    DeformationSteps, IoCost, Preset,
};
use whff::pipeline::{pipeline_latency, pipeline_period, stage_times};

use crate::error::{CliError, CliResult};
use crate::output::{fixed, num, Format, Report};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetName {
    #[value(name = "paper-fast")]
    FullFast,
    #[value(name = "paper-slow")]
    FullSlow,
}

impl From<PresetName> for Preset {
    fn from(p: PresetName) -> Self {
        match p {
            PresetName::FullFast => Preset::FullFast,
            PresetName::FullSlow => Preset::FullSlow,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StepsName {
    /// Deformation term counted over the dark steps.
    AsPrinted,
    /// Deformation term counted over the light steps.
    Light,
}

/// Cost-model parameters: a preset, explicit values, or a preset with overrides.
#[derive(Args, Debug, Clone)]
pub struct CostArgs {
    #[arg(long, value_enum)]
    preset: Option<PresetName>,
    #[arg(long = "T")]
    t: Option<u64>,
    #[arg(long = "S")]
    s: Option<u64>,
    #[arg(long = "M")]
    m: Option<u64>,
    #[arg(long)]
    nnz_a: Option<u64>,
    #[arg(long)]
    nnz_b: Option<u64>,
    #[arg(long)]
    t_l: Option<u64>,
    #[arg(long)]
    t_d: Option<u64>,
    #[arg(long)]
    budget_ms: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

impl CostArgs {
    fn params(&self) -> CliResult<CostParams> {
        let base = self.preset.map(|p| Preset::from(p).params());
        let pick = |v: Option<u64>, f: fn(&CostParams) -> u64, name: &str| {
            v.or(base.as_ref().map(f))
                .ok_or_else(|| CliError::usage(format!("--{name} is required without --preset")))
        };
        let p = CostParams {
            t: pick(self.t, |p| p.t, "T")?,
            s: pick(self.s, |p| p.s, "S")?,
            m: pick(self.m, |p| p.m, "M")?,
            nnz_a: self.nnz_a.or(base.map(|p| p.nnz_a)).unwrap_or(7),
            nnz_b: self.nnz_b.or(base.map(|p| p.nnz_b)).unwrap_or(1),
            t_l: pick(self.t_l, |p| p.t_l, "t-l")?,
            t_d: pick(self.t_d, |p| p.t_d, "t-d")?,
            budget_ms: self
                .budget_ms
                .or(base.map(|p| p.budget_ms))
                .ok_or_else(|| CliError::usage("--budget-ms is required without --preset"))?,
        };
        p.validate()?;
        Ok(p)
    }

    fn label(&self) -> String {
        self.preset
            .map(|p| Preset::from(p).name().to_string())
            .unwrap_or_else(|| "custom".into())
    }
}

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// FLOPs per field and the compute rate needed to meet the budget.
    Flops {
        #[command(flatten)]
        cost: CostArgs,
        /// Step count multiplying the deformation term. Defaults to light
        /// steps with a preset and as-printed otherwise.
        #[arg(long, value_enum)]
        deformation_steps: Option<StepsName>,
    },
    /// Values moved per field and the bandwidth needed to meet the budget.
    Io {
        #[command(flatten)]
        cost: CostArgs,
    },
    /// Attainable and price-normalized throughput per platform.
    Roofline {
        /// Platform TOML file; the bundled table is used otherwise.
        #[arg(long)]
        platforms: Option<PathBuf>,
        /// Arithmetic intensities in FLOP/byte.
        #[arg(long, value_delimiter = ',', default_values_t = [0.1667, 0.25, 0.5, 1.0, 4.0, 16.0, 64.0])]
        ai: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Period and latency of the transfer/compute pipeline with and without
    /// compression.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
pub struct PipelineArgs {
    /// Uncompressed transfer time, seconds.
    #[arg(long)]
    t_transfer: Option<f64>,
    /// Compute time, seconds.
    #[arg(long)]
    t_compute: f64,
    /// Decode time, seconds.
    #[arg(long)]
    t_decode: Option<f64>,
    /// Compression ratio.
    #[arg(long)]
    ratio: f64,
    /// Operator size in bytes; derives transfer and decode times.
    #[arg(long)]
    bytes: Option<f64>,
    /// Link bandwidth, bytes/s.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Decoder throughput, bytes/s of decoded output.
    #[arg(long)]
    decode_throughput: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn positive(v: f64, name: &str) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::usage(format!("--{name} must be positive")))
    }
}

fn pipeline(a: PipelineArgs) -> CliResult<()> {
    let (t_t, t_dec) = match (a.bytes, a.t_transfer) {
        (Some(bytes), None) => {
            let bw = positive(a.bandwidth.ok_or_else(|| CliError::usage("--bytes needs --bandwidth"))?, "bandwidth")?;
            let wc = positive(
                a.decode_throughput
                    .ok_or_else(|| CliError::usage("--bytes needs --decode-throughput"))?,
                "decode-throughput",
            )?;
            stage_times(positive(bytes, "bytes")?, bw, wc)
        }
        (None, Some(t)) => (
            t,
            a.t_decode
                .ok_or_else(|| CliError::usage("--t-transfer needs --t-decode"))?,
        ),
        _ => return Err(CliError::usage("give exactly one of --t-transfer or --bytes")),
    };
    let mut report = Report::new(
        "analyze pipeline",
        &["mode", "t_transfer_s", "t_decode_s", "t_compute_s", "ratio", "period_s", "latency_s"],
    );
    let mut latency = [0.0; 2];
    for (i, compressed) in [false, true].into_iter().enumerate() {
        let period = pipeline_period(t_t, a.t_compute, t_dec, a.ratio, compressed)?;
        latency[i] = pipeline_latency(t_t, a.t_compute, t_dec, a.ratio, compressed)?;
        report.row(vec![
            if compressed { "compressed" } else { "uncompressed" }.into(),
            num(t_t),
            num(if compressed { t_dec } else { 0.0 }),
            num(a.t_compute),
            num(if compressed { a.ratio } else { 1.0 }),
            num(period),
            num(latency[i]),
        ]);
    }
    let reduction = if latency[0] > 0.0 {
        100.0 * (latency[0] - latency[1]) / latency[0]
    } else {
        0.0
    };
    report.comment(format!("latency_reduction_percent={}", fixed(reduction, 2)));
    report.print(a.format)?;
    Ok(())
}

pub fn run(cmd: AnalyzeCommand) -> CliResult<()> {
    match cmd {
        AnalyzeCommand::Flops {
            cost,
            deformation_steps,
        } => {
            let p = cost.params()?;
            let steps = match deformation_steps {
                Some(StepsName::AsPrinted) => DeformationSteps::AsPrinted,
                Some(StepsName::Light) => DeformationSteps::LightSteps,
                None if cost.preset.is_some() => DeformationSteps::LightSteps,
                None => DeformationSteps::AsPrinted,
            };
            let f = flop_cost(&p, steps)?;
            let targets = cost.preset.map(|pr| Preset::from(pr).targets());
            let mut report = Report::new(
                "analyze flops",
                &[
                    "preset",
                    "deformation_steps",
                    "deformation_flop",
                    "thermal_flop",
                    "total_flop",
                    "required_gflops",
                    "target_gflops",
                    "rel_diff",
                    "per_axis_gflops",
                    "per_axis_target",
                ],
            );
            let (target, rel, axis_target) = match targets {
                Some(t) => (
                    fixed(t.total_gflops, 1),
                    fixed((f.gflops_required - t.total_gflops) / t.total_gflops, 4),
                    fixed(t.per_axis_gflops, 1),
                ),
                None => ("".into(), "".into(), "".into()),
            };
            report.row(vec![
                cost.label(),
                match steps {
                    DeformationSteps::AsPrinted => "as-printed",
                    DeformationSteps::LightSteps => "light",
                }
                .into(),
                num(f.deformation_flop),
                num(f.thermal_flop),
                num(f.total_flop),
                fixed(f.gflops_required, 1),
                target,
                rel,
                fixed(f.gflops_per_axis, 1),
                axis_target,
            ]);
            report.print(cost.format)?;
        }
        AnalyzeCommand::Io { cost } => {
            let p = cost.params()?;
            let io = io_cost(&p)?;
            let mut report = Report::new(
                "analyze io",
                &["preset", "term", "values", "bytes", "required_gbps"],
            );
            report.comment("values are binary32; bandwidth = 4*values/budget");
            for (term, v) in [
                ("thermal", io.thermal),
                ("deformation", io.deformation),
                ("total", io.total),
            ] {
                report.row(vec![
                    cost.label(),
                    term.into(),
                    num(v),
                    num(4.0 * v),
                    fixed(IoCost::bandwidth(v, p.budget_ms) / 1e9, 3),
                ]);
            }
            report.print(cost.format)?;
        }
        AnalyzeCommand::Roofline {
            platforms,
            ai,
            format,
        } => {
            let platforms = match &platforms {
                Some(p) => load_platforms(p).map_err(|e| CliError::from(e).context(p.display()))?,
                None => bundled_platforms(),
            };
            let table = roofline_table(&platforms, &ai)?;
            let mut report = Report::new(
                "analyze roofline",
                &["platform", "ai", "attainable_gflops", "normalized_gflops_per_usd", "bound"],
            );
            for pt in table {
                report.row(vec![
                    pt.platform,
                    num(pt.ai),
                    fixed(pt.attainable / 1e9, 3),
                    fixed(pt.normalized / 1e9, 6),
                    match pt.bound {
                        Bound::Memory => "memory",
                        Bound::Compute => "compute",
                    }
                    .into(),
                ]);
            }
            report.print(format)?;
        }
        AnalyzeCommand::Pipeline(a) => pipeline(a)?,
    }
    Ok(())
}
