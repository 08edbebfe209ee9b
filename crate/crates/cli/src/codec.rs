use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use whff::codec::{codec_metrics, compress, decompress, CodecMode, CompressedStream};
use whff::container::{self, Stored};
use whff::matrix::Dense;
use whff::model::WaferModel;
use whff::pipeline::CompressedSlits;

use crate::error::{CliError, CliResult};
use crate::output::{num, Format, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeName {
    Rate,
    Precision,
    Accuracy,
}

/// `--mode` plus the parameter that mode needs.
#[derive(Args, Debug, Clone, Default)]
pub struct ModeFlags {
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    /// Bits per value for `--mode rate`.
    #[arg(long)]
    pub bpv: Option<u32>,
    /// Bit planes for `--mode precision`.
    #[arg(long)]
    pub planes: Option<u32>,
    /// Absolute error bound for `--mode accuracy`.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

impl ModeFlags {
    pub fn to_mode(&self) -> CliResult<Option<CodecMode>> {
        let need = |flag: &str, mode: &str| CliError::usage(format!("--mode {mode} requires {flag}"));
        let mode = match self.mode {
            None => {
                if self.bpv.is_some() || self.planes.is_some() || self.tolerance.is_some() {
                    return Err(CliError::usage("codec parameters given without --mode"));
                }
                return Ok(None);
            }
            Some(ModeName::Rate) => CodecMode::FixedRate {
                bpv: self.bpv.ok_or_else(|| need("--bpv", "rate"))?,
            },
            Some(ModeName::Precision) => CodecMode::FixedPrecision {
                planes: self.planes.ok_or_else(|| need("--planes", "precision"))?,
            },
            Some(ModeName::Accuracy) => CodecMode::FixedAccuracy {
                tolerance: self.tolerance.ok_or_else(|| need("--tolerance", "accuracy"))?,
            },
        };
        mode.validate()?;
        Ok(Some(mode))
    }

    pub fn require(&self) -> CliResult<CodecMode> {
        self.to_mode()?
            .ok_or_else(|| CliError::usage("--mode is required"))
    }
}

#[derive(Subcommand)]
pub enum CodecCommand {
    /// Compress a binary32 matrix file into a stream file.
    Compress {
        #[command(flatten)]
        mode: ModeFlags,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a stream file into a binary32 matrix file.
    Decompress {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report size and, given the original, error metrics of a stream.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        /// Original matrix file for error metrics.
        #[arg(long)]
        original: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Pre-compress every slit operator of a model for `run --streams`.
    CompressModel {
        #[command(flatten)]
        mode: ModeFlags,
        /// Model manifest.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn load_dense(path: &Path) -> CliResult<Dense> {
    match container::load(path).map_err(|e| CliError::from(e).context(path.display()))? {
        Stored::Dense(d) => Ok(d),
        other => Err(CliError::user(format!(
            "{}: expected a dense binary32 matrix, found {}",
            path.display(),
            other.kind_name()
        ))),
    }
}

fn load_stream(path: &Path) -> CliResult<CompressedStream> {
    CompressedStream::load(path).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn mode_parameter(mode: CodecMode) -> String {
    match mode {
        CodecMode::FixedRate { bpv } => bpv.to_string(),
        CodecMode::FixedPrecision { planes } => planes.to_string(),
        CodecMode::FixedAccuracy { tolerance } => num(tolerance),
    }
}

pub fn run(cmd: CodecCommand) -> CliResult<()> {
    match cmd {
        CodecCommand::Compress { mode, input, out } => {
            let mode = mode.require()?;
            let array = load_dense(&input)?;
            let stream = compress(array.view(), mode)?;
            stream.save(&out).map_err(|e| CliError::from(e).context(out.display()))?;
        }
        CodecCommand::Decompress { input, out } => {
            let decoded = decompress(&load_stream(&input)?)?;
            container::save(&out, &Stored::Dense(decoded)).map_err(|e| CliError::from(e).context(out.display()))?;
        }
        CodecCommand::Stats {
            input,
            original,
            format,
        } => {
            let stream = load_stream(&input)?;
            let mut header = vec!["rows", "cols", "mode", "parameter", "payload_bits", "bits_per_value", "ratio"];
            let mut row = vec![
                stream.rows().to_string(),
                stream.cols().to_string(),
                stream.mode().name().to_string(),
                mode_parameter(stream.mode()),
                stream.payload_bits().to_string(),
                num(stream.bits_per_value()),
                num(stream.ratio()),
            ];
            let mut report_comments = Vec::new();
            if let Some(orig) = original {
                let o = load_dense(&orig)?;
                let d = decompress(&stream)?;
                let m = codec_metrics(o.view(), d.view(), &stream)?;
                header.extend(["rmse", "nrmse", "max_pointwise_error", "psnr_db"]);
                row.extend([num(m.rmse), num(m.nrmse), num(m.max_pointwise_error), num(m.psnr)]);
                report_comments.push("nrmse = rmse/(max-min); psnr = 20*log10((max-min)/(2*rmse)) over the original".to_string());
            }
            let mut report = Report::new("codec stats", &header);
            for c in report_comments {
                report.comment(c);
            }
            report.row(row).print(format)?;
        }
        CodecCommand::CompressModel { mode, model, out } => {
            let mode = mode.require()?;
            let m = WaferModel::load(&model).map_err(|e| CliError::from(e).context(model.display()))?;
            let slits = CompressedSlits::build(&m, mode)?;
            let paths = slits.save(&out)?;
            println!("{} streams in {}", paths.len(), out.display());
        }
    }
    Ok(())
}
