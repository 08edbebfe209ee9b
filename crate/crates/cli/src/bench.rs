use std::path::PathBuf;
use std::time::Instant;

use clap::{Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use whff::codec::{compress, decompress};
use whff::matrix::Dense;
use whff::model::{synthetic_field_operator, CGenerator};
use whff::mpgemv::{gemv, gemv_flops, gemv_oracle, GemvRequest, PrecisionPolicy};

use crate::codec::{load_dense, mode_parameter, ModeFlags};
use crate::error::{CliError, CliResult};
use crate::output::{fixed, num, Format, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Shape {
    /// Slit-shaped: 378 rows by WIDTH columns.
    Wide,
    /// WIDTH rows by 378 columns.
    Tall,
    /// Square, side sqrt(378 * WIDTH).
    Square,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Mixed,
    Single,
    Double,
    All,
}

const SLIT_ROWS: usize = 378;

#[derive(Subcommand)]
pub enum BenchCommand {
    /// Matrix-vector throughput and accuracy per precision policy.
    Gemv {
        #[arg(long, value_enum, default_value_t = Shape::All)]
        shape: Shape,
        /// Long dimension of the wide and tall shapes.
        #[arg(long, default_value_t = 65536)]
        width: usize,
        #[arg(long, value_enum, default_value_t = Policy::All)]
        policy: Policy,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Decoder throughput on a synthetic operator or a matrix file.
    Decode {
        #[command(flatten)]
        mode: ModeFlags,
        /// Matrix file to compress; a synthetic smooth operator otherwise.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Side of the synthetic field operator.
        #[arg(long, default_value_t = 1024)]
        size: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

/// Minimum and median of `reps` timed runs.
fn time_runs(reps: usize, mut f: impl FnMut() -> CliResult<()>) -> CliResult<(f64, f64)> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok((times[0], times[times.len() / 2]))
}

fn gemv_bench(shape: Shape, width: usize, policy: Policy, reps: usize, format: Format, seed: u64) -> CliResult<()> {
    if width == 0 || reps == 0 {
        return Err(CliError::usage("--width and --reps must be positive"));
    }
    let side = ((SLIT_ROWS * width) as f64).sqrt().round().max(1.0) as usize;
    let shapes: Vec<(&str, usize, usize)> = [
        (Shape::Wide, "wide", SLIT_ROWS, width),
        (Shape::Tall, "tall", width, SLIT_ROWS),
        (Shape::Square, "square", side, side),
    ]
    .into_iter()
    .filter(|(s, ..)| shape == Shape::All || shape == *s)
    .map(|(_, n, r, c)| (n, r, c))
    .collect();
    let policies: Vec<PrecisionPolicy> = [
        (Policy::Mixed, PrecisionPolicy::Mixed),
        (Policy::Single, PrecisionPolicy::Single),
        (Policy::Double, PrecisionPolicy::Double),
    ]
    .into_iter()
    .filter(|(p, _)| policy == Policy::All || policy == *p)
    .map(|(_, p)| p)
    .collect();

    let mut report = Report::new(
        "bench gemv",
        &[
            "shape",
            "rows",
            "cols",
            "policy",
            "repetitions",
            "seconds_min",
            "seconds_median",
            "gflops",
            "max_rel_error",
        ],
    );
    report.comment(format!("seed={seed} threads={}", rayon::current_num_threads()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, rows, cols) in shapes {
        let matrix = Dense::from_fn(rows, cols, |_, _| rng.gen_range(-1.0f32..=1.0));
        let vector: Vec<f32> = (0..cols).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
        let oracle = gemv_oracle(matrix.view(), &vector)?;
        let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for &p in &policies {
            let req = GemvRequest::mixed(matrix.view(), &vector).with_policy(p);
            let out = gemv(&req)?;
            let err = out
                .iter()
                .zip(&oracle)
                .map(|(&r, &o)| (r as f64 - o).abs() / scale)
                .fold(0.0f64, f64::max);
            let (min, median) = time_runs(reps, || {
                std::hint::black_box(gemv(&req)?);
                Ok(())
            })?;
            report.row(vec![
                name.into(),
                rows.to_string(),
                cols.to_string(),
                p.name().into(),
                reps.to_string(),
                num(min),
                num(median),
                fixed(gemv_flops(rows, cols) as f64 / median / 1e9, 3),
                num(err),
            ]);
        }
    }
    report.print(format)?;
    Ok(())
}

fn decode_bench(
    mode: ModeFlags,
    input: Option<PathBuf>,
    size: usize,
    reps: usize,
    format: Format,
    seed: u64,
) -> CliResult<()> {
    let mode = mode.require()?;
    if reps == 0 || size == 0 {
        return Err(CliError::usage("--reps and --size must be positive"));
    }
    let (source, array) = match &input {
        Some(p) => (p.display().to_string(), load_dense(p)?),
        None => ("synthetic".to_string(), synthetic_field_operator(size, CGenerator::Smooth, seed)?),
    };
    let start = Instant::now();
    let stream = compress(array.view(), mode)?;
    let encode_s = start.elapsed().as_secs_f64();
    let (min, median) = time_runs(reps, || {
        std::hint::black_box(decompress(&stream)?);
        Ok(())
    })?;
    let decoded_bytes = (array.rows() * array.cols() * 4) as f64;
    let mut report = Report::new(
        "bench decode",
        &[
            "source",
            "rows",
            "cols",
            "mode",
            "parameter",
            "ratio",
            "bits_per_value",
            "encode_seconds",
            "decode_seconds_min",
            "decode_seconds_median",
            "decode_gbps",
        ],
    );
    report.comment(format!(
        "seed={seed} threads={} decode_gbps counts decoded binary32 bytes",
        rayon::current_num_threads()
    ));
    report.row(vec![
        source,
        array.rows().to_string(),
        array.cols().to_string(),
        mode.name().into(),
        mode_parameter(mode),
        fixed(stream.ratio(), 4),
        fixed(stream.bits_per_value(), 4),
        num(encode_s),
        num(min),
        num(median),
        fixed(decoded_bytes / median / 1e9, 3),
    ]);
    report.print(format)?;
    Ok(())
}

pub fn run(cmd: BenchCommand, seed: u64) -> CliResult<()> {
    match cmd {
        BenchCommand::Gemv {
            shape,
            width,
            policy,
            reps,
            format,
        } => gemv_bench(shape, width, policy, reps, format, seed),
        BenchCommand::Decode {
            mode,
            input,
            size,
            reps,
            format,
        } => decode_bench(mode, input, size, reps, format, seed),
    }
}
