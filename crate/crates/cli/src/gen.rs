use std::path::PathBuf;

use clap::{Args, ValueEnum};
use whff::model::{generate_model, CGenerator, ModelSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Generator {
    Smooth,
    Noise,
}

#[derive(Args)]
pub struct GenArgs {
    /// Thermal mesh as ROWSxCOLS.
    #[arg(long, value_parser = parse_grid)]
    grid: (usize, usize),
    /// Interpolated temperature points (columns of C).
    #[arg(long = "S")]
    s: usize,
    /// Rows of each deformation operator.
    #[arg(long = "K")]
    k: usize,
    /// Rows per slit.
    #[arg(long = "M")]
    m: usize,
    /// Nonzeros per row of the thermal operator.
    #[arg(long, default_value_t = 7)]
    nnz: usize,
    #[arg(long, default_value_t = 2)]
    fields: usize,
    #[arg(long, value_enum, default_value_t = Generator::Smooth)]
    generator: Generator,
    /// Refuse to build deformation operators larger than this many bytes.
    #[arg(long, default_value_t = 1 << 30)]
    memory_cap: u64,
    /// Output directory.
    #[arg(long, default_value = "model")]
    out: PathBuf,
}

pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid '{s}' is not ROWSxCOLS"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("grid '{s}': {e}"));
    Ok((parse(r)?, parse(c)?))
}

pub fn run(a: GenArgs, seed: u64) -> CliResult<()> {
    let spec = ModelSpec::new(a.grid.0, a.grid.1, a.s, a.k, a.m, a.nnz, seed)
        .with_fields(a.fields)
        .with_memory_cap(a.memory_cap)
        .with_generator(match a.generator {
            Generator::Smooth => CGenerator::Smooth,
            Generator::Noise => CGenerator::Noise,
        });
    let model = generate_model(&spec)?;
    let manifest = model
        .save(&a.out)
        .map_err(|e| CliError::from(e).context(a.out.display()))?;
    println!("{}", manifest.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("32x16"), Ok((32, 16)));
        assert!(parse_grid("32").is_err());
        assert!(parse_grid("ax3").is_err());
    }
}
