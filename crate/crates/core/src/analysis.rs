//! Analytic cost models: per-field FLOP and I/O counts, Roofline bounds and
//! the relative error of delivered deformations.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("reference deformation has zero norm")]
    ZeroReference,
    #[error("shape mismatch: reference {reference}, test {test}")]
    Shape { reference: usize, test: usize },
    #[error("platform file: {0}")]
    PlatformFile(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Dimensions and timing of one field scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Temperature points `T`.
    pub t: u64,
    /// Interpolated points `S`.
    pub s: u64,
    /// Slit rows `M`.
    pub m: u64,
    pub nnz_a: u64,
    pub nnz_b: u64,
    pub t_l: u64,
    pub t_d: u64,
    pub budget_ms: f64,
}

impl CostParams {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let named = [
            ("T", self.t),
            ("S", self.s),
            ("M", self.m),
            ("nnz_A", self.nnz_a),
            ("nnz_B", self.nnz_b),
            ("t_l", self.t_l),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| *v == 0) {
            return Err(AnalysisError::Parameter(format!("{name} must be positive")));
        }
        if !(self.budget_ms > 0.0 && self.budget_ms.is_finite()) {
            return Err(AnalysisError::Parameter(format!(
                "budget {} ms must be positive",
                self.budget_ms
            )));
        }
        Ok(())
    }

    fn budget_s(&self) -> f64 {
        self.budget_ms / 1e3
    }
}

/// Which step count multiplies the deformation term of the FLOP cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DeformationSteps {
    /// `t_d`, as the cost formula is printed.
    #[default]
    AsPrinted,
    /// `t_l`: deformation runs on light steps only.
    LightSteps,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlopCost {
    pub deformation_flop: f64,
    pub thermal_flop: f64,
    pub total_flop: f64,
    pub gflops_required: f64,
    /// One third of the required rate, one share per axis.
    pub gflops_per_axis: f64,
}

/// `3·t_x·M(2S−1) + T(t_l+t_d)(2nnz_A + 2nnz_B − 1)` FLOPs per field, and the
/// rate needed to finish within the budget.
pub fn flop_cost(p: &CostParams, steps: DeformationSteps) -> Result<FlopCost, AnalysisError> {
    p.validate()?;
    let t_x = match steps {
        DeformationSteps::AsPrinted => p.t_d,
        DeformationSteps::LightSteps => p.t_l,
    } as u128;
    let deformation = 3 * t_x * p.m as u128 * (2 * p.s as u128 - 1);
    let thermal = p.t as u128 * (p.t_l + p.t_d) as u128 * (2 * (p.nnz_a + p.nnz_b) as u128 - 1);
    let total = (deformation + thermal) as f64;
    let gflops = total / p.budget_s() / 1e9;
    Ok(FlopCost {
        deformation_flop: deformation as f64,
        thermal_flop: thermal as f64,
        total_flop: total,
        gflops_required: gflops,
        gflops_per_axis: gflops / 3.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IoCost {
    /// `(t_l+t_d)·T·(2T+3)`.
    pub thermal: f64,
    /// `3·t_d·(M·S + S + M)`.
    pub deformation: f64,
    pub total: f64,
}

impl IoCost {
    /// Bytes/s needed to move `values` binary32 values within the budget.
    pub fn bandwidth(values: f64, budget_ms: f64) -> f64 {
        values * 4.0 / (budget_ms / 1e3)
    }
}

/// Values read and written per field, as printed:
/// `(t_l+t_d)·T·(2T+3) + 3·t_d·(M·S + S + M)`.
pub fn io_cost(p: &CostParams) -> Result<IoCost, AnalysisError> {
    p.validate()?;
    let steps = (p.t_l + p.t_d) as u128;
    let thermal = steps * p.t as u128 * (2 * p.t as u128 + 3);
    let deformation = 3 * p.t_d as u128 * (p.m as u128 * p.s as u128 + p.s as u128 + p.m as u128);
    Ok(IoCost {
        thermal: thermal as f64,
        deformation: deformation as f64,
        total: (thermal + deformation) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Platform {
    pub name: String,
    /// Single-precision peak, FLOP/s.
    pub peak_sp: f64,
    /// Double-precision peak, FLOP/s.
    pub peak_dp: f64,
    /// Memory bandwidth, bytes/s.
    pub bandwidth: f64,
    /// Price, USD.
    pub price: f64,
}

impl Platform {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        for (what, v) in [
            ("peak_sp", self.peak_sp),
            ("peak_dp", self.peak_dp),
            ("bandwidth", self.bandwidth),
            ("price", self.price),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AnalysisError::Parameter(format!("{}: {what} = {v}", self.name)));
            }
        }
        Ok(())
    }

    /// Arithmetic intensity where the bandwidth and compute roofs meet.
    pub fn ridge_point(&self) -> f64 {
        self.peak_sp / self.bandwidth
    }
}

#[derive(Deserialize)]
struct PlatformFile {
    platform: Vec<Platform>,
}

const BUNDLED_PLATFORMS: &str = include_str!("../data/platforms.toml");

pub fn parse_platforms(text: &str) -> Result<Vec<Platform>, AnalysisError> {
    let file: PlatformFile =
        toml::from_str(text).map_err(|e| AnalysisError::PlatformFile(e.message().to_string()))?;
    for p in &file.platform {
        p.validate()?;
    }
    Ok(file.platform)
}

pub fn load_platforms(path: impl AsRef<Path>) -> Result<Vec<Platform>, AnalysisError> {
    parse_platforms(&std::fs::read_to_string(path)?)
}

/// Sample CPU, GPU and FPGA entries shipped with the crate.
pub fn bundled_platforms() -> Vec<Platform> {
    parse_platforms(BUNDLED_PLATFORMS).expect("bundled platform file is valid")
}

fn check_ai(ai: f64) -> Result<(), AnalysisError> {
    if ai > 0.0 {
        Ok(())
    } else {
        Err(AnalysisError::Parameter(format!("arithmetic intensity {ai} must be positive")))
    }
}

/// `min(peak_sp, ai · bandwidth)` in FLOP/s.
pub fn roofline_attainable(pl: &Platform, ai: f64) -> Result<f64, AnalysisError> {
    check_ai(ai)?;
    Ok(pl.peak_sp.min(ai * pl.bandwidth))
}

/// Attainable FLOP/s per USD.
pub fn normalized_roofline(pl: &Platform, ai: f64) -> Result<f64, AnalysisError> {
    if pl.price.is_nan() || pl.price <= 0.0 {
        return Err(AnalysisError::Parameter(format!("{}: price must be positive", pl.name)));
    }
    Ok(roofline_attainable(pl, ai)? / pl.price)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Memory,
    Compute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RooflinePoint {
    pub platform: String,
    pub ai: f64,
    pub attainable: f64,
    pub normalized: f64,
    pub bound: Bound,
}

/// Evaluates every platform at every intensity.
pub fn roofline_table(platforms: &[Platform], ais: &[f64]) -> Result<Vec<RooflinePoint>, AnalysisError> {
    let mut out = Vec::with_capacity(platforms.len() * ais.len());
    for pl in platforms {
        for &ai in ais {
            out.push(RooflinePoint {
                platform: pl.name.clone(),
                ai,
                attainable: roofline_attainable(pl, ai)?,
                normalized: normalized_roofline(pl, ai)?,
                bound: if ai < pl.ridge_point() {
                    Bound::Memory
                } else {
                    Bound::Compute
                },
            });
        }
    }
    Ok(out)
}

/// Relative error of one axis' deformations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QoiError {
    /// `‖ref − test‖₂ / ‖ref‖₂`.
    pub l2: f64,
    /// `max|ref − test| / max|ref|`.
    pub max_relative: f64,
}

pub fn qoi_error(reference: &[f32], test: &[f32]) -> Result<QoiError, AnalysisError> {
    if reference.len() != test.len() {
        return Err(AnalysisError::Shape {
            reference: reference.len(),
            test: test.len(),
        });
    }
    let (mut diff2, mut ref2, mut diff_max, mut ref_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (&r, &t) in reference.iter().zip(test) {
        let (r, d) = (r as f64, r as f64 - t as f64);
        diff2 += d * d;
        ref2 += r * r;
        diff_max = diff_max.max(d.abs());
        ref_max = ref_max.max(r.abs());
    }
    if ref2 == 0.0 {
        return Err(AnalysisError::ZeroReference);
    }
    Ok(QoiError {
        l2: (diff2 / ref2).sqrt(),
        max_relative: diff_max / ref_max,
    })
}

/// Bundled parameter sets at full machine scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    FullFast,
    FullSlow,
}

/// Reference throughput figures the presets are compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Targets {
    pub total_gflops: f64,
    pub per_axis_gflops: f64,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::FullFast, Preset::FullSlow];

    pub fn name(self) -> &'static str {
        match self {
            Preset::FullFast => "paper-fast",
            Preset::FullSlow => "paper-slow",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// T = 3.7e5, S = 2.56e5, M = 378, nnz(A) = 7, nnz(B) = 1 with the
    /// fast (34 + 36 ms, 50 ms budget) or slow (80 + 30 ms, 80 ms) split.
    pub fn params(self) -> CostParams {
        let (t_l, t_d, budget_ms) = match self {
            Preset::FullFast => (34, 36, 50.0),
            Preset::FullSlow => (80, 30, 80.0),
        };
        CostParams {
            t: 370_000,
            s: 256_000,
            m: 378,
            nnz_a: 7,
            nnz_b: 1,
            t_l,
            t_d,
            budget_ms,
        }
    }

    pub fn targets(self) -> Targets {
        match self {
            Preset::FullFast => Targets {
                total_gflops: 398.7,
                per_axis_gflops: 150.0,
            },
            Preset::FullSlow => Targets {
                total_gflops: 587.2,
                per_axis_gflops: 195.0,
            },
        }
    }
}
