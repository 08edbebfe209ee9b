//! Per-millisecond thermal model: source term, explicit update and
//! interpolation onto the deformation input lattice.
//!
//! All reductions accumulate in binary64 and store binary32.

use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::{Csr, Diagonal};
use crate::model::{Phase, Step, WaferModel};

/// Rows per parallel task; below this the update runs on the calling thread.
const PAR_ROWS: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum ThermalError {
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("no light footprint for slit {slit} of field {field}")]
    UnknownSlit { field: usize, slit: usize },
    #[error("light step without a slit")]
    MissingSlit,
    #[error("invalid heat load: {0}")]
    InvalidLoad(String),
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ThermalError> {
    if expected != got {
        return Err(ThermalError::Dimension { what, expected, got });
    }
    Ok(())
}

fn check_finite(what: &'static str, v: &[f32]) -> Result<(), ThermalError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(ThermalError::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// Temperatures after `k` steps and their interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub k: usize,
    pub temperatures: Vec<f32>,
    pub interpolated: Vec<f32>,
}

impl ThermalState {
    pub fn zeros(model: &WaferModel) -> Self {
        Self {
            k: 0,
            temperatures: vec![0.0; model.temperature_points()],
            interpolated: vec![0.0; model.interp_points()],
        }
    }

    /// Runs one source → update → interpolate step in place.
    pub fn advance(
        &mut self,
        model: &WaferModel,
        load: &HeatLoad,
        field: usize,
        step: &Step,
    ) -> Result<(), ThermalError> {
        let u = source_term(load, field, step)?;
        self.temperatures = thermal_step(model.a(), model.b(), &self.temperatures, &u)?;
        self.interpolated = thermal_interpolate(model.p(), &self.temperatures)?;
        self.k += 1;
        Ok(())
    }
}

/// Heat input of the scan: a dark-phase load applied every step plus one
/// nonnegative illumination footprint per slit, scaled by the dose.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatLoad {
    dark_load: Vec<f32>,
    light_load: Vec<Vec<Vec<f32>>>,
    dose_scale: f32,
}

impl HeatLoad {
    /// `light_load[field][slit]` is the footprint of that slit.
    pub fn new(
        dark_load: Vec<f32>,
        light_load: Vec<Vec<Vec<f32>>>,
        dose_scale: f32,
    ) -> Result<Self, ThermalError> {
        check_finite("dark load", &dark_load)?;
        if !dose_scale.is_finite() {
            return Err(ThermalError::InvalidLoad(format!("dose scale {dose_scale}")));
        }
        for (f, slits) in light_load.iter().enumerate() {
            for (s, fp) in slits.iter().enumerate() {
                check_len("light footprint", dark_load.len(), fp.len())?;
                if fp.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(ThermalError::InvalidLoad(format!(
                        "footprint of field {f} slit {s} is not finite and nonnegative"
                    )));
                }
            }
        }
        Ok(Self {
            dark_load,
            light_load,
            dose_scale,
        })
    }

    /// Dimensionless synthetic load: each slit footprint is a truncated bump
    /// under the slit's deformation points, and the dark load is a uniform
    /// `dark_level` (negative values model cooling).
    pub fn synthesize(model: &WaferModel, dose_scale: f32, dark_level: f32) -> Result<Self, ThermalError> {
        let t = model.temperature_points();
        let radius = 1.5 / (model.grid_rows().min(model.grid_cols()) as f64).sqrt();
        let mut light = Vec::with_capacity(model.field_count());
        for (f, fw) in model.field_windows().iter().enumerate() {
            let slits = model.slit_windows(f).expect("field index in range");
            let mut per_slit = Vec::with_capacity(slits.len());
            for sw in slits {
                let rows = fw.start + sw.start..fw.start + sw.end;
                let n = rows.len() as f64;
                let (cy, cx) = rows
                    .map(|i| model.deformation_point(i))
                    .fold((0.0, 0.0), |(y, x), (py, px)| (y + py / n, x + px / n));
                let fp = (0..t)
                    .map(|i| {
                        let (y, x) = model.mesh_point(i);
                        let d2 = ((y - cy).powi(2) + (x - cx).powi(2)) / (radius * radius);
                        if d2 < 1.0 {
                            (1.0 - d2) as f32
                        } else {
                            0.0
                        }
                    })
                    .collect();
                per_slit.push(fp);
            }
            light.push(per_slit);
        }
        Self::new(vec![dark_level; t], light, dose_scale)
    }

    pub fn dark_load(&self) -> &[f32] {
        &self.dark_load
    }

    pub fn dose_scale(&self) -> f32 {
        self.dose_scale
    }

    pub fn footprint(&self, field: usize, slit: usize) -> Option<&[f32]> {
        self.light_load.get(field)?.get(slit).map(Vec::as_slice)
    }
}

/// Heat input `u_k` for one step of `field`.
pub fn source_term(load: &HeatLoad, field: usize, step: &Step) -> Result<Vec<f32>, ThermalError> {
    match step.phase {
        Phase::Dark => Ok(load.dark_load.clone()),
        Phase::Light => {
            let slit = step.slit.ok_or(ThermalError::MissingSlit)?;
            let fp = load
                .footprint(field, slit)
                .ok_or(ThermalError::UnknownSlit { field, slit })?;
            let dose = load.dose_scale as f64;
            Ok(fp
                .iter()
                .zip(&load.dark_load)
                .map(|(&l, &d)| (dose * l as f64 + d as f64) as f32)
                .collect())
        }
    }
}

fn csr_row_dot(a: &Csr, i: usize, x: &[f32]) -> f64 {
    let (cols, vals) = a.row(i);
    cols.iter()
        .zip(vals)
        .map(|(&c, &v)| v as f64 * x[c as usize] as f64)
        .sum()
}

/// `T_{k+1} = A·T_k + B·u_k`.
pub fn thermal_step(a: &Csr, b: &Diagonal, t: &[f32], u: &[f32]) -> Result<Vec<f32>, ThermalError> {
    let n = a.rows();
    check_len("A columns", n, a.cols())?;
    check_len("B diagonal", n, b.len())?;
    check_len("temperature vector", n, t.len())?;
    check_len("source vector", n, u.len())?;
    check_finite("temperature vector", t)?;
    check_finite("source vector", u)?;
    let bd = b.values();
    let row = |i: usize| (csr_row_dot(a, i, t) + bd[i] as f64 * u[i] as f64) as f32;
    let out: Vec<f32> = if n >= 2 * PAR_ROWS {
        (0..n).into_par_iter().with_min_len(PAR_ROWS).map(row).collect()
    } else {
        (0..n).map(row).collect()
    };
    check_finite("updated temperatures", &out)?;
    Ok(out)
}

/// `S = P·T`.
pub fn thermal_interpolate(p: &Csr, t: &[f32]) -> Result<Vec<f32>, ThermalError> {
    check_len("temperature vector", p.cols(), t.len())?;
    Ok((0..p.rows()).map(|i| csr_row_dot(p, i, t) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Dense;
    use crate::model::{generate_model, ModelSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_oracle(a: &Dense, x: &[f32]) -> Vec<f64> {
        (0..a.rows())
            .map(|i| {
                (0..a.cols())
                    .map(|j| a.get(i, j) as f64 * x[j] as f64)
                    .sum()
            })
            .collect()
    }

    fn random_csr(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> Csr {
        let mut entries = Vec::with_capacity(rows);
        for _ in 0..rows {
            let mut row = Vec::new();
            for c in 0..cols as u32 {
                if rng.gen_bool(density) {
                    row.push((c, rng.gen_range(-1.0f32..1.0)));
                }
            }
            entries.push(row);
        }
        Csr::from_rows(cols, entries).unwrap()
    }

    #[test]
    fn identity_and_input_only() {
        let t = vec![1.5f32, -2.0, 0.25, 8.0];
        let u = vec![3.0f32, 4.0, -5.0, 6.0];
        let same = thermal_step(&Csr::identity(4), &Diagonal::zeros(4), &t, &u).unwrap();
        assert_eq!(same, t);
        let zero_a = Csr::from_rows(4, vec![vec![]; 4]).unwrap();
        let input = thermal_step(&zero_a, &Diagonal::identity(4), &t, &u).unwrap();
        assert_eq!(input, u);
    }

    #[test]
    fn step_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_csr(&mut rng, 16, 16, 0.3);
        let b = Diagonal::new((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let t: Vec<f32> = (0..16).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let u: Vec<f32> = (0..16).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let got = thermal_step(&a, &b, &t, &u).unwrap();
        let at = dense_oracle(&a.to_dense(), &t);
        for i in 0..16 {
            let want = at[i] + b.values()[i] as f64 * u[i] as f64;
            let rel = (got[i] as f64 - want).abs() / want.abs().max(1e-30);
            assert!(rel <= 1e-6, "row {i}: {} vs {want}", got[i]);
        }
    }

    #[test]
    fn non_finite_input_reports_index() {
        let t = vec![0.0, f32::NAN, 0.0];
        let err = thermal_step(&Csr::identity(3), &Diagonal::zeros(3), &t, &[0.0; 3]).unwrap_err();
        assert_eq!(err, ThermalError::NonFinite { what: "temperature vector", index: 1 });
        let err = thermal_step(&Csr::identity(3), &Diagonal::zeros(2), &[0.0; 3], &[0.0; 3]).unwrap_err();
        assert!(matches!(err, ThermalError::Dimension { .. }));
    }

    #[test]
    fn interpolation_cases() {
        let m = generate_model(&ModelSpec::new(6, 7, 20, 8, 2, 5, 3)).unwrap();
        let s = thermal_interpolate(m.p(), &[2.5; 42]).unwrap();
        assert!(s.iter().all(|&v| (v - 2.5).abs() <= 2.5 * 1e-6));

        let select = Csr::from_rows(5, vec![vec![(3, 1.0)], vec![(0, 1.0)]]).unwrap();
        assert_eq!(thermal_interpolate(&select, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), vec![4.0, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_csr(&mut rng, 8, 16, 0.5);
        let t: Vec<f32> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = thermal_interpolate(&p, &t).unwrap();
        for (g, w) in got.iter().zip(dense_oracle(&p.to_dense(), &t)) {
            assert!((*g as f64 - w).abs() <= 1e-6 * w.abs().max(1e-30));
        }
        assert!(thermal_interpolate(&p, &t[..15]).is_err());
    }

    #[test]
    fn source_term_cases() {
        let m = generate_model(&ModelSpec::new(8, 8, 16, 8, 2, 5, 3)).unwrap();
        let dark = Step { phase: Phase::Dark, slit: None };
        let light = Step { phase: Phase::Light, slit: Some(1) };

        let load = HeatLoad::synthesize(&m, 2.0, 0.0).unwrap();
        assert!(source_term(&load, 0, &dark).unwrap().iter().all(|&v| v == 0.0));

        let cooled = HeatLoad::synthesize(&m, 0.0, -0.5).unwrap();
        assert_eq!(source_term(&cooled, 1, &light).unwrap(), cooled.dark_load());

        // Direct construction: footprint support plus dark support.
        let t = m.temperature_points();
        let mut fp = vec![0.0f32; t];
        fp[3] = 1.0;
        fp[10] = 0.5;
        let mut dark_load = vec![0.0f32; t];
        dark_load[20] = -1.0;
        let load = HeatLoad::new(dark_load, vec![vec![vec![0.0; t], fp]], 4.0).unwrap();
        let u = source_term(&load, 0, &light).unwrap();
        let mut want = vec![0.0f32; t];
        want[3] = 4.0;
        want[10] = 2.0;
        want[20] = -1.0;
        assert_eq!(u, want);
        assert_eq!(
            source_term(&load, 0, &Step { phase: Phase::Light, slit: Some(7) }),
            Err(ThermalError::UnknownSlit { field: 0, slit: 7 })
        );
    }

    #[test]
    fn negative_footprint_rejected() {
        assert!(matches!(
            HeatLoad::new(vec![0.0; 2], vec![vec![vec![1.0, -1.0]]], 1.0),
            Err(ThermalError::InvalidLoad(_))
        ));
    }

    #[test]
    fn large_step_matches_row_by_row_evaluation() {
        let m = generate_model(&ModelSpec::new(100, 100, 16, 8, 2, 7, 9).with_fields(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = m.temperature_points();
        let t: Vec<f32> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let u: Vec<f32> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let got = thermal_step(m.a(), m.b(), &t, &u).unwrap();
        assert_eq!(got, thermal_step(m.a(), m.b(), &t, &u).unwrap());
        for i in 0..n {
            let want = (csr_row_dot(m.a(), i, &t) + m.b().values()[i] as f64 * u[i] as f64) as f32;
            assert_eq!(got[i].to_bits(), want.to_bits());
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn dark_steps_never_raise_the_maximum(
            seed in proptest::prelude::any::<u64>(),
            nnz in 1usize..8,
            dark in -0.5f32..=0.0,
            init in proptest::collection::vec(0.0f32..=1.0, 36),
        ) {
            let m = generate_model(&ModelSpec::new(6, 6, 4, 4, 2, nnz, seed).with_fields(1)).unwrap();
            let u = vec![dark; 36];
            let mut t = init;
            let mut max = t.iter().cloned().fold(f32::MIN, f32::max);
            for _ in 0..50 {
                let next = thermal_step(m.a(), m.b(), &t, &u).unwrap();
                proptest::prop_assert_eq!(&next, &thermal_step(m.a(), m.b(), &t, &u).unwrap());
                let next_max = next.iter().cloned().fold(f32::MIN, f32::max);
                proptest::prop_assert!(next_max <= max, "{} > {}", next_max, max);
                max = next_max;
                t = next;
            }
        }
    }
}
