use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Axis, ModelError, SizeReport, WaferModel};
use crate::matrix::{Csr, Dense, Diagonal};

/// Neighbor offsets in coupling order: the four edge neighbors first, then
/// the diagonals.
const STENCIL: [(isize, isize); 8] = [
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-1, -1),
    (1, 1),
    (-1, 1),
    (1, -1),
];

/// Peak magnitude of the synthesized deformation response.
const C_AMPLITUDE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CGenerator {
    /// Sampled smooth decay around each deformation point.
    Smooth,
    /// Independent uniform noise, the worst case for the codec.
    Noise,
}

/// Parameters for [`generate_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Length of the interpolated temperature vector (columns of C).
    pub interp_points: usize,
    /// Rows of each full deformation operator.
    pub deformation_rows: usize,
    /// Rows per slit window.
    pub slit_rows: usize,
    pub nnz_target: usize,
    pub seed: u64,
    pub fields: usize,
    pub memory_cap_bytes: u64,
    pub generator: CGenerator,
}

impl ModelSpec {
    pub fn new(
        grid_rows: usize,
        grid_cols: usize,
        interp_points: usize,
        deformation_rows: usize,
        slit_rows: usize,
        nnz_target: usize,
        seed: u64,
    ) -> Self {
        Self {
            grid_rows,
            grid_cols,
            interp_points,
            deformation_rows,
            slit_rows,
            nnz_target,
            seed,
            fields: 2,
            memory_cap_bytes: 1 << 30,
            generator: CGenerator::Smooth,
        }
    }

    pub fn with_fields(mut self, fields: usize) -> Self {
        self.fields = fields;
        self
    }

    pub fn with_generator(mut self, generator: CGenerator) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_memory_cap(mut self, bytes: u64) -> Self {
        self.memory_cap_bytes = bytes;
        self
    }

    fn check(&self) -> Result<(), ModelError> {
        let bad = |s: String| Err(ModelError::Spec(s));
        let t = self.grid_rows.saturating_mul(self.grid_cols);
        if t < 4 {
            return bad(format!("grid {}x{} has fewer than 4 points", self.grid_rows, self.grid_cols));
        }
        if t > u32::MAX as usize {
            return bad(format!("{t} temperature points exceed the u32 column index range"));
        }
        if self.interp_points == 0 || self.interp_points > t {
            return bad(format!("S = {} must be in 1..={t}", self.interp_points));
        }
        if self.slit_rows == 0 || self.slit_rows > self.deformation_rows {
            return bad(format!(
                "M = {} must be in 1..=K ({})",
                self.slit_rows, self.deformation_rows
            ));
        }
        if self.nnz_target == 0 {
            return bad("nnz_target must be at least 1".into());
        }
        if self.fields == 0 || self.deformation_rows / self.fields < self.slit_rows {
            return bad(format!(
                "{} fields of K = {} rows leave less than one slit of {} rows per field",
                self.fields, self.deformation_rows, self.slit_rows
            ));
        }
        Ok(())
    }
}

/// Bytes occupied by a dense binary32 matrix.
pub fn dense_bytes(rows: usize, cols: usize) -> u64 {
    rows as u64 * cols as u64 * 4
}

/// Lattice shape holding at least `n` points with roughly the given aspect.
fn lattice(n: usize, aspect: f64) -> (usize, usize) {
    let cols = ((n as f64 * aspect).sqrt().ceil() as usize).clamp(1, n);
    let rows = n.div_ceil(cols);
    (rows, cols)
}

/// Position of point `i` of an `n`-point lattice in the unit square. Points
/// are numbered in serpentine order so consecutive indices stay adjacent.
fn lattice_point(n: usize, aspect: f64, i: usize) -> (f64, f64) {
    let (rows, cols) = lattice(n, aspect);
    let r = i / cols;
    let c = if r.is_multiple_of(2) { i % cols } else { cols - 1 - i % cols };
    ((r as f64 + 0.5) / rows as f64, (c as f64 + 0.5) / cols as f64)
}

impl WaferModel {
    fn aspect(&self) -> f64 {
        self.grid_cols as f64 / self.grid_rows as f64
    }

    /// Position of deformation point `i` in the unit square.
    pub fn deformation_point(&self, i: usize) -> (f64, f64) {
        lattice_point(self.deformation_rows(), self.aspect(), i)
    }

    /// Position of interpolation point `j` in the unit square.
    pub fn interp_point(&self, j: usize) -> (f64, f64) {
        lattice_point(self.interp_points(), self.aspect(), j)
    }

    /// Position of thermal mesh point `t` in the unit square.
    pub fn mesh_point(&self, t: usize) -> (f64, f64) {
        let (r, c) = (t / self.grid_cols, t % self.grid_cols);
        (
            (r as f64 + 0.5) / self.grid_rows as f64,
            (c as f64 + 0.5) / self.grid_cols as f64,
        )
    }
}

fn thermal_operators(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Result<(Csr, Diagonal), ModelError> {
    let (gr, gc) = (spec.grid_rows, spec.grid_cols);
    let t = gr * gc;
    let conductivity: Vec<f32> = (0..t).map(|_| rng.gen_range(0.02f32..0.1)).collect();
    let loss: Vec<f32> = (0..t).map(|_| rng.gen_range(0.002f32..0.02)).collect();
    let neighbors = &STENCIL[..(spec.nnz_target - 1).min(STENCIL.len())];

    let mut rows = Vec::with_capacity(t);
    for r in 0..gr {
        for c in 0..gc {
            let i = r * gc + c;
            let mut row = Vec::with_capacity(neighbors.len() + 1);
            let mut coupled = 0.0f64;
            for &(dr, dc) in neighbors {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= gr as isize || nc >= gc as isize {
                    continue;
                }
                let j = nr as usize * gc + nc as usize;
                let w = 0.5 * (conductivity[i] + conductivity[j]);
                coupled += w as f64;
                row.push((j as u32, w));
            }
            let diag = (1.0 - loss[i] as f64 - coupled) as f32;
            row.push((i as u32, diag));
            rows.push(row);
        }
    }
    Ok((Csr::from_rows(t, rows)?, Diagonal::new(loss)))
}

/// Bilinear restriction from the thermal mesh onto the interpolation lattice.
fn interpolation_operator(gr: usize, gc: usize, s: usize) -> Result<Csr, ModelError> {
    let aspect = gc as f64 / gr as f64;
    let axis_weights = |pos: f64, n: usize| -> [(usize, f64); 2] {
        let x = (pos * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let lo = (x.floor() as usize).min(n.saturating_sub(2));
        let hi = (lo + 1).min(n - 1);
        let frac = x - lo as f64;
        [(lo, 1.0 - frac), (hi, frac)]
    };
    let mut rows = Vec::with_capacity(s);
    for j in 0..s {
        let (y, x) = lattice_point(s, aspect, j);
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (r, wy) in axis_weights(y, gr) {
            for (c, wx) in axis_weights(x, gc) {
                let w = wy * wx;
                if w > 0.0 {
                    *acc.entry((r * gc + c) as u32).or_default() += w;
                }
            }
        }
        rows.push(acc.into_iter().map(|(c, w)| (c, w as f32)).collect());
    }
    Ok(Csr::from_rows(gr * gc, rows)?)
}

fn deformation_operators(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> [Dense; 3] {
    let (k, s) = (spec.deformation_rows, spec.interp_points);
    let aspect = spec.grid_cols as f64 / spec.grid_rows as f64;
    match spec.generator {
        CGenerator::Noise => Axis::ALL.map(|_| {
            Dense::from_fn(k, s, |_, _| (rng.gen_range(-1.0..1.0) * C_AMPLITUDE) as f32)
        }),
        CGenerator::Smooth => {
            let (_, s_cols) = lattice(s, aspect);
            let sigma = 6.5 / s_cols as f64;
            // Per-axis gain varies smoothly over the surface in [0.8, 1.2].
            let waves: [(f64, f64, f64); 3] = [(); 3].map(|_| {
                (
                    rng.gen_range(0.5..2.0),
                    rng.gen_range(0.5..2.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            });
            let sources: Vec<(f64, f64)> = (0..s).map(|j| lattice_point(s, aspect, j)).collect();
            let targets: Vec<(f64, f64)> = (0..k).map(|i| lattice_point(k, aspect, i)).collect();
            let gain: Vec<[f64; 3]> = targets
                .iter()
                .map(|&(y, x)| waves.map(|(fy, fx, ph)| 1.0 + 0.2 * (fy * y + fx * x + ph).sin()))
                .collect();
            Axis::ALL.map(|axis| {
                Dense::from_fn(k, s, |i, j| {
                    let (py, px) = targets[i];
                    let (qy, qx) = sources[j];
                    let (dy, dx) = ((qy - py) / sigma, (qx - px) / sigma);
                    let g = (-0.5 * (dx * dx + dy * dy)).exp();
                    let shape = match axis {
                        Axis::X => dx * g,
                        Axis::Y => dy * g,
                        Axis::Z => g,
                    };
                    (C_AMPLITUDE * gain[i][axis.index()] * shape) as f32
                })
            })
        }
    }
}

/// Synthesizes a model with the requested structure. Deterministic in
/// `spec.seed`.
pub fn generate_model(spec: &ModelSpec) -> Result<WaferModel, ModelError> {
    spec.check()?;
    let c_bytes = 3 * dense_bytes(spec.deformation_rows, spec.interp_points);
    if c_bytes > spec.memory_cap_bytes {
        return Err(ModelError::TooLarge(SizeReport {
            rows: spec.deformation_rows,
            cols: spec.interp_points,
            axes: 3,
            bytes: c_bytes,
            cap: spec.memory_cap_bytes,
        }));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (a, b) = thermal_operators(spec, &mut rng)?;

    let field_rows = spec.deformation_rows / spec.fields;
    let slits = field_rows / spec.slit_rows;
    let field_windows = (0..spec.fields)
        .map(|f| f * field_rows..(f + 1) * field_rows)
        .collect();
    let slit_windows = (0..spec.fields)
        .map(|_| {
            (0..slits)
                .map(|s| s * spec.slit_rows..(s + 1) * spec.slit_rows)
                .collect()
        })
        .collect();

    let p = interpolation_operator(spec.grid_rows, spec.grid_cols, spec.interp_points)?;
    let c = deformation_operators(spec, &mut rng);
    let model = WaferModel {
        grid_rows: spec.grid_rows,
        grid_cols: spec.grid_cols,
        nnz_max: spec.nnz_target,
        a,
        b,
        p,
        c,
        field_windows,
        slit_windows,
    };
    model.validate()?;
    Ok(model)
}

/// One `size x size` field operator of the X axis, cut from a two-field
/// model on a mesh of about `30·size` points (150x200 at `size = 1024`).
/// Used to benchmark and check the codec on realistically sampled data.
pub fn synthetic_field_operator(size: usize, generator: CGenerator, seed: u64) -> Result<Dense, ModelError> {
    let t = 30 * size.max(1);
    let rows = ((t as f64 * 0.75).sqrt().round() as usize).max(2);
    let cols = t.div_ceil(rows).max(2);
    let spec = ModelSpec::new(rows, cols, size, 2 * size, size, 7, seed)
        .with_fields(2)
        .with_generator(generator);
    let model = generate_model(&spec)?;
    Ok(model.field_submatrix(Axis::X, 0)?.to_owned())
}
