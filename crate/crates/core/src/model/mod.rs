//! Wafer model operators, field/slit windows and scan schedules.

mod generate;
mod manifest;
mod schedule;

use std::fmt;
use std::ops::Range;

use thiserror::Error;

use crate::container::ContainerError;
use crate::matrix::{Csr, Dense, DenseView, Diagonal, MatrixError};

pub use generate::{dense_bytes, generate_model, synthetic_field_operator, CGenerator, ModelSpec};
pub use manifest::{Manifest, MANIFEST_FILE};
pub use schedule::{
    build_scan_schedule, FieldSchedule, Phase, ScanKind, ScanSchedule, ScheduleOverrides, Step,
};

/// Deformation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Size of a dense allocation that exceeded the configured cap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeReport {
    pub rows: usize,
    pub cols: usize,
    pub axes: usize,
    pub bytes: u64,
    pub cap: u64,
}

impl fmt::Display for SizeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} x {}x{} binary32 = {} bytes ({:.1} MiB) exceeds cap of {} bytes",
            self.axes,
            self.rows,
            self.cols,
            self.bytes,
            self.bytes as f64 / (1u64 << 20) as f64,
            self.cap
        )
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("deformation operator too large: {0}")]
    TooLarge(SizeReport),
    #[error("model invariant violated: {0}")]
    Invariant(String),
    #[error("unknown field {0}")]
    UnknownField(usize),
    #[error("unknown slit {slit} in field {field}")]
    UnknownSlit { field: usize, slit: usize },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("container: {0}")]
    Container(#[from] ContainerError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The operators of the thermal and deformation models plus the row windows
/// that select the field and slit sub-matrices of each deformation operator.
///
/// Slit windows are stored relative to the start of their field window.
#[derive(Debug, Clone, PartialEq)]
pub struct WaferModel {
    grid_rows: usize,
    grid_cols: usize,
    nnz_max: usize,
    a: Csr,
    b: Diagonal,
    p: Csr,
    c: [Dense; 3],
    field_windows: Vec<Range<usize>>,
    slit_windows: Vec<Vec<Range<usize>>>,
}

impl WaferModel {
    /// Assembles a model from explicit operators, checking every structural
    /// invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        grid_rows: usize,
        grid_cols: usize,
        nnz_max: usize,
        a: Csr,
        b: Diagonal,
        p: Csr,
        c: [Dense; 3],
        field_windows: Vec<Range<usize>>,
        slit_windows: Vec<Vec<Range<usize>>>,
    ) -> Result<Self, ModelError> {
        let m = Self {
            grid_rows,
            grid_cols,
            nnz_max,
            a,
            b,
            p,
            c,
            field_windows,
            slit_windows,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let inv = |s: String| Err(ModelError::Invariant(s));
        let t = self.temperature_points();
        if t == 0 {
            return inv("empty thermal grid".into());
        }
        if self.a.rows() != t || self.a.cols() != t {
            return inv(format!("A is {}x{}, expected {t}x{t}", self.a.rows(), self.a.cols()));
        }
        for i in 0..t {
            let (cols, vals) = self.a.row(i);
            if cols.is_empty() || cols.len() > self.nnz_max {
                return inv(format!("A row {i} has {} nonzeros", cols.len()));
            }
            let abs_sum: f64 = vals.iter().map(|v| v.abs() as f64).sum();
            if abs_sum > 1.0 + 1e-6 {
                return inv(format!("A row {i} absolute sum {abs_sum} > 1"));
            }
        }
        if self.b.len() != t {
            return inv(format!("B has {} diagonal values, expected {t}", self.b.len()));
        }
        if self.p.cols() != t {
            return inv(format!("P has {} columns, expected {t}", self.p.cols()));
        }
        for i in 0..self.p.rows() {
            let (_, vals) = self.p.row(i);
            if vals.iter().any(|&v| v < 0.0) {
                return inv(format!("P row {i} has a negative weight"));
            }
            let s: f64 = vals.iter().map(|&v| v as f64).sum();
            if (s - 1.0).abs() > 1e-6 {
                return inv(format!("P row {i} sums to {s}"));
            }
        }
        let s = self.p.rows();
        let k = self.c[0].rows();
        for (ax, c) in Axis::ALL.iter().zip(&self.c) {
            if c.cols() != s || c.rows() != k {
                return inv(format!(
                    "C_{} is {}x{}, expected {k}x{s}",
                    ax.name(),
                    c.rows(),
                    c.cols()
                ));
            }
        }
        if self.slit_windows.len() != self.field_windows.len() {
            return inv("slit window lists do not match field count".into());
        }
        for (f, (fw, slits)) in self.field_windows.iter().zip(&self.slit_windows).enumerate() {
            if fw.start >= fw.end || fw.end > k {
                return inv(format!("field {f} window {fw:?} outside [0, {k})"));
            }
            for (sl, sw) in slits.iter().enumerate() {
                if sw.start >= sw.end || sw.end > fw.end - fw.start {
                    return inv(format!("slit {sl} of field {f} window {sw:?} outside field"));
                }
            }
        }
        Ok(())
    }

    pub fn grid_rows(&self) -> usize {
        self.grid_rows
    }

    pub fn grid_cols(&self) -> usize {
        self.grid_cols
    }

    /// Number of thermal mesh points.
    pub fn temperature_points(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    /// Length of the interpolated temperature vector.
    pub fn interp_points(&self) -> usize {
        self.p.rows()
    }

    /// Rows of each full deformation operator.
    pub fn deformation_rows(&self) -> usize {
        self.c[0].rows()
    }

    pub fn nnz_max(&self) -> usize {
        self.nnz_max
    }

    pub fn a(&self) -> &Csr {
        &self.a
    }

    pub fn b(&self) -> &Diagonal {
        &self.b
    }

    pub fn p(&self) -> &Csr {
        &self.p
    }

    pub fn c(&self, axis: Axis) -> &Dense {
        &self.c[axis.index()]
    }

    pub fn field_count(&self) -> usize {
        self.field_windows.len()
    }

    pub fn field_windows(&self) -> &[Range<usize>] {
        &self.field_windows
    }

    pub fn slit_windows(&self, field: usize) -> Result<&[Range<usize>], ModelError> {
        self.slit_windows
            .get(field)
            .map(Vec::as_slice)
            .ok_or(ModelError::UnknownField(field))
    }

    pub fn field_submatrix(&self, axis: Axis, field: usize) -> Result<DenseView<'_>, ModelError> {
        fetch_field_submatrix(self.c(axis), &self.field_windows, field)
    }

    pub fn slit_submatrix<'a>(
        &self,
        field_view: DenseView<'a>,
        field: usize,
        slit: usize,
    ) -> Result<DenseView<'a>, ModelError> {
        let windows = self.slit_windows(field)?;
        fetch_slit_submatrix(field_view, windows, slit).map_err(|e| match e {
            ModelError::UnknownSlit { slit, .. } => ModelError::UnknownSlit { field, slit },
            other => other,
        })
    }
}

/// Borrows the rows of `c` that belong to `field_id`.
pub fn fetch_field_submatrix<'a>(
    c: &'a Dense,
    field_windows: &[Range<usize>],
    field_id: usize,
) -> Result<DenseView<'a>, ModelError> {
    let w = field_windows
        .get(field_id)
        .ok_or(ModelError::UnknownField(field_id))?;
    Ok(c.row_window(w.clone())?)
}

/// Borrows the rows of a field sub-matrix that belong to `slit_id`; windows
/// are relative to the field.
pub fn fetch_slit_submatrix<'a>(
    c_field: DenseView<'a>,
    slit_windows: &[Range<usize>],
    slit_id: usize,
) -> Result<DenseView<'a>, ModelError> {
    let w = slit_windows.get(slit_id).ok_or(ModelError::UnknownSlit {
        field: 0,
        slit: slit_id,
    })?;
    Ok(c_field.row_window(w.clone())?)
}
