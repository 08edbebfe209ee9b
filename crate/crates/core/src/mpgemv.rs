//! Dense matrix-vector products with selectable multiply/accumulate
//! precision and a deterministic reduction order.
//!
//! The mixed policy multiplies in binary32, accumulates the binary32
//! products in binary64 and rounds each row result to binary32 once. The
//! single policy keeps everything in binary32; the double policy widens
//! the inputs before multiplying. [`gemv_oracle`] is the full binary64
//! reference used for every error measurement.

use std::ops::Add;

use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::DenseView;

/// Minimum matrix size (elements) before rows are spread across threads.
const PAR_ELEMENTS: usize = 1 << 16;

#[derive(Debug, Error, PartialEq)]
pub enum GemvError {
    #[error("matrix is {rows}x{cols} but vector has {len} entries")]
    Dimension { rows: usize, cols: usize, len: usize },
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("tree fanout {0} is not a power of two >= 2")]
    Fanout(usize),
    #[error("non-finite {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("row {0} overflowed to a non-finite result")]
    Overflow(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionPolicy {
    Mixed,
    Single,
    Double,
}

impl PrecisionPolicy {
    pub fn name(self) -> &'static str {
        match self {
            PrecisionPolicy::Mixed => "mixed",
            PrecisionPolicy::Single => "single",
            PrecisionPolicy::Double => "double",
        }
    }
}

/// Summation order of each row's products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionShape {
    /// Left to right.
    Sequential,
    /// Recursively split the index range into `fanout` contiguous parts of
    /// `ceil(len / fanout)` elements, summing parts left to right; ranges of
    /// at most `fanout` elements are summed sequentially.
    FixedTree { fanout: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct GemvRequest<'a> {
    pub matrix: DenseView<'a>,
    pub vector: &'a [f32],
    pub policy: PrecisionPolicy,
    pub shape: ReductionShape,
}

impl<'a> GemvRequest<'a> {
    pub fn mixed(matrix: DenseView<'a>, vector: &'a [f32]) -> Self {
        Self {
            matrix,
            vector,
            policy: PrecisionPolicy::Mixed,
            shape: ReductionShape::Sequential,
        }
    }

    pub fn with_policy(mut self, policy: PrecisionPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_shape(mut self, shape: ReductionShape) -> Self {
        self.shape = shape;
        self
    }

    fn validate(&self) -> Result<(), GemvError> {
        let (rows, cols) = (self.matrix.rows(), self.matrix.cols());
        if rows == 0 || cols == 0 {
            return Err(GemvError::Empty);
        }
        if self.vector.len() != cols {
            return Err(GemvError::Dimension {
                rows,
                cols,
                len: self.vector.len(),
            });
        }
        if let ReductionShape::FixedTree { fanout } = self.shape {
            if fanout < 2 || !fanout.is_power_of_two() {
                return Err(GemvError::Fanout(fanout));
            }
        }
        if let Some(index) = self.vector.iter().position(|v| !v.is_finite()) {
            return Err(GemvError::NonFinite {
                what: "vector entry",
                index,
            });
        }
        Ok(())
    }
}

trait Precision {
    type Acc: Copy + Add<Output = Self::Acc> + Send;
    const ZERO: Self::Acc;
    fn term(a: f32, b: f32) -> Self::Acc;
    fn widen(acc: Self::Acc) -> f64;
}

struct Mixed;
struct Single;
struct Double;

impl Precision for Mixed {
    type Acc = f64;
    const ZERO: f64 = 0.0;
    #[inline(always)]
    fn term(a: f32, b: f32) -> f64 {
        (a * b) as f64
    }
    fn widen(acc: f64) -> f64 {
        acc
    }
}

impl Precision for Single {
    type Acc = f32;
    const ZERO: f32 = 0.0;
    #[inline(always)]
    fn term(a: f32, b: f32) -> f32 {
        a * b
    }
    fn widen(acc: f32) -> f64 {
        acc as f64
    }
}

impl Precision for Double {
    type Acc = f64;
    const ZERO: f64 = 0.0;
    #[inline(always)]
    fn term(a: f32, b: f32) -> f64 {
        a as f64 * b as f64
    }
    fn widen(acc: f64) -> f64 {
        acc
    }
}

fn sequential<P: Precision>(a: &[f32], b: &[f32]) -> P::Acc {
    let mut sum = P::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        sum = sum + P::term(x, y);
    }
    sum
}

fn tree<P: Precision>(a: &[f32], b: &[f32], fanout: usize) -> P::Acc {
    let len = a.len();
    if len <= fanout {
        return sequential::<P>(a, b);
    }
    let part = len.div_ceil(fanout);
    let mut sum = P::ZERO;
    for (ca, cb) in a.chunks(part).zip(b.chunks(part)) {
        sum = sum + tree::<P>(ca, cb, fanout);
    }
    sum
}

fn accumulate<P: Precision>(req: &GemvRequest<'_>) -> Vec<f64> {
    let m = req.matrix;
    let row = |i: usize| {
        let acc = match req.shape {
            ReductionShape::Sequential => sequential::<P>(m.row(i), req.vector),
            ReductionShape::FixedTree { fanout } => tree::<P>(m.row(i), req.vector, fanout),
        };
        P::widen(acc)
    };
    if m.rows() > 1 && m.rows() * m.cols() >= PAR_ELEMENTS {
        (0..m.rows()).into_par_iter().map(row).collect()
    } else {
        (0..m.rows()).map(row).collect()
    }
}

/// Row accumulators before the final rounding to binary32.
pub fn gemv_accumulators(req: &GemvRequest<'_>) -> Result<Vec<f64>, GemvError> {
    req.validate()?;
    let acc = match req.policy {
        PrecisionPolicy::Mixed => accumulate::<Mixed>(req),
        PrecisionPolicy::Single => accumulate::<Single>(req),
        PrecisionPolicy::Double => accumulate::<Double>(req),
    };
    Ok(acc)
}

/// `R = M·V` under the request's precision policy and reduction shape.
pub fn gemv(req: &GemvRequest<'_>) -> Result<Vec<f32>, GemvError> {
    let out: Vec<f32> = gemv_accumulators(req)?.into_iter().map(|v| v as f32).collect();
    if let Some(row) = out.iter().position(|v| !v.is_finite()) {
        let m = req.matrix;
        if let Some(j) = m.row(row).iter().position(|v| !v.is_finite()) {
            return Err(GemvError::NonFinite {
                what: "matrix entry",
                index: row * m.cols() + j,
            });
        }
        return Err(GemvError::Overflow(row));
    }
    Ok(out)
}

/// Full binary64 sequential product.
pub fn gemv_oracle(matrix: DenseView<'_>, vector: &[f32]) -> Result<Vec<f64>, GemvError> {
    let (rows, cols) = (matrix.rows(), matrix.cols());
    if rows == 0 || cols == 0 {
        return Err(GemvError::Empty);
    }
    if vector.len() != cols {
        return Err(GemvError::Dimension { rows, cols, len: vector.len() });
    }
    let mut out = vec![0.0f64; rows];
    for (i, r) in out.iter_mut().enumerate() {
        for (j, &a) in matrix.row(i).iter().enumerate() {
            if !a.is_finite() {
                return Err(GemvError::NonFinite { what: "matrix entry", index: i * cols + j });
            }
            *r += a as f64 * vector[j] as f64;
        }
    }
    if let Some(index) = vector.iter().position(|v| !v.is_finite()) {
        return Err(GemvError::NonFinite { what: "vector entry", index });
    }
    Ok(out)
}

/// Worst-case significand bits contaminated by a sequential binary32
/// reduction over `width` terms: `floor(log2(width))`. Heuristic upper bound,
/// one bit per doubling of the running sum.
pub fn reduction_bits_lost(width: usize) -> u32 {
    assert!(width >= 1, "reduction width must be at least 1");
    width.ilog2()
}

/// FLOPs of one `rows x cols` product: `rows·(2·cols − 1)`.
pub fn gemv_flops(rows: usize, cols: usize) -> u64 {
    rows as u64 * (2 * cols as u64).saturating_sub(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Dense;
    use proptest::prelude::*;

    const ALL: [PrecisionPolicy; 3] = [
        PrecisionPolicy::Mixed,
        PrecisionPolicy::Single,
        PrecisionPolicy::Double,
    ];

    #[test]
    fn identity_is_exact_for_every_policy() {
        let m = Dense::identity(4);
        let v = [1.0e-30f32, -3.5, 7.25e20, 0.1];
        for policy in ALL {
            for shape in [ReductionShape::Sequential, ReductionShape::FixedTree { fanout: 2 }] {
                let r = gemv(&GemvRequest::mixed(m.view(), &v).with_policy(policy).with_shape(shape)).unwrap();
                assert_eq!(r, v);
            }
        }
        let o = gemv_oracle(m.view(), &v).unwrap();
        assert_eq!(o, v.map(|x| x as f64));
    }

    #[test]
    fn wide_ones_row_is_exact_under_mixed() {
        let w = 256_000;
        let m = Dense::new(1, w, vec![1.0; w]).unwrap();
        let v = vec![1.0f32; w];
        assert_eq!(gemv(&GemvRequest::mixed(m.view(), &v)).unwrap(), vec![256_000.0]);
    }

    #[test]
    fn single_policy_loses_the_perturbations() {
        let w = 256_000;
        let m = Dense::new(1, w, vec![1.0; w]).unwrap();
        let v: Vec<f32> = (0..w)
            .map(|j| if j % 2 == 0 { 1.0 + 3.0 / 1024.0 } else { 1.0 + 1.0 / 1024.0 })
            .collect();
        let oracle = gemv_oracle(m.view(), &v).unwrap()[0];
        let rel = |r: f32| (r as f64 - oracle).abs() / oracle.abs();
        let single = gemv(&GemvRequest::mixed(m.view(), &v).with_policy(PrecisionPolicy::Single)).unwrap()[0];
        let mixed = gemv(&GemvRequest::mixed(m.view(), &v)).unwrap()[0];
        assert_ne!(single, oracle as f32);
        assert!(rel(single) >= 256.0 * rel(mixed) && rel(single) > 0.0, "{} vs {}", rel(single), rel(mixed));
    }

    #[test]
    fn oracle_hand_case() {
        let m = Dense::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(gemv_oracle(m.view(), &[1.0; 3]).unwrap(), vec![6.0, 15.0]);
    }

    #[test]
    fn bits_lost() {
        assert_eq!(reduction_bits_lost(1), 0);
        assert_eq!(reduction_bits_lost(2), 1);
        assert_eq!(reduction_bits_lost(256_000), 17);
    }

    #[test]
    fn errors() {
        let m = Dense::zeros(2, 3);
        assert_eq!(
            gemv(&GemvRequest::mixed(m.view(), &[0.0; 2])),
            Err(GemvError::Dimension { rows: 2, cols: 3, len: 2 })
        );
        let req = GemvRequest::mixed(m.view(), &[0.0; 3]).with_shape(ReductionShape::FixedTree { fanout: 3 });
        assert_eq!(gemv(&req), Err(GemvError::Fanout(3)));
        let bad = Dense::new(1, 2, vec![1.0, f32::INFINITY]).unwrap();
        assert_eq!(
            gemv(&GemvRequest::mixed(bad.view(), &[1.0, 0.0])),
            Err(GemvError::NonFinite { what: "matrix entry", index: 1 })
        );
        assert!(matches!(
            gemv(&GemvRequest::mixed(m.view(), &[0.0, f32::NAN, 0.0])),
            Err(GemvError::NonFinite { what: "vector entry", index: 1 })
        ));
        let big = Dense::new(1, 2, vec![f32::MAX, f32::MAX]).unwrap();
        assert_eq!(gemv(&GemvRequest::mixed(big.view(), &[2.0, 2.0])), Err(GemvError::Overflow(0)));
    }

    #[test]
    fn flops() {
        assert_eq!(gemv_flops(378, 256_000), 378 * 511_999);
        assert_eq!(gemv_flops(1, 1), 1);
    }

    fn matrix_and_vector(max_rows: usize, max_cols: usize) -> impl Strategy<Value = (Dense, Vec<f32>)> {
        (1..=max_rows, 1..=max_cols).prop_flat_map(|(h, w)| {
            (
                proptest::collection::vec(-1.0e3f32..1.0e3, h * w),
                proptest::collection::vec(-1.0e3f32..1.0e3, w),
            )
                .prop_map(move |(m, v)| (Dense::new(h, w, m).unwrap(), v))
        })
    }

    proptest! {
        #[test]
        fn mixed_within_forward_bound((m, v) in matrix_and_vector(8, 300)) {
            let r = gemv(&GemvRequest::mixed(m.view(), &v)).unwrap();
            let o = gemv_oracle(m.view(), &v).unwrap();
            let w = m.cols() as f64;
            for i in 0..m.rows() {
                let abs: f64 = m.row(i).iter().zip(&v).map(|(&a, &b)| (a as f64 * b as f64).abs()).sum();
                let bound = w * f64::powi(2.0, -24) * abs;
                prop_assert!((r[i] as f64 - o[i]).abs() <= bound);
            }
        }

        #[test]
        fn single_width_four_matches_brute_force((m, v) in matrix_and_vector(6, 4).prop_filter("width 4", |(m, _)| m.cols() == 4)) {
            let r = gemv(&GemvRequest::mixed(m.view(), &v).with_policy(PrecisionPolicy::Single)).unwrap();
            for (i, ri) in r.iter().enumerate() {
                let row = m.row(i);
                let mut s = 0.0f32;
                s += row[0] * v[0];
                s += row[1] * v[1];
                s += row[2] * v[2];
                s += row[3] * v[3];
                prop_assert_eq!(ri.to_bits(), s.to_bits());
            }
        }

        #[test]
        fn tree_is_reproducible_and_close((m, v) in matrix_and_vector(4, 2000), log_fanout in 1u32..6) {
            let shape = ReductionShape::FixedTree { fanout: 1 << log_fanout };
            let req = GemvRequest::mixed(m.view(), &v).with_shape(shape);
            let a = gemv(&req).unwrap();
            let b = gemv(&req).unwrap();
            prop_assert_eq!(&a, &b);
            let seq = gemv_accumulators(&GemvRequest::mixed(m.view(), &v)).unwrap();
            let tr = gemv_accumulators(&req).unwrap();
            for i in 0..m.rows() {
                let abs: f64 = m.row(i).iter().zip(&v).map(|(&a, &b)| ((a * b) as f64).abs()).sum();
                // Both orders are within (W-1)·2^-53·Σ|p| of the exact sum of the products.
                let bound = 2.0 * (m.cols() as f64) * f64::EPSILON / 2.0 * abs;
                prop_assert!((seq[i] - tr[i]).abs() <= bound);
            }
        }
    }
}
