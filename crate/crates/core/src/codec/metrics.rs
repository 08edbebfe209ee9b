use super::{CodecError, CompressedStream};
use crate::matrix::DenseView;

/// Error and size figures of one compression run.
///
/// `nrmse` and `psnr` use the value range of the original array:
/// `nrmse = rmse / (max - min)` and `psnr = 20·log10((max - min) / (2·rmse))`.
/// A zero `rmse` gives `psnr = +inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecMetrics {
    pub bits_per_value: f64,
    pub ratio: f64,
    pub rmse: f64,
    pub nrmse: f64,
    pub max_pointwise_error: f64,
    pub psnr: f64,
}

pub fn codec_metrics(
    original: DenseView<'_>,
    decoded: DenseView<'_>,
    stream: &CompressedStream,
) -> Result<CodecMetrics, CodecError> {
    if (original.rows(), original.cols()) != (decoded.rows(), decoded.cols()) {
        return Err(CodecError::Dimension(format!(
            "original {}x{} vs decoded {}x{}",
            original.rows(),
            original.cols(),
            decoded.rows(),
            decoded.cols()
        )));
    }
    let n = original.data().len() as f64;
    let (mut sq, mut max_err) = (0.0f64, 0.0f64);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&o, &d) in original.data().iter().zip(decoded.data()) {
        let (o, d) = (o as f64, d as f64);
        let e = (o - d).abs();
        sq += e * e;
        max_err = max_err.max(e);
        lo = lo.min(o);
        hi = hi.max(o);
    }
    let rmse = (sq / n).sqrt();
    let range = hi - lo;
    let (nrmse, psnr) = if rmse == 0.0 {
        (0.0, f64::INFINITY)
    } else {
        (rmse / range, 20.0 * (range / (2.0 * rmse)).log10())
    };
    Ok(CodecMetrics {
        bits_per_value: stream.bits_per_value(),
        ratio: stream.ratio(),
        rmse,
        nrmse,
        max_pointwise_error: max_err,
        psnr,
    })
}
