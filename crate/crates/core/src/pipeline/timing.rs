//! Two-stage pipeline algebra and the simulated-time scheduler.

use super::{Execution, PipelineError};

fn check_times(t_transfer: f64, t_compute: f64, t_decode: f64, ratio: f64) -> Result<(), PipelineError> {
    for (name, v) in [
        ("T_transfer", t_transfer),
        ("T_compute", t_compute),
        ("T_decode", t_decode),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(PipelineError::Config(format!("{name} = {v} must be finite and >= 0")));
        }
    }
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return Err(PipelineError::Config(format!("compression ratio R = {ratio} must be >= 1")));
    }
    Ok(())
}

/// Steady-state interval between outputs.
///
/// Uncompressed: `max(T_t, T_c)`. Compressed: `max(T_t / R, T_c + T_dec)`.
/// `t_decode` is ignored without compression.
pub fn pipeline_period(
    t_transfer: f64,
    t_compute: f64,
    t_decode: f64,
    ratio: f64,
    compressed: bool,
) -> Result<f64, PipelineError> {
    check_times(t_transfer, t_compute, t_decode, ratio)?;
    Ok(if compressed {
        (t_transfer / ratio).max(t_compute + t_decode)
    } else {
        t_transfer.max(t_compute)
    })
}

/// End-to-end delay of one item through an idle pipeline.
///
/// Uncompressed: `T_c + T_t`. Compressed: `T_c + T_t / R + T_dec`.
pub fn pipeline_latency(
    t_transfer: f64,
    t_compute: f64,
    t_decode: f64,
    ratio: f64,
    compressed: bool,
) -> Result<f64, PipelineError> {
    check_times(t_transfer, t_compute, t_decode, ratio)?;
    Ok(if compressed {
        t_compute + t_transfer / ratio + t_decode
    } else {
        t_compute + t_transfer
    })
}

/// Compression shortens the transfer-bound period only when the decoder
/// outpaces the link.
pub fn compression_beneficial(bandwidth: f64, decode_throughput: f64) -> bool {
    decode_throughput >= bandwidth
}

/// Transfer and decode times of an `bytes`-sized operator over a link of
/// `bandwidth` with a decoder producing `decode_throughput` bytes/s.
pub fn stage_times(bytes: f64, bandwidth: f64, decode_throughput: f64) -> (f64, f64) {
    (bytes / bandwidth, bytes / decode_throughput)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Durations {
    pub transfer: f64,
    pub decode: f64,
    pub compute: f64,
}

/// Start and end of each stage of one item, seconds since the run start.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stamps {
    pub transfer: (f64, f64),
    pub decode: (f64, f64),
    pub compute: (f64, f64),
}

/// Places items on two resources: the link carries transfers, the device
/// carries decode followed by compute. Overlapped execution lets an item's
/// transfer start once a buffer is free, i.e. once item `i - depth` has
/// finished computing; sequential execution starts each transfer after the
/// previous item completes.
pub fn simulate(items: &[Durations], depth: usize, execution: Execution) -> Vec<Stamps> {
    let mut out: Vec<Stamps> = Vec::with_capacity(items.len());
    let (mut link_free, mut device_free) = (0.0f64, 0.0f64);
    for (i, d) in items.iter().enumerate() {
        let ready = match execution {
            Execution::Overlapped => {
                let slot = if i >= depth { out[i - depth].compute.1 } else { 0.0 };
                link_free.max(slot)
            }
            Execution::Sequential => device_free,
        };
        let transfer = (ready, ready + d.transfer);
        link_free = transfer.1;
        let ds = transfer.1.max(device_free);
        let decode = (ds, ds + d.decode);
        let compute = (decode.1, decode.1 + d.compute);
        device_free = compute.1;
        out.push(Stamps {
            transfer,
            decode,
            compute,
        });
    }
    out
}
