use std::path::{Path, PathBuf};

use super::PipelineError;
use crate::codec::{compress, CodecMode, CompressedStream};
use crate::model::{Axis, WaferModel};

/// Pre-compressed slit operators, indexed `[field][slit][axis]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSlits {
    mode: CodecMode,
    streams: Vec<Vec<[CompressedStream; 3]>>,
}

fn stream_file(dir: &Path, axis: Axis, field: usize, slit: usize) -> PathBuf {
    dir.join(format!("c_{}_f{field}_s{slit}.whfz", axis.name()))
}

impl CompressedSlits {
    /// Compresses every slit sub-matrix of every axis. Slits are encoded in
    /// parallel by the codec itself.
    pub fn build(model: &WaferModel, mode: CodecMode) -> Result<Self, PipelineError> {
        let mut streams = Vec::with_capacity(model.field_count());
        for field in 0..model.field_count() {
            let slits = model.slit_windows(field)?.len();
            let mut per_slit = Vec::with_capacity(slits);
            for slit in 0..slits {
                let mut axes = Vec::with_capacity(3);
                for axis in Axis::ALL {
                    let view = model.slit_submatrix(model.field_submatrix(axis, field)?, field, slit)?;
                    axes.push(compress(view, mode).map_err(|source| PipelineError::Stage1 { field, source })?);
                }
                per_slit.push(axes.try_into().expect("three axes"));
            }
            streams.push(per_slit);
        }
        Ok(Self { mode, streams })
    }

    pub fn mode(&self) -> CodecMode {
        self.mode
    }

    pub fn get(&self, field: usize, slit: usize) -> Option<&[CompressedStream; 3]> {
        self.streams.get(field)?.get(slit)
    }

    /// Serialized bytes of all streams.
    pub fn total_bytes(&self) -> u64 {
        self.streams
            .iter()
            .flatten()
            .flatten()
            .map(|s| s.encoded_len() as u64)
            .sum()
    }

    /// Checks that the stream set matches the model's windows.
    pub fn check(&self, model: &WaferModel) -> Result<(), PipelineError> {
        if self.streams.len() != model.field_count() {
            return Err(PipelineError::Mismatch(format!(
                "{} compressed fields for a model with {}",
                self.streams.len(),
                model.field_count()
            )));
        }
        for (field, slits) in self.streams.iter().enumerate() {
            let windows = model.slit_windows(field)?;
            if slits.len() != windows.len() {
                return Err(PipelineError::Mismatch(format!(
                    "field {field}: {} compressed slits, model has {}",
                    slits.len(),
                    windows.len()
                )));
            }
            for (w, axes) in windows.iter().zip(slits) {
                for s in axes {
                    if (s.rows(), s.cols()) != (w.len(), model.interp_points()) {
                        return Err(PipelineError::Mismatch(format!(
                            "field {field}: stream of {}x{} for a {}x{} slit",
                            s.rows(),
                            s.cols(),
                            w.len(),
                            model.interp_points()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes one `.whfz` file per stream into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, PipelineError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for (field, slits) in self.streams.iter().enumerate() {
            for (slit, axes) in slits.iter().enumerate() {
                for (axis, s) in Axis::ALL.into_iter().zip(axes) {
                    let path = stream_file(dir, axis, field, slit);
                    s.save(&path).map_err(|source| PipelineError::Stage1 { field, source })?;
                    paths.push(path);
                }
            }
        }
        Ok(paths)
    }

    /// Reads the streams written by [`CompressedSlits::save`] for `model`.
    /// Corrupt files are reported as a stage-1 fault of their field.
    pub fn load(dir: impl AsRef<Path>, model: &WaferModel) -> Result<Self, PipelineError> {
        let dir = dir.as_ref();
        let mut mode = None;
        let mut streams = Vec::with_capacity(model.field_count());
        for field in 0..model.field_count() {
            let slits = model.slit_windows(field)?.len();
            let mut per_slit = Vec::with_capacity(slits);
            for slit in 0..slits {
                let mut axes = Vec::with_capacity(3);
                for axis in Axis::ALL {
                    let s = CompressedStream::load(stream_file(dir, axis, field, slit))
                        .map_err(|source| PipelineError::Stage1 { field, source })?;
                    if *mode.get_or_insert(s.mode()) != s.mode() {
                        return Err(PipelineError::Mismatch("streams use different codec modes".into()));
                    }
                    axes.push(s);
                }
                per_slit.push(axes.try_into().expect("three axes"));
            }
            streams.push(per_slit);
        }
        let out = Self {
            mode: mode.expect("a model has at least one slit"),
            streams,
        };
        out.check(model)?;
        Ok(out)
    }
}
