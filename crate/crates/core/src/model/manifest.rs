use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Axis, ModelError, WaferModel};
use crate::container::{self, Stored};

pub const MANIFEST_FILE: &str = "model.toml";

/// Text manifest describing a persisted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub temperature_points: usize,
    pub interp_points: usize,
    pub deformation_rows: usize,
    pub nnz_max: usize,
    pub matrices: Matrices,
    pub fields: Vec<FieldEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrices {
    pub a: String,
    pub b: String,
    pub p: String,
    pub c_x: String,
    pub c_y: String,
    pub c_z: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    /// `[start, end)` rows of the full deformation operator.
    pub rows: [usize; 2],
    /// `[start, end)` rows relative to the field window, one per slit.
    pub slits: Vec<[usize; 2]>,
}

fn expect_kind<T>(
    stored: Stored,
    name: &str,
    pick: impl FnOnce(Stored) -> Option<T>,
) -> Result<T, ModelError> {
    let kind = stored.kind_name();
    pick(stored).ok_or_else(|| ModelError::Manifest(format!("{name}: unexpected {kind} matrix")))
}

impl WaferModel {
    /// Writes every operator as a matrix container file plus a manifest into
    /// `dir`. Returns the manifest path.
    pub fn save(&self, dir: &Path) -> Result<std::path::PathBuf, ModelError> {
        fs::create_dir_all(dir)?;
        let matrices = Matrices {
            a: "A.whfm".into(),
            b: "B.whfm".into(),
            p: "P.whfm".into(),
            c_x: "C_x.whfm".into(),
            c_y: "C_y.whfm".into(),
            c_z: "C_z.whfm".into(),
        };
        container::save(dir.join(&matrices.a), &Stored::Csr(self.a.clone()))?;
        container::save(dir.join(&matrices.b), &Stored::Diagonal(self.b.clone()))?;
        container::save(dir.join(&matrices.p), &Stored::Csr(self.p.clone()))?;
        for (axis, file) in Axis::ALL.iter().zip([&matrices.c_x, &matrices.c_y, &matrices.c_z]) {
            container::save(dir.join(file), &Stored::Dense(self.c(*axis).clone()))?;
        }
        let manifest = Manifest {
            grid_rows: self.grid_rows,
            grid_cols: self.grid_cols,
            temperature_points: self.temperature_points(),
            interp_points: self.interp_points(),
            deformation_rows: self.deformation_rows(),
            nnz_max: self.nnz_max,
            matrices,
            fields: self
                .field_windows
                .iter()
                .zip(&self.slit_windows)
                .map(|(f, slits)| FieldEntry {
                    rows: [f.start, f.end],
                    slits: slits.iter().map(|s| [s.start, s.end]).collect(),
                })
                .collect(),
        };
        let text = toml::to_string(&manifest).map_err(|e| ModelError::Manifest(e.to_string()))?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text)?;
        Ok(path)
    }

    /// Loads a model from its manifest; matrix paths are relative to the
    /// manifest's directory.
    pub fn load(manifest_path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(manifest_path)?;
        let m: Manifest = toml::from_str(&text).map_err(|e| ModelError::Manifest(e.to_string()))?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let a = expect_kind(container::load(dir.join(&m.matrices.a))?, "A", |s| match s {
            Stored::Csr(c) => Some(c),
            _ => None,
        })?;
        let b = expect_kind(container::load(dir.join(&m.matrices.b))?, "B", |s| match s {
            Stored::Diagonal(d) => Some(d),
            _ => None,
        })?;
        let p = expect_kind(container::load(dir.join(&m.matrices.p))?, "P", |s| match s {
            Stored::Csr(c) => Some(c),
            _ => None,
        })?;
        let dense = |file: &str| {
            expect_kind(container::load(dir.join(file))?, file, |s| match s {
                Stored::Dense(d) => Some(d),
                _ => None,
            })
        };
        let c = [
            dense(&m.matrices.c_x)?,
            dense(&m.matrices.c_y)?,
            dense(&m.matrices.c_z)?,
        ];
        let model = WaferModel::from_parts(
            m.grid_rows,
            m.grid_cols,
            m.nnz_max,
            a,
            b,
            p,
            c,
            m.fields.iter().map(|f| f.rows[0]..f.rows[1]).collect(),
            m.fields
                .iter()
                .map(|f| f.slits.iter().map(|s| s[0]..s[1]).collect())
                .collect(),
        )?;
        if model.temperature_points() != m.temperature_points
            || model.interp_points() != m.interp_points
            || model.deformation_rows() != m.deformation_rows
        {
            return Err(ModelError::Manifest(
                "manifest dimensions disagree with matrix files".into(),
            ));
        }
        Ok(model)
    }
}
