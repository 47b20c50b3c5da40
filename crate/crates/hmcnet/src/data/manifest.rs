//! CSV manifests: `image,patient_id,view,label` with labels in
//! {`Luminal`, `HER2`, `TN`} and views in {`CC`, `MLO`, `unknown`}.
//!
//! Image paths are resolved relative to the manifest's directory. Rows are
//! reported 1-based (the header is row 0).

use std::collections::HashSet;
use std::path::Path;

use crate::data::{Dataset, SampleRecord, SubtypeLabel, View};
use crate::error::{Error, Result};

const EXPECTED_HEADER: [&str; 4] = ["image", "patient_id", "view", "label"];

pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Validation(format!("{}: {other:?}", path.display())),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Validation(format!("{}: unreadable header: {e}", path.display())))?;
    if headers.iter().collect::<Vec<_>>() != EXPECTED_HEADER {
        return Err(Error::Validation(format!(
            "{}: header must be exactly `image,patient_id,view,label`, got `{}`",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Manifest {
            row: row_no,
            message: format!("unparseable row: {e}"),
        })?;
        if row.len() != 4 {
            return Err(Error::Manifest {
                row: row_no,
                message: format!("expected 4 fields, got {}", row.len()),
            });
        }
        let image = row.get(0).unwrap();
        let patient_id = row.get(1).unwrap();
        let view_text = row.get(2).unwrap();
        let label_text = row.get(3).unwrap();

        if image.is_empty() || patient_id.is_empty() {
            return Err(Error::Manifest {
                row: row_no,
                message: "image and patient_id must be non-empty".into(),
            });
        }
        let label = SubtypeLabel::parse(label_text).ok_or_else(|| Error::Manifest {
            row: row_no,
            message: format!("unknown label `{label_text}` (expected Luminal, HER2 or TN)"),
        })?;
        let view = View::parse(view_text).ok_or_else(|| Error::Manifest {
            row: row_no,
            message: format!("unknown view `{view_text}` (expected CC, MLO or unknown)"),
        })?;
        if !seen.insert((patient_id.to_string(), image.to_string())) {
            return Err(Error::Manifest {
                row: row_no,
                message: format!("duplicate (patient_id, image) pair ({patient_id}, {image})"),
            });
        }
        let resolved = base.join(image);
        if !resolved.is_file() {
            return Err(Error::Manifest {
                row: row_no,
                message: format!("image file {} does not exist", resolved.display()),
            });
        }
        records.push(SampleRecord::from_path(resolved, label, patient_id, view));
    }
    Ok(Dataset::from_records(records))
}

/// Write a manifest for path-backed records. Paths are stored relative to the
/// manifest directory when possible.
pub fn write_manifest(dataset: &Dataset, path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    })?;
    writer
        .write_record(EXPECTED_HEADER)
        .map_err(|e| Error::Validation(format!("manifest write failed: {e}")))?;
    for record in dataset.records() {
        let image_path = match &record.image {
            crate::data::ImageSource::Path(p) => p
                .strip_prefix(base)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned(),
            crate::data::ImageSource::Embedded(_) => {
                return Err(Error::Validation(
                    "cannot write embedded tensors to a manifest".into(),
                ))
            }
        };
        writer
            .write_record([
                image_path.as_str(),
                record.patient_id.as_str(),
                record.view.name(),
                record.label.name(),
            ])
            .map_err(|e| Error::Validation(format!("manifest write failed: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path, e))
}
