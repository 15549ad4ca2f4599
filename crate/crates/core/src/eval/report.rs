//! Result tables, summaries and trajectory files.

use std::io::Write;

use serde::Serialize;

use crate::data::io::{format_float, landmark_columns, theta_columns};
use crate::data::{EmotionPoint, LandmarkVector};
use crate::error::{dim, Result, VitlError};

fn csv_err(e: csv::Error) -> VitlError {
    VitlError::Io(std::io::Error::other(e))
}

/// Delimiter-separated table with one row per record and a header taken from
/// the field names.
pub fn write_table<S: Serialize>(rows: &[S], writer: impl Write, delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<S: Serialize + ?Sized>(value: &S, mut writer: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value).map_err(|e| VitlError::Io(std::io::Error::other(e)))?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// `path_index, θ₁…θ_p, landmark coordinates`, one row per path point.
pub fn write_trajectory(thetas: &[EmotionPoint], predictions: &[LandmarkVector], p: usize, d: usize, writer: impl Write) -> Result<()> {
    if thetas.len() != predictions.len() {
        return Err(dim("trajectory needs one prediction per path point"));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["path_index".to_string()];
    header.extend(theta_columns(p));
    header.extend(landmark_columns(d));
    w.write_record(&header).map_err(csv_err)?;
    for (k, (t, y)) in thetas.iter().zip(predictions).enumerate() {
        if t.dim() != p || y.dim() != d {
            return Err(dim("trajectory row has the wrong dimension"));
        }
        let mut row = vec![k.to_string()];
        row.extend(t.coords().iter().map(|&v| format_float(v)));
        row.extend(y.as_slice().iter().map(|&v| format_float(v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
