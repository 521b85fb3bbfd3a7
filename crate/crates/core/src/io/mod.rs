//! Sessions, CSV formats, checkpoints and the synthetic data generator.

mod checkpoint;
mod csv_files;
mod synth;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::Segment;

pub use checkpoint::{
    load_checkpoint, load_model, save_checkpoint, save_model, Checkpoint, Checkpointable,
    CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC,
};
pub use csv_files::{
    read_annotations, read_heights, read_session_csv, session_csv_string, write_annotations,
    write_heights, write_session_csv, ANNOTATION_HEADER, HEIGHTS_HEADER, SESSION_HEADER,
};
pub use synth::{synth_generate, JumpEvent, SyntheticConfig, SyntheticDataset, GRAVITY};

pub const SAMPLE_RATE_HZ: f64 = 100.0;

/// Accelerometer (g) then gyroscope (deg/s) axes.
pub const CHANNELS: usize = 6;

pub const CHANNEL_NAMES: [&str; CHANNELS] = ["ax", "ay", "az", "gx", "gy", "gz"];

/// Index of the vertical accelerometer axis.
pub const VERTICAL_AXIS: usize = 1;

/// One participant's continuous recording at 100 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuSession {
    pub subject_id: String,
    pub sample_rate_hz: f64,
    pub samples: Array2<f64>,
    pub labels: Option<Vec<usize>>,
}

impl ImuSession {
    pub fn new(subject_id: impl Into<String>, samples: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let subject_id = subject_id.into();
        if samples.nrows() == 0 {
            return Err(Error::invalid(format!("session {subject_id} is empty")));
        }
        if samples.ncols() != CHANNELS {
            return Err(Error::dim(format!(
                "session {subject_id} has {} channels, expected {CHANNELS}",
                samples.ncols()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != samples.nrows() {
                return Err(Error::dim(format!(
                    "session {subject_id} has {} samples but {} labels",
                    samples.nrows(),
                    l.len()
                )));
            }
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("session {subject_id} contains non-finite samples")));
        }
        Ok(ImuSession {
            subject_id,
            sample_rate_hz: SAMPLE_RATE_HZ,
            samples,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.ncols()
    }
}

/// Ground-truth height of one jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightRecord {
    pub subject_id: String,
    pub segment: Segment,
    pub height_m: f64,
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = parent {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Shortest decimal form of `v` rounded to 9 significant digits.
pub fn format_sig9(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    let s = format!("{rounded}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}
