//! On-disk view banks: a directory with `bank.json` plus one color image
//! and one depth file per view.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image_io;
use crate::memory::ViewBank;
use crate::pipeline::ImageFormat;
use crate::scene::CaptureFrame;

pub const BANK_FILE: &str = "bank.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankEntry {
    pub camera: Camera,
    /// Paths relative to the bank directory.
    pub color: String,
    pub depth: String,
}

pub fn write_bank(dir: impl AsRef<Path>, bank: &ViewBank, format: ImageFormat) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(bank.len());
    for f in bank.frames() {
        let stem = format!("view_{:04}", f.camera.view_id.0);
        let color = format!("{stem}.{}", format.extension());
        let depth = format!("{stem}.depth");
        image_io::write_color(dir.join(&color), &f.color)?;
        image_io::write_depth(dir.join(&depth), &f.depth)?;
        entries.push(BankEntry { camera: f.camera, color, depth });
    }
    let path = dir.join(BANK_FILE);
    let text = serde_json::to_string_pretty(&entries).expect("bank serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_bank(dir: impl AsRef<Path>) -> Result<ViewBank> {
    let dir = dir.as_ref();
    let path = dir.join(BANK_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let entries: Vec<BankEntry> = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let mut bank = ViewBank::new();
    for e in entries {
        let color = image_io::read_color(dir.join(&e.color))?;
        let depth = image_io::read_depth(dir.join(&e.depth))?;
        bank.insert(CaptureFrame::new(e.camera, color, depth)?)?;
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{preset_scenario, Preset};

    #[test]
    fn bank_round_trip() {
        let sc = preset_scenario(Preset::Extrapolation, 2, 24, 16).unwrap();
        for format in [ImageFormat::Png, ImageFormat::Ppm] {
            let dir = tempfile::tempdir().unwrap();
            write_bank(dir.path(), &sc.captures, format).unwrap();
            assert_eq!(read_bank(dir.path()).unwrap(), sc.captures);
        }
    }

    #[test]
    fn missing_bank_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_bank(dir.path()).unwrap_err();
        assert!(err.to_string().contains(BANK_FILE));
    }
}
