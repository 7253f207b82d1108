//! Trajectory dumps: one line-delimited record per step, with optional PNG
//! frames written next to the record file for image-based re-scoring.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Image, IMAGE_HEIGHT, IMAGE_WIDTH};

/// One step of a rolled-out episode. `state_vec` is the state after the
/// step, matching the state the score was computed on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub t: u32,
    pub state_vec: Vec<f64>,
    pub action: Vec<f64>,
    pub skill: Vec<f64>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct EpisodeDump {
    pub records: Vec<DumpRecord>,
}

impl EpisodeDump {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Post-step states in order.
    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.records.iter().map(|r| r.state_vec.as_slice())
    }
}

pub fn write_dump(path: &Path, episodes: &[EpisodeDump]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ep in episodes {
        for rec in &ep.records {
            let line = serde_json::to_string(rec)
                .map_err(|e| Error::io(path, io::Error::other(e)))?;
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a record stream back, splitting episodes where the step counter
/// restarts.
pub fn read_dump(path: &Path) -> Result<Vec<EpisodeDump>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut episodes = Vec::new();
    let mut current = EpisodeDump::default();
    let mut prev_t = u32::MAX;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DumpRecord = serde_json::from_str(&line)
            .map_err(|e| Error::invalid(format!("bad dump line in {}: {e}", path.display())))?;
        if rec.t <= prev_t && !current.is_empty() {
            episodes.push(std::mem::take(&mut current));
        }
        prev_t = rec.t;
        current.records.push(rec);
    }
    if !current.is_empty() {
        episodes.push(current);
    }
    Ok(episodes)
}

/// Frame file name convention shared by the dumper and the audit reader.
pub fn frame_file_name(episode: usize, t: u32) -> String {
    format!("frame_{episode:03}_{t:03}.png")
}

pub fn write_frame(dir: &Path, episode: usize, t: u32, image: &Image) -> Result<()> {
    let path = dir.join(frame_file_name(episode, t));
    let buf = image::RgbImage::from_raw(
        IMAGE_WIDTH as u32,
        IMAGE_HEIGHT as u32,
        image.data().to_vec(),
    )
    .expect("image buffer has the fixed frame size");
    buf.save(&path)
        .map_err(|e| Error::io(&path, io::Error::other(e)))
}

pub fn read_frame(dir: &Path, episode: usize, t: u32) -> Result<Image> {
    let path = dir.join(frame_file_name(episode, t));
    if !path.exists() {
        return Err(Error::invalid(format!(
            "frame {} is missing but the score function needs images",
            path.display()
        )));
    }
    let img = image::open(&path)
        .map_err(|e| Error::io(&path, io::Error::other(e)))?
        .to_rgb8();
    if (img.width() as usize, img.height() as usize) != (IMAGE_WIDTH, IMAGE_HEIGHT) {
        return Err(Error::invalid(format!(
            "frame {} is {}x{}, expected {IMAGE_WIDTH}x{IMAGE_HEIGHT}",
            path.display(),
            img.width(),
            img.height()
        )));
    }
    Image::new(img.into_raw())
}
