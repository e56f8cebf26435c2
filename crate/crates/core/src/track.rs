//! Time-indexed object tracks and their JSONL persistence.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cuboid::Cuboid;
use crate::error::{Error, Result};
use crate::mask::Mask;

/// One observed state of a tracked object.
#[derive(Debug, Clone)]
pub struct TrackState {
    pub frame: usize,
    pub cuboid: Cuboid,
    pub mask: Mask,
}

/// A discovered (or ground-truth) object over time. Frame indices are
/// strictly increasing and all masks share one image size.
#[derive(Debug, Clone)]
pub struct ObjectTrack {
    pub id: String,
    states: Vec<TrackState>,
}

impl ObjectTrack {
    pub fn new(id: impl Into<String>) -> Self {
        ObjectTrack {
            id: id.into(),
            states: Vec::new(),
        }
    }

    pub fn push_state(&mut self, frame: usize, cuboid: Cuboid, mask: Mask) -> Result<()> {
        if let Some(last) = self.states.last() {
            if frame <= last.frame {
                return Err(Error::InvalidTrack(format!(
                    "track {}: frame {} does not increase past {}",
                    self.id, frame, last.frame
                )));
            }
            if !last.mask.same_size(&mask) {
                return Err(Error::InvalidTrack(format!(
                    "track {}: mask size changed at frame {}",
                    self.id, frame
                )));
            }
        }
        self.states.push(TrackState {
            frame,
            cuboid,
            mask,
        });
        Ok(())
    }

    pub fn states(&self) -> &[TrackState] {
        &self.states
    }

    pub fn first_frame(&self) -> Option<usize> {
        self.states.first().map(|s| s.frame)
    }

    pub fn last_state(&self) -> Option<&TrackState> {
        self.states.last()
    }

    pub fn state_at(&self, frame: usize) -> Option<&TrackState> {
        self.states.iter().find(|s| s.frame == frame)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Drops all states at or after `frame`.
    pub fn truncate_from(&mut self, frame: usize) {
        self.states.retain(|s| s.frame < frame);
    }
}

/// One JSONL record: a single object state. `mask` names the PNG file of
/// the state's mask, relative to the JSONL file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackRecord {
    pub id: String,
    pub frame: usize,
    pub t: [f64; 3],
    pub s: [f64; 3],
    pub q: [f64; 3],
    pub mask: String,
}

impl TrackRecord {
    pub fn from_state(id: &str, state: &TrackState, mask_file: String) -> Self {
        TrackRecord {
            id: id.to_string(),
            frame: state.frame,
            t: state.cuboid.translation.into(),
            s: state.cuboid.size.into(),
            q: state.cuboid.rotation.into(),
            mask: mask_file,
        }
    }

    pub fn cuboid(&self) -> Result<Cuboid> {
        Cuboid::new(self.t.into(), self.s.into(), self.q.into())
    }
}

/// Writes tracks as JSONL ordered by (frame, id), one mask PNG per state in
/// `mask_dir` (named `mask_f<frame>_<id>.png`).
pub fn save_tracks(tracks: &[ObjectTrack], jsonl_path: &Path, mask_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(mask_dir).map_err(|e| Error::io(mask_dir, e))?;
    let mut records: Vec<(usize, String, TrackRecord)> = Vec::new();
    for track in tracks {
        for state in track.states() {
            let mask_file = format!("mask_f{:04}_{}.png", state.frame, track.id);
            state.mask.save_png(&mask_dir.join(&mask_file))?;
            let rel = mask_dir
                .file_name()
                .map(|d| format!("{}/{}", d.to_string_lossy(), mask_file))
                .unwrap_or(mask_file.clone());
            records.push((
                state.frame,
                track.id.clone(),
                TrackRecord::from_state(&track.id, state, rel),
            ));
        }
    }
    records.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    let file = std::fs::File::create(jsonl_path).map_err(|e| Error::io(jsonl_path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for (_, _, rec) in &records {
        let line = serde_json::to_string(rec).expect("track record serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(jsonl_path, e))?;
    }
    Ok(())
}

/// Loads tracks from a JSONL file; mask paths are resolved relative to the
/// JSONL file's directory. Tracks come back sorted by id.
pub fn load_tracks(jsonl_path: &Path) -> Result<Vec<ObjectTrack>> {
    let file = std::fs::File::open(jsonl_path).map_err(|e| Error::io(jsonl_path, e))?;
    let base = jsonl_path.parent().unwrap_or(Path::new("."));
    let mut by_id: BTreeMap<String, Vec<(usize, Cuboid, Mask)>> = BTreeMap::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(jsonl_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrackRecord =
            serde_json::from_str(&line).map_err(|e| Error::format(jsonl_path, e.to_string()))?;
        let mask = Mask::load_png(&base.join(&rec.mask))?;
        by_id
            .entry(rec.id.clone())
            .or_default()
            .push((rec.frame, rec.cuboid()?, mask));
    }
    let mut tracks = Vec::new();
    for (id, mut states) in by_id {
        states.sort_by_key(|s| s.0);
        let mut track = ObjectTrack::new(id);
        for (frame, cuboid, mask) in states {
            track.push_state(frame, cuboid, mask)?;
        }
        tracks.push(track);
    }
    Ok(tracks)
}
