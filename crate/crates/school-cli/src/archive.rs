//! Clip archives on disk: one concatenated-PGM file plus a JSON sidecar per
//! clip, and a manifest tying the set together.

use crate::error::{CliError, Result};
use school_core::clip::{CLIP_LEN, Clip};
use school_core::pgm::{parse_pgm_stream, write_pgm};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipSidecar {
    pub t: usize,
    pub w: usize,
    pub h: usize,
    pub patch_size: usize,
    /// Masked patch ids as (frame, patch-row, patch-col); empty for
    /// unmasked archives.
    pub mask_ids: Vec<(u16, u16, u16)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub clip_count: usize,
    pub t: usize,
    pub width: usize,
    pub height: usize,
    pub stride: usize,
    /// Whether consecutive clips are temporally adjacent windows, i.e. valid
    /// latent transition material.
    pub consecutive: bool,
    pub seed: u64,
    pub pattern: String,
    pub clips: Vec<String>,
    pub config_echo: String,
}

fn clip_file_name(i: usize) -> String {
    format!("clip_{i:05}.pgm")
}

pub fn write_clip_archive(
    dir: &Path,
    clips: &[Clip],
    stride: usize,
    patch_size: usize,
    seed: u64,
    pattern: &str,
    config_echo: &str,
) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        let name = clip_file_name(i);
        let mut buf = Vec::new();
        for frame in &clip.frames {
            write_pgm(frame, &mut buf)?;
        }
        std::fs::write(dir.join(&name), &buf)?;
        let sidecar = ClipSidecar {
            t: CLIP_LEN,
            w: clip.width(),
            h: clip.height(),
            patch_size,
            mask_ids: Vec::new(),
        };
        std::fs::write(
            dir.join(format!("clip_{i:05}.json")),
            serde_json::to_string(&sidecar).expect("sidecar json"),
        )?;
        names.push(name);
    }
    let manifest = Manifest {
        clip_count: clips.len(),
        t: CLIP_LEN,
        width: clips.first().map(|c| c.width()).unwrap_or(0),
        height: clips.first().map(|c| c.height()).unwrap_or(0),
        stride,
        consecutive: stride == CLIP_LEN,
        seed,
        pattern: pattern.to_string(),
        clips: names,
        config_echo: config_echo.to_string(),
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest json"),
    )?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::MissingArtifact(format!("clip archive manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::MissingArtifact(format!("manifest {}: {e}", path.display())))
}

pub fn read_clip_archive(dir: &Path) -> Result<(Vec<Clip>, Manifest)> {
    let manifest = read_manifest(dir)?;
    let mut clips = Vec::with_capacity(manifest.clip_count);
    for name in &manifest.clips {
        let path = dir.join(name);
        let bytes = std::fs::read(&path)
            .map_err(|e| CliError::MissingArtifact(format!("clip {}: {e}", path.display())))?;
        let frames = parse_pgm_stream(&bytes, &path.display().to_string())?;
        if frames.len() != CLIP_LEN {
            return Err(CliError::MissingArtifact(format!(
                "clip {} holds {} frames, expected {CLIP_LEN}",
                path.display(),
                frames.len()
            )));
        }
        clips.push(Clip::new(frames));
    }
    if clips.len() != manifest.clip_count {
        return Err(CliError::MissingArtifact(format!(
            "manifest lists {} clips, read {}",
            manifest.clip_count,
            clips.len()
        )));
    }
    Ok((clips, manifest))
}

/// A directory is a clip archive when it carries a manifest; otherwise it is
/// treated as a raw frame directory to be windowed.
pub fn load_clips_from_path(dir: &Path, stride: usize) -> Result<Vec<Clip>> {
    if dir.join("manifest.json").exists() {
        Ok(read_clip_archive(dir)?.0)
    } else {
        let frames = school_core::pgm::load_segmented_frames(dir)?;
        Ok(school_core::clip::window_clips(&frames, stride))
    }
}

/// One parsed line of the trajectory JSONL export.
#[derive(Debug, Clone, Deserialize)]
pub struct TrajRow {
    pub t: u64,
    pub id: usize,
    pub p: [f64; 3],
    pub d: [f64; 3],
    pub q: [f64; 4],
    pub v: f64,
    pub role: String,
    pub done: bool,
    #[serde(default)]
    pub rw: Option<RwRow>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RwRow {
    pub s: f64,
    pub b: f64,
    pub h: f64,
    pub total: f64,
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajRow>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::MissingArtifact(format!("trajectory {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: TrajRow = serde_json::from_str(line).map_err(|e| {
            CliError::MissingArtifact(format!("trajectory {} line {}: {e}", path.display(), ln + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Group a trajectory into equal-length per-agent feature tracks
/// (position, forward, speed per frame), truncated to the shortest track.
pub fn trajectory_feature_tracks(rows: &[TrajRow]) -> Vec<Vec<Vec<f64>>> {
    let mut by_agent: std::collections::BTreeMap<usize, Vec<Vec<f64>>> = Default::default();
    for r in rows {
        by_agent.entry(r.id).or_default().push(vec![
            r.p[0], r.p[1], r.p[2], r.d[0], r.d[1], r.d[2], r.v,
        ]);
    }
    let min_len = by_agent.values().map(|v| v.len()).min().unwrap_or(0);
    by_agent
        .into_values()
        .map(|mut v| {
            v.truncate(min_len);
            v
        })
        .filter(|v| !v.is_empty())
        .collect()
}

/// Per-agent episodes of normalized task rewards from trajectory rows.
/// Rows without a breakdown (agents in respawn cooldown) are skipped.
pub fn trajectory_task_episodes(rows: &[TrajRow]) -> Result<Vec<Vec<f64>>> {
    if !rows.iter().any(|r| r.rw.is_some()) {
        return Err(CliError::MissingArtifact(
            "trajectory rows lack the rw reward breakdown".into(),
        ));
    }
    let mut by_agent: std::collections::BTreeMap<usize, Vec<(f64, bool)>> = Default::default();
    for r in rows {
        let Some(rw) = r.rw.as_ref() else { continue };
        by_agent.entry(r.id).or_default().push((rw.h, r.done));
    }
    let mut episodes = Vec::new();
    for (_, steps) in by_agent {
        let mut cur = Vec::new();
        for (h, done) in steps {
            cur.push(h);
            if done {
                episodes.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            episodes.push(cur);
        }
    }
    Ok(episodes)
}

pub fn archive_paths(dir: &Path) -> Vec<PathBuf> {
    std::fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.path()).collect())
        .unwrap_or_default()
}
