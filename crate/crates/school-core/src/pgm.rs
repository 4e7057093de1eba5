//! Binary PGM (P5, maxval 255) reading and writing.
//!
//! Loaded pixels are thresholded at 128. Clip archives store the frames of a
//! clip as back-to-back P5 images in one file.

use crate::error::{CoreError, Result};
use crate::silhouette::SilhouetteFrame;
use std::io::Write;
use std::path::Path;

pub fn write_pgm(frame: &SilhouetteFrame, out: &mut impl Write) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", frame.width, frame.height)?;
    let bytes: Vec<u8> = frame.bits.iter().map(|&b| if b != 0 { 255 } else { 0 }).collect();
    out.write_all(&bytes)
}

pub fn frame_to_pgm_bytes(frame: &SilhouetteFrame) -> Vec<u8> {
    let mut buf = Vec::with_capacity(frame.bits.len() + 32);
    write_pgm(frame, &mut buf).expect("in-memory write");
    buf
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    file: &'a str,
}

impl<'a> Cursor<'a> {
    fn err(&self, reason: impl Into<String>) -> CoreError {
        CoreError::Pgm { file: self.file.to_string(), reason: reason.into() }
    }

    fn skip_whitespace_and_comments(&mut self) {
        loop {
            while self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.data.len() && self.data[self.pos] == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("unexpected end of header"));
        }
        Ok(&self.data[start..self.pos])
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| self.err(format!("invalid number {:?}", String::from_utf8_lossy(tok))))
    }
}

/// Parse one P5 image starting at `pos`; returns the frame and the new offset.
fn parse_one(data: &[u8], pos: usize, file: &str) -> Result<(SilhouetteFrame, usize)> {
    let mut cur = Cursor { data, pos, file };
    let magic = cur.token()?;
    if magic != b"P5" {
        return Err(cur.err(format!("bad magic {:?}", String::from_utf8_lossy(magic))));
    }
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if maxval != 255 {
        return Err(cur.err(format!("maxval must be 255, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(cur.err("zero dimension"));
    }
    // exactly one whitespace byte separates the header from pixel data
    if cur.pos >= data.len() || !data[cur.pos].is_ascii_whitespace() {
        return Err(cur.err("missing header terminator"));
    }
    let start = cur.pos + 1;
    let n = width * height;
    if start + n > data.len() {
        return Err(cur.err(format!("truncated pixel data: need {n} bytes")));
    }
    let bits: Vec<u8> = data[start..start + n].iter().map(|&b| (b >= 128) as u8).collect();
    Ok((SilhouetteFrame { width, height, bits }, start + n))
}

/// Parse a single-image PGM buffer.
pub fn parse_pgm(data: &[u8], file: &str) -> Result<SilhouetteFrame> {
    let (frame, end) = parse_one(data, 0, file)?;
    if data[end..].iter().any(|b| !b.is_ascii_whitespace()) {
        return Err(CoreError::Pgm { file: file.to_string(), reason: "trailing data".into() });
    }
    Ok(frame)
}

/// Parse a concatenated P5 stream (a clip archive file).
pub fn parse_pgm_stream(data: &[u8], file: &str) -> Result<Vec<SilhouetteFrame>> {
    let mut frames = Vec::new();
    let mut pos = 0;
    while data[pos..].iter().any(|b| !b.is_ascii_whitespace()) {
        let (frame, end) = parse_one(data, pos, file)?;
        frames.push(frame);
        pos = end;
    }
    Ok(frames)
}

/// Load every `.pgm` in a directory in lexicographic order as a frame stream.
/// All frames must share one resolution.
pub fn load_segmented_frames(dir: &Path) -> Result<Vec<SilhouetteFrame>> {
    let rd = std::fs::read_dir(dir)
        .map_err(|e| CoreError::Io { path: dir.display().to_string(), source: e })?;
    let mut files: Vec<_> = rd
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "pgm").unwrap_or(false))
        .collect();
    files.sort_by_key(|p| p.file_name().map(|n| n.to_os_string()));

    let mut frames = Vec::with_capacity(files.len());
    let mut resolution: Option<(usize, usize)> = None;
    for path in files {
        let name = path.display().to_string();
        let data = std::fs::read(&path).map_err(|e| CoreError::Io { path: name.clone(), source: e })?;
        let frame = parse_pgm(&data, &name)?;
        if let Some((w, h)) = resolution {
            if frame.width != w || frame.height != h {
                return Err(CoreError::FrameResolutionMismatch {
                    want_w: w,
                    want_h: h,
                    got_w: frame.width,
                    got_h: frame.height,
                    file: name,
                });
            }
        } else {
            resolution = Some((frame.width, frame.height));
        }
        frames.push(frame);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_frame(w: usize, h: usize, fill: u8) -> SilhouetteFrame {
        let mut f = SilhouetteFrame::zeros(w, h);
        for (i, b) in f.bits.iter_mut().enumerate() {
            *b = ((i as u8).wrapping_mul(31) ^ fill > 127) as u8;
        }
        f
    }

    #[test]
    fn roundtrip_single() {
        let f = sample_frame(16, 24, 3);
        let bytes = frame_to_pgm_bytes(&f);
        let g = parse_pgm(&bytes, "mem").unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn roundtrip_stream() {
        let fs: Vec<_> = (0..10).map(|i| sample_frame(16, 16, i)).collect();
        let mut buf = Vec::new();
        for f in &fs {
            write_pgm(f, &mut buf).unwrap();
        }
        let gs = parse_pgm_stream(&buf, "mem").unwrap();
        assert_eq!(fs, gs);
    }

    #[test]
    fn bad_magic_reports_file() {
        let err = parse_pgm(b"P2\n4 4\n255\n0000000000000000", "frames/bad.pgm").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("frames/bad.pgm"), "{msg}");
    }

    #[test]
    fn truncated_data_rejected() {
        let mut bytes = frame_to_pgm_bytes(&sample_frame(8, 8, 0));
        bytes.truncate(bytes.len() - 5);
        assert!(parse_pgm(&bytes, "t.pgm").is_err());
    }

    #[test]
    fn directory_loading_sorted_and_uniform() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..10 {
            let f = sample_frame(16, 16, i);
            std::fs::write(dir.path().join(format!("frame_{i:04}.pgm")), frame_to_pgm_bytes(&f)).unwrap();
        }
        let frames = load_segmented_frames(dir.path()).unwrap();
        assert_eq!(frames.len(), 10);

        // a stray frame with a different resolution fails loudly
        std::fs::write(dir.path().join("frame_9999.pgm"), frame_to_pgm_bytes(&sample_frame(8, 8, 0)))
            .unwrap();
        match load_segmented_frames(dir.path()) {
            Err(CoreError::FrameResolutionMismatch { file, .. }) => assert!(file.contains("frame_9999")),
            other => panic!("expected resolution mismatch, got {other:?}"),
        }
    }

    #[test]
    fn empty_directory_is_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_segmented_frames(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let f = parse_pgm(b"P5\n# a comment\n4 2\n255\n\x00\xff\x00\xff\xff\x00\xff\x00", "c.pgm").unwrap();
        assert_eq!(f.width, 4);
        assert_eq!(f.height, 2);
        assert_eq!(f.bits, vec![0, 1, 0, 1, 1, 0, 1, 0]);
    }
}
