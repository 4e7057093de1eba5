//! Binary checkpoint container: magic "CBIL", format version, stage tag,
//! config echo, RNG state and a named f32 tensor table, all little-endian.
//! Save/load round-trips bit-for-bit.

use crate::error::{CliError, Result};
use std::io::Write;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"CBIL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Mvae,
    Cluster,
    Policy,
}

impl Stage {
    fn tag(self) -> u8 {
        match self {
            Stage::Mvae => 1,
            Stage::Cluster => 2,
            Stage::Policy => 3,
        }
    }

    fn from_tag(t: u8) -> Result<Stage> {
        match t {
            1 => Ok(Stage::Mvae),
            2 => Ok(Stage::Cluster),
            3 => Ok(Stage::Policy),
            other => Err(CliError::MissingArtifact(format!("unknown checkpoint stage tag {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Mvae => "mvae",
            Stage::Cluster => "cluster",
            Stage::Policy => "policy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub config_echo: Vec<u8>,
    pub rng_state: Vec<u8>,
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.stage.tag());
        out.extend_from_slice(&(self.config_echo.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.config_echo);
        out.extend_from_slice(&(self.rng_state.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.rng_state);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, dims, data) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for &d in dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], expect: Stage) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(CliError::MissingArtifact("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CliError::MissingArtifact(format!(
                "checkpoint format version {version}, expected {VERSION}"
            )));
        }
        let stage = Stage::from_tag(r.u8()?)?;
        if stage != expect {
            return Err(CliError::MissingArtifact(format!(
                "checkpoint stage is {:?} ({}), expected {:?} ({})",
                stage,
                stage.name(),
                expect,
                expect.name()
            )));
        }
        let cfg_len = r.u64()? as usize;
        let config_echo = r.take(cfg_len)?.to_vec();
        let rng_len = r.u64()? as usize;
        let rng_state = r.take(rng_len)?.to_vec();
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| CliError::MissingArtifact("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u64()? as usize);
            }
            let n: usize = dims.iter().product();
            let raw = r.take(4 * n)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((name, dims, data));
        }
        if r.pos != bytes.len() {
            return Err(CliError::MissingArtifact("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint { stage, config_echo, rng_state, tensors })
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(path: &Path, expect: Stage) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| {
            CliError::MissingArtifact(format!("checkpoint {}: {e}", path.display()))
        })?;
        Self::from_bytes(&bytes, expect)
    }

    pub fn tensor(&self, name: &str) -> Result<&(String, Vec<usize>, Vec<f32>)> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| CliError::MissingArtifact(format!("checkpoint tensor {name}")))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::MissingArtifact("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            stage: Stage::Mvae,
            config_echo: b"seed = 1\n".to_vec(),
            rng_state: vec![7; 48],
            tensors: vec![
                ("a.w".into(), vec![2, 3], vec![1.0, -2.5, 0.0, 3.25, f32::MIN_POSITIVE, 9.0]),
                ("b".into(), vec![1], vec![42.0]),
                ("empty".into(), vec![0, 3], vec![]),
            ],
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, Stage::Mvae).unwrap();
        assert_eq!(ck, back);
        assert_eq!(bytes, back.to_bytes());
    }

    #[test]
    fn wrong_stage_fails_loudly() {
        let bytes = sample().to_bytes();
        let err = Checkpoint::from_bytes(&bytes, Stage::Policy).unwrap_err();
        assert!(err.to_string().contains("expected"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes, Stage::Mvae).is_err());

        let mut truncated = sample().to_bytes();
        truncated.truncate(truncated.len() - 3);
        assert!(Checkpoint::from_bytes(&truncated, Stage::Mvae).is_err());
    }
}
