//! Evaluation-set protocol: overlap ratios from dense match-score maps and
//! binning into small/medium/large overlap categories.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::img::ScalarGrid;

#[derive(Debug, Error)]
pub enum EvalsetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic, expected \"MMAP\"")]
    BadMagic,
    #[error("header truncated")]
    HeaderTruncated,
    #[error("size mismatch: header says {width}x{height} but payload holds {got} floats")]
    SizeMismatch { width: u32, height: u32, got: usize },
    #[error("match score {0} outside [0,1]")]
    ScoreRange(f64),
    #[error("match maps have different sizes: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
}

/// Matching-score threshold above which a pixel counts as validly matched.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.005;

/// Per-pixel directional match-score grid for one direction i -> j.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchMap {
    pub score: ScalarGrid,
}

impl MatchMap {
    pub fn new(score: ScalarGrid) -> Result<Self, EvalsetError> {
        if let Some(&bad) = score.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(EvalsetError::ScoreRange(bad));
        }
        Ok(Self { score })
    }

    pub fn width(&self) -> usize {
        self.score.width()
    }

    pub fn height(&self) -> usize {
        self.score.height()
    }

    /// Fraction of pixels with score strictly above `threshold`.
    pub fn valid_ratio(&self, threshold: f64) -> f64 {
        let n = self.score.data().len();
        let valid = self.score.data().iter().filter(|s| **s > threshold).count();
        valid as f64 / n as f64
    }
}

/// Overlap bin boundaries (fractions): small [0.05, 0.3), medium
/// [0.3, 0.55), large [0.55, 0.8]; anything else is out of range and
/// excluded from benchmark tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapBin {
    Small,
    Medium,
    Large,
    OutOfRange,
}

impl std::fmt::Display for OverlapBin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OverlapBin::Small => "small",
            OverlapBin::Medium => "medium",
            OverlapBin::Large => "large",
            OverlapBin::OutOfRange => "out-of-range",
        };
        f.write_str(s)
    }
}

/// Assigns an overlap ratio to its bin. Boundaries are lower-inclusive;
/// large additionally includes its upper bound 0.8.
pub fn bin_overlap(r: f64) -> OverlapBin {
    if (0.05..0.3).contains(&r) {
        OverlapBin::Small
    } else if (0.3..0.55).contains(&r) {
        OverlapBin::Medium
    } else if (0.55..=0.8).contains(&r) {
        OverlapBin::Large
    } else {
        OverlapBin::OutOfRange
    }
}

/// One pair's overlap ratios and bin assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRecord {
    pub pair_id: String,
    pub r12: f64,
    pub r21: f64,
    pub r_overlap: f64,
    pub bin: OverlapBin,
}

/// Computes directional valid-match ratios and the final overlap
/// `min(r12, r21)`. Scores exactly at the threshold do not count.
pub fn overlap_ratio(
    pair_id: impl Into<String>,
    m12: &MatchMap,
    m21: &MatchMap,
    threshold: f64,
) -> OverlapRecord {
    let r12 = m12.valid_ratio(threshold);
    let r21 = m21.valid_ratio(threshold);
    let r_overlap = r12.min(r21);
    OverlapRecord { pair_id: pair_id.into(), r12, r21, r_overlap, bin: bin_overlap(r_overlap) }
}

const MAGIC: &[u8; 4] = b"MMAP";

/// Writes the binary format: magic "MMAP", u32 width, u32 height, then
/// `width * height` little-endian f32 scores, row-major.
pub fn write_matchmap(map: &MatchMap, path: impl AsRef<Path>) -> Result<(), EvalsetError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(map.width() as u32).to_le_bytes())?;
    out.write_all(&(map.height() as u32).to_le_bytes())?;
    for r in 0..map.height() {
        for c in 0..map.width() {
            out.write_all(&(map.score.get(r, c) as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_matchmap(path: impl AsRef<Path>) -> Result<MatchMap, EvalsetError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(if bytes.len() < 4 || &bytes[..4] != MAGIC {
            if bytes.len() >= 4 {
                EvalsetError::BadMagic
            } else {
                EvalsetError::HeaderTruncated
            }
        } else {
            EvalsetError::HeaderTruncated
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(EvalsetError::BadMagic);
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let expected = width as usize * height as usize;
    let got = (bytes.len() - 12) / 4;
    if got != expected || (bytes.len() - 12) % 4 != 0 {
        return Err(EvalsetError::SizeMismatch { width, height, got });
    }
    let mut grid = ScalarGrid::new(height as usize, width as usize);
    for r in 0..height as usize {
        for c in 0..width as usize {
            let off = 12 + (r * width as usize + c) * 4;
            grid.set(r, c, f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64);
        }
    }
    MatchMap::new(grid)
}
