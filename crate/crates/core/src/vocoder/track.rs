use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::VocoderError;
use crate::binio;

pub const MCEP_DIM: usize = 60;
pub const BAP_DIM: usize = 5;

const TRACK_MAGIC: &[u8; 4] = b"PVT1";

/// Per-frame F0 in Hz (0 on unvoiced frames) with voicing decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub f0: Vec<f64>,
    pub vuv: Vec<bool>,
    pub hop_secs: f64,
}

impl F0Track {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.vuv.is_empty() {
            return 0.0;
        }
        self.vuv.iter().filter(|&&v| v).count() as f64 / self.vuv.len() as f64
    }

    /// Builds a track from per-frame F0 values, treating `f0 <= 0` as unvoiced.
    pub fn from_hz(f0: Vec<f64>, hop_secs: f64) -> Self {
        let vuv = f0.iter().map(|&f| f > 0.0).collect();
        let f0 = f0.into_iter().map(|f| f.max(0.0)).collect();
        Self { f0, vuv, hop_secs }
    }
}

/// Vocoder parameters, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticTrack {
    /// `T x 60` mel-cepstrum of the log power envelope; `mcep[0]` is the
    /// mean log power.
    pub mcep: Array2<f64>,
    /// `T x 5` aperiodic-to-total power ratio per band, in dB (`<= 0`).
    pub bap: Array2<f64>,
    /// Natural-log F0, interpolated through unvoiced frames.
    pub lf0: Array1<f64>,
    pub vuv: Vec<bool>,
}

impl AcousticTrack {
    pub fn n_frames(&self) -> usize {
        self.mcep.nrows()
    }

    /// F0 in Hz with zeros on unvoiced frames.
    pub fn f0_track(&self, hop_secs: f64) -> F0Track {
        F0Track {
            f0: self
                .lf0
                .iter()
                .zip(&self.vuv)
                .map(|(&l, &v)| if v { l.exp() } else { 0.0 })
                .collect(),
            vuv: self.vuv.clone(),
            hop_secs,
        }
    }

    pub fn validate(&self) -> Result<(), VocoderError> {
        let t = self.n_frames();
        if self.mcep.ncols() != MCEP_DIM {
            return Err(VocoderError::Columns {
                what: "mcep",
                found: self.mcep.ncols(),
                expected: MCEP_DIM,
            });
        }
        if self.bap.ncols() != BAP_DIM {
            return Err(VocoderError::Columns {
                what: "bap",
                found: self.bap.ncols(),
                expected: BAP_DIM,
            });
        }
        for len in [self.bap.nrows(), self.lf0.len(), self.vuv.len()] {
            if len != t {
                return Err(VocoderError::FrameCount {
                    expected: t,
                    found: len,
                });
            }
        }
        for i in 0..t {
            if self.mcep.row(i).iter().any(|x| !x.is_finite()) {
                return Err(VocoderError::NonFinite { what: "mcep", frame: i });
            }
            if self.bap.row(i).iter().any(|x| !x.is_finite()) {
                return Err(VocoderError::NonFinite { what: "bap", frame: i });
            }
            if !self.lf0[i].is_finite() {
                return Err(VocoderError::NonFinite { what: "lf0", frame: i });
            }
        }
        Ok(())
    }

    /// Writes the `PVT1` format: magic, `u32` frame count, `u32` column
    /// counts (60, 5, 1, 1), then row-major `f32` rows of
    /// `[mcep, bap, lf0, vuv]` with vuv stored as 0.0 / 1.0.
    pub fn write<W: Write>(&self, w: &mut W) -> Result<(), VocoderError> {
        self.validate()?;
        binio::write_magic(w, TRACK_MAGIC).map_err(binio::BinError::from)?;
        let header = [self.n_frames() as u32, MCEP_DIM as u32, BAP_DIM as u32, 1, 1];
        for v in header {
            binio::write_u32(w, v).map_err(binio::BinError::from)?;
        }
        for t in 0..self.n_frames() {
            let row = self
                .mcep
                .row(t)
                .iter()
                .chain(self.bap.row(t).iter())
                .map(|&x| x as f32)
                .chain([self.lf0[t] as f32, if self.vuv[t] { 1.0 } else { 0.0 }])
                .collect::<Vec<_>>();
            binio::write_f32s(w, row).map_err(binio::BinError::from)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self, VocoderError> {
        binio::read_magic(r, TRACK_MAGIC)?;
        let t = binio::read_u32(r, "frame count")? as usize;
        let cols: Vec<usize> = (0..4)
            .map(|_| binio::read_u32(r, "column count").map(|c| c as usize))
            .collect::<Result<_, _>>()?;
        let expected = [MCEP_DIM, BAP_DIM, 1, 1];
        for (i, (&c, &e)) in cols.iter().zip(&expected).enumerate() {
            if c != e {
                return Err(VocoderError::Columns {
                    what: ["mcep", "bap", "lf0", "vuv"][i],
                    found: c,
                    expected: e,
                });
            }
        }
        let width = MCEP_DIM + BAP_DIM + 2;
        let data = binio::read_f32s(r, t * width, "track data")?;
        let mut track = AcousticTrack {
            mcep: Array2::zeros((t, MCEP_DIM)),
            bap: Array2::zeros((t, BAP_DIM)),
            lf0: Array1::zeros(t),
            vuv: vec![false; t],
        };
        for (i, row) in data.chunks_exact(width).enumerate() {
            for d in 0..MCEP_DIM {
                track.mcep[[i, d]] = row[d] as f64;
            }
            for b in 0..BAP_DIM {
                track.bap[[i, b]] = row[MCEP_DIM + b] as f64;
            }
            track.lf0[i] = row[MCEP_DIM + BAP_DIM] as f64;
            track.vuv[i] = row[MCEP_DIM + BAP_DIM + 1] > 0.5;
        }
        binio::expect_eof(r)?;
        Ok(track)
    }

    pub fn save(&self, path: &Path) -> Result<(), VocoderError> {
        let mut w = BufWriter::new(File::create(path).map_err(binio::BinError::from)?);
        self.write(&mut w)?;
        w.flush().map_err(binio::BinError::from)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VocoderError> {
        let mut r = BufReader::new(File::open(path).map_err(binio::BinError::from)?);
        Self::read(&mut r)
    }
}

/// `ln f0` on voiced frames, linearly interpolated across unvoiced gaps and
/// held at the edges; `default` when nothing is voiced.
pub(crate) fn interpolate_lf0(f0: &F0Track, default: f64) -> Array1<f64> {
    let n = f0.len();
    let voiced: Vec<usize> = (0..n).filter(|&i| f0.vuv[i]).collect();
    if voiced.is_empty() {
        return Array1::from_elem(n, default);
    }
    let mut out = Array1::zeros(n);
    let first = voiced[0];
    let last = *voiced.last().unwrap();
    for i in 0..=first {
        out[i] = f0.f0[first].ln();
    }
    for i in last..n {
        out[i] = f0.f0[last].ln();
    }
    for pair in voiced.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (la, lb) = (f0.f0[a].ln(), f0.f0[b].ln());
        for i in a..=b {
            let frac = (i - a) as f64 / (b - a) as f64;
            out[i] = la + frac * (lb - la);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(t: usize) -> AcousticTrack {
        AcousticTrack {
            mcep: Array2::from_shape_fn((t, MCEP_DIM), |(i, d)| (i * 7 + d) as f64 * 0.01),
            bap: Array2::from_shape_fn((t, BAP_DIM), |(i, b)| -((i + b) as f64)),
            lf0: Array1::from_shape_fn(t, |i| 4.6 + 0.01 * i as f64),
            vuv: (0..t).map(|i| i % 3 != 0).collect(),
        }
    }

    #[test]
    fn interpolation_fills_gaps_and_holds_edges() {
        let f0 = F0Track::from_hz(vec![0.0, 100.0, 0.0, 0.0, 400.0, 0.0], 0.005);
        let lf0 = interpolate_lf0(&f0, 5.0);
        let l100 = 100f64.ln();
        let l400 = 400f64.ln();
        assert_eq!(lf0[0], l100);
        assert_eq!(lf0[1], l100);
        assert!((lf0[2] - (l100 + (l400 - l100) / 3.0)).abs() < 1e-12);
        assert_eq!(lf0[4], l400);
        assert_eq!(lf0[5], l400);
        let silent = F0Track::from_hz(vec![0.0; 4], 0.005);
        assert!(interpolate_lf0(&silent, 5.0).iter().all(|&v| v == 5.0));
    }

    #[test]
    fn binary_layout_is_bit_exact() {
        let tr = track(2);
        let mut buf = Vec::new();
        tr.write(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"PVT1");
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        assert_eq!(
            [u32_at(4), u32_at(8), u32_at(12), u32_at(16), u32_at(20)],
            [2, 60, 5, 1, 1]
        );
        assert_eq!(buf.len(), 24 + 2 * 67 * 4);
        // frame 0 is unvoiced, last float of the first row is the flag
        let flag0 = f32::from_le_bytes(buf[24 + 66 * 4..24 + 67 * 4].try_into().unwrap());
        assert_eq!(flag0, 0.0);
        let back = AcousticTrack::read(&mut buf.as_slice()).unwrap();
        assert_eq!(back.vuv, tr.vuv);
        for (a, b) in back.mcep.iter().zip(tr.mcep.iter()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn truncated_track_is_corrupt() {
        let mut buf = Vec::new();
        track(3).write(&mut buf).unwrap();
        buf.truncate(buf.len() - 5);
        assert!(matches!(
            AcousticTrack::read(&mut buf.as_slice()),
            Err(VocoderError::Bin(binio::BinError::Corrupt(_)))
        ));
    }

    #[test]
    fn validate_catches_shape_and_nan() {
        let mut tr = track(3);
        tr.lf0[1] = f64::NAN;
        assert!(matches!(
            tr.validate(),
            Err(VocoderError::NonFinite { what: "lf0", frame: 1 })
        ));
        let mut tr = track(3);
        tr.vuv.pop();
        assert!(matches!(tr.validate(), Err(VocoderError::FrameCount { .. })));
    }
}
