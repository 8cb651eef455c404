use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};

use super::FeatureError;
use crate::binio;

/// Standard deviations are floored here so constant columns normalize to 0.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-column mean and standard deviation. Excluded columns pass through
/// unchanged (mean 0, std 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
    pub excluded: Vec<usize>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            std: Array1::ones(dim),
            excluded: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fits over every frame of every matrix in `data`.
    pub fn fit<'a, I>(data: I, excluded: &[usize]) -> Result<Self, FeatureError>
    where
        I: IntoIterator<Item = ArrayView2<'a, f64>> + Clone,
    {
        let mut dim = None;
        let mut count = 0usize;
        let mut sum: Array1<f64> = Array1::zeros(0);
        for m in data.clone() {
            let d = *dim.get_or_insert(m.ncols());
            if m.ncols() != d {
                return Err(FeatureError::Shape(format!(
                    "matrix with {} columns among {d}-column data",
                    m.ncols()
                )));
            }
            if sum.is_empty() {
                sum = Array1::zeros(d);
            }
            for row in m.rows() {
                sum += &row;
            }
            count += m.nrows();
        }
        let Some(dim) = dim else {
            return Err(FeatureError::Empty("no matrices to fit".into()));
        };
        if count < 2 {
            return Err(FeatureError::Empty(format!("{count} frames, need at least 2")));
        }
        if let Some(&bad) = excluded.iter().find(|&&c| c >= dim) {
            return Err(FeatureError::Shape(format!("excluded column {bad} >= {dim}")));
        }
        let mean = sum / count as f64;
        let mut sq: Array1<f64> = Array1::zeros(dim);
        for m in data {
            for row in m.rows() {
                let dev = &row - &mean;
                sq += &(&dev * &dev);
            }
        }
        let mut std = (sq / count as f64).mapv(|v| v.sqrt().max(STD_FLOOR));
        let mut mean = mean;
        for &c in excluded {
            mean[c] = 0.0;
            std[c] = 1.0;
        }
        let mut excluded = excluded.to_vec();
        excluded.sort_unstable();
        excluded.dedup();
        Ok(Self {
            mean,
            std,
            excluded,
        })
    }

    fn check(&self, x: &ArrayView2<f64>) -> Result<(), FeatureError> {
        if x.ncols() != self.dim() {
            return Err(FeatureError::Shape(format!(
                "{} columns, normalizer has {}",
                x.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, FeatureError> {
        self.check(&x)?;
        Ok((&x - &self.mean) / &self.std)
    }

    pub fn invert(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, FeatureError> {
        self.check(&x)?;
        Ok(&x * &self.std + &self.mean)
    }

    /// `PVN1`: magic, `u32` dim, `f32` means, `f32` stds, `u32` count and
    /// `u32` indices of the excluded columns.
    pub fn write<W: Write>(&self, w: &mut W) -> Result<(), FeatureError> {
        binio::write_magic(w, b"PVN1")?;
        binio::write_u32(w, self.dim() as u32)?;
        binio::write_f32s(w, self.mean.iter().map(|&v| v as f32))?;
        binio::write_f32s(w, self.std.iter().map(|&v| v as f32))?;
        binio::write_u32(w, self.excluded.len() as u32)?;
        for &c in &self.excluded {
            binio::write_u32(w, c as u32)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self, FeatureError> {
        binio::read_magic(r, b"PVN1")?;
        let dim = binio::read_u32(r, "dimension")? as usize;
        if dim > 1 << 20 {
            return Err(binio::BinError::Corrupt(format!("dimension {dim}")).into());
        }
        let mean = binio::read_f32s(r, dim, "means")?;
        let std = binio::read_f32s(r, dim, "stds")?;
        let n_ex = binio::read_u32(r, "excluded count")? as usize;
        if n_ex > dim {
            return Err(binio::BinError::Corrupt(format!("{n_ex} excluded of {dim}")).into());
        }
        let mut excluded = Vec::with_capacity(n_ex);
        for _ in 0..n_ex {
            let c = binio::read_u32(r, "excluded index")? as usize;
            if c >= dim {
                return Err(binio::BinError::Corrupt(format!("excluded column {c}")).into());
            }
            excluded.push(c);
        }
        binio::expect_eof(r)?;
        Ok(Self {
            mean: mean.into_iter().map(f64::from).collect(),
            std: std.into_iter().map(|v| f64::from(v).max(STD_FLOOR)).collect(),
            excluded,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data() -> Vec<Array2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..3)
            .map(|i| {
                Array2::from_shape_fn((20 + i, 4), |(_, c)| {
                    if c == 2 {
                        7.0
                    } else {
                        rng.random_range(-5.0..5.0) * (c + 1) as f64 + c as f64
                    }
                })
            })
            .collect()
    }

    #[test]
    fn normalized_training_data_is_standard() {
        let d = data();
        let norm = Normalizer::fit(d.iter().map(|m| m.view()), &[3]).unwrap();
        let all: Vec<Array2<f64>> = d.iter().map(|m| norm.apply(m.view()).unwrap()).collect();
        let views: Vec<_> = all.iter().map(|m| m.view()).collect();
        let stacked = ndarray::concatenate(ndarray::Axis(0), &views).unwrap();
        let mean = stacked.mean_axis(ndarray::Axis(0)).unwrap();
        let std = stacked.std_axis(ndarray::Axis(0), 0.0);
        for c in [0, 1] {
            assert!(mean[c].abs() < 1e-9);
            assert!((std[c] - 1.0).abs() < 1e-6);
        }
        // constant column
        assert_eq!(norm.std[2], STD_FLOOR);
        assert!(stacked.column(2).iter().all(|&v| v == 0.0));
        // excluded column untouched
        for (a, b) in d.iter().zip(&all) {
            assert_eq!(a.column(3), b.column(3));
        }
    }

    #[test]
    fn invert_undoes_apply() {
        let d = data();
        let norm = Normalizer::fit(d.iter().map(|m| m.view()), &[]).unwrap();
        let back = norm.invert(norm.apply(d[1].view()).unwrap().view()).unwrap();
        for (a, b) in back.iter().zip(d[1].iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let empty: Vec<Array2<f64>> = vec![Array2::zeros((1, 3))];
        assert!(matches!(
            Normalizer::fit(empty.iter().map(|m| m.view()), &[]),
            Err(FeatureError::Empty(_))
        ));
        let norm = Normalizer::identity(3);
        assert!(norm.apply(Array2::zeros((2, 4)).view()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let d = data();
        let norm = Normalizer::fit(d.iter().map(|m| m.view()), &[3]).unwrap();
        let mut buf = Vec::new();
        norm.write(&mut buf).unwrap();
        let back = Normalizer::read(&mut buf.as_slice()).unwrap();
        assert_eq!(back.excluded, vec![3]);
        for (a, b) in back.mean.iter().zip(norm.mean.iter()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert!(Normalizer::read(&mut &buf[..buf.len() - 2]).is_err());
    }
}
