//! Per-feature z-score normalization fitted on training data.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; constant columns get unit scale.
    pub fn fit(xs: &[Vec<f64>]) -> Self {
        let d = xs.first().map_or(0, Vec::len);
        let n = xs.len() as f64;
        let mut mean = vec![0.0; d];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for x in xs {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        for v in self.mean.iter().chain(&self.std) {
            w.write_f64::<LittleEndian>(*v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R, dim: usize) -> Result<Self> {
        let mut read = |n| (0..n).map(|_| r.read_f64::<LittleEndian>()).collect::<std::io::Result<Vec<_>>>();
        let mean = read(dim)?;
        let std = read(dim)?;
        Ok(Standardizer { mean, std })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_training_data_has_zero_mean_unit_std() {
        let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.3 + 7.0, ((i * 37) % 11) as f64, 4.0]).collect();
        let s = Standardizer::fit(&xs);
        let z: Vec<Vec<f64>> = xs.iter().map(|x| s.apply(x)).collect();
        for j in 0..2 {
            let mean = z.iter().map(|r| r[j]).sum::<f64>() / 50.0;
            let sd = (z.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / 50.0).sqrt();
            assert!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        }
        assert!(z.iter().all(|r| r[2] == 0.0));
    }
}
