//! Binary classification data: synthetic clusters or a numeric CSV.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{HarnessError, Result};

/// Cluster center of class 1; class 0 uses the negation.
pub const SYNTHETIC_CENTER: [f64; 4] = [1.5, -1.0, 0.5, 1.0];
pub const SYNTHETIC_SIGMA: f64 = 0.75;
pub const SYNTHETIC_COUNT: usize = 1372;
pub const TRAIN_COUNT: usize = 1000;
pub const VALIDATION_COUNT: usize = 186;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.features.first().map(|f| f.len()).unwrap_or(0)
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Two Gaussian clusters at `±SYNTHETIC_CENTER` with fair class labels.
    pub fn synthetic(count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, SYNTHETIC_SIGMA).expect("positive sigma");
        let mut data = Dataset::default();
        for _ in 0..count {
            let label = u8::from(rng.random_bool(0.5));
            let sign = if label == 1 { 1.0 } else { -1.0 };
            data.features
                .push(SYNTHETIC_CENTER.iter().map(|c| sign * c + noise.sample(&mut rng)).collect());
            data.labels.push(label);
        }
        data
    }

    /// Headerless CSV whose last column is a 0/1 label and the rest numeric features.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut data = Dataset::default();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let bad = |m: String| HarnessError::Dataset(format!("{}: row {}: {m}", path.display(), row + 1));
            if record.len() < 2 {
                return Err(bad("need at least one feature and a label".into()));
            }
            let values = record
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            let (label, features) = values.split_last().expect("len >= 2");
            let label = match *label {
                l if l == 0.0 => 0,
                l if l == 1.0 => 1,
                l => return Err(bad(format!("label {l} is not 0 or 1"))),
            };
            if let Some(first) = data.features.first() {
                if first.len() != features.len() {
                    return Err(bad(format!("expected {} features, got {}", first.len(), features.len())));
                }
            }
            data.features.push(features.to_vec());
            data.labels.push(label);
        }
        if data.is_empty() {
            return Err(HarnessError::Dataset(format!("{}: no rows", path.display())));
        }
        Ok(data)
    }

    /// Random split into `train`, `validation` and the remaining test rows.
    pub fn split(&self, train: usize, validation: usize, seed: u64) -> Result<DataSplit> {
        if train + validation >= self.len() {
            return Err(HarnessError::Dataset(format!(
                "cannot split {} rows into {train} train, {validation} validation and a nonempty test set",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(DataSplit {
            train: self.subset(&idx[..train]),
            validation: self.subset(&idx[train..train + validation]),
            test: self.subset(&idx[train + validation..]),
        })
    }

    /// Consecutive chunks for `parts` agents; the first `len % parts` get one extra row.
    pub fn partition(&self, parts: usize) -> Vec<Dataset> {
        let (q, r) = (self.len() / parts, self.len() % parts);
        let mut start = 0;
        (0..parts)
            .map(|i| {
                let len = q + usize::from(i < r);
                let idx: Vec<usize> = (start..start + len).collect();
                start += len;
                self.subset(&idx)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_and_partition_sizes() {
        let data = Dataset::synthetic(SYNTHETIC_COUNT, 3);
        let split = data.split(TRAIN_COUNT, VALIDATION_COUNT, 4).unwrap();
        assert_eq!(split.train.len(), 1000);
        assert_eq!(split.validation.len(), 186);
        assert_eq!(split.test.len(), 186);
        let parts = split.train.partition(50);
        assert!(parts.iter().all(|p| p.len() == 20));
        assert_eq!(data, Dataset::synthetic(SYNTHETIC_COUNT, 3));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "1.0,2.0,0\n-1.5, 0.25 ,1\n").unwrap();
        let d = Dataset::load_csv(&path).unwrap();
        assert_eq!(d.features, vec![vec![1.0, 2.0], vec![-1.5, 0.25]]);
        assert_eq!(d.labels, vec![0, 1]);
        std::fs::write(&path, "1.0,2.0,3\n").unwrap();
        assert!(Dataset::load_csv(&path).is_err());
    }
}
