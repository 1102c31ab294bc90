use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    /// Split sizes for `n` items: floor of each share, then the leftover
    /// items go to the largest fractional parts (earlier split wins ties).
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let shares = [self.train, self.val, self.test].map(|r| r * n as f64);
        let mut sizes = shares.map(|s| s.floor() as usize);
        let mut left = n - sizes.iter().sum::<usize>();
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = shares[a] - shares[a].floor();
            let fb = shares[b] - shares[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &k in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[k] += 1;
            left -= 1;
        }
        sizes
    }
}

/// Disjoint train/validation/test index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Seeded, label-stratified split.
///
/// Each class is shuffled independently, the classes are interleaved by
/// their relative rank so every prefix keeps the dataset's class balance,
/// and the interleaved order is cut at the sizes from
/// [`SplitRatios::sizes`].
pub fn split_dataset(labels: &[u8], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    let n = labels.len();
    let rs = [ratios.train, ratios.val, ratios.test];
    if rs.iter().any(|&r| r.is_nan() || r <= 0.0) || (rs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must be positive and sum to 1, got {rs:?}"
        )));
    }
    if n < 5 {
        return Err(DataError::TooSmallToSplit(n).into());
    }
    let sizes = ratios.sizes(n);
    if sizes.contains(&0) {
        return Err(DataError::TooSmallToSplit(n).into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, u8, usize)> = Vec::with_capacity(n);
    for class in 0..=1u8 {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let m = members.len() as f64;
        for (rank, idx) in members.into_iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / m, class, idx));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = keyed.into_iter().map(|(_, _, i)| i).collect();

    let (train, rest) = order.split_at(sizes[0]);
    let (val, test) = rest.split_at(sizes[1]);
    Ok(DatasetSplit {
        train: train.to_vec(),
        val: val.to_vec(),
        test: test.to_vec(),
        seed,
    })
}
