//! Value-level kernels shared by the tape and by callers that need no
//! gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Norms below this are treated as zero by the cosine kernels.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Row-wise softmax over the entries where `mask` is true.
///
/// Masked-out entries are exactly zero. A row with no true entry is all
/// zero. `mask` is row-major with the same length as `m`; `None` means every
/// entry participates.
pub fn softmax_rows(m: &Tensor, mask: Option<&[bool]>) -> Tensor {
    let (r, c) = (m.rows(), m.cols());
    if let Some(mask) = mask {
        assert_eq!(mask.len(), r * c, "softmax mask length");
    }
    let on = |k: usize| mask.is_none_or(|mk| mk[k]);
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = m.row(i);
        let max = (0..c)
            .filter(|&j| on(i * c + j))
            .map(|j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut total = 0.0;
        for j in 0..c {
            if on(i * c + j) {
                let e = (row[j] - max).exp();
                out[i * c + j] = e;
                total += e;
            }
        }
        for v in &mut out[i * c..(i + 1) * c] {
            *v /= total;
        }
    }
    Tensor::matrix(r, c, out)
}

/// Cosine similarity with a zero guard: 0 if either norm is below
/// [`NORM_EPS`].
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "cosine needs equal dimensions");
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu < NORM_EPS || nv < NORM_EPS {
        return 0.0;
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

/// Inverted-dropout multiplier: each entry is 0 with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub fn dropout_mask(shape: &[usize], rate: f64, rng: &mut impl Rng) -> Tensor {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    let keep = 1.0 / (1.0 - rate);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("mask shape")
}

/// Applies dropout to `m`. Eval mode and a zero rate return `m` unchanged.
pub fn dropout(m: &Tensor, rate: f64, mode: Mode, seed: u64) -> Tensor {
    if mode == Mode::Eval || rate == 0.0 {
        return m.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = dropout_mask(m.shape(), rate, &mut rng);
    m.zip_map(&mask, |x, k| x * k)
}
