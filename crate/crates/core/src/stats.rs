//! Summary statistics for Monte Carlo batches.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Standard error of the mean (sample standard deviation / √n); zero for n ≤ 1.
    pub se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { n, mean: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { n, mean, se }
    }
}

/// Outcome of a one-sided paired sign test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// P(at least `wins` successes | n = wins + losses, p = 1/2).
    pub p_value: f64,
}

/// Tests whether `a` tends to be smaller than `b` over paired samples.
/// Ties are dropped.
pub fn sign_test_less(a: &[f64], b: &[f64]) -> SignTest {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Less) => wins += 1,
            Some(std::cmp::Ordering::Greater) => losses += 1,
            _ => ties += 1,
        }
    }
    let n = (wins + losses) as u64;
    let p_value = if n == 0 || wins == 0 {
        1.0
    } else {
        let binom = Binomial::new(0.5, n).expect("valid binomial");
        binom.sf(wins as u64 - 1)
    };
    SignTest { wins, losses, ties, p_value }
}
