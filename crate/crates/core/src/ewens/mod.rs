//! Ewens and conditional-Ewens distributions over integer partitions:
//! probability mass, derangement machinery, expectations, samplers, theta
//! estimation and the chi-square goodness-of-fit protocol.

mod derange;
mod gof;
mod sample;

pub use derange::{derangement_count, derangement_row};
pub use gof::{chi_square_gof, chi_square_gof_with, GofBin, GofOptions, GofReport};
pub use sample::{sample_conditional_ewens, sample_ewens, DEFAULT_REJECTION_CAP};

use crate::community::Partition;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EwensError {
    #[error("theta must be a positive finite real, got {0}")]
    BadTheta(f64),
    #[error("partition vector is empty")]
    EmptyPartition,
    #[error("partition vector sums to {got}, expected n = {expected}")]
    SizeMismatch { got: usize, expected: usize },
    #[error("observed cluster count {observed} is outside the attainable range [{min:.6}, {max:.6}] for n = {n}")]
    TargetOutOfRange { observed: f64, min: f64, max: f64, n: usize },
    #[error("n must be >= {min}, got {got}")]
    TooFewElements { got: usize, min: usize },
    #[error("rejection sampler exceeded {cap} trials; estimated acceptance probability lambda_n(theta) = {lambda:.3e}")]
    RejectionCapExceeded { cap: usize, lambda: f64 },
    #[error("chi-square test undefined: only {bins} bins after merging (need >= 3)")]
    GofUndefined { bins: usize },
    #[error("chi-square test needs alpha in (0, 1), got {0}")]
    BadAlpha(f64),
}

fn check_theta(theta: f64) -> Result<(), EwensError> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(EwensError::BadTheta(theta))
    }
}

/// Cluster-size histogram `c = (c_1, ..., c_n)` of a partition of `n`
/// elements; `c_i` counts clusters with exactly `i` members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionVector {
    counts: Vec<u64>,
    n: usize,
}

impl PartitionVector {
    /// Builds from counts indexed by size (`counts[i]` is `c_{i+1}`); `n` is
    /// derived as the weighted sum.
    pub fn new(counts: Vec<u64>) -> Result<Self, EwensError> {
        let n: usize = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (i + 1) * c as usize)
            .sum();
        if n == 0 {
            return Err(EwensError::EmptyPartition);
        }
        let mut counts = counts;
        while counts.last() == Some(&0) {
            counts.pop();
        }
        Ok(PartitionVector { counts, n })
    }

    /// Builds from counts plus an expected total, validating the partition
    /// identity `sum_i i * c_i = n`.
    pub fn with_total(counts: Vec<u64>, n: usize) -> Result<Self, EwensError> {
        let pv = Self::new(counts)?;
        if pv.n != n {
            return Err(EwensError::SizeMismatch { got: pv.n, expected: n });
        }
        Ok(pv)
    }

    /// Size histogram of a cluster partition.
    pub fn from_partition(partition: &Partition) -> Self {
        let mut sizes = vec![0usize; partition.num_clusters()];
        for (_, &label) in partition.assignment() {
            sizes[label] += 1;
        }
        let n = partition.len();
        let mut counts = vec![0u64; n];
        for s in sizes {
            counts[s - 1] += 1;
        }
        Self::new(counts).expect("nonempty partition")
    }

    /// Number of partitioned elements.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Count of clusters of exactly `size` members.
    pub fn count_of(&self, size: usize) -> u64 {
        if size == 0 || size > self.counts.len() {
            0
        } else {
            self.counts[size - 1]
        }
    }

    /// `c_1`: number of singleton clusters.
    pub fn singletons(&self) -> u64 {
        self.count_of(1)
    }

    /// `K_n`: total number of clusters.
    pub fn num_clusters(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts indexed from size 1.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// `ln theta_(m)` where `theta_(m) = theta (theta+1) ... (theta+m-1)`.
fn ln_rising_factorial(theta: f64, m: usize) -> f64 {
    ln_gamma(m as f64 + theta) - ln_gamma(theta)
}

/// Log of the Ewens sampling probability of the partition vector.
pub fn ewens_log_pmf(c: &PartitionVector, theta: f64) -> Result<f64, EwensError> {
    check_theta(theta)?;
    let n = c.n();
    let ln_theta = theta.ln();
    let mut acc = ln_gamma(n as f64 + 1.0) - ln_rising_factorial(theta, n);
    for (i, &cj) in c.counts().iter().enumerate() {
        if cj == 0 {
            continue;
        }
        let j = (i + 1) as f64;
        acc += cj as f64 * (ln_theta - j.ln()) - ln_gamma(cj as f64 + 1.0);
    }
    Ok(acc)
}

/// Ewens sampling probability of the partition vector (Ewens' formula).
pub fn ewens_pmf(c: &PartitionVector, theta: f64) -> Result<f64, EwensError> {
    Ok(ewens_log_pmf(c, theta)?.exp())
}

/// `lambda_n(theta) = P(C_1(n) = 0)`: probability that an Ewens partition of
/// `n` has no singleton cluster. Evaluated by the stable recursion
/// `lambda_{n+1} = n/(n+theta) * [lambda_n + theta/(n+theta-1) * lambda_{n-1}]`
/// with `lambda_0 = 1`, `lambda_1 = 0`.
pub fn lambda_n(theta: f64, n: usize) -> Result<f64, EwensError> {
    Ok(*lambda_table(theta, n)?.last().unwrap())
}

/// `lambda_0..=lambda_n` in one pass.
pub fn lambda_table(theta: f64, n: usize) -> Result<Vec<f64>, EwensError> {
    check_theta(theta)?;
    let mut table = Vec::with_capacity(n + 1);
    table.push(1.0);
    if n >= 1 {
        table.push(0.0);
    }
    for m in 1..n {
        let m_f = m as f64;
        let next = m_f / (m_f + theta) * (table[m] + theta / (m_f + theta - 1.0) * table[m - 1]);
        table.push(next);
    }
    Ok(table)
}

/// Probability of the partition vector under the Ewens law conditioned on
/// having no singletons. Outside the support (`c_1 > 0`) the mass is zero.
pub fn conditional_ewens_pmf(c: &PartitionVector, theta: f64) -> Result<f64, EwensError> {
    check_theta(theta)?;
    if c.singletons() > 0 {
        return Ok(0.0);
    }
    Ok(ewens_pmf(c, theta)? / lambda_n(theta, c.n())?)
}

/// Expected cluster-size counts `E C_j` and expected number of clusters `E K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedStats {
    /// `cycle_counts[j-1] = E C_j(n)`.
    pub cycle_counts: Vec<f64>,
    /// Expected total number of clusters.
    pub clusters: f64,
}

/// Expectations under the (conditional) Ewens law.
///
/// Unconditionally `E C_j(n) = (n!/theta_(n)) (theta_(n-j)/(n-j)!) (theta/j)`
/// and `E K_n = sum_{i<n} theta/(theta+i)`; conditional values are the
/// unconditional ones scaled by `lambda_{n-j}/lambda_n`, summed over j >= 2.
pub fn expected_stats(n: usize, theta: f64, conditional: bool) -> Result<ExpectedStats, EwensError> {
    check_theta(theta)?;
    if n == 0 {
        return Err(EwensError::TooFewElements { got: 0, min: 1 });
    }
    let ln_theta = theta.ln();
    let ln_lead = ln_gamma(n as f64 + 1.0) - ln_rising_factorial(theta, n);
    let lambdas = if conditional {
        Some(lambda_table(theta, n)?)
    } else {
        None
    };

    let mut cycle_counts = Vec::with_capacity(n);
    for j in 1..=n {
        let m = n - j;
        let ln_ec = ln_lead + ln_rising_factorial(theta, m) - ln_gamma(m as f64 + 1.0) + ln_theta
            - (j as f64).ln();
        let mut ec = ln_ec.exp();
        if let Some(lams) = &lambdas {
            if j == 1 {
                ec = 0.0;
            } else {
                ec *= lams[m] / lams[n];
            }
        }
        cycle_counts.push(ec);
    }

    let clusters = if conditional {
        cycle_counts.iter().sum()
    } else {
        (0..n).map(|i| theta / (theta + i as f64)).sum()
    };
    Ok(ExpectedStats {
        cycle_counts,
        clusters,
    })
}

/// Expected number of clusters only (cheaper than [`expected_stats`] in the
/// unconditional case).
pub fn expected_clusters(n: usize, theta: f64, conditional: bool) -> Result<f64, EwensError> {
    if conditional {
        Ok(expected_stats(n, theta, true)?.clusters)
    } else {
        check_theta(theta)?;
        Ok((0..n).map(|i| theta / (theta + i as f64)).sum())
    }
}

const THETA_LO: f64 = 1e-6;
const THETA_HI: f64 = 1e6;

/// Inverts `E K(theta) = observed_k` by bisection over `[1e-6, 1e6]`.
///
/// `E K` is strictly increasing in theta, so the root is unique. A target at
/// or below the lower bracket's expectation returns the bracket itself (the
/// single-cluster `theta -> 0` limit); a target above the upper bracket's
/// expectation is an error naming the attainable interval.
pub fn estimate_theta(observed_k: f64, n: usize, conditional: bool) -> Result<f64, EwensError> {
    if n == 0 {
        return Err(EwensError::TooFewElements { got: 0, min: 1 });
    }
    let max_k = if conditional { (n / 2) as f64 } else { n as f64 };
    if !(observed_k >= 1.0 && observed_k <= max_k) {
        return Err(EwensError::TargetOutOfRange {
            observed: observed_k,
            min: 1.0,
            max: max_k,
            n,
        });
    }
    let target = observed_k;
    let f = |theta: f64| expected_clusters(n, theta, conditional).map(|ek| ek - target);

    let f_lo = f(THETA_LO)?;
    if f_lo >= 0.0 {
        return Ok(THETA_LO);
    }
    let f_hi = f(THETA_HI)?;
    if f_hi <= 0.0 {
        let min = f_lo + target;
        let max = f_hi + target;
        return Err(EwensError::TargetOutOfRange {
            observed: observed_k,
            min,
            max,
            n,
        });
    }

    let (mut lo, mut hi) = (THETA_LO, THETA_HI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.abs() <= 1e-9 || (hi - lo) <= 1e-10 {
            return Ok(mid);
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
