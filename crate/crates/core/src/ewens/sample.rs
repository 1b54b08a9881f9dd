use super::{check_theta, EwensError, PartitionVector};
use rand::Rng;

/// Trial budget for the singleton-free rejection sampler.
pub const DEFAULT_REJECTION_CAP: usize = 1_000_000;

/// Draws a partition of `n` from the Ewens law by the Chinese restaurant
/// process: element `t+1` opens a new cluster with probability
/// `theta / (theta + t)` and otherwise joins an existing cluster with
/// probability proportional to its size.
pub fn sample_ewens<R: Rng + ?Sized>(
    n: usize,
    theta: f64,
    rng: &mut R,
) -> Result<PartitionVector, EwensError> {
    check_theta(theta)?;
    if n == 0 {
        return Err(EwensError::TooFewElements { got: 0, min: 1 });
    }
    let mut cluster_sizes: Vec<u64> = Vec::new();
    for t in 0..n {
        let total = theta + t as f64;
        let u = rng.gen::<f64>() * total;
        if u < theta || cluster_sizes.is_empty() {
            cluster_sizes.push(1);
        } else {
            // Pick an occupied cluster with probability size / total.
            let mut pick = u - theta;
            let mut chosen = cluster_sizes.len() - 1;
            for (idx, &size) in cluster_sizes.iter().enumerate() {
                if pick < size as f64 {
                    chosen = idx;
                    break;
                }
                pick -= size as f64;
            }
            cluster_sizes[chosen] += 1;
        }
    }
    let mut counts = vec![0u64; n];
    for size in cluster_sizes {
        counts[size as usize - 1] += 1;
    }
    PartitionVector::new(counts)
}

/// Draws from the Ewens law conditioned on no singleton clusters by
/// rejection; expected trial count is `1/lambda_n(theta)`. Exceeding `cap`
/// trials reports the estimated acceptance probability.
pub fn sample_conditional_ewens_capped<R: Rng + ?Sized>(
    n: usize,
    theta: f64,
    rng: &mut R,
    cap: usize,
) -> Result<PartitionVector, EwensError> {
    if n < 2 {
        return Err(EwensError::TooFewElements { got: n, min: 2 });
    }
    for _ in 0..cap {
        let draw = sample_ewens(n, theta, rng)?;
        if draw.singletons() == 0 {
            return Ok(draw);
        }
    }
    Err(EwensError::RejectionCapExceeded {
        cap,
        lambda: super::lambda_n(theta, n)?,
    })
}

/// [`sample_conditional_ewens_capped`] with the default trial budget.
pub fn sample_conditional_ewens<R: Rng + ?Sized>(
    n: usize,
    theta: f64,
    rng: &mut R,
) -> Result<PartitionVector, EwensError> {
    sample_conditional_ewens_capped(n, theta, rng, DEFAULT_REJECTION_CAP)
}
