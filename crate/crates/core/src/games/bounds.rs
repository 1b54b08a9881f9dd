use super::GameError;

/// Aggregating Algorithm loss bound `C * best_loss + (C/eta) * ln(N/m)` for
/// a pool of `n_experts` containing `duplicates` copies of the best expert.
/// Real-valued pool sizes are accepted for analytic use.
pub fn regret_bound(n_experts: f64, eta: f64, c: f64, best_loss: f64, duplicates: f64) -> f64 {
    c * best_loss + c / eta * (n_experts / duplicates).ln()
}

/// The two competing loss bounds for clustered pools.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterBounds {
    /// Bound from running the learner on cluster meta-experts.
    pub u_minus: f64,
    /// Bound from running the learner on the original duplicated pool.
    pub u_star: f64,
    /// Whether the meta-expert bound is at least as good (`u_minus <= u_star`).
    pub advantage: bool,
}

/// Compares the meta-expert bound against the duplicated-pool bound for `M`
/// clusters of identical experts with cardinalities `c_i` and common
/// cumulative losses `losses[i]`.
///
/// The verdict is evaluated through the equivalent cardinality test
/// `c_{i0} <= (N/M) * exp(eta * (loss_{i0} - best_loss))`, where `i0` is the
/// cluster attaining the duplicated-pool bound (ties to the smaller index).
pub fn cluster_bound_advantage(
    cardinalities: &[usize],
    losses: &[f64],
    n_experts: usize,
    eta: f64,
) -> Result<ClusterBounds, GameError> {
    if cardinalities.len() != losses.len() || cardinalities.is_empty() {
        return Err(GameError::Invalid(format!(
            "need matching nonempty cardinalities and losses, got {} and {}",
            cardinalities.len(),
            losses.len()
        )));
    }
    let total: usize = cardinalities.iter().sum();
    if total != n_experts {
        return Err(GameError::CardinalityMismatch {
            got: total,
            expected: n_experts,
        });
    }
    let m = cardinalities.len() as f64;
    let n = n_experts as f64;

    let best_loss = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let u_minus = best_loss + m.ln() / eta;

    // i0: argmin of the per-cluster duplicated-pool bound, ties to the
    // smaller index.
    let mut i0 = 0usize;
    let mut u_star = f64::INFINITY;
    for (i, (&c_i, &l_i)) in cardinalities.iter().zip(losses).enumerate() {
        let bound = l_i + (n / c_i as f64).ln() / eta;
        if bound < u_star {
            u_star = bound;
            i0 = i;
        }
    }

    let advantage =
        (cardinalities[i0] as f64) <= n / m * (eta * (losses[i0] - best_loss)).exp();
    Ok(ClusterBounds {
        u_minus,
        u_star,
        advantage,
    })
}
