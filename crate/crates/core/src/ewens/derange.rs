use num_bigint::BigUint;
use num_traits::{One, Zero};

/// Number of derangements of `n` elements having exactly `k` cycles
/// (permutations with no fixed point and all cycles of length >= 2), as an
/// exact big integer.
///
/// Computed by the associated-Stirling recurrence
/// `D(n, k) = (n-1) * (D(n-1, k) + D(n-2, k-1))` with `D(0, 0) = 1` and
/// `D(1, k) = 0`, which avoids the cancellation-prone alternating sum over
/// unsigned Stirling numbers.
pub fn derangement_count(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    derangement_row(n)[k].clone()
}

/// The full row `D(n, 0..=n)`.
pub fn derangement_row(n: usize) -> Vec<BigUint> {
    let mut prev2: Vec<BigUint> = vec![BigUint::one()]; // D(0, .)
    if n == 0 {
        return prev2;
    }
    let mut prev1: Vec<BigUint> = vec![BigUint::zero(), BigUint::zero()]; // D(1, .)
    if n == 1 {
        return prev1;
    }
    for m in 2..=n {
        let mut row = vec![BigUint::zero(); m + 1];
        let factor = BigUint::from(m - 1);
        for k in 1..=m {
            let mut acc = prev1.get(k).cloned().unwrap_or_else(BigUint::zero);
            if let Some(d) = prev2.get(k - 1) {
                acc += d;
            }
            row[k] = &factor * acc;
        }
        prev2 = prev1;
        prev1 = row;
    }
    prev1
}
