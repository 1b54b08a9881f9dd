use super::{CooccurrenceCounts, SvnError};
use statrs::function::gamma::ln_gamma;

fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Upper-tail hypergeometric probability `P(X >= n_pq)` for
/// `X ~ Hypergeometric(n, n_p, n_q)`.
///
/// Terms are evaluated through log-gamma and combined by a max-shifted,
/// Kahan-compensated sum, so the result stays accurate for deep tails.
pub fn hypergeom_pvalue(counts: &CooccurrenceCounts) -> Result<f64, SvnError> {
    counts.check()?;
    let CooccurrenceCounts { n, n_p, n_q, n_pq } = *counts;

    let support_lo = (n_p + n_q).saturating_sub(n);
    if n_pq <= support_lo {
        return Ok(1.0);
    }
    let support_hi = n_p.min(n_q);
    debug_assert!(n_pq <= support_hi);

    let ln_denom = ln_choose(n, n_q);
    let ln_terms: Vec<f64> = (n_pq..=support_hi)
        .map(|i| ln_choose(n_p, i) + ln_choose(n - n_p, n_q - i) - ln_denom)
        .collect();
    let max = ln_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(0.0);
    }

    // Kahan summation of the shifted terms.
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for lt in &ln_terms {
        let term = (lt - max).exp();
        let y = term - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    Ok((max + sum.ln()).exp().clamp(0.0, 1.0))
}
