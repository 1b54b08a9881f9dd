use super::{expected_stats, EwensError, PartitionVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Binning and degrees-of-freedom knobs for the goodness-of-fit test. The
/// values used are echoed in the [`GofReport`] so every fit is auditable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofOptions {
    /// Requested minimum expected count per bin.
    pub min_expected: f64,
    /// Scale the bin floor down to `total_expected / 4` on sparse histograms
    /// so the test stays defined at small cluster counts (never below 1.0).
    pub adaptive_floor: bool,
    /// Degrees of freedom subtracted beyond the usual `bins - 1` to account
    /// for the estimated theta.
    pub theta_dof_penalty: usize,
}

impl Default for GofOptions {
    fn default() -> Self {
        GofOptions {
            min_expected: 5.0,
            adaptive_floor: true,
            theta_dof_penalty: 1,
        }
    }
}

/// One merged cluster-size category.
#[derive(Debug, Clone, PartialEq)]
pub struct GofBin {
    pub size_lo: usize,
    pub size_hi: usize,
    pub observed: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GofReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub pass: bool,
    pub bins: Vec<GofBin>,
    /// Effective bin floor after the adaptive rule.
    pub min_expected: f64,
    pub theta_hat: f64,
    pub conditional: bool,
    pub alpha: f64,
}

/// Chi-square goodness of fit of an observed cluster-size histogram against
/// the (conditional) Ewens law at `theta_hat`.
///
/// Cluster-size categories are merged upward (each category joins the
/// adjacent larger-size bin) until every bin's expected cluster count
/// reaches the bin floor; a trailing remainder folds into the last closed
/// bin. Fewer than three bins leaves the test undefined.
pub fn chi_square_gof(
    observed: &PartitionVector,
    theta_hat: f64,
    conditional: bool,
    alpha: f64,
) -> Result<GofReport, EwensError> {
    chi_square_gof_with(observed, theta_hat, conditional, alpha, GofOptions::default())
}

pub fn chi_square_gof_with(
    observed: &PartitionVector,
    theta_hat: f64,
    conditional: bool,
    alpha: f64,
    options: GofOptions,
) -> Result<GofReport, EwensError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EwensError::BadAlpha(alpha));
    }
    let n = observed.n();
    let stats = expected_stats(n, theta_hat, conditional)?;

    let total_expected: f64 = stats.cycle_counts.iter().sum();
    let mut floor = options.min_expected;
    if options.adaptive_floor {
        floor = floor.min((total_expected / 4.0).max(1.0));
    }

    let mut bins: Vec<GofBin> = Vec::new();
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    let mut lo = 1;
    for j in 1..=n {
        acc_obs += observed.count_of(j) as f64;
        acc_exp += stats.cycle_counts[j - 1];
        if acc_exp >= floor {
            bins.push(GofBin {
                size_lo: lo,
                size_hi: j,
                observed: acc_obs,
                expected: acc_exp,
            });
            acc_obs = 0.0;
            acc_exp = 0.0;
            lo = j + 1;
        }
    }
    if acc_exp > 0.0 || acc_obs > 0.0 {
        if let Some(last) = bins.last_mut() {
            last.size_hi = n;
            last.observed += acc_obs;
            last.expected += acc_exp;
        }
    }

    if bins.len() < 3 {
        return Err(EwensError::GofUndefined { bins: bins.len() });
    }

    let statistic = chi_square_statistic(&bins);
    let dof = bins.len() - 1 - options.theta_dof_penalty.min(bins.len() - 2);
    let chi = ChiSquared::new(dof as f64).expect("dof >= 1");
    let p_value = 1.0 - chi.cdf(statistic);
    Ok(GofReport {
        statistic,
        dof,
        p_value,
        pass: p_value >= alpha,
        bins,
        min_expected: floor,
        theta_hat,
        conditional,
        alpha,
    })
}

fn chi_square_statistic(bins: &[GofBin]) -> f64 {
    bins.iter()
        .map(|b| {
            let d = b.observed - b.expected;
            d * d / b.expected
        })
        .sum()
}
