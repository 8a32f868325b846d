//! Convergence diagnostics over stored draws: effective sample size and the
//! split-chain potential scale reduction factor.

/// Effective sample size of one scalar chain via the initial-positive-
/// sequence estimator: autocorrelations are summed in adjacent pairs until a
/// pair sum turns negative.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    if var <= 0.0 {
        return nf;
    }
    let autocov = |lag: usize| -> f64 {
        (0..n - lag)
            .map(|t| (series[t] - mean) * (series[t + lag] - mean))
            .sum::<f64>()
            / nf
    };
    let max_lag = n / 2;
    let mut tau = 1.0; // rho_0
    let mut lag = 1;
    while lag + 1 < max_lag {
        let pair = (autocov(lag) + autocov(lag + 1)) / var;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (nf / tau).min(nf)
}

/// Split-chain potential scale reduction factor. Each chain is halved, and
/// the classic between/within variance ratio is computed over the resulting
/// sequences. Values near 1 indicate mixing; above ~1.1 is suspect.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let h = c.len() / 2;
        if h < 2 {
            continue;
        }
        halves.push(&c[..h]);
        halves.push(&c[h..2 * h]);
    }
    let m = halves.len();
    if m < 2 {
        return f64::NAN;
    }
    let n = halves.iter().map(|h| h.len()).min().expect("nonempty") as f64;
    let means: Vec<f64> = halves
        .iter()
        .map(|h| h.iter().sum::<f64>() / h.len() as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = n / (m as f64 - 1.0)
        * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(means.iter())
        .map(|(h, mu)| {
            h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (h.len() as f64 - 1.0)
        })
        .sum::<f64>()
        / m as f64;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}
