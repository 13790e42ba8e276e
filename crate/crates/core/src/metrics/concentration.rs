use super::MetricsError;

/// Shannon entropy of `p` in nats, and the same divided by `ln k`.
///
/// Zero proportions contribute nothing. The normalized value is clamped to
/// `[0, 1]` to absorb rounding.
pub fn shannon_diversity(p: &[f64], k: usize) -> Result<(f64, f64), MetricsError> {
    if k < 2 {
        return Err(MetricsError::DegenerateK(k));
    }
    let raw = -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>();
    let raw = raw.max(0.0);
    Ok((raw, (raw / (k as f64).ln()).clamp(0.0, 1.0)))
}

/// Herfindahl–Hirschman index, `Σ p_k²`.
pub fn hhi_dominance(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum()
}
