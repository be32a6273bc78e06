use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before the logarithm.
pub const PROB_EPS: f64 = 1e-7;

fn check(p: &[f64], y: &[u8]) -> Result<()> {
    if p.len() != y.len() {
        return Err(Error::Shape { expected: p.len().to_string(), actual: y.len().to_string() });
    }
    if p.is_empty() {
        return Err(Error::Parameter("loss over an empty batch".into()));
    }
    if let Some(&bad) = y.iter().find(|&&v| v > 1) {
        return Err(Error::Parameter(format!("label {bad} is not 0 or 1")));
    }
    Ok(())
}

/// Per-pair binary cross-entropy.
pub fn pair_bce(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean binary cross-entropy over the batch.
pub fn pair_loss(p: &[f64], y: &[u8]) -> Result<f64> {
    check(p, y)?;
    if let Some(i) = p.iter().position(|v| v.is_nan()) {
        return Err(Error::Parameter(format!("prediction {i} is NaN")));
    }
    Ok(p.iter().zip(y).map(|(&p, &y)| pair_bce(p, y)).sum::<f64>() / p.len() as f64)
}

/// Derivative of [`pair_bce`] with respect to the logit `z` when `p = logistic(z)`.
/// Zero inside the clamped region, where the loss is constant.
pub fn pair_bce_grad_logit(p: f64, y: u8) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return 0.0;
    }
    p - y as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn closed_forms() {
        assert!((pair_loss(&[0.5, 0.5, 0.5], &[0, 1, 1]).unwrap() - LN_2).abs() < 1e-12);
        assert!((pair_loss(&[0.25], &[1]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!(pair_loss(&[1.0, 0.0], &[1, 0]).unwrap() <= 1e-6);
    }

    #[test]
    fn clamp_bounds_confident_mistakes() {
        let worst = pair_loss(&[0.0], &[1]).unwrap();
        assert!((worst + PROB_EPS.ln()).abs() < 1e-9);
        assert_eq!(pair_bce_grad_logit(1.0, 0), 0.0);
    }

    #[test]
    fn rejects_malformed_batches() {
        assert!(pair_loss(&[], &[]).is_err());
        assert!(pair_loss(&[0.5], &[2]).is_err());
        assert!(pair_loss(&[0.5, 0.5], &[1]).is_err());
    }
}
