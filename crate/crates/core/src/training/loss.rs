use crate::error::{Error, Result};
use crate::numerics::PROB_EPS;

/// `−Σ_c [y_c log o_c + (1 − y_c) log(1 − o_c)]` with `o` clamped to
/// `[1e-12, 1 − 1e-12]`.
pub fn bce_loss(outputs: &[f64], truths: &[bool]) -> Result<f64> {
    if outputs.len() != truths.len() {
        return Err(Error::shape("bce_loss", &[outputs.len()], &[truths.len()]));
    }
    Ok(outputs
        .iter()
        .zip(truths)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            let y = if y { 1.0 } else { 0.0 };
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum())
}

/// Per-example loss averaged over the batch.
pub fn mean_bce_loss(outputs: &[Vec<f64>], truths: &[Vec<bool>]) -> Result<f64> {
    if outputs.len() != truths.len() {
        return Err(Error::shape("mean_bce_loss", &[outputs.len()], &[truths.len()]));
    }
    if outputs.is_empty() {
        return Err(Error::Domain("mean loss of an empty batch".into()));
    }
    let mut total = 0.0;
    for (o, y) in outputs.iter().zip(truths) {
        total += bce_loss(o, y)?;
    }
    Ok(total / outputs.len() as f64)
}
