use crate::{Error, Result};

fn check(predictions: &[f64], targets: &[f64]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::Empty("loss inputs"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    Ok(())
}

/// Sum of squared differences.
pub fn sse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check(predictions, targets)?;
    Ok(predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum())
}

/// Mean of squared differences.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    Ok(sse_loss(predictions, targets)? / predictions.len() as f64)
}

/// dMSE/dprediction for one of `n` examples.
#[inline]
pub fn mse_grad(prediction: f64, target: f64, n: usize) -> f64 {
    2.0 * (prediction - target) / n as f64
}
