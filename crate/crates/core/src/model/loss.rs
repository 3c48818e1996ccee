use super::tensor::Matrix;
use super::ModelError;
use crate::tokenizer::TokenId;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Mean NLL over masked positions, in nats.
    pub loss: f64,
    /// NLL at every position, masked or not.
    pub nll: Vec<f64>,
    pub masked: usize,
}

fn check<T: Scalar>(logits: &Matrix<T>, targets: &[TokenId], mask: &[bool]) -> Result<usize, ModelError> {
    if logits.rows() != targets.len() || targets.len() != mask.len() {
        return Err(ModelError::BadShape(format!(
            "{} logit rows, {} targets, {} mask flags",
            logits.rows(),
            targets.len(),
            mask.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t as usize >= logits.cols()) {
        return Err(ModelError::BadToken(t));
    }
    match mask.iter().filter(|&&m| m).count() {
        0 => Err(ModelError::EmptyMask),
        n => Ok(n),
    }
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

/// Softmax cross-entropy averaged over positions where `mask` is set.
pub fn loss<T: Scalar>(logits: &Matrix<T>, targets: &[TokenId], mask: &[bool]) -> Result<LossReport, ModelError> {
    let masked = check(logits, targets, mask)?;
    let nll: Vec<f64> = (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            (log_sum_exp(row) - row[targets[r] as usize]).as_f64()
        })
        .collect();
    let total: f64 = nll.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v).sum();
    Ok(LossReport { loss: total / masked as f64, nll, masked })
}

/// Loss plus the gradient of `scale × loss` with respect to the logits.
pub(crate) fn loss_with_grad<T: Scalar>(
    logits: &Matrix<T>,
    targets: &[TokenId],
    mask: &[bool],
    scale: T,
) -> Result<(LossReport, Matrix<T>), ModelError> {
    let report = loss(logits, targets, mask)?;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let weight = scale / T::of(report.masked as f64);
    for r in (0..logits.rows()).filter(|&r| mask[r]) {
        let row = logits.row(r);
        let lse = log_sum_exp(row);
        for (g, &v) in grad.row_mut(r).iter_mut().zip(row) {
            *g = (v - lse).exp() * weight;
        }
        grad.row_mut(r)[targets[r] as usize] -= weight;
    }
    Ok((report, grad))
}
