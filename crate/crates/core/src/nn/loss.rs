use ndarray::Array2;

use crate::{Error, Result, Scalar};

/// Mean squared error over all entries and its gradient `2(pred − target)/count`.
pub fn mse_loss<T: Scalar>(pred: &Array2<T>, target: &Array2<T>) -> Result<(T, Array2<T>)> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(target.dim(), pred.dim()));
    }
    let count = T::of_usize(pred.len().max(1));
    let diff = pred - target;
    let loss = diff.iter().map(|&d| d * d).sum::<T>() / count;
    let two = T::one() + T::one();
    Ok((loss, diff.mapv(|d| two * d / count)))
}
