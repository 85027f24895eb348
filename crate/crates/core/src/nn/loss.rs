use super::Scalar;

/// Logistic function, evaluated without overflow for large `|s|`.
pub fn sigmoid<T: Scalar>(s: T) -> T {
    if s >= T::zero() {
        T::one() / (T::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (T::one() + e)
    }
}

/// Summed per-class sigmoid cross-entropy and its gradient `sigmoid(s) - y`.
///
/// Uses `max(s, 0) - s*y + ln(1 + exp(-|s|))`, which stays finite for any
/// finite `s`.
pub fn multilabel_loss<T: Scalar>(s: &[T], y: &[T]) -> (T, Vec<T>) {
    assert_eq!(s.len(), y.len());
    let mut loss = T::zero();
    let grad = s
        .iter()
        .zip(y)
        .map(|(&s, &y)| {
            loss += s.max(T::zero()) - s * y + (-s.abs()).exp().ln_1p();
            sigmoid(s) - y
        })
        .collect();
    (loss, grad)
}
