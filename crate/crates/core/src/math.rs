//! Small numeric helpers shared by the model, simulator and metrics.

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Probability clamp applied before taking logs in cross-entropy.
pub const PROB_EPS: f64 = 1e-7;

/// Binary cross-entropy of prediction `p` against label `y`, with `p`
/// clamped to `[PROB_EPS, 1 - PROB_EPS]`.
#[inline]
pub fn bce(p: f64, y: bool) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y { -p.ln() } else { -(1.0 - p).ln() }
}

/// d bce / d p, zero where the clamp is active.
#[inline]
pub fn bce_grad(p: f64, y: bool) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return 0.0;
    }
    if y { -1.0 / p } else { 1.0 / (1.0 - p) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn bce_clamps() {
        assert!(bce(0.0, true).is_finite());
        assert!(bce(1.0, false).is_finite());
        assert!(bce(1.0 - 1e-9, true) < 1e-6);
        assert_eq!(bce_grad(0.0, true), 0.0);
    }
}
