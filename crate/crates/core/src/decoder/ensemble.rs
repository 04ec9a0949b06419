use crate::error::{DetoxError, Result};
use crate::lm::{softmax, Distribution, LogitVector};

/// Cumulative mass within this much of `top_p` counts as reaching it.
pub const NUCLEUS_TOLERANCE: f64 = 1e-12;

/// `softmax(z + alpha * (z_plus - z_minus))`.
pub fn ensemble(z: &LogitVector, z_plus: &LogitVector, z_minus: &LogitVector, alpha: f64) -> Result<Distribution> {
    check_lengths(z, z_plus, z_minus)?;
    if !alpha.is_finite() {
        return Err(DetoxError::config("alpha must be finite"));
    }
    let combined: Vec<f64> = z
        .as_slice()
        .iter()
        .zip(z_plus.as_slice())
        .zip(z_minus.as_slice())
        .map(|((z, p), m)| z + alpha * (p - m))
        .collect();
    Ok(Distribution::new_unchecked(softmax(&combined)))
}

/// Ensemble restricted to the tokens where `keep` is true; all others get
/// probability exactly 0.
pub fn ensemble_masked(
    z: &LogitVector,
    z_plus: &LogitVector,
    z_minus: &LogitVector,
    alpha: f64,
    keep: &[bool],
) -> Result<Distribution> {
    check_lengths(z, z_plus, z_minus)?;
    if keep.len() != z.len() {
        return Err(DetoxError::LengthMismatch { expected: z.len(), got: keep.len() });
    }
    let combined: Vec<f64> = (0..z.len())
        .map(|i| {
            if keep[i] {
                z.as_slice()[i] + alpha * (z_plus.as_slice()[i] - z_minus.as_slice()[i])
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    Ok(Distribution::new_unchecked(softmax(&combined)))
}

fn check_lengths(z: &LogitVector, z_plus: &LogitVector, z_minus: &LogitVector) -> Result<()> {
    for other in [z_plus, z_minus] {
        if other.len() != z.len() {
            return Err(DetoxError::LengthMismatch { expected: z.len(), got: other.len() });
        }
    }
    Ok(())
}

/// Token ids in nucleus order: probability descending, id ascending on ties.
fn nucleus_order(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order
}

/// Membership mask of the smallest highest-probability set whose mass
/// reaches `top_p`.
pub fn nucleus_mask(p: &Distribution, top_p: f64) -> Result<Vec<bool>> {
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(DetoxError::config(format!("top_p must lie in (0, 1], got {top_p}")));
    }
    p.check_normalized(1e-6)?;
    let probs = p.as_slice();
    let mut keep = vec![false; probs.len()];
    if top_p >= 1.0 {
        keep.iter_mut().for_each(|k| *k = true);
        return Ok(keep);
    }
    let mut mass = 0.0;
    for i in nucleus_order(probs) {
        keep[i] = true;
        mass += probs[i];
        if mass >= top_p - NUCLEUS_TOLERANCE {
            break;
        }
    }
    Ok(keep)
}

/// Nucleus filtering: zero everything outside the nucleus and renormalize.
/// `top_p = 1` returns the input unchanged.
pub fn top_p_filter(p: &Distribution, top_p: f64) -> Result<Distribution> {
    let keep = nucleus_mask(p, top_p)?;
    if top_p >= 1.0 {
        return Ok(p.clone());
    }
    let mass: f64 = p.as_slice().iter().zip(&keep).filter(|(_, &k)| k).map(|(q, _)| q).sum();
    let out = p
        .as_slice()
        .iter()
        .zip(&keep)
        .map(|(&q, &k)| if k { q / mass } else { 0.0 })
        .collect();
    Ok(Distribution::new_unchecked(out))
}
