use rand::Rng;

use crate::error::{Error, Result};

/// `(1 − β·s_sem)·γ·t/t_total`.
pub fn dropout_probability(s_sem: f64, t: u64, t_total: u64, beta: f64, gamma: f64) -> f64 {
    if t_total == 0 {
        return 0.0;
    }
    (1.0 - beta * s_sem) * gamma * (t as f64 / t_total as f64)
}

/// `1 / (1 − D)`.
pub fn compensation(d: f64) -> f64 {
    1.0 / (1.0 - d)
}

/// One iteration's dropout draw.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutDraw {
    pub kept: Vec<bool>,
    /// Opacity multiplier per Gaussian; 0 for dropped ones.
    pub opacity_scale: Vec<f64>,
    pub dropped: usize,
}

impl DropoutDraw {
    pub fn none(n: usize) -> Self {
        Self {
            kept: vec![true; n],
            opacity_scale: vec![1.0; n],
            dropped: 0,
        }
    }
}

/// Drops each Gaussian independently with its probability and compensates
/// the survivors. One uniform draw per Gaussian, in order.
pub fn apply_dropout<R: Rng + ?Sized>(
    s_sem: &[f64],
    t: u64,
    t_total: u64,
    beta: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<DropoutDraw> {
    let mut draw = DropoutDraw::none(s_sem.len());
    for (i, &s) in s_sem.iter().enumerate() {
        let d = dropout_probability(s, t, t_total, beta, gamma);
        if !(0.0..1.0).contains(&d) {
            return Err(Error::Config(format!("dropout probability {d} outside [0, 1)")));
        }
        if rng.random::<f64>() < d {
            draw.kept[i] = false;
            draw.opacity_scale[i] = 0.0;
            draw.dropped += 1;
        } else {
            draw.opacity_scale[i] = compensation(d);
        }
    }
    Ok(draw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probability_examples() {
        assert!((dropout_probability(1.0, 100, 100, 0.5, 0.25) - 0.125).abs() < 1e-12);
        assert!((dropout_probability(0.0, 100, 100, 0.5, 0.25) - 0.25).abs() < 1e-12);
        assert_eq!(dropout_probability(0.7, 0, 100, 0.5, 0.25), 0.0);
        assert!((compensation(0.125) - 1.0 / 0.875).abs() < 1e-12);
        assert_eq!(compensation(0.0), 1.0);
    }

    #[test]
    fn zero_probability_keeps_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = apply_dropout(&[0.0, 1.0, 0.5], 0, 10, 0.5, 0.25, &mut rng).unwrap();
        assert_eq!(d, DropoutDraw::none(3));
    }

    #[test]
    fn rejects_probability_of_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(apply_dropout(&[0.0], 10, 10, 0.0, 1.0, &mut rng).is_err());
    }
}
