//! Central finite-difference validation of the manual gradients.

use super::model::Classifier;

/// Compares the closure's analytic gradient at `h` against central finite
/// differences over every parameter and returns the maximum relative error
/// `|a - n| / (|a| + |n| + 1e-12)`.
pub fn grad_check<F>(h: &Classifier, loss_and_grad: F, epsilon: f64) -> f64
where
    F: Fn(&Classifier) -> (f64, Vec<f64>),
{
    assert!((1e-7..=1e-3).contains(&epsilon), "epsilon out of range");
    let (_, analytic) = loss_and_grad(h);
    let mut worst: f64 = 0.0;
    let mut probe = h.clone();
    for i in 0..h.params().len() {
        let original = h.params()[i];
        probe.params_mut()[i] = original + epsilon;
        let (plus, _) = loss_and_grad(&probe);
        probe.params_mut()[i] = original - epsilon;
        let (minus, _) = loss_and_grad(&probe);
        probe.params_mut()[i] = original;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs() + 1e-12);
        worst = worst.max(rel);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::super::loss::{
        ce_loss_grad_params, seq_loss_grad_params, tl_loss_grad_params,
    };
    use super::super::model::{Activation, Arch, Classifier};
    use super::super::WeakMatrix;
    use super::*;
    use crate::kb::conjunction;
    use crate::probmatrix::{joint_matrix, ClassPrior};
    use crate::seeding;
    use rand::Rng;

    fn random_point(rng: &mut rand_chacha::ChaCha8Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn linear_ce_gradient_matches_finite_differences() {
        let mut rng = seeding::rng_from(21);
        for _ in 0..10 {
            let h = Classifier::random_init(Arch::Linear, 3, 4, 0.8, &mut rng);
            let x = random_point(&mut rng, 3);
            let y = rng.gen_range(0..4) as u8;
            let err = grad_check(&h, |h| ce_loss_grad_params(h, &x, y), 1e-5);
            assert!(err < 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn seq_loss_gradient_matches_finite_differences() {
        let mut rng = seeding::rng_from(22);
        let h = Classifier::random_init(Arch::Linear, 2, 2, 0.8, &mut rng);
        let xs = vec![random_point(&mut rng, 2), random_point(&mut rng, 2)];
        let labels = [0u8, 1u8];
        let err = grad_check(&h, |h| seq_loss_grad_params(h, &xs, &labels), 1e-5);
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn tl_gradient_matches_finite_differences_on_conjunction() {
        let kb = conjunction().ground().unwrap();
        let q = joint_matrix(&kb, &ClassPrior::uniform(2)).unwrap();
        let matrix = WeakMatrix::from_prob_matrix(&q);
        let mut rng = seeding::rng_from(23);
        for column in 0..matrix.num_columns() {
            let h = Classifier::random_init(Arch::Linear, 2, 2, 0.8, &mut rng);
            let x = random_point(&mut rng, 2);
            let err =
                grad_check(&h, |h| tl_loss_grad_params(h, &x, column, &matrix), 1e-5);
            assert!(err < 1e-5, "column {column}: relative error {err}");
        }
    }

    #[test]
    fn mlp_gradients_away_from_relu_kinks() {
        let mut rng = seeding::rng_from(24);
        let arch = Arch::Mlp { hidden: 16, activation: Activation::Relu };
        let mut checked = 0;
        while checked < 5 {
            let h = Classifier::random_init(arch, 3, 2, 0.7, &mut rng);
            let x = random_point(&mut rng, 3);
            // Retry points with a pre-activation near a kink.
            let pre: Vec<f64> = (0..16)
                .map(|i| {
                    let row = &h.params()[i * 3..(i + 1) * 3];
                    h.params()[48 + i]
                        + row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect();
            if pre.iter().any(|z| z.abs() < 1e-4) {
                continue;
            }
            let y = rng.gen_range(0..2) as u8;
            let err = grad_check(&h, |h| ce_loss_grad_params(h, &x, y), 1e-5);
            assert!(err < 1e-4, "relative error {err}");
            checked += 1;
        }
    }

    #[test]
    fn mlp_tanh_gradients() {
        let mut rng = seeding::rng_from(25);
        let arch = Arch::Mlp { hidden: 8, activation: Activation::Tanh };
        let h = Classifier::random_init(arch, 3, 3, 0.6, &mut rng);
        let x = random_point(&mut rng, 3);
        let err = grad_check(&h, |h| ce_loss_grad_params(h, &x, 2), 1e-5);
        assert!(err < 1e-5, "relative error {err}");
    }
}
