//! Winner-take-all margin loss and its gradient with respect to the output
//! weights. The discrete ±η update is the sign of this gradient.

use crate::linalg::Matrix;

/// `½ (o[y_hat] - o[y])²`.
pub fn wta_loss(o: &[f64], y: usize, y_hat: usize) -> f64 {
    let margin = o[y_hat] - o[y];
    0.5 * margin * margin
}

/// Gradient of [`wta_loss`] over the M x C output weights, for `o = hᵀW`:
/// column `y_hat` gets `(o[y_hat] - o[y]) h`, column `y` gets the negation,
/// every other entry is zero.
pub fn wta_grad(h: &[f64], o: &[f64], y: usize, y_hat: usize) -> Matrix {
    let mut g = Matrix::zeros(h.len(), o.len());
    if y == y_hat {
        return g;
    }
    let margin = o[y_hat] - o[y];
    for (i, &hi) in h.iter().enumerate() {
        g[(i, y_hat)] = margin * hi;
        g[(i, y)] = -margin * hi;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(h: &[f64], w: &Matrix) -> Vec<f64> {
        (0..w.cols())
            .map(|c| h.iter().enumerate().map(|(i, hi)| hi * w[(i, c)]).sum())
            .collect()
    }

    #[test]
    fn loss_examples() {
        assert_eq!(wta_loss(&[1.0, 1.0], 0, 1), 0.0);
        assert_eq!(wta_loss(&[1.0, 0.0, 3.0], 0, 2), 2.0);
    }

    #[test]
    fn grad_zero_cases() {
        let g = wta_grad(&[1.0, 0.0], &[2.0, 2.0, 0.0], 0, 1);
        assert_eq!(g.max_abs(), 0.0);
        let g = wta_grad(&[1.0, 0.0, 1.0], &[0.0, 1.0, 3.0], 0, 2);
        assert_eq!(g.row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(g.row(0), &[-3.0, 0.0, 3.0]);
    }

    proptest! {
        #[test]
        fn grad_matches_central_differences(
            h in prop::collection::vec(0u8..2, 6),
            w in prop::collection::vec(-2.0f64..2.0, 18),
            y in 0usize..3,
            y_hat in 0usize..3,
        ) {
            let h: Vec<f64> = h.into_iter().map(f64::from).collect();
            let w = Matrix::from_vec(6, 3, w).unwrap();
            let o = scores(&h, &w);
            let g = wta_grad(&h, &o, y, y_hat);
            let eps = 1e-5;
            for i in 0..6 {
                for c in 0..3 {
                    let mut wp = w.clone();
                    wp[(i, c)] += eps;
                    let mut wm = w.clone();
                    wm[(i, c)] -= eps;
                    let fd = (wta_loss(&scores(&h, &wp), y, y_hat)
                        - wta_loss(&scores(&h, &wm), y, y_hat))
                        / (2.0 * eps);
                    let an = g[(i, c)];
                    let scale = an.abs().max(1.0);
                    prop_assert!((fd - an).abs() <= 1e-7 * scale, "fd {} an {}", fd, an);
                }
            }
        }

        #[test]
        fn loss_is_line_integral_of_grad(
            h in prop::collection::vec(0u8..2, 5),
            w0 in prop::collection::vec(-1.0f64..1.0, 15),
            dir in prop::collection::vec(-1.0f64..1.0, 15),
            y in 0usize..3,
            y_hat in 0usize..3,
        ) {
            let h: Vec<f64> = h.into_iter().map(f64::from).collect();
            let w0 = Matrix::from_vec(5, 3, w0).unwrap();
            let dir = Matrix::from_vec(5, 3, dir).unwrap();
            let at = |t: f64| {
                let data = w0.data().iter().zip(dir.data()).map(|(a, d)| a + t * d).collect();
                Matrix::from_vec(5, 3, data).unwrap()
            };
            // The integrand is linear in t, so Simpson's rule is exact.
            let slope = |t: f64| {
                let w = at(t);
                let g = wta_grad(&h, &scores(&h, &w), y, y_hat);
                g.data().iter().zip(dir.data()).map(|(a, b)| a * b).sum::<f64>()
            };
            let integral = (slope(0.0) + 4.0 * slope(0.5) + slope(1.0)) / 6.0;
            let delta = wta_loss(&scores(&h, &at(1.0)), y, y_hat)
                - wta_loss(&scores(&h, &w0), y, y_hat);
            prop_assert!((integral - delta).abs() < 1e-9);
        }
    }
}
