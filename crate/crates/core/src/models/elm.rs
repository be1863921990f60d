use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argmax, Classifier, ModelError, Result};
use crate::counter::Tally;
use crate::datasets::{Sample, NUM_CLASSES};
use crate::linalg::{self, Matrix};
use crate::prng::SeedPlan;

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `{0, 1}` one-hot targets, one row per sample.
pub fn one_hot(labels: impl IntoIterator<Item = usize>) -> Matrix {
    let labels: Vec<usize> = labels.into_iter().collect();
    let mut t = Matrix::zeros(labels.len(), NUM_CLASSES);
    for (i, &y) in labels.iter().enumerate() {
        t[(i, y)] = 1.0;
    }
    t
}

/// Single-hidden-layer network with fixed random input weights and a
/// sigmoid hidden layer; only `w_out` is learned.
#[derive(Debug, Clone)]
pub struct ElmModel {
    w_in: Matrix,
    bias: Vec<f64>,
    w_out: Option<Matrix>,
}

impl ElmModel {
    /// Input weights and biases from the LFSR streams of `plan`, so the
    /// baseline projects through exactly the same weights as SPLR-ELM.
    pub fn from_plan(plan: &SeedPlan, d: usize) -> Result<Self> {
        let m = plan.neuron_count();
        let mut w_in = Matrix::zeros(m, d);
        let mut bias = Vec::with_capacity(m);
        for i in 0..m {
            let (row, b) = plan.neuron_params(i, d)?;
            for (dst, w) in w_in.row_mut(i).iter_mut().zip(row) {
                *dst = w.to_real();
            }
            bias.push(b.to_real());
        }
        Ok(Self::from_parts(w_in, bias))
    }

    pub fn from_parts(w_in: Matrix, bias: Vec<f64>) -> Self {
        assert_eq!(w_in.rows(), bias.len(), "one bias per hidden neuron");
        Self {
            w_in,
            bias,
            w_out: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_in.rows()
    }

    pub fn w_out(&self) -> Option<&Matrix> {
        self.w_out.as_ref()
    }

    pub fn set_w_out(&mut self, w: Matrix) -> Result<()> {
        if w.rows() != self.hidden_dim() || w.cols() != NUM_CLASSES {
            return Err(ModelError::Dimension {
                expected: self.hidden_dim(),
                found: w.rows(),
            });
        }
        self.w_out = Some(w);
        Ok(())
    }

    fn check_dim(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(ModelError::Dimension {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `sigmoid(w_in x + b)` for one sample.
    pub fn sigmoid_hidden(&self, x: &[f32]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok((0..self.hidden_dim())
            .map(|i| {
                let z: f64 = self
                    .w_in
                    .row(i)
                    .iter()
                    .zip(x)
                    .map(|(w, &v)| w * v as f64)
                    .sum::<f64>()
                    + self.bias[i];
                sigmoid(z)
            })
            .collect())
    }

    /// Hidden responses `H` (N x M) for a batch.
    pub fn hidden_matrix(&self, samples: &[Sample]) -> Result<Matrix> {
        let d = self.input_dim();
        let mut x = Matrix::zeros(samples.len(), d);
        for (i, s) in samples.iter().enumerate() {
            self.check_dim(&s.features)?;
            for (dst, &v) in x.row_mut(i).iter_mut().zip(&s.features) {
                *dst = v as f64;
            }
        }
        let w_t = self.w_in.transpose();
        let mut h = linalg::matmul(&x, &w_t)?;
        for i in 0..h.rows() {
            for (v, b) in h.row_mut(i).iter_mut().zip(&self.bias) {
                *v = sigmoid(*v + b);
            }
        }
        Ok(h)
    }

    /// Closed-form ridge fit of the output weights.
    pub fn fit(&mut self, train: &[Sample], lambda: f64) -> Result<()> {
        self.fit_counted(train, lambda, &mut (), &mut ())
    }

    /// As [`fit`](Self::fit), tallying the normal-equation formation and
    /// the factorize-and-solve phase separately.
    pub fn fit_counted<T: Tally>(
        &mut self,
        train: &[Sample],
        lambda: f64,
        form: &mut T,
        solve: &mut T,
    ) -> Result<()> {
        let h = self.hidden_matrix(train)?;
        let t = one_hot(train.iter().map(|s| s.label));
        let (g, b) = linalg::normal_equations(&h, &t, lambda, form)?;
        let w = linalg::spd_solve(&g, &b, solve)?;
        self.set_w_out(w)
    }

    /// Fit from precomputed hidden responses (test hook).
    pub fn fit_hidden(&mut self, h: &Matrix, t: &Matrix, lambda: f64) -> Result<()> {
        let w = linalg::ridge_solve(h, t, lambda)?;
        self.set_w_out(w)
    }

    pub fn scores_from_hidden(&self, h: &[f64]) -> Result<Vec<f64>> {
        let w = self.w_out.as_ref().ok_or(ModelError::NotFitted)?;
        let mut o = vec![0.0; w.cols()];
        for (hi, row) in h.iter().zip(0..w.rows()) {
            for (oc, wc) in o.iter_mut().zip(w.row(row)) {
                *oc += hi * wc;
            }
        }
        Ok(o)
    }
}

impl Classifier for ElmModel {
    fn predict(&self, x: &[f32]) -> Result<usize> {
        let h = self.sigmoid_hidden(x)?;
        Ok(argmax(&self.scores_from_hidden(&h)?))
    }

    fn predict_batch(&self, data: &crate::datasets::Dataset) -> Result<Vec<usize>> {
        let w = self.w_out.as_ref().ok_or(ModelError::NotFitted)?;
        let h = self.hidden_matrix(data.samples())?;
        let o = linalg::matmul(&h, w)?;
        Ok((0..o.rows()).map(|i| argmax(o.row(i))).collect())
    }
}

/// Online-sequential ELM: a regularized batch solve on an initial block,
/// then one recursive-least-squares update per streamed sample.
#[derive(Debug, Clone)]
pub struct OsElmModel {
    elm: ElmModel,
    p: Option<Matrix>,
    n0: usize,
}

impl OsElmModel {
    pub fn new(elm: ElmModel, n0: usize) -> Self {
        Self { elm, p: None, n0 }
    }

    pub fn elm(&self) -> &ElmModel {
        &self.elm
    }

    pub fn into_elm(self) -> ElmModel {
        self.elm
    }

    /// Inverse-covariance state `(H0ᵀH0 + λI)⁻¹` and its updates.
    pub fn p(&self) -> Option<&Matrix> {
        self.p.as_ref()
    }

    pub fn initial_batch(&self) -> usize {
        self.n0
    }

    pub fn init(&mut self, batch0: &[Sample], lambda: f64) -> Result<()> {
        if batch0.is_empty() {
            return Err(ModelError::Hyper("initial batch must be nonempty".into()));
        }
        let h0 = self.elm.hidden_matrix(batch0)?;
        let t0 = one_hot(batch0.iter().map(|s| s.label));
        self.init_hidden(&h0, &t0, lambda)
    }

    /// `p = (H0ᵀH0 + λI)⁻¹`, `w_out = p H0ᵀ T0`.
    pub fn init_hidden(&mut self, h0: &Matrix, t0: &Matrix, lambda: f64) -> Result<()> {
        let (g, b) = linalg::normal_equations(h0, t0, lambda, &mut ())?;
        let l = linalg::cholesky(&g, &mut ())?;
        let mut p = linalg::cholesky_solve(&l, &Matrix::identity(g.rows()), &mut ())?;
        let n = p.rows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (p[(i, j)] + p[(j, i)]);
                p[(i, j)] = v;
                p[(j, i)] = v;
            }
        }
        let w = linalg::matmul(&p, &b)?;
        self.elm.set_w_out(w)?;
        self.p = Some(p);
        Ok(())
    }

    pub fn update(&mut self, x: &[f32], y: usize) -> Result<()> {
        if y >= NUM_CLASSES {
            return Err(ModelError::Label(y));
        }
        let h = self.elm.sigmoid_hidden(x)?;
        let mut t = [0.0; NUM_CLASSES];
        t[y] = 1.0;
        self.update_hidden(&h, &t)
    }

    /// Rank-one RLS step with hidden row `h` and target row `t`:
    /// `k = p h / (1 + hᵀ p h)`, `p -= k (p h)ᵀ`, `w += k (t - hᵀ w)`.
    pub fn update_hidden(&mut self, h: &[f64], t: &[f64]) -> Result<()> {
        let p = self.p.as_mut().ok_or(ModelError::NotFitted)?;
        let w = self.elm.w_out.as_mut().ok_or(ModelError::NotFitted)?;
        let m = p.rows();
        if h.len() != m {
            return Err(ModelError::Dimension {
                expected: m,
                found: h.len(),
            });
        }
        let ph: Vec<f64> = (0..m)
            .map(|i| p.row(i).iter().zip(h).map(|(a, b)| a * b).sum())
            .collect();
        let denom = 1.0 + h.iter().zip(&ph).map(|(a, b)| a * b).sum::<f64>();
        let inv = 1.0 / denom;

        let mut residual = t.to_vec();
        for (i, &hi) in h.iter().enumerate() {
            if hi != 0.0 {
                for (r, wc) in residual.iter_mut().zip(w.row(i)) {
                    *r -= hi * wc;
                }
            }
        }
        // ph_i * ph_j is commutative bitwise, so p stays exactly symmetric.
        for i in 0..m {
            let ki = ph[i] * inv;
            for (pij, phj) in p.row_mut(i).iter_mut().zip(&ph) {
                *pij -= ki * phj;
            }
            for (wc, r) in w.row_mut(i).iter_mut().zip(&residual) {
                *wc += ki * r;
            }
        }
        Ok(())
    }

    /// Shuffles `train` with `shuffle_seed`, initializes on the first `n0`
    /// samples and streams the rest one at a time. Returns the number of
    /// streamed updates.
    pub fn train(&mut self, train: &[Sample], lambda: f64, shuffle_seed: u64) -> Result<usize> {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let shuffled: Vec<Sample> = order.iter().map(|&i| train[i].clone()).collect();
        let n0 = self.n0.clamp(1, shuffled.len().max(1));
        let (head, tail) = shuffled.split_at(n0);
        self.init(head, lambda)?;
        if tail.is_empty() {
            return Ok(0);
        }
        let h = self.elm.hidden_matrix(tail)?;
        for (i, s) in tail.iter().enumerate() {
            let mut t = [0.0; NUM_CLASSES];
            t[s.label] = 1.0;
            self.update_hidden(h.row(i), &t)?;
        }
        Ok(tail.len())
    }
}

impl Classifier for OsElmModel {
    fn predict(&self, x: &[f32]) -> Result<usize> {
        self.elm.predict(x)
    }

    fn predict_batch(&self, data: &crate::datasets::Dataset) -> Result<Vec<usize>> {
        self.elm.predict_batch(data)
    }
}
