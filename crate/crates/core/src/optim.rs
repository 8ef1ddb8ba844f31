use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a [usize]>, learning_rate: f64) -> Self {
        let first_moment: Vec<Tensor> = shapes.into_iter().map(Tensor::zeros).collect();
        Self {
            second_moment: first_moment.clone(),
            first_moment,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    pub fn for_params(params: &[&Tensor], learning_rate: f64) -> Self {
        Self::new(params.iter().map(|p| p.shape()), learning_rate)
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        let mask = vec![true; params.len()];
        self.step_masked(params, grads, &mask)
    }

    /// Updates only the parameters whose mask entry is set; masked-out
    /// parameters and their moments are left untouched.
    pub fn step_masked(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
        mask: &[bool],
    ) -> Result<()> {
        if params.len() != grads.len()
            || params.len() != self.first_moment.len()
            || params.len() != mask.len()
        {
            return Err(Error::Dimension(format!(
                "adam: {} params, {} grads, {} moments, {} mask entries",
                params.len(),
                grads.len(),
                self.first_moment.len(),
                mask.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if !p.same_shape(g) || !p.same_shape(&self.first_moment[i]) {
                return Err(Error::Dimension(format!(
                    "adam param {i}: {:?} vs grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            g.check_finite("gradient")?;
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if !mask[i] {
                continue;
            }
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g.data()[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
