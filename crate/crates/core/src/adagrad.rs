/// Diagonal AdaGrad over one parameter block.
///
/// Each coordinate keeps its own squared-gradient sum, so sparse updates
/// only touch the coordinates they name.
#[derive(Debug, Clone)]
pub struct AdaGrad {
    learning_rate: f64,
    epsilon: f64,
    accumulator: Vec<f64>,
}

impl AdaGrad {
    pub fn new(n_params: usize, learning_rate: f64, epsilon: f64) -> Self {
        AdaGrad {
            learning_rate,
            epsilon,
            accumulator: vec![0.0; n_params],
        }
    }

    /// Descends `weight` (coordinate `i`) along gradient `g`.
    #[inline]
    pub fn update(&mut self, i: usize, weight: &mut f64, g: f64) {
        if g == 0.0 {
            return;
        }
        let acc = &mut self.accumulator[i];
        *acc += g * g;
        *weight -= self.learning_rate * g / (self.epsilon + acc.sqrt());
    }

    pub fn update_dense(&mut self, weights: &mut [f64], grad: &[f64]) {
        for (i, (w, &g)) in weights.iter_mut().zip(grad).enumerate() {
            self.update(i, w, g);
        }
    }
}
