use crate::field::{FieldGrid, Voxel, CHANNELS};

/// Adam with bias-corrected moments over every raw channel of a grid.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Voxel>,
    v: Vec<Voxel>,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64, betas: [f64; 2], epsilon: f64) -> Self {
        Adam {
            learning_rate,
            beta1: betas[0],
            beta2: betas[1],
            epsilon,
            step: 0,
            m: vec![[0.0; CHANNELS]; len],
            v: vec![[0.0; CHANNELS]; len],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the grid's gradient buffer. With `touched`,
    /// only those voxels are updated (lazy Adam: moments of untouched voxels
    /// are left alone); otherwise every voxel is.
    pub fn step(&mut self, grid: &mut FieldGrid, touched: Option<&[usize]>) {
        assert_eq!(grid.len(), self.m.len(), "optimizer sized for a different grid");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (raw, grad) = grid.raw_and_grad_mut();
        let all: Vec<usize>;
        let indices = match touched {
            Some(idx) => idx,
            None => {
                all = (0..raw.len()).collect();
                &all
            }
        };
        for &i in indices {
            for c in 0..CHANNELS {
                let g = grad[i][c];
                let m = self.beta1 * self.m[i][c] + (1.0 - self.beta1) * g;
                let v = self.beta2 * self.v[i][c] + (1.0 - self.beta2) * g * g;
                self.m[i][c] = m;
                self.v[i][c] = v;
                raw[i][c] -= self.learning_rate * (m / c1) / ((v / c2).sqrt() + self.epsilon);
            }
        }
    }
}
