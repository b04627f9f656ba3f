//! Optimization of a [`FieldGrid`] on posed frames.
//!
//! The loss per batch of rays is the mean squared color error plus the mean
//! binary cross-entropy of the accumulated fruit probability against the
//! mask. The semantic term never reaches density or color: it is
//! differentiated with the compositing weights held fixed.

mod adam;
mod loss;

pub use adam::Adam;
pub use loss::{
    backward, evaluate, photometric_loss, sample_batch, semantic_loss, LossReport, LossTerms, TrainRay,
};

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::field::{FieldGrid, GridSpec};
use crate::rng;
use crate::scenegen::PosedFrame;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Rays per batch.
    pub batch_size: usize,
    pub samples_per_ray: usize,
    pub learning_rate: f64,
    pub betas: [f64; 2],
    pub epsilon: f64,
    /// Update only voxels that received a gradient in the current step.
    pub sparse_updates: bool,
    pub grid: GridSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            batch_size: 4096,
            samples_per_ray: 128,
            learning_rate: 1e-2,
            betas: [0.9, 0.999],
            epsilon: 1e-8,
            sparse_updates: true,
            grid: GridSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn diagnostics(&self, path: &str, out: &mut Vec<String>) {
        if self.iterations < 1 {
            out.push(format!("{path}.iterations: must be >= 1"));
        }
        self.run_diagnostics(path, out);
    }

    /// Everything except the iteration count, which may be 0 for a direct
    /// call to [`train`].
    fn run_diagnostics(&self, path: &str, out: &mut Vec<String>) {
        let mut bad = |field: &str, msg: &str| out.push(format!("{path}.{field}: {msg}"));
        if self.batch_size < 1 {
            bad("batch_size", "must be >= 1");
        }
        if self.samples_per_ray < 1 {
            bad("samples_per_ray", "must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bad("learning_rate", "must be > 0");
        }
        if !self.betas.iter().all(|b| (0.0..1.0).contains(b)) {
            bad("betas", "must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            bad("epsilon", "must be > 0");
        }
        if self.grid.resolution.iter().any(|&n| n < 2) {
            bad("grid.resolution", "must be >= 2 per axis");
        }
        if !self.grid.bounds.is_valid() {
            bad("grid.bounds", "min must be < max on every axis");
        }
        if !(self.grid.init_raw_density.is_finite() && self.grid.init_raw_semantic.is_finite()) {
            bad("grid", "initial raw values must be finite");
        }
    }
}

/// Steps an optimizer over batches drawn from a fixed frame set.
pub struct Trainer<'a> {
    frames: &'a [PosedFrame],
    config: TrainConfig,
    seed: u64,
    grid: FieldGrid,
    adam: Adam,
    touched: Vec<usize>,
    mark: Vec<bool>,
    iteration: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(frames: &'a [PosedFrame], config: &TrainConfig, grid: FieldGrid, seed: u64) -> Result<Self> {
        let mut d = Vec::new();
        config.run_diagnostics("train", &mut d);
        if !d.is_empty() {
            return Err(Error::InvalidConfig(d));
        }
        if frames.is_empty() {
            return Err(Error::InvalidArgument("training needs at least one frame".into()));
        }
        let n = grid.len();
        Ok(Trainer {
            frames,
            config: config.clone(),
            seed: rng::derive(seed, rng::stream::TRAIN),
            adam: Adam::new(n, config.learning_rate, config.betas, config.epsilon),
            grid,
            touched: Vec::new(),
            mark: vec![false; n],
            iteration: 0,
        })
    }

    pub fn grid(&self) -> &FieldGrid {
        &self.grid
    }

    pub fn into_grid(self) -> FieldGrid {
        self.grid
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One sample → forward → loss → backward → update cycle.
    pub fn step(&mut self) -> Result<LossReport> {
        let batch = sample_batch(
            self.frames,
            &self.grid.bounds(),
            self.config.batch_size,
            self.config.samples_per_ray,
            rng::derive(self.seed, self.iteration as u64),
        )?;
        self.iteration += 1;
        let report = backward(
            &mut self.grid,
            &batch,
            LossTerms::BOTH,
            Some((&mut self.touched, &mut self.mark)),
        )?;
        if !report.l_total.is_finite() {
            return Err(Error::Diverged {
                iteration: self.iteration,
                loss: report.l_total,
            });
        }
        if self.config.sparse_updates {
            // Memory order makes the scattered update far cheaper.
            self.touched.sort_unstable();
            self.adam.step(&mut self.grid, Some(&self.touched));
        } else {
            self.adam.step(&mut self.grid, None);
        }
        let grad = self.grid.grad_mut();
        for &i in &self.touched {
            grad[i] = [0.0; crate::field::CHANNELS];
            self.mark[i] = false;
        }
        self.touched.clear();
        Ok(report)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub grid: FieldGrid,
    /// One report per iteration.
    pub losses: Vec<LossReport>,
}

/// Trains a freshly initialized grid.
pub fn train(frames: &[PosedFrame], config: &TrainConfig, seed: u64) -> Result<TrainOutput> {
    let grid = FieldGrid::from_spec(&config.grid)?;
    train_from(grid, frames, config, seed, |_, _| {})
}

/// Continues training `grid`. `progress` sees each iteration number
/// (1-based) and its losses. With zero iterations the grid is returned
/// unchanged.
pub fn train_from(
    grid: FieldGrid,
    frames: &[PosedFrame],
    config: &TrainConfig,
    seed: u64,
    mut progress: impl FnMut(usize, &LossReport),
) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(frames, config, grid, seed)?;
    let mut losses = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let r = trainer.step()?;
        progress(trainer.iteration(), &r);
        losses.push(r);
    }
    Ok(TrainOutput {
        grid: trainer.into_grid(),
        losses,
    })
}

/// Loss curve as CSV: `iteration,l_photo,l_sem,l_total`, 1-based.
pub fn loss_csv(losses: &[LossReport]) -> String {
    let mut s = String::from("iteration,l_photo,l_sem,l_total\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{}", i + 1, l.l_photo, l.l_sem, l.l_total);
    }
    s
}

pub fn write_loss_csv(path: &Path, losses: &[LossReport]) -> Result<()> {
    std::fs::write(path, loss_csv(losses)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
