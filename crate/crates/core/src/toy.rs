//! Toy offset-regression experiment on synthetic rotation-equivariant
//! features.
//!
//! Training offsets are confined to an azimuth sector; evaluation uses a
//! held-out draw from the same sector and a copy of it rotated by uniform
//! random angles. Every random draw has its own seeded stream.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, TAU};

use rand::Rng;

use crate::data_model::OffsetVector;
use crate::error::{Error, Result};
use crate::foa::{rotate_offset, FeatureMap, FusionStrategy, RotationAngleSet};
use crate::learning::{
    branch_objective, predict_rotated, rotate_branches, Proposal, RegressorParams, SgdMomentum,
    DEFAULT_BETA,
};
use crate::synth::{generate_feature_for_offset, purpose_rng};

mod stream {
    pub const TRAIN: u64 = 21;
    pub const HELD_OUT: u64 = 22;
    pub const TEST_ROTATION: u64 = 23;
    pub const INIT: u64 = 24;
    pub const ORDER: u64 = 25;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub angles: RotationAngleSet,
    pub fusion: FusionStrategy,
    pub steps: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub beta: f64,
    pub hidden_dim: usize,
    pub channels: usize,
    pub map_size: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Side of the square proposal that normalizes the offset encoding.
    pub proposal_size: f64,
    /// Offset lengths in pixels.
    pub rho_range: (f64, f64),
    /// Training and held-out azimuths are uniform in `[0, sector)`.
    pub sector: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            angles: RotationAngleSet::quarter_turns(),
            fusion: FusionStrategy::MaxNorm,
            steps: 6000,
            seed: 0,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            beta: DEFAULT_BETA,
            hidden_dim: 32,
            channels: 4,
            map_size: 9,
            train_size: 512,
            test_size: 256,
            proposal_size: 64.0,
            rho_range: (2.0, 24.0),
            sector: FRAC_PI_2,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.map_size < 2 || self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("toy model dimensions must be positive"));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::InvalidConfig("toy data sets must be nonempty"));
        }
        let (r0, r1) = self.rho_range;
        if !(r0 >= 0.0 && r0 <= r1 && r1.is_finite()) {
            return Err(Error::InvalidConfig("rho_range must satisfy 0 <= min <= max"));
        }
        if !(self.sector > 0.0 && self.sector <= TAU) {
            return Err(Error::InvalidConfig("sector must lie in (0, 2π]"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be non-negative"));
        }
        Proposal::from_size(self.proposal_size, self.proposal_size).map(|_| ())
    }

    pub fn proposal(&self) -> Result<Proposal> {
        Proposal::from_size(self.proposal_size, self.proposal_size)
    }

    fn feature(&self, o: OffsetVector) -> Result<FeatureMap> {
        generate_feature_for_offset(o, self.channels, self.map_size, self.map_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySummary {
    /// Mean EPE on the held-out draw from the training sector.
    pub held_out_epe: f64,
    /// Mean EPE after rotating every held-out offset by a random angle.
    pub rotated_epe: f64,
    /// Mean summed branch loss over the last 10% of steps.
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRun {
    pub params: RegressorParams,
    pub summary: ToySummary,
}

fn sample_offsets(c: &ToyConfig, purpose: u64, n: usize) -> Vec<OffsetVector> {
    let mut rng = purpose_rng(c.seed, purpose);
    (0..n)
        .map(|_| {
            let rho = if c.rho_range.0 == c.rho_range.1 {
                c.rho_range.0
            } else {
                rng.random_range(c.rho_range.0..c.rho_range.1)
            };
            let theta = rng.random_range(0.0..c.sector);
            rotate_offset(OffsetVector::new(rho, 0.0), theta)
        })
        .collect()
}

/// Held-out offsets and their rotated counterparts; depends only on the
/// seed and the data settings, never on the angle set.
pub fn test_offsets(c: &ToyConfig) -> (Vec<OffsetVector>, Vec<OffsetVector>) {
    let held_out = sample_offsets(c, stream::HELD_OUT, c.test_size);
    let mut rng = purpose_rng(c.seed, stream::TEST_ROTATION);
    let rotated = held_out
        .iter()
        .map(|&o| rotate_offset(o, rng.random_range(0.0..TAU)))
        .collect();
    (held_out, rotated)
}

/// Mean EPE of multi-branch prediction over `offsets`.
pub fn evaluate_toy(params: &RegressorParams, c: &ToyConfig, offsets: &[OffsetVector]) -> Result<f64> {
    let proposal = c.proposal()?;
    let mut total = 0.0;
    for &o in offsets {
        let branches = rotate_branches(&c.feature(o)?, &c.angles)?;
        let pred = predict_rotated(params, &branches, &proposal, &c.angles, c.fusion)?;
        total += (pred - o).norm();
    }
    Ok(total / offsets.len().max(1) as f64)
}

/// Trains a shared regressor with one branch per angle in `c.angles`.
///
/// Each step draws one training sample and applies a single momentum SGD
/// update on the summed branch loss.
pub fn train_toy(c: &ToyConfig) -> Result<ToyRun> {
    c.validate()?;
    let proposal = c.proposal()?;
    let train = sample_offsets(c, stream::TRAIN, c.train_size);
    let branches = train
        .iter()
        .map(|&o| rotate_branches(&c.feature(o)?, &c.angles))
        .collect::<Result<Vec<_>>>()?;

    let input_dim = c.channels * c.map_size * c.map_size;
    let mut params = RegressorParams::glorot(input_dim, c.hidden_dim, &mut purpose_rng(c.seed, stream::INIT));
    let mut opt = SgdMomentum::new(c.learning_rate);
    opt.momentum = c.momentum;
    opt.weight_decay = c.weight_decay;
    let mut order = purpose_rng(c.seed, stream::ORDER);

    let tail_start = c.steps - c.steps / 10;
    let (mut tail_loss, mut tail_n) = (0.0, 0usize);
    for step in 0..c.steps {
        let i = order.random_range(0..train.len());
        let obj = branch_objective(&params, &branches[i], train[i], &proposal, &c.angles, c.beta)?;
        if step >= tail_start {
            tail_loss += obj.total;
            tail_n += 1;
        }
        opt.step(&mut params, &obj.gradient);
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("toy training diverged"));
    }

    let (held_out, rotated) = test_offsets(c);
    let summary = ToySummary {
        held_out_epe: evaluate_toy(&params, c, &held_out)?,
        rotated_epe: evaluate_toy(&params, c, &rotated)?,
        final_loss: if tail_n == 0 { 0.0 } else { tail_loss / tail_n as f64 },
    };
    Ok(ToyRun { params, summary })
}
