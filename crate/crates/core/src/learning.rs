//! Offset regression: encoding against proposals, smooth-L1, joint loss
//! composition and a two-layer perceptron offset head whose parameters are
//! shared across all rotation branches.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data_model::{BBox, OffsetVector};
use crate::error::{Error, Result};
use crate::foa::{
    fuse_offsets, inverse_rotate_offset, rotate_feature_map, rotate_offset, FeatureMap,
    FusionStrategy, RotationAngleSet,
};

pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_LEARNING_RATE: f64 = 0.01;
pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-4;

/// Box whose width and height normalize the offset encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    bbox: BBox,
}

impl Proposal {
    pub fn new(bbox: BBox) -> Self {
        Self { bbox }
    }

    pub fn from_size(w: f64, h: f64) -> Result<Self> {
        BBox::new(0.0, 0.0, w, h)
            .map(Self::new)
            .map_err(|_| Error::InvalidProposal { w, h })
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    pub fn width(&self) -> f64 {
        self.bbox.w
    }

    pub fn height(&self) -> f64 {
        self.bbox.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EncodedOffset {
    pub phi_x: f64,
    pub phi_y: f64,
}

impl EncodedOffset {
    pub const fn new(phi_x: f64, phi_y: f64) -> Self {
        Self { phi_x, phi_y }
    }
}

/// `φ = (o_x / w, o_y / h)` for the matched proposal.
pub fn encode_offset(o: OffsetVector, p: &Proposal) -> EncodedOffset {
    EncodedOffset::new(o.ox / p.width(), o.oy / p.height())
}

pub fn decode_offset(e: EncodedOffset, p: &Proposal) -> OffsetVector {
    OffsetVector::new(e.phi_x * p.width(), e.phi_y * p.height())
}

fn smooth_l1_scalar(x: f64, beta: f64) -> f64 {
    let a = x.abs();
    if a < beta {
        0.5 * x * x / beta
    } else {
        a - 0.5 * beta
    }
}

fn smooth_l1_scalar_grad(x: f64, beta: f64) -> f64 {
    if x.abs() < beta {
        x / beta
    } else if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Smooth-L1 summed over both components. `beta <= 0` degenerates to L1.
pub fn smooth_l1(pred: EncodedOffset, target: EncodedOffset, beta: f64) -> f64 {
    smooth_l1_scalar(pred.phi_x - target.phi_x, beta) + smooth_l1_scalar(pred.phi_y - target.phi_y, beta)
}

/// Gradient of [`smooth_l1`] with respect to `pred`.
pub fn smooth_l1_grad(pred: EncodedOffset, target: EncodedOffset, beta: f64) -> [f64; 2] {
    [
        smooth_l1_scalar_grad(pred.phi_x - target.phi_x, beta),
        smooth_l1_scalar_grad(pred.phi_y - target.phi_y, beta),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 2.0,
        }
    }
}

/// `L_rpn + α₁ L_rcnn + α₂ L_mask + α₃ L_offset`. The first three terms come
/// from detector heads outside this crate and are taken as given.
pub fn joint_loss(l_rpn: f64, l_rcnn: f64, l_mask: f64, l_offset: f64, w: &LossWeights) -> f64 {
    l_rpn + w.alpha1 * l_rcnn + w.alpha2 * l_mask + w.alpha3 * l_offset
}

/// `y = W₂ relu(W₁ x + b₁) + b₂` over the flattened feature map.
///
/// Also used as the gradient container, since gradients share the shape.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorParams {
    input_dim: usize,
    hidden_dim: usize,
    /// `hidden × input`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `2 × hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: [f64; 2],
}

impl RegressorParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w1: vec![0.0; input_dim * hidden_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; 2 * hidden_dim],
            b2: [0.0; 2],
        }
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn glorot<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        let l1 = libm::sqrt(6.0 / (input_dim + hidden_dim) as f64);
        for w in &mut p.w1 {
            *w = rng.random_range(-l1..=l1);
        }
        let l2 = libm::sqrt(6.0 / (hidden_dim + 2) as f64);
        for w in &mut p.w2 {
            *w = rng.random_range(-l2..=l2);
        }
        p
    }

    /// Rebuilds parameters from their layer shapes and values.
    pub fn from_parts(
        input_dim: usize,
        hidden_dim: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: [f64; 2],
    ) -> Result<Self> {
        if w1.len() != input_dim * hidden_dim || b1.len() != hidden_dim || w2.len() != 2 * hidden_dim {
            return Err(Error::InputDimension {
                expected: input_dim * hidden_dim + hidden_dim + 2 * hidden_dim,
                found: w1.len() + b1.len() + w2.len(),
            });
        }
        let p = Self {
            input_dim,
            hidden_dim,
            w1,
            b1,
            w2,
            b2,
        };
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regressor parameters"));
        }
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 2
    }

    /// All values in the fixed order w1, b1, w2, b2.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    fn add_assign(&mut self, other: &RegressorParams) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += *b;
        }
    }

    fn check_input(&self, f: &FeatureMap) -> Result<()> {
        if f.len() != self.input_dim {
            return Err(Error::InputDimension {
                expected: self.input_dim,
                found: f.len(),
            });
        }
        Ok(())
    }

    fn hidden_pre(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden_dim)
            .map(|k| {
                let row = &self.w1[k * self.input_dim..(k + 1) * self.input_dim];
                row.iter().zip(x).fold(self.b1[k], |acc, (w, v)| acc + w * v)
            })
            .collect()
    }

    fn output(&self, hidden: &[f64]) -> EncodedOffset {
        let h = self.hidden_dim;
        let dot = |r: usize| {
            self.w2[r * h..(r + 1) * h]
                .iter()
                .zip(hidden)
                .fold(self.b2[r], |acc, (w, v)| acc + w * v)
        };
        EncodedOffset::new(dot(0), dot(1))
    }

    /// Loss and parameter gradient for one input/target pair.
    fn loss_and_gradient(&self, x: &[f64], target: EncodedOffset, beta: f64) -> (f64, RegressorParams) {
        let pre = self.hidden_pre(x);
        let hidden: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let pred = self.output(&hidden);
        let loss = smooth_l1(pred, target, beta);
        let dy = smooth_l1_grad(pred, target, beta);

        let (n_in, n_h) = (self.input_dim, self.hidden_dim);
        let mut g = RegressorParams::zeros(n_in, n_h);
        g.b2 = dy;
        for r in 0..2 {
            for k in 0..n_h {
                g.w2[r * n_h + k] = dy[r] * hidden[k];
            }
        }
        for k in 0..n_h {
            if pre[k] <= 0.0 {
                continue;
            }
            let dz = dy[0] * self.w2[k] + dy[1] * self.w2[n_h + k];
            g.b1[k] = dz;
            let row = &mut g.w1[k * n_in..(k + 1) * n_in];
            for (gw, v) in row.iter_mut().zip(x) {
                *gw = dz * v;
            }
        }
        (loss, g)
    }
}

pub fn forward_regressor(params: &RegressorParams, f: &FeatureMap) -> Result<EncodedOffset> {
    params.check_input(f)?;
    let pre = params.hidden_pre(f.values());
    let hidden: Vec<f64> = pre.into_iter().map(|z| z.max(0.0)).collect();
    Ok(params.output(&hidden))
}

/// Anything that maps a (rotated) feature map to an encoded offset.
pub trait OffsetRegressor {
    fn regress(&self, f: &FeatureMap) -> Result<EncodedOffset>;
}

impl OffsetRegressor for RegressorParams {
    fn regress(&self, f: &FeatureMap) -> Result<EncodedOffset> {
        forward_regressor(self, f)
    }
}

/// The feature map rotated by every branch angle, in angle-set order.
pub fn rotate_branches(f: &FeatureMap, angles: &RotationAngleSet) -> Result<Vec<FeatureMap>> {
    angles
        .angles()
        .iter()
        .map(|&theta| {
            if theta == 0.0 {
                Ok(f.clone())
            } else {
                rotate_feature_map(f, theta)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchObjective {
    /// Sum of the branch losses.
    pub total: f64,
    pub branch_losses: Vec<f64>,
    pub gradient: RegressorParams,
}

/// Summed smooth-L1 over branches whose inputs were already rotated.
///
/// Branch `i` regresses `encode(A_θᵢ gt)` from `rotated[i]`. Gradients are
/// accumulated in branch order.
pub fn branch_objective(
    params: &RegressorParams,
    rotated: &[FeatureMap],
    gt: OffsetVector,
    proposal: &Proposal,
    angles: &RotationAngleSet,
    beta: f64,
) -> Result<BranchObjective> {
    if rotated.len() != angles.len() || angles.is_empty() {
        return Err(Error::InvalidAngleSet);
    }
    let mut gradient = RegressorParams::zeros(params.input_dim, params.hidden_dim);
    let mut branch_losses = Vec::with_capacity(angles.len());
    for (f, &theta) in rotated.iter().zip(angles.angles()) {
        params.check_input(f)?;
        let target = encode_offset(rotate_offset(gt, theta), proposal);
        let (loss, g) = params.loss_and_gradient(f.values(), target, beta);
        gradient.add_assign(&g);
        branch_losses.push(loss);
    }
    let total = branch_losses.iter().sum();
    Ok(BranchObjective {
        total,
        branch_losses,
        gradient,
    })
}

pub fn foa_objective(
    params: &RegressorParams,
    f: &FeatureMap,
    gt: OffsetVector,
    proposal: &Proposal,
    angles: &RotationAngleSet,
    beta: f64,
) -> Result<BranchObjective> {
    let rotated = rotate_branches(f, angles)?;
    branch_objective(params, &rotated, gt, proposal, angles, beta)
}

/// SGD with momentum and L2 weight decay, PyTorch update order:
/// `g += λ p; v = μ v + g; p -= lr v`, with `v` seeded by the first gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Option<RegressorParams>,
}

impl SgdMomentum {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            momentum: DEFAULT_MOMENTUM,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            velocity: None,
        }
    }

    pub fn velocity(&self) -> Option<&RegressorParams> {
        self.velocity.as_ref()
    }

    pub fn step(&mut self, params: &mut RegressorParams, gradient: &RegressorParams) {
        let mut g = gradient.clone();
        for (gv, p) in g.iter_mut().zip(params.iter()) {
            *gv += self.weight_decay * p;
        }
        let v = match self.velocity.as_mut() {
            Some(v) => {
                for (vv, gv) in v.iter_mut().zip(g.iter()) {
                    *vv = self.momentum * *vv + gv;
                }
                v
            }
            None => self.velocity.insert(g),
        };
        for (p, vv) in params.iter_mut().zip(v.iter()) {
            *p -= self.lr * vv;
        }
    }
}

impl Default for SgdMomentum {
    fn default() -> Self {
        Self::new(DEFAULT_LEARNING_RATE)
    }
}

/// One shared-parameter update over all branches; returns the branch losses
/// evaluated before the update.
pub fn foa_training_step(
    params: &mut RegressorParams,
    optimizer: &mut SgdMomentum,
    f: &FeatureMap,
    gt: OffsetVector,
    proposal: &Proposal,
    angles: &RotationAngleSet,
    beta: f64,
) -> Result<Vec<f64>> {
    let obj = foa_objective(params, f, gt, proposal, angles, beta)?;
    optimizer.step(params, &obj.gradient);
    Ok(obj.branch_losses)
}

/// Regresses every branch, decodes against the proposal, rotates each
/// prediction back by its branch angle and fuses.
pub fn foa_predict<R: OffsetRegressor + ?Sized>(
    regressor: &R,
    f: &FeatureMap,
    proposal: &Proposal,
    angles: &RotationAngleSet,
    strategy: FusionStrategy,
) -> Result<OffsetVector> {
    let rotated = rotate_branches(f, angles)?;
    predict_rotated(regressor, &rotated, proposal, angles, strategy)
}

pub fn predict_rotated<R: OffsetRegressor + ?Sized>(
    regressor: &R,
    rotated: &[FeatureMap],
    proposal: &Proposal,
    angles: &RotationAngleSet,
    strategy: FusionStrategy,
) -> Result<OffsetVector> {
    if angles.is_empty() || rotated.len() != angles.len() {
        return Err(Error::InvalidAngleSet);
    }
    let candidates = rotated
        .iter()
        .zip(angles.angles())
        .map(|(f, &theta)| {
            let e = regressor.regress(f)?;
            Ok(inverse_rotate_offset(decode_offset(e, proposal), theta))
        })
        .collect::<Result<Vec<_>>>()?;
    fuse_offsets(&candidates, strategy)
}
