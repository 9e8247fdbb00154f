//! The grasp network: a tanh trunk shared by three affine heads (position,
//! raw quaternion, success logit), with hand-written backpropagation.
//!
//! All parameters live in one flat vector; [`Layout`] maps tensors onto it in
//! the order trunk layers (weight, bias)..., position head, orientation head,
//! success head. Weights are row-major `out × in`. Every dot product sums
//! left to right over the input index.

pub mod gradcheck;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pose::{loss_gradients, normalize_quaternion, GraspPose, LossWeights, UnitQuaternion, Vec3};
use crate::sensing::{DepthImage, Wrench};
use crate::world::ObjectState;
use crate::{Error, Result};

/// Non-image features: wrench (6), object position (3), object velocity (3).
pub const EXTRA_FEATURES: usize = 12;

/// Object position features are expressed in units of this many meters.
pub const POSITION_UNIT: f64 = 0.1;
/// Object velocity features are expressed in units of this many m/s.
pub const VELOCITY_UNIT: f64 = 0.1;
/// Wrench features are expressed in units of this many N (N·m for torques).
pub const WRENCH_UNIT: f64 = 10.0;

const PARAMS_FORMAT: &str = "grasp-ssl/model-params";
const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    pub fn new(input: usize, hidden: Vec<usize>) -> Result<Self> {
        let arch = Self { input, hidden };
        arch.validate()?;
        Ok(arch)
    }

    /// Default trunk (64, 32) for a square depth image of side `resolution`.
    pub fn for_resolution(resolution: usize) -> Self {
        Self {
            input: resolution * resolution + EXTRA_FEATURES,
            hidden: vec![64, 32],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 {
            return Err(Error::Architecture("input size must be >= 1".into()));
        }
        if self.hidden.is_empty() {
            return Err(Error::Architecture("at least one hidden layer is required".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Architecture(format!(
                "hidden sizes must be >= 1, got {:?}",
                self.hidden
            )));
        }
        Ok(())
    }

    pub fn feature_width(&self) -> usize {
        *self.hidden.last().expect("validated architecture")
    }
}

/// Offset and shape of one parameter tensor inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub trunk: Vec<(Slot, Slot)>,
    pub position: (Slot, Slot),
    pub orientation: (Slot, Slot),
    pub success: (Slot, Slot),
    pub total: usize,
}

impl Layout {
    pub fn new(arch: &Architecture) -> Self {
        let mut offset = 0;
        let mut take = |rows: usize, cols: usize| {
            let slot = Slot { offset, rows, cols };
            offset += rows * cols;
            slot
        };
        let mut trunk = Vec::with_capacity(arch.hidden.len());
        let mut fan_in = arch.input;
        for &width in &arch.hidden {
            trunk.push((take(width, fan_in), take(width, 1)));
            fan_in = width;
        }
        let position = (take(3, fan_in), take(3, 1));
        let orientation = (take(4, fan_in), take(4, 1));
        let success = (take(1, fan_in), take(1, 1));
        Layout {
            trunk,
            position,
            orientation,
            success,
            total: offset,
        }
    }

    /// `(name, weight, bias)` for every layer in storage order.
    pub fn named(&self) -> Vec<(String, Slot, Slot)> {
        let mut out: Vec<_> = self
            .trunk
            .iter()
            .enumerate()
            .map(|(i, (w, b))| (format!("trunk.{i}"), *w, *b))
            .collect();
        out.push(("position_head".into(), self.position.0, self.position.1));
        out.push(("orientation_head".into(), self.orientation.0, self.orientation.1));
        out.push(("success_head".into(), self.success.0, self.success.1));
        out
    }

    /// Index ranges of the three head weight matrices (biases excluded).
    pub fn head_weight_ranges(&self) -> [std::ops::Range<usize>; 3] {
        [
            self.position.0.range(),
            self.orientation.0.range(),
            self.success.0.range(),
        ]
    }
}

/// All trainable parameters θ, including the success head `W_S`, `b_S`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    layout: Layout,
    values: Vec<f64>,
}

/// Gradient with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

impl ModelParams {
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch);
        Ok(Self {
            values: vec![0.0; layout.total],
            arch: arch.clone(),
            layout,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `θ ← θ − η g`. A zero step leaves θ bit-identical.
    pub fn step(&mut self, grad: &Gradient, eta: f64) {
        if eta == 0.0 {
            return;
        }
        for (v, g) in self.values.iter_mut().zip(&grad.values) {
            *v -= eta * g;
        }
    }

    pub fn to_document(&self) -> ParamsDocument {
        ParamsDocument {
            format: PARAMS_FORMAT.into(),
            version: PARAMS_VERSION,
            architecture: self.arch.clone(),
            tensors: self
                .layout
                .named()
                .into_iter()
                .flat_map(|(name, w, b)| [(format!("{name}.weight"), w), (format!("{name}.bias"), b)])
                .map(|(name, slot)| Tensor {
                    name,
                    shape: [slot.rows, slot.cols],
                    values: self.values[slot.range()].to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &ParamsDocument) -> Result<Self> {
        if doc.format != PARAMS_FORMAT || doc.version != PARAMS_VERSION {
            return Err(Error::Config(format!(
                "unsupported params document {} v{}",
                doc.format, doc.version
            )));
        }
        let mut params = ModelParams::zeros(&doc.architecture)?;
        let expected = params.to_document().tensors;
        if expected.len() != doc.tensors.len() {
            return Err(Error::Config("params document has the wrong tensor count".into()));
        }
        let mut offset = 0;
        for (want, got) in expected.iter().zip(&doc.tensors) {
            if want.name != got.name || want.shape != got.shape || got.values.len() != want.values.len() {
                return Err(Error::Config(format!(
                    "params tensor {} does not match architecture",
                    got.name
                )));
            }
            if got.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!(
                    "params tensor {} has non-finite values",
                    got.name
                )));
            }
            params.values[offset..offset + got.values.len()].copy_from_slice(&got.values);
            offset += got.values.len();
        }
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// Versioned on-disk form of [`ModelParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDocument {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub tensors: Vec<Tensor>,
}

/// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
pub fn init_params<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(arch)?;
    for (_, w, _) in params.layout.named() {
        let bound = 1.0 / (w.cols as f64).sqrt();
        for v in &mut params.values[w.range()] {
            *v = rng.random_range(-bound..=bound);
        }
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Depth block scaled by `1/far_value`, then wrench, object position and
/// object velocity in the fixed units above.
pub fn featurize(depth: &DepthImage, wrench: &Wrench, object: &ObjectState) -> FeatureVector {
    let mut v = Vec::with_capacity(depth.depths.len() + EXTRA_FEATURES);
    v.extend(depth.depths.iter().map(|d| d / depth.far_value));
    v.extend(wrench.to_array().iter().map(|c| c / WRENCH_UNIT));
    v.extend(object.position.to_array().iter().map(|c| c / POSITION_UNIT));
    v.extend(object.linear_velocity.to_array().iter().map(|c| c / VELOCITY_UNIT));
    FeatureVector(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorOutput {
    pub position: Vec3,
    pub raw_orientation: [f64; 4],
    pub orientation: UnitQuaternion,
    /// The raw quaternion was degenerate and the identity was substituted.
    pub orientation_fallback: bool,
    /// Last trunk layer `h`, shared by all heads.
    pub hidden: Vec<f64>,
    pub success_logit: f64,
    pub success_prob: f64,
}

impl PredictorOutput {
    pub fn pose(&self) -> GraspPose {
        GraspPose::new(self.position, self.orientation)
    }
}

/// `σ(z)`, kept strictly inside (0, 1).
pub fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

fn affine(values: &[f64], w: Slot, b: Slot, x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let weights = &values[w.range()];
    let bias = &values[b.range()];
    for r in 0..w.rows {
        let row = &weights[r * w.cols..(r + 1) * w.cols];
        let mut acc = bias[r];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        out.push(acc);
    }
}

/// Forward pass keeping every trunk activation for backpropagation.
struct Trace {
    activations: Vec<Vec<f64>>,
    output: PredictorOutput,
}

fn trace(params: &ModelParams, input: &FeatureVector) -> Result<Trace> {
    if input.len() != params.arch.input {
        return Err(Error::Shape {
            expected: params.arch.input,
            actual: input.len(),
        });
    }
    let v = &params.values;
    let mut activations = Vec::with_capacity(params.layout.trunk.len() + 1);
    activations.push(input.0.clone());
    for &(w, b) in &params.layout.trunk {
        let mut z = Vec::with_capacity(w.rows);
        affine(v, w, b, activations.last().expect("input pushed"), &mut z);
        z.iter_mut().for_each(|x| *x = x.tanh());
        activations.push(z);
    }
    let h = activations.last().expect("trunk has layers").clone();

    let mut p = Vec::with_capacity(3);
    affine(v, params.layout.position.0, params.layout.position.1, &h, &mut p);
    let mut q = Vec::with_capacity(4);
    affine(v, params.layout.orientation.0, params.layout.orientation.1, &h, &mut q);
    let mut s = Vec::with_capacity(1);
    affine(v, params.layout.success.0, params.layout.success.1, &h, &mut s);

    let raw_orientation = [q[0], q[1], q[2], q[3]];
    let normalized = normalize_quaternion(raw_orientation);
    let output = PredictorOutput {
        position: Vec3::new(p[0], p[1], p[2]),
        raw_orientation,
        orientation: normalized.quaternion,
        orientation_fallback: normalized.fallback,
        hidden: h,
        success_logit: s[0],
        success_prob: sigmoid(s[0]),
    };
    Ok(Trace { activations, output })
}

pub fn forward(params: &ModelParams, input: &FeatureVector) -> Result<PredictorOutput> {
    trace(params, input).map(|t| t.output)
}

/// Upstream derivatives at the three head outputs.
#[derive(Debug, Clone, Copy, Default)]
struct HeadUpstream {
    position: [f64; 3],
    raw_orientation: [f64; 4],
    logit: f64,
}

fn accumulate_head(values: &[f64], grad: &mut [f64], w: Slot, b: Slot, h: &[f64], up: &[f64], dh: &mut [f64]) {
    for r in 0..w.rows {
        if up[r] == 0.0 {
            continue;
        }
        grad[b.offset + r] += up[r];
        let row = w.offset + r * w.cols;
        for j in 0..w.cols {
            grad[row + j] += up[r] * h[j];
            dh[j] += values[row + j] * up[r];
        }
    }
}

fn backprop(params: &ModelParams, trace: &Trace, up: HeadUpstream) -> Gradient {
    let v = &params.values;
    let layout = &params.layout;
    let mut grad = Gradient::zeros(v.len());
    let h = trace.activations.last().expect("trunk output");
    let mut dh = vec![0.0; h.len()];

    accumulate_head(
        v,
        &mut grad.values,
        layout.position.0,
        layout.position.1,
        h,
        &up.position,
        &mut dh,
    );
    accumulate_head(
        v,
        &mut grad.values,
        layout.orientation.0,
        layout.orientation.1,
        h,
        &up.raw_orientation,
        &mut dh,
    );
    accumulate_head(
        v,
        &mut grad.values,
        layout.success.0,
        layout.success.1,
        h,
        &[up.logit],
        &mut dh,
    );

    for (l, &(w, b)) in layout.trunk.iter().enumerate().rev() {
        let out = &trace.activations[l + 1];
        let inp = &trace.activations[l];
        let delta: Vec<f64> = dh.iter().zip(out).map(|(d, a)| d * (1.0 - a * a)).collect();
        let mut d_in = vec![0.0; if l > 0 { inp.len() } else { 0 }];
        for r in 0..w.rows {
            let d = delta[r];
            if d == 0.0 {
                continue;
            }
            grad.values[b.offset + r] += d;
            let row = w.offset + r * w.cols;
            for j in 0..w.cols {
                grad.values[row + j] += d * inp[j];
            }
            if l > 0 {
                for j in 0..w.cols {
                    d_in[j] += v[row + j] * d;
                }
            }
        }
        dh = d_in;
    }
    grad
}

/// Gradient of the pose loss `‖p−p*‖² + λ(1−|⟨q,q*⟩|)` through both heads,
/// the quaternion normalization and the trunk.
pub fn grad_pose_loss(
    params: &ModelParams,
    input: &FeatureVector,
    target: &GraspPose,
    weights: LossWeights,
) -> Result<Gradient> {
    let t = trace(params, input)?;
    let g = loss_gradients(t.output.position, t.output.raw_orientation, target, weights);
    let up = HeadUpstream {
        position: g.position.to_array(),
        raw_orientation: g.raw_orientation,
        logit: 0.0,
    };
    Ok(backprop(params, &t, up))
}

/// Gradient of `(S − feedback)²` through the sigmoid, success head and trunk.
pub fn grad_success_objective(params: &ModelParams, input: &FeatureVector, feedback: f64) -> Result<Gradient> {
    let t = trace(params, input)?;
    let s = t.output.success_prob;
    let up = HeadUpstream {
        logit: 2.0 * (s - feedback) * s * (1.0 - s),
        ..HeadUpstream::default()
    };
    Ok(backprop(params, &t, up))
}

/// Pose loss of the current prediction against `target`.
pub fn pose_objective(
    params: &ModelParams,
    input: &FeatureVector,
    target: &GraspPose,
    weights: LossWeights,
) -> Result<f64> {
    forward(params, input).map(|o| crate::pose::total_loss(&o.pose(), target, weights))
}

/// `(S − feedback)²` for the current parameters.
pub fn success_objective(params: &ModelParams, input: &FeatureVector, feedback: f64) -> Result<f64> {
    forward(params, input).map(|o| (o.success_prob - feedback).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sensing::DepthImage;

    fn small() -> Architecture {
        Architecture::new(6, vec![5, 4]).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let arch = Architecture::new(20, vec![16]).unwrap();
        let a = init_params(&arch, &mut rng::stream(0, "init", 0)).unwrap();
        let b = init_params(&arch, &mut rng::stream(0, "init", 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let arch = Architecture::for_resolution(8);
        let p = init_params(&arch, &mut rng::stream(1, "init", 0)).unwrap();
        for (_, w, b) in p.layout().named() {
            let bound = 1.0 / (w.cols as f64).sqrt();
            assert!(p.values()[w.range()].iter().all(|v| v.abs() <= bound));
            assert!(p.values()[b.range()].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn invalid_architectures() {
        assert!(Architecture::new(0, vec![4]).is_err());
        assert!(Architecture::new(4, vec![]).is_err());
        assert!(Architecture::new(4, vec![3, 0]).is_err());
    }

    #[test]
    fn featurize_layout() {
        let depth = DepthImage::filled(32, 32, 1.5);
        let obj = ObjectState::at_rest(Vec3::ZERO, crate::world::Shape::Sphere { radius: 0.05 });
        let f = featurize(&depth, &Wrench::default(), &obj);
        assert_eq!(f.len(), 1036);
        assert!(f.0[..1024].iter().all(|v| *v == 1.0));
        assert!(f.0[1024..].iter().all(|v| *v == 0.0));
        assert_eq!(f, featurize(&depth, &Wrench::default(), &obj));
    }

    #[test]
    fn zero_params_give_half_and_identity() {
        let p = ModelParams::zeros(&small()).unwrap();
        let out = forward(&p, &FeatureVector(vec![0.3; 6])).unwrap();
        assert_eq!(out.success_prob, 0.5);
        assert_eq!(out.orientation, UnitQuaternion::IDENTITY);
        assert!(out.orientation_fallback);
    }

    #[test]
    fn shape_mismatch_errors() {
        let p = ModelParams::zeros(&small()).unwrap();
        assert!(matches!(
            forward(&p, &FeatureVector(vec![0.0; 5])),
            Err(Error::Shape { expected: 6, actual: 5 })
        ));
    }

    #[test]
    fn outputs_finite_and_bounded() {
        let p = init_params(&small(), &mut rng::stream(2, "init", 0)).unwrap();
        for x in [1e6, -1e6, 0.0, 3.0] {
            let out = forward(&p, &FeatureVector(vec![x; 6])).unwrap();
            assert!(out.position.is_finite());
            assert!(out.success_prob > 0.0 && out.success_prob < 1.0);
            assert!((out.orientation.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn success_gradient_zero_at_feedback() {
        // Drive the logit to a value whose sigmoid is exactly 0.5.
        let p = ModelParams::zeros(&small()).unwrap();
        let g = grad_success_objective(&p, &FeatureVector(vec![0.1; 6]), 0.5).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn success_bias_gradient_sign() {
        let p = init_params(&small(), &mut rng::stream(3, "init", 0)).unwrap();
        let x = FeatureVector(vec![0.2, -0.1, 0.4, 0.0, 0.3, 0.1]);
        let s = forward(&p, &x).unwrap().success_prob;
        let bias = p.layout().success.1.offset;
        assert!(grad_success_objective(&p, &x, 0.0).unwrap().values[bias] > 0.0);
        assert!(s < 1.0);
        assert!(grad_success_objective(&p, &x, 1.0).unwrap().values[bias] < 0.0);
    }

    #[test]
    fn pose_gradient_position_head_zero_at_own_prediction() {
        let p = init_params(&small(), &mut rng::stream(4, "init", 0)).unwrap();
        let x = FeatureVector(vec![0.2, -0.1, 0.4, 0.0, 0.3, 0.1]);
        let target = forward(&p, &x).unwrap().pose();
        let g = grad_pose_loss(&p, &x, &target, LossWeights::default()).unwrap();
        let (w, b) = p.layout().position;
        assert!(g.values[w.range()]
            .iter()
            .chain(&g.values[b.range()])
            .all(|v| *v == 0.0));
    }

    #[test]
    fn lambda_zero_orientation_head_untouched() {
        let p = init_params(&small(), &mut rng::stream(5, "init", 0)).unwrap();
        let x = FeatureVector(vec![0.2, -0.1, 0.4, 0.0, 0.3, 0.1]);
        let target = GraspPose::new(Vec3::new(0.3, 0.1, -0.2), UnitQuaternion::new(0.2, 0.9, 0.1, 0.0));
        let g = grad_pose_loss(&p, &x, &target, LossWeights { lambda: 0.0 }).unwrap();
        let (w, b) = p.layout().orientation;
        assert!(g.values[w.range()]
            .iter()
            .chain(&g.values[b.range()])
            .all(|v| *v == 0.0));
        assert!(!g.is_zero());
    }

    #[test]
    fn params_document_roundtrip() {
        let p = init_params(&small(), &mut rng::stream(6, "init", 0)).unwrap();
        let json = serde_json::to_string(&p.to_document()).unwrap();
        let doc: ParamsDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(ModelParams::from_document(&doc).unwrap(), p);

        let mut bad = doc.clone();
        bad.tensors[0].values.pop();
        assert!(ModelParams::from_document(&bad).is_err());
        let mut bad = doc;
        bad.version = 9;
        assert!(ModelParams::from_document(&bad).is_err());
    }

    #[test]
    fn zero_step_is_identity() {
        let mut p = init_params(&small(), &mut rng::stream(7, "init", 0)).unwrap();
        let before = p.clone();
        let g = Gradient {
            values: vec![f64::INFINITY; p.len()],
        };
        p.step(&g, 0.0);
        assert_eq!(p, before);
    }
}
