//! Per-user-type specification model.
//!
//! A convolutional encoder compresses the scene image to a 15-d posterior,
//! a transposed-convolution decoder reconstructs the image from a sample,
//! and a three-layer classifier maps the scene code together with the
//! 2-d trajectory code to a validity probability. Training minimizes
//!
//! ```text
//! α·recon(I) + β·KL(q(z_I|I) ‖ N(0, I)) + γ·BCE(v, C(z_I, z_θ))
//! ```
//!
//! averaged over demonstrations, where `recon` is the binary cross-entropy
//! of the decoded image summed over pixels and channels, and the KL term is
//! summed over latent dimensions.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Adam, Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::geometry::{fit_bezier, BezierParam, Point2};
use crate::scenegen::{mix_seed, rng_for, SceneImage, UserType};

pub const SCENE_DIM: usize = 15;
pub const TRAJ_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, gamma: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    /// All three loss terms.
    Full,
    /// Auto-encoder without the KL term.
    Ae,
    /// Classification term only.
    Classifier,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Full, Ablation::Ae, Ablation::Classifier];

    pub fn apply(&self, full: LossWeights) -> LossWeights {
        match self {
            Ablation::Full => full,
            Ablation::Ae => LossWeights { beta: 0.0, ..full },
            Ablation::Classifier => LossWeights { alpha: 0.0, beta: 0.0, ..full },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::Ae => "ae",
            Ablation::Classifier => "classifier",
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Ablation::Full),
            "ae" => Ok(Ablation::Ae),
            "classifier" => Ok(Ablation::Classifier),
            other => Err(Error::InvalidInput(format!("unknown ablation `{other}`"))),
        }
    }
}

/// Network shape. The trajectory code enters the classifier through a
/// fixed affine map `(z_θ - center) / scale` so pixel-scale codes arrive
/// roughly in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub image_size: usize,
    pub channels: [usize; 3],
    pub hidden: usize,
    pub traj_center: [f64; 2],
    pub traj_scale: [f64; 2],
}

impl Default for Architecture {
    fn default() -> Self {
        Self { image_size: 100, channels: [16, 8, 4], hidden: 64, traj_center: [50.0, 50.0], traj_scale: [75.0, 75.0] }
    }
}

impl Architecture {
    /// Spatial sizes after each stride-2 convolution.
    pub fn spatial(&self) -> [usize; 4] {
        let down = |s: usize| (s + 2 - 3) / 2 + 1;
        let s1 = down(self.image_size);
        let s2 = down(s1);
        let s3 = down(s2);
        [self.image_size, s1, s2, s3]
    }

    pub fn flat_dim(&self) -> usize {
        let s3 = self.spatial()[3];
        self.channels[2] * s3 * s3
    }

    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let [c1, c2, c3] = self.channels;
        let flat = self.flat_dim();
        let h = self.hidden;
        vec![
            ("enc.conv1.w", vec![c1, 3, 3, 3]),
            ("enc.conv1.b", vec![c1]),
            ("enc.conv2.w", vec![c2, c1, 3, 3]),
            ("enc.conv2.b", vec![c2]),
            ("enc.conv3.w", vec![c3, c2, 3, 3]),
            ("enc.conv3.b", vec![c3]),
            ("enc.mu.w", vec![SCENE_DIM, flat]),
            ("enc.mu.b", vec![SCENE_DIM]),
            ("enc.logvar.w", vec![SCENE_DIM, flat]),
            ("enc.logvar.b", vec![SCENE_DIM]),
            ("dec.fc.w", vec![flat, SCENE_DIM]),
            ("dec.fc.b", vec![flat]),
            ("dec.deconv1.w", vec![c3, c2, 3, 3]),
            ("dec.deconv1.b", vec![c2]),
            ("dec.deconv2.w", vec![c2, c1, 3, 3]),
            ("dec.deconv2.b", vec![c1]),
            ("dec.deconv3.w", vec![c1, 3, 3, 3]),
            ("dec.deconv3.b", vec![3]),
            ("cls.fc1.w", vec![h, SCENE_DIM + TRAJ_DIM]),
            ("cls.fc1.b", vec![h]),
            ("cls.fc2.w", vec![h, h]),
            ("cls.fc2.b", vec![h]),
            ("cls.fc3.w", vec![1, h]),
            ("cls.fc3.b", vec![1]),
        ]
    }
}

mod idx {
    pub const ENC_CONV: [usize; 3] = [0, 2, 4];
    pub const ENC_MU: usize = 6;
    pub const ENC_LOGVAR: usize = 8;
    pub const DEC_FC: usize = 10;
    pub const DEC_DECONV: [usize; 3] = [12, 14, 16];
    pub const CLS: [usize; 3] = [18, 20, 22];
    pub const CLASSIFIER_START: usize = 18;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_bce: f64,
    pub traj_per_scene: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecModel {
    pub user_type: UserType,
    pub arch: Architecture,
    pub weights: LossWeights,
    pub params: Vec<Tensor>,
    pub meta: TrainMeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mu: [f64; SCENE_DIM],
    pub logvar: [f64; SCENE_DIM],
}

impl SpecModel {
    /// Freshly initialized parameters (He-uniform weights, zero biases).
    pub fn init(user_type: UserType, arch: Architecture, weights: LossWeights, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[0x1417]);
        let params = arch
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                if name.ends_with(".b") {
                    return Tensor::zeros(&shape);
                }
                // fan-in: input channels × kernel area, or input width
                let fan_in = if shape.len() == 4 {
                    if name.starts_with("dec.deconv") {
                        shape[0] * 9 / 4
                    } else {
                        shape[1] * 9
                    }
                } else {
                    shape[1]
                };
                let gain = if name == "enc.logvar.w" || name == "cls.fc3.w" { 0.1 } else { 1.0 };
                let a = gain * (6.0 / fan_in.max(1) as f64).sqrt();
                let n: usize = shape.iter().product();
                Tensor { shape, data: (0..n).map(|_| rng.gen_range(-a..a)).collect() }
            })
            .collect();
        Self { user_type, arch, weights, params, meta: TrainMeta { seed, ..Default::default() } }
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        self.arch.param_shapes().into_iter().map(|(n, _)| n).collect()
    }

    fn check_image(&self, img: &SceneImage) -> Result<()> {
        if img.size != self.arch.image_size || img.data.len() != 3 * img.size * img.size {
            return Err(Error::Shape { op: "encode", left: vec![3, img.size, img.size], right: vec![3, self.arch.image_size, self.arch.image_size] });
        }
        Ok(())
    }

    pub fn encode(&self, img: &SceneImage) -> Result<Posterior> {
        self.check_image(img)?;
        let mut g = Graph::new();
        let p = ParamNodes::register(&mut g, &self.params, 0);
        let s = self.arch.image_size;
        let x = g.leaf(Tensor { shape: vec![1, 3, s, s], data: img.data.clone() });
        let (mu, lv) = encoder(&mut g, &p, x, &self.arch)?;
        let mut out = Posterior { mu: [0.0; SCENE_DIM], logvar: [0.0; SCENE_DIM] };
        out.mu.copy_from_slice(&g.value(mu).data);
        out.logvar.copy_from_slice(&g.value(lv).data);
        if !(out.mu.iter().chain(&out.logvar).all(|v| v.is_finite())) {
            return Err(Error::NonFinite("encoder output".into()));
        }
        Ok(out)
    }

    pub fn decode(&self, z: &[f64; SCENE_DIM]) -> Result<SceneImage> {
        let mut g = Graph::new();
        let p = ParamNodes::register(&mut g, &self.params, 0);
        let zn = g.leaf(Tensor { shape: vec![1, SCENE_DIM], data: z.to_vec() });
        let logits = decoder(&mut g, &p, zn, &self.arch)?;
        let probs = g.sigmoid(logits)?;
        Ok(SceneImage { size: self.arch.image_size, data: g.value(probs).data.clone() })
    }

    pub fn classify(&self, z_scene: &[f64; SCENE_DIM], z_traj: &BezierParam) -> Result<f64> {
        Ok(self.classify_batch(z_scene, &[*z_traj])?[0])
    }

    /// Validity probabilities for many trajectory codes under one scene code.
    pub fn classify_batch(&self, z_scene: &[f64; SCENE_DIM], z_traj: &[BezierParam]) -> Result<Vec<f64>> {
        let n = z_traj.len();
        let mut zi = Vec::with_capacity(n * SCENE_DIM);
        let mut zt = Vec::with_capacity(n * TRAJ_DIM);
        for z in z_traj {
            zi.extend_from_slice(z_scene);
            zt.extend_from_slice(&z.as_array());
        }
        // same graph ops as training, so predictions match bit for bit
        let mut g = Graph::new();
        let p = ParamNodes::register(&mut g, &self.params, idx::CLASSIFIER_START);
        let a = g.leaf(Tensor { shape: vec![n, SCENE_DIM], data: zi });
        let b = g.leaf(Tensor { shape: vec![n, TRAJ_DIM], data: zt });
        let logit = classifier(&mut g, &p, a, b, &self.arch)?;
        Ok(g.value(logit).data.iter().map(|&l| sigmoid(l)).collect())
    }

    /// Probability and its gradient with respect to the trajectory code.
    pub fn classify_with_grad(&self, z_scene: &[f64; SCENE_DIM], z_traj: &BezierParam, log_objective: bool) -> Result<(f64, [f64; 2])> {
        let mut g = Graph::new();
        let p = ParamNodes::register(&mut g, &self.params, idx::CLASSIFIER_START);
        let a = g.leaf(Tensor { shape: vec![1, SCENE_DIM], data: z_scene.to_vec() });
        let b = g.leaf(Tensor { shape: vec![1, TRAJ_DIM], data: z_traj.as_array().to_vec() });
        let logit = classifier(&mut g, &p, a, b, &self.arch)?;
        let prob = g.sigmoid(logit)?;
        let v = g.value(prob).item();
        let objective = if log_objective {
            // log σ(l) = -BCE(l, 1)
            let nll = g.bce_with_logits_rows(logit, &Tensor::full(&[1, 1], 1.0))?;
            let s = g.sum(nll)?;
            g.scale(s, -1.0)?
        } else {
            g.sum(prob)?
        };
        let grads = g.backward(objective)?;
        let gz = grads.get(b);
        Ok((v, [gz.data[0], gz.data[1]]))
    }

    /// Dense `v̂` map over a `resolution × resolution` grid of control points
    /// spanning `[lo, hi]`, laid out as [`control_grid`].
    pub fn sample_validity_map(&self, img: &SceneImage, lo: Point2, hi: Point2, resolution: usize) -> Result<ValidityMap> {
        let post = self.encode(img)?;
        let grid = control_grid(lo, hi, resolution);
        let values = self.classify_batch(&post.mu, &grid)?;
        Ok(ValidityMap { resolution, lo, hi, values })
    }
}

/// Cell-centered grid of control points over `[lo, hi]`, row-major in `y`.
pub fn control_grid(lo: Point2, hi: Point2, resolution: usize) -> Vec<BezierParam> {
    let mut out = Vec::with_capacity(resolution * resolution);
    let dx = (hi.x - lo.x) / resolution as f64;
    let dy = (hi.y - lo.y) / resolution as f64;
    for i in 0..resolution {
        for j in 0..resolution {
            out.push(BezierParam::new(lo.x + (j as f64 + 0.5) * dx, lo.y + (i as f64 + 0.5) * dy));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMap {
    pub resolution: usize,
    pub lo: Point2,
    pub hi: Point2,
    pub values: Vec<f64>,
}

impl ValidityMap {
    pub fn points(&self) -> Vec<BezierParam> {
        control_grid(self.lo, self.hi, self.resolution)
    }
}

struct ParamNodes {
    ids: Vec<Option<NodeId>>,
}

impl ParamNodes {
    fn register(g: &mut Graph, params: &[Tensor], from: usize) -> Self {
        let ids = params.iter().enumerate().map(|(i, t)| (i >= from).then(|| g.leaf(t.clone()))).collect();
        Self { ids }
    }

    fn get(&self, i: usize) -> NodeId {
        self.ids[i].expect("parameter registered")
    }

    fn pair(&self, i: usize) -> (NodeId, NodeId) {
        (self.get(i), self.get(i + 1))
    }
}

fn encoder(g: &mut Graph, p: &ParamNodes, x: NodeId, arch: &Architecture) -> Result<(NodeId, NodeId)> {
    let mut h = x;
    for &i in &idx::ENC_CONV {
        let (w, b) = p.pair(i);
        let c = g.conv2d(h, w, b, 2, 1)?;
        h = g.relu(c)?;
    }
    let n = g.value(h).rows();
    let flat = g.reshape(h, &[n, arch.flat_dim()])?;
    let (w, b) = p.pair(idx::ENC_MU);
    let mu = g.linear(flat, w, b)?;
    let (w, b) = p.pair(idx::ENC_LOGVAR);
    let lv = g.linear(flat, w, b)?;
    Ok((mu, lv))
}

fn decoder(g: &mut Graph, p: &ParamNodes, z: NodeId, arch: &Architecture) -> Result<NodeId> {
    let n = g.value(z).rows();
    let sp = arch.spatial();
    let (w, b) = p.pair(idx::DEC_FC);
    let h = g.linear(z, w, b)?;
    let h = g.relu(h)?;
    let mut h = g.reshape(h, &[n, arch.channels[2], sp[3], sp[3]])?;
    for (k, &i) in idx::DEC_DECONV.iter().enumerate() {
        let (w, b) = p.pair(i);
        let target = sp[2 - k];
        h = g.conv_transpose2d(h, w, b, 2, 1, (target, target))?;
        if k < 2 {
            h = g.relu(h)?;
        }
    }
    Ok(h)
}

fn classifier(g: &mut Graph, p: &ParamNodes, z_scene: NodeId, z_traj: NodeId, arch: &Architecture) -> Result<NodeId> {
    let scale = [1.0 / arch.traj_scale[0], 1.0 / arch.traj_scale[1]];
    let shift = [-arch.traj_center[0] * scale[0], -arch.traj_center[1] * scale[1]];
    let zt = g.column_affine(z_traj, &scale, &shift)?;
    let mut h = g.concat(&[z_scene, zt])?;
    for (k, &i) in idx::CLS.iter().enumerate() {
        let (w, b) = p.pair(i);
        h = g.linear(h, w, b)?;
        if k < 2 {
            h = g.relu(h)?;
        }
    }
    Ok(h)
}

/// One labeled trajectory code tied to a scene of a [`Batch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    pub scene: usize,
    pub z_traj: BezierParam,
    pub valid: bool,
}

/// Scenes (as images) plus the examples that reference them.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Vec<SceneImage>,
    pub examples: Vec<Example>,
}

impl Batch {
    fn image_tensor(&self, size: usize) -> Tensor {
        let mut data = Vec::with_capacity(self.images.len() * 3 * size * size);
        for im in &self.images {
            data.extend_from_slice(&im.data);
        }
        Tensor { shape: vec![self.images.len(), 3, size, size], data }
    }

    /// Fraction of examples that reference each scene.
    pub fn scene_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.images.len()];
        let d = self.examples.len() as f64;
        for e in &self.examples {
            w[e.scene] += 1.0 / d;
        }
        w
    }
}

/// Scalar loss terms from one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub recon: f64,
    pub kl: f64,
    pub bce: f64,
    pub total: f64,
}

/// Scene noise for a batch; `None` uses the posterior mean.
pub type SceneNoise<'a> = Option<&'a [f64]>;

struct LossGraph {
    graph: Graph,
    params: ParamNodes,
    total: NodeId,
    terms: LossTerms,
}

fn build_loss(model: &SpecModel, batch: &Batch, noise: SceneNoise) -> Result<LossGraph> {
    if batch.examples.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let arch = &model.arch;
    let w = model.weights;
    let s = batch.images.len();
    for im in &batch.images {
        model.check_image(im)?;
    }
    let mut g = Graph::new();
    let p = ParamNodes::register(&mut g, &model.params, 0);
    let x_t = batch.image_tensor(arch.image_size);
    let x = g.leaf(x_t.clone());
    let (mu, lv) = encoder(&mut g, &p, x, arch)?;
    let z = match noise {
        Some(eps) => g.gaussian_sample(mu, lv, eps)?,
        None => mu,
    };
    let sw = batch.scene_weights();
    let mut total: Option<NodeId> = None;
    let mut terms = LossTerms::default();
    fn push(g: &mut Graph, total: &mut Option<NodeId>, term: NodeId, coef: f64) -> Result<()> {
        let scaled = g.scale(term, coef)?;
        *total = Some(match *total {
            Some(t) => g.add(t, scaled)?,
            None => scaled,
        });
        Ok(())
    }
    if w.alpha != 0.0 {
        let logits = decoder(&mut g, &p, z, arch)?;
        let rows = g.bce_with_logits_rows(logits, &x_t)?;
        let r = g.weighted_sum(rows, &sw)?;
        terms.recon = g.value(r).item();
        push(&mut g, &mut total, r, w.alpha)?;
    }
    if w.beta != 0.0 {
        let rows = g.kl_divergence_to_standard_normal(mu, lv)?;
        let k = g.weighted_sum(rows, &sw)?;
        terms.kl = g.value(k).item();
        push(&mut g, &mut total, k, w.beta)?;
    }
    if w.gamma != 0.0 || total.is_none() {
        let index: Vec<usize> = batch.examples.iter().map(|e| e.scene).collect();
        if let Some(&bad) = index.iter().find(|&&i| i >= s) {
            return Err(Error::InvalidInput(format!("example references scene {bad} of {s}")));
        }
        let zi = g.gather_rows(z, &index)?;
        let zt_data: Vec<f64> = batch.examples.iter().flat_map(|e| e.z_traj.as_array()).collect();
        let zt = g.leaf(Tensor { shape: vec![batch.examples.len(), TRAJ_DIM], data: zt_data });
        let logit = classifier(&mut g, &p, zi, zt, arch)?;
        let target = Tensor {
            shape: vec![batch.examples.len(), 1],
            data: batch.examples.iter().map(|e| if e.valid { 1.0 } else { 0.0 }).collect(),
        };
        let rows = g.bce_with_logits_rows(logit, &target)?;
        let n = batch.examples.len() as f64;
        let c = g.weighted_sum(rows, &vec![1.0 / n; batch.examples.len()])?;
        terms.bce = g.value(c).item();
        push(&mut g, &mut total, c, w.gamma)?;
    }
    let total = total.expect("at least one term");
    terms.total = g.value(total).item();
    if !terms.total.is_finite() {
        return Err(Error::NonFinite(format!("loss terms {terms:?}")));
    }
    Ok(LossGraph { graph: g, params: p, total, terms })
}

/// Forward loss value for a batch.
pub fn loss(model: &SpecModel, batch: &Batch, noise: SceneNoise) -> Result<LossTerms> {
    Ok(build_loss(model, batch, noise)?.terms)
}

/// Loss and its gradient with respect to every parameter.
pub fn loss_and_grad(model: &SpecModel, batch: &Batch, noise: SceneNoise) -> Result<(LossTerms, Vec<Tensor>)> {
    let lg = build_loss(model, batch, noise)?;
    let mut grads = lg.graph.backward(lg.total)?;
    let g = lg.params.ids.iter().map(|id| grads.take(id.expect("all parameters registered"))).collect();
    Ok((lg.terms, g))
}

/// A scene's image plus its labeled trajectory codes.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneExamples {
    pub image: SceneImage,
    pub examples: Vec<(BezierParam, bool)>,
}

impl SceneExamples {
    pub fn from_demos<'a>(image: SceneImage, demos: impl IntoIterator<Item = &'a crate::scenegen::Demonstration>) -> Result<Self> {
        let examples = demos.into_iter().map(|d| Ok((fit_bezier(&d.trajectory)?, d.valid))).collect::<Result<_>>()?;
        Ok(Self { image, examples })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_scenes: usize,
    pub learning_rate: f64,
    pub val_fraction: f64,
    /// Show each training scene under a random symmetry of the endpoint pair every epoch.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { max_epochs: 250, patience: 80, batch_scenes: 2, learning_rate: 5e-3, val_fraction: 0.2, augment: true }
    }
}

/// The four maps that fix the endpoint pair `{a, b}` of a square table whose
/// center is `c`: identity, swap x and y, point reflection through `c`, and
/// both. Labels are preserved because the oracle only measures distances.
pub fn symmetric_view(s: &SceneExamples, which: u8, c: [f64; 2]) -> SceneExamples {
    let n = s.image.size;
    let plane = n * n;
    let swap = which & 1 != 0;
    let flip = which & 2 != 0;
    let mut data = vec![0.0; s.image.data.len()];
    for row in 0..n {
        for col in 0..n {
            // rows run against y, so swapping table axes anti-transposes the image
            let (r, k) = if swap { (n - 1 - col, n - 1 - row) } else { (row, col) };
            let (r, k) = if flip { (n - 1 - r, n - 1 - k) } else { (r, k) };
            for ch in 0..3 {
                data[ch * plane + row * n + col] = s.image.data[ch * plane + r * n + k];
            }
        }
    }
    let examples = s
        .examples
        .iter()
        .map(|&(z, v)| {
            let (mut x, mut y) = (z.control.x, z.control.y);
            if swap {
                std::mem::swap(&mut x, &mut y);
            }
            if flip {
                (x, y) = (2.0 * c[0] - x, 2.0 * c[1] - y);
            }
            (BezierParam::new(x, y), v)
        })
        .collect();
    SceneExamples { image: SceneImage { size: n, data }, examples }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossTerms,
    pub val: LossTerms,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: SpecModel,
    pub curve: Vec<EpochRecord>,
}

/// Pick `k` examples per scene using `seed`.
pub fn subsample(scenes: &[SceneExamples], k: usize, seed: u64) -> Vec<SceneExamples> {
    scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = rng_for(seed, &[0x5B5, i as u64]);
            let mut ex = s.examples.clone();
            ex.shuffle(&mut rng);
            ex.truncate(k.max(1));
            SceneExamples { image: s.image.clone(), examples: ex }
        })
        .collect()
}

fn make_batch(scenes: &[&SceneExamples]) -> Batch {
    let mut b = Batch { images: Vec::with_capacity(scenes.len()), examples: Vec::new() };
    for (i, s) in scenes.iter().enumerate() {
        b.images.push(s.image.clone());
        b.examples.extend(s.examples.iter().map(|&(z, v)| Example { scene: i, z_traj: z, valid: v }));
    }
    b
}

/// Train one specification model; returns the parameters with the lowest
/// validation loss. Validation scenes are held out by scene.
pub fn train(
    scenes: &[SceneExamples],
    user_type: UserType,
    weights: LossWeights,
    arch: &Architecture,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if scenes.iter().all(|s| s.examples.is_empty()) {
        return Err(Error::Empty("training set"));
    }
    let mut model = SpecModel::init(user_type, arch.clone(), weights, seed);
    // start the decoder at the mean image color
    let plane = arch.image_size * arch.image_size;
    let mut rng = rng_for(seed, &[0x7A1]);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if scenes.len() >= 2 { ((scenes.len() as f64 * cfg.val_fraction).round() as usize).clamp(1, scenes.len() - 1) } else { 0 };
    let (val_idx, train_idx) = order.split_at(n_val);
    let train_set: Vec<&SceneExamples> = train_idx.iter().map(|&i| &scenes[i]).filter(|s| !s.examples.is_empty()).collect();
    let val_set: Vec<&SceneExamples> = val_idx.iter().map(|&i| &scenes[i]).filter(|s| !s.examples.is_empty()).collect();
    if train_set.is_empty() {
        return Err(Error::Empty("training split"));
    }
    for c in 0..3 {
        let mean = train_set.iter().map(|s| s.image.data[c * plane..][..plane].iter().sum::<f64>()).sum::<f64>()
            / (train_set.len() * plane) as f64;
        let m = mean.clamp(1e-3, 1.0 - 1e-3);
        model.params[idx::DEC_DECONV[2] + 1].data[c] = (m / (1.0 - m)).ln();
    }
    let mut opt = Adam::new(&model.params, cfg.learning_rate);
    let val_batch = (!val_set.is_empty()).then(|| make_batch(&val_set));
    // checkpoint on validation BCE; patience resets while either BCE or total improves
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut best_total = f64::INFINITY;
    let mut curve = Vec::new();
    let mut since_best = 0;
    let mut sel: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.max_epochs {
        sel.shuffle(&mut rng);
        let mut epoch_terms = LossTerms::default();
        let mut n_batches = 0.0;
        for chunk in sel.chunks(cfg.batch_scenes.max(1)) {
            let views: Vec<SceneExamples>;
            let scenes_b: Vec<&SceneExamples> = if cfg.augment {
                views = chunk.iter().map(|&i| symmetric_view(train_set[i], rng.gen_range(0..4), arch.traj_center)).collect();
                views.iter().collect()
            } else {
                chunk.iter().map(|&i| train_set[i]).collect()
            };
            let batch = make_batch(&scenes_b);
            let noise: Vec<f64> = (0..scenes_b.len() * SCENE_DIM).map(|_| rng.sample(StandardNormal)).collect();
            let step = loss_and_grad(&model, &batch, Some(&noise)).and_then(|(terms, grads)| {
                opt.step(&mut model.params, &grads)?;
                Ok(terms)
            });
            let terms = match step {
                Ok(t) => t,
                Err(e @ Error::NonFinite(_)) => {
                    return Err(Error::Diverged { epoch, reason: e.to_string(), last_good: Some(Box::new(best.1)) })
                }
                Err(e) => return Err(e),
            };
            epoch_terms.recon += terms.recon;
            epoch_terms.kl += terms.kl;
            epoch_terms.bce += terms.bce;
            epoch_terms.total += terms.total;
            n_batches += 1.0;
        }
        for v in [&mut epoch_terms.recon, &mut epoch_terms.kl, &mut epoch_terms.bce, &mut epoch_terms.total] {
            *v /= n_batches;
        }
        if !model.params.iter().all(Tensor::is_finite) {
            return Err(Error::Diverged { epoch, reason: "non-finite parameters".into(), last_good: Some(Box::new(best.1)) });
        }
        let val = match &val_batch {
            Some(b) => loss(&model, b, None)?,
            None => epoch_terms,
        };
        curve.push(EpochRecord { epoch, train: epoch_terms, val });
        let improved_bce = val.bce < best.0;
        if improved_bce {
            best = (val.bce, model.clone(), epoch);
        }
        if improved_bce || val.total < best_total {
            best_total = best_total.min(val.total);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let mut model = best.1;
    model.meta = TrainMeta {
        seed,
        epochs_run: curve.len(),
        best_epoch: best.2,
        best_val_bce: best.0,
        traj_per_scene: scenes.iter().map(|s| s.examples.len()).max().unwrap_or(0),
    };
    Ok(TrainOutcome { model, curve })
}

/// Fraction of examples whose thresholded prediction `v̂ > 0.5` matches the label.
pub fn evaluate(model: &SpecModel, test: &[SceneExamples]) -> Result<f64> {
    let total: usize = test.iter().map(|s| s.examples.len()).sum();
    if total == 0 {
        return Err(Error::Empty("test set"));
    }
    let mut correct = 0usize;
    for s in test {
        if s.examples.is_empty() {
            continue;
        }
        let post = model.encode(&s.image)?;
        let codes: Vec<BezierParam> = s.examples.iter().map(|e| e.0).collect();
        let probs = model.classify_batch(&post.mu, &codes)?;
        correct += probs.iter().zip(&s.examples).filter(|(p, e)| (**p > 0.5) == e.1).count();
    }
    Ok(correct as f64 / total as f64)
}

/// Accuracy of an arbitrary predictor; used for baselines.
pub fn accuracy_of(predictions: &[f64], labels: &[bool]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("test set"));
    }
    Ok(predictions.iter().zip(labels).filter(|(p, l)| (**p > 0.5) == **l).count() as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub n: usize,
}

/// Mean and quartiles (linear interpolation between order statistics).
pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::Empty("sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Ok(SummaryStats { mean: v.iter().sum::<f64>() / v.len() as f64, q1: q(0.25), median: q(0.5), q3: q(0.75), n: v.len() })
}

/// Standard-normal noise for `n_scenes` scene codes, derived from `seed`.
pub fn scene_noise(seed: u64, n_scenes: usize) -> Vec<f64> {
    let mut rng = rng_for(mix_seed(seed, &[0x7015E]), &[]);
    (0..n_scenes * SCENE_DIM).map(|_| rng.sample(StandardNormal)).collect()
}
