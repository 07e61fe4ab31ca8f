//! Finite-difference gradient checks. Each function returns the worst
//! norm-wise relative error over `INSTANCES` random instances.

use demospec::autodiff::{Graph, NodeId, Tensor};
use demospec::geometry::BezierParam;
use demospec::scenegen::{SceneImage, UserType};
use demospec::specmodel::{loss, loss_and_grad, Architecture, Batch, Example, LossWeights, SpecModel, SCENE_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fd_gradient, rel_error};

pub const INSTANCES: u64 = 100;
pub const TOL: f64 = 1e-4;
const H: f64 = 1e-5;

fn tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Reduce an op's output to a scalar with random weights, then compare the
/// tape gradient of every input against central differences.
fn check(inputs: &[Tensor], seed: u64, build: &dyn Fn(&mut Graph, &[NodeId]) -> NodeId) -> f64 {
    let run = |vals: &[Tensor], weights: Option<&[f64]>| -> (f64, Vec<Tensor>, usize) {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = vals.iter().map(|t| g.leaf(t.clone())).collect();
        let y = build(&mut g, &ids);
        let n = g.value(y).numel();
        let w: Vec<f64> = match weights {
            Some(w) => w.to_vec(),
            None => vec![1.0; n],
        };
        let s = g.weighted_sum(y, &w).unwrap();
        let grads = g.backward(s).unwrap();
        (g.value(s).item(), ids.iter().map(|&i| grads.get(i)).collect(), n)
    };
    let (_, _, n_out) = run(inputs, None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xFEED);
    let w: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, grads, _) = run(inputs, Some(&w));
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        let mut f = |x: &[f64]| {
            let mut vals = inputs.to_vec();
            vals[i] = Tensor::new(t.shape.clone(), x.to_vec()).unwrap();
            run(&vals, Some(&w)).0
        };
        let fd = fd_gradient(&mut f, &t.data, H);
        worst = worst.max(rel_error(&grads[i].data, &fd, 1e-6));
    }
    worst
}

fn over_instances(f: impl Fn(&mut ChaCha8Rng, u64) -> f64) -> f64 {
    (0..INSTANCES).map(|seed| f(&mut ChaCha8Rng::seed_from_u64(seed), seed)).fold(0.0, f64::max)
}

pub fn conv2d() -> f64 {
    over_instances(|r, seed| {
        let (n, c, o, hw) = (r.gen_range(1..3), r.gen_range(1..3), r.gen_range(1..3), r.gen_range(3..7));
        let stride = r.gen_range(1..3);
        let pad = r.gen_range(0..2);
        let x = tensor(r, &[n, c, hw, hw], -1.0, 1.0);
        let w = tensor(r, &[o, c, 3, 3], -1.0, 1.0);
        let b = tensor(r, &[o], -1.0, 1.0);
        check(&[x, w, b], seed, &|g, v| g.conv2d(v[0], v[1], v[2], stride, pad).unwrap())
    })
}

pub fn conv_transpose2d() -> f64 {
    over_instances(|r, seed| {
        let (n, ci, co, out) = (r.gen_range(1..3), r.gen_range(1..3), r.gen_range(1..3), r.gen_range(4..8));
        let (stride, pad) = (2, 1);
        let small = (out + 2 * pad - 3) / stride + 1;
        let x = tensor(r, &[n, ci, small, small], -1.0, 1.0);
        let w = tensor(r, &[ci, co, 3, 3], -1.0, 1.0);
        let b = tensor(r, &[co], -1.0, 1.0);
        check(&[x, w, b], seed, &|g, v| g.conv_transpose2d(v[0], v[1], v[2], stride, pad, (out, out)).unwrap())
    })
}

pub fn linear() -> f64 {
    over_instances(|r, seed| {
        let (n, din, dout) = (r.gen_range(1..4), r.gen_range(1..6), r.gen_range(1..5));
        let x = tensor(r, &[n, din], -1.0, 1.0);
        let w = tensor(r, &[dout, din], -1.0, 1.0);
        let b = tensor(r, &[dout], -1.0, 1.0);
        check(&[x, w, b], seed, &|g, v| g.linear(v[0], v[1], v[2]).unwrap())
    })
}

/// Inputs are kept at least 0.01 from the kink, where the derivative is undefined.
pub fn relu() -> f64 {
    over_instances(|r, seed| {
        let n = r.gen_range(1..10);
        let data = (0..n).map(|_| r.gen_range(0.01..1.0) * if r.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        check(&[Tensor::new(vec![n], data).unwrap()], seed, &|g, v| g.relu(v[0]).unwrap())
    })
}

pub fn sigmoid() -> f64 {
    over_instances(|r, seed| {
        let n = r.gen_range(1..10);
        let x = tensor(r, &[n], -6.0, 6.0);
        check(&[x], seed, &|g, v| g.sigmoid(v[0]).unwrap())
    })
}

pub fn gaussian_sample() -> f64 {
    over_instances(|r, seed| {
        let (n, d) = (r.gen_range(1..3), r.gen_range(1..5));
        let mu = tensor(r, &[n, d], -2.0, 2.0);
        let lv = tensor(r, &[n, d], -3.0, 2.0);
        let noise: Vec<f64> = (0..n * d).map(|_| r.gen_range(-2.0..2.0)).collect();
        check(&[mu, lv], seed, &|g, v| g.gaussian_sample(v[0], v[1], &noise).unwrap())
    })
}

pub fn concat_reshape_gather_affine() -> f64 {
    over_instances(|r, seed| {
        let n = r.gen_range(1..4);
        let (w1, w2) = (r.gen_range(1..4), r.gen_range(1..4));
        let a = tensor(r, &[n, w1], -1.0, 1.0);
        let b = tensor(r, &[n, w2], -1.0, 1.0);
        let index: Vec<usize> = (0..r.gen_range(1..6)).map(|_| r.gen_range(0..n)).collect();
        let scale: Vec<f64> = (0..w1 + w2).map(|_| r.gen_range(-2.0..2.0)).collect();
        let shift: Vec<f64> = (0..w1 + w2).map(|_| r.gen_range(-2.0..2.0)).collect();
        check(&[a, b], seed, &|g, v| {
            let c = g.concat(&[v[0], v[1]]).unwrap();
            let flat = g.reshape(c, &[n * (w1 + w2)]).unwrap();
            let back = g.reshape(flat, &[n, w1 + w2]).unwrap();
            let rows = g.gather_rows(back, &index).unwrap();
            g.column_affine(rows, &scale, &shift).unwrap()
        })
    })
}

pub fn mse_and_bce() -> f64 {
    over_instances(|r, seed| {
        let n = r.gen_range(1..8);
        let p = tensor(r, &[n], 0.05, 0.95);
        let target = tensor(r, &[n], 0.0, 1.0);
        let a = check(&[p.clone()], seed, &|g, v| g.mse(v[0], &target).unwrap());
        a.max(check(&[p], seed, &|g, v| g.bce(v[0], &target).unwrap()))
    })
}

pub fn bce_with_logits_rows() -> f64 {
    over_instances(|r, seed| {
        let (n, w) = (r.gen_range(1..4), r.gen_range(1..5));
        let x = tensor(r, &[n, w], -5.0, 5.0);
        let t = tensor(r, &[n, w], 0.0, 1.0);
        check(&[x], seed, &|g, v| g.bce_with_logits_rows(v[0], &t).unwrap())
    })
}

pub fn kl_to_standard_normal() -> f64 {
    over_instances(|r, seed| {
        let (n, d) = (r.gen_range(1..3), r.gen_range(1..6));
        let mu = tensor(r, &[n, d], -2.0, 2.0);
        let lv = tensor(r, &[n, d], -3.0, 2.0);
        check(&[mu, lv], seed, &|g, v| g.kl_divergence_to_standard_normal(v[0], v[1]).unwrap())
    })
}

pub fn add_scale_sum() -> f64 {
    over_instances(|r, seed| {
        let n = r.gen_range(1..8);
        let a = tensor(r, &[n], -1.0, 1.0);
        let b = tensor(r, &[n], -1.0, 1.0);
        let c = r.gen_range(-3.0..3.0);
        check(&[a, b], seed, &|g, v| {
            let s = g.add(v[0], v[1]).unwrap();
            let s = g.scale(s, c).unwrap();
            g.sum(s).unwrap()
        })
    })
}

fn tiny_arch() -> Architecture {
    Architecture { image_size: 8, channels: [3, 2, 2], hidden: 4, ..Default::default() }
}

fn random_batch(r: &mut ChaCha8Rng, size: usize) -> Batch {
    let n_scenes = r.gen_range(1..3);
    let images = (0..n_scenes)
        .map(|_| SceneImage { size, data: (0..3 * size * size).map(|_| r.gen_range(0.05..0.95)).collect() })
        .collect();
    let examples = (0..r.gen_range(1..5))
        .map(|_| Example {
            scene: r.gen_range(0..n_scenes),
            z_traj: BezierParam::new(r.gen_range(-25.0..125.0), r.gen_range(-25.0..125.0)),
            valid: r.gen_bool(0.5),
        })
        .collect();
    Batch { images, examples }
}

/// Total weighted loss (reconstruction, KL and classification) against
/// central differences over a random subset of every parameter tensor.
pub fn total_loss() -> f64 {
    over_instances(|r, seed| {
        let weights = LossWeights { alpha: r.gen_range(0.1..2.0), beta: r.gen_range(0.1..2.0), gamma: r.gen_range(0.1..5.0) };
        let arch = tiny_arch();
        let mut model = SpecModel::init(UserType::Careful, arch.clone(), weights, seed);
        // zero-initialized biases put ReLUs exactly on their kink
        for (p, (name, _)) in model.params.iter_mut().zip(arch.param_shapes()) {
            if name.ends_with(".b") {
                p.data.iter_mut().for_each(|v| *v = r.gen_range(-0.5..0.5));
            }
        }
        let batch = random_batch(r, arch.image_size);
        let noise: Vec<f64> = (0..batch.images.len() * SCENE_DIM).map(|_| r.gen_range(-1.5..1.5)).collect();
        let (_, grads) = loss_and_grad(&model, &batch, Some(&noise)).unwrap();
        let mut worst: f64 = 0.0;
        for (pi, p) in model.params.iter().enumerate() {
            let picks = rand::seq::index::sample(r, p.numel(), p.numel().min(3)).into_vec();
            let x: Vec<f64> = picks.iter().map(|&j| p.data[j]).collect();
            let mut f = |xs: &[f64]| {
                let mut m = model.clone();
                for (&j, &v) in picks.iter().zip(xs) {
                    m.params[pi].data[j] = v;
                }
                loss(&m, &batch, Some(&noise)).unwrap().total
            };
            let fd = fd_gradient(&mut f, &x, H);
            let tape: Vec<f64> = picks.iter().map(|&j| grads[pi].data[j]).collect();
            worst = worst.max(rel_error(&tape, &fd, 1e-6));
        }
        worst
    })
}

/// Every check by name, in a fixed order.
pub fn all() -> Vec<(&'static str, fn() -> f64)> {
    vec![
        ("conv2d", conv2d),
        ("conv_transpose2d", conv_transpose2d),
        ("linear", linear),
        ("relu", relu),
        ("sigmoid", sigmoid),
        ("gaussian_sample", gaussian_sample),
        ("concat/reshape/gather_rows/column_affine", concat_reshape_gather_affine),
        ("mse/bce", mse_and_bce),
        ("bce_with_logits_rows", bce_with_logits_rows),
        ("kl_to_standard_normal", kl_to_standard_normal),
        ("add/scale/sum", add_scale_sum),
        ("total_loss", total_loss),
    ]
}
