//! The autodiff engine on its own: fit a two-layer network to an XOR-like
//! point set with Adam, using gradients from `Graph::backward`.
//!
//! ```text
//! cargo run --release --example autodiff_logistic
//! ```

use demospec::autodiff::{Adam, Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 200;
    let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| f64::from(x[0] * x[1] > 0.0)).collect();
    let inputs = Tensor::from_rows(&xs)?;
    let targets = Tensor::new(vec![n, 1], ys.clone())?;

    let hidden = 16;
    let mut init = |shape: &[usize], scale: f64| {
        let numel = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..numel).map(|_| rng.gen_range(-scale..scale)).collect())
    };
    let mut params = vec![init(&[hidden, 2], 1.0)?, init(&[hidden], 0.1)?, init(&[1, hidden], 0.5)?, init(&[1], 0.1)?];
    let mut adam = Adam::new(&params, 0.05);

    for epoch in 0..=400 {
        let mut g = Graph::new();
        let ids: Vec<_> = params.iter().map(|p| g.leaf(p.clone())).collect();
        let x = g.leaf(inputs.clone());
        let h = g.linear(x, ids[0], ids[1])?;
        let h = g.relu(h)?;
        let logit = g.linear(h, ids[2], ids[3])?;
        let prob = g.sigmoid(logit)?;
        let loss = g.bce(prob, &targets)?;
        if epoch % 100 == 0 {
            let acc = g.value(prob).data.iter().zip(&ys).filter(|(p, y)| (**p > 0.5) == (**y > 0.5)).count();
            println!("epoch {epoch:>3}  loss {:.4}  accuracy {:.3}", g.value(loss).item(), acc as f64 / n as f64);
        }
        let grads = g.backward(loss)?;
        let gs: Vec<Tensor> = ids.iter().map(|&id| grads.get(id)).collect();
        adam.step(&mut params, &gs)?;
    }
    Ok(())
}
