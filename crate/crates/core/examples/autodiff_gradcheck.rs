//! Fit a small two-layer network with the reverse-mode engine and compare
//! its gradients with central differences.
//!
//! ```text
//! cargo run --release --example autodiff_gradcheck
//! ```

use cpc_core::autodiff::{grad_check_report, AdamConfig, Graph, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn network(g: &mut Graph, store: &ParamStore, x: &Tensor, y: &Tensor) -> cpc_core::Result<Var> {
    let x = g.constant(x.clone());
    let y = g.constant(y.clone());
    let (w1, b1, w2, b2) = (
        g.param(store, "w1")?,
        g.param(store, "b1")?,
        g.param(store, "w2")?,
        g.param(store, "b2")?,
    );
    let h = g.affine(x, w1, b1)?;
    let h = g.tanh(h);
    let p = g.affine(h, w2, b2)?;
    let e = g.sub(p, y)?;
    let sq = g.mul(e, e)?;
    Ok(g.mean(sq))
}

fn main() -> cpc_core::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 64;
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = Tensor::column(&xs);
    let y = Tensor::column(&xs.iter().map(|v| v.sin()).collect::<Vec<_>>());

    let mut store = ParamStore::new();
    store.init_glorot("w1", 1, 8, &mut rng);
    store.init_zeros("b1", 1, 8);
    store.init_glorot("w2", 8, 1, &mut rng);
    store.init_zeros("b2", 1, 1);

    let report = grad_check_report(&store, 1e-5, |g, s| network(g, s, &x, &y))?;
    println!(
        "grad check over {} coordinates: max relative error {:.2e} at {}[{}]",
        report.n_checked, report.max_rel_error, report.param, report.index
    );

    let adam = AdamConfig { lr: 0.02, ..Default::default() };
    for step in 0..=500 {
        let mut g = Graph::new();
        let loss = network(&mut g, &store, &x, &y)?;
        if step % 100 == 0 {
            println!("step {step:>3}  mse {:.5}", g.value(loss).item().unwrap_or(f64::NAN));
        }
        g.backward(loss, &mut store)?;
        store.adam_step(&adam)?;
    }
    Ok(())
}
