// Reverse-mode gradients, a gradient of a gradient, and a finite-difference
// check of a few primitive ops.

use ganinv::tensor::{default_cases, grad_check, Graph, Tensor};

pub fn run_example() -> ganinv::Result<()> {
    // f(x) = Σ softplus(x)², df/dx = 2·softplus(x)·σ(x).
    let x = Tensor::from_slice(&[3], &[-1.0, 0.0, 2.0])?;
    let mut g = Graph::new();
    let xn = g.leaf(x.clone());
    let s = g.softplus(xn)?;
    let sq = g.square(s)?;
    let f = g.sum_all(sq)?;
    let dx = g.backward(f, &[xn])?[0];
    println!("f = {:.6}", g.value(f).item());
    println!("df/dx = {:?}", g.value(dx).data());
    for (i, &v) in x.data().iter().enumerate() {
        let sp = (1.0 + v.exp()).ln();
        let sig = 1.0 / (1.0 + (-v).exp());
        assert!((g.value(dx).data()[i] - 2.0 * sp * sig).abs() < 1e-12);
    }

    // The gradient is itself a graph node, so it can be differentiated again:
    // d/dx Σ (df/dx)².
    let dsq = g.square(dx)?;
    let h = g.sum_all(dsq)?;
    let ddx = g.backward(h, &[xn])?[0];
    println!("d/dx |df/dx|^2 = {:?}", g.value(ddx).data());

    for op in [
        "matmul",
        "conv2d",
        "modulated-conv2d",
        "softplus",
        "upsample-nearest-2x",
    ] {
        for (shapes, seed) in default_cases(op).into_iter().take(2) {
            let r = grad_check(op, &shapes, seed)?;
            println!("{op:<18} seed {seed:<5} max rel err {:.2e}", r.max_relative_error);
            assert!(r.max_relative_error <= 1e-5);
        }
    }
    Ok(())
}

fn main() -> ganinv::Result<()> {
    run_example()
}
