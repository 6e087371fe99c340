//! Conv layer throughput at the 32x24, depth-10 training shapes.
//!
//! `cargo run --release --example conv_bench -- 4,4,8,8`

use pcbnet::tensor::*;
use std::time::Instant;

fn main() {
    let n = 8;
    let f: Vec<usize> =
        std::env::args().nth(1).unwrap_or("32,32,64,64".into()).split(',').map(|s| s.parse().unwrap()).collect();
    for (cin, cout, d, h, w) in
        [(1, f[0], 10, 24, 32), (f[0], f[1], 10, 24, 32), (f[1], f[2], 5, 12, 16), (f[2], f[3], 5, 12, 16)]
    {
        let x = Tensor::<f32>::from_fn(vec![n, cin, d, h, w], |i| (i % 13) as f32 * 0.1).unwrap();
        let mut p = ConvParams::<f32>::zeros(cin, cout).unwrap();
        p.weights.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = (i % 7) as f32 * 0.01);
        let t = Instant::now();
        let y = conv3d_forward(&x, &p).unwrap();
        let tf = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let _g = conv3d_backward(&x, &p, &y).unwrap();
        let tb = t.elapsed().as_secs_f64();
        let macs = (n * cin * cout * 27 * d * h * w) as f64;
        println!(
            "{cin}->{cout} {d}x{h}x{w}: fwd {:.4}s ({:.1} GFLOP/s) bwd {:.4}s ({:.1} GFLOP/s)",
            tf,
            2.0 * macs / tf / 1e9,
            tb,
            4.0 * macs / tb / 1e9
        );
    }
}
