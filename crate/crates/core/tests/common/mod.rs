#![allow(dead_code)]

use std::path::Path;

use dasep_core::config::{parse_config, ExperimentConfig};

/// Kernel of the continuous-time walk with jump rate `rate` to each side,
/// by classical RK4 on `|x| <= width` with absorbing truncation. Entry `x` of
/// the result is the kernel at offset `x >= 0`.
pub fn rk4_walk_kernel(rate: f64, t: f64, width: usize, steps: usize) -> Vec<f64> {
    let n = 2 * width + 1;
    let f = |p: &Vec<f64>| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let l = if i == 0 { 0.0 } else { p[i - 1] };
                let r = if i == n - 1 { 0.0 } else { p[i + 1] };
                rate * (l - 2.0 * p[i] + r)
            })
            .collect()
    };
    let axpy = |p: &Vec<f64>, k: &Vec<f64>, h: f64| -> Vec<f64> { p.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let h = t / steps as f64;
    let mut p = vec![0.0; n];
    p[width] = 1.0;
    for _ in 0..steps {
        let k1 = f(&p);
        let k2 = f(&axpy(&p, &k1, h / 2.0));
        let k3 = f(&axpy(&p, &k2, h / 2.0));
        let k4 = f(&axpy(&p, &k3, h));
        for i in 0..n {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    p.split_off(width)
}

/// Jump rates `(down, up)` from the rational form with `q = e^{-eps}`.
pub fn rational_rates(eps: f64, alpha: f64, s: f64) -> (f64, f64) {
    let q = (-eps).exp();
    let a = alpha * q.powf(-s);
    (q * (1.0 + a) / (1.0 + a * q), (1.0 + a) / (1.0 + a / q))
}

pub fn config(kind: &str, dir: &Path, body: &str) -> ExperimentConfig {
    let text = format!(
        "schema_version = 1\nexperiment = \"{kind}\"\noutput.dir = \"{}\"\n{body}\n",
        dir.display()
    );
    parse_config(&text).unwrap()
}
