use ndarray::Array2;
use std::time::Instant;

fn bench(n: usize, k: usize, m: usize, reps: usize) -> f64 {
    let a = Array2::<f32>::from_elem((n, k), 0.5f32);
    let b = Array2::<f32>::from_elem((k, m), 0.25f32);
    let mut out = Array2::<f32>::zeros((n, m));
    // warmup
    ndarray::linalg::general_mat_mul(1.0, &a, &b, 0.0, &mut out);
    let t = Instant::now();
    for _ in 0..reps {
        ndarray::linalg::general_mat_mul(1.0, &a, &b, 0.0, &mut out);
    }
    let secs = t.elapsed().as_secs_f64();
    2.0 * (n * k * m * reps) as f64 / secs / 1e9
}

fn main() {
    for (n, k, m) in [
        (4096, 32, 32),
        (4096, 39, 32),
        (4096, 32, 4),
        (65536, 32, 32),
        (4096, 64, 64),
        (4096, 128, 128),
    ] {
        let reps = (200_000_000 / (n * k * m)).max(3);
        println!(
            "f32 [{n}x{k}]@[{k}x{m}]: {:.1} GFLOP/s",
            bench(n, k, m, reps)
        );
    }
}
