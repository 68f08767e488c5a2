// Micro-benchmark: single training step time at desk scale.
use leakdet::autoencoder::{train_on_windows, TrainConfig};
use leakdet::mat::Matrix;
use leakdet::window::WindowMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

fn main() {
    let (k, l) = (16usize, 336usize);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let windows: Vec<WindowMatrix> = (0..64)
        .map(|_| WindowMatrix {
            values: Matrix::from_vec(k, l, (0..k * l).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
            end_sample: l - 1,
        })
        .collect();
    let cfg = TrainConfig { batch_size: 32, max_steps: 20, eval_every: 100, max_val_windows: 8, ..TrainConfig::default() };
    let t = std::time::Instant::now();
    let out = train_on_windows(&windows, &windows[..8], &cfg).unwrap();
    println!("20 steps in {:?} -> {:?}/step (final loss {:.4})", t.elapsed(), t.elapsed() / 20, out.final_val_loss);
}
