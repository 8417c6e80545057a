//! Train on a generated scene and score the detection against its ground
//! truth.
//!
//! ```text
//! cargo run --release -p cstn --example synthetic_run -- [seed] [size] [epochs] [lr] [stride] [patch]
//! ```

use std::time::Instant;

use cstn::data_io::{generate_synthetic_pair, SensorProfiles};
use cstn::detector::{detect_changes, FilterConfig};
use cstn::metrics::{classification_metrics, confusion_counts, roc_pr_curves};
use cstn::trainer::{fit, TrainConfig};
use cstn::{ArchConfig, Domain};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> cstn::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let seed: u64 = arg(1, 7);
    let size: usize = arg(2, 256);
    let epochs: usize = arg(3, 5);
    let lr: f64 = arg(4, 1e-4);
    let stride: usize = arg(5, 56);
    let patch: usize = arg(6, 64);

    let scene = generate_synthetic_pair(seed, size, size, 0.1, &SensorProfiles::default())?;
    let x = scene.x.to_patch(Domain::X)?;
    let y = scene.y.to_patch(Domain::Y)?;
    let arch = ArchConfig::scaled(x.channels(), y.channels(), 32, 64, 32, 64);
    let config = TrainConfig {
        seed,
        learning_rate: lr,
        stride,
        patch_size: patch,
        batch_size: 16,
        epochs_per_iteration: epochs,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let result = fit(&x, &y, &arch, &config)?;
    println!("training took {:.1?}", start.elapsed());

    let det = detect_changes(&result.params, &x, &y, FilterConfig::default())?;
    let curves = roc_pr_curves(&det.difference, &scene.gt)?;
    let m = classification_metrics(&confusion_counts(&det.change_map, &scene.gt)?)?;
    let first = result.history.first().map_or(f64::NAN, |e| e.loss.total);
    let last = result.history.last().map_or(f64::NAN, |e| e.loss.total);
    println!(
        "auc {:.4} ap {:.4} kc {:.4} oa {:.4} loss {:.4} -> {:.4}",
        curves.auc, curves.ap, m.kc, m.oa, first, last
    );
    Ok(())
}
