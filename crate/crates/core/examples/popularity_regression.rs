//! Lasso popularity regression on check-in counts with nested
//! cross-validation, compared with a random embedding of the same width.
//!
//! ```text
//! cargo run --release --example popularity_regression [epochs]
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recp::eval::{evaluate_popularity, EvalConfig};
use recp::numcore::DenseMatrix;
use recp::synth::{generate_city, CitySpec};
use recp::train::{train, TrainConfig};

fn main() -> recp::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let city = generate_city(&CitySpec::default())?;
    let features = city.view_features()?;
    let y = city.checkin_vector().values;
    let eval = EvalConfig::default();

    let config = TrainConfig {
        epochs,
        seed: 1,
        ..TrainConfig::default()
    };
    let e = train(&config, &features)?.embedding.e;
    let r = evaluate_popularity(&e, &y, &eval)?;
    println!("embedding  MAE {}  RMSE {}  R2 {}", r.mae, r.rmse, r.r2);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = DenseMatrix::from_fn(e.rows(), e.cols(), |_, _| rng.random_range(-1.0..1.0));
    let b = evaluate_popularity(&noise, &y, &eval)?;
    println!("random     MAE {}  RMSE {}  R2 {}", b.mae, b.rmse, b.r2);
    Ok(())
}
