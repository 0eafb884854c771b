//! Trains the full model on the default synthetic city and saves the
//! embedding and loss history.
//!
//! ```text
//! cargo run --release --example train_embedding [epochs] [seed]
//! ```

use recp::synth::{generate_city, CitySpec};
use recp::train::{history_csv_string, train_with_progress, TrainConfig};

fn main() -> recp::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let features = generate_city(&CitySpec::default())?.view_features()?;
    let config = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let out = train_with_progress(&config, &features, |epoch, b| {
        if epoch % 10 == 0 || epoch == 1 {
            println!("epoch {epoch:>4}  total {:>12.4}", b.total);
        }
    })?;

    let e = &out.embedding;
    println!("embedding {} x {}", e.regions(), e.width());
    e.save("embedding.csv")?;
    std::fs::write("loss_history.csv", history_csv_string(&out.history))
        .map_err(|err| recp::RecpError::io("loss_history.csv", err))?;
    println!("wrote embedding.csv and loss_history.csv");
    Ok(())
}
