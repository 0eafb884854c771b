//! k-means land-use clustering of trained embeddings against the planted
//! region functions, next to a raw-feature baseline.
//!
//! ```text
//! cargo run --release --example land_use_clustering [epochs]
//! ```

use recp::eval::{evaluate_clustering, EvalConfig};
use recp::synth::{generate_city, CitySpec};
use recp::train::{train, TrainConfig};

fn main() -> recp::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let city = generate_city(&CitySpec::default())?;
    let features = city.view_features()?;
    let truth = &city.truth.labels;
    let eval = EvalConfig::default();

    let raw = features.attributes.hconcat(&features.outflow)?;
    let base = evaluate_clustering(&raw, truth, &eval)?;
    println!("raw features   NMI {}  ARI {}  F {}", base.nmi, base.ari, base.f_measure);

    let config = TrainConfig {
        epochs,
        seed: 1,
        ..TrainConfig::default()
    };
    let e = train(&config, &features)?.embedding.e;
    let r = evaluate_clustering(&e, truth, &eval)?;
    println!("embedding      NMI {}  ARI {}  F {}", r.nmi, r.ari, r.f_measure);
    Ok(())
}
