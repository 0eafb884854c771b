//! Finite-difference check of the full objective on the toy city.
//!
//! ```text
//! cargo run --release --example gradcheck [seed]
//! ```

use recp::numcore::GradCheckConfig;
use recp::synth::{generate_city, CitySpec};
use recp::train::{grad_check_objective, TrainConfig};

fn main() -> recp::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let features = generate_city(&CitySpec::toy())?.view_features()?;
    let config = TrainConfig {
        seed,
        ..TrainConfig::toy()
    };
    let report = grad_check_objective(&config, &features, &GradCheckConfig::default(), 0.1)?;
    println!("checked {} coordinates", report.coords_checked);
    println!("max relative error {:.3e}", report.max_rel_error);
    if let Some((name, idx)) = &report.worst {
        println!("worst at {name}[{idx}]");
    }
    Ok(())
}
