//! Every ablation variant on shared seeds, tabulated over both tasks.
//!
//! ```text
//! cargo run --release --example ablation_study [epochs] [seeds]
//! ```

use recp::ablation::{run_grid, AblationTable, Targets};
use recp::eval::EvalConfig;
use recp::synth::{generate_city, CitySpec};
use recp::train::{Ablation, TrainConfig};

fn main() -> recp::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);

    let city = generate_city(&CitySpec::default())?;
    let features = city.view_features()?;
    let checkins = city.checkin_vector().values;
    let targets = Targets {
        labels: Some(&city.truth.labels),
        checkins: Some(&checkins),
    };
    let base = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let eval = EvalConfig {
        runs: 3,
        ..EvalConfig::default()
    };
    let seeds: Vec<u64> = (1..=seeds).collect();
    let runs = run_grid(&base, &Ablation::ALL, &seeds, &features, targets, &eval, 1)?;
    let table = AblationTable::from_runs(&runs);

    println!("{:<8}{:>18}{:>18}", "variant", "nmi", "r2");
    for v in Ablation::ALL {
        let show = |m| table.get(v, m).map_or("-".to_string(), |s| s.to_string());
        println!("{:<8}{:>18}{:>18}", v.name(), show("nmi"), show("r2"));
    }
    Ok(())
}
