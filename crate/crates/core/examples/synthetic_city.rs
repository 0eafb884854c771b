//! Generates a synthetic city and writes it as CSV files.
//!
//! ```text
//! cargo run --release --example synthetic_city -- out/city
//! ```

use recp::synth::{generate_city, CitySpec};

fn main() -> recp::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "city".into());
    let spec = CitySpec::default();
    let city = generate_city(&spec)?;
    city.write_dir(&out)?;

    println!("{} regions, {} functions", spec.regions, spec.functions);
    println!("{} POIs, {} trips", city.pois.len(), city.trips.len());
    for (f, profile) in city.truth.poi_profiles.iter().enumerate() {
        let top = profile
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(c, p)| format!("category {c} ({p:.2})"))
            .unwrap_or_default();
        println!("function {f}: popularity {:.2}, top {top}", city.truth.popularity[f]);
    }
    println!("written to {out}");
    Ok(())
}
