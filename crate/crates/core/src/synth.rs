//! Synthetic city with planted region functions.
//!
//! Every region is assigned a function round-robin. The function drives the
//! region's POI category mix, the hour and destination function of trips
//! leaving it, and its check-in popularity, so both views carry the same
//! latent structure. `profile_overlap` blends each function's own profile with
//! the uniform one: 0 gives disjoint supports, 1 makes functions identical.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};

use crate::data::csv::{write_csv, CHECKINS_HEADER, LABELS_HEADER, POIS_HEADER, TRIPS_HEADER};
use crate::data::{
    build_attributes, build_flows, AttributeMatrix, CheckinRecord, CheckinVector, FlowMatrix,
    LabelRecord, PoiRecord, TripRecord,
};
use crate::error::{RecpError, Result};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CitySpec {
    pub regions: usize,
    pub functions: usize,
    pub categories: usize,
    pub intervals: usize,
    pub trips: usize,
    pub noise: f64,
    pub profile_overlap: f64,
    /// Mean POI count per region.
    pub poi_mean: f64,
    pub seed: u64,
}

impl Default for CitySpec {
    fn default() -> Self {
        CitySpec {
            regions: 80,
            functions: 4,
            categories: 24,
            intervals: 24,
            trips: 50_000,
            noise: 0.1,
            profile_overlap: 0.5,
            poi_mean: 40.0,
            seed: 7,
        }
    }
}

impl CitySpec {
    /// Eight regions, six categories, two intervals.
    pub fn toy() -> Self {
        CitySpec {
            regions: 8,
            functions: 2,
            categories: 6,
            intervals: 2,
            trips: 200,
            poi_mean: 10.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(RecpError::Config(format!("synth: {m}")));
        if self.functions == 0 || self.functions > self.regions {
            return fail("need 1 <= functions <= regions");
        }
        if self.categories == 0 || self.intervals == 0 {
            return fail("categories and intervals must be positive");
        }
        if !(0.0..=1.0).contains(&self.profile_overlap) {
            return fail("profile_overlap must be in [0, 1]");
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return fail("noise must be >= 0");
        }
        if !(self.poi_mean > 0.0) || !self.poi_mean.is_finite() {
            return fail("poi_mean must be > 0");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub labels: Vec<usize>,
    /// `functions × categories`, each row a distribution.
    pub poi_profiles: Vec<Vec<f64>>,
    /// `functions × (functions · intervals)`; entry `f_dest · N_t + t`.
    pub od_profiles: Vec<Vec<f64>>,
    pub popularity: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct City {
    pub spec: CitySpec,
    pub pois: Vec<PoiRecord>,
    pub trips: Vec<TripRecord>,
    pub checkins: Vec<CheckinRecord>,
    pub truth: GroundTruth,
}

/// Members of block `j` when `0..len` is split into `parts` contiguous blocks.
fn block(j: usize, parts: usize, len: usize) -> Vec<usize> {
    let members: Vec<usize> = (0..len).filter(|&i| i * parts / len == j).collect();
    if members.is_empty() {
        vec![j * len / parts]
    } else {
        members
    }
}

fn blend(own: &[f64], overlap: f64) -> Vec<f64> {
    let u = 1.0 / own.len() as f64;
    own.iter().map(|p| (1.0 - overlap) * p + overlap * u).collect()
}

fn uniform_on(support: &[usize], len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    let p = 1.0 / support.len() as f64;
    support.iter().for_each(|&i| v[i] = p);
    v
}

pub fn ground_truth(spec: &CitySpec, rng: &mut impl Rng) -> GroundTruth {
    let g = spec.functions;
    let labels = (0..spec.regions).map(|i| i % g).collect();
    let poi_profiles = (0..g)
        .map(|j| {
            let own = uniform_on(&block(j, g, spec.categories), spec.categories);
            blend(&own, spec.profile_overlap)
        })
        .collect();
    let nt = spec.intervals;
    let od_profiles = (0..g)
        .map(|j| {
            let dest = (j + 1) % g;
            let hours = block(j, g, nt);
            let cells: Vec<usize> = hours.iter().map(|t| dest * nt + t).collect();
            blend(&uniform_on(&cells, g * nt), spec.profile_overlap)
        })
        .collect();
    let mut popularity: Vec<f64> = (0..g)
        .map(|j| {
            if g == 1 {
                1.0
            } else {
                1.0 + 2.0 * j as f64 / (g - 1) as f64
            }
        })
        .collect();
    popularity.shuffle(rng);
    GroundTruth {
        labels,
        poi_profiles,
        od_profiles,
        popularity,
    }
}

/// Draws POIs, trips and check-ins from the planted structure.
pub fn generate_city(spec: &CitySpec) -> Result<City> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = ground_truth(spec, &mut rng);
    let g = spec.functions;
    let nt = spec.intervals;

    let poi_count = Poisson::new(spec.poi_mean).map_err(|e| RecpError::Config(e.to_string()))?;
    let cat_dists = truth
        .poi_profiles
        .iter()
        .map(|p| WeightedIndex::new(p).expect("valid profile"))
        .collect::<Vec<_>>();
    let mut pois = Vec::new();
    let mut poi_totals = vec![0usize; spec.regions];
    for region in 0..spec.regions {
        let count = poi_count.sample(&mut rng) as usize;
        poi_totals[region] = count;
        let dist = &cat_dists[truth.labels[region]];
        for _ in 0..count {
            pois.push(PoiRecord {
                region,
                category: dist.sample(&mut rng),
            });
        }
    }

    let members: Vec<Vec<usize>> = (0..g)
        .map(|f| (0..spec.regions).filter(|&r| truth.labels[r] == f).collect())
        .collect();
    let od_dists = truth
        .od_profiles
        .iter()
        .map(|p| WeightedIndex::new(p).expect("valid profile"))
        .collect::<Vec<_>>();
    let mut trips = Vec::with_capacity(spec.trips);
    for _ in 0..spec.trips {
        let origin = rng.random_range(0..spec.regions);
        let cell = od_dists[truth.labels[origin]].sample(&mut rng);
        let (dest_fn, hour) = (cell / nt, cell % nt);
        let pool = &members[dest_fn];
        let dest = pool[rng.random_range(0..pool.len())];
        trips.push(TripRecord { origin, dest, hour });
    }

    let noise = Normal::new(0.0, spec.noise).map_err(|e| RecpError::Config(e.to_string()))?;
    let checkins = (0..spec.regions)
        .map(|region| {
            let w = truth.popularity[truth.labels[region]];
            let v = w * (1.0 + noise.sample(&mut rng)) * poi_totals[region] as f64;
            CheckinRecord {
                region,
                count: v.max(0.0).round() as u64,
            }
        })
        .collect();

    Ok(City {
        spec: spec.clone(),
        pois,
        trips,
        checkins,
        truth,
    })
}

impl City {
    pub fn attributes(&self) -> AttributeMatrix {
        build_attributes(&self.pois, self.spec.regions, self.spec.categories)
            .expect("generated records are in range")
    }

    pub fn flows(&self) -> (FlowMatrix, FlowMatrix) {
        build_flows(&self.trips, self.spec.regions, self.spec.intervals)
            .expect("generated records are in range")
    }

    pub fn checkin_vector(&self) -> CheckinVector {
        let mut values = vec![0.0; self.spec.regions];
        for c in &self.checkins {
            values[c.region] += c.count as f64;
        }
        CheckinVector { values }
    }

    pub fn view_features(&self) -> Result<crate::data::ViewFeatures> {
        let (s, d) = self.flows();
        crate::data::ViewFeatures::new(&self.attributes(), &s, &d)
    }

    /// Writes `pois.csv`, `trips.csv`, `checkins.csv` and `labels.csv`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| RecpError::io(dir, e))?;
        write_csv(dir.join("pois.csv"), POIS_HEADER, &self.pois)?;
        write_csv(dir.join("trips.csv"), TRIPS_HEADER, &self.trips)?;
        write_csv(dir.join("checkins.csv"), CHECKINS_HEADER, &self.checkins)?;
        let labels: Vec<LabelRecord> = self
            .truth
            .labels
            .iter()
            .enumerate()
            .map(|(region, &label)| LabelRecord { region, label })
            .collect();
        write_csv(dir.join("labels.csv"), LABELS_HEADER, &labels)
    }
}
