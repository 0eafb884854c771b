use std::collections::HashMap;
use std::io::Write;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recp::augment::augment_view;
use recp::data::{
    attributes_from_file, build_attributes, build_flows, flows_from_file, preprocess, CityData, DataShape,
    PoiRecord, TripRecord,
};
use recp::numcore::DenseMatrix;
use recp::synth::{generate_city, CitySpec};

fn random_trips(count: usize, n: usize, nt: usize, seed: u64) -> Vec<TripRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| TripRecord {
            origin: rng.random_range(0..n),
            dest: rng.random_range(0..n),
            hour: rng.random_range(0..nt),
        })
        .collect()
}

#[test]
fn flows_match_brute_force_recount() {
    let (n, nt) = (9, 5);
    let trips = random_trips(1000, n, nt, 3);
    let (s, d) = build_flows(&trips, n, nt).unwrap();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            for t in 0..nt {
                let want = trips.iter().filter(|r| r.origin == i && r.dest == j && r.hour == t).count() as f64;
                assert_eq!(s.get(i, j, t), want);
                assert_eq!(d.get(j, i, t), want);
                total += s.get(i, j, t);
            }
        }
    }
    assert_eq!(total, 1000.0);
}

#[test]
fn streamed_flows_equal_in_memory() {
    let (n, nt) = (6, 3);
    let trips = random_trips(500, n, nt, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trips.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "origin,dest,hour").unwrap();
    for t in &trips {
        writeln!(f, "{},{},{}", t.origin, t.dest, t.hour).unwrap();
    }
    drop(f);
    assert_eq!(flows_from_file(&path, n, nt).unwrap(), build_flows(&trips, n, nt).unwrap());
}

#[test]
fn ten_thousand_pois_column_sums() {
    let (n, f) = (20, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pois.csv");
    let mut text = String::from("region,category\n");
    for _ in 0..10_000 {
        text.push_str(&format!("{},{}\n", rng.random_range(0..n), rng.random_range(0..f)));
    }
    std::fs::write(&path, &text).unwrap();

    let mut by_category: HashMap<&str, f64> = HashMap::new();
    for line in text.lines().skip(1) {
        let cat = line.split(',').nth(1).unwrap();
        *by_category.entry(cat).or_default() += 1.0;
    }
    let a = attributes_from_file(&path, n, f).unwrap().values;
    for c in 0..f {
        let col: f64 = (0..n).map(|r| a.get(r, c)).sum();
        assert_eq!(col, by_category[c.to_string().as_str()]);
    }
    assert_eq!(a.sum(), 10_000.0);
}

#[test]
fn relabelling_regions_permutes_views() {
    let (n, nt, f) = (7, 3, 4);
    let trips = random_trips(400, n, nt, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pois: Vec<PoiRecord> = (0..300)
        .map(|_| PoiRecord {
            region: rng.random_range(0..n),
            category: rng.random_range(0..f),
        })
        .collect();
    let perm: Vec<usize> = vec![3, 0, 6, 1, 5, 2, 4];

    let moved_trips: Vec<TripRecord> = trips
        .iter()
        .map(|t| TripRecord {
            origin: perm[t.origin],
            dest: perm[t.dest],
            hour: t.hour,
        })
        .collect();
    let moved_pois: Vec<PoiRecord> = pois
        .iter()
        .map(|p| PoiRecord {
            region: perm[p.region],
            category: p.category,
        })
        .collect();

    let (s, d) = build_flows(&trips, n, nt).unwrap();
    let (s2, d2) = build_flows(&moved_trips, n, nt).unwrap();
    let a = build_attributes(&pois, n, f).unwrap().values;
    let a2 = build_attributes(&moved_pois, n, f).unwrap().values;
    for i in 0..n {
        assert_eq!(a.row(i), a2.row(perm[i]));
        for j in 0..n {
            for t in 0..nt {
                assert_eq!(s.get(i, j, t), s2.get(perm[i], perm[j], t));
                assert_eq!(d.get(i, j, t), d2.get(perm[i], perm[j], t));
            }
        }
    }
}

#[test]
fn positives_never_match_other_regions() {
    let city = generate_city(&CitySpec::default()).unwrap();
    let raw = city.attributes().values;
    let n = raw.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut draws, mut collisions) = (0, 0);
    while draws < 1000 {
        for p in augment_view(&raw, 3, 0.2, &mut rng) {
            for i in 0..n {
                draws += 1;
                collisions += (0..n)
                    .filter(|&j| j != i && raw.row(j) != raw.row(i) && p.row(i) == raw.row(j))
                    .count();
            }
        }
    }
    assert_eq!(collisions, 0);
}

#[test]
fn same_seed_writes_identical_files() {
    let spec = CitySpec::toy();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_city(&spec).unwrap().write_dir(a.path()).unwrap();
    generate_city(&spec).unwrap().write_dir(b.path()).unwrap();
    for name in ["pois.csv", "trips.csv", "checkins.csv", "labels.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let other = CitySpec { seed: 8, ..spec };
    let c = tempfile::tempdir().unwrap();
    generate_city(&other).unwrap().write_dir(c.path()).unwrap();
    assert_ne!(
        std::fs::read(a.path().join("trips.csv")).unwrap(),
        std::fs::read(c.path().join("trips.csv")).unwrap()
    );
}

#[test]
fn written_city_reloads_identically() {
    let city = generate_city(&CitySpec::toy()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    city.write_dir(dir.path()).unwrap();
    let shape = DataShape {
        regions: Some(city.spec.regions),
        categories: Some(city.spec.categories),
        intervals: Some(city.spec.intervals),
    };
    let data = CityData::load_dir(dir.path(), shape).unwrap();
    assert_eq!(data.attributes, city.attributes());
    assert_eq!((data.outflow, data.inflow), city.flows());
    assert_eq!(data.checkins.unwrap(), city.checkin_vector());
    assert_eq!(data.labels.unwrap(), city.truth.labels);
}

fn counts() -> impl Strategy<Value = DenseMatrix> {
    (2..15usize, 1..6usize).prop_flat_map(|(r, c)| {
        prop::collection::vec(0u32..500, r * c)
            .prop_map(move |v| DenseMatrix::from_vec(r, c, v.into_iter().map(f64::from).collect()).unwrap())
    })
}

proptest! {
    #[test]
    fn preprocessed_columns_are_standard(raw in counts()) {
        let x = preprocess(&raw);
        let n = raw.rows() as f64;
        for c in 0..raw.cols() {
            let col: Vec<f64> = (0..raw.rows()).map(|r| x.get(r, c)).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let constant = (0..raw.rows()).all(|r| raw.get(r, c) == raw.get(0, c));
            prop_assert!(mean.abs() < 1e-9);
            if constant {
                prop_assert!(col.iter().all(|v| *v == 0.0));
            } else {
                prop_assert!((var - 1.0).abs() < 1e-9);
            }
        }
    }
}
