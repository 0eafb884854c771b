//! Positive samples for intra-view contrastive learning.
//!
//! Each sample zeroes every entry of a raw count vector independently with
//! probability `drop_rate` and rescales the survivors so the L1 mass is
//! unchanged. Augmentation runs on raw counts, before preprocessing.

use rand::Rng;

use crate::error::{RecpError, Result};
use crate::numcore::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    Attribute,
    Outflow,
    Inflow,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub k_attribute: usize,
    pub k_mobility: usize,
    pub drop_rate: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            k_attribute: 3,
            k_mobility: 4,
            drop_rate: 0.2,
        }
    }
}

impl AugmentConfig {
    pub fn k_for(&self, view: View) -> usize {
        match view {
            View::Attribute => self.k_attribute,
            View::Outflow | View::Inflow => self.k_mobility,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(RecpError::Config(format!(
                "aug.drop_rate must be in [0, 1), got {}",
                self.drop_rate
            )));
        }
        if self.k_attribute == 0 || self.k_mobility == 0 {
            return Err(RecpError::Config("augmentation needs k >= 1".into()));
        }
        Ok(())
    }
}

/// The K positives of one region in one view.
#[derive(Clone, Debug, PartialEq)]
pub struct PositiveSet {
    pub view: View,
    pub region: usize,
    pub samples: Vec<Vec<f64>>,
}

fn augment_into<R: Rng + ?Sized>(x: &[f64], out: &mut [f64], drop_rate: f64, rng: &mut R) {
    let mass: f64 = x.iter().map(|v| v.abs()).sum();
    let mut kept = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        // zero entries stay zero whether dropped or not, so they draw nothing
        if v != 0.0 && drop_rate > 0.0 && rng.random::<f64>() < drop_rate {
            *o = 0.0;
        } else {
            *o = v;
            kept += v.abs();
        }
    }
    if mass > 0.0 && kept > 0.0 && kept != mass {
        let s = mass / kept;
        out.iter_mut().for_each(|v| *v *= s);
    }
}

/// `k` dropout-and-renormalize copies of `x`.
pub fn augment<R: Rng + ?Sized>(
    x: &[f64],
    k: usize,
    drop_rate: f64,
    view: View,
    region: usize,
    rng: &mut R,
) -> PositiveSet {
    let samples = (0..k)
        .map(|_| {
            let mut s = vec![0.0; x.len()];
            augment_into(x, &mut s, drop_rate, rng);
            s
        })
        .collect();
    PositiveSet {
        view,
        region,
        samples,
    }
}

/// Positives for every region of a raw feature matrix, as `k` matrices where
/// row `i` of matrix `j` is the `j`-th positive of region `i`.
pub fn augment_view<R: Rng + ?Sized>(
    raw: &DenseMatrix,
    k: usize,
    drop_rate: f64,
    rng: &mut R,
) -> Vec<DenseMatrix> {
    let (n, p) = raw.shape();
    let mut out = vec![DenseMatrix::zeros(n, p); k];
    for i in 0..n {
        for m in out.iter_mut() {
            augment_into(raw.row(i), m.row_mut(i), drop_rate, rng);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_vector_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = augment(&[0.0; 5], 3, 0.2, View::Attribute, 0, &mut rng);
        assert_eq!(p.samples, vec![vec![0.0; 5]; 3]);
    }

    #[test]
    fn no_drop_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = [1.0, 4.0, 0.0, 2.0];
        let p = augment(&x, 4, 0.0, View::Outflow, 2, &mut rng);
        assert_eq!(p.samples.len(), 4);
        assert!(p.samples.iter().all(|s| s == &x));
    }

    #[test]
    fn mass_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..10.0)).collect();
        let mass: f64 = x.iter().sum();
        let p = augment(&x, 20, 0.2, View::Inflow, 0, &mut rng);
        for s in &p.samples {
            let m: f64 = s.iter().sum();
            if m > 0.0 {
                assert!((m - mass).abs() < 1e-9);
            }
            assert!(s.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn seeded_determinism() {
        let raw = DenseMatrix::from_fn(6, 7, |r, c| ((r * 3 + c) % 5) as f64);
        let a = augment_view(&raw, 3, 0.3, &mut ChaCha8Rng::seed_from_u64(9));
        let b = augment_view(&raw, 3, 0.3, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn drop_rate_validated() {
        let cfg = AugmentConfig {
            drop_rate: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(AugmentConfig::default().validate().is_ok());
    }
}
