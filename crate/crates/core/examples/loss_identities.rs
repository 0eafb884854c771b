//! Inspects the joint distribution behind the inter-view loss for a few
//! embedding pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recp::losses::{inter_contrastive_value, joint_distribution, marginal_entropies, mutual_information};
use recp::numcore::DenseMatrix;

fn main() -> recp::Result<()> {
    let alpha = 9.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let za = DenseMatrix::from_fn(12, 4, |_, _| rng.random_range(-2.0..2.0));
    let cases = [
        ("independent", DenseMatrix::from_fn(12, 4, |_, _| rng.random_range(-2.0..2.0))),
        ("aligned", za.scale(3.0)),
        ("constant", DenseMatrix::filled(12, 4, 0.5)),
    ];
    println!("{:<12}{:>10}{:>10}{:>10}{:>12}", "z_m", "I", "H_a", "H_m", "loss");
    for (name, zm) in cases {
        let j = joint_distribution(&za, &zm)?;
        let (ha, hm) = marginal_entropies(&j);
        let loss = inter_contrastive_value(&za, &zm, alpha)?;
        println!(
            "{name:<12}{:>10.4}{:>10.4}{:>10.4}{:>12.4}",
            mutual_information(&j),
            ha,
            hm,
            loss
        );
    }

    let one_hot = DenseMatrix::from_rows(&[[200.0, 0.0], [0.0, 200.0]]);
    let anchor = inter_contrastive_value(&one_hot, &one_hot, alpha)?;
    println!("diag(.5,.5): {anchor:.6} (-19 ln 2 = {:.6})", -19.0 * 2f64.ln());
    Ok(())
}
