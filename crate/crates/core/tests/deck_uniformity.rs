use statrs::distribution::{ChiSquared, ContinuousCDF};
use themeloom_core::fixtures;

const DRAWS: u64 = 10_000;

fn frequencies() -> Vec<usize> {
    let deck = fixtures::deck();
    let mut freq = vec![0usize; deck.len()];
    for seed in 0..DRAWS {
        freq[deck.draw(seed, None).unwrap().id as usize - 1] += 1;
    }
    freq
}

#[test]
fn chi_square_goodness_of_fit() {
    let freq = frequencies();
    let expected = DRAWS as f64 / freq.len() as f64;
    let stat: f64 = freq.iter().map(|&f| (f as f64 - expected).powi(2) / expected).sum();
    let dof = (freq.len() - 1) as f64;
    let critical = ChiSquared::new(dof).unwrap().inverse_cdf(0.999);
    println!("chi2 {stat:.2} on {dof} dof, critical {critical:.2}");
    assert!(stat < critical);
}

// A fair sampler misses this band on roughly 38% of seed ranges; seeds 0..10000
// are one such range (one card at 208 against a ceiling of 206.9).
#[test]
#[ignore = "per-card band is not reliably attainable by an unbiased sampler"]
fn every_card_within_twenty_percent() {
    let freq = frequencies();
    let expected = DRAWS as f64 / freq.len() as f64;
    for (i, &f) in freq.iter().enumerate() {
        assert!((f as f64 - expected).abs() <= 0.2 * expected, "card {} drawn {f} times", i + 1);
    }
}
