//! Query vocabulary with Zipfian popularity and per-query result lists.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::Zipf;

/// Result-click distributions; entropies 0, 0.61, 1.5, 3 and 3.58 bits.
pub const URL_CLASSES: usize = 5;

pub fn class_probs(class: usize) -> Vec<f64> {
    match class {
        0 => vec![1.0],
        1 => vec![0.85, 0.15],
        2 => vec![0.5, 0.25, 0.25],
        3 => vec![0.125; 8],
        _ => vec![1.0 / 12.0; 12],
    }
}

/// Entropy level of a class under the default `{0}, (0,1], (1,2], (2,inf)` coding.
pub fn class_entropy_level(class: usize) -> usize {
    match class {
        0 => 0,
        1 => 1,
        2 => 2,
        _ => 3,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub text: String,
    pub class: usize,
    pub urls: Vec<String>,
    url_dist: WeightedIndex<f64>,
    /// Added to the rank to give the on-page position.
    pub position_offset: u32,
}

impl Query {
    /// Clicked result as `(url index, position)`.
    pub fn click<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, u32) {
        let i = self.url_dist.sample(rng);
        (i, i as u32 + 1 + self.position_offset)
    }
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub queries: Vec<Query>,
    zipf: Zipf<f64>,
}

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
/// Rough English letter frequencies, per mille.
const LETTER_WEIGHTS: [f64; 26] = [
    82.0, 15.0, 28.0, 43.0, 127.0, 22.0, 20.0, 61.0, 70.0, 2.0, 8.0, 40.0, 24.0, 67.0, 75.0, 19.0, 1.0, 60.0, 63.0,
    91.0, 28.0, 10.0, 24.0, 2.0, 20.0, 1.0,
];

impl Vocabulary {
    pub fn generate<R: Rng + ?Sized>(size: usize, exponent: f64, rng: &mut R) -> Self {
        let letters = WeightedIndex::new(LETTER_WEIGHTS).expect("positive weights");
        let classes = WeightedIndex::new([0.3, 0.2, 0.2, 0.15, 0.15]).expect("positive weights");
        let mut seen = std::collections::BTreeSet::new();
        let mut queries = Vec::with_capacity(size);
        while queries.len() < size {
            let words = rng.random_range(1..=3);
            let text = (0..words)
                .map(|_| {
                    let len = rng.random_range(3..=9);
                    (0..len).map(|_| LETTERS[letters.sample(rng)] as char).collect::<String>()
                })
                .collect::<Vec<_>>()
                .join(" ");
            if !seen.insert(text.clone()) {
                continue;
            }
            let class = classes.sample(rng);
            let probs = class_probs(class);
            let id = queries.len();
            let urls = (0..probs.len()).map(|j| format!("https://site{id}.example/{j}")).collect();
            let position_offset = [0, 0, 0, 1, 2][rng.random_range(0..5)];
            queries.push(Query {
                text,
                class,
                urls,
                url_dist: WeightedIndex::new(probs).expect("positive weights"),
                position_offset,
            });
        }
        let zipf = Zipf::new(size as f64, exponent.max(1e-9)).expect("valid Zipf parameters");
        Vocabulary { queries, zipf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &Query {
        let rank = self.zipf.sample(rng) as usize;
        &self.queries[rank.clamp(1, self.queries.len()) - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::entropy_bits;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn class_entropies() {
        let h: Vec<f64> = (0..URL_CLASSES)
            .map(|c| {
                let p = class_probs(c);
                -p.iter().map(|x| x * x.log2()).sum::<f64>()
            })
            .collect();
        assert_eq!(h[0], 0.0);
        assert!((h[1] - 0.6098).abs() < 1e-3);
        assert!((h[2] - 1.5).abs() < 1e-12);
        assert!((h[3] - 3.0).abs() < 1e-12);
        assert!((h[4] - 12f64.log2()).abs() < 1e-12);
        // Exact counts reproduce the class entropy.
        assert!((entropy_bits([85, 15]) - h[1]).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_distinct() {
        let a = Vocabulary::generate(50, 1.0, &mut ChaCha8Rng::seed_from_u64(3));
        let b = Vocabulary::generate(50, 1.0, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a.queries, b.queries);
        let texts: std::collections::BTreeSet<_> = a.queries.iter().map(|q| &q.text).collect();
        assert_eq!(texts.len(), 50);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let top = (0..2000).filter(|_| a.sample(&mut rng).text == a.queries[0].text).count();
        assert!(top > 200, "most popular query drawn {top} times");
    }
}
