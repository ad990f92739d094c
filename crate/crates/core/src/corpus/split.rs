use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, MemeSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const fn new(train: f64, validation: f64, test: f64) -> Self {
        Self {
            train,
            validation,
            test,
        }
    }

    fn validate(&self) -> Result<[f64; 3], CorpusError> {
        let r = [self.train, self.validation, self.test];
        let sum: f64 = r.iter().sum();
        if r.iter().any(|x| !x.is_finite() || *x <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadRatios((r[0], r[1], r[2])));
        }
        Ok(r)
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::new(0.8, 0.1, 0.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<MemeSample>,
    pub validation: Vec<MemeSample>,
    pub test: Vec<MemeSample>,
    pub seed: u64,
}

/// Partition sizes by largest remainder: floor every quota, then hand the
/// leftover items to the largest fractional parts (earlier partition wins ties).
pub(crate) fn partition_sizes(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| r * total as f64);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Seeded shuffle, then contiguous train/validation/test cut.
pub fn split_corpus(samples: &[MemeSample], ratios: SplitRatios, seed: u64) -> Result<CorpusSplit, CorpusError> {
    let r = ratios.validate()?;
    let mut shuffled = samples.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let [n_train, n_val, _] = partition_sizes(shuffled.len(), r);
    let test = shuffled.split_off(n_train + n_val);
    let validation = shuffled.split_off(n_train);
    Ok(CorpusSplit {
        train: shuffled,
        validation,
        test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TemplateId;
    use proptest::prelude::*;

    fn samples(n: usize) -> Vec<MemeSample> {
        (0..n)
            .map(|i| MemeSample {
                template_id: TemplateId(i % 3),
                caption: format!("caption {i}"),
            })
            .collect()
    }

    #[test]
    fn ten_samples_eighty_ten_ten() {
        let split = split_corpus(&samples(10), SplitRatios::default(), 7).unwrap();
        assert_eq!((split.train.len(), split.validation.len(), split.test.len()), (8, 1, 1));
    }

    #[test]
    fn same_seed_same_split() {
        let a = split_corpus(&samples(50), SplitRatios::default(), 7).unwrap();
        let b = split_corpus(&samples(50), SplitRatios::default(), 7).unwrap();
        assert_eq!(a, b);
        let c = split_corpus(&samples(50), SplitRatios::default(), 8).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn three_way_rounding_on_three_items() {
        // quotas 1.02 / 0.99 / 0.99 -> floors 1,0,0 -> two leftovers to the .99 parts
        assert_eq!(partition_sizes(3, [0.34, 0.33, 0.33]), [1, 1, 1]);
        let split = split_corpus(&samples(3), SplitRatios::new(0.34, 0.33, 0.33), 1).unwrap();
        assert_eq!((split.train.len(), split.validation.len(), split.test.len()), (1, 1, 1));
    }

    #[test]
    fn bad_ratios_rejected() {
        for r in [
            SplitRatios::new(0.8, 0.1, 0.2),
            SplitRatios::new(1.0, 0.0, 0.0),
            SplitRatios::new(-0.1, 0.6, 0.5),
            SplitRatios::new(f64::NAN, 0.5, 0.5),
        ] {
            assert!(matches!(
                split_corpus(&samples(4), r, 0),
                Err(CorpusError::BadRatios(_))
            ));
        }
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 0usize..200, seed in any::<u64>(), a in 1u32..50, b in 1u32..50, c in 1u32..50) {
            let total = (a + b + c) as f64;
            let ratios = SplitRatios::new(a as f64 / total, b as f64 / total, 1.0 - (a + b) as f64 / total);
            let input = samples(n);
            let split = split_corpus(&input, ratios, seed).unwrap();
            let sizes = [split.train.len(), split.validation.len(), split.test.len()];
            let r = [ratios.train, ratios.validation, ratios.test];
            for i in 0..3 {
                prop_assert!((sizes[i] as f64 - r[i] * n as f64).abs() <= 1.0);
            }
            let mut all: Vec<_> = split.train.iter().chain(&split.validation).chain(&split.test).cloned().collect();
            let mut expected = input.clone();
            all.sort_by(|x, y| x.caption.cmp(&y.caption));
            expected.sort_by(|x, y| x.caption.cmp(&y.caption));
            prop_assert_eq!(all, expected);
        }
    }
}
