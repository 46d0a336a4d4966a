//! Synthetic workloads shared by the benchmarks.

use fontpair::dataset::{sample_negatives, FontFeature};
use fontpair::{FeatureStore, LabeledPair, PairDataset, PairRecord, PairRole};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Workload {
    pub headers: FeatureStore,
    pub followers: FeatureStore,
    /// Headers and followers together, for pair scorers.
    pub all: FeatureStore,
    pub train: PairDataset,
    pub labeled: Vec<LabeledPair>,
}

fn vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `headers` header fonts each paired with a few of `followers` follower
/// fonts, all with `dim`-dimensional features.
pub fn workload(headers: usize, followers: usize, dim: usize, seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut hs, mut fs, mut all) = (FeatureStore::new(), FeatureStore::new(), FeatureStore::new());
    for i in 0..headers {
        let f = FontFeature::new(format!("h{i}"), vector(&mut rng, dim));
        all.insert(f.clone()).unwrap();
        hs.insert(f).unwrap();
    }
    for j in 0..followers {
        let f = FontFeature::new(format!("f{j}"), vector(&mut rng, dim));
        all.insert(f.clone()).unwrap();
        fs.insert(f).unwrap();
    }
    let mut records = Vec::new();
    for i in 0..headers {
        for _ in 0..rng.random_range(1..=4) {
            records.push(PairRecord::new(
                format!("h{i}"),
                format!("f{}", rng.random_range(0..followers)),
                rng.random_range(1..5),
            ));
        }
    }
    let train = PairDataset::new(PairRole::HeaderBody, records).unwrap();
    let labeled = sample_negatives(&train, seed).unwrap();
    Workload {
        headers: hs,
        followers: fs,
        all,
        train,
        labeled,
    }
}
