#![allow(dead_code)]

use fontpair::dataset::{FeatureStore, FontFeature, Label, LabeledPair, PairDataset, PairRecord, PairRole};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform on [-√3, √3]: zero mean, unit variance.
pub fn unit_variance(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let s = 3f64.sqrt();
    (0..dim).map(|_| rng.random_range(-s..s)).collect()
}

pub struct Planted {
    pub store: FeatureStore,
    pub train: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
    pub rule: DMatrix<f64>,
}

/// Pairs labeled by the sign of `xᵀ K y` for a hidden antisymmetric `K`,
/// with pairs too close to the boundary rejected. Every pair uses its own
/// two fonts.
pub fn planted(dim: usize, per_class_train: usize, per_class_test: usize, seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let rule = &b - b.transpose();
    let margin = 0.1 * rule.norm();
    let mut store = FeatureStore::new();
    let draw = |per_class: usize, tag: &str, rng: &mut ChaCha8Rng, store: &mut FeatureStore| {
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        let mut i = 0;
        while pos.len() < per_class || neg.len() < per_class {
            let x = unit_variance(rng, dim);
            let y = unit_variance(rng, dim);
            let s = DVector::from_column_slice(&x).dot(&(&rule * DVector::from_column_slice(&y)));
            let label = if s > margin {
                Label::Positive
            } else if s < -margin {
                Label::Negative
            } else {
                continue;
            };
            let bucket = if label == Label::Positive { &mut pos } else { &mut neg };
            if bucket.len() >= per_class {
                continue;
            }
            let (h, f) = (format!("{tag}h{i}"), format!("{tag}f{i}"));
            store.insert(FontFeature::new(h.clone(), x)).unwrap();
            store.insert(FontFeature::new(f.clone(), y)).unwrap();
            bucket.push(LabeledPair::new(h, f, label, 1));
            i += 1;
        }
        pos.extend(neg);
        pos
    };
    let train = draw(per_class_train, "tr", &mut rng, &mut store);
    let test = draw(per_class_test, "te", &mut rng, &mut store);
    Planted { store, train, test, rule }
}

/// Random pair data for ranking: `headers` header fonts, `followers`
/// follower fonts, every header paired with a few followers.
pub struct Toy {
    pub headers: FeatureStore,
    pub followers: FeatureStore,
    pub pairs: PairDataset,
}

pub fn toy(headers: usize, followers: usize, dim: usize, seed: u64) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hs = FeatureStore::new();
    let mut fs = FeatureStore::new();
    for i in 0..headers {
        hs.insert(FontFeature::new(format!("H{i:02}"), unit_variance(&mut rng, dim))).unwrap();
    }
    for j in 0..followers {
        fs.insert(FontFeature::new(format!("F{j:02}"), unit_variance(&mut rng, dim))).unwrap();
    }
    let mut records = Vec::new();
    for i in 0..headers {
        let k = rng.random_range(1..=3.min(followers));
        for _ in 0..k {
            let j = rng.random_range(0..followers);
            records.push(PairRecord::new(format!("H{i:02}"), format!("F{j:02}"), rng.random_range(1..4)));
        }
    }
    Toy {
        headers: hs,
        followers: fs,
        pairs: PairDataset::new(PairRole::HeaderBody, records).unwrap(),
    }
}
