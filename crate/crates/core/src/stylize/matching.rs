//! Nearest-neighbour guidance between content and reference features.

use rayon::prelude::*;

use super::features::FeatureMap;
use crate::error::{invalid, Result};

const NORM_FLOOR: f64 = 1e-8;

/// For each content location (row-major), the matched reference location.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GuidanceIndexMap {
    pub width: usize,
    pub height: usize,
    pub ref_width: usize,
    pub ref_height: usize,
    /// `(x*, y*)` per content location.
    pub targets: Vec<(usize, usize)>,
}

impl GuidanceIndexMap {
    pub fn identity(width: usize, height: usize) -> Self {
        let targets = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .collect();
        Self {
            width,
            height,
            ref_width: width,
            ref_height: height,
            targets,
        }
    }

    pub fn target(&self, x: usize, y: usize) -> (usize, usize) {
        self.targets[y * self.width + x]
    }

    /// Re-expresses the map on other grids by nearest-neighbour scaling of
    /// both the query and the target coordinates.
    pub fn resample(
        &self,
        width: usize,
        height: usize,
        ref_width: usize,
        ref_height: usize,
    ) -> Self {
        let scale = |v: usize, from: usize, to: usize| ((v * from) / to).min(from - 1);
        let mut targets = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (tx, ty) =
                    self.target(scale(x, self.width, width), scale(y, self.height, height));
                targets.push((
                    scale(tx, ref_width, self.ref_width),
                    scale(ty, ref_height, self.ref_height),
                ));
            }
        }
        Self {
            width,
            height,
            ref_width,
            ref_height,
            targets,
        }
    }
}

fn unit_vectors(f: &FeatureMap) -> Vec<Vec<f64>> {
    (0..f.locations())
        .map(|loc| {
            let v = f.vector(loc);
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(NORM_FLOOR);
            v.into_iter().map(|a| a / n).collect()
        })
        .collect()
}

/// Cosine similarity with the norm floor applied to both vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// For every content location, the reference location of minimum cosine
/// distance; ties go to the smallest row-major reference index.
pub fn match_nearest(content: &FeatureMap, reference: &FeatureMap) -> Result<GuidanceIndexMap> {
    if content.channels != reference.channels {
        return invalid(format!(
            "feature channel mismatch: {} vs {}",
            content.channels, reference.channels
        ));
    }
    if reference.locations() == 0 {
        return invalid("empty reference feature map");
    }
    let cu = unit_vectors(content);
    let ru = unit_vectors(reference);
    let targets = cu
        .par_iter()
        .map(|q| {
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (j, r) in ru.iter().enumerate() {
                let s: f64 = q.iter().zip(r).map(|(a, b)| a * b).sum();
                if s > best.0 {
                    best = (s, j);
                }
            }
            (best.1 % reference.width, best.1 / reference.width)
        })
        .collect();
    Ok(GuidanceIndexMap {
        width: content.width,
        height: content.height,
        ref_width: reference.width,
        ref_height: reference.height,
        targets,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::stylize::features::FeatureSource;
    use crate::synth::seeded;

    fn random_map(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> FeatureMap {
        FeatureMap {
            channels: c,
            height: h,
            width: w,
            data: (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            source: FeatureSource::Builtin,
        }
    }

    #[test]
    fn self_match_is_identity() {
        let f = random_map(&mut seeded(41), 12, 5, 7);
        assert_eq!(
            match_nearest(&f, &f).unwrap(),
            GuidanceIndexMap::identity(7, 5)
        );
    }

    #[test]
    fn unique_equal_vector_wins() {
        let mut r = FeatureMap {
            channels: 4,
            height: 2,
            width: 3,
            data: vec![0.0; 24],
            source: FeatureSource::Builtin,
        };
        // Location 4 = (1, 1) equals the query; the rest are orthogonal to it.
        for loc in 0..6 {
            let c = if loc == 4 { 0 } else { 1 + loc % 3 };
            r.data[c * 6 + loc] = 1.0;
        }
        let q = FeatureMap {
            channels: 4,
            height: 1,
            width: 1,
            data: vec![1.0, 0.0, 0.0, 0.0],
            source: FeatureSource::Builtin,
        };
        assert_eq!(match_nearest(&q, &r).unwrap().targets, vec![(1, 1)]);
    }

    #[test]
    fn ties_take_smallest_index() {
        let r = FeatureMap {
            channels: 2,
            height: 2,
            width: 2,
            data: vec![1.0; 8],
            source: FeatureSource::Builtin,
        };
        let q = FeatureMap {
            channels: 2,
            height: 1,
            width: 1,
            data: vec![0.3, 0.3],
            source: FeatureSource::Builtin,
        };
        assert_eq!(match_nearest(&q, &r).unwrap().targets, vec![(0, 0)]);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = seeded(42);
        for _ in 0..5 {
            let c = random_map(&mut rng, 12, 6, 6);
            let r = random_map(&mut rng, 12, 6, 6);
            let got = match_nearest(&c, &r).unwrap();
            for y in 0..6 {
                for x in 0..6 {
                    let q = c.vector(y * 6 + x);
                    let mut best = (f64::INFINITY, 0);
                    for j in 0..36 {
                        let d = 1.0 - cosine(&q, &r.vector(j));
                        if d < best.0 - 1e-15 {
                            best = (d, j);
                        }
                    }
                    assert_eq!(got.target(x, y), (best.1 % 6, best.1 / 6));
                }
            }
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let mut rng = seeded(43);
        assert!(match_nearest(
            &random_map(&mut rng, 3, 2, 2),
            &random_map(&mut rng, 4, 2, 2)
        )
        .is_err());
    }

    #[test]
    fn resample_scales_queries_and_targets() {
        let g = GuidanceIndexMap {
            width: 2,
            height: 1,
            ref_width: 2,
            ref_height: 1,
            targets: vec![(1, 0), (0, 0)],
        };
        let r = g.resample(4, 2, 4, 2);
        assert_eq!(r.target(0, 0), (2, 0));
        assert_eq!(r.target(1, 1), (2, 0));
        assert_eq!(r.target(3, 0), (0, 0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prop_invariant_to_positive_rescaling(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let c = random_map(&mut rng, 12, 4, 5);
            let r = random_map(&mut rng, 12, 5, 4);
            let base = match_nearest(&c, &r).unwrap();
            let mut c2 = c.clone();
            let mut r2 = r.clone();
            for loc in 0..c.locations() {
                let s = rng.gen_range(0.1..10.0);
                for ch in 0..12 {
                    c2.data[ch * c.locations() + loc] *= s;
                }
            }
            for loc in 0..r.locations() {
                let s = rng.gen_range(0.1..10.0);
                for ch in 0..12 {
                    r2.data[ch * r.locations() + loc] *= s;
                }
            }
            prop_assert_eq!(match_nearest(&c2, &r2).unwrap(), base);
        }
    }
}
