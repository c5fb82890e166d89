use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{Feature, FeatureSet, FieldValues, GridSpec, RelationField, StarmapError, SIGMA_MIN};

/// Monte Carlo settings for static relations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOptions {
    pub samples: usize,
    /// Standard deviation of the per-feature translation noise, meters.
    pub sigma_map: f64,
    pub seed: u64,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            samples: 64,
            sigma_map: 5.0,
            seed: 0,
        }
    }
}

/// `offsets[s][f]`: the translation of feature `f` in sample `s`.
fn draw_offsets(features: usize, opts: &FieldOptions) -> Vec<Vec<[f64; 2]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sigma = opts.sigma_map.max(0.0);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    (0..opts.samples)
        .map(|_| {
            (0..features)
                .map(|_| {
                    if sigma == 0.0 {
                        [0.0, 0.0]
                    } else {
                        [normal.sample(&mut rng), normal.sample(&mut rng)]
                    }
                })
                .collect()
        })
        .collect()
}

/// Fraction of noisy instantiations of `class` that cover each cell center.
/// A class without features gives zeros.
pub fn occupancy_field(
    grid: &GridSpec,
    features: &FeatureSet,
    class: &str,
    opts: &FieldOptions,
) -> Result<RelationField, StarmapError> {
    grid.validate()?;
    assert!(opts.samples >= 1, "occupancy needs at least one sample");
    let fs = features.class(class);
    let relation = format!("over({class})");
    if fs.is_empty() {
        log::warn!("no features of class {class}; occupancy is zero everywhere");
        return Ok(RelationField {
            relation,
            values: FieldValues::Probability(vec![0.0; grid.cells()]),
            staleness: 0.0,
        });
    }
    let offsets = draw_offsets(fs.len(), opts);
    let p = (0..grid.cells())
        .into_par_iter()
        .map(|cell| {
            let c = grid.cell_center(cell);
            let hits = offsets
                .iter()
                .filter(|off| {
                    fs.iter()
                        .zip(off.iter())
                        .any(|(f, o)| f.covers([c[0] - o[0], c[1] - o[1]]))
                })
                .count();
            hits as f64 / opts.samples as f64
        })
        .collect();
    Ok(RelationField {
        relation,
        values: FieldValues::Probability(p),
        staleness: 0.0,
    })
}

fn bbox_distance(f: &Feature, p: [f64; 2]) -> f64 {
    let b = f.bbox();
    let dx = (b[0] - p[0]).max(p[0] - b[2]).max(0.0);
    let dy = (b[1] - p[1]).max(p[1] - b[3]).max(0.0);
    dx.hypot(dy)
}

fn min_distance(fs: &[Feature], off: &[[f64; 2]], c: [f64; 2]) -> f64 {
    let mut best = f64::INFINITY;
    for (f, o) in fs.iter().zip(off) {
        let p = [c[0] - o[0], c[1] - o[1]];
        if bbox_distance(f, p) < best {
            best = best.min(f.distance(p));
        }
    }
    best
}

/// Mean and sample standard deviation of the distance from each cell center
/// to the nearest noisy feature of `class`, with σ floored at [`SIGMA_MIN`].
pub fn distance_field(
    grid: &GridSpec,
    features: &FeatureSet,
    class: &str,
    opts: &FieldOptions,
) -> Result<RelationField, StarmapError> {
    grid.validate()?;
    assert!(
        opts.samples >= 2,
        "distance statistics need at least two samples"
    );
    let fs = features.class(class);
    if fs.is_empty() {
        return Err(StarmapError::EmptyFeatureClass(class.to_string()));
    }
    let offsets = draw_offsets(fs.len(), opts);
    let stats: Vec<(f64, f64)> = (0..grid.cells())
        .into_par_iter()
        .map(|cell| {
            let c = grid.cell_center(cell);
            // Welford, in sample order.
            let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
            for off in &offsets {
                let d = min_distance(fs, off, c);
                n += 1.0;
                let delta = d - mean;
                mean += delta / n;
                m2 += delta * (d - mean);
            }
            let std = (m2 / (n - 1.0)).max(0.0).sqrt();
            (mean, std.max(SIGMA_MIN))
        })
        .collect();
    let (mu, sigma) = stats.into_iter().unzip();
    Ok(RelationField {
        relation: format!("distance({class})"),
        values: FieldValues::Density { mu, sigma },
        staleness: 0.0,
    })
}
