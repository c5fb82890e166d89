use rayon::prelude::*;
use spade::{
    DelaunayTriangulation, FloatTriangulation, HasPosition, HierarchyHintGenerator, Point2,
    Triangulation,
};

use super::{interval_weights, FieldValues, GridSpec, RelationField, SIGMA_MIN};
use crate::signals::max_abs_diff;

/// A moving object's last reported position in the local plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: String,
    pub position: [f64; 2],
    /// Report position standard deviation, meters.
    pub std: f64,
}

/// `I0(t)·e^-t`, polynomial fits from Abramowitz & Stegun 9.8.1–9.8.2.
fn bessel_i0e(t: f64) -> f64 {
    if t <= 3.75 {
        let y = (t / 3.75).powi(2);
        let i0 = 1.0
            + y * (3.5156229
                + y * (3.0899424
                    + y * (1.2067492 + y * (0.2659732 + y * (0.0360768 + y * 0.0045813)))));
        i0 * (-t).exp()
    } else {
        let y = 3.75 / t;
        let p = 0.39894228
            + y * (0.01328592
                + y * (0.00225319
                    + y * (-0.00157565
                        + y * (0.00916281
                            + y * (-0.02057706
                                + y * (0.02635537 + y * (-0.01647633 + y * 0.00392377)))))));
        p / t.sqrt()
    }
}

/// `I1(t)·e^-t`, A&S 9.8.3–9.8.4.
fn bessel_i1e(t: f64) -> f64 {
    if t <= 3.75 {
        let y = (t / 3.75).powi(2);
        let i1 = t
            * (0.5
                + y * (0.87890594
                    + y * (0.51498869
                        + y * (0.15084934
                            + y * (0.02658733 + y * (0.00301532 + y * 0.00032411))))));
        i1 * (-t).exp()
    } else {
        let y = 3.75 / t;
        let p = 0.39894228
            + y * (-0.03988024
                + y * (-0.00362018
                    + y * (0.00163801
                        + y * (-0.01031555
                            + y * (0.02282967
                                + y * (-0.02895312 + y * (0.01787654 - y * 0.00420059)))))));
        p / t.sqrt()
    }
}

/// Mean and standard deviation of `|x - e|` when `e` is the reported point
/// plus isotropic Gaussian noise of std `s` and `nu = |x - reported|`: the
/// Rice distribution.
pub fn rice_moments(nu: f64, s: f64) -> (f64, f64) {
    if !(s > 0.0) {
        return (nu, 0.0);
    }
    let t = nu * nu / (4.0 * s * s);
    let second = 2.0 * s * s + nu * nu;
    let mean = if t > 50.0 {
        // Far from the point the series is dominated by cancellation.
        nu + s * s / (2.0 * nu)
    } else {
        let laguerre = (1.0 + 2.0 * t) * bessel_i0e(t) + 2.0 * t * bessel_i1e(t);
        s * (std::f64::consts::PI / 2.0).sqrt() * laguerre
    };
    let var = if t > 50.0 {
        s * s - s.powi(4) / (4.0 * nu * nu)
    } else {
        second - mean * mean
    };
    (mean, var.max(0.0).sqrt())
}

/// Center, 8 points at `radius / 2` and 16 at `radius` around each entity.
pub fn support_points(entities: &[Entity], radius: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(entities.len() * 25);
    for e in entities {
        let [x, y] = e.position;
        out.push([x, y]);
        for (n, r) in [(8, radius / 2.0), (16, radius)] {
            for k in 0..n {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                out.push([x + r * a.cos(), y + r * a.sin()]);
            }
        }
    }
    out
}

type Tri = DelaunayTriangulation<Support, (), (), (), HierarchyHintGenerator<f64>>;

#[derive(Debug, Clone, Copy)]
struct Support {
    at: Point2<f64>,
    mu: f64,
    sigma: f64,
}

impl HasPosition for Support {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.at
    }
}

/// Cells whose interval weights moved, with their new weight vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistancePatch {
    pub cells: Vec<usize>,
    /// Cell-major, `cuts.len() + 1` per listed cell.
    pub weights: Vec<f64>,
}

impl DistancePatch {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Distance-to-nearest-entity field for one channel, maintained as entity
/// reports arrive.
#[derive(Debug, Clone)]
pub struct DynamicDistance {
    grid: GridSpec,
    cuts: Vec<f64>,
    radius: f64,
    epsilon: f64,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    /// Last emitted weights per cell; `None` until the first update.
    emitted: Option<Vec<f64>>,
}

impl DynamicDistance {
    /// `radius` defaults to three times the largest cut.
    pub fn new(grid: GridSpec, cuts: Vec<f64>, radius: Option<f64>, epsilon: f64) -> Self {
        let radius = radius.unwrap_or_else(|| {
            let top = cuts.iter().copied().fold(0.0, f64::max);
            if top > 0.0 {
                3.0 * top
            } else {
                grid.resolution().0.max(grid.resolution().1)
            }
        });
        let cells = grid.cells();
        DynamicDistance {
            grid,
            cuts,
            radius,
            epsilon,
            mu: vec![far(&grid); cells],
            sigma: vec![SIGMA_MIN; cells],
            emitted: None,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn field(&self, relation: &str, now: f64) -> RelationField {
        RelationField {
            relation: relation.to_string(),
            values: FieldValues::Density {
                mu: self.mu.clone(),
                sigma: self.sigma.clone(),
            },
            staleness: now,
        }
    }

    /// Recomputes μ/σ for the entity set and returns the cells whose weights
    /// moved by more than ε since they were last emitted. The first call
    /// emits every cell.
    pub fn update(&mut self, entities: &[Entity]) -> DistancePatch {
        let (mu, sigma) = sample_field(&self.grid, entities, self.radius);
        self.mu = mu;
        self.sigma = sigma;
        let arity = self.cuts.len() + 1;
        let fresh: Vec<f64> = self
            .mu
            .par_iter()
            .zip(&self.sigma)
            .flat_map_iter(|(&m, &s)| interval_weights(m, s, &self.cuts))
            .collect();
        let Some(emitted) = &mut self.emitted else {
            self.emitted = Some(fresh.clone());
            return DistancePatch {
                cells: (0..self.grid.cells()).collect(),
                weights: fresh,
            };
        };
        let mut patch = DistancePatch::default();
        for (cell, (new, old)) in fresh
            .chunks(arity)
            .zip(emitted.chunks_mut(arity))
            .enumerate()
        {
            if max_abs_diff(new, old) > self.epsilon {
                old.copy_from_slice(new);
                patch.cells.push(cell);
                patch.weights.extend_from_slice(new);
            }
        }
        patch
    }
}

/// Mean distance used when there is nothing to be near.
fn far(grid: &GridSpec) -> f64 {
    10.0 * grid.diagonal()
}

/// μ/σ of the distance to the nearest entity, exact at the support points
/// and interpolated to cell centers: barycentric inside the hull of the
/// support points, nearest support point outside it.
pub fn sample_field(grid: &GridSpec, entities: &[Entity], radius: f64) -> (Vec<f64>, Vec<f64>) {
    let entities: Vec<&Entity> = entities
        .iter()
        .filter(|e| e.position[0].is_finite() && e.position[1].is_finite())
        .collect();
    let cells = grid.cells();
    if entities.is_empty() {
        return (vec![far(grid); cells], vec![SIGMA_MIN; cells]);
    }
    let owned: Vec<Entity> = entities.iter().map(|&e| e.clone()).collect();
    let support: Vec<Support> = support_points(&owned, radius)
        .into_iter()
        .map(|p| {
            let (nu, s) = owned
                .iter()
                .map(|e| ((p[0] - e.position[0]).hypot(p[1] - e.position[1]), e.std))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("non-empty");
            let (mu, sigma) = rice_moments(nu, s);
            Support {
                at: Point2::new(p[0], p[1]),
                mu,
                sigma: sigma.max(SIGMA_MIN),
            }
        })
        .collect();
    // The hierarchy hint does not change on lookups, so where a query starts
    // its walk, and with it the rounding, is independent of thread timing.
    let tri: Tri = Tri::bulk_load(support).expect("finite support points");
    let values: Vec<(f64, f64)> = (0..cells)
        .into_par_iter()
        .map_init(
            || {
                (
                    tri.barycentric(),
                    Vec::<(spade::handles::FixedVertexHandle, f64)>::new(),
                )
            },
            |(bary, buf), cell| {
                let c = grid.cell_center(cell);
                let at = Point2::new(c[0], c[1]);
                bary.get_weights(at, buf);
                if buf.is_empty() {
                    let v = tri.nearest_neighbor(at).expect("non-empty triangulation");
                    return (v.data().mu, v.data().sigma);
                }
                let (mut mu, mut sigma) = (0.0f64, 0.0f64);
                for &(v, w) in buf.iter() {
                    let d = *tri.vertex(v).data();
                    mu += w * d.mu;
                    sigma += w * d.sigma;
                }
                (mu.max(0.0), sigma.max(SIGMA_MIN))
            },
        )
        .collect();
    values.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec {
            origin_lat: 40.7,
            origin_lon: -74.0,
            width_m: 1000.0,
            height_m: 1000.0,
            cols: 10,
            rows: 10,
        }
    }

    fn at(id: &str, x: f64, y: f64, std: f64) -> Entity {
        Entity {
            id: id.into(),
            position: [x, y],
            std,
        }
    }

    #[test]
    fn rice_limits() {
        assert_eq!(rice_moments(7.0, 0.0), (7.0, 0.0));
        // At the reported point the distance is Rayleigh.
        let (m, s) = rice_moments(0.0, 2.0);
        assert!((m - 2.0 * (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-6);
        assert!((s * s - (4.0 - std::f64::consts::PI) / 2.0 * 4.0).abs() < 1e-5);
        let (m, s) = rice_moments(1000.0, 10.0);
        assert!((m - 1000.05).abs() < 1e-3);
        assert!((s - 10.0).abs() < 0.01);
        // Both branches agree where they meet.
        let below = rice_moments(14.1, 1.0).0;
        let above = rice_moments(14.2, 1.0).0;
        assert!((above - below - 0.1).abs() < 1e-3);
    }

    #[test]
    fn support_layout() {
        let pts = support_points(&[at("a", 1.0, 2.0, 0.0)], 10.0);
        assert_eq!(pts.len(), 25);
        assert_eq!(pts[0], [1.0, 2.0]);
        assert!((pts[1][0] - 6.0).abs() < 1e-12);
        assert!((pts[9][0] - 11.0).abs() < 1e-12);
    }

    #[test]
    fn entity_on_a_cell_center() {
        let g = grid();
        let c = g.cell_center(44);
        let (mu, _) = sample_field(&g, &[at("a", c[0], c[1], 0.0)], 100.0);
        assert_eq!(mu[44], 0.0);
        assert!(mu[0] > 0.0);
    }

    #[test]
    fn no_entities_is_far_away() {
        let g = grid();
        let (mu, sigma) = sample_field(&g, &[], 50.0);
        assert!(mu.iter().all(|&m| m == 10.0 * g.diagonal()));
        assert!(sigma.iter().all(|&s| s == SIGMA_MIN));
    }

    #[test]
    fn removing_an_entity_changes_cells() {
        let mut d = DynamicDistance::new(grid(), vec![15.0, 35.0], None, 0.003);
        assert_eq!(d.radius(), 105.0);
        let a = [at("a", 50.0, 50.0, 5.0)];
        assert_eq!(d.update(&a).cells.len(), 100);
        assert!(d.update(&a).is_empty());
        let gone = d.update(&[]);
        assert!(!gone.is_empty());
        assert_eq!(gone.weights.len(), gone.cells.len() * 3);
        assert!(d.update(&[]).is_empty());
    }
}
