use std::collections::BTreeMap;
use std::path::Path;

use geojson::{FeatureCollection, GeometryValue};

use super::{GridSpec, StarmapError};

/// Planar geometry in local meters.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point([f64; 2]),
    Line(Vec<[f64; 2]>),
    /// Exterior ring first, then holes. Rings are closed.
    Polygon(Vec<Vec<[f64; 2]>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub class: String,
    pub geometry: Geometry,
    bbox: [f64; 4],
}

impl Feature {
    pub fn new(class: impl Into<String>, geometry: Geometry) -> Result<Self, StarmapError> {
        let geometry = clean(geometry)?;
        let bbox = bounds(&geometry);
        Ok(Feature {
            class: class.into(),
            geometry,
            bbox,
        })
    }

    /// `[min_e, min_n, max_e, max_n]`.
    pub fn bbox(&self) -> [f64; 4] {
        self.bbox
    }

    /// Point-in-polygon by even-odd crossing; holes are excluded. Points and
    /// lines cover nothing.
    pub fn covers(&self, p: [f64; 2]) -> bool {
        let b = self.bbox;
        if p[0] < b[0] || p[0] > b[2] || p[1] < b[1] || p[1] > b[3] {
            return false;
        }
        match &self.geometry {
            Geometry::Polygon(rings) => rings.iter().filter(|r| crosses_odd(r, p)).count() % 2 == 1,
            _ => false,
        }
    }

    /// Euclidean distance from `p` to the geometry; zero inside polygons.
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        match &self.geometry {
            Geometry::Point(q) => (p[0] - q[0]).hypot(p[1] - q[1]),
            Geometry::Line(pts) => polyline_distance(pts, p),
            Geometry::Polygon(rings) => {
                if self.covers(p) {
                    0.0
                } else {
                    rings
                        .iter()
                        .map(|r| polyline_distance(r, p))
                        .fold(f64::INFINITY, f64::min)
                }
            }
        }
    }

    /// Same feature moved by `offset`, for translation noise.
    pub fn translated(&self, offset: [f64; 2]) -> Feature {
        let mv = |q: &[f64; 2]| [q[0] + offset[0], q[1] + offset[1]];
        let geometry = match &self.geometry {
            Geometry::Point(q) => Geometry::Point(mv(q)),
            Geometry::Line(pts) => Geometry::Line(pts.iter().map(mv).collect()),
            Geometry::Polygon(rings) => {
                Geometry::Polygon(rings.iter().map(|r| r.iter().map(mv).collect()).collect())
            }
        };
        let b = self.bbox;
        Feature {
            class: self.class.clone(),
            geometry,
            bbox: [
                b[0] + offset[0],
                b[1] + offset[1],
                b[2] + offset[0],
                b[3] + offset[1],
            ],
        }
    }
}

fn clean(geometry: Geometry) -> Result<Geometry, StarmapError> {
    let finite = |q: &[f64; 2]| q[0].is_finite() && q[1].is_finite();
    match geometry {
        Geometry::Point(q) if finite(&q) => Ok(Geometry::Point(q)),
        Geometry::Line(pts) if !pts.is_empty() && pts.iter().all(finite) => Ok(Geometry::Line(pts)),
        Geometry::Polygon(rings) => {
            let mut out = Vec::with_capacity(rings.len());
            for mut ring in rings {
                if !ring.iter().all(finite) {
                    return Err(StarmapError::InvalidFeature("non-finite coordinate".into()));
                }
                if ring.first() != ring.last() {
                    ring.push(ring[0]);
                }
                if ring.len() < 4 {
                    return Err(StarmapError::InvalidFeature(
                        "ring with fewer than three vertices".into(),
                    ));
                }
                out.push(ring);
            }
            if out.is_empty() {
                return Err(StarmapError::InvalidFeature("polygon without rings".into()));
            }
            Ok(Geometry::Polygon(out))
        }
        _ => Err(StarmapError::InvalidFeature(
            "empty or non-finite geometry".into(),
        )),
    }
}

fn bounds(g: &Geometry) -> [f64; 4] {
    let mut b = [
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    ];
    let mut add = |q: &[f64; 2]| {
        b[0] = b[0].min(q[0]);
        b[1] = b[1].min(q[1]);
        b[2] = b[2].max(q[0]);
        b[3] = b[3].max(q[1]);
    };
    match g {
        Geometry::Point(q) => add(q),
        Geometry::Line(pts) => pts.iter().for_each(add),
        Geometry::Polygon(rings) => rings.iter().flatten().for_each(add),
    }
    b
}

fn crosses_odd(ring: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

fn polyline_distance(pts: &[[f64; 2]], p: [f64; 2]) -> f64 {
    if pts.len() == 1 {
        return (p[0] - pts[0][0]).hypot(p[1] - pts[0][1]);
    }
    pts.windows(2)
        .map(|w| segment_distance(w[0], w[1], p))
        .fold(f64::INFINITY, f64::min)
}

/// Map features grouped by class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    classes: BTreeMap<String, Vec<Feature>>,
}

impl FeatureSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, feature: Feature) {
        self.classes
            .entry(feature.class.clone())
            .or_default()
            .push(feature);
    }

    pub fn class(&self, class: &str) -> &[Feature] {
        self.classes.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reads a GeoJSON FeatureCollection in WGS84 and projects it onto the
    /// grid's plane. The class comes from each feature's `class` property;
    /// multi-part geometries become one feature per part.
    pub fn from_geojson(text: &str, grid: &GridSpec) -> Result<Self, StarmapError> {
        let collection: FeatureCollection = text.parse()?;
        let mut set = FeatureSet::new();
        for (i, f) in collection.features.iter().enumerate() {
            let class = f
                .property("class")
                .and_then(|v| v.as_str())
                .ok_or_else(|| {
                    StarmapError::InvalidFeature(format!("feature {i} lacks a class"))
                })?;
            let Some(geometry) = &f.geometry else {
                log::warn!("feature {i} ({class}) has no geometry, skipped");
                continue;
            };
            let mut parts = Vec::new();
            flatten(&geometry.value, grid, &mut parts)?;
            for g in parts {
                set.push(Feature::new(class, g)?);
            }
        }
        Ok(set)
    }

    pub fn load(path: &Path, grid: &GridSpec) -> Result<Self, StarmapError> {
        Self::from_geojson(&std::fs::read_to_string(path)?, grid)
    }
}

fn flatten(
    value: &GeometryValue,
    grid: &GridSpec,
    out: &mut Vec<Geometry>,
) -> Result<(), StarmapError> {
    let pt = |p: &geojson::Position| -> Result<[f64; 2], StarmapError> {
        let s = p.as_slice();
        if s.len() < 2 {
            return Err(StarmapError::InvalidFeature(
                "position with fewer than two coordinates".into(),
            ));
        }
        Ok(grid.project(s[1], s[0]))
    };
    let line = |ps: &[geojson::Position]| ps.iter().map(pt).collect::<Result<Vec<_>, _>>();
    let poly = |rings: &[Vec<geojson::Position>]| {
        rings.iter().map(|r| line(r)).collect::<Result<Vec<_>, _>>()
    };
    match value {
        GeometryValue::Point { coordinates } => out.push(Geometry::Point(pt(coordinates)?)),
        GeometryValue::MultiPoint { coordinates } => {
            for p in coordinates {
                out.push(Geometry::Point(pt(p)?));
            }
        }
        GeometryValue::LineString { coordinates } => out.push(Geometry::Line(line(coordinates)?)),
        GeometryValue::MultiLineString { coordinates } => {
            for l in coordinates {
                out.push(Geometry::Line(line(l)?));
            }
        }
        GeometryValue::Polygon { coordinates } => out.push(Geometry::Polygon(poly(coordinates)?)),
        GeometryValue::MultiPolygon { coordinates } => {
            for p in coordinates {
                out.push(Geometry::Polygon(poly(p)?));
            }
        }
        GeometryValue::GeometryCollection { geometries } => {
            for g in geometries {
                flatten(&g.value, grid, out)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, side: f64) -> Vec<[f64; 2]> {
        vec![
            [x0, y0],
            [x0 + side, y0],
            [x0 + side, y0 + side],
            [x0, y0 + side],
        ]
    }

    #[test]
    fn open_rings_are_closed() {
        let f = Feature::new("park", Geometry::Polygon(vec![square(0.0, 0.0, 10.0)])).unwrap();
        let Geometry::Polygon(rings) = &f.geometry else {
            unreachable!()
        };
        assert_eq!(rings[0].len(), 5);
        assert_eq!(f.bbox(), [0.0, 0.0, 10.0, 10.0]);
    }

    #[test]
    fn holes_are_outside() {
        let f = Feature::new(
            "park",
            Geometry::Polygon(vec![square(0.0, 0.0, 10.0), square(4.0, 4.0, 2.0)]),
        )
        .unwrap();
        assert!(f.covers([1.0, 1.0]));
        assert!(!f.covers([5.0, 5.0]));
        assert!(!f.covers([11.0, 5.0]));
        assert_eq!(f.distance([5.0, 5.0]), 1.0);
        assert_eq!(f.distance([1.0, 1.0]), 0.0);
        assert_eq!(f.distance([13.0, 14.0]), 5.0);
    }

    #[test]
    fn line_and_point_distance() {
        let l = Feature::new("primary", Geometry::Line(vec![[0.0, 0.0], [10.0, 0.0]])).unwrap();
        assert_eq!(l.distance([5.0, 3.0]), 3.0);
        assert_eq!(l.distance([-3.0, 4.0]), 5.0);
        assert!(!l.covers([5.0, 0.0]));
        let p = Feature::new("hospital", Geometry::Point([1.0, 1.0])).unwrap();
        assert_eq!(p.translated([2.0, 3.0]).distance([3.0, 4.0]), 0.0);
    }

    #[test]
    fn degenerate_rings_are_rejected() {
        assert!(Feature::new("x", Geometry::Polygon(vec![vec![[0.0, 0.0], [1.0, 0.0]]])).is_err());
        assert!(Feature::new("x", Geometry::Line(vec![])).is_err());
        assert!(Feature::new("x", Geometry::Point([f64::NAN, 0.0])).is_err());
    }

    #[test]
    fn geojson_multi_parts_are_flattened() {
        let grid = GridSpec {
            origin_lat: 40.7,
            origin_lon: -74.0,
            width_m: 1000.0,
            height_m: 1000.0,
            cols: 10,
            rows: 10,
        };
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"class":"hospital"},
             "geometry":{"type":"MultiPoint","coordinates":[[-74.0,40.7],[-74.001,40.7]]}},
            {"type":"Feature","properties":{"class":"park"},
             "geometry":{"type":"Polygon","coordinates":[[[-74.001,40.699],[-73.999,40.699],[-73.999,40.701],[-74.001,40.701],[-74.001,40.699]]]}}
        ]}"#;
        let set = FeatureSet::from_geojson(text, &grid).unwrap();
        assert_eq!(set.class("hospital").len(), 2);
        assert_eq!(set.class("park").len(), 1);
        assert!(set.class("park")[0].covers([0.0, 0.0]));
        assert!(set.class("hospital")[0].distance([0.0, 0.0]) < 1e-6);
        assert!(set.class("water").is_empty());

        let missing = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},"geometry":{"type":"Point","coordinates":[-74.0,40.7]}}]}"#;
        assert!(FeatureSet::from_geojson(missing, &grid).is_err());
    }
}
