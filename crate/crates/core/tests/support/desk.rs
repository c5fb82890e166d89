//! A 2 km square with every layer of the reference program, written to a temporary
//! directory.

use std::fmt::Write as _;
use std::path::Path;

use rml_core::pipeline::Scenario;
use rml_core::starmap::GridSpec;

pub struct Desk {
    pub cells: usize,
    pub uas: usize,
    pub vessels: bool,
    pub duration_s: f64,
    pub seed: u64,
    pub program: String,
}

impl Default for Desk {
    fn default() -> Self {
        Desk {
            cells: 40,
            uas: 3,
            vessels: true,
            duration_s: 20.0,
            seed: 5,
            program: super::LISTING1.to_string(),
        }
    }
}

pub fn grid(cells: usize) -> GridSpec {
    GridSpec {
        origin_lat: 40.758,
        origin_lon: -73.985,
        width_m: 2000.0,
        height_m: 2000.0,
        cols: cells,
        rows: cells,
    }
}

fn lonlat(g: &GridSpec, p: [f64; 2]) -> String {
    let (lat, lon) = g.unproject(p);
    format!("[{lon:.9}, {lat:.9}]")
}

fn polygon(g: &GridSpec, class: &str, pts: &[[f64; 2]]) -> String {
    let mut ring: Vec<String> = pts.iter().map(|&p| lonlat(g, p)).collect();
    ring.push(ring[0].clone());
    format!(
        r#"{{"type":"Feature","properties":{{"class":"{class}"}},"geometry":{{"type":"Polygon","coordinates":[[{}]]}}}}"#,
        ring.join(",")
    )
}

fn line(g: &GridSpec, class: &str, pts: &[[f64; 2]]) -> String {
    let coords: Vec<String> = pts.iter().map(|&p| lonlat(g, p)).collect();
    format!(
        r#"{{"type":"Feature","properties":{{"class":"{class}"}},"geometry":{{"type":"LineString","coordinates":[{}]}}}}"#,
        coords.join(",")
    )
}

fn point(g: &GridSpec, class: &str, p: [f64; 2]) -> String {
    format!(
        r#"{{"type":"Feature","properties":{{"class":"{class}"}},"geometry":{{"type":"Point","coordinates":{}}}}}"#,
        lonlat(g, p)
    )
}

pub fn features(g: &GridSpec) -> String {
    let fs = [
        polygon(
            g,
            "water",
            &[
                [-1100.0, -1100.0],
                [-600.0, -1100.0],
                [-650.0, 1100.0],
                [-1100.0, 1100.0],
            ],
        ),
        polygon(
            g,
            "park",
            &[
                [100.0, 100.0],
                [500.0, 120.0],
                [480.0, 500.0],
                [120.0, 480.0],
            ],
        ),
        polygon(
            g,
            "park",
            &[
                [-400.0, -700.0],
                [-250.0, -700.0],
                [-250.0, -560.0],
                [-400.0, -560.0],
            ],
        ),
        line(g, "primary", &[[-300.0, -1100.0], [-260.0, 1100.0]]),
        line(g, "primary", &[[300.0, -1100.0], [340.0, 1100.0]]),
        line(g, "primary", &[[-1100.0, -200.0], [1100.0, -180.0]]),
        point(g, "hospital", [-100.0, -500.0]),
        point(g, "hospital", [700.0, 650.0]),
    ];
    format!(
        r#"{{"type":"FeatureCollection","features":[{}]}}"#,
        fs.join(",")
    )
}

pub fn vessels(g: &GridSpec) -> String {
    let mut out = String::from("mmsi,timestamp_iso8601,lat,lon\n");
    for t in (0..40).step_by(2) {
        for (id, x, y0, v) in [(1, -850.0, -900.0, 6.0), (2, -750.0, 800.0, -4.0)] {
            let (lat, lon) = g.unproject([x, y0 + v * t as f64]);
            writeln!(out, "{id},2024-05-01T12:00:{t:02}Z,{lat:.8},{lon:.8}").unwrap();
        }
    }
    out
}

impl Desk {
    /// Writes the inputs under `dir` and loads the scenario.
    pub fn write(&self, dir: &Path) -> Scenario {
        let g = grid(self.cells);
        std::fs::write(dir.join("program.resin"), &self.program).unwrap();
        std::fs::write(dir.join("features.geojson"), features(&g)).unwrap();
        std::fs::write(dir.join("vessels.csv"), vessels(&g)).unwrap();
        let ports: Vec<String> = [[0.0, 0.0], [400.0, -400.0]]
            .iter()
            .map(|&p| {
                let (lat, lon) = g.unproject(p);
                format!("[{lat:.9}, {lon:.9}]")
            })
            .collect();
        let mut toml = format!(
            "program = \"program.resin\"\nfeatures = \"features.geojson\"\nout = \"out\"\n\
             duration_s = {}\nsnapshot_every_s = 2.0\nseed = {}\n\n\
             [grid]\norigin_lat = {}\norigin_lon = {}\nwidth_m = {}\nheight_m = {}\ncols = {}\nrows = {}\n\n\
             [clusters]\ndwell_s = 4.0\n\n[fields]\nsamples = 16\n",
            self.duration_s, self.seed, g.origin_lat, g.origin_lon, g.width_m, g.height_m, g.cols, g.rows
        );
        if self.uas > 0 {
            write!(
                toml,
                "\n[uas]\nvertiports = [{}]\nfleet = {}\nseed = {}\n",
                ports.join(", "),
                self.uas,
                self.seed
            )
            .unwrap();
        }
        if self.vessels {
            toml.push_str("\n[ais]\npath = \"vessels.csv\"\ntimeout_s = 10.0\n");
        }
        std::fs::write(dir.join("scenario.toml"), &toml).unwrap();
        Scenario::load(&dir.join("scenario.toml")).unwrap()
    }
}
