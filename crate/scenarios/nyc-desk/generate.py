"""Writes the synthetic Manhattan-like map and vessel tracks for this scenario.

Run from anywhere; outputs land next to this file. The output is fixed by
SEED, so rerunning reproduces the committed files.
"""

import csv
import json
import math
import random
from datetime import datetime, timedelta, timezone
from pathlib import Path

SEED = 20240501
LAT0, LON0 = 40.758, -73.985
M_PER_DEG_LAT = 111_132.0
M_PER_DEG_LON = 111_320.0 * math.cos(math.radians(LAT0))
HERE = Path(__file__).resolve().parent

# Manhattan's street grid is rotated about 29 degrees east of north.
GRID_ANGLE = math.radians(29.0)


def to_lonlat(e, n):
    return [round(LON0 + e / M_PER_DEG_LON, 7), round(LAT0 + n / M_PER_DEG_LAT, 7)]


def rot(u, v):
    """Grid-aligned (across, along) to (east, north)."""
    c, s = math.cos(GRID_ANGLE), math.sin(GRID_ANGLE)
    return u * c + v * s, -u * s + v * c


def feature(cls, geometry):
    return {"type": "Feature", "properties": {"class": cls}, "geometry": geometry}


def polygon(points):
    ring = [to_lonlat(*p) for p in points]
    ring.append(ring[0])
    return {"type": "Polygon", "coordinates": [ring]}


def line(points):
    return {"type": "LineString", "coordinates": [to_lonlat(*p) for p in points]}


def build_features(rng):
    out = []
    # Two rivers flanking the island, as grid-aligned strips.
    for lo, hi in [(-4300.0, -2600.0), (2100.0, 3400.0)]:
        out.append(feature("water", polygon([rot(lo, -6500), rot(hi, -6500), rot(hi, 6500), rot(lo, 6500)])))
    # A long central park and a handful of small squares.
    out.append(feature("park", polygon([rot(-700, 600), rot(100, 600), rot(100, 4600), rot(-700, 4600)])))
    for _ in range(8):
        u, v = rng.uniform(-2200, 1700), rng.uniform(-4500, 300)
        w, h = rng.uniform(80, 250), rng.uniform(80, 250)
        out.append(feature("park", polygon([rot(u, v), rot(u + w, v), rot(u + w, v + h), rot(u, v + h)])))
    # Avenues run along the island, streets across it.
    for u in range(-2300, 1900, 280):
        out.append(feature("primary", line([rot(u, -6000), rot(u, 6000)])))
    for v in range(-5600, 5600, 420):
        out.append(feature("primary", line([rot(-2500, v), rot(2000, v)])))
    for _ in range(5):
        u, v = rng.uniform(-2000, 1600), rng.uniform(-3500, 3500)
        out.append(feature("hospital", {"type": "Point", "coordinates": to_lonlat(*rot(u, v))}))
    return {"type": "FeatureCollection", "features": out}


def build_tracks(rng):
    start = datetime(2024, 5, 1, 12, 0, 0, tzinfo=timezone.utc)
    rows = []
    rivers = [(-3450.0, 850.0), (2750.0, 650.0)]
    for k in range(8):
        center, half = rivers[k % 2]
        u = center + rng.uniform(-half, half) * 0.6
        v = rng.uniform(-4000, 4000)
        speed = rng.uniform(3.0, 8.0) * rng.choice([-1, 1])
        t0 = rng.choice([0, 0, 5, 15])
        # One vessel goes quiet early so its expiry shows up in a minute.
        t_end = 25 if k == 3 else 240
        t = t0
        while t <= t_end:
            e, n = rot(u + rng.gauss(0, 3), v + speed * (t - t0))
            lon, lat = to_lonlat(e, n)
            stamp = (start + timedelta(seconds=t)).strftime("%Y-%m-%dT%H:%M:%SZ")
            rows.append((366_000_000 + k, stamp, lat, lon))
            t += rng.choice([2, 3, 5, 10])
    rows.sort(key=lambda r: (r[1], r[0]))
    return rows


def main():
    rng = random.Random(SEED)
    (HERE / "features.geojson").write_text(json.dumps(build_features(rng), indent=1) + "\n")
    with open(HERE / "vessels.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["mmsi", "timestamp_iso8601", "lat", "lon"])
        w.writerows(build_tracks(rng))


if __name__ == "__main__":
    main()
