//! Hierarchical cube-face partition of the sphere into roughly equal-area cells.
//!
//! Points are projected onto the face of the enclosing cube selected by their
//! largest coordinate, mapped to face coordinates `u, v ∈ [−1, 1]`, warped by a
//! quadratic area-equalizing transform to `s, t ∈ [0, 1]`, and binned on a
//! uniform `2^level` grid. Face numbering and orientation follow the S2
//! conventions, but ids are plain `(face, level, i, j)` tuples.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::raster::Polygon;

pub const MAX_LEVEL: u8 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub face: u8,
    pub level: u8,
    pub i: u32,
    pub j: u32,
}

fn check_level(level: u8) -> Result<()> {
    if level > MAX_LEVEL {
        return Err(Error::param(
            "level",
            format!("{level} exceeds {MAX_LEVEL}"),
        ));
    }
    Ok(())
}

/// Unit vector for a latitude/longitude in degrees.
pub fn lat_lon_to_xyz(lat: f64, lon: f64) -> [f64; 3] {
    let (lat, lon) = (lat.to_radians(), lon.to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

/// Latitude/longitude in degrees of a nonzero vector.
pub fn xyz_to_lat_lon([x, y, z]: [f64; 3]) -> (f64, f64) {
    let lat = z.atan2(x.hypot(y)).to_degrees();
    let lon = y.atan2(x).to_degrees();
    (lat, lon)
}

fn face_of([x, y, z]: [f64; 3]) -> u8 {
    let (ax, ay, az) = (x.abs(), y.abs(), z.abs());
    let (axis, value) = if ax >= ay && ax >= az {
        (0, x)
    } else if ay >= az {
        (1, y)
    } else {
        (2, z)
    };
    if value < 0.0 {
        axis + 3
    } else {
        axis
    }
}

fn face_uv(face: u8, [x, y, z]: [f64; 3]) -> (f64, f64) {
    match face {
        0 => (y / x, z / x),
        1 => (-x / y, z / y),
        2 => (-x / z, -y / z),
        3 => (z / x, y / x),
        4 => (z / y, -x / y),
        _ => (-y / z, -x / z),
    }
}

fn face_uv_to_xyz(face: u8, u: f64, v: f64) -> [f64; 3] {
    match face {
        0 => [1.0, u, v],
        1 => [-u, 1.0, v],
        2 => [-u, -v, 1.0],
        3 => [-1.0, -v, -u],
        4 => [v, -1.0, -u],
        _ => [v, u, -1.0],
    }
}

fn uv_to_st(u: f64) -> f64 {
    if u >= 0.0 {
        0.5 * (1.0 + 3.0 * u).sqrt()
    } else {
        1.0 - 0.5 * (1.0 - 3.0 * u).sqrt()
    }
}

fn st_to_uv(s: f64) -> f64 {
    if s >= 0.5 {
        (4.0 * s * s - 1.0) / 3.0
    } else {
        (1.0 - 4.0 * (1.0 - s) * (1.0 - s)) / 3.0
    }
}

fn normalize([x, y, z]: [f64; 3]) -> [f64; 3] {
    let n = (x * x + y * y + z * z).sqrt();
    [x / n, y / n, z / n]
}

impl CellId {
    pub fn new(face: u8, level: u8, i: u32, j: u32) -> Result<Self> {
        check_level(level)?;
        if face > 5 {
            return Err(Error::param("face", format!("{face} not in 0..=5")));
        }
        let n = 1u32 << level;
        if i >= n || j >= n {
            return Err(Error::param(
                "i/j",
                format!("({i}, {j}) outside {n}x{n} grid"),
            ));
        }
        Ok(Self { face, level, i, j })
    }

    /// The cell containing a latitude/longitude in degrees.
    pub fn of(lat: f64, lon: f64, level: u8) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::param("lat", format!("{lat} not in [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::param("lon", format!("{lon} not in [-180, 180]")));
        }
        check_level(level)?;
        Ok(Self::of_xyz(lat_lon_to_xyz(lat, lon), level))
    }

    pub(crate) fn of_xyz(p: [f64; 3], level: u8) -> Self {
        let face = face_of(p);
        let (u, v) = face_uv(face, p);
        let n = 1u32 << level;
        let bin = |st: f64| ((st * n as f64).floor().max(0.0) as u32).min(n - 1);
        Self {
            face,
            level,
            i: bin(uv_to_st(u.clamp(-1.0, 1.0))),
            j: bin(uv_to_st(v.clamp(-1.0, 1.0))),
        }
    }

    pub fn contains(&self, lat: f64, lon: f64) -> Result<bool> {
        Ok(Self::of(lat, lon, self.level)? == *self)
    }

    /// Unit vectors of the corners, counter-clockwise seen from outside.
    pub fn corners(&self) -> [[f64; 3]; 4] {
        let n = (1u32 << self.level) as f64;
        let at = |di: u32, dj: u32| {
            let u = st_to_uv((self.i + di) as f64 / n);
            let v = st_to_uv((self.j + dj) as f64 / n);
            normalize(face_uv_to_xyz(self.face, u, v))
        };
        [at(0, 0), at(1, 0), at(1, 1), at(0, 1)]
    }

    pub fn center(&self) -> (f64, f64) {
        let n = (1u32 << self.level) as f64;
        let u = st_to_uv((self.i as f64 + 0.5) / n);
        let v = st_to_uv((self.j as f64 + 0.5) / n);
        xyz_to_lat_lon(face_uv_to_xyz(self.face, u, v))
    }

    /// Corner quad as `[lon, lat]` vertices in degrees.
    pub fn bounds(&self) -> Result<Polygon<f64>> {
        let ring = self
            .corners()
            .iter()
            .map(|&p| {
                let (lat, lon) = xyz_to_lat_lon(p);
                [lon, lat]
            })
            .collect();
        Polygon::new(ring)
    }

    /// Area in steradians of the spherical quad bounded by great-circle edges.
    pub fn area(&self) -> f64 {
        let [a, b, c, d] = self.corners();
        triangle_excess(a, b, c) + triangle_excess(a, c, d)
    }

    pub fn parent(&self) -> Option<Self> {
        (self.level > 0).then(|| Self {
            face: self.face,
            level: self.level - 1,
            i: self.i / 2,
            j: self.j / 2,
        })
    }

    pub fn children(&self) -> Result<[Self; 4]> {
        check_level(self.level + 1)?;
        let child = |di: u32, dj: u32| Self {
            face: self.face,
            level: self.level + 1,
            i: 2 * self.i + di,
            j: 2 * self.j + dj,
        };
        Ok([child(0, 0), child(1, 0), child(0, 1), child(1, 1)])
    }

    /// Every cell at `level`, face by face.
    pub fn all(level: u8) -> Result<Vec<Self>> {
        check_level(level)?;
        let n = 1u32 << level;
        Ok((0..6u8)
            .flat_map(|face| {
                (0..n).flat_map(move |i| (0..n).map(move |j| Self { face, level, i, j }))
            })
            .collect())
    }
}

/// Spherical excess of the triangle with unit-vector corners.
fn triangle_excess(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let dot = |p: [f64; 3], q: [f64; 3]| p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    let cross = [
        b[1] * c[2] - b[2] * c[1],
        b[2] * c[0] - b[0] * c[2],
        b[0] * c[1] - b[1] * c[0],
    ];
    let triple = dot(a, cross).abs();
    2.0 * triple.atan2(1.0 + dot(a, b) + dot(b, c) + dot(c, a))
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.face, self.level, self.i, self.j)
    }
}

impl FromStr for CellId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param("cell", format!("{s:?} is not face/level/i/j"));
        let parts: Vec<&str> = s.split('/').collect();
        let [f, l, i, j] = parts.as_slice() else {
            return Err(bad());
        };
        Self::new(
            f.parse().map_err(|_| bad())?,
            l.parse().map_err(|_| bad())?,
            i.parse().map_err(|_| bad())?,
            j.parse().map_err(|_| bad())?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut impl Rng) -> (f64, f64) {
        let z: f64 = rng.gen_range(-1.0..1.0);
        let lon: f64 = rng.gen_range(-180.0..180.0);
        (z.asin().to_degrees(), lon)
    }

    #[test]
    fn face_lookup() {
        let c = CellId::of(0.0, 0.0, 0).unwrap();
        assert_eq!((c.face, c.i, c.j), (0, 0, 0));
        assert_ne!(
            CellId::of(0.0, 0.0, 0).unwrap().face,
            CellId::of(0.0, 180.0, 0).unwrap().face
        );
        assert_eq!(CellId::of(90.0, 0.0, 0).unwrap().face, 2);
        assert_eq!(CellId::of(-90.0, 0.0, 0).unwrap().face, 5);
        let c = CellId::of(0.0, 0.0, 4).unwrap();
        assert_eq!((c.face, c.i, c.j), (0, 8, 8));
        assert!(CellId::of(91.0, 0.0, 4).is_err());
        assert!(CellId::of(0.0, 181.0, 4).is_err());
        assert!(CellId::of(0.0, 0.0, 21).is_err());
    }

    #[test]
    fn tokens_round_trip() {
        let c = CellId::new(3, 4, 5, 11).unwrap();
        assert_eq!(c.to_string(), "3/4/5/11");
        assert_eq!("3/4/5/11".parse::<CellId>().unwrap(), c);
        assert!("3/4/16/0".parse::<CellId>().is_err());
        assert!("3/4/5".parse::<CellId>().is_err());
    }

    #[test]
    fn bounds_contain_point() {
        let (lat, lon) = (12.3, 4.5);
        for level in [2, 4, 8] {
            let c = CellId::of(lat, lon, level).unwrap();
            assert!(c.bounds().unwrap().contains(lon, lat));
            assert!(c.contains(lat, lon).unwrap());
            let (clat, clon) = c.center();
            assert_eq!(CellId::of(clat, clon, level).unwrap(), c);
        }
    }

    #[test]
    fn children_tile_parent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let (lat, lon) = random_point(&mut rng);
            let fine = CellId::of(lat, lon, 6).unwrap();
            let coarse = CellId::of(lat, lon, 5).unwrap();
            assert_eq!(fine.parent(), Some(coarse));
            assert!(coarse.children().unwrap().contains(&fine));
        }
        let c = CellId::new(1, 3, 2, 5).unwrap();
        let sum: f64 = c.children().unwrap().iter().map(CellId::area).sum();
        assert!((sum - c.area()).abs() < 1e-12);
    }

    #[test]
    fn faces_cover_sphere() {
        let total: f64 = CellId::all(0).unwrap().iter().map(CellId::area).sum();
        assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100_000 {
            let (lat, lon) = random_point(&mut rng);
            let c = CellId::of(lat, lon, 0).unwrap();
            let (u, v) = face_uv(c.face, lat_lon_to_xyz(lat, lon));
            assert!(u.abs() <= 1.0 + 1e-12 && v.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn level_four_area_spread() {
        let areas: Vec<f64> = CellId::all(4).unwrap().iter().map(CellId::area).collect();
        let max = areas.iter().cloned().fold(f64::MIN, f64::max);
        let min = areas.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min <= 2.2, "{}", max / min);
        let total: f64 = areas.iter().sum();
        assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-9);
    }
}
