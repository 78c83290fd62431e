//! Named initial surfaces with a refinement level.

use std::fmt;
use std::str::FromStr;

use super::{make_ellipsoid, make_icosphere, make_torus, SurfaceMesh};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurfaceKind {
    Sphere {
        radius: f64,
    },
    /// `x^2/a + y^2/b + z^2 = 1`.
    Ellipsoid {
        a: f64,
        b: f64,
    },
    /// Grid `n_major x n_minor` at level 0, doubled in both directions per level.
    Torus {
        major: f64,
        minor: f64,
        n_major: usize,
        n_minor: usize,
    },
}

impl SurfaceKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sphere { .. } => "sphere",
            Self::Ellipsoid { .. } => "ellipsoid",
            Self::Torus { .. } => "torus",
        }
    }
}

/// Surface family plus refinement level (icosphere subdivisions, or torus
/// grid doublings).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSpec {
    pub kind: SurfaceKind,
    pub refinement: u32,
}

impl SurfaceSpec {
    pub fn new(kind: SurfaceKind, refinement: u32) -> Self {
        Self { kind, refinement }
    }

    pub fn at_level(&self, refinement: u32) -> Self {
        Self {
            refinement,
            ..*self
        }
    }

    pub fn build(&self) -> Result<SurfaceMesh> {
        match self.kind {
            SurfaceKind::Sphere { radius } => make_icosphere(self.refinement, radius),
            SurfaceKind::Ellipsoid { a, b } => make_ellipsoid(a, b, self.refinement),
            SurfaceKind::Torus {
                major,
                minor,
                n_major,
                n_minor,
            } => {
                let scale = 1usize
                    .checked_shl(self.refinement)
                    .filter(|s| *s <= 1 << 10)
                    .ok_or(Error::SizeCap {
                        requested: self.refinement,
                        cap: 10,
                    })?;
                make_torus(major, minor, n_major * scale, n_minor * scale)
            }
        }
    }
}

impl fmt::Display for SurfaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SurfaceKind::Sphere { radius } => {
                write!(
                    f,
                    "sphere(radius={radius}, subdivisions={})",
                    self.refinement
                )
            }
            SurfaceKind::Ellipsoid { a, b } => {
                write!(
                    f,
                    "ellipsoid(a={a}, b={b}, subdivisions={})",
                    self.refinement
                )
            }
            SurfaceKind::Torus {
                major,
                minor,
                n_major,
                n_minor,
            } => write!(
                f,
                "torus(R={major}, r={minor}, grid={}x{})",
                n_major << self.refinement,
                n_minor << self.refinement
            ),
        }
    }
}

impl FromStr for SurfaceKind {
    type Err = Error;

    /// `name` or `name:p1,p2,...`. Omitted parameters keep their defaults:
    /// `sphere:radius`, `ellipsoid:a,b`, `torus:R,r,n_major,n_minor`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), p.split(',').map(str::trim).collect::<Vec<_>>()),
            None => (s.trim(), Vec::new()),
        };
        let real = |i: usize, default: f64| -> Result<f64> {
            params.get(i).map_or(Ok(default), |p| {
                p.parse()
                    .map_err(|_| Error::Domain(format!("bad parameter `{p}` in surface `{s}`")))
            })
        };
        let count = |i: usize, default: usize| -> Result<usize> {
            params.get(i).map_or(Ok(default), |p| {
                p.parse()
                    .map_err(|_| Error::Domain(format!("bad grid size `{p}` in surface `{s}`")))
            })
        };
        let arity = match name {
            "sphere" => 1,
            "ellipsoid" => 2,
            "torus" => 4,
            other => {
                return Err(Error::Domain(format!(
                    "unknown surface kind `{other}` (expected sphere, ellipsoid or torus)"
                )))
            }
        };
        if params.len() > arity {
            return Err(Error::Domain(format!(
                "surface `{name}` takes at most {arity} parameters, got {}",
                params.len()
            )));
        }
        Ok(match name {
            "sphere" => Self::Sphere {
                radius: real(0, 1.0)?,
            },
            "ellipsoid" => Self::Ellipsoid {
                a: real(0, 2.0)?,
                b: real(1, 1.0)?,
            },
            _ => Self::Torus {
                major: real(0, std::f64::consts::SQRT_2)?,
                minor: real(1, std::f64::consts::FRAC_1_SQRT_2)?,
                n_major: count(2, 40)?,
                n_minor: count(3, 16)?,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_refine() {
        let spec = SurfaceSpec::new("ellipsoid".parse().unwrap(), 1);
        assert_eq!(spec.build().unwrap().num_triangles(), 80);
        assert_eq!(spec.at_level(2).build().unwrap().num_triangles(), 320);
        let torus = SurfaceSpec::new(
            SurfaceKind::Torus {
                major: 2.0,
                minor: 1.0,
                n_major: 6,
                n_minor: 4,
            },
            1,
        );
        assert_eq!(torus.build().unwrap().num_vertices(), 96);
        assert_eq!(torus.to_string(), "torus(R=2, r=1, grid=12x8)");
    }

    #[test]
    fn unknown_kind() {
        assert!("cube".parse::<SurfaceKind>().is_err());
        assert!("sphere:1,2".parse::<SurfaceKind>().is_err());
        assert!("ellipsoid:x".parse::<SurfaceKind>().is_err());
    }

    #[test]
    fn parameters() {
        assert_eq!(
            "ellipsoid:2, 2".parse::<SurfaceKind>().unwrap(),
            SurfaceKind::Ellipsoid { a: 2.0, b: 2.0 }
        );
        assert_eq!(
            "sphere:1.5".parse::<SurfaceKind>().unwrap(),
            SurfaceKind::Sphere { radius: 1.5 }
        );
        let t: SurfaceKind = "torus:3,1,12".parse().unwrap();
        assert_eq!(
            t,
            SurfaceKind::Torus {
                major: 3.0,
                minor: 1.0,
                n_major: 12,
                n_minor: 16
            }
        );
    }
}
