//! Energy densities `f(H)` that define a curvature-dependent flow.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A weakly convex energy density together with its first two derivatives.
#[derive(Clone)]
pub enum EnergyDensity {
    /// `f = 1`: mean curvature flow, energy is surface area.
    Area,
    /// `f = H`: Gauss curvature flow.
    MeanCurvatureIntegral,
    /// `f = H^2 / 2`.
    Willmore,
    /// `f = H^4`.
    QuarticCurvature,
    Custom {
        name: String,
        f: Scalar,
        df: Scalar,
        ddf: Scalar,
    },
}

impl EnergyDensity {
    pub const BUILT_IN: [EnergyDensity; 4] = [
        EnergyDensity::Area,
        EnergyDensity::MeanCurvatureIntegral,
        EnergyDensity::Willmore,
        EnergyDensity::QuarticCurvature,
    ];

    /// Builds a custom density after checking `f'' >= 0` on samples of
    /// `range`.
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        ddf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        range: (f64, f64),
    ) -> Result<Self> {
        let (lo, hi) = range;
        if !(lo <= hi) {
            return Err(Error::Domain(format!("empty curvature range [{lo}, {hi}]")));
        }
        const SAMPLES: usize = 257;
        for i in 0..SAMPLES {
            let h = lo + (hi - lo) * i as f64 / (SAMPLES - 1) as f64;
            let c = ddf(h);
            if !(c >= 0.0) {
                return Err(Error::Domain(format!(
                    "density is not weakly convex: f''({h}) = {c}"
                )));
            }
        }
        Ok(Self::Custom {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
            ddf: Arc::new(ddf),
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Area => "area",
            Self::MeanCurvatureIntegral => "mean-curvature-integral",
            Self::Willmore => "willmore",
            Self::QuarticCurvature => "quartic",
            Self::Custom { name, .. } => name,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::BUILT_IN
            .into_iter()
            .find(|d| d.name() == name)
            .ok_or_else(|| {
                Error::Domain(format!(
                    "unknown density `{name}` (expected area, mean-curvature-integral, willmore or quartic)"
                ))
            })
    }

    pub fn f(&self, h: f64) -> f64 {
        match self {
            Self::Area => 1.0,
            Self::MeanCurvatureIntegral => h,
            Self::Willmore => 0.5 * h * h,
            Self::QuarticCurvature => h.powi(4),
            Self::Custom { f, .. } => f(h),
        }
    }

    pub fn df(&self, h: f64) -> f64 {
        match self {
            Self::Area => 0.0,
            Self::MeanCurvatureIntegral => 1.0,
            Self::Willmore => h,
            Self::QuarticCurvature => 4.0 * h.powi(3),
            Self::Custom { df, .. } => df(h),
        }
    }

    pub fn ddf(&self, h: f64) -> f64 {
        match self {
            Self::Area | Self::MeanCurvatureIntegral => 0.0,
            Self::Willmore => 1.0,
            Self::QuarticCurvature => 12.0 * h * h,
            Self::Custom { ddf, .. } => ddf(h),
        }
    }
}

impl fmt::Debug for EnergyDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EnergyDensity({})", self.name())
    }
}

impl fmt::Display for EnergyDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
