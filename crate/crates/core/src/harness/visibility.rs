//! Supervision-visibility test from an azimuth camera range.
//!
//! A point's azimuth is `atan2(z, x)` mapped to `[0,360)`. The camera
//! range `[min,max)` is dilated by ±90°: a surface point is considered
//! observable when some camera in the range faces it within a quarter
//! turn. The comparison is plain real arithmetic on `[0,360)` angles —
//! the dilated interval does NOT wrap around, which errs toward marking
//! extra points hidden only past the upper end (and is what the
//! worked examples below pin down). With `mirror_augment` the reflected
//! azimuth `360 − θ` is admitted too.

use crate::triplane::Point3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilitySpec {
    min_deg: f64,
    max_deg: f64,
    pub mirror_augment: bool,
}

impl VisibilitySpec {
    /// Half-open azimuth interval `[min,max)` with `0 ≤ min < max ≤ 360`.
    pub fn new(min_deg: f64, max_deg: f64, mirror_augment: bool) -> Result<Self> {
        if !(min_deg.is_finite() && max_deg.is_finite()) || !(0.0..360.0).contains(&min_deg)
            || !(min_deg < max_deg && max_deg <= 360.0)
        {
            return Err(Error::InvalidInput(format!(
                "azimuth range [{min_deg},{max_deg}) must satisfy 0 <= min < max <= 360"
            )));
        }
        Ok(Self { min_deg, max_deg, mirror_augment })
    }

    /// The full circle: every point visible.
    pub fn full() -> Self {
        Self { min_deg: 0.0, max_deg: 360.0, mirror_augment: false }
    }

    pub fn min_deg(&self) -> f64 {
        self.min_deg
    }

    pub fn max_deg(&self) -> f64 {
        self.max_deg
    }

    pub fn is_full(&self) -> bool {
        self.min_deg == 0.0 && self.max_deg == 360.0
    }

    /// Parses `"A:B"` degree strings.
    pub fn parse_range(text: &str) -> Result<(f64, f64)> {
        let bad = || Error::InvalidInput(format!("bad azimuth range {text:?}; expected A:B"));
        let (a, b) = text.split_once(':').ok_or_else(bad)?;
        Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
    }

    fn in_dilated_range(&self, theta: f64) -> bool {
        self.min_deg - 90.0 <= theta && theta < self.max_deg + 90.0
    }

    /// Whether a supervision point is retained.
    pub fn visible(&self, p: Point3) -> bool {
        if p.x == 0.0 && p.z == 0.0 {
            return true; // axis points have no azimuth
        }
        let mut theta = p.z.atan2(p.x).to_degrees();
        if theta < 0.0 {
            theta += 360.0;
            if theta >= 360.0 {
                theta = 0.0; // tiny negative angles round up to 360
            }
        }
        self.in_dilated_range(theta)
            || (self.mirror_augment && self.in_dilated_range(360.0 - theta))
    }
}
