//! Univariate marginal laws sampled by inversion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_quantile, norm_sf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarginalSpec {
    /// Gumbel (maximum) law with the given location and scale, renormalized on `[lower, upper]`.
    TruncatedGumbel { loc: f64, scale: f64, lower: f64, upper: f64 },
    TruncatedNormal {
        mean: f64,
        sd: f64,
        lower: f64,
        #[serde(default = "infinity")]
        upper: f64,
    },
    Triangular { min: f64, mode: f64, max: f64 },
    Normal { mean: f64, sd: f64 },
    Fixed { value: f64 },
}

fn infinity() -> f64 {
    f64::INFINITY
}

fn gumbel_cdf(x: f64, loc: f64, scale: f64) -> f64 {
    (-(-(x - loc) / scale).exp()).exp()
}

impl MarginalSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match *self {
            Self::TruncatedGumbel { loc, scale, lower, upper } => {
                if !(loc.is_finite() && scale.is_finite() && scale > 0.0) {
                    return bad(format!("Gumbel needs finite location and positive scale, got ({loc}, {scale})"));
                }
                if !(lower < upper) || lower.is_nan() {
                    return bad(format!("Gumbel bounds must satisfy lower < upper, got [{lower}, {upper}]"));
                }
                if gumbel_cdf(upper, loc, scale) - gumbel_cdf(lower, loc, scale) <= 0.0 {
                    return bad("Gumbel truncation interval has no mass".into());
                }
            }
            Self::TruncatedNormal { mean, sd, lower, upper } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    return bad(format!("normal needs finite mean and positive sd, got ({mean}, {sd})"));
                }
                if !(lower < upper) || lower.is_nan() {
                    return bad(format!("normal bounds must satisfy lower < upper, got [{lower}, {upper}]"));
                }
                if self.mass() <= 0.0 {
                    return bad("normal truncation interval has no mass".into());
                }
            }
            Self::Triangular { min, mode, max } => {
                if !(min.is_finite() && max.is_finite() && min <= mode && mode <= max && min < max) {
                    return bad(format!("triangular needs min <= mode <= max and min < max, got ({min}, {mode}, {max})"));
                }
            }
            Self::Normal { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    return bad(format!("normal needs finite mean and positive sd, got ({mean}, {sd})"));
                }
            }
            Self::Fixed { value } => {
                if !value.is_finite() {
                    return bad("fixed value must be finite".into());
                }
            }
        }
        Ok(())
    }

    fn mass(&self) -> f64 {
        match *self {
            Self::TruncatedNormal { mean, sd, lower, upper } => {
                let (a, b) = ((lower - mean) / sd, (upper - mean) / sd);
                if a > 0.0 {
                    norm_sf(a) - norm_sf(b)
                } else {
                    norm_cdf(b) - norm_cdf(a)
                }
            }
            _ => 1.0,
        }
    }

    /// `(lower, upper)` bounds of the support.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::TruncatedGumbel { lower, upper, .. } | Self::TruncatedNormal { lower, upper, .. } => {
                (lower, upper)
            }
            Self::Triangular { min, max, .. } => (min, max),
            Self::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Self::Fixed { value } => (value, value),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_pair(x).0
    }

    /// `(F(x), 1 - F(x))`, each computed without cancellation.
    pub fn cdf_pair(&self, x: f64) -> (f64, f64) {
        let (lo, hi) = self.support();
        if x < lo {
            return (0.0, 1.0);
        }
        if x >= hi {
            return (1.0, 0.0);
        }
        match *self {
            Self::TruncatedGumbel { loc, scale, lower, upper } => {
                let fl = gumbel_cdf(lower, loc, scale);
                let fu = gumbel_cdf(upper, loc, scale);
                let fx = gumbel_cdf(x, loc, scale);
                ((fx - fl) / (fu - fl), (fu - fx) / (fu - fl))
            }
            Self::TruncatedNormal { mean, sd, lower, upper } => {
                let (a, b, z) = ((lower - mean) / sd, (upper - mean) / sd, (x - mean) / sd);
                let mass = self.mass();
                if z > 0.0 {
                    let upper_part = norm_sf(z) - norm_sf(b);
                    (1.0 - upper_part / mass, upper_part / mass)
                } else {
                    let lower_part = norm_cdf(z) - norm_cdf(a);
                    (lower_part / mass, 1.0 - lower_part / mass)
                }
            }
            Self::Triangular { min, mode, max } => {
                if x <= mode {
                    let f = if mode == min { 0.0 } else { (x - min).powi(2) / ((max - min) * (mode - min)) };
                    (f, 1.0 - f)
                } else {
                    let s = (max - x).powi(2) / ((max - min) * (max - mode));
                    (1.0 - s, s)
                }
            }
            Self::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                (norm_cdf(z), norm_sf(z))
            }
            Self::Fixed { .. } => (1.0, 0.0),
        }
    }

    /// Quantile function on `(0, 1)`.
    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("probability {u} outside (0, 1)")));
        }
        Ok(self.quantile_pair(u, 1.0 - u))
    }

    /// Quantile at level `u`, given also `v = 1 - u` to full precision.
    fn quantile_pair(&self, u: f64, v: f64) -> f64 {
        let (lo, hi) = self.support();
        let x = match *self {
            Self::TruncatedGumbel { loc, scale, lower, upper } => {
                let fl = gumbel_cdf(lower, loc, scale);
                let fu = gumbel_cdf(upper, loc, scale);
                let f = if u <= 0.5 { fl + u * (fu - fl) } else { fu - v * (fu - fl) };
                loc - scale * (-f.ln()).ln()
            }
            Self::TruncatedNormal { mean, sd, lower, upper } => {
                let (a, b) = ((lower - mean) / sd, (upper - mean) / sd);
                let z = if u > 0.5 {
                    let (sa, sb) = (norm_sf(a), norm_sf(b));
                    -norm_quantile(sb + v * (sa - sb))
                } else if a > 0.0 {
                    let (sa, sb) = (norm_sf(a), norm_sf(b));
                    -norm_quantile(sa - u * (sa - sb))
                } else {
                    let (ca, cb) = (norm_cdf(a), norm_cdf(b));
                    norm_quantile(ca + u * (cb - ca))
                };
                mean + sd * z
            }
            Self::Triangular { min, mode, max } => {
                let fc = (mode - min) / (max - min);
                if u < fc {
                    min + (u * (max - min) * (mode - min)).sqrt()
                } else {
                    max - (v * (max - min) * (max - mode)).sqrt()
                }
            }
            Self::Normal { mean, sd } => {
                mean + sd * if u <= 0.5 { norm_quantile(u) } else { -norm_quantile(v) }
            }
            Self::Fixed { value } => value,
        };
        x.clamp(lo, hi)
    }

    /// `F⁻¹(Φ(z))`, the value whose normal score is `z`.
    pub fn from_normal_score(&self, z: f64) -> f64 {
        match *self {
            Self::Normal { mean, sd } => mean + sd * z,
            Self::Fixed { value } => value,
            _ => {
                let z = z.clamp(-MAX_SCORE, MAX_SCORE);
                self.quantile_pair(norm_cdf(z), norm_sf(z))
            }
        }
    }

    /// `Φ⁻¹(F(x))`, clamped to `±37` at the edges of the support.
    pub fn normal_score(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mean, sd } => (x - mean) / sd,
            Self::Fixed { .. } => 0.0,
            _ => {
                let (f, s) = self.cdf_pair(x);
                let z = if f <= 0.5 { norm_quantile(f) } else { -norm_quantile(s) };
                z.clamp(-MAX_SCORE, MAX_SCORE)
            }
        }
    }
}

const MAX_SCORE: f64 = 37.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangular_quantile_with_mode_at_minimum() {
        let t = MarginalSpec::Triangular { min: 0.0, mode: 0.0, max: 1.0 };
        let x = t.inverse_cdf(0.25).unwrap();
        assert!((x - (1.0 - 0.75f64.sqrt())).abs() < 1e-15);
        assert!((x - 0.1340).abs() < 1e-4);
    }

    #[test]
    fn truncated_normal_lower_tail() {
        let t = MarginalSpec::TruncatedNormal { mean: 30.0, sd: 7.0, lower: 15.0, upper: f64::INFINITY };
        let x = t.inverse_cdf(1e-12).unwrap();
        assert!((15.0..15.001).contains(&x));
        assert!(t.inverse_cdf(0.0).is_err());
        assert!(t.inverse_cdf(1.0).is_err());
    }

    #[test]
    fn gumbel_support_and_round_trip() {
        let g = MarginalSpec::TruncatedGumbel { loc: 1013.0, scale: 558.0, lower: 500.0, upper: 3000.0 };
        g.validate().unwrap();
        for u in [1e-9, 0.1, 0.5, 0.9, 1.0 - 1e-9] {
            let x = g.inverse_cdf(u).unwrap();
            assert!((500.0..=3000.0).contains(&x));
            assert!((g.cdf(x) - u).abs() < 1e-9);
        }
    }

    #[test]
    fn normal_score_round_trip() {
        let specs = [
            MarginalSpec::TruncatedGumbel { loc: 1013.0, scale: 558.0, lower: 500.0, upper: 3000.0 },
            MarginalSpec::TruncatedNormal { mean: 30.0, sd: 7.0, lower: 15.0, upper: f64::INFINITY },
            MarginalSpec::Triangular { min: 49.0, mode: 50.0, max: 51.0 },
            MarginalSpec::Normal { mean: 1.0, sd: 2.0 },
        ];
        for m in specs {
            for z in [-6.0, -1.0, 0.0, 0.4, 3.0, 6.0] {
                let x = m.from_normal_score(z);
                assert!((m.normal_score(x) - z).abs() < 1e-6, "{m:?} at {z}");
            }
        }
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(MarginalSpec::Triangular { min: 1.0, mode: 0.0, max: 2.0 }.validate().is_err());
        assert!(MarginalSpec::Normal { mean: 0.0, sd: 0.0 }.validate().is_err());
        assert!(MarginalSpec::TruncatedGumbel { loc: 0.0, scale: 1.0, lower: 2.0, upper: 1.0 }
            .validate()
            .is_err());
    }

    #[test]
    fn deserializes_from_tagged_table() {
        let m: MarginalSpec = toml::from_str("kind = \"triangular\"\nmin = 49.0\nmode = 50.0\nmax = 51.0").unwrap();
        assert_eq!(m, MarginalSpec::Triangular { min: 49.0, mode: 50.0, max: 51.0 });
        let n: MarginalSpec = toml::from_str("kind = \"truncated-normal\"\nmean = 30.0\nsd = 7.0\nlower = 15.0").unwrap();
        assert_eq!(n.support().1, f64::INFINITY);
    }
}
