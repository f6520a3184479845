//! Prescribed curvature data `f(x, z) > 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::trig_interpolate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FSpecError {
    #[error("positivity: {0}")]
    Positivity(String),
    #[error("monotonicity in z (f_z >= 0): {0}")]
    Monotonicity(String),
    #[error("decay (sup f·r^(n+1) < inf): {0}")]
    Decay(String),
    #[error("regularity: {0}")]
    Regularity(String),
    #[error("{0}")]
    Unsupported(String),
}

/// Monotone height factor `h(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Height {
    /// `h(z) = 1 + amplitude·tanh(rate·z)`.
    Tanh { amplitude: f64, rate: f64 },
}

impl Height {
    #[inline]
    pub fn eval(&self, z: f64) -> (f64, f64) {
        match *self {
            Height::Tanh { amplitude, rate } => {
                let t = (rate * z).tanh();
                (1.0 + amplitude * t, amplitude * rate * (1.0 - t * t))
            }
        }
    }

    fn validate(&self) -> Result<(), FSpecError> {
        match *self {
            Height::Tanh { amplitude, rate } => {
                if !(amplitude.abs() < 1.0) {
                    return Err(FSpecError::Positivity(format!(
                        "height amplitude {amplitude} must satisfy |a| < 1"
                    )));
                }
                if amplitude * rate < 0.0 {
                    return Err(FSpecError::Monotonicity(format!(
                        "height factor decreasing (amplitude {amplitude}, rate {rate})"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Table of `f` on a polar tensor of radii × uniform angles. `log f` is
/// interpolated linearly in `log r` and trigonometrically in `θ`; beyond
/// the last radius the final segment's power law is continued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    pub radii: Vec<f64>,
    pub n_theta: usize,
    /// Row-major `values[i * n_theta + j]`.
    pub values: Vec<f64>,
}

impl Tabulated {
    fn validate(&self) -> Result<(), FSpecError> {
        if self.radii.len() < 2 || self.n_theta == 0 {
            return Err(FSpecError::Unsupported(
                "table needs at least two radii and one angle".into(),
            ));
        }
        if self.values.len() != self.radii.len() * self.n_theta {
            return Err(FSpecError::Unsupported(format!(
                "table has {} values, expected {}",
                self.values.len(),
                self.radii.len() * self.n_theta
            )));
        }
        if !self.radii.windows(2).all(|w| w[0] > 0.0 && w[1] > w[0]) {
            return Err(FSpecError::Unsupported(
                "table radii must be positive and increasing".into(),
            ));
        }
        if let Some(k) = self.values.iter().position(|v| !(*v > 0.0)) {
            return Err(FSpecError::Positivity(format!(
                "table value {} at entry {k} is not positive",
                self.values[k]
            )));
        }
        Ok(())
    }

    fn log_row(&self, i: usize, theta: f64) -> f64 {
        let row = &self.values[i * self.n_theta..(i + 1) * self.n_theta];
        if self.n_theta == 1 {
            return row[0].ln();
        }
        let logs: Vec<f64> = row.iter().map(|v| v.ln()).collect();
        trig_interpolate(&logs, theta)
    }

    fn eval(&self, r: f64, theta: f64) -> f64 {
        let n = self.radii.len();
        let i = match self.radii.iter().position(|&ri| ri > r) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => n - 2,
        };
        let (a, b) = (self.radii[i].ln(), self.radii[i + 1].ln());
        let t = (r.ln() - a) / (b - a);
        let (la, lb) = (self.log_row(i, theta), self.log_row(i + 1, theta));
        (la + t * (lb - la)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `c·r^{−s}`.
    RadialPower { c: f64, s: f64 },
    /// `c·r^{−s}·(1 + eps·cos(mθ))`, two dimensions only.
    AngularModulated { c: f64, s: f64, eps: f64, m: u32 },
    Tabulated(Tabulated),
    /// `base(x)·h(z)`.
    ProductHeight { base: Box<Family>, height: Height },
    /// The Gauss curvature of the explicit subsolution with the given
    /// parameters, as a function of `|x|`.
    SubsolutionCurvature { rho1: f64, a: f64 },
}

/// Curvature data together with the dimension it is posed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FSpec {
    pub n: usize,
    #[serde(flatten)]
    pub family: Family,
}

/// How each hypothesis on `f` was established.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub positivity: Check,
    pub monotone_in_z: Check,
    pub decay: Check,
    pub log_regularity: Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Follows from the parameters.
    Verified,
    /// Cannot be decided from the data alone; taken on trust.
    Assumed,
}

impl FSpec {
    pub fn new(n: usize, family: Family) -> Self {
        Self { n, family }
    }

    pub fn radial_power(n: usize, c: f64, s: f64) -> Self {
        Self::new(n, Family::RadialPower { c, s })
    }

    /// The power law that bounds the explicit subsolution's curvature from
    /// below: `(a−1)·2^{−3n/2−1}·ρ₁^{a−1}·r^{1−n−a}`.
    pub fn subsolution_bound(n: usize, rho1: f64, a: f64) -> Self {
        let nf = n as f64;
        let c = (a - 1.0) * 2f64.powf(-1.5 * nf - 1.0) * rho1.powf(a - 1.0);
        Self::radial_power(n, c, nf + a - 1.0)
    }

    pub fn validate(&self) -> Result<Validation, FSpecError> {
        if self.n < 2 {
            return Err(FSpecError::Unsupported(format!("dimension {} < 2", self.n)));
        }
        validate_family(self.n, &self.family)
    }

    /// True when `f` does not depend on `z`.
    pub fn is_height_free(&self) -> bool {
        !matches!(self.family, Family::ProductHeight { .. })
    }

    /// True when `f` depends on `|x|` only.
    pub fn is_radial(&self) -> bool {
        match &self.family {
            Family::RadialPower { .. } | Family::SubsolutionCurvature { .. } => true,
            Family::AngularModulated { eps, .. } => *eps == 0.0,
            Family::Tabulated(t) => t.n_theta == 1,
            Family::ProductHeight { .. } => false,
        }
    }

    /// `f(r)` for radial, height-free data.
    pub fn radial_value(&self, r: f64) -> Result<f64, FSpecError> {
        if !self.is_radial() {
            return Err(FSpecError::Unsupported(
                "radial evaluation of non-radial data".into(),
            ));
        }
        Ok(eval_family(self.n, &self.family, r, 0.0, 0.0).0)
    }

    /// `(f, f_z)` at a point of the plane.
    #[inline]
    pub fn eval(&self, x: [f64; 2], z: f64) -> (f64, f64) {
        let r = x[0].hypot(x[1]);
        let theta = x[1].atan2(x[0]);
        eval_family(self.n, &self.family, r, theta, z)
    }
}

fn validate_family(n: usize, family: &Family) -> Result<Validation, FSpecError> {
    let nf = n as f64;
    let verified = Validation {
        positivity: Check::Verified,
        monotone_in_z: Check::Verified,
        decay: Check::Verified,
        log_regularity: Check::Verified,
    };
    let decay = |s: f64| {
        if s >= nf + 1.0 {
            Ok(())
        } else {
            Err(FSpecError::Decay(format!(
                "exponent {s} below n + 1 = {}",
                nf + 1.0
            )))
        }
    };
    match family {
        Family::RadialPower { c, s } => {
            if !(*c > 0.0) {
                return Err(FSpecError::Positivity(format!("coefficient {c} <= 0")));
            }
            decay(*s)?;
            Ok(verified)
        }
        Family::AngularModulated { c, s, eps, .. } => {
            if n != 2 {
                return Err(FSpecError::Unsupported(
                    "angular modulation is only defined for n = 2".into(),
                ));
            }
            if !(*c > 0.0) {
                return Err(FSpecError::Positivity(format!("coefficient {c} <= 0")));
            }
            if !(eps.abs() < 1.0) {
                return Err(FSpecError::Positivity(format!(
                    "modulation {eps} must satisfy |eps| < 1"
                )));
            }
            decay(*s)?;
            Ok(verified)
        }
        Family::Tabulated(t) => {
            if n != 2 && t.n_theta != 1 {
                return Err(FSpecError::Unsupported(
                    "angular tables are only defined for n = 2".into(),
                ));
            }
            t.validate()?;
            Ok(Validation {
                decay: Check::Assumed,
                log_regularity: Check::Assumed,
                ..verified
            })
        }
        Family::ProductHeight { base, height } => {
            if matches!(**base, Family::ProductHeight { .. }) {
                return Err(FSpecError::Unsupported("nested height factors".into()));
            }
            let v = validate_family(n, base)?;
            height.validate()?;
            Ok(v)
        }
        Family::SubsolutionCurvature { rho1, a } => {
            if !(*rho1 > 0.0) {
                return Err(FSpecError::Positivity(format!("rho1 {rho1} <= 0")));
            }
            if !(*a > 2.0) {
                return Err(FSpecError::Decay(format!("exponent a = {a} must exceed 2")));
            }
            Ok(verified)
        }
    }
}

#[inline]
fn eval_family(n: usize, family: &Family, r: f64, theta: f64, z: f64) -> (f64, f64) {
    match family {
        Family::RadialPower { c, s } => (c * r.powf(-s), 0.0),
        Family::AngularModulated { c, s, eps, m } => {
            (c * r.powf(-s) * (1.0 + eps * (*m as f64 * theta).cos()), 0.0)
        }
        Family::Tabulated(t) => (t.eval(r, theta), 0.0),
        Family::ProductHeight { base, height } => {
            let (b, _) = eval_family(n, base, r, theta, z);
            let (h, dh) = height.eval(z);
            (b * h, b * dh)
        }
        Family::SubsolutionCurvature { rho1, a } => {
            let s = crate::barriers::ExplicitSubsolution::new(n, *rho1, *a)
                .map(|b| b.curvature_unchecked(r))
                .unwrap_or(f64::NAN);
            (s, 0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_power_example() {
        let f = FSpec::radial_power(2, 1.0, 4.0);
        assert_eq!(f.validate().unwrap().decay, Check::Verified);
        assert_eq!(f.eval([2.0, 0.0], 0.0), (1.0 / 16.0, 0.0));
        assert!(f.is_radial() && f.is_height_free());
    }

    #[test]
    fn rejections_name_the_hypothesis() {
        let slow = FSpec::radial_power(3, 1.0, 2.0);
        assert!(matches!(slow.validate(), Err(FSpecError::Decay(_))));
        let neg = FSpec::radial_power(2, -1.0, 4.0);
        assert!(matches!(neg.validate(), Err(FSpecError::Positivity(_))));
        let dec = FSpec::new(
            2,
            Family::ProductHeight {
                base: Box::new(Family::RadialPower { c: 1.0, s: 4.0 }),
                height: Height::Tanh {
                    amplitude: 0.5,
                    rate: -1.0,
                },
            },
        );
        let err = dec.validate().unwrap_err();
        assert!(matches!(err, FSpecError::Monotonicity(_)));
        assert!(err.to_string().contains("f_z >= 0"));
    }

    #[test]
    fn modulated_and_height_values() {
        let f = FSpec::new(
            2,
            Family::AngularModulated {
                c: 1.0,
                s: 3.0,
                eps: 0.3,
                m: 2,
            },
        );
        f.validate().unwrap();
        let (v, _) = f.eval([0.0, 2.0], 0.0);
        assert!((v - 0.125 * 0.7).abs() < 1e-15);
        let g = FSpec::new(
            2,
            Family::ProductHeight {
                base: Box::new(Family::RadialPower { c: 1.0, s: 4.0 }),
                height: Height::Tanh {
                    amplitude: 0.5,
                    rate: 2.0,
                },
            },
        );
        g.validate().unwrap();
        let (v, vz) = g.eval([1.0, 0.0], 0.0);
        assert_eq!(v, 1.0);
        assert!((vz - 1.0).abs() < 1e-15);
        let eps = 1e-6;
        let fd = (g.eval([1.3, 0.4], 0.2 + eps).0 - g.eval([1.3, 0.4], 0.2 - eps).0) / (2.0 * eps);
        assert!((fd - g.eval([1.3, 0.4], 0.2).1).abs() < 1e-8);
    }

    #[test]
    fn tabulated_reproduces_power_law_and_nodes() {
        let radii: Vec<f64> = vec![1.0, 2.0, 4.0];
        let n_theta = 4;
        let mut values = Vec::new();
        for r in &radii {
            for j in 0..n_theta {
                let th = std::f64::consts::PI * 0.5 * j as f64;
                values.push(r.powf(-4.0) * (1.0 + 0.1 * th.cos()));
            }
        }
        let f = FSpec::new(2, Family::Tabulated(Tabulated { radii, n_theta, values }));
        assert_eq!(f.validate().unwrap().decay, Check::Assumed);
        let (v, _) = f.eval([3.0, 0.0], 0.0);
        assert!((v - 3f64.powf(-4.0) * 1.1).abs() < 1e-12);
        let (v, _) = f.eval([8.0, 0.0], 0.0);
        assert!((v - 8f64.powf(-4.0) * 1.1).abs() < 1e-12);
    }

    #[test]
    fn subsolution_bound_coefficients() {
        let f = FSpec::subsolution_bound(2, 1.0, 3.0);
        match f.family {
            Family::RadialPower { c, s } => {
                assert!((c - 0.125).abs() < 1e-15);
                assert_eq!(s, 4.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn serde_roundtrip() {
        let f = FSpec::new(
            2,
            Family::ProductHeight {
                base: Box::new(Family::AngularModulated {
                    c: 1.0,
                    s: 3.0,
                    eps: 0.3,
                    m: 2,
                }),
                height: Height::Tanh {
                    amplitude: 0.2,
                    rate: 1.0,
                },
            },
        );
        let s = serde_json::to_string(&f).unwrap();
        let back: FSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
}
