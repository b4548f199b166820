use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::PlsError;

/// Boundary used when a fitted mean hits the edge of the family's range.
pub const MEAN_CLAMP: f64 = 1e-10;

/// Response family with its canonical link: identity, logit or log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
    Poisson,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
        }
    }

    pub fn link(self, m: f64) -> f64 {
        match self {
            Family::Gaussian => m,
            Family::Binomial => (m / (1.0 - m)).ln(),
            Family::Poisson => m.ln(),
        }
    }

    pub fn inv_link(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Binomial => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            Family::Poisson => eta.exp(),
        }
    }

    /// d m / d eta at the linear predictor `eta`.
    pub fn mu_eta(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => {
                let m = self.inv_link(eta);
                m * (1.0 - m)
            }
            Family::Poisson => eta.exp(),
        }
    }

    pub fn variance(self, m: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => m * (1.0 - m),
            Family::Poisson => m,
        }
    }

    /// Squared deviance contribution of a single observation.
    pub fn unit_deviance(self, y: f64, m: f64) -> f64 {
        match self {
            Family::Gaussian => (y - m) * (y - m),
            Family::Binomial => 2.0 * (xlogy(y, y / m) + xlogy(1.0 - y, (1.0 - y) / (1.0 - m))),
            Family::Poisson => 2.0 * (xlogy(y, y / m) - (y - m)),
        }
    }

    pub fn pearson_resid(self, y: f64, m: f64) -> f64 {
        (y - m) / self.variance(m).sqrt()
    }

    /// Starting mean for IRLS.
    pub fn initial_mean(self, y: f64) -> f64 {
        match self {
            Family::Gaussian => y,
            Family::Binomial => (y + 0.5) / 2.0,
            Family::Poisson => y + 0.1,
        }
    }

    /// Clamp a mean into the open range where variance and deviance are
    /// finite. Returns the clamped value and whether clamping happened.
    pub fn clamp_mean(self, m: f64) -> (f64, bool) {
        match self {
            Family::Gaussian => (m, false),
            Family::Binomial => {
                if m < MEAN_CLAMP {
                    (MEAN_CLAMP, true)
                } else if m > 1.0 - MEAN_CLAMP {
                    (1.0 - MEAN_CLAMP, true)
                } else {
                    (m, false)
                }
            }
            Family::Poisson => {
                if m < MEAN_CLAMP {
                    (MEAN_CLAMP, true)
                } else {
                    (m, false)
                }
            }
        }
    }

    /// Whether `y` is in the support of the family.
    pub fn valid_response(self, y: f64) -> bool {
        match self {
            Family::Gaussian => y.is_finite(),
            Family::Binomial => y == 0.0 || y == 1.0,
            Family::Poisson => y.is_finite() && y >= 0.0 && y.fract() == 0.0,
        }
    }

    /// Dispersion is estimated only for the gaussian family.
    pub fn estimates_dispersion(self) -> bool {
        matches!(self, Family::Gaussian)
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = PlsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Family::Gaussian),
            "binomial" => Ok(Family::Binomial),
            "poisson" => Ok(Family::Poisson),
            other => Err(PlsError::InvalidArgument(format!("unknown family '{other}'"))),
        }
    }
}
