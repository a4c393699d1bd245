//! Second-stage cost `d(x, y)` as a function of aggregate procurement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hook {
    #[default]
    Zero,
    /// `alpha * (target - total)_+^2`, with `y` the shortfall.
    Shortfall { alpha: f64, target: f64 },
}

impl Hook {
    pub fn validate(&self) -> Result<()> {
        match self {
            Hook::Zero => Ok(()),
            Hook::Shortfall { alpha, target } => {
                if *alpha >= 0.0 && alpha.is_finite() && *target >= 0.0 && target.is_finite() {
                    Ok(())
                } else {
                    Err(Error::ModelError("shortfall hook needs alpha, target >= 0".into()))
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Hook::Zero)
    }

    /// `(d, y*)` for the given aggregate quantity.
    pub fn second_stage_cost(&self, total: f64) -> (f64, Option<f64>) {
        match self {
            Hook::Zero => (0.0, None),
            Hook::Shortfall { alpha, target } => {
                let y = (target - total).max(0.0);
                (alpha * y * y, Some(y))
            }
        }
    }
}
