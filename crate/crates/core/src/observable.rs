//! Observables A: the identity, constants and powers of one position
//! coordinate. These act by multiplication on grids and have symbol A(q).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    #[default]
    Identity,
    Constant { value: f64 },
    /// q_axis^power.
    QPower { axis: usize, power: u32 },
}

impl Observable {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            Observable::QPower { axis, .. } if axis >= n => Err(Error::param(format!(
                "observable axis {axis} out of range for dimension {n}"
            ))),
            Observable::Constant { value } if !value.is_finite() => Err(Error::param("constant observable must be finite")),
            _ => Ok(()),
        }
    }

    /// A(q); the momentum is not used.
    pub fn at_position(&self, q: &[f64]) -> f64 {
        match *self {
            Observable::Identity => 1.0,
            Observable::Constant { value } => value,
            Observable::QPower { axis, power } => q[axis].powi(power as i32),
        }
    }

    /// A at a phase-space point stored as [q, p].
    pub fn at_phase_point(&self, z: &[f64]) -> f64 {
        self.at_position(&z[..z.len() / 2])
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Observable::Constant { value } if *value == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation() {
        assert_eq!(Observable::Identity.at_position(&[3.0]), 1.0);
        assert_eq!(Observable::QPower { axis: 1, power: 2 }.at_phase_point(&[1.0, 3.0, 0.0, 0.0]), 9.0);
        assert!(Observable::QPower { axis: 1, power: 2 }.validate(1).is_err());
        assert!(Observable::Constant { value: 0.0 }.is_zero());
    }
}
