//! The test-function pair (g, ĝ) with compactly supported ĝ, and the energy
//! cutoff χ.
//!
//! Fourier convention: ĝ(t) = ∫ g(x) e^{-ixt} dx, g(x) = (2π)^{-1} ∫ ĝ(t) e^{ixt} dt.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::CompositeRule;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralWindow {
    /// Support radius T of ĝ.
    pub support: f64,
    /// Centre E of the cutoff χ.
    pub energy: f64,
    /// χ vanishes for |E' - E| >= half_width.
    pub half_width: f64,
    /// χ = 1 for |E' - E| <= plateau * half_width.
    pub plateau: f64,
    /// ĝ(0).
    pub amplitude: f64,
    #[serde(skip)]
    rule: Option<CompositeRule>,
}

impl SpectralWindow {
    pub fn new(support: f64, energy: f64, half_width: f64) -> Result<Self> {
        if !(support > 0.0) || !support.is_finite() {
            return Err(Error::param("support T must be positive"));
        }
        if !(half_width > 0.0) {
            return Err(Error::param("energy half-width must be positive"));
        }
        if !energy.is_finite() {
            return Err(Error::param("energy must be finite"));
        }
        Ok(Self {
            support,
            energy,
            half_width,
            plateau: 0.5,
            amplitude: 1.0,
            rule: None,
        }
        .with_rule())
    }

    pub fn with_plateau(mut self, plateau: f64) -> Result<Self> {
        if !(0.5..1.0).contains(&plateau) {
            return Err(Error::param("plateau fraction must lie in [0.5, 1)"));
        }
        self.plateau = plateau;
        Ok(self)
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    fn with_rule(mut self) -> Self {
        self.rule = Some(CompositeRule::new(0.0, self.support, 128, 16));
        self
    }

    fn rule(&self) -> CompositeRule {
        self.rule.clone().unwrap_or_else(|| CompositeRule::new(0.0, self.support, 128, 16))
    }

    /// ĝ(t) = amplitude * exp(-t^2 / (T^2 - t^2)) on |t| < T, zero outside.
    pub fn ghat(&self, t: f64) -> f64 {
        let tt = self.support * self.support;
        if t.abs() >= self.support {
            return 0.0;
        }
        self.amplitude * (-t * t / (tt - t * t)).exp()
    }

    /// g(x) = π^{-1} ∫_0^T ĝ(t) cos(xt) dt.
    pub fn g(&self, x: f64) -> f64 {
        self.rule().integrate(|t| self.ghat(t) * (x * t).cos()) / PI
    }

    /// g at many points, reusing one quadrature rule.
    pub fn g_many(&self, xs: &[f64]) -> Vec<f64> {
        let rule = self.rule();
        let w: Vec<f64> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&t, &w)| w * self.ghat(t) / PI)
            .collect();
        xs.iter()
            .map(|&x| rule.nodes.iter().zip(&w).map(|(&t, &w)| w * (x * t).cos()).sum())
            .collect()
    }

    /// Smooth cutoff, 1 on the plateau and 0 outside (E - dE, E + dE).
    pub fn chi(&self, e: f64) -> f64 {
        let d = (e - self.energy).abs();
        let inner = self.plateau * self.half_width;
        if d <= inner {
            1.0
        } else if d >= self.half_width {
            0.0
        } else {
            smooth_step((self.half_width - d) / (self.half_width - inner))
        }
    }
}

/// C-infinity step: 0 at u <= 0, 1 at u >= 1.
pub fn smooth_step(u: f64) -> f64 {
    let f = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let a = f(u);
    let b = f(1.0 - u);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}
