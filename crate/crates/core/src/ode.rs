//! Adaptive Dormand–Prince 5(4) integrator with exact landing on requested
//! output times and an observer hook that can veto accepted steps.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            h_init: None,
            h_min: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

/// Hooks into the step loop. `accept` may veto a step that passed error
/// control, in which case the step is halved and retried.
pub trait StepObserver {
    fn accept(&mut self, _t: f64, _y: &[f64]) -> bool {
        true
    }
    fn commit(&mut self, _t: f64, _y: &[f64]) -> Result<()> {
        Ok(())
    }
    fn output(&mut self, _index: usize, _t: f64, _y: &[f64]) {}
}

/// Observer that does nothing.
pub struct NoObserver;
impl StepObserver for NoObserver {}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates y' = f(t, y) from `t0` through each of `outputs` (monotone in
/// the direction of integration, all on the same side of `t0`) and returns
/// the state at every output time.
pub fn solve<F, O>(
    f: F,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    opts: &OdeOptions,
    observer: &mut O,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64, &[f64], &mut [f64]),
    O: StepObserver + ?Sized,
{
    let dim = y0.len();
    if outputs.is_empty() {
        return Ok(vec![]);
    }
    let dir = outputs
        .iter()
        .map(|&t| t - t0)
        .find(|d| *d != 0.0)
        .map(f64::signum)
        .unwrap_or(1.0);
    let mut last = t0;
    for &t in outputs {
        if !t.is_finite() || (t - last) * dir < 0.0 {
            return Err(Error::param("output times must be finite and monotone"));
        }
        last = t;
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut ytmp = vec![0.0; dim];
    let mut ynew = vec![0.0; dim];
    f(t, &y, &mut k[0]);

    let span = (outputs[outputs.len() - 1] - t0).abs();
    let mut h = opts.h_init.unwrap_or_else(|| (1e-2 * span.max(1e-3)).min(0.05));
    let mut results = Vec::with_capacity(outputs.len());
    let mut steps = 0usize;
    observer.commit(t, &y)?;

    for (idx, &target) in outputs.iter().enumerate() {
        while (target - t) * dir > 0.0 {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::TooManySteps(opts.max_steps));
            }
            let remaining = (target - t).abs();
            let mut hs = h.min(remaining);
            let landing = hs >= remaining * (1.0 - 1e-12);
            if landing {
                hs = remaining;
            }
            let step = dir * hs;
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += step * A[s][j] * kj[i];
                    }
                    ytmp[i] = acc;
                }
                f(t + C[s] * step, &ytmp, &mut k[s]);
            }
            // The 7th stage is evaluated at the 5th-order solution (FSAL).
            let mut err = 0.0f64;
            for i in 0..dim {
                let mut y5 = y[i];
                let mut e = 0.0;
                for s in 0..7 {
                    y5 += step * B5[s] * k[s][i];
                    e += step * (B5[s] - B4[s]) * k[s][i];
                }
                ynew[i] = y5;
                let sc = opts.atol + opts.rtol * y[i].abs().max(y5.abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
                h = hs * 0.25;
                if h < opts.h_min {
                    return Err(Error::NonFinite(format!("state at t = {t}")));
                }
                continue;
            }
            let t_new = if landing { target } else { t + step };
            if err <= 1.0 && observer.accept(t_new, &ynew) {
                t = t_new;
                std::mem::swap(&mut y, &mut ynew);
                let last_stage = k[6].clone();
                k[0].copy_from_slice(&last_stage);
                observer.commit(t, &y)?;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // Keep the natural step even if we shortened it to land on an output.
                h = if landing { h.max(hs * fac) } else { hs * fac };
            } else {
                let fac = if err > 1.0 { (0.9 * err.powf(-0.2)).clamp(0.1, 0.5) } else { 0.5 };
                h = hs * fac;
                if h < opts.h_min {
                    return Err(Error::StepUnderflow { t, h });
                }
            }
        }
        observer.output(idx, t, &y);
        results.push(y.clone());
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let out = solve(
            |_, y, dy| dy[0] = -y[0],
            0.0,
            &[1.0],
            &[0.5, 1.0, 2.0],
            &OdeOptions::default(),
            &mut NoObserver,
        )
        .unwrap();
        for (y, t) in out.iter().zip([0.5f64, 1.0, 2.0]) {
            assert!((y[0] - (-t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_rotation() {
        let out = solve(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            &[-1.0],
            &OdeOptions::default(),
            &mut NoObserver,
        )
        .unwrap();
        assert!((out[0][0] - 1f64.cos()).abs() < 1e-11);
        assert!((out[0][1] - 1f64.sin()).abs() < 1e-11);
    }

    #[test]
    fn zero_time_output_is_initial_state() {
        let out = solve(|_, _, dy| dy[0] = 1.0, 0.0, &[3.0], &[0.0], &OdeOptions::default(), &mut NoObserver)
            .unwrap();
        assert_eq!(out[0], vec![3.0]);
    }

    #[test]
    fn non_monotone_outputs_rejected() {
        let r = solve(|_, _, dy| dy[0] = 1.0, 0.0, &[0.0], &[1.0, 0.5], &OdeOptions::default(), &mut NoObserver);
        assert!(r.is_err());
    }

    struct CapStep {
        last: f64,
        max_jump: f64,
        rejections: usize,
    }
    impl StepObserver for CapStep {
        fn accept(&mut self, t: f64, _y: &[f64]) -> bool {
            let ok = (t - self.last).abs() <= self.max_jump;
            if !ok {
                self.rejections += 1;
            }
            ok
        }
        fn commit(&mut self, t: f64, _y: &[f64]) -> Result<()> {
            self.last = t;
            Ok(())
        }
    }

    #[test]
    fn observer_veto_forces_smaller_steps() {
        let mut obs = CapStep { last: 0.0, max_jump: 0.01, rejections: 0 };
        let opts = OdeOptions { rtol: 1e-6, atol: 1e-6, ..Default::default() };
        let out = solve(|_, _, dy| dy[0] = 1.0, 0.0, &[0.0], &[1.0], &opts, &mut obs).unwrap();
        assert!((out[0][0] - 1.0).abs() < 1e-12);
        assert!(obs.rejections > 0);
    }
}
