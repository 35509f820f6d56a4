//! Adaptive eighth-order Dormand-Prince integrator (DOP853) with the
//! seventh-order continuous extension, for autonomous systems.

use crate::dop853_tableau::{A, B, D, E3, E5, N_STAGES, N_STAGES_EXT};
use crate::error::{BebError, Result};

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const ERROR_EXPONENT: f64 = -1.0 / 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

/// One accepted step together with its continuous extension.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Seven interpolation vectors of length n, stored contiguously.
    coeffs: Vec<f64>,
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.dim();
        let x = (t - self.t0) / self.h;
        let ys = &mut out[..n];
        ys.iter_mut().for_each(|v| *v = 0.0);
        for (i, k) in (0..7).rev().enumerate() {
            let f = &self.coeffs[k * n..(k + 1) * n];
            let m = if i % 2 == 0 { x } else { 1.0 - x };
            for j in 0..n {
                ys[j] = (ys[j] + f[j]) * m;
            }
        }
        for j in 0..n {
            ys[j] += self.y0[j];
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    /// The scalar polynomial t -> c . y(t) on this step; `c` may be shorter
    /// than the state (remaining weights are zero).
    pub fn project(&self, c: &[f64]) -> ScalarPoly {
        let n = self.dim();
        let mut k = [0.0; 7];
        for (i, ki) in k.iter_mut().enumerate() {
            let f = &self.coeffs[i * n..(i + 1) * n];
            *ki = c.iter().zip(f).map(|(a, b)| a * b).sum();
        }
        ScalarPoly {
            t0: self.t0,
            h: self.h,
            base: c.iter().zip(&self.y0).map(|(a, b)| a * b).sum(),
            k,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScalarPoly {
    pub t0: f64,
    pub h: f64,
    base: f64,
    k: [f64; 7],
}

impl ScalarPoly {
    pub fn eval(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.h;
        let mut y = 0.0;
        for (i, k) in (0..7).rev().enumerate() {
            let m = if i % 2 == 0 { x } else { 1.0 - x };
            y = (y + self.k[k]) * m;
        }
        y + self.base
    }
}

pub enum StepControl {
    Continue,
    /// Stop the integration; the caller has what it needs.
    Stop,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub steps: usize,
    pub stopped: bool,
}

fn rms_norm(v: &[f64], scale: &[f64]) -> f64 {
    let n = v.len() as f64;
    (v.iter().zip(scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n).sqrt()
}

/// Integrates y' = f(y) from (t0, y0) until t_end or until `on_step` asks to stop.
pub fn integrate<F, S>(
    f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    tol: &Tolerances,
    mut on_step: S,
) -> Result<Outcome>
where
    F: Fn(&[f64], &mut [f64]),
    S: FnMut(&DenseStep) -> StepControl,
{
    let n = y0.len();
    if !y0.iter().all(|v| v.is_finite()) {
        return Err(BebError::Integration("non-finite initial state".into()));
    }
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut fy = vec![0.0; n];
    f(&y, &mut fy);
    if t_end <= t0 {
        return Ok(Outcome {
            t,
            y,
            steps: 0,
            stopped: false,
        });
    }

    let mut k = vec![vec![0.0; n]; N_STAGES_EXT];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut fnew = vec![0.0; n];
    let mut scale = vec![0.0; n];
    let mut err5 = vec![0.0; n];
    let mut err3 = vec![0.0; n];

    let mut h = initial_step(&f, &y, &fy, tol).min(tol.max_step).min(t_end - t0);
    let mut steps = 0usize;

    while t < t_end {
        if steps >= tol.max_steps {
            return Err(BebError::Integration(format!(
                "step limit {} reached at t = {t}",
                tol.max_steps
            )));
        }
        let mut rejected = false;
        loop {
            let h_min = 10.0 * f64::EPSILON * t.abs().max(1.0);
            if h < h_min {
                return Err(BebError::Integration(format!("step size underflow at t = {t}")));
            }
            let mut h_try = h.min(tol.max_step);
            let last = t + h_try >= t_end;
            if last {
                h_try = t_end - t;
            }

            k[0].copy_from_slice(&fy);
            for s in 1..N_STAGES {
                for j in 0..n {
                    let mut acc = 0.0;
                    for (r, kr) in k.iter().enumerate().take(s) {
                        acc += A[s][r] * kr[j];
                    }
                    ytmp[j] = y[j] + h_try * acc;
                }
                let (_, tail) = k.split_at_mut(s);
                f(&ytmp, &mut tail[0]);
            }
            for j in 0..n {
                let mut acc = 0.0;
                for s in 0..N_STAGES {
                    acc += B[s] * k[s][j];
                }
                ynew[j] = y[j] + h_try * acc;
            }
            f(&ynew, &mut fnew);
            k[N_STAGES].copy_from_slice(&fnew);

            for j in 0..n {
                scale[j] = tol.atol + tol.rtol * y[j].abs().max(ynew[j].abs());
                let mut e5 = 0.0;
                let mut e3 = 0.0;
                for s in 0..=N_STAGES {
                    e5 += E5[s] * k[s][j];
                    e3 += E3[s] * k[s][j];
                }
                err5[j] = e5;
                err3[j] = e3;
            }
            let e5n = rms_norm(&err5, &scale).powi(2) * n as f64;
            let e3n = rms_norm(&err3, &scale).powi(2) * n as f64;
            let err = if e5n == 0.0 && e3n == 0.0 {
                0.0
            } else {
                h_try.abs() * e5n / ((e5n + 0.01 * e3n) * n as f64).sqrt()
            };
            if !err.is_finite() {
                h *= MIN_FACTOR;
                rejected = true;
                continue;
            }

            if err < 1.0 {
                let mut factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(ERROR_EXPONENT)).min(MAX_FACTOR)
                };
                if rejected {
                    factor = factor.min(1.0);
                }
                let dense = dense_step(&f, t, h_try, &y, &ynew, &fy, &fnew, &mut k, &mut ytmp);
                t = if last { t_end } else { t + h_try };
                y.copy_from_slice(&ynew);
                fy.copy_from_slice(&fnew);
                h = h_try * factor;
                steps += 1;
                if let StepControl::Stop = on_step(&dense) {
                    return Ok(Outcome {
                        t,
                        y,
                        steps,
                        stopped: true,
                    });
                }
                break;
            } else {
                h = h_try * (SAFETY * err.powf(ERROR_EXPONENT)).max(MIN_FACTOR);
                rejected = true;
            }
        }
    }
    Ok(Outcome {
        t,
        y,
        steps,
        stopped: false,
    })
}

/// One DOP853 step of size h without error control. Used to polish event
/// locations to endpoint accuracy.
pub fn single_step<F: Fn(&[f64], &mut [f64])>(f: &F, y0: &[f64], h: f64) -> Vec<f64> {
    let n = y0.len();
    let mut k = vec![vec![0.0; n]; N_STAGES];
    let mut ytmp = vec![0.0; n];
    f(y0, &mut k[0]);
    for s in 1..N_STAGES {
        for j in 0..n {
            let mut acc = 0.0;
            for (r, kr) in k.iter().enumerate().take(s) {
                acc += A[s][r] * kr[j];
            }
            ytmp[j] = y0[j] + h * acc;
        }
        let (_, tail) = k.split_at_mut(s);
        f(&ytmp, &mut tail[0]);
    }
    (0..n)
        .map(|j| y0[j] + h * (0..N_STAGES).map(|s| B[s] * k[s][j]).sum::<f64>())
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn dense_step<F: Fn(&[f64], &mut [f64])>(
    f: &F,
    t: f64,
    h: f64,
    y: &[f64],
    ynew: &[f64],
    f_old: &[f64],
    f_new: &[f64],
    k: &mut [Vec<f64>],
    ytmp: &mut [f64],
) -> DenseStep {
    let n = y.len();
    for s in N_STAGES + 1..N_STAGES_EXT {
        for j in 0..n {
            let mut acc = 0.0;
            for (r, kr) in k.iter().enumerate().take(s) {
                acc += A[s][r] * kr[j];
            }
            ytmp[j] = y[j] + h * acc;
        }
        let (_, tail) = k.split_at_mut(s);
        f(ytmp, &mut tail[0]);
    }
    let mut coeffs = vec![0.0; 7 * n];
    for j in 0..n {
        let dy = ynew[j] - y[j];
        coeffs[j] = dy;
        coeffs[n + j] = h * f_old[j] - dy;
        coeffs[2 * n + j] = 2.0 * dy - h * (f_new[j] + f_old[j]);
        for (row, d) in D.iter().enumerate() {
            let mut acc = 0.0;
            for (s, ks) in k.iter().enumerate() {
                acc += d[s] * ks[j];
            }
            coeffs[(3 + row) * n + j] = h * acc;
        }
    }
    DenseStep {
        t0: t,
        h,
        y0: y.to_vec(),
        y1: ynew.to_vec(),
        coeffs,
    }
}

fn initial_step<F: Fn(&[f64], &mut [f64])>(f: &F, y0: &[f64], f0: &[f64], tol: &Tolerances) -> f64 {
    let n = y0.len();
    let scale: Vec<f64> = y0.iter().map(|v| tol.atol + v.abs() * tol.rtol).collect();
    let d0 = rms_norm(y0, &scale);
    let d1 = rms_norm(f0, &scale);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    f(&y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms_norm(&diff, &scale) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 8.0)
    };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_one_period() {
        let f = |y: &[f64], out: &mut [f64]| {
            out[0] = y[1];
            out[1] = -y[0];
        };
        let tol = Tolerances::default();
        let tp = 2.0 * std::f64::consts::PI;
        let out = integrate(f, 0.0, &[1.0, 0.0], tp, &tol, |_| StepControl::Continue).unwrap();
        assert!((out.y[0] - 1.0).abs() < 1e-9);
        assert!(out.y[1].abs() < 1e-9);
    }

    #[test]
    fn dense_output_matches_exact_solution() {
        let f = |y: &[f64], out: &mut [f64]| {
            out[0] = -0.5 * y[0];
        };
        let tol = Tolerances::default();
        let mut worst: f64 = 0.0;
        integrate(f, 0.0, &[2.0], 10.0, &tol, |d| {
            for i in 0..=10 {
                let t = d.t0 + d.h * i as f64 / 10.0;
                let exact = 2.0 * (-0.5 * t).exp();
                worst = worst.max((d.eval(t)[0] - exact).abs());
                let p = d.project(&[3.0]);
                worst = worst.max((p.eval(t) - 3.0 * exact).abs());
            }
            StepControl::Continue
        })
        .unwrap();
        assert!(worst < 1e-9, "dense error {worst}");
    }

    #[test]
    fn single_step_matches_controlled_endpoint() {
        let f = |y: &[f64], out: &mut [f64]| {
            out[0] = y[1];
            out[1] = -y[0];
        };
        let y = single_step(&f, &[1.0, 0.0], 0.1);
        assert!((y[0] - 0.1f64.cos()).abs() < 1e-14, "{:e}", y[0] - 0.1f64.cos());
        assert!((y[1] + 0.1f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn early_stop_reports_step_end() {
        let f = |_y: &[f64], out: &mut [f64]| out[0] = 1.0;
        let tol = Tolerances::default();
        let out = integrate(f, 0.0, &[0.0], 100.0, &tol, |_| StepControl::Stop).unwrap();
        assert!(out.stopped);
        assert!((out.y[0] - out.t).abs() < 1e-12);
    }
}
