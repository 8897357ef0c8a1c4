//! Gaussian peak fitting, `y = A exp(-(t - t_c)^2 / (2 sigma^2)) + B`.
//!
//! Levenberg-Marquardt with Marquardt's diagonal scaling, started from a coarse
//! grid search over centre and width in which amplitude and offset are solved
//! linearly. Abscissae are rescaled to `[-1, 1]` internally.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub offset: f64,
}

impl GaussianParams {
    pub fn eval(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.width;
        self.amplitude * (-0.5 * x * x).exp() + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub params: GaussianParams,
    /// 1-sigma uncertainties of (amplitude, center, width, offset) from the
    /// residual-scaled inverse curvature.
    pub sigma: GaussianParams,
    /// Parameter covariance in the order (amplitude, center, width, offset).
    pub covariance: [[f64; 4]; 4],
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Scaled {
    t: Vec<f64>,
    y: Vec<f64>,
    shift: f64,
    scale: f64,
}

fn model_and_jacobian(p: &Vector4<f64>, t: f64) -> (f64, Vector4<f64>) {
    let (a, c, s, _) = (p[0], p[1], p[2], p[3]);
    let x = (t - c) / s;
    let e = (-0.5 * x * x).exp();
    let jac = Vector4::new(e, a * e * x / s, a * e * x * x / s, 1.0);
    (a * e + p[3], jac)
}

fn ssr(p: &Vector4<f64>, data: &Scaled) -> f64 {
    data.t
        .iter()
        .zip(&data.y)
        .map(|(&t, &y)| {
            let r = y - model_and_jacobian(p, t).0;
            r * r
        })
        .sum()
}

fn normal_equations(p: &Vector4<f64>, data: &Scaled) -> (Matrix4<f64>, Vector4<f64>) {
    let mut h = Matrix4::zeros();
    let mut g = Vector4::zeros();
    for (&t, &y) in data.t.iter().zip(&data.y) {
        let (f, j) = model_and_jacobian(p, t);
        h += j * j.transpose();
        g += j * (y - f);
    }
    (h, g)
}

/// Best (A, B) for a fixed centre and width, with the residual sum of squares.
fn linear_amplitudes(data: &Scaled, c: f64, s: f64) -> Option<(f64, f64, f64)> {
    let mut m = Matrix2::zeros();
    let mut v = Vector2::zeros();
    for (&t, &y) in data.t.iter().zip(&data.y) {
        let x = (t - c) / s;
        let b = Vector2::new((-0.5 * x * x).exp(), 1.0);
        m += b * b.transpose();
        v += b * y;
    }
    let sol = m.try_inverse()? * v;
    let p = Vector4::new(sol[0], c, s, sol[1]);
    Some((sol[0], sol[1], ssr(&p, data)))
}

fn coarse_guess(data: &Scaled) -> Vector4<f64> {
    let span = 2.0;
    let n = data.t.len();
    let min_gap = data
        .t
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .filter(|d| *d > 0.0)
        .fold(span, f64::min);
    let widths: Vec<f64> = (0..24)
        .map(|i| 0.5 * min_gap * (2.0 * span / min_gap).powf(i as f64 / 23.0))
        .collect();
    let mut best: Option<(f64, Vector4<f64>)> = None;
    for &c in &data.t {
        for &s in &widths {
            if let Some((a, b, r)) = linear_amplitudes(data, c, s) {
                if a > 0.0 && best.as_ref().is_none_or(|(br, _)| r < *br) {
                    best = Some((r, Vector4::new(a, c, s, b)));
                }
            }
        }
    }
    best.map(|(_, p)| p).unwrap_or_else(|| {
        let (imax, ymax) = data
            .y
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &y)| if y > b.1 { (i, y) } else { b });
        let ymin = data.y.iter().cloned().fold(f64::INFINITY, f64::min);
        Vector4::new(ymax - ymin, data.t[imax], span / n as f64, ymin)
    })
}

/// Fits a gaussian peak to `(t, y)` points.
///
/// Without an `initial_guess` the start comes from the coarse grid search.
pub fn fit_gaussian(points: &[(f64, f64)], initial_guess: Option<GaussianParams>) -> Result<GaussianFit> {
    fit_gaussian_with(points, initial_guess, DEFAULT_MAX_ITERATIONS)
}

pub fn fit_gaussian_with(
    points: &[(f64, f64)],
    initial_guess: Option<GaussianParams>,
    max_iterations: usize,
) -> Result<GaussianFit> {
    if points.len() < 5 {
        return Err(Error::InsufficientData(points.len()));
    }
    if points.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::Validation("fit data must be finite".into()));
    }
    let ymin = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let ymax = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if ymax - ymin <= f64::EPSILON * ymax.abs().max(ymin.abs()) {
        return Err(Error::DegenerateData);
    }
    let tmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let tmax = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(tmax > tmin) {
        return Err(Error::DegenerateData);
    }
    let shift = 0.5 * (tmax + tmin);
    let scale = 0.5 * (tmax - tmin);
    let data = Scaled {
        t: points.iter().map(|p| (p.0 - shift) / scale).collect(),
        y: points.iter().map(|p| p.1).collect(),
        shift,
        scale,
    };

    let mut p = match initial_guess {
        Some(g) => {
            if ![g.amplitude, g.center, g.width, g.offset].iter().all(|v| v.is_finite()) || g.width == 0.0 {
                return Err(Error::Validation("initial guess must be finite with non-zero width".into()));
            }
            Vector4::new(g.amplitude, (g.center - shift) / scale, g.width.abs() / scale, g.offset)
        }
        None => coarse_guess(&data),
    };

    let y_norm: f64 = data.y.iter().map(|y| y * y).sum();
    let mut lambda = 1e-3;
    let mut current = ssr(&p, &data);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iterations {
        iterations += 1;
        let (h, g) = normal_equations(&p, &data);
        let mut accepted = None;
        while lambda <= 1e16 {
            let mut damped = h;
            for i in 0..4 {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-30);
            }
            if let Some(step) = damped.cholesky().map(|c| c.solve(&g)) {
                let trial = p + step;
                let r = ssr(&trial, &data);
                if r.is_finite() && r <= current {
                    accepted = Some((trial, step, r));
                    break;
                }
            }
            lambda *= 10.0;
        }
        let Some((trial, step, r)) = accepted else {
            // no downhill step at any damping: p is the minimum to working precision
            converged = true;
            break;
        };
        let small_step = (0..4).all(|i| step[i].abs() <= 1e-10 * (trial[i].abs() + 1e-10));
        let flat = current - r <= 1e-15 * current;
        p = trial;
        current = r;
        lambda = (lambda / 10.0).max(1e-12);
        if small_step || flat || current <= 1e-30 * y_norm {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(max_iterations));
    }

    let n = data.t.len();
    let dof = (n - 4).max(1) as f64;
    let s2 = current / dof;
    let (h, _) = normal_equations(&p, &data);
    let inv = h.try_inverse().unwrap_or_else(|| Matrix4::from_element(f64::NAN));
    // map the covariance back from scaled abscissae
    let jac = [1.0, data.scale, data.scale, 1.0];
    let mut covariance = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            covariance[i][j] = s2 * inv[(i, j)] * jac[i] * jac[j];
        }
    }
    let params = GaussianParams {
        amplitude: p[0],
        center: p[1] * data.scale + data.shift,
        width: p[2].abs() * data.scale,
        offset: p[3],
    };
    let sigma = GaussianParams {
        amplitude: covariance[0][0].sqrt(),
        center: covariance[1][1].sqrt(),
        width: covariance[2][2].sqrt(),
        offset: covariance[3][3].sqrt(),
    };
    Ok(GaussianFit {
        params,
        sigma,
        covariance,
        rms_residual: (current / n as f64).sqrt(),
        iterations,
        converged,
    })
}
