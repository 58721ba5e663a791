//! Notch-port resonator fitting.
//!
//! The pipeline removes the cable delay, fits a circle to the resonance,
//! reads `f_r` and `Q_l` off the phase around the circle center, and recovers
//! the environment (`a`, `alpha`) from the off-resonant point. `Q_c` is the
//! diameter-corrected real coupling quality factor.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, Matrix4, Matrix5, Vector5};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm;
use crate::HBAR;

pub const MIN_POINTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S21Trace {
    pub frequency: Vec<f64>,
    pub s21: Vec<Complex64>,
    /// Power at the device input in dBm.
    #[serde(default)]
    pub power_dbm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorFit {
    pub f_r: f64,
    pub q_l: f64,
    pub q_c: f64,
    pub q_i: f64,
    pub phi: f64,
    pub a: f64,
    pub alpha: f64,
    pub tau: f64,
    pub f_r_sigma: f64,
    pub q_l_sigma: f64,
    pub q_c_sigma: f64,
    pub q_i_sigma: f64,
}

impl ResonatorFit {
    /// Model parameters with a unit environment and no uncertainties.
    pub fn ideal(f_r: f64, q_l: f64, q_c_magnitude: f64, phi: f64) -> Self {
        let q_c = q_c_magnitude / phi.cos();
        Self {
            f_r,
            q_l,
            q_c,
            q_i: 1.0 / (1.0 / q_l - 1.0 / q_c),
            phi,
            a: 1.0,
            alpha: 0.0,
            tau: 0.0,
            f_r_sigma: 0.0,
            q_l_sigma: 0.0,
            q_c_sigma: 0.0,
            q_i_sigma: 0.0,
        }
    }

    pub fn with_environment(mut self, a: f64, alpha: f64, tau: f64) -> Self {
        self.a = a;
        self.alpha = alpha;
        self.tau = tau;
        self
    }

    /// Magnitude of the complex coupling quality factor.
    pub fn q_c_magnitude(&self) -> f64 {
        self.q_c * self.phi.cos()
    }
}

pub fn notch_model(f: f64, p: &ResonatorFit) -> Complex64 {
    let i = Complex64::i();
    let env = p.a * (i * (p.alpha - 2.0 * PI * f * p.tau)).exp();
    let depth = p.q_l / p.q_c_magnitude() * (i * p.phi).exp();
    env * (1.0 - depth / (1.0 + 2.0 * i * p.q_l * (f / p.f_r - 1.0)))
}

/// Mean photon number `2 P Q_l^2 / (Q_c hbar w_r^2)` for power `P` at the device.
pub fn photon_number(power_dbm: f64, fit: &ResonatorFit) -> Result<f64> {
    if !(fit.q_l > 0.0) || !(fit.q_c > 0.0) || !(fit.f_r > 0.0) {
        return Err(Error::InvalidParameter(
            "photon number needs positive Q_l, Q_c and f_r".into(),
        ));
    }
    if power_dbm.is_nan() || power_dbm == f64::INFINITY {
        return Err(Error::InvalidParameter(format!("power {power_dbm} dBm")));
    }
    let watts = 1e-3 * 10f64.powf(power_dbm / 10.0);
    let omega = 2.0 * PI * fit.f_r;
    Ok(2.0 * watts * fit.q_l * fit.q_l / (fit.q_c * HBAR * omega * omega))
}

impl S21Trace {
    pub fn validate(&self) -> Result<()> {
        if self.frequency.len() != self.s21.len() {
            return Err(Error::InvalidTrace("frequency and S21 lengths differ".into()));
        }
        if self.frequency.len() < MIN_POINTS {
            return Err(Error::InvalidTrace(format!(
                "{} points, need at least {MIN_POINTS}",
                self.frequency.len()
            )));
        }
        if self
            .frequency
            .iter()
            .any(|f| !f.is_finite())
            || self.s21.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidTrace("non-finite value".into()));
        }
        if self.frequency.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrace("frequencies must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.frequency[self.frequency.len() - 1] - self.frequency[0]
    }

    /// Multiply every point by a constant complex factor.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            frequency: self.frequency.clone(),
            s21: self.s21.iter().map(|z| z * factor).collect(),
            power_dbm: self.power_dbm,
        }
    }

    /// Parse `freq_hz,re,im` or `freq_hz,mag_db,phase_rad` rows. An optional
    /// `# power_dbm=` line sets the device input power.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut polar: Option<bool> = None;
        let mut trace = S21Trace {
            frequency: Vec::new(),
            s21: Vec::new(),
            power_dbm: None,
        };
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidTrace(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((key, value)) = meta.split_once('=') {
                    if key.trim() == "power_dbm" {
                        trace.power_dbm = Some(value.trim().parse().map_err(|_| {
                            Error::InvalidTrace(format!("bad power_dbm `{}`", value.trim()))
                        })?);
                    }
                }
                continue;
            }
            let Some(is_polar) = polar else {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                polar = Some(match cols.as_slice() {
                    ["freq_hz", "re", "im"] => false,
                    ["freq_hz", "mag_db", "phase_rad"] => true,
                    _ => {
                        return Err(Error::InvalidTrace(format!(
                            "expected header `freq_hz,re,im` or `freq_hz,mag_db,phase_rad`, got `{line}`"
                        )))
                    }
                });
                continue;
            };
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidTrace(format!("line {}: not numeric", lineno + 1)))?;
            if vals.len() != 3 {
                return Err(Error::InvalidTrace(format!("line {}: expected 3 columns", lineno + 1)));
            }
            trace.frequency.push(vals[0]);
            trace.s21.push(if is_polar {
                Complex64::from_polar(10f64.powf(vals[1] / 20.0), vals[2])
            } else {
                Complex64::new(vals[1], vals[2])
            });
        }
        trace.validate()?;
        Ok(trace)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        if let Some(p) = self.power_dbm {
            writeln!(out, "# power_dbm={p:e}")?;
        }
        writeln!(out, "freq_hz,re,im")?;
        for (f, z) in self.frequency.iter().zip(&self.s21) {
            writeln!(out, "{f:.12e},{:.12e},{:.12e}", z.re, z.im)?;
        }
        Ok(())
    }
}

/// Evaluate the model on `points` equally spaced frequencies in `[f_lo, f_hi]`,
/// adding complex Gaussian noise at the given signal-to-noise ratio (relative
/// to the off-resonant amplitude `a`).
pub fn synth_trace(
    params: &ResonatorFit,
    f_lo: f64,
    f_hi: f64,
    points: usize,
    snr_db: Option<f64>,
    seed: u64,
) -> S21Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = snr_db.map(|snr| params.a * 10f64.powf(-snr / 20.0) / 2f64.sqrt());
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let points = points.max(2);
    let frequency: Vec<f64> = (0..points)
        .map(|k| f_lo + (f_hi - f_lo) * k as f64 / (points - 1) as f64)
        .collect();
    let s21 = frequency
        .iter()
        .map(|&f| {
            let z = notch_model(f, params);
            match sigma {
                Some(s) => z + Complex64::new(s * gauss.sample(&mut rng), s * gauss.sample(&mut rng)),
                None => z,
            }
        })
        .collect();
    S21Trace {
        frequency,
        s21,
        power_dbm: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
}

/// Algebraic circle fit with the Pratt normalization.
///
/// The smallest non-negative root of `det(M - eta B)` is found by Newton's
/// method from zero; the circle coefficients span the null space of
/// `M - eta B`.
pub fn fit_circle_algebraic(points: &[Complex64]) -> Result<Circle> {
    let n = points.len() as f64;
    if points.len() < 3 {
        return Err(Error::InvalidTrace("circle fit needs three points".into()));
    }
    let mean = points.iter().sum::<Complex64>() / n;
    let scale = (points.iter().map(|p| (p - mean).norm_sqr()).sum::<f64>() / n).sqrt();
    if !(scale > 0.0) {
        return Err(Error::FitDiverged("all points coincide".into()));
    }
    let mut m = Matrix4::<f64>::zeros();
    for p in points {
        let q = (p - mean) / scale;
        let v = nalgebra::Vector4::new(q.norm_sqr(), q.re, q.im, 1.0);
        m += v * v.transpose();
    }
    m /= n;
    let mut b = Matrix4::<f64>::zeros();
    b[(0, 3)] = -2.0;
    b[(3, 0)] = -2.0;
    b[(1, 1)] = 1.0;
    b[(2, 2)] = 1.0;

    // det(M - eta B) is a quartic in eta; recover its coefficients by interpolation
    let det = |eta: f64| (m - b * eta).determinant();
    let nodes: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let vander = Matrix5::from_fn(|r, c| nodes[r].powi(c as i32));
    let values = Vector5::from_fn(|r, _| det(nodes[r]));
    let coef = vander
        .lu()
        .solve(&values)
        .ok_or_else(|| Error::FitDiverged("circle characteristic polynomial".into()))?;
    let poly = |x: f64| coef[0] + x * (coef[1] + x * (coef[2] + x * (coef[3] + x * coef[4])));
    let dpoly = |x: f64| coef[1] + x * (2.0 * coef[2] + x * (3.0 * coef[3] + x * 4.0 * coef[4]));
    let mut eta: f64 = 0.0;
    for _ in 0..100 {
        let d = dpoly(eta);
        if d == 0.0 {
            break;
        }
        let next = eta - poly(eta) / d;
        if !next.is_finite() {
            break;
        }
        let done = (next - eta).abs() <= 1e-15 * (1.0 + eta.abs());
        eta = next;
        if done {
            break;
        }
    }
    let svd = (m - b * eta).svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::FitDiverged("circle null space".into()))?;
    let k = svd.singular_values.imin();
    let a = v_t.row(k);
    if a[0].abs() < 1e-14 * a.norm() {
        return Err(Error::FitDiverged("points are collinear".into()));
    }
    let cx = -a[1] / (2.0 * a[0]);
    let cy = -a[2] / (2.0 * a[0]);
    let r2 = (a[1] * a[1] + a[2] * a[2] - 4.0 * a[0] * a[3]) / (4.0 * a[0] * a[0]);
    if !(r2 > 0.0) {
        return Err(Error::FitDiverged("imaginary circle radius".into()));
    }
    Ok(Circle {
        center: mean + Complex64::new(cx, cy) * scale,
        radius: r2.sqrt() * scale,
    })
}

struct GeometricCircle<'a> {
    points: &'a [Complex64],
}

impl lm::Problem for GeometricCircle<'_> {
    fn residual_count(&self) -> usize {
        self.points.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let c = Complex64::new(p[0], p[1]);
        for (o, z) in out.iter_mut().zip(self.points) {
            *o = (z - c).norm() - p[2];
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let c = Complex64::new(p[0], p[1]);
        for (k, z) in self.points.iter().enumerate() {
            let d = z - c;
            let r = d.norm().max(1e-300);
            jac[(k, 0)] = -d.re / r;
            jac[(k, 1)] = -d.im / r;
            jac[(k, 2)] = -1.0;
        }
    }
}

/// Geometric least-squares refinement of an algebraic circle. Returns the
/// circle and the 1-sigma radius uncertainty.
fn refine_circle(points: &[Complex64], start: Circle) -> (Circle, f64) {
    // work in units of the starting radius
    let s = start.radius;
    let local: Vec<Complex64> = points.iter().map(|z| (z - start.center) / s).collect();
    let problem = GeometricCircle { points: &local };
    let inf = f64::INFINITY;
    let report = lm::minimize(
        &problem,
        &[0.0, 0.0, 1.0],
        &[-inf, -inf, 0.0],
        &[inf, inf, inf],
        &lm::Options::default(),
    );
    let p = &report.params;
    let dof = (points.len() as f64 - 3.0).max(1.0);
    let var = 2.0 * report.cost / dof;
    let sigma_r = report
        .inverse_hessian
        .as_ref()
        .map(|h| (h[(2, 2)] * var).max(0.0).sqrt() * s)
        .unwrap_or(f64::NAN);
    let refined = Circle {
        center: start.center + Complex64::new(p[0], p[1]) * s,
        radius: p[2] * s,
    };
    if refined.radius.is_finite() && refined.radius > 0.0 {
        (refined, sigma_r)
    } else {
        (start, sigma_r)
    }
}

fn remove_delay(trace: &S21Trace, tau: f64) -> Vec<Complex64> {
    trace
        .frequency
        .iter()
        .zip(&trace.s21)
        .map(|(&f, z)| z * Complex64::from_polar(1.0, 2.0 * PI * f * tau))
        .collect()
}

fn unwrap(phases: &mut [f64]) {
    for k in 1..phases.len() {
        let d = phases[k] - phases[k - 1];
        phases[k] -= 2.0 * PI * (d / (2.0 * PI)).round();
    }
}

fn wrap(x: f64) -> f64 {
    x.sin().atan2(x.cos())
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Indices of the outer 20% of points on each side.
fn outer_indices(len: usize) -> Vec<usize> {
    let edge = (len / 5).max(2);
    (0..edge).chain(len - edge..len).collect()
}

fn circularity(trace: &S21Trace, tau: f64) -> f64 {
    let pts = remove_delay(trace, tau);
    match fit_circle_algebraic(&pts) {
        Ok(c) => {
            pts.iter()
                .map(|z| ((z - c.center).norm() - c.radius).powi(2))
                .sum::<f64>()
                / pts.len() as f64
        }
        Err(_) => f64::INFINITY,
    }
}

/// Cable delay from the off-resonant phase slope, refined by maximizing the
/// circularity of the delay-corrected data.
pub fn estimate_delay(trace: &S21Trace) -> f64 {
    let idx = outer_indices(trace.frequency.len());
    let mut phase: Vec<f64> = trace.s21.iter().map(|z| z.arg()).collect();
    unwrap(&mut phase);
    let xs: Vec<f64> = idx.iter().map(|&k| trace.frequency[k] - trace.frequency[0]).collect();
    let ys: Vec<f64> = idx.iter().map(|&k| phase[k]).collect();
    let (_, slope) = linear_fit(&xs, &ys);
    let tau0 = -slope / (2.0 * PI);

    let span = trace.span();
    let half = 0.5 / span;
    let grid = 100;
    let step = 2.0 * half / grid as f64;
    let mut best = (tau0, circularity(trace, tau0));
    for k in 0..=grid {
        let tau = tau0 - half + k as f64 * step;
        let c = circularity(trace, tau);
        if c < best.1 {
            best = (tau, c);
        }
    }
    // golden-section refinement inside the bracketing grid cells
    let (mut lo, mut hi) = (best.0 - step, best.0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = circularity(trace, x1);
    let mut f2 = circularity(trace, x2);
    for _ in 0..100 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = circularity(trace, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = circularity(trace, x2);
        }
        if hi - lo <= 1e-14 * (lo.abs() + hi.abs()) + 1e-30 {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    if circularity(trace, tau) <= best.1 {
        tau
    } else {
        best.0
    }
}

/// Phase around the circle center: `theta0 + 2 atan(2 Q_l (1 - f/f_r))`.
/// Parameters are `(theta0, ln Q_l, (f_r - f_ref) / w)` with `w` a linewidth scale.
struct PhaseProblem<'a> {
    freq: &'a [f64],
    theta: &'a [f64],
    f_ref: f64,
    width: f64,
}

impl PhaseProblem<'_> {
    fn unpack(&self, p: &[f64]) -> (f64, f64, f64) {
        (p[0], p[1].exp(), self.f_ref + p[2] * self.width)
    }
}

impl lm::Problem for PhaseProblem<'_> {
    fn residual_count(&self) -> usize {
        self.freq.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (theta0, q_l, f_r) = self.unpack(p);
        for ((o, &f), &theta) in out.iter_mut().zip(self.freq.iter()).zip(self.theta.iter()) {
            let model = theta0 + 2.0 * (2.0 * q_l * (1.0 - f / f_r)).atan();
            *o = wrap(theta - model);
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let (_, q_l, f_r) = self.unpack(p);
        for k in 0..self.freq.len() {
            let f = self.freq[k];
            let u = 2.0 * q_l * (1.0 - f / f_r);
            let dtheta_du = 2.0 / (1.0 + u * u);
            jac[(k, 0)] = -1.0;
            jac[(k, 1)] = -dtheta_du * u;
            jac[(k, 2)] = -dtheta_du * 2.0 * q_l * f / (f_r * f_r) * self.width;
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Reject traces whose magnitude shows no feature above the off-resonant scatter.
fn check_dip(trace: &S21Trace) -> Result<()> {
    let idx = outer_indices(trace.frequency.len());
    let xs: Vec<f64> = idx.iter().map(|&k| trace.frequency[k] - trace.frequency[0]).collect();
    let ys: Vec<f64> = idx.iter().map(|&k| trace.s21[k].norm()).collect();
    let (c0, c1) = linear_fit(&xs, &ys);
    let mut resid: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (y - c0 - c1 * x).abs()).collect();
    let noise = 1.4826 * median(&mut resid);
    let baseline = |k: usize| c0 + c1 * (trace.frequency[k] - trace.frequency[0]);
    let depth = (0..trace.s21.len())
        .map(|k| (baseline(k) - trace.s21[k].norm()).abs())
        .fold(0.0, f64::max);
    let scale = ys.iter().copied().fold(0.0, f64::max);
    if !(scale > 0.0) || depth <= (6.0 * noise).max(1e-6 * scale) {
        return Err(Error::NoDip);
    }
    Ok(())
}

pub fn fit_s21(trace: &S21Trace) -> Result<ResonatorFit> {
    trace.validate()?;
    check_dip(trace)?;
    let tau = estimate_delay(trace);
    let points = remove_delay(trace, tau);
    let (circle, sigma_r) = refine_circle(&points, fit_circle_algebraic(&points)?);

    let mut theta: Vec<f64> = points.iter().map(|z| (z - circle.center).arg()).collect();
    unwrap(&mut theta);
    let freq = &trace.frequency;
    let n = freq.len();
    let theta0_guess = 0.5 * (theta[0] + theta[n - 1]);
    // the phase falls by up to 2 pi through the resonance
    let crossing = |level: f64| -> Option<f64> {
        (1..n).find_map(|k| {
            let (a, b) = (theta[k - 1] - level, theta[k] - level);
            (a >= 0.0 && b < 0.0).then(|| freq[k - 1] + (freq[k] - freq[k - 1]) * a / (a - b))
        })
    };
    let fr_guess = crossing(theta0_guess).ok_or(Error::NoDip)?;
    let q_guess = match (crossing(theta0_guess + 0.5 * PI), crossing(theta0_guess - 0.5 * PI)) {
        (Some(lo), Some(hi)) if hi > lo => fr_guess / (hi - lo),
        _ => 10.0 * fr_guess / trace.span(),
    };
    let width = fr_guess / q_guess;
    let problem = PhaseProblem {
        freq,
        theta: &theta,
        f_ref: fr_guess,
        width,
    };
    let inf = f64::INFINITY;
    let report = lm::minimize(
        &problem,
        &[theta0_guess, q_guess.ln(), 0.0],
        &[-inf, -inf, -inf],
        &[inf, inf, inf],
        &lm::Options::default(),
    );
    let (theta0, q_l, f_r) = problem.unpack(&report.params);
    if !(q_l.is_finite() && f_r.is_finite() && q_l > 0.0) {
        return Err(Error::FitDiverged("phase fit".into()));
    }
    if f_r < freq[0] || f_r > freq[n - 1] {
        return Err(Error::FitDiverged(format!("resonance {f_r:e} Hz outside the trace")));
    }
    let dof = (n as f64 - 3.0).max(1.0);
    let var = 2.0 * report.cost / dof;
    let cov = |k: usize| {
        report
            .inverse_hessian
            .as_ref()
            .map(|h| (h[(k, k)] * var).max(0.0).sqrt())
            .unwrap_or(f64::NAN)
    };
    let q_l_sigma = cov(1) * q_l;
    let f_r_sigma = cov(2) * width;

    let off_resonant = circle.center + circle.radius * Complex64::from_polar(1.0, theta0 + PI);
    let a = off_resonant.norm();
    let alpha = off_resonant.arg();
    let center = circle.center / off_resonant;
    let radius = circle.radius / a;
    let phi = (1.0 - center).arg();
    if phi.abs() >= 0.5 * PI {
        return Err(Error::IllConditioned(phi));
    }
    let q_c_mag = q_l / (2.0 * radius);
    let q_c = q_c_mag / phi.cos();
    let inv_q_i = 1.0 / q_l - 1.0 / q_c;
    if !(inv_q_i > 0.0) {
        return Err(Error::FitDiverged(format!(
            "internal loss {inv_q_i:e} is not positive"
        )));
    }
    let q_i = 1.0 / inv_q_i;
    let rel_r = sigma_r / circle.radius;
    let q_c_sigma = q_c * ((q_l_sigma / q_l).powi(2) + rel_r * rel_r).sqrt();
    let q_i_sigma = q_i * q_i * ((q_l_sigma / (q_l * q_l)).powi(2) + (q_c_sigma / (q_c * q_c)).powi(2)).sqrt();

    Ok(ResonatorFit {
        f_r,
        q_l,
        q_c,
        q_i,
        phi,
        a,
        alpha,
        tau,
        f_r_sigma,
        q_l_sigma,
        q_c_sigma,
        q_i_sigma,
    })
}
