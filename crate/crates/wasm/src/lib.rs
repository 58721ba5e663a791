//! Browser entry points. Every export returns a JSON string: the result on
//! success, `{"error": "..."}` otherwise.

use cpwloss::geometry::{reference_presets, Length};
use cpwloss::participation::{budget_shares, simulate, BudgetRegion};
use cpwloss::s21fit::{self, notch_model, synth_trace, ResonatorFit, S21Trace};
use cpwloss::tlsfit::{self, q_low_high, synth_sweep, tls_inverse_q, PhotonSweep, SweepPoint, TlsParams};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn respond<T: Serialize>(result: cpwloss::Result<T>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Loss budget of a preset with adjustable interface layers (thicknesses in nm).
#[wasm_bindgen]
pub fn participation_budget(
    deposition: &str,
    treatment: &str,
    level: u32,
    ma_top_nm: f64,
    ma_side_nm: f64,
    sa_nm: f64,
) -> String {
    respond((|| {
        let mut stack = reference_presets(deposition.parse()?, treatment.parse()?);
        stack.layer_ma_top = Length::nm(ma_top_nm);
        stack.layer_ma_side = Length::nm(ma_side_nm);
        stack.layer_sa = Length::nm(sa_nm);
        stack.validate()?;
        let sim = simulate(&stack, level.clamp(1, 3))?;
        let shares: Vec<_> = budget_shares(&sim.budget)?
            .into_iter()
            .filter(|(r, _)| *r != BudgetRegion::Air)
            .map(|(r, pct)| json!({ "region": r.label(), "percent": pct }))
            .collect();
        Ok(json!({
            "rows": sim.budget.entries.iter().map(|e| json!({
                "region": e.region.label(),
                "participation": e.participation,
                "loss_tangent": e.loss_tangent,
                "contribution": e.contribution,
            })).collect::<Vec<_>>(),
            "total": sim.budget.total_f_tan_delta,
            "shares": shares,
            "p_metal_air_top": sim.p_metal_air_top,
            "p_metal_air_side": sim.p_metal_air_side,
            "capacitance": sim.capacitance,
            "cells": sim.cells,
        }))
    })())
}

#[derive(Serialize)]
struct Trace {
    frequency: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Trace {
    fn from_points(frequency: Vec<f64>, s21: &[Complex64]) -> Self {
        Self {
            frequency,
            re: s21.iter().map(|z| z.re).collect(),
            im: s21.iter().map(|z| z.im).collect(),
        }
    }
}

/// Synthetic notch trace spanning `linewidths` loaded linewidths either side
/// of resonance. A non-finite `snr_db` gives a noiseless trace.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn synth_s21(
    f_r: f64,
    q_l: f64,
    q_c_magnitude: f64,
    phi: f64,
    tau: f64,
    snr_db: f64,
    linewidths: f64,
    points: usize,
    seed: u64,
) -> String {
    respond((|| {
        if !(f_r > 0.0 && q_l > 0.0 && q_c_magnitude > 0.0 && linewidths > 0.0) {
            return Err(cpwloss::Error::InvalidParameter("f_r, Q_l, |Q_c| and span must be positive".into()));
        }
        let params = ResonatorFit::ideal(f_r, q_l, q_c_magnitude, phi).with_environment(1.0, 0.0, tau);
        let half = linewidths * f_r / q_l;
        let snr = snr_db.is_finite().then_some(snr_db);
        let trace = synth_trace(&params, f_r - half, f_r + half, points, snr, seed);
        Ok(Trace::from_points(trace.frequency, &trace.s21))
    })())
}

/// Fit a notch trace; the reply carries the fit and the model on the same grid.
#[wasm_bindgen]
pub fn fit_s21(frequency: Vec<f64>, re: Vec<f64>, im: Vec<f64>) -> String {
    respond((|| {
        if re.len() != frequency.len() || im.len() != frequency.len() {
            return Err(cpwloss::Error::InvalidTrace("column lengths differ".into()));
        }
        let s21: Vec<Complex64> = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let trace = S21Trace {
            frequency,
            s21,
            power_dbm: None,
        };
        let fit = s21fit::fit_s21(&trace)?;
        let model: Vec<Complex64> = trace.frequency.iter().map(|&f| notch_model(f, &fit)).collect();
        Ok(json!({ "fit": fit, "model": Trace::from_points(trace.frequency.clone(), &model) }))
    })())
}

/// Synthetic photon-number sweep on a log grid.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn synth_tls(
    f_tan_delta0: f64,
    n_c: f64,
    b: f64,
    delta_other: f64,
    f_r: f64,
    temperature: f64,
    n_min: f64,
    n_max: f64,
    points: usize,
    noise: f64,
    seed: u64,
) -> String {
    let params = TlsParams {
        f_tan_delta0,
        n_c,
        b,
        delta_other,
    };
    respond((|| {
        if !(n_min > 0.0 && n_max > n_min && noise >= 0.0) {
            return Err(cpwloss::Error::InvalidParameter("need 0 < n_min < n_max and noise >= 0".into()));
        }
        let sweep = synth_sweep(&params, n_min, n_max, points, f_r, temperature, noise, seed);
        sweep.validate()?;
        Ok(sweep.points)
    })())
}

/// Fit a sweep; the reply carries the fit, Q_i at low and high power and a
/// smooth model curve over the data range.
#[wasm_bindgen]
pub fn fit_tls(n_photon: Vec<f64>, q_i: Vec<f64>, q_i_sigma: Vec<f64>, f_r: f64, temperature: f64) -> String {
    respond((|| {
        if q_i.len() != n_photon.len() || q_i_sigma.len() != n_photon.len() {
            return Err(cpwloss::Error::InvalidSweep("column lengths differ".into()));
        }
        let points = n_photon
            .iter()
            .zip(&q_i)
            .zip(&q_i_sigma)
            .map(|((&n, &q), &s)| SweepPoint {
                n_photon: n,
                q_i: q,
                q_i_sigma: s,
            })
            .collect();
        let sweep = PhotonSweep {
            points,
            f_r,
            temperature,
            chip: String::new(),
            resonator: String::new(),
        };
        let fit = tlsfit::fit_tls(&sweep)?;
        let (lo, hi) = sweep.n_range();
        let params = fit.params();
        let curve: Vec<[f64; 2]> = (0..=100)
            .map(|k| {
                let n = (lo.ln() + k as f64 / 100.0 * (hi.ln() - lo.ln())).exp();
                [n, 1.0 / tls_inverse_q(&params, n, temperature, f_r)]
            })
            .collect();
        Ok(json!({ "fit": fit, "quality": q_low_high(&fit), "curve": curve }))
    })())
}
