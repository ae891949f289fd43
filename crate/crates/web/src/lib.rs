//! WebAssembly bindings for the browser demo. Each export returns a JSON string.

use std::sync::Arc;

use obsinfer::estimation::{ecf_phase_estimator, median};
use obsinfer::inference::{score_if, sinusoidal, SharedFunctional};
use obsinfer::information::{are_curve, hierarchy_report};
use obsinfer::kernels::KernelProfile;
use obsinfer::models::{cauchy_location, gaussian_location, student_t_location, Location, ModelFamily, SharedModel};
use obsinfer::observation::ObservationOperator;
use obsinfer::specialfn::QuadratureSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn family(name: &str, nu: f64) -> obsinfer::Result<Location> {
    match name {
        "normal" | "gaussian" => gaussian_location(1.0),
        "cauchy" => Ok(cauchy_location()),
        "student" | "t" => student_t_location(nu),
        other => Err(obsinfer::Error::Config(format!("unknown family {other:?}"))),
    }
}

#[derive(Serialize)]
struct CurveOut {
    family: String,
    c: Vec<f64>,
    are: Vec<f64>,
    argmax_c: f64,
    argmax_are: f64,
    small_c_limit: f64,
    note: Option<String>,
}

pub fn are_curve_json(name: &str, nu: f64, c_max: f64, points: usize) -> obsinfer::Result<String> {
    let fam = family(name, nu)?;
    let points = points.clamp(2, 2000);
    if !(c_max > 0.0) {
        return Err(obsinfer::Error::Config("c_max must be positive".into()));
    }
    let grid: Vec<f64> = (1..=points).map(|i| c_max * i as f64 / points as f64).collect();
    let curve = are_curve(&fam, &grid)?;
    let out = CurveOut {
        family: curve.family,
        c: curve.points.iter().map(|p| p.c).collect(),
        are: curve.points.iter().map(|p| p.are).collect(),
        argmax_c: curve.argmax.c,
        argmax_are: curve.argmax.are,
        small_c_limit: curve.small_c_limit,
        note: curve.note,
    };
    Ok(serde_json::to_string(&out).expect("plain data serialises"))
}

#[derive(Serialize)]
struct HierarchyOut {
    i_classical: f64,
    i_o: f64,
    g_score: f64,
    g_sinusoidal: f64,
    flags: Vec<String>,
}

/// `sigma_phi ≤ 0` selects the classical limit.
pub fn hierarchy_json(name: &str, nu: f64, sigma_phi: f64, c: f64) -> obsinfer::Result<String> {
    let model: SharedModel = Arc::new(family(name, nu)?);
    let kernel = if sigma_phi > 0.0 { KernelProfile::gaussian(sigma_phi)? } else { KernelProfile::classical() };
    let op = ObservationOperator::KernelWeighted { kernel };
    let spec = QuadratureSpec::default();
    let score: SharedFunctional = Arc::new(score_if(model.clone())?);
    let sin: SharedFunctional = Arc::new(sinusoidal(c)?);
    let a = hierarchy_report(&model, &op, score, &[0.0], &spec);
    let b = hierarchy_report(&model, &op, sin, &[0.0], &spec);
    let mut flags = a.flags.clone();
    flags.extend(b.flags.iter().cloned());
    flags.dedup();
    let out = HierarchyOut {
        i_classical: a.i_classical[(0, 0)],
        i_o: a.i_o[(0, 0)],
        g_score: a.g_psi[(0, 0)],
        g_sinusoidal: b.g_psi[(0, 0)],
        flags,
    };
    Ok(serde_json::to_string(&out).expect("plain data serialises"))
}

#[derive(Serialize)]
struct EcfOut {
    theta: f64,
    median: f64,
    ecf: Option<f64>,
    std_error: Option<f64>,
    error: Option<String>,
    sample: Vec<f64>,
}

pub fn ecf_demo_json(name: &str, nu: f64, theta: f64, n: usize, u: f64, seed: u64) -> obsinfer::Result<String> {
    let fam = family(name, nu)?;
    let n = n.clamp(2, 100_000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| fam.sample(&[theta], &mut rng)).collect();
    let est = ecf_phase_estimator(&xs, u, None);
    let out = EcfOut {
        theta,
        median: median(&xs),
        ecf: est.as_ref().ok().map(|r| r.theta_hat[0]),
        std_error: est.as_ref().ok().map(|r| r.std_errors()[0]),
        error: est.as_ref().err().map(|e| e.to_string()),
        sample: xs.into_iter().take(500).collect(),
    };
    Ok(serde_json::to_string(&out).expect("plain data serialises"))
}

fn js(r: obsinfer::Result<String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn are_curve_for(family: &str, nu: f64, c_max: f64, points: usize) -> Result<String, JsValue> {
    js(are_curve_json(family, nu, c_max, points))
}

#[wasm_bindgen]
pub fn hierarchy(family: &str, nu: f64, sigma_phi: f64, c: f64) -> Result<String, JsValue> {
    js(hierarchy_json(family, nu, sigma_phi, c))
}

#[wasm_bindgen]
pub fn ecf_demo(family: &str, nu: f64, theta: f64, n: usize, u: f64, seed: u64) -> Result<String, JsValue> {
    js(ecf_demo_json(family, nu, theta, n, u, seed))
}
