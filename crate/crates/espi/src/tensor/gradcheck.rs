//! Central finite-difference gradient checking.

use std::collections::BTreeMap;

use thiserror::Error;

use super::ParamSet;

const STEP: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error("non-finite value while checking parameter {0}")]
    NonFinite(String),
    #[error("no analytic gradient supplied for parameter {0}")]
    MissingGradient(String),
}

#[derive(Debug)]
pub struct GradCheckReport {
    /// Max relative error per parameter.
    pub per_param: BTreeMap<String, f64>,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Compare analytic gradients against central finite differences of a scalar
/// deterministic function of the parameters.
///
/// Relative error per element is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(
    f: F,
    params: &ParamSet,
    analytic: &BTreeMap<String, Vec<f64>>,
    tolerance: f64,
) -> Result<GradCheckReport, GradCheckError>
where
    F: Fn(&ParamSet) -> f64,
{
    let mut per_param = BTreeMap::new();
    let mut max_rel_err: f64 = 0.0;
    let mut work = params.clone();
    for (name, tensor) in params {
        if !tensor.requires_grad {
            continue;
        }
        let a = analytic
            .get(name)
            .ok_or_else(|| GradCheckError::MissingGradient(name.clone()))?;
        let mut worst: f64 = 0.0;
        for i in 0..tensor.data.len() {
            let orig = tensor.data[i];
            work.get_mut(name).unwrap().data[i] = orig + STEP;
            let plus = f(&work);
            work.get_mut(name).unwrap().data[i] = orig - STEP;
            let minus = f(&work);
            work.get_mut(name).unwrap().data[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(GradCheckError::NonFinite(name.clone()));
            }
            let numeric = (plus - minus) / (2.0 * STEP);
            let rel = (a[i] - numeric).abs() / a[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        max_rel_err = max_rel_err.max(worst);
        per_param.insert(name.clone(), worst);
    }
    Ok(GradCheckReport { per_param, max_rel_err, tolerance })
}
