//! RCD(K, N) and Alexandrov classification from the analytic curvature data
//! of a model, and the built-in catalog of examples.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::model::StratifiedModel;

/// Slack on the angle condition, so that `α = 2π` built from a unit circle passes.
const ANGLE_SLACK: f64 = 1e-12;

/// Cone angle along one codimension-two stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleEntry {
    pub stratum: String,
    pub angle: f64,
    pub admissible: bool,
}

/// Outcome of a classification query.
///
/// `is_rcd` holds iff the dimension, curvature and angle clauses all hold.
/// When the regular-set curvature bound is unknown and no other clause
/// fails, the verdict is indeterminate and `is_rcd` is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureVerdict {
    pub is_rcd: bool,
    pub indeterminate: bool,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub reasons: Vec<String>,
    pub angle_report: Vec<AngleEntry>,
    pub dimension_check: bool,
    /// Numeric lower bound of the regular-set curvature, reported when no
    /// analytic bound exists.
    pub curvature_estimate: Option<f64>,
}

/// Angles as multiples of π when they are (`3π`, `π/2`), decimals otherwise.
pub fn format_angle(angle: f64) -> String {
    let q = angle / PI;
    for den in [1.0, 2.0, 3.0, 4.0, 6.0] {
        let num = q * den;
        if (num - num.round()).abs() < 1e-9 && num.round() != 0.0 {
            let num = num.round() as i64;
            let head = if num == 1 { String::new() } else { num.to_string() };
            return if den == 1.0 { format!("{head}π") } else { format!("{head}π/{den}") };
        }
    }
    format!("{angle:.6}")
}

fn angle_report(model: &StratifiedModel) -> Vec<AngleEntry> {
    model
        .strata()
        .into_iter()
        .filter(|s| s.codimension == 2)
        .filter_map(|s| {
            s.angle.map(|a| AngleEntry { stratum: s.label, angle: a, admissible: a <= TAU * (1.0 + ANGLE_SLACK) })
        })
        .collect()
}

fn angle_reasons(report: &[AngleEntry]) -> Vec<String> {
    report
        .iter()
        .filter(|e| !e.admissible)
        .map(|e| format!("angle {} > 2π along {}", format_angle(e.angle), e.stratum))
        .collect()
}

fn numeric_estimate(model: &StratifiedModel) -> Option<f64> {
    match model {
        StratifiedModel::FermiSphere(f) => Some(f.numeric_ricci_lower_bound()),
        _ => None,
    }
}

/// RCD(K, N) verdict from the dimension, regular-set Ricci bound and
/// codimension-two angle clauses. Higher-codimension strata impose nothing.
pub fn classify(model: &StratifiedModel, k: f64, n: f64) -> CurvatureVerdict {
    let dim = model.dim() as f64;
    let angles = angle_report(model);
    let mut reasons = Vec::new();
    let dimension_check = dim <= n;
    if !dimension_check {
        reasons.push(format!("dimension {dim} > N = {n}"));
    }
    reasons.extend(angle_reasons(&angles));
    let (curvature_ok, estimate) = match model.regular_ricci_bound() {
        Some(k_reg) => {
            if k_reg < k {
                reasons.push(format!("regular-set Ricci bound {k_reg} < K = {k}"));
            }
            (Some(k_reg >= k), None)
        }
        None => (None, numeric_estimate(model)),
    };
    let determined_false = !reasons.is_empty();
    let indeterminate = curvature_ok.is_none() && !determined_false;
    if indeterminate {
        let detail = estimate.map(|e| format!("; numeric lower estimate {e:.4}")).unwrap_or_default();
        reasons.push(format!("regular-set Ricci bound is not known analytically{detail}"));
    }
    CurvatureVerdict {
        is_rcd: !determined_false && curvature_ok == Some(true),
        indeterminate,
        k,
        n,
        reasons,
        angle_report: angles,
        dimension_check,
        curvature_estimate: estimate,
    }
}

/// Alexandrov curvature `≥ k`: sectional curvature `≥ k` on the regular set
/// and every codimension-two angle `≤ 2π`.
pub fn alexandrov_classify(model: &StratifiedModel, k: f64) -> CurvatureVerdict {
    let angles = angle_report(model);
    let mut reasons = angle_reasons(&angles);
    let sectional_ok = match model.sectional_lower_bound() {
        Some(sec) => {
            if sec < k {
                reasons.push(format!("regular-set sectional curvature bound {sec} < k = {k}"));
            }
            Some(sec >= k)
        }
        None => None,
    };
    let determined_false = !reasons.is_empty();
    let indeterminate = sectional_ok.is_none() && !determined_false;
    if indeterminate {
        reasons.push("regular-set sectional curvature bound is not known analytically".to_string());
    }
    CurvatureVerdict {
        is_rcd: !determined_false && sectional_ok == Some(true),
        indeterminate,
        k,
        n: model.dim() as f64,
        reasons,
        angle_report: angles,
        dimension_check: true,
        curvature_estimate: None,
    }
}

/// Three-valued expectation for catalog verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Holds,
    Fails,
    Indeterminate,
}

impl Expectation {
    pub fn of(verdict: &CurvatureVerdict) -> Self {
        if verdict.indeterminate {
            Expectation::Indeterminate
        } else if verdict.is_rcd {
            Expectation::Holds
        } else {
            Expectation::Fails
        }
    }
}
