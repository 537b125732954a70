//! Purity, heralding transmission, source quality and the classical
//! simulation thresholds derived from them.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsa::JointAmplitude;
use crate::roots::bisect;

/// Default classical-approximation error bound.
pub const DEFAULT_ERROR_BOUND: f64 = 0.1;
/// Default photon number for the complexity target.
pub const DEFAULT_TARGET_K: u32 = 50;
/// Rows or columns whose largest magnitude is below this fraction of the
/// matrix peak are dropped before spectral work.
pub const CROP_RELATIVE: f64 = 1e-12;
const ALPHA_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchmidtResult {
    /// `λ_j`, descending, summing to one.
    pub coefficients: Vec<f64>,
    pub schmidt_number: f64,
    pub purity: f64,
}

/// Where the threshold exponent sits in `α^k/(1−α) = E²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KConvention {
    /// `α^k / (1−α)`.
    #[default]
    Power,
    /// `α^(k+1) / (1−α)`.
    PowerPlusOne,
}

impl KConvention {
    fn shift(self) -> f64 {
        match self {
            KConvention::Power => 0.0,
            KConvention::PowerPlusOne => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceMetrics {
    /// Heralded purity, used as the indistinguishability `x²`.
    pub purity: f64,
    pub transmission: f64,
    pub alpha: f64,
    pub k_max: u32,
}

impl SourceMetrics {
    pub fn new(transmission: f64, purity: f64, error_bound: f64) -> Result<Self> {
        let alpha = source_quality(transmission, purity)?;
        let k_max = if alpha <= 0.0 {
            0
        } else if alpha >= 1.0 {
            u32::MAX
        } else {
            k_star(alpha, error_bound)?
        };
        Ok(Self {
            purity,
            transmission,
            alpha,
            k_max,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityBudget {
    pub error_bound: f64,
    pub target_k: u32,
    pub alpha_required: f64,
    /// `None` when the source cannot reach the target even without loss.
    pub eta_budget: Option<f64>,
}

impl ComplexityBudget {
    pub fn new(error_bound: f64, target_k: u32, alpha_opt: f64) -> Result<Self> {
        let alpha_required = alpha_required(target_k, error_bound)?;
        let eta_budget = match transmission_budget(alpha_opt, alpha_required) {
            Ok(v) => Some(v),
            Err(Error::Infeasible { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            error_bound,
            target_k,
            alpha_required,
            eta_budget,
        })
    }
}

/// Copy of `m` without rows and columns that are negligible relative to its peak.
pub fn crop(m: MatRef<'_, f64>) -> Mat<f64> {
    let peak = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .fold(0.0f64, |acc, (i, j)| acc.max(m.read(i, j).abs()));
    let cut = peak * CROP_RELATIVE;
    let rows: Vec<usize> = (0..m.nrows())
        .filter(|&i| (0..m.ncols()).any(|j| m.read(i, j).abs() > cut))
        .collect();
    let cols: Vec<usize> = (0..m.ncols())
        .filter(|&j| rows.iter().any(|&i| m.read(i, j).abs() > cut))
        .collect();
    Mat::from_fn(rows.len(), cols.len(), |a, b| m.read(rows[a], cols[b]))
}

fn nonzero_crop(jsa: &JointAmplitude) -> Result<Mat<f64>> {
    let m = crop(jsa.as_mat());
    if m.nrows() == 0 || m.ncols() == 0 || jsa.values().iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("amplitude matrix is all zero".into()));
    }
    Ok(m)
}

/// Schmidt decomposition of the amplitude from its singular values.
pub fn schmidt_purity(jsa: &JointAmplitude) -> Result<SchmidtResult> {
    let m = nonzero_crop(jsa)?;
    let mut s2: Vec<f64> = m.singular_values().into_iter().map(|s| s * s).collect();
    s2.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = s2.iter().sum();
    let coefficients: Vec<f64> = s2.iter().map(|v| v / total).collect();
    let sum_sq: f64 = coefficients.iter().map(|l| l * l).sum();
    Ok(SchmidtResult {
        coefficients,
        schmidt_number: 1.0 / sum_sq,
        purity: sum_sq,
    })
}

/// `Σs⁴/(Σs²)²` computed as `‖G‖²_F / tr(G)²` with `G` the Gram matrix of
/// the smaller dimension.
pub fn gram_purity(m: MatRef<'_, f64>) -> f64 {
    let a = if m.ncols() <= m.nrows() {
        m
    } else {
        m.transpose()
    };
    let n = a.ncols();
    let mut g = Mat::<f64>::zeros(n, n);
    faer::linalg::matmul::matmul(
        g.as_mut(),
        a.transpose(),
        a,
        None,
        1.0,
        faer::Parallelism::None,
    );
    let mut trace = 0.0;
    let mut frob = 0.0;
    for j in 0..n {
        trace += g.read(j, j);
        for i in 0..n {
            let v = g.read(i, j);
            frob += v * v;
        }
    }
    frob / (trace * trace)
}

/// Purity of the amplitude; same value as [`schmidt_purity`] but cheaper.
pub fn purity(jsa: &JointAmplitude) -> Result<f64> {
    Ok(gram_purity(nonzero_crop(jsa)?.as_ref()))
}

/// How the heralding transmission is read off the two amplitudes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmissionModel {
    /// `|⟨f|f_filt⟩|² / (‖f‖² ‖f_filt‖²)`, the overlap of the normalised states.
    #[default]
    StateOverlap,
    /// `‖f_filt‖² / ‖f‖²`, the probability that the herald passes the filter.
    NormRatio,
}

impl std::str::FromStr for TransmissionModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "overlap" | "state_overlap" => Ok(Self::StateOverlap),
            "norm_ratio" | "norm" => Ok(Self::NormRatio),
            other => Err(Error::Validation(format!(
                "unknown transmission model `{other}`"
            ))),
        }
    }
}

/// Overlap of the filtered and unfiltered amplitudes as normalised states.
/// Equal to `‖filtered‖² / ‖unfiltered‖²` whenever the filter only takes
/// the values 0 and 1.
pub fn heralding_transmission(
    unfiltered: &JointAmplitude,
    filtered: &JointAmplitude,
) -> Result<f64> {
    transmission_with(unfiltered, filtered, TransmissionModel::StateOverlap)
}

pub fn transmission_with(
    unfiltered: &JointAmplitude,
    filtered: &JointAmplitude,
    model: TransmissionModel,
) -> Result<f64> {
    if !unfiltered.same_grid(filtered) {
        return Err(Error::Validation(
            "filtered and unfiltered amplitudes live on different grids".into(),
        ));
    }
    let den = unfiltered.norm_sqr();
    if den == 0.0 {
        return Err(Error::Degenerate(
            "unfiltered amplitude has zero norm".into(),
        ));
    }
    let passed = filtered.norm_sqr();
    let eta = match model {
        TransmissionModel::NormRatio => passed / den,
        TransmissionModel::StateOverlap => {
            if passed == 0.0 {
                0.0
            } else {
                let ip: f64 = unfiltered
                    .values()
                    .iter()
                    .zip(filtered.values())
                    .map(|(a, b)| a * b)
                    .sum();
                ip * ip / (den * passed)
            }
        }
    };
    Ok(eta.min(1.0))
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} = {v} is outside [0, 1]")))
    }
}

/// `α = η·P`.
pub fn source_quality(transmission: f64, purity: f64) -> Result<f64> {
    unit_interval("transmission", transmission)?;
    unit_interval("purity", purity)?;
    Ok(transmission * purity)
}

fn check_alpha_error(alpha: f64, error_bound: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Validation(format!(
            "alpha = {alpha} must lie in (0, 1)"
        )));
    }
    if !(error_bound > 0.0 && error_bound < 1.0) {
        return Err(Error::Validation(format!(
            "error bound {error_bound} must lie in (0, 1)"
        )));
    }
    Ok(())
}

/// Largest `k` with `α^k/(1−α) > E²`.
pub fn k_star(alpha: f64, error_bound: f64) -> Result<u32> {
    k_star_with(alpha, error_bound, KConvention::Power)
}

pub fn k_star_with(alpha: f64, error_bound: f64, convention: KConvention) -> Result<u32> {
    check_alpha_error(alpha, error_bound)?;
    let e2 = error_bound * error_bound;
    let shift = convention.shift();
    let above = |k: f64| (k + shift) * alpha.ln() - (1.0 - alpha).ln() > e2.ln();
    // k < x with x the real solution; start from the closed form and fix up rounding
    let x = (e2 * (1.0 - alpha)).ln() / alpha.ln() - shift;
    let mut k = x.ceil().max(0.0) - 1.0;
    while k + 1.0 >= 0.0 && above(k + 1.0) {
        k += 1.0;
    }
    while k >= 0.0 && !above(k) {
        k -= 1.0;
    }
    Ok(k.max(0.0).min(u32::MAX as f64) as u32)
}

/// Root in `(0, 1)` of `α^k/(1−α) = E²`.
pub fn alpha_required(k: u32, error_bound: f64) -> Result<f64> {
    alpha_required_with(k, error_bound, KConvention::Power)
}

pub fn alpha_required_with(k: u32, error_bound: f64, convention: KConvention) -> Result<f64> {
    if k == 0 {
        return Err(Error::Validation("photon number must be at least 1".into()));
    }
    check_alpha_error(0.5, error_bound)?;
    let p = k as f64 + convention.shift();
    let target = 2.0 * error_bound.ln();
    bisect(
        |a| Ok(p * a.ln() - (1.0 - a).ln() - target),
        f64::MIN_POSITIVE,
        1.0 - f64::EPSILON,
        ALPHA_TOLERANCE,
    )
}

/// `η_TB = α_required / α_opt`.
pub fn transmission_budget(alpha_opt: f64, alpha_required: f64) -> Result<f64> {
    if !(alpha_required > 0.0 && alpha_opt <= 1.0) {
        return Err(Error::Validation(format!(
            "need 0 < alpha_required and alpha_opt <= 1, got {alpha_required} and {alpha_opt}"
        )));
    }
    if alpha_opt < alpha_required {
        return Err(Error::Infeasible {
            alpha_opt,
            alpha_required,
        });
    }
    Ok(alpha_required / alpha_opt)
}
