//! Closed-form refractive-index models.
//!
//! Wavelengths are in micrometres throughout this module. Each model carries
//! the interval on which its coefficients were fitted; evaluation outside it
//! is an error rather than an extrapolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported dispersion formulas. `λ` in µm, `n²` on the left-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionForm {
    /// `n ≡ 1`; no coefficients.
    Vacuum,
    /// `n² = A + B/(λ² − C) − Dλ²`, coefficients `[A, B, C, D]`.
    SinglePole,
    /// `n² = A + B/(λ² − C) + D/(λ² − E) − Fλ²`, coefficients `[A, B, C, D, E]`
    /// or `[A, B, C, D, E, F]`.
    DoublePole,
    /// `n² = A + B/(λ² − C) − Dλ² + Eλ⁴ − Fλ⁶`, coefficients `[A, B, C, D, E, F]`.
    PolePolynomial,
    /// `n² = A + Σⱼ Bⱼλ²/(λ² − Cⱼ) − Dλ²`, coefficients `[A, D, B₁, C₁, B₂, C₂, …]`.
    SellmeierTerms,
}

impl DispersionForm {
    fn check_arity(self, len: usize) -> Result<()> {
        let ok = match self {
            Self::Vacuum => len == 0,
            Self::SinglePole => len == 4,
            Self::DoublePole => len == 5 || len == 6,
            Self::PolePolynomial => len == 6,
            Self::SellmeierTerms => len >= 4 && len % 2 == 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "form {self:?} does not accept {len} coefficients"
            )))
        }
    }

    /// Pole positions in λ² (µm²).
    fn poles(self, c: &[f64]) -> Vec<f64> {
        match self {
            Self::Vacuum => Vec::new(),
            Self::SinglePole | Self::PolePolynomial => vec![c[2]],
            Self::DoublePole => vec![c[2], c[4]],
            Self::SellmeierTerms => c[2..].chunks_exact(2).map(|t| t[1]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct SellmeierModel {
    name: String,
    form: DispersionForm,
    coefficients: Vec<f64>,
    valid_range_um: (f64, f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawModel {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    name: String,
    form_id: DispersionForm,
    #[serde(default)]
    coefficients: Vec<f64>,
    valid_range_um: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

impl TryFrom<RawModel> for SellmeierModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let name = if raw.name.is_empty() {
            format!("{:?}", raw.form_id)
        } else {
            raw.name
        };
        Self::new(
            name,
            raw.form_id,
            raw.coefficients,
            (raw.valid_range_um[0], raw.valid_range_um[1]),
        )
    }
}

impl From<SellmeierModel> for RawModel {
    fn from(m: SellmeierModel) -> Self {
        Self {
            name: m.name,
            form_id: m.form,
            coefficients: m.coefficients,
            valid_range_um: [m.valid_range_um.0, m.valid_range_um.1],
            source: None,
        }
    }
}

impl SellmeierModel {
    /// Build and validate a model. Rejects wrong coefficient counts, poles
    /// inside the valid range and indices that are not finite and above one.
    pub fn new(
        name: impl Into<String>,
        form: DispersionForm,
        coefficients: Vec<f64>,
        valid_range_um: (f64, f64),
    ) -> Result<Self> {
        let name = name.into();
        form.check_arity(coefficients.len())?;
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation(format!(
                "model `{name}` has non-finite coefficients"
            )));
        }
        let (lo, hi) = valid_range_um;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Validation(format!(
                "model `{name}` has invalid range [{lo}, {hi}] um"
            )));
        }
        for pole in form.poles(&coefficients) {
            if pole >= lo * lo && pole <= hi * hi {
                return Err(Error::Validation(format!(
                    "model `{name}` has a pole at {:.4} um inside its valid range",
                    pole.sqrt()
                )));
            }
        }
        let model = Self {
            name,
            form,
            coefficients,
            valid_range_um,
        };
        const SAMPLES: usize = 257;
        for s in 0..SAMPLES {
            let lambda = lo + (hi - lo) * s as f64 / (SAMPLES - 1) as f64;
            let n = model.eval_unchecked(lambda);
            if !(n.is_finite() && n > 1.0) {
                return Err(Error::Validation(format!(
                    "model `{}` gives n = {n} at {lambda} um",
                    model.name
                )));
            }
        }
        Ok(model)
    }

    pub fn vacuum(valid_range_um: (f64, f64)) -> Self {
        Self {
            name: "vacuum".into(),
            form: DispersionForm::Vacuum,
            coefficients: Vec::new(),
            valid_range_um,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn form(&self) -> DispersionForm {
        self.form
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn valid_range_um(&self) -> (f64, f64) {
        self.valid_range_um
    }

    pub(crate) fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn contains(&self, wavelength_um: f64) -> bool {
        let (lo, hi) = self.valid_range_um;
        wavelength_um >= lo && wavelength_um <= hi
    }

    /// Refractive index at `wavelength_um`.
    pub fn refractive_index(&self, wavelength_um: f64) -> Result<f64> {
        if !self.contains(wavelength_um) {
            let (lo, hi) = self.valid_range_um;
            return Err(Error::OutOfRange {
                model: self.name.clone(),
                wavelength_um,
                lo,
                hi,
            });
        }
        Ok(self.eval_unchecked(wavelength_um))
    }

    fn eval_unchecked(&self, lambda: f64) -> f64 {
        let l2 = lambda * lambda;
        let c = &self.coefficients;
        let n2 = match self.form {
            DispersionForm::Vacuum => 1.0,
            DispersionForm::SinglePole => c[0] + c[1] / (l2 - c[2]) - c[3] * l2,
            DispersionForm::DoublePole => {
                let f = c.get(5).copied().unwrap_or(0.0);
                c[0] + c[1] / (l2 - c[2]) + c[3] / (l2 - c[4]) - f * l2
            }
            DispersionForm::PolePolynomial => {
                let l4 = l2 * l2;
                c[0] + c[1] / (l2 - c[2]) - c[3] * l2 + c[4] * l4 - c[5] * l4 * l2
            }
            DispersionForm::SellmeierTerms => {
                let terms: f64 = c[2..]
                    .chunks_exact(2)
                    .map(|t| t[0] * l2 / (l2 - t[1]))
                    .sum();
                c[0] + terms - c[1] * l2
            }
        };
        n2.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_is_identity() {
        let m = SellmeierModel::vacuum((0.1, 10.0));
        assert_eq!(m.refractive_index(1.234).unwrap(), 1.0);
    }

    #[test]
    fn out_of_range_names_model_and_wavelength() {
        let m = SellmeierModel::new(
            "kato-o",
            DispersionForm::SinglePole,
            vec![2.7359, 0.01878, 0.01822, 0.01354],
            (0.4, 2.6),
        )
        .unwrap();
        let err = m.refractive_index(3.0).unwrap_err().to_string();
        assert!(err.contains("kato-o") && err.contains('3'), "{err}");
    }

    #[test]
    fn rejects_pole_inside_range() {
        let err = SellmeierModel::new(
            "bad",
            DispersionForm::SinglePole,
            vec![2.0, 0.01, 1.0, 0.0],
            (0.5, 2.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn rejects_wrong_arity() {
        assert!(SellmeierModel::new(
            "x",
            DispersionForm::PolePolynomial,
            vec![1.0; 4],
            (0.5, 1.0)
        )
        .is_err());
        assert!(SellmeierModel::new(
            "x",
            DispersionForm::SellmeierTerms,
            vec![1.0; 5],
            (0.5, 1.0)
        )
        .is_err());
    }

    #[test]
    fn rejects_index_below_one() {
        let err = SellmeierModel::new(
            "x",
            DispersionForm::SinglePole,
            vec![0.5, 0.0, 0.0, 0.0],
            (0.5, 1.0),
        )
        .unwrap_err();
        assert!(err.to_string().contains("n ="), "{err}");
    }

    #[test]
    fn forms_agree_when_algebraically_equal() {
        // B λ²/(λ² − C) = B + BC/(λ² − C)
        let (a, b, c, d) = (2.0993, 0.922683, 0.0467695, 0.0138408);
        let terms = SellmeierModel::new(
            "t",
            DispersionForm::SellmeierTerms,
            vec![a, d, b, c],
            (0.4, 3.5),
        )
        .unwrap();
        let pole = SellmeierModel::new(
            "p",
            DispersionForm::SinglePole,
            vec![a + b, b * c, c, d],
            (0.4, 3.5),
        )
        .unwrap();
        for l in [0.45, 0.8, 1.55, 3.0] {
            let x = terms.refractive_index(l).unwrap();
            let y = pole.refractive_index(l).unwrap();
            assert!((x - y).abs() < 1e-14, "{x} {y}");
        }
    }

    #[test]
    fn json_round_trip() {
        let json = r#"{"form_id":"pole_polynomial","coefficients":[2.7359,0.01878,0.01822,0.01471,0.0006081,0.0000674],"valid_range_um":[0.3,2.5]}"#;
        let m: SellmeierModel = serde_json::from_str(json).unwrap();
        assert_eq!(m.form(), DispersionForm::PolePolynomial);
        let back: SellmeierModel =
            serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back.coefficients(), m.coefficients());
    }
}
