//! Discretised joint spectral amplitude.
//!
//! The amplitude is the product of a Gaussian pump envelope in
//! `ω_s + ω_i` and a phase-matching function of `Δk·L`, sampled on a grid
//! uniform in wavelength. Entries are real and unnormalised; every sample
//! carries unit weight.

use std::f64::consts::{LN_2, PI};

use faer::MatRef;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{
    nm_from_omega, omega_from_nm, operating_point, wavevector, CrystalSpec, PmOffset, Role,
    SPEED_OF_LIGHT,
};
use crate::error::{Error, Result};

/// Width factor of the Gaussian-apodised phase-matching function.
pub const APODIZATION_GAMMA: f64 = 0.193;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmShape {
    Sinc,
    #[serde(alias = "apodized", alias = "gaussian")]
    GaussianApodized,
}

impl std::str::FromStr for PmShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sinc" => Ok(Self::Sinc),
            "apodized" | "gaussian_apodized" | "gaussian" => Ok(Self::GaussianApodized),
            other => Err(Error::Validation(format!(
                "unknown phase-matching shape `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for PmShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PmShape::Sinc => "sinc",
            PmShape::GaussianApodized => "apodized",
        })
    }
}

/// Convert a wavelength FWHM (nm) at `center_nm` to an angular-frequency FWHM.
pub fn fwhm_nm_to_omega(center_nm: f64, fwhm_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT * (fwhm_nm * 1e-9) / (center_nm * 1e-9).powi(2)
}

/// Gaussian pump pulse; `fwhm_nm` is the FWHM of the field amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub center_nm: f64,
    pub fwhm_nm: f64,
}

impl PumpSpec {
    pub fn new(center_nm: f64, fwhm_nm: f64) -> Result<Self> {
        if !(center_nm > 0.0 && fwhm_nm > 0.0) || !center_nm.is_finite() || !fwhm_nm.is_finite() {
            return Err(Error::Validation(format!(
                "pump needs positive centre and bandwidth, got {center_nm} nm / {fwhm_nm} nm"
            )));
        }
        Ok(Self { center_nm, fwhm_nm })
    }

    pub fn omega(&self) -> f64 {
        omega_from_nm(self.center_nm)
    }

    /// `σ_p` of `exp(−ν²/4σ_p²)`, chosen so the amplitude is ½ at half the FWHM.
    pub fn sigma(&self) -> f64 {
        fwhm_nm_to_omega(self.center_nm, self.fwhm_nm) / (4.0 * LN_2.sqrt())
    }
}

/// `exp(−(ω_s + ω_i − ω_p)² / 4σ_p²)`.
pub fn pump_envelope(omega_s: f64, omega_i: f64, pump: &PumpSpec) -> f64 {
    envelope(omega_s + omega_i - pump.omega(), pump.sigma())
}

#[inline]
fn envelope(detuning: f64, sigma: f64) -> f64 {
    (-(detuning * detuning) / (4.0 * sigma * sigma)).exp()
}

/// Phase-matching amplitude for mismatch `delta_k` (rad/m) over `length_m`.
pub fn phase_matching(delta_k: f64, length_m: f64, shape: PmShape) -> f64 {
    let x = delta_k * length_m;
    match shape {
        PmShape::Sinc => sinc(0.5 * x),
        PmShape::GaussianApodized => (-APODIZATION_GAMMA * x * x / 4.0).exp(),
    }
}

/// `sin(x)/x` with the removable singularity filled in.
#[inline]
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// A concrete operating point of a source.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceConfig {
    pub crystal: CrystalSpec,
    pub pump: PumpSpec,
    pub length_mm: f64,
    pub pm_offset: PmOffset,
    pub pm_shape: PmShape,
}

impl SourceConfig {
    pub fn new(
        crystal: CrystalSpec,
        pump: PumpSpec,
        length_mm: f64,
        pm_offset: PmOffset,
        pm_shape: PmShape,
    ) -> Result<Self> {
        let [l0, l1] = crystal.bounds.length_mm;
        let [s0, s1] = crystal.bounds.pump_fwhm_nm;
        if !(length_mm >= l0 && length_mm <= l1) {
            return Err(Error::Validation(format!(
                "crystal length {length_mm} mm outside [{l0}, {l1}] mm"
            )));
        }
        if !(pump.fwhm_nm >= s0 && pump.fwhm_nm <= s1) {
            return Err(Error::Validation(format!(
                "pump FWHM {} nm outside [{s0}, {s1}] nm",
                pump.fwhm_nm
            )));
        }
        Ok(Self {
            crystal,
            pump,
            length_mm,
            pm_offset,
            pm_shape,
        })
    }

    /// Configuration at the crystal's group-velocity-matched degenerate point.
    pub fn at_gvm(
        crystal: &CrystalSpec,
        length_mm: f64,
        pump_fwhm_nm: f64,
        pm_shape: PmShape,
    ) -> Result<Self> {
        let op = operating_point(crystal)?;
        Self::new(
            crystal.clone(),
            PumpSpec::new(op.pump_nm, pump_fwhm_nm)?,
            length_mm,
            op.offset,
            pm_shape,
        )
    }

    /// Degenerate signal/idler wavelength implied by the pump centre.
    pub fn center_nm(&self) -> f64 {
        2.0 * self.pump.center_nm
    }

    pub fn length_m(&self) -> f64 {
        self.length_mm * 1e-3
    }
}

/// `Δk = k_p(ω_s + ω_i) − k_s(ω_s) − k_i(ω_i) − K₀`.
pub fn phase_mismatch(config: &SourceConfig, omega_s: f64, omega_i: f64) -> Result<f64> {
    let theta = config.pm_offset.theta();
    let c = &config.crystal;
    Ok(wavevector(c, Role::Pump, omega_s + omega_i, theta)?
        - wavevector(c, Role::Signal, omega_s, theta)?
        - wavevector(c, Role::Idler, omega_i, theta)?
        - config.pm_offset.grating_wavevector())
}

/// One photon axis: `points` wavelengths uniform on `[min_nm, max_nm]`
/// (endpoints included) and the matching angular frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub min_nm: f64,
    pub max_nm: f64,
    lambda_nm: Vec<f64>,
    omega: Vec<f64>,
}

impl FrequencyGrid {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn lambda_nm(&self) -> &[f64] {
        &self.lambda_nm
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }
}

pub fn make_grid(min_nm: f64, max_nm: f64, points: usize) -> Result<FrequencyGrid> {
    if !(min_nm > 0.0 && max_nm > min_nm && max_nm.is_finite()) || points < 2 {
        return Err(Error::Validation(format!(
            "grid needs 0 < min < max and at least 2 points, got [{min_nm}, {max_nm}] x {points}"
        )));
    }
    let step = (max_nm - min_nm) / (points - 1) as f64;
    let lambda_nm: Vec<f64> = (0..points)
        .map(|i| {
            if i == points - 1 {
                max_nm
            } else {
                min_nm + step * i as f64
            }
        })
        .collect();
    let omega = lambda_nm.iter().map(|&l| omega_from_nm(l)).collect();
    Ok(FrequencyGrid {
        min_nm,
        max_nm,
        lambda_nm,
        omega,
    })
}

/// Real `N_s × N_i` amplitude matrix, row-major, rows indexed by signal.
#[derive(Clone, Debug, PartialEq)]
pub struct JointAmplitude {
    signal: FrequencyGrid,
    idler: FrequencyGrid,
    values: Vec<f64>,
}

impl JointAmplitude {
    pub fn from_values(
        signal: FrequencyGrid,
        idler: FrequencyGrid,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != signal.len() * idler.len() {
            return Err(Error::Validation(format!(
                "{} values do not fill a {}x{} matrix",
                values.len(),
                signal.len(),
                idler.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("amplitude has non-finite entries".into()));
        }
        Ok(Self {
            signal,
            idler,
            values,
        })
    }

    /// Samples `f(ω_s, ω_i)` on the grid.
    pub fn from_fn(
        signal: FrequencyGrid,
        idler: FrequencyGrid,
        f: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Result<Self> {
        let cols = idler.len();
        let mut values = vec![0.0; signal.len() * cols];
        values
            .par_chunks_mut(cols)
            .zip(signal.omega().par_iter())
            .for_each(|(row, &ws)| {
                for (v, &wi) in row.iter_mut().zip(idler.omega()) {
                    *v = f(ws, wi);
                }
            });
        Self::from_values(signal, idler, values)
    }

    pub fn rows(&self) -> usize {
        self.signal.len()
    }

    pub fn cols(&self) -> usize {
        self.idler.len()
    }

    pub fn signal_axis(&self) -> &FrequencyGrid {
        &self.signal
    }

    pub fn idler_axis(&self) -> &FrequencyGrid {
        &self.idler
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        faer::mat::from_row_major_slice(&self.values, self.rows(), self.cols())
    }

    /// Squared Frobenius norm.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.signal == other.signal && self.idler == other.idler
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut values = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                values[j * r + i] = self.values[i * c + j];
            }
        }
        Self {
            signal: self.idler.clone(),
            idler: self.signal.clone(),
            values,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            signal: self.signal.clone(),
            idler: self.idler.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Row and column of the largest `|f|`.
    pub fn argmax(&self) -> (usize, usize) {
        let idx = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(k, _)| k)
            .unwrap_or(0);
        (idx / self.cols(), idx % self.cols())
    }
}

/// Phase mismatch tabulated on a grid for one crystal, offset and pump
/// centre. Everything that depends on dispersion is computed once; building
/// an amplitude for a new length or pump bandwidth is then elementwise.
#[derive(Clone, Debug)]
pub struct MismatchTable {
    grid: FrequencyGrid,
    pump_omega: f64,
    pump_center_nm: f64,
    delta_k: Vec<f64>,
}

impl MismatchTable {
    pub fn new(
        crystal: &CrystalSpec,
        pm_offset: PmOffset,
        pump_center_nm: f64,
        grid: &FrequencyGrid,
    ) -> Result<Self> {
        let n = grid.len();
        let theta = pm_offset.theta();
        let k0 = pm_offset.grating_wavevector();
        let ks = grid
            .omega()
            .iter()
            .map(|&w| wavevector(crystal, Role::Signal, w, theta))
            .collect::<Result<Vec<_>>>()?;
        let ki = grid
            .omega()
            .iter()
            .map(|&w| wavevector(crystal, Role::Idler, w, theta))
            .collect::<Result<Vec<_>>>()?;
        let mut delta_k = vec![0.0; n * n];
        delta_k
            .par_chunks_mut(n)
            .enumerate()
            .try_for_each(|(i, row)| -> Result<()> {
                let ws = grid.omega()[i];
                for (j, v) in row.iter_mut().enumerate() {
                    let kp = wavevector(crystal, Role::Pump, ws + grid.omega()[j], theta)?;
                    *v = kp - ks[i] - ki[j] - k0;
                }
                Ok(())
            })?;
        Ok(Self {
            grid: grid.clone(),
            pump_omega: omega_from_nm(pump_center_nm),
            pump_center_nm,
            delta_k,
        })
    }

    pub fn for_config(config: &SourceConfig, grid: &FrequencyGrid) -> Result<Self> {
        Self::new(
            &config.crystal,
            config.pm_offset,
            config.pump.center_nm,
            grid,
        )
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn delta_k(&self) -> &[f64] {
        &self.delta_k
    }

    /// Amplitude for a given crystal length and pump field FWHM.
    pub fn amplitude(&self, length_mm: f64, pump_fwhm_nm: f64, shape: PmShape) -> JointAmplitude {
        let n = self.grid.len();
        let sigma = PumpSpec {
            center_nm: self.pump_center_nm,
            fwhm_nm: pump_fwhm_nm,
        }
        .sigma();
        let length_m = length_mm * 1e-3;
        let omega = self.grid.omega();
        let mut values = vec![0.0; n * n];
        values
            .par_chunks_mut(n)
            .zip(self.delta_k.par_chunks(n))
            .zip(omega.par_iter())
            .for_each(|((row, dk_row), &ws)| {
                for ((v, &dk), &wi) in row.iter_mut().zip(dk_row).zip(omega) {
                    *v = envelope(ws + wi - self.pump_omega, sigma)
                        * phase_matching(dk, length_m, shape);
                }
            });
        JointAmplitude {
            signal: self.grid.clone(),
            idler: self.grid.clone(),
            values,
        }
    }
}

/// Builds the unnormalised amplitude `pump_envelope · phase_matching`.
pub fn assemble_jsa(config: &SourceConfig, grid: &FrequencyGrid) -> Result<JointAmplitude> {
    Ok(MismatchTable::for_config(config, grid)?.amplitude(
        config.length_mm,
        config.pump.fwhm_nm,
        config.pm_shape,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterShape {
    None,
    Gaussian,
    #[serde(alias = "rect")]
    Rectangular,
}

impl std::str::FromStr for FilterShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "gaussian" | "gauss" => Ok(Self::Gaussian),
            "rect" | "rectangular" => Ok(Self::Rectangular),
            other => Err(Error::Validation(format!("unknown filter shape `{other}`"))),
        }
    }
}

impl std::fmt::Display for FilterShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterShape::None => "none",
            FilterShape::Gaussian => "gaussian",
            FilterShape::Rectangular => "rect",
        })
    }
}

/// What a Gaussian filter's FWHM refers to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthConvention {
    /// FWHM of the field-amplitude transmission.
    #[default]
    Field,
    /// FWHM of the intensity transmission.
    Intensity,
}

/// Band-pass filter defined in wavelength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub shape: FilterShape,
    /// Gaussian FWHM or rectangular full width (nm).
    pub width_nm: f64,
    pub center_nm: f64,
    pub target: Role,
    #[serde(default)]
    pub convention: WidthConvention,
}

impl FilterSpec {
    pub fn none() -> Self {
        Self {
            shape: FilterShape::None,
            width_nm: 0.0,
            center_nm: 0.0,
            target: Role::Idler,
            convention: WidthConvention::Field,
        }
    }

    pub fn gaussian(fwhm_nm: f64, center_nm: f64) -> Result<Self> {
        Self::new(FilterShape::Gaussian, fwhm_nm, center_nm)
    }

    pub fn rectangular(width_nm: f64, center_nm: f64) -> Result<Self> {
        Self::new(FilterShape::Rectangular, width_nm, center_nm)
    }

    /// Herald-side filter of the given shape.
    pub fn new(shape: FilterShape, width_nm: f64, center_nm: f64) -> Result<Self> {
        if shape == FilterShape::None {
            return Ok(Self::none());
        }
        if !(width_nm > 0.0 && width_nm.is_finite()) || !(center_nm > 0.0) {
            return Err(Error::Validation(format!(
                "filter needs positive width and centre, got {width_nm} nm at {center_nm} nm"
            )));
        }
        Ok(Self {
            shape,
            width_nm,
            center_nm,
            target: Role::Idler,
            convention: WidthConvention::Field,
        })
    }

    pub fn with_convention(mut self, convention: WidthConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_target(mut self, target: Role) -> Self {
        self.target = target;
        self
    }

    /// Amplitude transmission at wavelength `lambda_nm`.
    pub fn transmission_at_nm(&self, lambda_nm: f64) -> f64 {
        let d = lambda_nm - self.center_nm;
        match self.shape {
            FilterShape::None => 1.0,
            FilterShape::Rectangular => {
                if d.abs() <= 0.5 * self.width_nm {
                    1.0
                } else {
                    0.0
                }
            }
            FilterShape::Gaussian => {
                let field_fwhm = match self.convention {
                    WidthConvention::Field => self.width_nm,
                    WidthConvention::Intensity => self.width_nm * std::f64::consts::SQRT_2,
                };
                (-4.0 * LN_2 * d * d / (field_fwhm * field_fwhm)).exp()
            }
        }
    }
}

/// Amplitude transmission `t ∈ [0, 1]` at angular frequency `omega`.
pub fn filter_transmission(filter: &FilterSpec, omega: f64) -> f64 {
    filter.transmission_at_nm(nm_from_omega(omega))
}

/// Multiplies each idler column by the filter transmission. Only the herald
/// (idler) photon may be filtered.
pub fn apply_herald_filter(jsa: &JointAmplitude, filter: &FilterSpec) -> Result<JointAmplitude> {
    if filter.shape == FilterShape::None {
        return Ok(jsa.clone());
    }
    if filter.target != Role::Idler {
        return Err(Error::Unsupported(format!(
            "only the herald (idler) photon can be filtered, not the {}",
            filter.target
        )));
    }
    let t: Vec<f64> = jsa
        .idler
        .lambda_nm()
        .iter()
        .map(|&l| filter.transmission_at_nm(l))
        .collect();
    let cols = jsa.cols();
    let mut values = jsa.values.clone();
    values.par_chunks_mut(cols).for_each(|row| {
        for (v, tj) in row.iter_mut().zip(&t) {
            *v *= tj;
        }
    });
    Ok(JointAmplitude {
        signal: jsa.signal.clone(),
        idler: jsa.idler.clone(),
        values,
    })
}
