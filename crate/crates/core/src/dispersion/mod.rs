//! Refractive indices, wavevectors and group velocities, plus the two
//! operating-point solvers: the group-velocity-matched degenerate wavelength
//! and the phase-matching offset (poling wavevector or cut angle).

mod crystal;
mod sellmeier;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

pub use crystal::{
    Bounds, Catalog, CrystalSpec, GridDefaults, GvmCondition, PmType, Role, RoleMap, CATALOG_ENV,
};
pub use sellmeier::{DispersionForm, SellmeierModel};

use crate::error::{Error, Result};
use crate::roots::{bisect, scan_sign_changes};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative frequency step of the central-difference group-velocity stencil.
pub const GROUP_VELOCITY_STEP: f64 = 1e-6;

/// Tolerance on the degenerate wavelength returned by [`find_gvm_center`] (nm).
pub const GVM_TOLERANCE_NM: f64 = 1e-3;

const GVM_SCAN_POINTS: usize = 128;

/// Angular frequency (rad/s) of a vacuum wavelength in nm.
pub fn omega_from_nm(wavelength_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

/// Vacuum wavelength in nm of an angular frequency (rad/s).
pub fn nm_from_omega(omega: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / omega * 1e9
}

pub fn refractive_index(model: &SellmeierModel, wavelength_um: f64) -> Result<f64> {
    model.refractive_index(wavelength_um)
}

/// `k = n(λ) ω / c` in rad/m. `theta` only matters for the extraordinary
/// role of an angle-tuned crystal.
pub fn wavevector(crystal: &CrystalSpec, role: Role, omega: f64, theta: f64) -> Result<f64> {
    let wavelength_um = nm_from_omega(omega) * 1e-3;
    Ok(crystal.index(role, wavelength_um, theta)? * omega / SPEED_OF_LIGHT)
}

/// `dk/dω` in s/m by central difference with relative step
/// [`GROUP_VELOCITY_STEP`].
pub fn inverse_group_velocity(
    crystal: &CrystalSpec,
    role: Role,
    omega: f64,
    theta: f64,
) -> Result<f64> {
    let h = omega * GROUP_VELOCITY_STEP;
    let up = wavevector(crystal, role, omega + h, theta)?;
    let down = wavevector(crystal, role, omega - h, theta)?;
    Ok((up - down) / (2.0 * h))
}

/// Quasi-phase-matching wavevector or birefringent cut angle that zeroes the
/// phase mismatch at the design wavelengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PmOffset {
    /// Grating wavevector `K₀ = 2π/Λ` (rad/m).
    Poling { k0: f64 },
    /// Propagation angle from the optic axis (rad).
    Angle { theta: f64 },
}

impl PmOffset {
    /// Wavevector subtracted in the phase mismatch.
    pub fn grating_wavevector(&self) -> f64 {
        match *self {
            PmOffset::Poling { k0 } => k0,
            PmOffset::Angle { .. } => 0.0,
        }
    }

    /// Angle fed to the index model; principal-axis crystals ignore it.
    pub fn theta(&self) -> f64 {
        match *self {
            PmOffset::Poling { .. } => FRAC_PI_2,
            PmOffset::Angle { theta } => theta,
        }
    }

    /// Poling period in µm, if any. Infinite for `K₀ = 0`.
    pub fn poling_period_um(&self) -> Option<f64> {
        match *self {
            PmOffset::Poling { k0 } => Some(2.0 * PI / k0.abs() * 1e6),
            PmOffset::Angle { .. } => None,
        }
    }
}

fn mismatch_without_offset(crystal: &CrystalSpec, omegas: [f64; 3], theta: f64) -> Result<f64> {
    let [wp, ws, wi] = omegas;
    Ok(wavevector(crystal, Role::Pump, wp, theta)?
        - wavevector(crystal, Role::Signal, ws, theta)?
        - wavevector(crystal, Role::Idler, wi, theta)?)
}

/// Solves for the offset that phase-matches the given centre wavelengths (nm).
pub fn solve_pm_offset(
    crystal: &CrystalSpec,
    pump_nm: f64,
    signal_nm: f64,
    idler_nm: f64,
) -> Result<PmOffset> {
    let inv_p = 1.0 / pump_nm;
    let residual = (inv_p - 1.0 / signal_nm - 1.0 / idler_nm).abs() / inv_p;
    if !(residual <= 1e-9) {
        return Err(Error::Precondition(format!(
            "energy conservation violated: 1/{pump_nm} != 1/{signal_nm} + 1/{idler_nm}"
        )));
    }
    let omegas = [
        omega_from_nm(pump_nm),
        omega_from_nm(signal_nm),
        omega_from_nm(idler_nm),
    ];
    match crystal.pm_type {
        PmType::PeriodicallyPoled => Ok(PmOffset::Poling {
            k0: mismatch_without_offset(crystal, omegas, FRAC_PI_2)?,
        }),
        PmType::BirefringentAngle => {
            let f = |theta: f64| mismatch_without_offset(crystal, omegas, theta);
            let (lo, hi) = (1e-9, FRAC_PI_2);
            let (flo, fhi) = (f(lo)?, f(hi)?);
            if flo.signum() == fhi.signum() {
                return Err(Error::NoRoot(format!(
                    "{}: no phase-matching angle in (0, pi/2) for {pump_nm:.3} -> {signal_nm:.3} + {idler_nm:.3} nm",
                    crystal.name
                )));
            }
            let theta = bisect(f, lo, hi, 0.0)?;
            Ok(PmOffset::Angle { theta })
        }
    }
}

/// Phase-matching offset for degenerate emission at `center_nm`.
pub fn degenerate_offset(crystal: &CrystalSpec, center_nm: f64) -> Result<PmOffset> {
    solve_pm_offset(crystal, center_nm / 2.0, center_nm, center_nm)
}

/// Group-velocity matching residual (s/m) for degenerate emission at
/// `center_nm`, with the angle re-solved at that wavelength.
pub fn gvm_residual(crystal: &CrystalSpec, center_nm: f64) -> Result<f64> {
    let theta = degenerate_offset(crystal, center_nm)?.theta();
    let w = omega_from_nm(center_nm);
    let kp = inverse_group_velocity(crystal, Role::Pump, 2.0 * w, theta)?;
    let ks = inverse_group_velocity(crystal, Role::Signal, w, theta)?;
    let ki = inverse_group_velocity(crystal, Role::Idler, w, theta)?;
    Ok(match (crystal.gvm_condition, crystal.gvm_photon) {
        (GvmCondition::Symmetric, _) => kp - 0.5 * (ks + ki),
        (GvmCondition::Asymmetric, Some(Role::Idler)) => kp - ki,
        (GvmCondition::Asymmetric, _) => kp - ks,
    })
}

/// Degenerate signal/idler wavelength (nm) at which the crystal's
/// group-velocity matching condition holds, with the pump at half of it.
/// The grid-default wavelength span is scanned for a sign change and the
/// bracket nearest its centre is refined by bisection.
pub fn find_gvm_center(crystal: &CrystalSpec) -> Result<f64> {
    let [lo, hi] = crystal.grid.lambda_nm;
    let f = |l: f64| gvm_residual(crystal, l);
    let brackets = scan_sign_changes(f, lo, hi, GVM_SCAN_POINTS)?;
    let mid = 0.5 * (lo + hi);
    let &(a, b) = brackets
        .iter()
        .min_by(|x, y| {
            let dx = (0.5 * (x.0 + x.1) - mid).abs();
            let dy = (0.5 * (y.0 + y.1) - mid).abs();
            dx.total_cmp(&dy)
        })
        .ok_or_else(|| {
            Error::NoRoot(format!(
                "{}: group-velocity matching condition has no sign change in [{lo}, {hi}] nm",
                crystal.name
            ))
        })?;
    bisect(f, a, b, GVM_TOLERANCE_NM * 1e-3)
}

/// Degenerate operating point of a crystal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub center_nm: f64,
    pub pump_nm: f64,
    pub offset: PmOffset,
    pub gvm_residual: f64,
}

pub fn operating_point(crystal: &CrystalSpec) -> Result<OperatingPoint> {
    let center_nm = find_gvm_center(crystal)?;
    Ok(OperatingPoint {
        center_nm,
        pump_nm: center_nm / 2.0,
        offset: degenerate_offset(crystal, center_nm)?,
        gvm_residual: gvm_residual(crystal, center_nm)?,
    })
}
