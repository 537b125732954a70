use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::sellmeier::SellmeierModel;
use crate::error::{Error, Result};

/// Environment variable naming a directory of `*.json` crystal files that
/// replaces the built-in catalog.
pub const CATALOG_ENV: &str = "SPDC_CATALOG_DIR";

const REFERENCE_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pump,
    Signal,
    Idler,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Pump => "pump",
            Role::Signal => "signal",
            Role::Idler => "idler",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmType {
    PeriodicallyPoled,
    BirefringentAngle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GvmCondition {
    /// Pump inverse group velocity equals the signal/idler mean.
    Symmetric,
    /// Pump inverse group velocity equals that of one down-converted photon.
    Asymmetric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleMap {
    pub pump: String,
    pub signal: String,
    pub idler: String,
}

impl RoleMap {
    pub fn label(&self, role: Role) -> &str {
        match role {
            Role::Pump => &self.pump,
            Role::Signal => &self.signal,
            Role::Idler => &self.idler,
        }
    }
}

/// Box on the optimisation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    #[serde(rename = "L_mm")]
    pub length_mm: [f64; 2],
    pub pump_fwhm_nm: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDefaults {
    pub lambda_nm: [f64; 2],
    pub points: usize,
}

/// One nonlinear crystal: dispersion per polarisation, role assignment and
/// the parameter box used by the optimiser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCrystal", into = "RawCrystal")]
pub struct CrystalSpec {
    pub name: String,
    pub pm_type: PmType,
    pub gvm_condition: GvmCondition,
    /// Photon matched to the pump under [`GvmCondition::Asymmetric`].
    pub gvm_photon: Option<Role>,
    pub roles: RoleMap,
    pub models: BTreeMap<String, SellmeierModel>,
    pub bounds: Bounds,
    pub grid: GridDefaults,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawCrystal {
    name: String,
    pm_type: PmType,
    gvm_condition: GvmCondition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gvm_photon: Option<Role>,
    roles: RoleMap,
    models: BTreeMap<String, SellmeierModel>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    reference_indices: BTreeMap<String, Vec<[f64; 2]>>,
    bounds: Bounds,
    grid: GridDefaults,
}

impl TryFrom<RawCrystal> for CrystalSpec {
    type Error = Error;

    fn try_from(raw: RawCrystal) -> Result<Self> {
        let mut models = raw.models;
        for (pol, model) in models.iter_mut() {
            model.set_name(format!("{}-{}", raw.name, pol));
        }
        let spec = CrystalSpec {
            name: raw.name,
            pm_type: raw.pm_type,
            gvm_condition: raw.gvm_condition,
            gvm_photon: raw.gvm_photon,
            roles: raw.roles,
            models,
            bounds: raw.bounds,
            grid: raw.grid,
        };
        spec.validate()?;
        for (pol, pairs) in &raw.reference_indices {
            let model = spec.models.get(pol).ok_or_else(|| {
                Error::Catalog(format!(
                    "{}: reference indices for unknown axis `{pol}`",
                    spec.name
                ))
            })?;
            for &[lambda, expected] in pairs {
                let n = model.refractive_index(lambda)?;
                if (n - expected).abs() > REFERENCE_TOLERANCE {
                    return Err(Error::Catalog(format!(
                        "{}: axis `{pol}` gives n({lambda} um) = {n:.6}, reference {expected:.6}",
                        spec.name
                    )));
                }
            }
        }
        Ok(spec)
    }
}

impl From<CrystalSpec> for RawCrystal {
    fn from(c: CrystalSpec) -> Self {
        RawCrystal {
            name: c.name,
            pm_type: c.pm_type,
            gvm_condition: c.gvm_condition,
            gvm_photon: c.gvm_photon,
            roles: c.roles,
            models: c.models,
            reference_indices: BTreeMap::new(),
            bounds: c.bounds,
            grid: c.grid,
        }
    }
}

impl CrystalSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Catalog(format!("{}: {msg}", self.name)));
        let [l0, l1] = self.bounds.length_mm;
        let [s0, s1] = self.bounds.pump_fwhm_nm;
        if !(l0 > 0.0 && l0 < l1) {
            return err(format!("bad length bounds [{l0}, {l1}]"));
        }
        if !(s0 > 0.0 && s0 < s1) {
            return err(format!("bad pump bandwidth bounds [{s0}, {s1}]"));
        }
        let [g0, g1] = self.grid.lambda_nm;
        if !(g0 > 0.0 && g0 < g1) || self.grid.points < 2 {
            return err("bad grid defaults".into());
        }
        for role in [Role::Pump, Role::Signal, Role::Idler] {
            let label = self.roles.label(role);
            let present = match (self.pm_type, label) {
                (PmType::BirefringentAngle, "e") => {
                    self.models.contains_key("o") && self.models.contains_key("e")
                }
                _ => self.models.contains_key(label),
            };
            if !present {
                return err(format!("role {role} maps to missing model `{label}`"));
            }
        }
        if self.gvm_condition == GvmCondition::Asymmetric
            && !matches!(self.gvm_photon, Some(Role::Signal | Role::Idler))
        {
            return err("asymmetric matching needs gvm_photon = signal or idler".into());
        }
        Ok(())
    }

    /// Refractive index seen by `role` at `wavelength_um`. For angle-tuned
    /// crystals the `e` label is the extraordinary index at `theta` from the
    /// optic axis; other labels ignore `theta`.
    pub fn index(&self, role: Role, wavelength_um: f64, theta: f64) -> Result<f64> {
        let label = self.roles.label(role);
        match (self.pm_type, label) {
            (PmType::BirefringentAngle, "e") => {
                let no = self.model("o")?.refractive_index(wavelength_um)?;
                let ne = self.model("e")?.refractive_index(wavelength_um)?;
                let (s, c) = theta.sin_cos();
                Ok(1.0 / (c * c / (no * no) + s * s / (ne * ne)).sqrt())
            }
            _ => self.model(label)?.refractive_index(wavelength_um),
        }
    }

    pub fn model(&self, label: &str) -> Result<&SellmeierModel> {
        self.models
            .get(label)
            .ok_or_else(|| Error::Catalog(format!("{}: no model `{label}`", self.name)))
    }

    /// Poled crystal with `n ≡ 1` for every role; useful as a reference medium.
    pub fn dispersionless(name: &str, grid_nm: [f64; 2], points: usize) -> Self {
        let mut models = BTreeMap::new();
        models.insert("v".to_string(), SellmeierModel::vacuum((0.05, 20.0)));
        CrystalSpec {
            name: name.into(),
            pm_type: PmType::PeriodicallyPoled,
            gvm_condition: GvmCondition::Symmetric,
            gvm_photon: None,
            roles: RoleMap {
                pump: "v".into(),
                signal: "v".into(),
                idler: "v".into(),
            },
            models,
            bounds: Bounds {
                length_mm: [0.5, 30.0],
                pump_fwhm_nm: [0.1, 30.0],
            },
            grid: GridDefaults {
                lambda_nm: grid_nm,
                points,
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl FromStr for CrystalSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_json(s)
    }
}

const BUILTIN: [(&str, &str); 3] = [
    ("bbo", include_str!("../../catalog/bbo.json")),
    ("kdp", include_str!("../../catalog/kdp.json")),
    ("ktp", include_str!("../../catalog/ktp.json")),
];

/// Named set of crystals, sorted by name.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    crystals: Vec<CrystalSpec>,
}

impl Catalog {
    pub fn builtin() -> Result<Self> {
        let crystals = BUILTIN
            .iter()
            .map(|(name, text)| {
                CrystalSpec::from_json(text)
                    .map_err(|e| Error::Catalog(format!("built-in `{name}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_crystals(crystals))
    }

    /// Loads every `*.json` file in `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let mut crystals = Vec::new();
        for entry in std::fs::read_dir(dir.as_ref())? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let spec = CrystalSpec::from_json(&text)
                .map_err(|e| Error::Catalog(format!("{}: {e}", path.display())))?;
            crystals.push(spec);
        }
        Ok(Self::from_crystals(crystals))
    }

    /// Directory from [`CATALOG_ENV`] when set, otherwise the built-in set.
    pub fn load() -> Result<Self> {
        match std::env::var_os(CATALOG_ENV) {
            Some(dir) if !dir.is_empty() => Self::from_dir(dir),
            _ => Self::builtin(),
        }
    }

    pub fn from_crystals(mut crystals: Vec<CrystalSpec>) -> Self {
        crystals.sort_by(|a, b| a.name.cmp(&b.name));
        Self { crystals }
    }

    pub fn get(&self, name: &str) -> Result<&CrystalSpec> {
        self.crystals
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::UnknownCrystal(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &CrystalSpec> {
        self.crystals.iter()
    }

    pub fn len(&self) -> usize {
        self.crystals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crystals.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_catalog_loads_and_matches_parameter_table() {
        let cat = Catalog::builtin().unwrap();
        assert_eq!(cat.len(), 3);
        let ktp = cat.get("KTP").unwrap();
        assert_eq!(ktp.bounds.length_mm, [0.5, 30.0]);
        assert_eq!(ktp.bounds.pump_fwhm_nm, [0.1, 30.0]);
        assert_eq!(ktp.grid.lambda_nm, [1028.0, 2136.0]);
        assert_eq!(ktp.grid.points, 2000);
        let bbo = cat.get("bbo").unwrap();
        assert_eq!(bbo.bounds.length_mm, [0.5, 40.0]);
        assert_eq!(bbo.grid.lambda_nm, [1008.0, 2093.0]);
        let kdp = cat.get("kdp").unwrap();
        assert_eq!(kdp.bounds.length_mm, [0.5, 25.0]);
        assert_eq!(kdp.bounds.pump_fwhm_nm, [0.1, 10.0]);
        assert_eq!(kdp.grid.lambda_nm, [780.0, 880.0]);
        assert_eq!(kdp.grid.points, 1500);
    }

    #[test]
    fn unknown_crystal() {
        let cat = Catalog::builtin().unwrap();
        assert!(matches!(cat.get("nosuch"), Err(Error::UnknownCrystal(_))));
    }

    #[test]
    fn reference_index_mismatch_is_rejected() {
        let text = BUILTIN[2].1.replace("1.745301", "1.746301");
        let err = CrystalSpec::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("reference"), "{err}");
    }

    #[test]
    fn missing_role_model_is_rejected() {
        let text = BUILTIN[2].1.replace(r#""idler": "z""#, r#""idler": "x""#);
        assert!(CrystalSpec::from_json(&text).is_err());
    }

    #[test]
    fn extraordinary_index_limits() {
        let cat = Catalog::builtin().unwrap();
        let bbo = cat.get("bbo").unwrap();
        let no = bbo.model("o").unwrap().refractive_index(0.8).unwrap();
        let ne = bbo.model("e").unwrap().refractive_index(0.8).unwrap();
        let along_axis = bbo.index(Role::Pump, 0.8, 0.0).unwrap();
        let across = bbo
            .index(Role::Pump, 0.8, std::f64::consts::FRAC_PI_2)
            .unwrap();
        assert!((along_axis - no).abs() < 1e-15);
        assert!((across - ne).abs() < 1e-15);
    }

    #[test]
    fn catalog_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cat = Catalog::builtin().unwrap();
        for c in cat.iter() {
            std::fs::write(
                dir.path().join(format!("{}.json", c.name)),
                c.to_json().unwrap(),
            )
            .unwrap();
        }
        std::fs::write(dir.path().join("README.txt"), "ignored").unwrap();
        let loaded = Catalog::from_dir(dir.path()).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded.get("kdp").unwrap(), cat.get("kdp").unwrap());
    }
}
