//! Summary-table rows built from filter sweeps.

use crate::dispersion::{Catalog, CrystalSpec, PmType};
use crate::error::{Error, Result};
use crate::io::TableRow;
use crate::jsa::{make_grid, FilterShape, PmShape};
use crate::metrics::{alpha_required, transmission_budget};
use crate::optimizer::{sweep_filter_bandwidths, SweepOptions, SweepResult};

/// One row of the summary table: a crystal with a phase-matching and filter shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableEntry {
    pub label: String,
    pub crystal: String,
    pub pm_shape: PmShape,
    pub filter_shape: FilterShape,
}

/// Rows for every crystal in the catalog. Poled crystals get a sinc pair
/// (gaussian and rectangular filter) and an apodised row; angle-tuned
/// crystals get the sinc pair only.
pub fn table_entries(catalog: &Catalog) -> Vec<TableEntry> {
    let mut out = Vec::new();
    for c in catalog.iter() {
        let name = c.name.to_uppercase();
        let poled = c.pm_type == PmType::PeriodicallyPoled;
        let base = if poled {
            format!("pp{name}")
        } else {
            name.clone()
        };
        let entry = |label: String, pm_shape, filter_shape| TableEntry {
            label,
            crystal: c.name.clone(),
            pm_shape,
            filter_shape,
        };
        out.push(entry(base.clone(), PmShape::Sinc, FilterShape::Gaussian));
        out.push(entry(
            format!("{base} R"),
            PmShape::Sinc,
            FilterShape::Rectangular,
        ));
        if poled {
            out.push(entry(
                format!("ap{name}"),
                PmShape::GaussianApodized,
                FilterShape::Gaussian,
            ));
        }
    }
    out
}

/// Sweeps the entry's filter bandwidths and condenses the best row.
pub fn table_row(
    entry: &TableEntry,
    crystal: &CrystalSpec,
    bandwidths_nm: &[f64],
    grid_points: usize,
    target_k: u32,
    options: &SweepOptions,
) -> Result<(TableRow, SweepResult)> {
    if !crystal.name.eq_ignore_ascii_case(&entry.crystal) {
        return Err(Error::Validation(format!(
            "entry `{}` is for {}, not {}",
            entry.label, entry.crystal, crystal.name
        )));
    }
    let [lo, hi] = crystal.grid.lambda_nm;
    let grid = make_grid(lo, hi, grid_points)?;
    let sweep = sweep_filter_bandwidths(
        crystal,
        entry.pm_shape,
        entry.filter_shape,
        bandwidths_nm,
        &grid,
        options,
    )?;
    let best = sweep.best();
    let alpha_opt = best.point.metrics.alpha;
    let required = alpha_required(target_k, options.scoring.error_bound)?;
    let eta_tb = match transmission_budget(alpha_opt, required) {
        Ok(v) => Some(v),
        Err(Error::Infeasible { .. }) => None,
        Err(e) => return Err(e),
    };
    let row = TableRow {
        label: entry.label.clone(),
        alpha_opt,
        eta_tb,
        lambda_c_nm: crate::dispersion::find_gvm_center(crystal)?,
        length_mm: best.point.length_mm,
        pump_fwhm_nm: best.point.pump_fwhm_nm,
        filter_fwhm_nm: best.filter_fwhm_nm,
    };
    Ok((row, sweep))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_catalog_gives_seven_rows() {
        let labels: Vec<String> = table_entries(&Catalog::builtin().unwrap())
            .into_iter()
            .map(|e| e.label)
            .collect();
        assert_eq!(
            labels,
            ["BBO", "BBO R", "KDP", "KDP R", "ppKTP", "ppKTP R", "apKTP"]
        );
    }

    #[test]
    fn empty_catalog_gives_no_rows() {
        assert!(table_entries(&Catalog::from_crystals(vec![])).is_empty());
    }
}
