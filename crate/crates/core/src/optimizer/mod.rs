//! Maximisation of `α` over crystal length and pump bandwidth, filter
//! bandwidth sweeps and grid-convergence checks.

mod bfgs;

pub use bfgs::{maximize_bounded, MaximizeOptions, MaximizeOutcome};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{operating_point, CrystalSpec, OperatingPoint};
use crate::error::{Error, Result};
use crate::jsa::{
    apply_herald_filter, make_grid, FilterShape, FilterSpec, FrequencyGrid, MismatchTable, PmShape,
    SourceConfig,
};
use crate::metrics::{
    purity, transmission_with, SourceMetrics, TransmissionModel, DEFAULT_ERROR_BOUND,
};

/// Default ceiling on the estimated working set of one evaluation.
pub const DEFAULT_MEMORY_CAP_BYTES: u64 = 4 << 30;
/// Dense `N × N` matrices alive during one evaluation: mismatch table,
/// amplitude, filtered amplitude and Gram matrix.
const MATRICES_PER_EVALUATION: u64 = 4;

/// Bytes needed to evaluate a source on an `n`-point grid.
pub fn estimated_bytes(n: usize) -> u64 {
    (n as u64).pow(2) * 8 * MATRICES_PER_EVALUATION
}

pub fn check_memory(n: usize, cap_bytes: u64) -> Result<()> {
    let need = estimated_bytes(n);
    if need > cap_bytes {
        return Err(Error::Resource(format!(
            "a {n}x{n} grid needs about {} MiB, above the {} MiB cap",
            need >> 20,
            cap_bytes >> 20
        )));
    }
    Ok(())
}

/// Logarithmically spaced filter bandwidths, both ends included.
pub fn log_bandwidths(min_nm: f64, max_nm: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![min_nm];
    }
    let (a, b) = (min_nm.ln(), max_nm.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Default sweep: 1 nm to 200 nm, 24 points.
pub fn default_bandwidths() -> Vec<f64> {
    log_bandwidths(1.0, 200.0, 24)
}

/// How an amplitude is turned into metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scoring {
    pub error_bound: f64,
    pub transmission: TransmissionModel,
}

impl Default for Scoring {
    fn default() -> Self {
        Self {
            error_bound: DEFAULT_ERROR_BOUND,
            transmission: TransmissionModel::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceEvaluation {
    pub metrics: SourceMetrics,
    pub purity_unfiltered: f64,
}

/// Assemble, filter and score one source configuration.
pub fn evaluate_source(
    config: &SourceConfig,
    filter: &FilterSpec,
    grid: &FrequencyGrid,
    scoring: &Scoring,
) -> Result<SourceEvaluation> {
    let jsa = crate::jsa::assemble_jsa(config, grid)?;
    score(&jsa, filter, scoring, config.length_mm, config.pump.fwhm_nm)
}

/// `(η, P)` of the filtered amplitude.
fn eta_purity(
    jsa: &crate::jsa::JointAmplitude,
    filter: &FilterSpec,
    model: TransmissionModel,
    length_mm: f64,
    pump_fwhm_nm: f64,
) -> Result<(f64, f64)> {
    let non_finite = || Error::NonFinite {
        length_mm,
        pump_fwhm_nm,
    };
    let filtered = apply_herald_filter(jsa, filter)?;
    let eta = transmission_with(jsa, &filtered, model).map_err(|e| match e {
        Error::Degenerate(_) => non_finite(),
        e => e,
    })?;
    let p = match purity(&filtered) {
        Ok(p) => p.min(1.0),
        Err(Error::Degenerate(_)) => 0.0,
        Err(e) => return Err(e),
    };
    if !(eta.is_finite() && p.is_finite()) {
        return Err(non_finite());
    }
    Ok((eta, p))
}

fn score(
    jsa: &crate::jsa::JointAmplitude,
    filter: &FilterSpec,
    scoring: &Scoring,
    length_mm: f64,
    pump_fwhm_nm: f64,
) -> Result<SourceEvaluation> {
    let (eta, p) = eta_purity(jsa, filter, scoring.transmission, length_mm, pump_fwhm_nm)?;
    let purity_unfiltered = if filter.shape == FilterShape::None {
        p
    } else {
        purity(jsa)?.min(1.0)
    };
    Ok(SourceEvaluation {
        metrics: SourceMetrics::new(eta, p, scoring.error_bound)?,
        purity_unfiltered,
    })
}

/// A crystal at its group-velocity-matched point with the phase mismatch
/// tabulated on a grid. Shared by every optimisation on that grid.
#[derive(Clone, Debug)]
pub struct PreparedSource {
    crystal: CrystalSpec,
    operating_point: OperatingPoint,
    table: MismatchTable,
    pm_shape: PmShape,
}

impl PreparedSource {
    pub fn new(crystal: &CrystalSpec, pm_shape: PmShape, grid: &FrequencyGrid) -> Result<Self> {
        let op = operating_point(crystal)?;
        let table = MismatchTable::new(crystal, op.offset, op.pump_nm, grid)?;
        Ok(Self {
            crystal: crystal.clone(),
            operating_point: op,
            table,
            pm_shape,
        })
    }

    pub fn crystal(&self) -> &CrystalSpec {
        &self.crystal
    }

    pub fn operating_point(&self) -> &OperatingPoint {
        &self.operating_point
    }

    pub fn grid(&self) -> &FrequencyGrid {
        self.table.grid()
    }

    pub fn pm_shape(&self) -> PmShape {
        self.pm_shape
    }

    /// Degenerate wavelength; filters are centred here.
    pub fn center_nm(&self) -> f64 {
        self.operating_point.center_nm
    }

    pub fn config(&self, length_mm: f64, pump_fwhm_nm: f64) -> Result<SourceConfig> {
        SourceConfig::new(
            self.crystal.clone(),
            crate::jsa::PumpSpec::new(self.operating_point.pump_nm, pump_fwhm_nm)?,
            length_mm,
            self.operating_point.offset,
            self.pm_shape,
        )
    }

    pub fn evaluate(
        &self,
        length_mm: f64,
        pump_fwhm_nm: f64,
        filter: &FilterSpec,
        scoring: &Scoring,
    ) -> Result<SourceEvaluation> {
        let jsa = self.table.amplitude(length_mm, pump_fwhm_nm, self.pm_shape);
        score(&jsa, filter, scoring, length_mm, pump_fwhm_nm)
    }

    /// `α` alone; skips the unfiltered purity.
    pub fn alpha(
        &self,
        length_mm: f64,
        pump_fwhm_nm: f64,
        filter: &FilterSpec,
        model: TransmissionModel,
    ) -> Result<f64> {
        let jsa = self.table.amplitude(length_mm, pump_fwhm_nm, self.pm_shape);
        let (eta, p) = eta_purity(&jsa, filter, model, length_mm, pump_fwhm_nm)?;
        Ok(eta * p)
    }
}

#[derive(Clone, Debug)]
pub struct OptimizationProblem {
    pub crystal: CrystalSpec,
    pub pm_shape: PmShape,
    pub filter: FilterSpec,
    pub grid: FrequencyGrid,
    /// `(L mm, pump FWHM nm)`; the box midpoint when absent.
    pub start: Option<[f64; 2]>,
    pub scoring: Scoring,
    pub options: MaximizeOptions,
}

impl OptimizationProblem {
    /// Problem on the crystal's default grid with `points` samples.
    pub fn new(
        crystal: &CrystalSpec,
        pm_shape: PmShape,
        filter: FilterSpec,
        points: usize,
    ) -> Result<Self> {
        let [lo, hi] = crystal.grid.lambda_nm;
        Ok(Self {
            crystal: crystal.clone(),
            pm_shape,
            filter,
            grid: make_grid(lo, hi, points)?,
            start: None,
            scoring: Scoring::default(),
            options: MaximizeOptions::default(),
        })
    }

    pub fn with_start(mut self, start: [f64; 2]) -> Self {
        self.start = Some(start);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalPoint {
    pub length_mm: f64,
    pub pump_fwhm_nm: f64,
    pub metrics: SourceMetrics,
    pub purity_unfiltered: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn box_of(crystal: &CrystalSpec) -> ([f64; 2], [f64; 2]) {
    let b = &crystal.bounds;
    (
        [b.length_mm[0], b.pump_fwhm_nm[0]],
        [b.length_mm[1], b.pump_fwhm_nm[1]],
    )
}

pub fn box_midpoint(crystal: &CrystalSpec) -> [f64; 2] {
    let (lo, hi) = box_of(crystal);
    [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])]
}

pub fn maximize_alpha(problem: &OptimizationProblem) -> Result<OptimalPoint> {
    let source = PreparedSource::new(&problem.crystal, problem.pm_shape, &problem.grid)?;
    let start = problem
        .start
        .unwrap_or_else(|| box_midpoint(&problem.crystal));
    maximize_prepared(
        &source,
        &problem.filter,
        start,
        &problem.scoring,
        &problem.options,
    )
}

/// Maximise `α` for one filter on an already prepared source.
pub fn maximize_prepared(
    source: &PreparedSource,
    filter: &FilterSpec,
    start: [f64; 2],
    scoring: &Scoring,
    options: &MaximizeOptions,
) -> Result<OptimalPoint> {
    let (lo, hi) = box_of(&source.crystal);
    let out = maximize_bounded(
        |x: &[f64]| source.alpha(x[0], x[1], filter, scoring.transmission),
        &lo,
        &hi,
        &start,
        options,
    )?;
    let eval = source.evaluate(out.x[0], out.x[1], filter, scoring)?;
    Ok(OptimalPoint {
        length_mm: out.x[0],
        pump_fwhm_nm: out.x[1],
        metrics: eval.metrics,
        purity_unfiltered: eval.purity_unfiltered,
        evaluations: out.evaluations + 1,
        converged: out.converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub filter_fwhm_nm: f64,
    pub point: OptimalPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub best_row: usize,
}

impl SweepResult {
    pub fn from_rows(rows: Vec<SweepRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("sweep has no rows".into()));
        }
        let best_row = rows.iter().enumerate().fold(0, |best, (i, r)| {
            if r.point.metrics.alpha > rows[best].point.metrics.alpha {
                i
            } else {
                best
            }
        });
        Ok(Self { rows, best_row })
    }

    pub fn best(&self) -> &SweepRow {
        &self.rows[self.best_row]
    }
}

/// Order in which warm-started rows are visited.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    Ascending,
    /// Widest filter first, so the chain starts near the unfiltered optimum.
    #[default]
    Descending,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    /// Start each row from the previous row's optimum. Rows run one after
    /// another; without it they run in parallel from the box midpoint.
    pub warm_start: bool,
    pub order: SweepOrder,
    pub scoring: Scoring,
    pub maximize: MaximizeOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            warm_start: true,
            order: SweepOrder::default(),
            scoring: Scoring::default(),
            maximize: MaximizeOptions::default(),
        }
    }
}

pub fn sweep_filter_bandwidths(
    crystal: &CrystalSpec,
    pm_shape: PmShape,
    filter_shape: FilterShape,
    bandwidths_nm: &[f64],
    grid: &FrequencyGrid,
    options: &SweepOptions,
) -> Result<SweepResult> {
    let source = PreparedSource::new(crystal, pm_shape, grid)?;
    sweep_prepared(&source, filter_shape, bandwidths_nm, options)
}

pub fn sweep_prepared(
    source: &PreparedSource,
    filter_shape: FilterShape,
    bandwidths_nm: &[f64],
    options: &SweepOptions,
) -> Result<SweepResult> {
    if bandwidths_nm.is_empty() || bandwidths_nm.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation(
            "bandwidths must be a nonempty strictly increasing list".into(),
        ));
    }
    let filter_for = |w: f64| FilterSpec::new(filter_shape, w, source.center_nm());
    let midpoint = box_midpoint(&source.crystal);
    let run = |w: f64, start: [f64; 2]| -> Result<SweepRow> {
        let point = maximize_prepared(
            source,
            &filter_for(w)?,
            start,
            &options.scoring,
            &options.maximize,
        )?;
        Ok(SweepRow {
            filter_fwhm_nm: w,
            point,
        })
    };
    let rows = if options.warm_start {
        let mut rows = Vec::with_capacity(bandwidths_nm.len());
        let mut start = midpoint;
        let visit: Vec<f64> = match options.order {
            SweepOrder::Ascending => bandwidths_nm.to_vec(),
            SweepOrder::Descending => bandwidths_nm.iter().rev().copied().collect(),
        };
        for w in visit {
            let row = run(w, start)?;
            start = [row.point.length_mm, row.point.pump_fwhm_nm];
            rows.push(row);
        }
        if options.order == SweepOrder::Descending {
            rows.reverse();
        }
        rows
    } else {
        bandwidths_nm
            .par_iter()
            .map(|&w| run(w, midpoint))
            .collect::<Result<Vec<_>>>()?
    };
    SweepResult::from_rows(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub points: usize,
    pub alpha: f64,
    pub deviation: f64,
}

/// `|α(N) − α(reference)|` for each resolution on the crystal's grid span.
pub fn convergence_study(
    config: &SourceConfig,
    filter: &FilterSpec,
    resolutions: &[usize],
    reference: usize,
    scoring: &Scoring,
    memory_cap_bytes: u64,
) -> Result<Vec<ConvergencePoint>> {
    if resolutions.iter().any(|&n| n > reference) {
        return Err(Error::Validation(format!(
            "reference resolution {reference} is below a requested resolution"
        )));
    }
    check_memory(reference, memory_cap_bytes)?;
    let [lo, hi] = config.crystal.grid.lambda_nm;
    let alpha_at = |n: usize| -> Result<f64> {
        let grid = make_grid(lo, hi, n)?;
        Ok(evaluate_source(config, filter, &grid, scoring)?
            .metrics
            .alpha)
    };
    let reference_alpha = alpha_at(reference)?;
    resolutions
        .iter()
        .map(|&n| {
            let alpha = if n == reference {
                reference_alpha
            } else {
                alpha_at(n)?
            };
            Ok(ConvergencePoint {
                points: n,
                alpha,
                deviation: (alpha - reference_alpha).abs(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::Catalog;

    fn ktp() -> CrystalSpec {
        Catalog::builtin().unwrap().get("ktp").unwrap().clone()
    }

    #[test]
    fn memory_guard() {
        assert_eq!(estimated_bytes(1000), 32_000_000);
        assert!(check_memory(1000, DEFAULT_MEMORY_CAP_BYTES).is_ok());
        assert!(matches!(
            check_memory(100_000, DEFAULT_MEMORY_CAP_BYTES),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn bandwidth_spacing() {
        let b = default_bandwidths();
        assert_eq!(b.len(), 24);
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[23] - 200.0).abs() < 1e-9);
        let r: Vec<f64> = b.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(r.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-9));
    }

    #[test]
    fn no_filter_identity() {
        let c = ktp();
        let grid = make_grid(1028.0, 2136.0, 200).unwrap();
        let cfg = SourceConfig::at_gvm(&c, 8.0, 3.0, PmShape::Sinc).unwrap();
        let e = evaluate_source(&cfg, &FilterSpec::none(), &grid, &Scoring::default()).unwrap();
        assert_eq!(e.metrics.transmission, 1.0);
        assert!((e.metrics.alpha - e.purity_unfiltered).abs() < 1e-15);
    }

    #[test]
    fn prepared_matches_direct_evaluation() {
        let c = ktp();
        let grid = make_grid(1028.0, 2136.0, 150).unwrap();
        let src = PreparedSource::new(&c, PmShape::Sinc, &grid).unwrap();
        let f = FilterSpec::gaussian(40.0, src.center_nm()).unwrap();
        let sc = Scoring::default();
        let a = src.evaluate(4.0, 6.0, &f, &sc).unwrap();
        let b = evaluate_source(&src.config(4.0, 6.0).unwrap(), &f, &grid, &sc).unwrap();
        assert!((a.metrics.alpha - b.metrics.alpha).abs() < 1e-12);
        assert!(
            (src.alpha(4.0, 6.0, &f, sc.transmission).unwrap() - a.metrics.alpha).abs() < 1e-15
        );
    }

    #[test]
    fn optimum_is_inside_box_and_stationary() {
        let c = ktp();
        let f = FilterSpec::gaussian(80.0, 1582.0).unwrap();
        let problem = OptimizationProblem::new(&c, PmShape::Sinc, f, 160).unwrap();
        let mid = box_midpoint(&c);
        let start_alpha = PreparedSource::new(&c, PmShape::Sinc, &problem.grid)
            .unwrap()
            .alpha(
                mid[0],
                mid[1],
                &problem.filter,
                problem.scoring.transmission,
            )
            .unwrap();
        let p = maximize_alpha(&problem).unwrap();
        assert!(p.length_mm >= 0.5 && p.length_mm <= 30.0);
        assert!(p.pump_fwhm_nm >= 0.1 && p.pump_fwhm_nm <= 30.0);
        assert!(p.metrics.alpha >= start_alpha);
        let again =
            maximize_alpha(&problem.clone().with_start([p.length_mm, p.pump_fwhm_nm])).unwrap();
        assert!((again.metrics.alpha - p.metrics.alpha).abs() < 1e-6);
    }

    #[test]
    fn sweep_with_all_pass_rectangle_matches_unfiltered() {
        let c = ktp();
        let grid = make_grid(1028.0, 2136.0, 120).unwrap();
        let opts = SweepOptions::default();
        let swept = sweep_filter_bandwidths(
            &c,
            PmShape::GaussianApodized,
            FilterShape::Rectangular,
            &[3000.0],
            &grid,
            &opts,
        )
        .unwrap();
        let row = swept.best();
        assert_eq!(row.point.metrics.transmission, 1.0);
        let mut problem =
            OptimizationProblem::new(&c, PmShape::GaussianApodized, FilterSpec::none(), 120)
                .unwrap();
        problem.grid = grid;
        let free = maximize_alpha(&problem).unwrap();
        assert!((free.metrics.alpha - row.point.metrics.alpha).abs() < 1e-9);
    }

    #[test]
    fn sweep_rejects_unsorted() {
        let c = ktp();
        let grid = make_grid(1028.0, 2136.0, 20).unwrap();
        let r = sweep_filter_bandwidths(
            &c,
            PmShape::Sinc,
            FilterShape::Gaussian,
            &[5.0, 5.0],
            &grid,
            &SweepOptions::default(),
        );
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn parallel_sweep_is_deterministic() {
        let c = ktp();
        let grid = make_grid(1028.0, 2136.0, 80).unwrap();
        let opts = SweepOptions {
            warm_start: false,
            ..SweepOptions::default()
        };
        let bw = [20.0, 60.0, 120.0];
        let a =
            sweep_filter_bandwidths(&c, PmShape::Sinc, FilterShape::Gaussian, &bw, &grid, &opts)
                .unwrap();
        let b =
            sweep_filter_bandwidths(&c, PmShape::Sinc, FilterShape::Gaussian, &bw, &grid, &opts)
                .unwrap();
        assert_eq!(a, b);
        assert!(a
            .rows
            .iter()
            .all(|r| r.point.metrics.alpha <= a.best().point.metrics.alpha));
    }

    #[test]
    fn self_comparison_has_zero_deviation() {
        let c = ktp();
        let cfg = SourceConfig::at_gvm(&c, 10.0, 2.0, PmShape::Sinc).unwrap();
        let f = FilterSpec::gaussian(80.0, 1582.0).unwrap();
        let d = convergence_study(
            &cfg,
            &f,
            &[100],
            100,
            &Scoring::default(),
            DEFAULT_MEMORY_CAP_BYTES,
        )
        .unwrap();
        assert_eq!(d[0].deviation, 0.0);
        assert!(matches!(
            convergence_study(
                &cfg,
                &f,
                &[100],
                50_000,
                &Scoring::default(),
                DEFAULT_MEMORY_CAP_BYTES
            ),
            Err(Error::Resource(_))
        ));
        assert!(convergence_study(
            &cfg,
            &f,
            &[200],
            100,
            &Scoring::default(),
            DEFAULT_MEMORY_CAP_BYTES
        )
        .is_err());
    }
}
