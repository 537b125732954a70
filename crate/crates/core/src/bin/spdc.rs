use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use spdc_core::dispersion::{operating_point, Catalog, CrystalSpec};
use spdc_core::io::{self, TableRow};
use spdc_core::jsa::{
    apply_herald_filter, make_grid, FilterShape, FilterSpec, PmShape, SourceConfig, WidthConvention,
};
use spdc_core::metrics::{
    alpha_required, ComplexityBudget, TransmissionModel, DEFAULT_ERROR_BOUND, DEFAULT_TARGET_K,
};
use spdc_core::optimizer::{
    check_memory, convergence_study, default_bandwidths, maximize_prepared, sweep_prepared,
    MaximizeOptions, PreparedSource, Scoring, SweepOptions, SweepOrder, DEFAULT_MEMORY_CAP_BYTES,
};
use spdc_core::report::{table_entries, table_row};
use spdc_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "spdc",
    version,
    about = "Design and optimise SPDC photon-pair sources"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Group-velocity-matched degenerate and pump wavelengths
    Gvm(Common),
    /// Dump the joint spectral amplitude (unfiltered and, with a filter, filtered)
    Jsa(Common),
    /// Maximise α for one filter bandwidth
    Optimize(Common),
    /// Maximise α across filter bandwidths
    Sweep(Common),
    /// Summary table over every catalog crystal
    Table(Common),
    /// Deviation of α from a high-resolution reference
    Converge(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Crystal name (positional or --crystal)
    crystal_pos: Option<String>,
    #[arg(long)]
    crystal: Option<String>,
    /// JSON run configuration; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_pm)]
    pm: Option<PmShape>,
    #[arg(long, value_parser = parse_filter)]
    filter: Option<FilterShape>,
    #[arg(long)]
    no_filter: bool,
    /// Filter FWHM (field amplitude unless --intensity-fwhm)
    #[arg(long)]
    fwhm_nm: Option<f64>,
    #[arg(long)]
    intensity_fwhm: bool,
    /// Comma-separated filter bandwidths in nm
    #[arg(long, value_delimiter = ',')]
    bandwidths: Option<Vec<f64>>,
    #[arg(long, visible_alias = "n", value_delimiter = ',')]
    grid_n: Option<Vec<usize>>,
    #[arg(long)]
    lambda_min_nm: Option<f64>,
    #[arg(long)]
    lambda_max_nm: Option<f64>,
    #[arg(long)]
    length_mm: Option<f64>,
    #[arg(long)]
    pump_fwhm_nm: Option<f64>,
    /// Reference resolution for `converge`
    #[arg(long = "ref")]
    reference: Option<usize>,
    #[arg(long)]
    error_bound: Option<f64>,
    /// Heralding transmission: overlap (default) or norm-ratio
    #[arg(long, value_parser = parse_transmission)]
    transmission: Option<TransmissionModel>,
    #[arg(long)]
    target_k: Option<u32>,
    #[arg(long)]
    no_warm_start: bool,
    /// Visit bandwidths from narrowest to widest when warm-starting
    #[arg(long)]
    ascending: bool,
    #[arg(long)]
    memory_cap_mb: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pm(s: &str) -> std::result::Result<PmShape, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_transmission(s: &str) -> std::result::Result<TransmissionModel, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_filter(s: &str) -> std::result::Result<FilterShape, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Run configuration as read from a JSON file.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    crystal: Option<String>,
    pm_shape: Option<PmShape>,
    filter: Option<FilterShape>,
    fwhm_nm: Option<f64>,
    intensity_fwhm: Option<bool>,
    bandwidths: Option<Vec<f64>>,
    grid_n: Option<Vec<usize>>,
    lambda_nm: Option<[f64; 2]>,
    length_mm: Option<f64>,
    pump_fwhm_nm: Option<f64>,
    reference: Option<usize>,
    error_bound: Option<f64>,
    transmission: Option<TransmissionModel>,
    target_k: Option<u32>,
    warm_start: Option<bool>,
    order: Option<SweepOrder>,
    memory_cap_mb: Option<u64>,
    out: Option<PathBuf>,
}

/// Flags merged over the file configuration and defaults.
struct RunConfig {
    crystal: Option<String>,
    pm_shape: PmShape,
    filter: FilterShape,
    fwhm_nm: Option<f64>,
    convention: WidthConvention,
    bandwidths: Vec<f64>,
    grid_n: Vec<usize>,
    lambda_nm: Option<[f64; 2]>,
    length_mm: Option<f64>,
    pump_fwhm_nm: Option<f64>,
    reference: Option<usize>,
    error_bound: f64,
    transmission: TransmissionModel,
    target_k: u32,
    warm_start: bool,
    order: SweepOrder,
    memory_cap: u64,
    out: PathBuf,
}

impl RunConfig {
    fn resolve(flags: Common) -> Result<Self> {
        let file: FileConfig = match &flags.config {
            Some(p) => serde_json::from_reader(File::open(p)?)?,
            None => FileConfig::default(),
        };
        let filter = if flags.no_filter {
            FilterShape::None
        } else {
            flags
                .filter
                .or(file.filter)
                .unwrap_or(FilterShape::Gaussian)
        };
        let lambda_nm = match (flags.lambda_min_nm, flags.lambda_max_nm, file.lambda_nm) {
            (Some(a), Some(b), _) => Some([a, b]),
            (None, None, f) => f,
            (a, b, f) => {
                let f = f.ok_or_else(|| {
                    Error::Validation("give both --lambda-min-nm and --lambda-max-nm".into())
                })?;
                Some([a.unwrap_or(f[0]), b.unwrap_or(f[1])])
            }
        };
        let cfg = Self {
            crystal: flags.crystal.or(flags.crystal_pos).or(file.crystal),
            pm_shape: flags.pm.or(file.pm_shape).unwrap_or(PmShape::Sinc),
            filter,
            fwhm_nm: flags.fwhm_nm.or(file.fwhm_nm),
            convention: if flags.intensity_fwhm || file.intensity_fwhm.unwrap_or(false) {
                WidthConvention::Intensity
            } else {
                WidthConvention::Field
            },
            bandwidths: flags
                .bandwidths
                .or(file.bandwidths)
                .unwrap_or_else(default_bandwidths),
            grid_n: flags.grid_n.or(file.grid_n).unwrap_or_default(),
            lambda_nm,
            length_mm: flags.length_mm.or(file.length_mm),
            pump_fwhm_nm: flags.pump_fwhm_nm.or(file.pump_fwhm_nm),
            reference: flags.reference.or(file.reference),
            error_bound: flags
                .error_bound
                .or(file.error_bound)
                .unwrap_or(DEFAULT_ERROR_BOUND),
            transmission: flags.transmission.or(file.transmission).unwrap_or_default(),
            target_k: flags.target_k.or(file.target_k).unwrap_or(DEFAULT_TARGET_K),
            warm_start: !flags.no_warm_start && file.warm_start.unwrap_or(true),
            order: if flags.ascending {
                SweepOrder::Ascending
            } else {
                file.order.unwrap_or_default()
            },
            memory_cap: flags
                .memory_cap_mb
                .or(file.memory_cap_mb)
                .map(|mb| mb << 20)
                .unwrap_or(DEFAULT_MEMORY_CAP_BYTES),
            out: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from(".")),
        };
        if !(cfg.error_bound > 0.0 && cfg.error_bound < 1.0) {
            return Err(Error::Validation(format!(
                "--error-bound {} must lie in (0, 1)",
                cfg.error_bound
            )));
        }
        if cfg.target_k == 0 {
            return Err(Error::Validation("--target-k must be at least 1".into()));
        }
        Ok(cfg)
    }

    fn crystal<'a>(&self, catalog: &'a Catalog) -> Result<&'a CrystalSpec> {
        let name = self
            .crystal
            .as_deref()
            .ok_or_else(|| Error::Validation("no crystal given".into()))?;
        catalog.get(name)
    }

    fn points(&self, crystal: &CrystalSpec) -> usize {
        self.grid_n.first().copied().unwrap_or(crystal.grid.points)
    }

    fn grid(&self, crystal: &CrystalSpec, points: usize) -> Result<spdc_core::jsa::FrequencyGrid> {
        check_memory(points, self.memory_cap)?;
        let [lo, hi] = self.lambda_nm.unwrap_or(crystal.grid.lambda_nm);
        make_grid(lo, hi, points)
    }

    fn filter_at(&self, width_nm: f64, center_nm: f64) -> Result<FilterSpec> {
        Ok(FilterSpec::new(self.filter, width_nm, center_nm)?.with_convention(self.convention))
    }

    fn single_filter(&self, center_nm: f64) -> Result<FilterSpec> {
        if self.filter == FilterShape::None {
            return Ok(FilterSpec::none());
        }
        let w = self.fwhm_nm.ok_or_else(|| {
            Error::Validation("--fwhm-nm is required with a filter (or pass --no-filter)".into())
        })?;
        self.filter_at(w, center_nm)
    }

    fn maximize_options(&self) -> MaximizeOptions {
        MaximizeOptions::default()
    }

    fn scoring(&self) -> Scoring {
        Scoring {
            error_bound: self.error_bound,
            transmission: self.transmission,
        }
    }

    fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            warm_start: self.warm_start,
            order: self.order,
            scoring: self.scoring(),
            maximize: self.maximize_options(),
        }
    }

    fn stem(&self, crystal: &CrystalSpec) -> String {
        format!(
            "{}_{}_{}",
            crystal.name.to_lowercase(),
            self.pm_shape,
            self.filter
        )
    }

    fn create(&self, name: &str) -> Result<(BufWriter<File>, PathBuf)> {
        std::fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        Ok((BufWriter::new(File::create(&path)?), path))
    }
}

fn cmd_gvm(cfg: &RunConfig, catalog: &Catalog) -> Result<()> {
    let crystal = cfg.crystal(catalog)?;
    let op = operating_point(crystal)?;
    println!("crystal: {}", crystal.name);
    println!("lambda_c_nm: {}", io::fmt6(op.center_nm));
    println!("pump_nm: {}", io::fmt6(op.pump_nm));
    println!("gvm_residual_s_per_m: {}", io::fmt6(op.gvm_residual));
    match op.offset.poling_period_um() {
        Some(p) => println!("poling_period_um: {}", io::fmt6(p)),
        None => println!("theta_deg: {}", io::fmt6(op.offset.theta().to_degrees())),
    }
    Ok(())
}

/// Explicit (L, σ_p) or the optimum at the configured filter.
fn working_point(
    cfg: &RunConfig,
    source: &PreparedSource,
    filter: &FilterSpec,
) -> Result<(f64, f64)> {
    match (cfg.length_mm, cfg.pump_fwhm_nm) {
        (Some(l), Some(s)) => Ok((l, s)),
        (l, s) => {
            let c = source.crystal();
            let mid = spdc_core::optimizer::box_midpoint(c);
            let p = maximize_prepared(
                source,
                filter,
                [l.unwrap_or(mid[0]), s.unwrap_or(mid[1])],
                &cfg.scoring(),
                &cfg.maximize_options(),
            )?;
            Ok((l.unwrap_or(p.length_mm), s.unwrap_or(p.pump_fwhm_nm)))
        }
    }
}

fn cmd_jsa(cfg: &RunConfig, catalog: &Catalog) -> Result<()> {
    let crystal = cfg.crystal(catalog)?;
    let grid = cfg.grid(crystal, cfg.points(crystal))?;
    let source = PreparedSource::new(crystal, cfg.pm_shape, &grid)?;
    let filter = cfg.single_filter(source.center_nm())?;
    let (l, s) = working_point(cfg, &source, &filter)?;
    let config = source.config(l, s)?;
    let jsa = spdc_core::jsa::assemble_jsa(&config, &grid)?;
    let stem = format!("{}_jsa", cfg.stem(crystal));
    let p = io::write_jsa(&cfg.out, &stem, &jsa)?;
    println!("L_mm: {}", io::fmt6(l));
    println!("pump_fwhm_nm: {}", io::fmt6(s));
    println!("unfiltered: {}", p.display());
    if filter.shape != FilterShape::None {
        let filtered = apply_herald_filter(&jsa, &filter)?;
        let p = io::write_jsa(&cfg.out, &format!("{stem}_filtered"), &filtered)?;
        println!("filtered: {}", p.display());
    }
    Ok(())
}

fn cmd_optimize(cfg: &RunConfig, catalog: &Catalog) -> Result<()> {
    let crystal = cfg.crystal(catalog)?;
    let grid = cfg.grid(crystal, cfg.points(crystal))?;
    let source = PreparedSource::new(crystal, cfg.pm_shape, &grid)?;
    let filter = cfg.single_filter(source.center_nm())?;
    let mid = spdc_core::optimizer::box_midpoint(crystal);
    let start = [
        cfg.length_mm.unwrap_or(mid[0]),
        cfg.pump_fwhm_nm.unwrap_or(mid[1]),
    ];
    let p = maximize_prepared(
        &source,
        &filter,
        start,
        &cfg.scoring(),
        &cfg.maximize_options(),
    )?;
    let budget = ComplexityBudget::new(cfg.error_bound, cfg.target_k, p.metrics.alpha)?;
    println!("crystal: {}", crystal.name);
    println!("L_mm: {}", io::fmt6(p.length_mm));
    println!("pump_fwhm_nm: {}", io::fmt6(p.pump_fwhm_nm));
    println!("eta: {}", io::fmt6(p.metrics.transmission));
    println!("x2: {}", io::fmt6(p.metrics.purity));
    println!("alpha: {}", io::fmt6(p.metrics.alpha));
    println!("k_max: {}", p.metrics.k_max);
    println!("purity_unfiltered: {}", io::fmt6(p.purity_unfiltered));
    println!("alpha_required: {}", io::fmt6(budget.alpha_required));
    match budget.eta_budget {
        Some(v) => println!("eta_tb: {}", io::fmt6(v)),
        None => println!("eta_tb: infeasible"),
    }
    println!("evaluations: {}", p.evaluations);
    println!("converged: {}", p.converged);
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, catalog: &Catalog) -> Result<()> {
    let crystal = cfg.crystal(catalog)?;
    if cfg.filter == FilterShape::None {
        return Err(Error::Validation(
            "a sweep needs --filter gaussian or rect".into(),
        ));
    }
    let grid = cfg.grid(crystal, cfg.points(crystal))?;
    let source = PreparedSource::new(crystal, cfg.pm_shape, &grid)?;
    let sweep = if cfg.convention == WidthConvention::Field {
        sweep_prepared(&source, cfg.filter, &cfg.bandwidths, &cfg.sweep_options())?
    } else {
        // intensity widths map onto field widths for the gaussian
        let factor = if cfg.filter == FilterShape::Gaussian {
            std::f64::consts::SQRT_2
        } else {
            1.0
        };
        let field: Vec<f64> = cfg.bandwidths.iter().map(|w| w * factor).collect();
        let mut s = sweep_prepared(&source, cfg.filter, &field, &cfg.sweep_options())?;
        for (row, w) in s.rows.iter_mut().zip(&cfg.bandwidths) {
            row.filter_fwhm_nm = *w;
        }
        s
    };
    let (w, path) = cfg.create(&format!("{}_sweep.csv", cfg.stem(crystal)))?;
    io::write_sweep(w, &sweep)?;
    let best = sweep.best();
    println!("best_filter_fwhm_nm: {}", io::fmt6(best.filter_fwhm_nm));
    println!("alpha: {}", io::fmt6(best.point.metrics.alpha));
    println!("k_max: {}", best.point.metrics.k_max);
    println!("csv: {}", path.display());
    Ok(())
}

fn cmd_table(cfg: &RunConfig, catalog: &Catalog) -> Result<()> {
    let mut rows: Vec<TableRow> = Vec::new();
    for entry in table_entries(catalog) {
        let crystal = catalog.get(&entry.crystal)?;
        let points = cfg.points(crystal);
        check_memory(points, cfg.memory_cap)?;
        match table_row(
            &entry,
            crystal,
            &cfg.bandwidths,
            points,
            cfg.target_k,
            &cfg.sweep_options(),
        ) {
            Ok((row, _)) => {
                if row.eta_tb.is_none() {
                    eprintln!("{}: below the {}-photon target", row.label, cfg.target_k);
                }
                rows.push(row);
            }
            Err(e) => return Err(e),
        }
    }
    let (w, path) = cfg.create("table.csv")?;
    io::write_table(w, &rows)?;
    println!(
        "alpha_required: {}",
        io::fmt6(alpha_required(cfg.target_k, cfg.error_bound)?)
    );
    println!("rows: {}", rows.len());
    println!("csv: {}", path.display());
    Ok(())
}

fn cmd_converge(cfg: &RunConfig, catalog: &Catalog) -> Result<()> {
    let crystal = cfg.crystal(catalog)?;
    let resolutions = if cfg.grid_n.is_empty() {
        vec![250, 500, 1000, crystal.grid.points]
    } else {
        cfg.grid_n.clone()
    };
    let top = resolutions
        .iter()
        .copied()
        .max()
        .unwrap_or(crystal.grid.points);
    let reference = cfg.reference.unwrap_or(2 * top);
    check_memory(reference, cfg.memory_cap)?;
    let grid = cfg.grid(crystal, top)?;
    let source = PreparedSource::new(crystal, cfg.pm_shape, &grid)?;
    let filter = cfg.single_filter(source.center_nm())?;
    let (l, s) = working_point(cfg, &source, &filter)?;
    let config: SourceConfig = source.config(l, s)?;
    let points = convergence_study(
        &config,
        &filter,
        &resolutions,
        reference,
        &cfg.scoring(),
        cfg.memory_cap,
    )?;
    let (w, path) = cfg.create(&format!("{}_converge.csv", cfg.stem(crystal)))?;
    io::write_convergence(w, &points)?;
    for p in &points {
        println!(
            "N={} alpha={} deviation={}",
            p.points,
            io::fmt6(p.alpha),
            io::fmt6(p.deviation)
        );
    }
    println!("csv: {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let catalog = Catalog::load()?;
    let (common, f): (Common, fn(&RunConfig, &Catalog) -> Result<()>) = match cli.command {
        Command::Gvm(c) => (c, cmd_gvm),
        Command::Jsa(c) => (c, cmd_jsa),
        Command::Optimize(c) => (c, cmd_optimize),
        Command::Sweep(c) => (c, cmd_sweep),
        Command::Table(c) => (c, cmd_table),
        Command::Converge(c) => (c, cmd_converge),
    };
    let cfg = RunConfig::resolve(common)?;
    f(&cfg, &catalog)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Resource(_) => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
