//! End-to-end acceptance run. Prints one PASS/FAIL line per check and exits
//! non-zero if any check fails.
//!
//! `cargo test --test acceptance -- 5 7` runs only the listed criteria.

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use spdc_core::dispersion::{find_gvm_center, Catalog};
use spdc_core::jsa::{
    apply_herald_filter, make_grid, FilterShape, FilterSpec, JointAmplitude, PmShape,
};
use spdc_core::metrics::{
    alpha_required, heralding_transmission, k_star, schmidt_purity, transmission_budget,
};
use spdc_core::optimizer::{
    convergence_study, log_bandwidths, maximize_bounded, maximize_prepared, MaximizeOptions,
    OptimalPoint, PreparedSource, Scoring, SweepOptions, DEFAULT_MEMORY_CAP_BYTES,
};
use spdc_core::report::{table_entries, table_row};

const GVM_TOL_NM: f64 = 10.0;
const TABLE_GRID_N: usize = 1000;
const ALPHA_TOL: f64 = 0.01;
const FILTER_REL_TOL: f64 = 0.20;
const ALPHA50_TOL: f64 = 5e-4;
const ETA_TB_TOL: f64 = 0.01;
const CONVERGENCE_TOL: f64 = 1e-3;
const SCHMIDT_TOL: f64 = 1e-9;
const RANK_ONE_TOL: f64 = 1e-12;
const SCALING_TOL: f64 = 2e-3;
const SWEEP_POINTS: usize = 41;

struct Expected {
    label: &'static str,
    alpha: f64,
    eta_tb: f64,
    /// `None` where only a lower bound is given.
    filter_nm: Option<f64>,
    filter_min_nm: f64,
}

const TABLE: [Expected; 7] = [
    Expected {
        label: "KDP",
        alpha: 0.9804,
        eta_tb: 0.8923,
        filter_nm: Some(6.0),
        filter_min_nm: 0.0,
    },
    Expected {
        label: "KDP R",
        alpha: 0.976,
        eta_tb: 0.8964,
        filter_nm: Some(10.0),
        filter_min_nm: 0.0,
    },
    Expected {
        label: "ppKTP",
        alpha: 0.9051,
        eta_tb: 0.9667,
        filter_nm: Some(80.0),
        filter_min_nm: 0.0,
    },
    Expected {
        label: "ppKTP R",
        alpha: 0.8821,
        eta_tb: 0.9918,
        filter_nm: Some(95.0),
        filter_min_nm: 0.0,
    },
    Expected {
        label: "apKTP",
        alpha: 0.9999,
        eta_tb: 0.8749,
        filter_nm: None,
        filter_min_nm: 10.0,
    },
    Expected {
        label: "BBO",
        alpha: 0.9106,
        eta_tb: 0.9608,
        filter_nm: Some(110.0),
        filter_min_nm: 0.0,
    },
    Expected {
        label: "BBO R",
        alpha: 0.8874,
        eta_tb: 0.9859,
        filter_nm: Some(130.0),
        filter_min_nm: 0.0,
    },
];

#[derive(Default)]
struct Report {
    passed: usize,
    failed: usize,
}

impl Report {
    fn check(&mut self, id: &str, pass: bool, detail: impl AsRef<str>) {
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!(
            "{} [{id}] {}",
            if pass { "PASS" } else { "FAIL" },
            detail.as_ref()
        );
    }
}

/// Table rows keyed by label, kept for the later criteria.
type Optima = Vec<(String, OptimalPoint, f64)>;

fn criterion_1(r: &mut Report, catalog: &Catalog) {
    for (name, want) in [("kdp", 830.0), ("ktp", 1582.0), ("bbo", 1514.0)] {
        match find_gvm_center(catalog.get(name).unwrap()) {
            Ok(c) => r.check(
                "1",
                (c - want).abs() <= GVM_TOL_NM,
                format!("{name} lambda_c = {c:.2} nm, expected {want} +/- {GVM_TOL_NM}"),
            ),
            Err(e) => r.check("1", false, format!("{name}: {e}")),
        }
    }
}

fn criteria_2_3(r: &mut Report, catalog: &Catalog, optima: &mut Optima) {
    let bandwidths = log_bandwidths(1.0, 200.0, SWEEP_POINTS);
    let a50 = alpha_required(50, 0.1).unwrap();
    r.check(
        "3",
        (a50 - 0.8749).abs() <= ALPHA50_TOL,
        format!("alpha_50 = {a50:.5}, expected 0.8749 +/- {ALPHA50_TOL}"),
    );
    for entry in table_entries(catalog) {
        let Some(exp) = TABLE.iter().find(|e| e.label == entry.label) else {
            continue;
        };
        let crystal = catalog.get(&entry.crystal).unwrap();
        let t = Instant::now();
        let (row, sweep) = match table_row(
            &entry,
            crystal,
            &bandwidths,
            TABLE_GRID_N,
            50,
            &SweepOptions::default(),
        ) {
            Ok(v) => v,
            Err(e) => {
                r.check("2", false, format!("{}: {e}", exp.label));
                continue;
            }
        };
        let secs = t.elapsed().as_secs_f64();
        r.check(
            "2",
            (row.alpha_opt - exp.alpha).abs() <= ALPHA_TOL,
            format!(
                "{} alpha_opt = {:.4}, expected {} +/- {ALPHA_TOL} (L = {:.3} mm, pump = {:.3} nm, filter = {:.1} nm, {secs:.0} s)",
                exp.label, row.alpha_opt, exp.alpha, row.length_mm, row.pump_fwhm_nm, row.filter_fwhm_nm
            ),
        );
        match exp.filter_nm {
            Some(f) => r.check(
                "2",
                (row.filter_fwhm_nm - f).abs() <= FILTER_REL_TOL * f,
                format!(
                    "{} optimal filter = {:.1} nm, expected {f} +/- 20%",
                    exp.label, row.filter_fwhm_nm
                ),
            ),
            None => r.check(
                "2",
                row.filter_fwhm_nm > exp.filter_min_nm,
                format!(
                    "{} optimal filter = {:.1} nm, expected > {}",
                    exp.label, row.filter_fwhm_nm, exp.filter_min_nm
                ),
            ),
        }
        let upper = crystal.bounds.length_mm[1];
        if exp.label == "KDP" || exp.label == "apKTP" {
            r.check(
                "2",
                row.length_mm == upper,
                format!(
                    "{} L = {} mm, expected the {upper} mm bound",
                    exp.label, row.length_mm
                ),
            );
        }
        match transmission_budget(row.alpha_opt, a50) {
            Ok(eta) => r.check(
                "3",
                (eta - exp.eta_tb).abs() <= ETA_TB_TOL,
                format!(
                    "{} eta_TB = {eta:.4}, expected {} +/- {ETA_TB_TOL}",
                    exp.label, exp.eta_tb
                ),
            ),
            Err(e) => r.check("3", false, format!("{} eta_TB: {e}", exp.label)),
        }
        optima.push((
            exp.label.to_string(),
            sweep.best().point,
            row.filter_fwhm_nm,
        ));
    }
}

fn criterion_4(r: &mut Report, catalog: &Catalog, optima: &Optima) {
    for (label, name, pm) in [
        ("KDP", "kdp", PmShape::Sinc),
        ("ppKTP", "ktp", PmShape::Sinc),
        ("BBO", "bbo", PmShape::Sinc),
    ] {
        let crystal = catalog.get(name).unwrap();
        let Some((_, point, filter_nm)) = optima.iter().find(|o| o.0 == label) else {
            r.check(
                "4",
                false,
                format!("{label}: no optimum from criterion 2 (run it first)"),
            );
            continue;
        };
        let [lo, hi] = crystal.grid.lambda_nm;
        let source = PreparedSource::new(crystal, pm, &make_grid(lo, hi, 16).unwrap()).unwrap();
        let config = source.config(point.length_mm, point.pump_fwhm_nm).unwrap();
        let filter = FilterSpec::gaussian(*filter_nm, source.center_nm()).unwrap();
        let n_prod = crystal.grid.points;
        let resolutions = [250, 500, 1000, n_prod];
        let t = Instant::now();
        match convergence_study(
            &config,
            &filter,
            &resolutions,
            2 * n_prod,
            &Scoring::default(),
            DEFAULT_MEMORY_CAP_BYTES,
        ) {
            Ok(points) => {
                let devs: Vec<f64> = points.iter().map(|p| p.deviation).collect();
                let monotone = devs.windows(2).all(|w| w[1] <= w[0]);
                let last = *devs.last().unwrap();
                r.check(
                    "4",
                    monotone && last < CONVERGENCE_TOL,
                    format!(
                        "{label} |alpha(N) - alpha({})| over N = {resolutions:?}: {} ({:.0} s)",
                        2 * n_prod,
                        devs.iter()
                            .map(|d| format!("{d:.2e}"))
                            .collect::<Vec<_>>()
                            .join(", "),
                        t.elapsed().as_secs_f64()
                    ),
                );
            }
            Err(e) => r.check("4", false, format!("{label}: {e}")),
        }
    }
}

fn random_jsa(rng: &mut StdRng, rows: usize, cols: usize) -> JointAmplitude {
    let s = make_grid(1500.0, 1600.0, rows).unwrap();
    let i = make_grid(1500.0, 1600.0, cols).unwrap();
    let values = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    JointAmplitude::from_values(s, i, values).unwrap()
}

fn density_oracle(m: &JointAmplitude) -> f64 {
    let (r, c) = (m.rows(), m.cols());
    let mut rho = vec![0.0; r * r];
    for a in 0..r {
        for b in 0..r {
            rho[a * r + b] = (0..c).map(|j| m.get(a, j) * m.get(b, j)).sum();
        }
    }
    let tr: f64 = (0..r).map(|a| rho[a * r + a]).sum();
    rho.iter().map(|x| x * x).sum::<f64>() / (tr * tr)
}

fn criterion_5(r: &mut Report) {
    let mut rng = StdRng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (a, b) = (rng.gen_range(2..=64), rng.gen_range(2..=64));
        let m = random_jsa(&mut rng, a, b);
        let p = schmidt_purity(&m).unwrap().purity;
        worst = worst.max((p - density_oracle(&m)).abs());
    }
    r.check(
        "5",
        worst <= SCHMIDT_TOL,
        format!("max |P_svd - P_rho| over 100 random matrices = {worst:.2e}"),
    );
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (a, b) = (rng.gen_range(2..=64), rng.gen_range(2..=64));
        let g: Vec<f64> = (0..a).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let values = g
            .iter()
            .flat_map(|x| h.iter().map(move |y| x * y))
            .collect();
        let m = JointAmplitude::from_values(
            make_grid(1500.0, 1600.0, a).unwrap(),
            make_grid(1500.0, 1600.0, b).unwrap(),
            values,
        )
        .unwrap();
        worst = worst.max((schmidt_purity(&m).unwrap().purity - 1.0).abs());
    }
    r.check(
        "5",
        worst <= RANK_ONE_TOL,
        format!("max |P - 1| over 100 rank-1 matrices = {worst:.2e}"),
    );
}

fn criterion_6(r: &mut Report) {
    let mut rng = StdRng::seed_from_u64(6);
    let mut violations = 0;
    for _ in 0..500 {
        let (a, b) = (rng.gen_range(2..=40), rng.gen_range(2..=40));
        let m = random_jsa(&mut rng, a, b);
        let center = rng.gen_range(1500.0..1600.0);
        let mut widths: Vec<f64> = (0..6).map(|_| rng.gen_range(0.5..250.0)).collect();
        widths.sort_by(f64::total_cmp);
        let etas: Vec<f64> = widths
            .iter()
            .map(|&w| {
                let f = FilterSpec::rectangular(w, center).unwrap();
                heralding_transmission(&m, &apply_herald_filter(&m, &f).unwrap()).unwrap()
            })
            .collect();
        if etas.windows(2).any(|w| w[1] < w[0]) {
            violations += 1;
        }
    }
    r.check(
        "6",
        violations == 0,
        format!("{violations} of 500 random amplitudes lose transmission as the rectangle widens"),
    );
}

fn criterion_7(r: &mut Report) {
    let alphas: Vec<f64> = (1..200).map(|i| i as f64 / 200.0).collect();
    let errors = [0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.9];
    let mut bad = Vec::new();
    for &e in &errors {
        let mut prev = 0;
        for &a in &alphas {
            let k = k_star(a, e).unwrap();
            if k < prev {
                bad.push(format!("k not monotone in alpha at ({a}, {e})"));
            }
            prev = k;
            if k >= 1 && alpha_required(k, e).unwrap() > a + 1e-9 {
                bad.push(format!("alpha_required(k_star) > alpha at ({a}, {e})"));
            }
            if alpha_required(k + 1, e).unwrap() < a - 1e-9 {
                bad.push(format!("k_star not maximal at ({a}, {e})"));
            }
        }
    }
    for &a in &alphas {
        let ks: Vec<u32> = errors.iter().map(|&e| k_star(a, e).unwrap()).collect();
        if ks.windows(2).any(|w| w[1] > w[0]) {
            bad.push(format!("k not monotone in E at alpha = {a}"));
        }
    }
    r.check(
        "7",
        bad.is_empty(),
        format!(
            "k_star/alpha_required over {} (alpha, E) pairs: {}",
            alphas.len() * errors.len(),
            if bad.is_empty() {
                "consistent".to_string()
            } else {
                bad.join("; ")
            }
        ),
    );
}

fn criterion_8(r: &mut Report, catalog: &Catalog) {
    let ktp = catalog.get("ktp").unwrap();
    let [lo, hi] = ktp.grid.lambda_nm;
    let source = PreparedSource::new(
        ktp,
        PmShape::GaussianApodized,
        &make_grid(lo, hi, TABLE_GRID_N).unwrap(),
    )
    .unwrap();
    let none = FilterSpec::none();
    let model = Scoring::default().transmission;
    let base_l = 8.0;
    let best = maximize_bounded(
        |x: &[f64]| source.alpha(base_l, x[0], &none, model),
        &[0.1],
        &[30.0],
        &[5.0],
        &MaximizeOptions::default(),
    )
    .unwrap();
    // The optimum sits at alpha ~ 1, so also probe a detuned point.
    for base_s in [best.x[0], 3.0 * best.x[0]] {
        let base = source.alpha(base_l, base_s, &none, model).unwrap();
        for c in [0.5, 2.0] {
            let a = source.alpha(c * base_l, base_s / c, &none, model).unwrap();
            r.check(
            "8",
            (a - base).abs() <= SCALING_TOL,
            format!(
                "apKTP alpha({:.1} mm, {:.3} nm) = {a:.5} vs alpha({base_l} mm, {base_s:.3} nm) = {base:.5}",
                c * base_l,
                    base_s / c
                ),
            );
        }
    }
}

fn criterion_9(r: &mut Report, catalog: &Catalog) {
    let ktp = catalog.get("ktp").unwrap();
    let [lo, hi] = ktp.grid.lambda_nm;
    let source = PreparedSource::new(
        ktp,
        PmShape::Sinc,
        &make_grid(lo, hi, TABLE_GRID_N).unwrap(),
    )
    .unwrap();
    let mid = spdc_core::optimizer::box_midpoint(ktp);
    let at = |w: f64| {
        let f = FilterSpec::new(FilterShape::Gaussian, w, source.center_nm()).unwrap();
        maximize_prepared(
            &source,
            &f,
            mid,
            &Scoring::default(),
            &MaximizeOptions::default(),
        )
        .unwrap()
    };
    let (narrow, wide) = (at(6.0), at(20.0));
    r.check(
        "9",
        wide.purity_unfiltered > narrow.purity_unfiltered,
        format!(
            "ppKTP unfiltered purity at the 20 nm optimum {:.4} vs 6 nm optimum {:.4}",
            wide.purity_unfiltered, narrow.purity_unfiltered
        ),
    );
    r.check(
        "9",
        wide.metrics.purity < narrow.metrics.purity,
        format!(
            "ppKTP filtered purity at the 20 nm optimum {:.4} vs 6 nm optimum {:.4}",
            wide.metrics.purity, narrow.metrics.purity
        ),
    );
}

fn main() {
    let selected: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let run = |n: &str| selected.is_empty() || selected.iter().any(|s| s == n);
    let catalog = Catalog::builtin().expect("builtin catalog");
    let mut r = Report::default();
    let mut optima = Optima::new();
    let start = Instant::now();

    if run("1") {
        criterion_1(&mut r, &catalog);
    }
    if run("2") || run("3") || run("4") {
        criteria_2_3(&mut r, &catalog, &mut optima);
    }
    if run("4") {
        criterion_4(&mut r, &catalog, &optima);
    }
    if run("5") {
        criterion_5(&mut r);
    }
    if run("6") {
        criterion_6(&mut r);
    }
    if run("7") {
        criterion_7(&mut r);
    }
    if run("8") {
        criterion_8(&mut r, &catalog);
    }
    if run("9") {
        criterion_9(&mut r, &catalog);
    }

    println!(
        "acceptance: {} passed, {} failed ({:.0} s)",
        r.passed,
        r.failed,
        start.elapsed().as_secs_f64()
    );
    if r.failed > 0 {
        std::process::exit(1);
    }
}
