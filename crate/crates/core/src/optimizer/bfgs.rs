//! Box-constrained quasi-Newton maximisation with finite-difference
//! gradients.
//!
//! Parameters are mapped to the unit box before differencing. Steps are
//! projected back onto the box and variables held at a bound by the gradient
//! are frozen for the step (a simple active-set scheme).

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaximizeOptions {
    /// Finite-difference step in unit-box coordinates.
    pub fd_step: f64,
    /// Stop once an accepted step improves the objective by less than this
    /// relative amount.
    pub ftol: f64,
    /// Stop once an accepted step moves less than this (unit-box ∞-norm).
    pub xtol: f64,
    /// Stop once the projected gradient (unit-box ∞-norm) falls below this.
    pub pgtol: f64,
    pub max_iterations: usize,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self {
            fd_step: 1e-4,
            ftol: 1e7 * f64::EPSILON,
            xtol: 1e-6,
            pgtol: 1e-5,
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaximizeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const FIRST_STEP: f64 = 0.1;
/// Unit-box distance below which a coordinate is reported as the bound.
const BOUND_SNAP: f64 = 1e-12;

struct Scaled<'a, F> {
    f: F,
    lo: &'a [f64],
    hi: &'a [f64],
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Scaled<'_, F> {
    fn to_x(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(self.hi))
            .map(|(&u, (&lo, &hi))| {
                if u <= BOUND_SNAP {
                    lo
                } else if u >= 1.0 - BOUND_SNAP {
                    hi
                } else {
                    lo + u * (hi - lo)
                }
            })
            .collect()
    }

    /// Negated objective, so the rest of the routine minimises.
    fn phi(&mut self, u: &[f64]) -> Result<f64> {
        let x = self.to_x(u);
        self.evaluations += 1;
        let v = (self.f)(&x)?;
        if !v.is_finite() {
            return Err(Error::Validation(format!("objective is {v} at {x:?}")));
        }
        Ok(-v)
    }

    fn gradient(&mut self, u: &[f64], h: f64, phi_u: f64) -> Result<Vec<f64>> {
        let mut g = vec![0.0; u.len()];
        let mut p = u.to_vec();
        for i in 0..u.len() {
            let up = u[i] + h <= 1.0;
            let down = u[i] - h >= 0.0;
            g[i] = if up && down {
                p[i] = u[i] + h;
                let a = self.phi(&p)?;
                p[i] = u[i] - h;
                let b = self.phi(&p)?;
                (a - b) / (2.0 * h)
            } else if up {
                p[i] = u[i] + h;
                (self.phi(&p)? - phi_u) / h
            } else {
                p[i] = u[i] - h;
                (phi_u - self.phi(&p)?) / h
            };
            p[i] = u[i];
        }
        Ok(g)
    }
}

/// ∞-norm of the gradient step projected onto the unit box.
fn projected_gradient_norm(u: &[f64], g: &[f64]) -> f64 {
    u.iter()
        .zip(g)
        .map(|(&u, &g)| ((u - g).clamp(0.0, 1.0) - u).abs())
        .fold(0.0, f64::max)
}

fn identity(n: usize, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = scale;
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn active_set(u: &[f64], g: &[f64]) -> Vec<bool> {
    u.iter()
        .zip(g)
        .map(|(&u, &g)| (u <= 0.0 && g > 0.0) || (u >= 1.0 && g < 0.0))
        .collect()
}

fn direction(h: &[f64], g: &[f64], active: &[bool]) -> Vec<f64> {
    let n = g.len();
    (0..n)
        .map(|i| {
            if active[i] {
                0.0
            } else {
                -(0..n)
                    .filter(|&j| !active[j])
                    .map(|j| h[i * n + j] * g[j])
                    .sum::<f64>()
            }
        })
        .collect()
}

/// Maximises `f` over the box `[lo, hi]` from `start`.
///
/// The returned point is the best evaluated one; coordinates that end on a
/// bound are reported as exactly that bound.
pub fn maximize_bounded<F>(
    f: F,
    lo: &[f64],
    hi: &[f64],
    start: &[f64],
    options: &MaximizeOptions,
) -> Result<MaximizeOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = lo.len();
    if n == 0 || hi.len() != n || start.len() != n {
        return Err(Error::Validation(
            "bounds and start must share a nonzero dimension".into(),
        ));
    }
    for i in 0..n {
        if !(lo[i] < hi[i]) || !(start[i] >= lo[i] && start[i] <= hi[i]) {
            return Err(Error::Validation(format!(
                "start {} must lie in the non-empty interval [{}, {}]",
                start[i], lo[i], hi[i]
            )));
        }
    }
    let mut s = Scaled {
        f,
        lo,
        hi,
        evaluations: 0,
    };
    let mut u: Vec<f64> = (0..n)
        .map(|i| (start[i] - lo[i]) / (hi[i] - lo[i]))
        .collect();
    let h = options.fd_step;
    let mut phi = s.phi(&u)?;
    let mut g = s.gradient(&u, h, phi)?;
    let mut hinv: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let active = active_set(&u, &g);
        let free_norm = g
            .iter()
            .zip(&active)
            .filter(|(_, &a)| !a)
            .map(|(g, _)| g.abs())
            .fold(0.0, f64::max);
        if free_norm == 0.0 || projected_gradient_norm(&u, &g) < options.pgtol {
            converged = true;
            break;
        }
        let hm = hinv
            .clone()
            .unwrap_or_else(|| identity(n, FIRST_STEP / free_norm));
        let mut d = direction(&hm, &g, &active);
        if dot(&d, &g) >= 0.0 {
            hinv = None;
            d = direction(&identity(n, FIRST_STEP / free_norm), &g, &active);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = u
                .iter()
                .zip(&d)
                .map(|(&ui, &di)| (ui + t * di).clamp(0.0, 1.0))
                .collect();
            let step: Vec<f64> = trial.iter().zip(&u).map(|(a, b)| a - b).collect();
            let step_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if step_norm == 0.0 {
                break;
            }
            let phi_t = s.phi(&trial)?;
            if phi_t <= phi + ARMIJO * dot(&g, &step) {
                accepted = Some((trial, step, step_norm, phi_t));
                break;
            }
            if step_norm < options.xtol {
                break;
            }
            t *= 0.5;
        }

        let Some((trial, step, step_norm, phi_t)) = accepted else {
            if hinv.is_some() {
                hinv = None;
                continue;
            }
            converged = true;
            break;
        };

        let improvement = (phi - phi_t) / phi.abs().max(phi_t.abs()).max(1e-300);
        let g_new = s.gradient(&trial, h, phi_t)?;
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&step, &y);
        if sy > 1e-12 * dot(&step, &step).sqrt() * dot(&y, &y).sqrt() {
            let mut hm = hinv.unwrap_or_else(|| identity(n, sy / dot(&y, &y)));
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| hm[i * n + j] * y[j]).sum())
                .collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    hm[i * n + j] += rho
                        * ((1.0 + rho * yhy) * step[i] * step[j]
                            - hy[i] * step[j]
                            - step[i] * hy[j]);
                }
            }
            hinv = Some(hm);
        }
        u = trial;
        phi = phi_t;
        g = g_new;
        if improvement < options.ftol
            || step_norm < options.xtol
            || projected_gradient_norm(&u, &g) < options.pgtol
        {
            converged = true;
            break;
        }
    }

    Ok(MaximizeOutcome {
        x: s.to_x(&u),
        value: -phi,
        evaluations: s.evaluations,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paraboloid(peak: [f64; 2]) -> impl FnMut(&[f64]) -> Result<f64> {
        move |x: &[f64]| {
            let a = (x[0] - peak[0]) / 30.0;
            let b = (x[1] - peak[1]) / 10.0;
            Ok(1.0 - 2.0 * a * a - 0.5 * b * b - 0.6 * a * b)
        }
    }

    #[test]
    fn interior_peak() {
        let out = maximize_bounded(
            paraboloid([12.0, 3.0]),
            &[0.5, 0.1],
            &[30.0, 10.0],
            &[15.25, 5.05],
            &MaximizeOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 12.0).abs() / 29.5 < 1e-4, "{:?}", out.x);
        assert!((out.x[1] - 3.0).abs() / 9.9 < 1e-4, "{:?}", out.x);
    }

    #[test]
    fn peak_outside_box_lands_on_bound_exactly() {
        let out = maximize_bounded(
            |x: &[f64]| Ok(-(x[0] - 40.0).powi(2) - (x[1] - 2.0).powi(2)),
            &[0.5, 0.1],
            &[30.0, 10.0],
            &[15.25, 5.05],
            &MaximizeOptions::default(),
        )
        .unwrap();
        assert_eq!(out.x[0], 30.0);
        assert!((out.x[1] - 2.0).abs() < 1e-3, "{:?}", out.x);
    }

    #[test]
    fn corner_peak() {
        let out = maximize_bounded(
            |x: &[f64]| Ok(x[0] + x[1]),
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[0.5, 0.5],
            &MaximizeOptions::default(),
        )
        .unwrap();
        assert_eq!(out.x, vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_start_outside() {
        let r = maximize_bounded(
            |_: &[f64]| Ok(0.0),
            &[0.0],
            &[1.0],
            &[2.0],
            &MaximizeOptions::default(),
        );
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let r = maximize_bounded(
            |_: &[f64]| Ok(f64::NAN),
            &[0.0],
            &[1.0],
            &[0.5],
            &MaximizeOptions::default(),
        );
        assert!(r.unwrap_err().to_string().contains("NaN"));
    }

    proptest! {
        #[test]
        fn never_leaves_box_and_never_worse_than_start(
            px in -20.0f64..60.0, py in -5.0f64..15.0, sx in 0.0f64..1.0, sy in 0.0f64..1.0,
        ) {
            let (lo, hi) = ([0.5, 0.1], [30.0, 10.0]);
            let start = [lo[0] + sx * (hi[0] - lo[0]), lo[1] + sy * (hi[1] - lo[1])];
            let mut f = paraboloid([px, py]);
            let f0 = f(&start).unwrap();
            let out = maximize_bounded(paraboloid([px, py]), &lo, &hi, &start, &MaximizeOptions::default()).unwrap();
            prop_assert!(out.x[0] >= lo[0] && out.x[0] <= hi[0]);
            prop_assert!(out.x[1] >= lo[1] && out.x[1] <= hi[1]);
            prop_assert!(out.value >= f0);
            let mut g = paraboloid([px, py]);
            prop_assert!((g(&out.x).unwrap() - out.value).abs() < 1e-15);
        }
    }
}
