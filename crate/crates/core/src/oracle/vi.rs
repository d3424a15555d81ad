//! Discrete-time value iteration for the exogenous-arrival reservation wage.
//!
//! Time runs in periods of length `dt`. Within a period the first offer (if
//! any) arrives at an exponential time `τ`; an accepted offer pays its wage
//! annuity from `τ` on, a rejected one leaves the worker on benefits until the
//! end of the period. Offers are drawn from a discretized `F` on an even wage
//! grid with node-centered cell masses. The scheme is first order in `dt`.

use serde::Serialize;

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::model::{Primitives, SearchMode, WIPolicy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViOptions {
    pub n_grid: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ViOptions {
    fn default() -> Self {
        Self {
            n_grid: 2001,
            tol: 1e-12,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViResult {
    /// Indifference wage: the wage whose annuity equals the converged value.
    pub reservation: f64,
    /// Lowest accepted grid wage.
    pub reservation_grid: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Employed flow consumption, kept separate from the analytic model code.
fn flow(w: f64, z: f64, phi: f64, tax: f64) -> f64 {
    let topup = if z > w { phi * (z - w) } else { 0.0 };
    w + topup - tax
}

/// Inverse of `flow` in `w`.
fn flow_inverse(c: f64, z: f64, phi: f64, tax: f64) -> f64 {
    if c <= z - tax {
        (c - phi * z + tax) / (1.0 - phi)
    } else {
        c + tax
    }
}

pub fn vi_reservation(
    z: f64,
    policy: &WIPolicy,
    prim: &Primitives,
    offer: &Distribution,
    dt: f64,
    opts: &ViOptions,
) -> Result<ViResult> {
    if prim.mode != SearchMode::ExogenousArrival {
        return Err(Error::ModeMismatch {
            expected: "exogenous_arrival",
        });
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if opts.n_grid < 3 {
        return Err(Error::invalid("n_grid", "need at least three wage nodes"));
    }
    let (r, lam) = (prim.r, prim.lambda_bar);
    let (phi, tax) = (policy.phi, policy.tax);
    let b = policy.benefit.eval(z);

    let n = opts.n_grid;
    let (lo, hi) = (offer.lo(), offer.hi());
    let h = (hi - lo) / (n - 1) as f64;
    let wages: Vec<f64> = (0..n).map(|j| lo + h * j as f64).collect();
    let edge = |j: usize| -> f64 {
        if j == 0 {
            0.0
        } else if j == n {
            1.0
        } else {
            offer.cdf(lo + h * (j as f64 - 0.5))
        }
    };
    let mass: Vec<f64> = (0..n).map(|j| edge(j + 1) - edge(j)).collect();
    let annuity: Vec<f64> = wages.iter().map(|&w| flow(w, z, phi, tax) / r).collect();

    // Acceptance sets are suffixes of the grid; suffix sums make each
    // iteration a binary search.
    let mut tail_mass = vec![0.0; n + 1];
    let mut tail_value = vec![0.0; n + 1];
    for j in (0..n).rev() {
        tail_mass[j] = tail_mass[j + 1] + mass[j];
        tail_value[j] = tail_value[j + 1] + mass[j] * annuity[j];
    }

    let p = 1.0 - (-lam * dt).exp();
    let beta = (-r * dt).exp();
    let ed = lam / (lam + r) * (1.0 - (-(lam + r) * dt).exp());

    let mut v = b / r;
    for it in 1..=opts.max_iter {
        let k = annuity.partition_point(|&g| g < v);
        let (acc_mass, acc_value) = (tail_mass[k], tail_value[k]);
        let next = (1.0 - p) * (b * (1.0 - beta) / r + beta * v)
            + b * (p - ed) / r
            + ed * acc_value
            + (1.0 - acc_mass) * (b * (ed - p * beta) / r + p * beta * v);
        let diff = (next - v).abs();
        v = next;
        if diff < opts.tol {
            let k = annuity.partition_point(|&g| g < v);
            let reservation_grid = if k < n { wages[k] } else { hi };
            return Ok(ViResult {
                reservation: flow_inverse(r * v, z, phi, tax),
                reservation_grid,
                value: v,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "value iteration",
        iterations: opts.max_iter,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BenefitSchedule;

    #[test]
    fn flow_inverse_round_trip() {
        for w in [0.1, 0.9, 2.0, 3.5] {
            let c = flow(w, 2.0, 0.4, 0.3);
            assert!((flow_inverse(c, 2.0, 0.4, 0.3) - w).abs() < 1e-14);
        }
    }

    #[test]
    fn vanishing_arrivals_give_benefit_plus_tax() {
        let f = Distribution::uniform(0.0, 1.0).unwrap();
        let prim = Primitives::exogenous(1.0, 1e-12).unwrap();
        let pol = WIPolicy::new(BenefitSchedule::constant(0.4), 0.1, 0.0);
        let res = vi_reservation(0.7, &pol, &prim, &f, 0.05, &ViOptions::default()).unwrap();
        assert!((res.reservation - 0.5).abs() < 1e-9);
        assert!((res.reservation_grid - 0.5).abs() <= 1.0 / 2000.0 + 1e-12);
    }

    #[test]
    fn closed_form_case_converges() {
        let f = Distribution::uniform(0.0, 1.0).unwrap();
        let prim = Primitives::exogenous(1.0, 1.0).unwrap();
        let pol = WIPolicy::new(BenefitSchedule::constant(0.0), 0.0, 0.0);
        let exact = 2.0 - 3f64.sqrt();
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dt| {
                let r = vi_reservation(0.5, &pol, &prim, &f, dt, &ViOptions::default()).unwrap();
                (r.reservation - exact).abs()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        let r = vi_reservation(0.5, &pol, &prim, &f, 0.025, &ViOptions::default()).unwrap();
        assert!((r.reservation_grid - exact).abs() <= 1.0 / 2000.0);
    }

    #[test]
    fn endogenous_mode_is_rejected() {
        let f = Distribution::uniform(0.0, 1.0).unwrap();
        let prim = Primitives::endogenous(1.0, 1.0, 1.0).unwrap();
        let pol = WIPolicy::new(BenefitSchedule::constant(0.0), 0.0, 0.0);
        assert!(vi_reservation(0.5, &pol, &prim, &f, 0.1, &ViOptions::default()).is_err());
    }
}
