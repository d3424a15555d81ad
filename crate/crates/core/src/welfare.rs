//! Acceptance hazards, present-value weights, ex-ante welfare and the
//! government budget.
//!
//! A type-`z` worker leaves unemployment at the constant hazard
//! `α(z) = λ(z)(1 - F(w̄(z)))`, so every double integral over time and
//! accepted wages separates: flows received while unemployed carry weight
//! `u = 1/(α + r)` and the continuation value on acceptance carries
//! `e = α/(α + r)`.

use serde::Serialize;

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::model::{Primitives, WIPolicy, WISolution};
use crate::replicate::{UIOnlyPolicy, UiTax};

/// Acceptance mass below which a type is treated as never employed.
pub const SURVIVAL_GUARD: f64 = 1e-12;

/// `α = λ (1 - F(w̄))`.
pub fn acceptance_rate(effort: f64, w_res: f64, offer: &Distribution) -> f64 {
    let m0 = offer.tail_mass(w_res);
    if m0 < SURVIVAL_GUARD {
        0.0
    } else {
        effort * m0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PvWeights {
    /// `∫ α e^{-αt} (1 - e^{-rt})/r dt = 1/(α + r)`.
    pub unemployed: f64,
    /// `∫ α e^{-αt} e^{-rt} dt = α/(α + r)`.
    pub employed: f64,
}

pub fn pv_weights(alpha: f64, r: f64) -> PvWeights {
    let d = alpha + r;
    PvWeights {
        unemployed: 1.0 / d,
        employed: alpha / d,
    }
}

/// Quadrature weights for `∫ · dH` on an evenly spaced grid over the support
/// of `H`: composite Simpson (trapezoid for an even number of points) times
/// the density, normalized to sum to one.
pub fn prior_weights(z_grid: &[f64], prior: &Distribution) -> Result<Vec<f64>> {
    let n = z_grid.len();
    if n < 3 {
        return Err(Error::invalid("z_grid", "need at least three points"));
    }
    let simpson = n % 2 == 1;
    let mut w: Vec<f64> = (0..n)
        .map(|i| {
            let rule = if i == 0 || i == n - 1 {
                1.0
            } else if !simpson {
                2.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            rule * prior.pdf(z_grid[i])
        })
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("prior_dist", "no mass on the grid"));
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// An economy to evaluate on a solved behavior table.
#[derive(Debug, Clone, Copy)]
pub enum Economy<'a> {
    WageInsurance(&'a WIPolicy),
    UiOnly(&'a UIOnlyPolicy),
}

impl Economy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Economy::WageInsurance(_) => "wi",
            Economy::UiOnly(_) => "ui_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerZ {
    pub z: f64,
    pub alpha: f64,
    pub w_res: f64,
    pub benefit: f64,
    /// `E[receipts | accept]`; zero when nothing is accepted.
    pub expected_receipts: f64,
    /// `E[consumption | accept]`; zero when nothing is accepted.
    pub expected_consumption: f64,
    pub welfare_contrib: f64,
    pub budget_contrib: f64,
    pub concise_contrib: f64,
    pub prior_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareReport {
    pub economy: &'static str,
    /// Direct form: benefits and search costs while unemployed plus the
    /// consumption annuity after acceptance.
    pub welfare: f64,
    /// Gross-wage form with the budget substituted in.
    pub welfare_concise: f64,
    pub budget_residual: f64,
    pub per_z: Vec<PerZ>,
}

impl WelfareReport {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "z,alpha,w_res,benefit,expected_receipts,welfare_contrib")?;
        for p in &self.per_z {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                p.z, p.alpha, p.w_res, p.benefit, p.expected_receipts, p.welfare_contrib
            )?;
        }
        Ok(())
    }
}

/// Integrals over the acceptance set `[w̄, hi]` that the budget and welfare
/// need, as `(benefit, ∫ c dF, ∫ receipts dF)`.
fn flows(economy: &Economy, z: f64, w_res: f64, offer: &Distribution) -> (f64, f64, f64) {
    let m0 = offer.tail_mass(w_res);
    let m1 = offer.upper_partial_moment(w_res, 1);
    let gross = m1 + w_res * m0;
    match economy {
        Economy::WageInsurance(p) => {
            // ∫_{w̄} (z - w)_+ dF
            let topup = if w_res < z {
                (z - w_res) * m0 - m1 + offer.upper_partial_moment(z, 1)
            } else {
                0.0
            };
            let benefit = p.benefit.eval(z);
            (
                benefit,
                gross - p.tax * m0 + p.phi * topup,
                p.tax * m0 - p.phi * topup,
            )
        }
        Economy::UiOnly(p) => {
            let benefit = p.benefit_at(z);
            match &p.tax {
                UiTax::LumpSum { t_star } => (benefit, gross - t_star * m0, t_star * m0),
                UiTax::Schedule { schedule, shift } => {
                    let c = schedule.tail_integral(w_res) + shift * m0;
                    (benefit, c, gross - c)
                }
            }
        }
    }
}

/// Evaluates welfare (both forms) and the budget residual of `economy`
/// under the behavior recorded in `sol`.
pub fn evaluate(
    economy: &Economy,
    sol: &WISolution,
    prim: &Primitives,
    offer: &Distribution,
    prior: &Distribution,
) -> Result<WelfareReport> {
    let weights = prior_weights(&sol.z_grid, prior)?;
    let r = prim.r;
    let mut per_z = Vec::with_capacity(sol.len());
    let (mut welfare, mut concise, mut budget) = (0.0, 0.0, 0.0);
    for i in 0..sol.len() {
        let (z, w_res, effort) = (sol.z_grid[i], sol.w_res[i], sol.effort[i]);
        let m0 = offer.tail_mass(w_res);
        let alpha = acceptance_rate(effort, w_res, offer);
        let pv = pv_weights(alpha, r);
        let cost = prim.search_cost(effort);
        let (benefit, cons, receipts) = flows(economy, z, w_res, offer);
        // e E[X | accept]/r = λ ∫X dF / (r (α + r)).
        let on_accept = if alpha > 0.0 { effort / (r * (alpha + r)) } else { 0.0 };
        let gross = offer.upper_partial_moment(w_res, 1) + w_res * m0;
        let welfare_contrib = pv.unemployed * (benefit - cost) + on_accept * cons;
        let budget_contrib = -pv.unemployed * benefit + on_accept * receipts;
        let concise_contrib = on_accept * gross - pv.unemployed * cost;
        let (exp_c, exp_rec) = if alpha > 0.0 { (cons / m0, receipts / m0) } else { (0.0, 0.0) };
        welfare += weights[i] * welfare_contrib;
        budget += weights[i] * budget_contrib;
        concise += weights[i] * concise_contrib;
        per_z.push(PerZ {
            z,
            alpha,
            w_res,
            benefit,
            expected_receipts: exp_rec,
            expected_consumption: exp_c,
            welfare_contrib,
            budget_contrib,
            concise_contrib,
            prior_weight: weights[i],
        });
    }
    if !welfare.is_finite() {
        return Err(Error::invalid("welfare", "non-finite welfare"));
    }
    Ok(WelfareReport {
        economy: economy.name(),
        welfare,
        welfare_concise: concise,
        budget_residual: budget,
        per_z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WelfareForm {
    Direct,
    Concise,
}

pub fn exante_welfare(
    economy: &Economy,
    sol: &WISolution,
    prim: &Primitives,
    offer: &Distribution,
    prior: &Distribution,
    form: WelfareForm,
) -> Result<f64> {
    let rep = evaluate(economy, sol, prim, offer, prior)?;
    Ok(match form {
        WelfareForm::Direct => rep.welfare,
        WelfareForm::Concise => rep.welfare_concise,
    })
}

/// Present value of receipts minus benefits; zero means balanced.
pub fn budget_residual(
    economy: &Economy,
    sol: &WISolution,
    prim: &Primitives,
    offer: &Distribution,
    prior: &Distribution,
) -> Result<f64> {
    Ok(evaluate(economy, sol, prim, offer, prior)?.budget_residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BenefitSchedule, SearchMode, WiModel};

    /// Simpson in calendar time over [0, 60/(α+r)], plus the never-hired tail.
    fn numeric_weights(alpha: f64, r: f64) -> (f64, f64) {
        let horizon = 60.0 / (alpha + r);
        let n = 400_000;
        let h = horizon / n as f64;
        let (mut u, mut e) = (0.0, 0.0);
        for i in 0..=n {
            let t = i as f64 * h;
            let k = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let dens = alpha * (-alpha * t).exp();
            u += k * dens * (1.0 - (-r * t).exp()) / r;
            e += k * dens * (-r * t).exp();
        }
        // Never-employed mass keeps receiving the flow.
        let tail = (-alpha * horizon).exp() * (1.0 - (-r * horizon).exp()) / r;
        (u * h / 3.0 + tail, e * h / 3.0)
    }

    #[test]
    fn pv_weights_examples() {
        assert_eq!(pv_weights(0.0, 0.05), PvWeights { unemployed: 20.0, employed: 0.0 });
        let w = pv_weights(0.05, 0.05);
        assert!((w.unemployed - 10.0).abs() < 1e-12 && (w.employed - 0.5).abs() < 1e-15);
        for alpha in [0.1, 1.0, 10.0] {
            let w = pv_weights(alpha, 0.05);
            let (u, e) = numeric_weights(alpha, 0.05);
            assert!((w.unemployed - u).abs() < 1e-10, "{alpha}: {} vs {u}", w.unemployed);
            assert!((w.employed - e).abs() < 1e-10, "{alpha}: {} vs {e}", w.employed);
        }
    }

    #[test]
    fn acceptance_rate_examples() {
        let f = Distribution::uniform(0.0, 1.0).unwrap();
        assert_eq!(acceptance_rate(1.0, 1.0, &f), 0.0);
        assert!((acceptance_rate(1.0, 0.25, &f) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn prior_weights_integrate_polynomials() {
        let h = Distribution::uniform(0.5, 3.0).unwrap();
        let z: Vec<f64> = (0..201).map(|i| 0.5 + 2.5 * i as f64 / 200.0).collect();
        let w = prior_weights(&z, &h).unwrap();
        let m: f64 = w.iter().zip(&z).map(|(w, z)| w * z * z * z).sum();
        assert!((m - (3f64.powi(4) - 0.5f64.powi(4)) / (4.0 * 2.5)).abs() < 1e-12);
    }

    fn exo_setup(b: f64, tax: f64, phi: f64) -> (Primitives, WIPolicy, Distribution, Distribution) {
        (
            Primitives::exogenous(0.05, 0.8).unwrap(),
            WIPolicy::new(BenefitSchedule::constant(b), tax, phi),
            Distribution::truncated_lognormal(0.0, 0.5, 0.2, 5.0).unwrap(),
            Distribution::uniform(0.5, 3.0).unwrap(),
        )
    }

    #[test]
    fn never_employed_gets_benefit_annuity() {
        let (prim, pol, f, h) = exo_setup(0.4, 0.0, 0.0);
        let z: Vec<f64> = (0..51).map(|i| 0.5 + 2.5 * i as f64 / 50.0).collect();
        let sol = WISolution {
            mode: SearchMode::ExogenousArrival,
            w_res: vec![5.0; 51],
            surplus: vec![0.0; 51],
            effort: vec![0.8; 51],
            value: vec![0.0; 51],
            z_grid: z,
            x0: None,
        };
        let rep = evaluate(&Economy::WageInsurance(&pol), &sol, &prim, &f, &h).unwrap();
        assert!((rep.welfare - 0.4 / 0.05).abs() < 1e-12);
        assert!(rep.per_z.iter().all(|p| p.alpha == 0.0));
    }

    #[test]
    fn zero_policy_has_zero_residual() {
        let (prim, pol, f, h) = exo_setup(0.0, 0.0, 0.0);
        let sol = WiModel::new(&prim, &pol, &f).unwrap().solve(&h, 51).unwrap();
        let r = budget_residual(&Economy::WageInsurance(&pol), &sol, &prim, &f, &h).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn direct_minus_concise_is_minus_budget() {
        let (prim, pol, f, h) = exo_setup(0.4, 0.25, 0.5);
        let sol = WiModel::new(&prim, &pol, &f).unwrap().solve(&h, 101).unwrap();
        let rep = evaluate(&Economy::WageInsurance(&pol), &sol, &prim, &f, &h).unwrap();
        assert!((rep.welfare - rep.welfare_concise + rep.budget_residual).abs() < 1e-11);
    }

    #[test]
    fn wi_receipts_net_out_topups() {
        let (prim, pol, f, h) = exo_setup(0.4, 0.3, 0.6);
        let sol = WiModel::new(&prim, &pol, &f).unwrap().solve(&h, 51).unwrap();
        let plain = WIPolicy { phi: 0.0, ..pol.clone() };
        let a = evaluate(&Economy::WageInsurance(&pol), &sol, &prim, &f, &h).unwrap();
        let b = evaluate(&Economy::WageInsurance(&plain), &sol, &prim, &f, &h).unwrap();
        // Independent receipts: T(1 - F(w̄)) on the same behavior.
        let w = prior_weights(&sol.z_grid, &h).unwrap();
        let mut want = 0.0;
        for i in 0..sol.len() {
            let alpha = acceptance_rate(0.8, sol.w_res[i], &f);
            let pv = pv_weights(alpha, 0.05);
            want += w[i] * (-pv.unemployed * 0.4 + pv.employed * 0.3 / 0.05);
        }
        assert!((b.budget_residual - want).abs() < 1e-12);
        assert!(a.budget_residual < b.budget_residual);
        // Top-ups by quadrature.
        for p in a.per_z.iter().step_by(10) {
            let top = f
                .upper_integral(p.w_res, |x| 0.6 * (p.z - x).max(0.0), &[p.z])
                .unwrap()
                / f.tail_mass(p.w_res);
            assert!((p.expected_receipts - (0.3 - top)).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let (prim, pol, f, h) = exo_setup(0.4, 0.3, 0.6);
        let sol = WiModel::new(&prim, &pol, &f).unwrap().solve(&h, 51).unwrap();
        let rep = evaluate(&Economy::WageInsurance(&pol), &sol, &prim, &f, &h).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("z,alpha,w_res,benefit,expected_receipts,welfare_contrib\n"));
        assert_eq!(text.lines().count(), 52);
    }
}
