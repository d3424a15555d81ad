//! Report pipelines behind the command-line tool. Each function takes a
//! validated [`Scenario`] and returns a serializable report; writing files is
//! left to the caller.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{Distribution, Quadrature};
use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::model::{balance_wi_tax, Primitives, SearchMode, WIPolicy, WISolution, WiModel};
use crate::oracle::sim::{paired_difference, simulate_agents, summarize, HazardBin};
use crate::oracle::{SimConfig, SimReport, TabulatedEconomy};
use crate::replicate::{self, UIOnlyPolicy, VerificationReport};
use crate::scenario::Scenario;
use crate::welfare::{self, acceptance_rate, Economy, WelfareReport};

/// Half-width, in standard errors, of the Monte Carlo acceptance bands.
pub const SIM_BAND: f64 = 3.0;

/// Relative step of the central differences in the lemma check.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct Solved {
    pub mode: SearchMode,
    pub policy: WIPolicy,
    pub tax_balanced: bool,
    pub budget_residual: f64,
    pub solution: WISolution,
}

impl Solved {
    pub fn model<'a>(&'a self, sc: &'a Scenario) -> Result<WiModel<'a>> {
        Ok(WiModel::new(&sc.prim, &self.policy, &sc.offer)?.with_root_options(sc.root_options()))
    }
}

pub fn solve(sc: &Scenario) -> Result<Solved> {
    let (policy, solution) = if sc.balance_tax {
        let bal = balance_wi_tax(&sc.policy, &sc.prim, &sc.offer, &sc.prior, sc.n_z, &sc.root_options())?;
        (bal.policy, bal.solution)
    } else {
        let model = WiModel::new(&sc.prim, &sc.policy, &sc.offer)?.with_root_options(sc.root_options());
        let sol = model.solve(&sc.prior, sc.n_z)?;
        (sc.policy.clone(), sol)
    };
    let budget_residual =
        welfare::budget_residual(&Economy::WageInsurance(&policy), &solution, &sc.prim, &sc.offer, &sc.prior)?;
    Ok(Solved {
        mode: sc.prim.mode,
        policy,
        tax_balanced: sc.balance_tax,
        budget_residual,
        solution,
    })
}

pub fn replicate_policy(sc: &Scenario, solved: &Solved) -> Result<UIOnlyPolicy> {
    let model = solved.model(sc)?;
    replicate::replicate(&model, &solved.solution, &sc.prior)
}

/// One pass/fail line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value < tolerance`.
    fn below(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            pass: value < tolerance,
        }
    }

    /// Counts of violations; passes only at zero.
    fn none(name: &'static str, count: usize) -> Self {
        Self {
            name,
            value: count as f64,
            tolerance: 0.0,
            pass: count == 0,
        }
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Copy of `sol` carrying the behavior recovered by re-solving the UI economy.
fn with_behavior(sol: &WISolution, rep: &VerificationReport) -> WISolution {
    let mut out = sol.clone();
    out.w_res = rep.w_res_ui.clone();
    out.effort = rep.effort_ui.clone();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelfarePair {
    pub wi: f64,
    pub ui: f64,
    pub rel_diff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaSummary {
    pub x0: f64,
    pub n_pooled: usize,
    pub n_active: usize,
    pub max_pooling_dev: f64,
    pub sign_violations: usize,
    pub max_derivative_rel_dev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurplusAudit {
    pub max_residual: f64,
    pub argmax_z: f64,
    pub q_monotone_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub mode: SearchMode,
    pub phi: f64,
    pub tax: f64,
    pub x0: Option<f64>,
    pub ui_tax_kind: &'static str,
    pub max_reservation_dev: f64,
    pub argmax_reservation_z: f64,
    pub max_effort_dev: f64,
    pub min_uniqueness_margin: f64,
    pub welfare: WelfarePair,
    pub welfare_concise: WelfarePair,
    pub budget_residual_wi: f64,
    pub budget_residual_ui: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma: Option<LemmaSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surplus_audit: Option<SurplusAudit>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Everything `verify` computes, including the intermediate objects.
#[derive(Debug, Clone)]
pub struct VerifyRun {
    pub solved: Solved,
    pub ui: UIOnlyPolicy,
    pub replication: VerificationReport,
    pub wi_report: WelfareReport,
    pub ui_report: WelfareReport,
    pub lemma: Option<Vec<LemmaRow>>,
    pub verification: Verification,
}

pub fn verify(sc: &Scenario) -> Result<VerifyRun> {
    let solved = solve(sc)?;
    verify_solved(sc, solved)
}

pub fn verify_solved(sc: &Scenario, solved: Solved) -> Result<VerifyRun> {
    let tol = &sc.tol;
    let sol = &solved.solution;
    let ui = replicate_policy(sc, &solved)?;
    let replication = replicate::verify_replication(&ui, sol, &sc.prim, &sc.offer, &sc.root_options())?;

    let wi_report = welfare::evaluate(&Economy::WageInsurance(&solved.policy), sol, &sc.prim, &sc.offer, &sc.prior)?;
    let ui_sol = with_behavior(sol, &replication);
    let ui_report = welfare::evaluate(&Economy::UiOnly(&ui), &ui_sol, &sc.prim, &sc.offer, &sc.prior)?;
    let welfare = WelfarePair {
        wi: wi_report.welfare,
        ui: ui_report.welfare,
        rel_diff: rel_diff(wi_report.welfare, ui_report.welfare),
    };
    let welfare_concise = WelfarePair {
        wi: wi_report.welfare_concise,
        ui: ui_report.welfare_concise,
        rel_diff: rel_diff(wi_report.welfare_concise, ui_report.welfare_concise),
    };

    let mut checks = vec![Check::below("reservation_dev", replication.max_reservation_dev, tol.reservation)];
    if sc.prim.is_endogenous() {
        checks.push(Check::below("effort_dev", replication.max_effort_dev, tol.effort));
    }
    checks.push(Check::below("welfare_equivalence", welfare.rel_diff, tol.equiv));
    checks.push(Check::below("budget_wi", wi_report.budget_residual.abs(), tol.budget));
    checks.push(Check::below("budget_ui", ui_report.budget_residual.abs(), tol.budget));
    checks.push(Check::below(
        "welfare_forms_wi",
        rel_diff(wi_report.welfare, wi_report.welfare_concise),
        tol.welfare_forms,
    ));
    checks.push(Check::below(
        "welfare_forms_ui",
        rel_diff(ui_report.welfare, ui_report.welfare_concise),
        tol.welfare_forms,
    ));

    let (mut lemma_rows, mut lemma, mut audit) = (None, None, None);
    if sc.prim.is_endogenous() {
        let model = solved.model(sc)?;
        let rows = lemma_rows_for(&model, sol)?;
        let summary = summarize_lemma(&rows, sol.x0.unwrap_or(f64::NAN));
        checks.push(Check::below("pooling_dev", summary.max_pooling_dev, tol.pooling));
        checks.push(Check::none("active_signs", summary.sign_violations));
        checks.push(Check::below("derivative_rel_dev", summary.max_derivative_rel_dev, tol.derivative));
        let a = surplus_audit(&ui, sol, &sc.prim, &sc.offer, tol.quad)?;
        checks.push(Check::below("surplus_match", a.max_residual, tol.surplus_match));
        checks.push(Check::none("q_monotone", a.q_monotone_violations));
        lemma_rows = Some(rows);
        lemma = Some(summary);
        audit = Some(a);
    }

    let pass = checks.iter().all(|c| c.pass);
    let verification = Verification {
        mode: sc.prim.mode,
        phi: solved.policy.phi,
        tax: solved.policy.tax,
        x0: sol.x0,
        ui_tax_kind: match ui.tax {
            replicate::UiTax::LumpSum { .. } => "lump_sum",
            replicate::UiTax::Schedule { .. } => "schedule",
        },
        max_reservation_dev: replication.max_reservation_dev,
        argmax_reservation_z: replication.argmax_reservation_z,
        max_effort_dev: replication.max_effort_dev,
        min_uniqueness_margin: replication.min_uniqueness_margin,
        welfare,
        welfare_concise,
        budget_residual_wi: wi_report.budget_residual,
        budget_residual_ui: ui_report.budget_residual,
        lemma,
        surplus_audit: audit,
        checks,
        pass,
    };
    Ok(VerifyRun {
        solved,
        ui,
        replication,
        wi_report,
        ui_report,
        lemma: lemma_rows,
        verification,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Pooling,
    Active,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Pooling => "pooling",
            Region::Active => "active",
        }
    }
}

/// One grid point of the lemma check. Finite differences are `None` when
/// the stencil would straddle the pooling threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaRow {
    pub z: f64,
    pub w_res: f64,
    pub surplus: f64,
    pub dw_analytic: f64,
    pub dw_fd: Option<f64>,
    pub ds_analytic: f64,
    pub ds_fd: Option<f64>,
    pub region: Region,
}

fn lemma_rows_for(model: &WiModel, sol: &WISolution) -> Result<Vec<LemmaRow>> {
    if model.prim.mode != SearchMode::EndogenousSearch {
        return Err(Error::ModeMismatch {
            expected: "endogenous_search",
        });
    }
    let x0 = sol
        .x0
        .ok_or_else(|| Error::invalid("x0", "solution carries no pooling threshold"))?;
    // Without a top-up every type pools at x0.
    let all_pooled = model.policy.phi == 0.0;
    (0..sol.len())
        .into_par_iter()
        .map(|i| {
            let (z, w) = (sol.z_grid[i], sol.w_res[i]);
            let h = FD_STEP * z.abs().max(1.0e-3);
            let at = |zz: f64| -> Result<(f64, f64)> {
                let ww = model.reservation_endogenous(zz, x0)?;
                Ok((ww, model.surplus_at(ww, zz)))
            };
            let row = if z <= x0 || all_pooled {
                let fd = if z + h <= x0 || all_pooled {
                    let (wp, sp) = at(z + h)?;
                    let (wm, sm) = at(z - h)?;
                    Some(((wp - wm) / (2.0 * h), (sp - sm) / (2.0 * h)))
                } else {
                    None
                };
                LemmaRow {
                    z,
                    w_res: w,
                    surplus: sol.surplus[i],
                    dw_analytic: 0.0,
                    dw_fd: fd.map(|d| d.0),
                    ds_analytic: 0.0,
                    ds_fd: fd.map(|d| d.1),
                    region: Region::Pooling,
                }
            } else {
                let d = model.derivatives_at(z, w, sol.effort[i]);
                let fd = if z - h > x0 {
                    let (wp, sp) = at(z + h)?;
                    let (wm, sm) = at(z - h)?;
                    Some(((wp - wm) / (2.0 * h), (sp - sm) / (2.0 * h)))
                } else {
                    None
                };
                LemmaRow {
                    z,
                    w_res: w,
                    surplus: sol.surplus[i],
                    dw_analytic: d.dw_res,
                    dw_fd: fd.map(|d| d.0),
                    ds_analytic: d.dsurplus,
                    ds_fd: fd.map(|d| d.1),
                    region: Region::Active,
                }
            };
            Ok(row)
        })
        .collect()
}

fn summarize_lemma(rows: &[LemmaRow], x0: f64) -> LemmaSummary {
    let mut s = LemmaSummary {
        x0,
        n_pooled: 0,
        n_active: 0,
        max_pooling_dev: 0.0,
        sign_violations: 0,
        max_derivative_rel_dev: 0.0,
    };
    for row in rows {
        match row.region {
            Region::Pooling => {
                s.n_pooled += 1;
                s.max_pooling_dev = s.max_pooling_dev.max((row.w_res - x0).abs());
            }
            Region::Active => {
                s.n_active += 1;
                if !(row.dw_analytic < 0.0 && row.ds_analytic > 0.0) {
                    s.sign_violations += 1;
                }
                if let (Some(dw), Some(ds)) = (row.dw_fd, row.ds_fd) {
                    let dev = rel_diff(row.dw_analytic, dw).max(rel_diff(row.ds_analytic, ds));
                    s.max_derivative_rel_dev = s.max_derivative_rel_dev.max(dev);
                }
            }
        }
    }
    s
}

/// Lemma rows for an endogenous-search scenario.
pub fn lemma_check(sc: &Scenario) -> Result<(Solved, Vec<LemmaRow>, LemmaSummary)> {
    if !sc.prim.is_endogenous() {
        return Err(Error::ModeMismatch {
            expected: "endogenous_search",
        });
    }
    let solved = solve(sc)?;
    let model = solved.model(sc)?;
    let rows = lemma_rows_for(&model, &solved.solution)?;
    let summary = summarize_lemma(&rows, solved.solution.x0.unwrap_or(f64::NAN));
    Ok((solved, rows, summary))
}

/// Re-derives `S(z) = ∫_{w̄}(q(w) - q(w̄)) dF / r` by direct quadrature and
/// compares it with the baseline surplus; also checks that `q` increases
/// strictly between adjacent schedule nodes.
pub fn surplus_audit(
    ui: &UIOnlyPolicy,
    sol: &WISolution,
    prim: &Primitives,
    offer: &Distribution,
    quad_tol: f64,
) -> Result<SurplusAudit> {
    let schedule = ui
        .schedule()
        .ok_or_else(|| Error::invalid("tax", "surplus audit needs a schedule policy"))?;
    let quad = Quadrature::with_tol(quad_tol);
    let mut kinks: Vec<f64> = schedule.nodes().to_vec();
    kinks.push(schedule.x0());
    let residuals: Vec<f64> = (0..sol.len())
        .into_par_iter()
        .map(|i| {
            let w = sol.w_res[i];
            let qw = schedule.eval(w);
            let lhs = offer.integrate_with(&quad, w, offer.hi(), |v| schedule.eval(v) - qw, &kinks)? / prim.r;
            Ok((lhs - sol.surplus[i]).abs())
        })
        .collect::<Result<_>>()?;
    let (k, max_residual) = residuals
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });

    let mut pts: Vec<(f64, f64)> = schedule
        .nodes()
        .iter()
        .zip(schedule.node_values())
        .map(|(&w, &q)| (w, q))
        .collect();
    if pts.last().map_or(true, |p| p.0 < schedule.x0()) {
        pts.push((schedule.x0(), schedule.eval(schedule.x0())));
    }
    pts.extend(schedule.tabulate(schedule.x0(), 64).into_iter().skip(1));
    let q_monotone_violations = pts.windows(2).filter(|p| !(p[1].1 > p[0].1)).count();
    Ok(SurplusAudit {
        max_residual,
        argmax_z: sol.z_grid[k],
        q_monotone_violations,
    })
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub path: String,
    pub value: f64,
    pub tax: f64,
    pub x0: Option<f64>,
    pub max_reservation_dev: f64,
    pub max_effort_dev: f64,
    pub welfare_rel_diff: f64,
    pub budget_residual_wi: f64,
    pub budget_residual_ui: f64,
    pub max_pooling_dev: Option<f64>,
    pub max_derivative_rel_dev: Option<f64>,
    pub surplus_match: Option<f64>,
    pub pass: bool,
    /// Error kind when the point could not be solved.
    pub error: Option<String>,
}

pub fn sweep(sc: &Scenario) -> Result<Vec<SweepRow>> {
    let sw = sc
        .raw
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep command needs a `sweep` section".into()))?;
    sw.values
        .iter()
        .map(|&v| {
            let point = sc.with_override(&sw.path, v)?;
            let row = match verify(&point) {
                Ok(run) => {
                    let ver = &run.verification;
                    SweepRow {
                        path: sw.path.clone(),
                        value: v,
                        tax: ver.tax,
                        x0: ver.x0,
                        max_reservation_dev: ver.max_reservation_dev,
                        max_effort_dev: ver.max_effort_dev,
                        welfare_rel_diff: ver.welfare.rel_diff,
                        budget_residual_wi: ver.budget_residual_wi,
                        budget_residual_ui: ver.budget_residual_ui,
                        max_pooling_dev: ver.lemma.map(|l| l.max_pooling_dev),
                        max_derivative_rel_dev: ver.lemma.map(|l| l.max_derivative_rel_dev),
                        surplus_match: ver.surplus_audit.map(|a| a.max_residual),
                        pass: ver.pass,
                        error: None,
                    }
                }
                Err(e) => SweepRow {
                    path: sw.path.clone(),
                    value: v,
                    tax: f64::NAN,
                    x0: None,
                    max_reservation_dev: f64::NAN,
                    max_effort_dev: f64::NAN,
                    welfare_rel_diff: f64::NAN,
                    budget_residual_wi: f64::NAN,
                    budget_residual_ui: f64::NAN,
                    max_pooling_dev: None,
                    max_derivative_rel_dev: None,
                    surplus_match: None,
                    pass: false,
                    error: Some(format!("{}: {e}", e.kind())),
                },
            };
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HazardComparison {
    pub z_lo: f64,
    pub z_hi: f64,
    pub simulated: f64,
    pub se: f64,
    pub analytic: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EconomySim {
    pub report: SimReport,
    pub analytic_welfare: f64,
    pub analytic_budget: f64,
    pub welfare_pass: bool,
    pub budget_pass: bool,
    pub hazards: Vec<HazardComparison>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimOutput {
    pub config: SimConfig,
    pub wi: EconomySim,
    pub ui: EconomySim,
    pub paired_welfare_diff: f64,
    pub paired_welfare_diff_se: f64,
    pub paired_pass: bool,
    pub pass: bool,
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

fn within_band(analytic: f64, mean: f64, se: f64) -> bool {
    (analytic - mean).abs() <= SIM_BAND * se
}

/// Acceptance hazard a bin should show: accepted spells over exposure, with
/// the horizon cap, averaged over the prior within the bin.
fn analytic_hazard(bin: &HazardBin, alpha: &dyn Fn(f64) -> f64, prior: &Distribution, horizon: f64) -> f64 {
    const SUB: usize = 400;
    let width = (bin.z_hi - bin.z_lo) / SUB as f64;
    let (mut events, mut exposure) = (0.0, 0.0);
    for k in 0..SUB {
        let z = bin.z_lo + width * (k as f64 + 0.5);
        let wgt = prior.pdf(z);
        let a = alpha(z);
        let p_event = -(-a * horizon).exp_m1();
        events += wgt * p_event;
        exposure += wgt * if a > 0.0 { p_event / a } else { horizon };
    }
    if exposure > 0.0 {
        events / exposure
    } else {
        0.0
    }
}

fn economy_sim(
    econ: &TabulatedEconomy,
    sol: &WISolution,
    analytic: &WelfareReport,
    sc: &Scenario,
    cfg: &SimConfig,
) -> Result<(EconomySim, Vec<crate::oracle::sim::AgentOutcome>)> {
    let agents = simulate_agents(econ, &sc.prim, &sc.offer, &sc.prior, cfg)?;
    let report = summarize(&agents, &sc.prior, cfg);
    let w_res = MonotoneCubic::pchip(sol.z_grid.clone(), sol.w_res.clone())?;
    let effort = MonotoneCubic::pchip(sol.z_grid.clone(), sol.effort.clone())?;
    let alpha = |z: f64| acceptance_rate(effort.eval(z).max(0.0), w_res.eval(z), &sc.offer);
    let hazards = report
        .acceptance_hazard_by_z_bin
        .iter()
        .map(|bin| {
            let a = analytic_hazard(bin, &alpha, &sc.prior, cfg.horizon);
            HazardComparison {
                z_lo: bin.z_lo,
                z_hi: bin.z_hi,
                simulated: bin.hazard,
                se: bin.se,
                analytic: a,
                pass: within_band(a, bin.hazard, bin.se),
            }
        })
        .collect();
    let out = EconomySim {
        welfare_pass: within_band(analytic.welfare, report.welfare_mean, report.welfare_se),
        budget_pass: within_band(analytic.budget_residual, report.budget_mean, report.budget_se),
        analytic_welfare: analytic.welfare,
        analytic_budget: analytic.budget_residual,
        report,
        hazards,
    };
    Ok((out, agents))
}

/// Simulates the baseline and the replicating economy on the same random
/// numbers. `seed` overrides the scenario's seed.
pub fn simulate(sc: &Scenario, seed: Option<u64>) -> Result<SimOutput> {
    let mut cfg = sc.sim.unwrap_or_default();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate(sc.prim.r)?;
    let run = verify(sc)?;
    let start = Instant::now();
    let sol = &run.solved.solution;
    let ui_sol = with_behavior(sol, &run.replication);

    let wi_econ = TabulatedEconomy::new(sol, Economy::WageInsurance(&run.solved.policy), &sc.prim)?;
    let ui_econ = TabulatedEconomy::new(&ui_sol, Economy::UiOnly(&run.ui), &sc.prim)?;
    let (wi, wi_agents) = economy_sim(&wi_econ, sol, &run.wi_report, sc, &cfg)?;
    let (ui, ui_agents) = economy_sim(&ui_econ, &ui_sol, &run.ui_report, sc, &cfg)?;
    let (diff, diff_se) = paired_difference(&ui_agents, &wi_agents, cfg.antithetic)?;
    let paired_pass = diff.abs() <= SIM_BAND * diff_se;
    let pass = paired_pass && wi.welfare_pass && wi.budget_pass && ui.welfare_pass && ui.budget_pass;
    Ok(SimOutput {
        config: cfg,
        wi,
        ui,
        paired_welfare_diff: diff,
        paired_welfare_diff_se: diff_se,
        paired_pass,
        pass,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}
