//! UI-only policies that reproduce the behavior and welfare of a solved
//! wage-insurance economy.
//!
//! With exogenous arrivals the replicating policy keeps a lump-sum tax and
//! pays `b*(z) = K(z) - T*`, where `K(z) = w̄(z) - (λ̄/r) M₁(w̄(z))` makes
//! `w̄(z)` the indifference point of a plain UI economy.
//!
//! With endogenous search the tax becomes a wage schedule: employed workers
//! consume `q(w) + C`. On the active region `q` is pinned by requiring the
//! UI surplus at `w̄(z)` to equal the baseline surplus `S(z)`; differentiating
//! in `z` gives `dQ/dz = -r S'(z) / (1 - F(w̄(z)))` for `Q(z) = q(w̄(z))`.
//! Above the pooling threshold `x0` the schedule continues as
//! `q(x0) + c (w - x0)²` with `c = M₁(x0)/M₂(x0)`, which preserves the surplus
//! of the pooled types.

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::quadrature::gauss_legendre;
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::model::{Primitives, SearchMode, WISolution, WiModel};
use crate::ode::try_rk4_step;
use crate::root::{self, RootOptions};
use crate::welfare::{self, acceptance_rate, pv_weights, prior_weights, Economy};

/// Reservation wages closer than this to `x0` are treated as pooled.
const POOL_GAP: f64 = 1e-10;

/// Largest spacing of schedule nodes in `w`, relative to the offer support.
const NODE_GAP: f64 = 1e-3;

/// Shape of `q` above the pooling threshold, as a function of `d = w - x0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PooledExtension {
    /// `c d²`.
    Quadratic { c: f64 },
    /// `d`; used when there is no active region and `q` is the identity
    /// shifted by the tax.
    Identity,
}

impl PooledExtension {
    fn value(&self, d: f64) -> f64 {
        match *self {
            PooledExtension::Quadratic { c } => c * d * d,
            PooledExtension::Identity => d,
        }
    }

    fn slope(&self, d: f64) -> f64 {
        match *self {
            PooledExtension::Quadratic { c } => 2.0 * c * d,
            PooledExtension::Identity => 1.0,
        }
    }
}

/// Net-of-tax consumption `q(w)` before the level shift `C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsumptionSchedule {
    x0: f64,
    q_x0: f64,
    extension: PooledExtension,
    /// Hermite table on the active region; its last node is `x0`. Below the
    /// first node it continues linearly.
    active: MonotoneCubic,
    #[serde(skip)]
    offer: Distribution,
    /// `∫ q dF` and `∫ dF` from each active node up to `x0`.
    #[serde(skip)]
    cum_q: Vec<f64>,
    #[serde(skip)]
    cum_mass: Vec<f64>,
}

impl ConsumptionSchedule {
    fn new(
        x0: f64,
        q_x0: f64,
        extension: PooledExtension,
        active: MonotoneCubic,
        offer: &Distribution,
    ) -> Result<Self> {
        let nodes = active.nodes();
        let m = nodes.len();
        let mut cum_q = vec![0.0; m];
        let mut cum_mass = vec![0.0; m];
        for j in (0..m.saturating_sub(1)).rev() {
            // Same single-panel rule as the partial piece in `gain`, so that
            // `gain` is continuous across nodes.
            let (a, b) = (nodes[j].max(offer.lo()), nodes[j + 1].min(offer.hi()));
            let piece = if b > a {
                gauss_legendre(&|w: f64| active.eval(w) * offer.pdf(w), a, b)
            } else {
                0.0
            };
            cum_q[j] = cum_q[j + 1] + piece;
            cum_mass[j] = offer.tail_mass(nodes[j]) - offer.tail_mass(x0);
        }
        Ok(Self {
            x0,
            q_x0,
            extension,
            active,
            offer: offer.clone(),
            cum_q,
            cum_mass,
        })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn extension(&self) -> PooledExtension {
        self.extension
    }

    /// Active-region nodes `w̄(z)` in increasing order, ending at `x0`.
    pub fn nodes(&self) -> &[f64] {
        self.active.nodes()
    }

    pub fn node_values(&self) -> &[f64] {
        self.active.values()
    }

    pub fn eval(&self, w: f64) -> f64 {
        if w >= self.x0 {
            self.q_x0 + self.extension.value(w - self.x0)
        } else {
            self.active.eval(w)
        }
    }

    pub fn derivative(&self, w: f64) -> f64 {
        if w >= self.x0 {
            self.extension.slope(w - self.x0)
        } else {
            self.active.derivative(w)
        }
    }

    /// `∫_y^hi [q(w) - q(y)] dF(w)`, i.e. `r` times the UI search surplus at
    /// acceptance wage `y`. Assembled from non-negative pieces so that it
    /// stays accurate as `y → x0`.
    pub fn gain(&self, y: f64) -> f64 {
        let f = &self.offer;
        if y >= self.x0 {
            let d = y - self.x0;
            return match self.extension {
                PooledExtension::Quadratic { c } => {
                    c * (f.upper_partial_moment(y, 2) + 2.0 * d * f.upper_partial_moment(y, 1))
                }
                PooledExtension::Identity => f.upper_partial_moment(y, 1),
            };
        }
        let qy = self.eval(y);
        let pooled = (self.q_x0 - qy) * f.tail_mass(self.x0) + self.gain(self.x0);
        let nodes = self.active.nodes();
        let below = if y < nodes[0] {
            // Linear piece: q(w) - q(y) = s (w - y).
            let s = self.active.slopes()[0];
            let n0 = nodes[0];
            let lin = f.upper_partial_moment(y, 1)
                - f.upper_partial_moment(n0, 1)
                - (n0 - y) * f.tail_mass(n0);
            s * lin.max(0.0) + (self.cum_q[0] - qy * self.cum_mass[0])
        } else {
            let k = nodes.partition_point(|&v| v <= y) - 1;
            let a = y.max(f.lo());
            let b = nodes[k + 1].min(f.hi());
            let partial = if b > a {
                gauss_legendre(&|w: f64| (self.active.eval(w) - qy) * f.pdf(w), a, b)
            } else {
                0.0
            };
            partial + (self.cum_q[k + 1] - qy * self.cum_mass[k + 1])
        };
        below + pooled
    }

    /// `q(y) - q(x0)`, written relative to `x0` on the last active piece so
    /// that it keeps full relative accuracy as `y → x0`.
    pub fn rise(&self, y: f64) -> f64 {
        if y >= self.x0 {
            return self.extension.value(y - self.x0);
        }
        let nodes = self.active.nodes();
        let m = nodes.len();
        if m < 2 || y < nodes[m - 2] {
            return self.eval(y) - self.q_x0;
        }
        let (xa, xb) = (nodes[m - 2], nodes[m - 1]);
        let (ya, yb) = (self.active.values()[m - 2], self.active.values()[m - 1]);
        let (da, db) = (self.active.slopes()[m - 2], self.active.slopes()[m - 1]);
        let h = xb - xa;
        let s = (y - xa) / h;
        let t = 1.0 - s;
        (ya - yb) * t * t * (1.0 + 2.0 * s) + h * (da * s * t * t - db * s * s * t)
    }

    /// `gain(y) - gain(x0)`. Close to `x0` this integrates
    /// `gain'(t) = -q'(t)(1 - F(t))` instead of differencing.
    pub fn gain_change(&self, y: f64) -> f64 {
        let f = &self.offer;
        let near = 1e-3 * (f.hi() - f.lo());
        if (y - self.x0).abs() > near {
            return self.gain(y) - self.gain(self.x0);
        }
        let (a, b) = if y < self.x0 { (y, self.x0) } else { (self.x0, y) };
        let mut cuts = vec![a];
        cuts.extend(self.active.nodes().iter().copied().filter(|&v| v > a && v < b));
        if f.lo() > a && f.lo() < b {
            cuts.push(f.lo());
            cuts.sort_by(f64::total_cmp);
        }
        cuts.push(b);
        let integrand = |t: f64| self.derivative(t) * f.tail_mass(t);
        let total: f64 = cuts.windows(2).map(|p| gauss_legendre(&integrand, p[0], p[1])).sum();
        if y < self.x0 {
            total
        } else {
            -total
        }
    }

    /// `∫_y^hi q(w) dF(w)`.
    pub fn tail_integral(&self, y: f64) -> f64 {
        self.gain(y) + self.eval(y) * self.offer.tail_mass(y)
    }

    /// Rows `(w, q(w))` on an even grid over `[from, hi]`.
    pub fn tabulate(&self, from: f64, n: usize) -> Vec<(f64, f64)> {
        let hi = self.offer.hi();
        (0..n)
            .map(|i| {
                let w = from + (hi - from) * i as f64 / (n - 1).max(1) as f64;
                (w, self.eval(w))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UiTax {
    LumpSum { t_star: f64 },
    /// Employed consumption `q(w) + shift`, benefits `b*(z) + shift`.
    Schedule {
        schedule: ConsumptionSchedule,
        shift: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UIOnlyPolicy {
    pub z_grid: Vec<f64>,
    /// Benefits before the level shift.
    pub b_star: Vec<f64>,
    pub tax: UiTax,
    #[serde(skip)]
    curve: MonotoneCubic,
}

impl UIOnlyPolicy {
    pub fn new(z_grid: Vec<f64>, b_star: Vec<f64>, tax: UiTax) -> Result<Self> {
        let curve = MonotoneCubic::pchip(z_grid.clone(), b_star.clone())?;
        Ok(Self {
            z_grid,
            b_star,
            tax,
            curve,
        })
    }

    pub fn shift(&self) -> f64 {
        match self.tax {
            UiTax::LumpSum { .. } => 0.0,
            UiTax::Schedule { shift, .. } => shift,
        }
    }

    pub fn schedule(&self) -> Option<&ConsumptionSchedule> {
        match &self.tax {
            UiTax::Schedule { schedule, .. } => Some(schedule),
            UiTax::LumpSum { .. } => None,
        }
    }

    pub fn with_shift(&self, shift: f64) -> Self {
        let mut p = self.clone();
        if let UiTax::Schedule { shift: s, .. } = &mut p.tax {
            *s = shift;
        }
        p
    }

    /// Unemployment benefit including the shift; exact on grid nodes.
    pub fn benefit_at(&self, z: f64) -> f64 {
        self.base_benefit_at(z) + self.shift()
    }

    /// Benefit before the shift.
    pub fn base_benefit_at(&self, z: f64) -> f64 {
        let i = self.z_grid.partition_point(|&v| v < z);
        if i < self.z_grid.len() && self.z_grid[i] == z {
            self.b_star[i]
        } else {
            self.curve.eval(z)
        }
    }

    pub fn consumption(&self, w: f64) -> f64 {
        match &self.tax {
            UiTax::LumpSum { t_star } => w - t_star,
            UiTax::Schedule { schedule, shift } => schedule.eval(w) + shift,
        }
    }

    /// Tax paid by a worker employed at `w`: `T*` or `w - q(w) - C`.
    pub fn receipts(&self, w: f64) -> f64 {
        match &self.tax {
            UiTax::LumpSum { t_star } => *t_star,
            UiTax::Schedule { schedule, shift } => w - schedule.eval(w) - shift,
        }
    }
}

/// Builds the lump-sum replicating policy under exogenous arrivals.
pub fn construct_ui_exogenous(
    sol: &WISolution,
    prim: &Primitives,
    offer: &Distribution,
    prior: &Distribution,
) -> Result<UIOnlyPolicy> {
    if prim.mode != SearchMode::ExogenousArrival {
        return Err(Error::ModeMismatch {
            expected: "exogenous_arrival",
        });
    }
    let r = prim.r;
    let weights = prior_weights(&sol.z_grid, prior)?;
    let k: Vec<f64> = sol
        .w_res
        .iter()
        .map(|&w| w - prim.lambda_bar / r * offer.upper_partial_moment(w, 1))
        .collect();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..sol.len() {
        let pv = pv_weights(acceptance_rate(sol.effort[i], sol.w_res[i], offer), r);
        num += weights[i] * pv.unemployed * k[i];
        den += weights[i] * (pv.unemployed + pv.employed / r);
    }
    let t_star = num / den;
    let b_star = k.iter().map(|k| k - t_star).collect();
    UIOnlyPolicy::new(sol.z_grid.clone(), b_star, UiTax::LumpSum { t_star })
}

/// Integrates the surplus-matching ODE and assembles `q`.
pub fn construct_consumption_schedule(model: &WiModel, sol: &WISolution) -> Result<ConsumptionSchedule> {
    if model.prim.mode != SearchMode::EndogenousSearch {
        return Err(Error::ModeMismatch {
            expected: "endogenous_search",
        });
    }
    let offer = model.offer;
    let x0 = sol
        .x0
        .ok_or_else(|| Error::invalid("x0", "solution carries no pooling threshold"))?;
    if x0 >= offer.hi() {
        return Err(Error::invalid("x0", format!("x0 = {x0} is not below the offer support")));
    }
    let q_x0 = x0 - model.policy.tax;
    let r = model.prim.r;

    let rhs = |z: f64| -> Result<f64> {
        if z <= x0 {
            return Ok(0.0);
        }
        let d = model.analytic_derivatives(z, x0).map_err(|e| e.at(z))?;
        Ok(-r * d.dsurplus / d.accept_mass)
    };

    // Grid steps are subdivided so that consecutive nodes stay close in w.
    let max_gap = NODE_GAP * (offer.hi() - offer.lo());
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    let (mut z_prev, mut w_prev, mut q) = (x0, x0, q_x0);
    for (&z, &w_grid) in sol.z_grid.iter().zip(&sol.w_res).filter(|(&z, _)| z > x0) {
        let sub = ((w_prev - w_grid).abs() / max_gap).ceil().max(1.0) as usize;
        let h = (z - z_prev) / sub as f64;
        for k in 1..=sub {
            let zk = if k == sub { z } else { z_prev + h * k as f64 };
            q = try_rk4_step(&mut |t, _| rhs(t), zk - h, q, h)?;
            let d = model.analytic_derivatives(zk, x0).map_err(|e| e.at(zk))?;
            if d.w_res >= x0 - POOL_GAP {
                continue;
            }
            let slope = (-r * d.dsurplus / d.accept_mass) / d.dw_res;
            rows.push((d.w_res, q, slope));
        }
        z_prev = z;
        w_prev = w_grid;
    }

    if rows.is_empty() {
        let active = MonotoneCubic::hermite(vec![x0], vec![q_x0], vec![1.0])?;
        return ConsumptionSchedule::new(x0, q_x0, PooledExtension::Identity, active, offer);
    }
    rows.reverse();
    rows.push((x0, q_x0, 0.0));
    for pair in rows.windows(2) {
        if !(pair[1].0 > pair[0].0 && pair[1].1 > pair[0].1) {
            return Err(Error::NonMonotoneSchedule { w: pair[0].0 });
        }
    }
    let c = offer.upper_partial_moment(x0, 1) / offer.upper_partial_moment(x0, 2);
    let active = MonotoneCubic::hermite(
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
        rows.iter().map(|r| r.2).collect(),
    )?;
    ConsumptionSchedule::new(x0, q_x0, PooledExtension::Quadratic { c }, active, offer)
}

/// Benefits that make `w̄(z)` the UI reservation wage given `q`, along with
/// the effort and surplus they induce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenefitRecovery {
    pub b_star: Vec<f64>,
    pub effort: Vec<f64>,
    pub surplus: Vec<f64>,
}

pub fn construct_benefits_endogenous(
    schedule: &ConsumptionSchedule,
    sol: &WISolution,
    prim: &Primitives,
) -> BenefitRecovery {
    let mut out = BenefitRecovery {
        b_star: Vec::with_capacity(sol.len()),
        effort: Vec::with_capacity(sol.len()),
        surplus: Vec::with_capacity(sol.len()),
    };
    for &y in &sol.w_res {
        let s = schedule.gain(y) / prim.r;
        // q + ψ(λ) - λS̃, i.e. q - R(S̃).
        let ret = prim.option_value(s);
        out.b_star.push(schedule.eval(y) - ret.value);
        out.effort.push(ret.effort);
        out.surplus.push(s);
    }
    out
}

/// Level shift `C` that balances the budget of a schedule policy. The
/// residual falls one-for-one with `C` per unit of `∫ (u + e/r) dH`.
pub fn balance_budget_shift(
    policy: &UIOnlyPolicy,
    sol: &WISolution,
    prim: &Primitives,
    offer: &Distribution,
    prior: &Distribution,
) -> Result<f64> {
    if policy.schedule().is_none() {
        return Err(Error::invalid("tax", "level shift applies to schedule policies"));
    }
    let base = policy.with_shift(0.0);
    let rep = welfare::evaluate(&Economy::UiOnly(&base), sol, prim, offer, prior)?;
    if rep.per_z.iter().all(|p| p.alpha == 0.0) {
        return Err(Error::DegenerateBudget("no type ever accepts a job".into()));
    }
    let slope: f64 = rep
        .per_z
        .iter()
        .map(|p| {
            let pv = pv_weights(p.alpha, prim.r);
            p.prior_weight * (pv.unemployed + pv.employed / prim.r)
        })
        .sum();
    Ok(rep.budget_residual / slope)
}

/// Full endogenous-search construction: schedule, benefits and shift.
pub fn construct_ui_endogenous(
    model: &WiModel,
    sol: &WISolution,
    prior: &Distribution,
) -> Result<UIOnlyPolicy> {
    let schedule = construct_consumption_schedule(model, sol)?;
    let rec = construct_benefits_endogenous(&schedule, sol, model.prim);
    let policy = UIOnlyPolicy::new(
        sol.z_grid.clone(),
        rec.b_star,
        UiTax::Schedule { schedule, shift: 0.0 },
    )?;
    let shift = balance_budget_shift(&policy, sol, model.prim, model.offer, prior)?;
    Ok(policy.with_shift(shift))
}

/// Dispatches on the search mode.
pub fn replicate(model: &WiModel, sol: &WISolution, prior: &Distribution) -> Result<UIOnlyPolicy> {
    match model.prim.mode {
        SearchMode::ExogenousArrival => construct_ui_exogenous(sol, model.prim, model.offer, prior),
        SearchMode::EndogenousSearch => construct_ui_endogenous(model, sol, prior),
    }
}

/// Outcome of re-solving the UI-only economy from scratch on the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub z_grid: Vec<f64>,
    pub w_res_ui: Vec<f64>,
    pub effort_ui: Vec<f64>,
    pub max_reservation_dev: f64,
    pub argmax_reservation_z: f64,
    pub max_effort_dev: f64,
    /// Smallest increment of the bracketing function over its 101-point scan.
    pub min_uniqueness_margin: f64,
}

const SCAN_POINTS: usize = 101;

/// Solves for the UI reservation wage at every grid `z`, rejecting any `z`
/// whose bracketing function changes sign more than once.
pub fn verify_replication(
    policy: &UIOnlyPolicy,
    sol: &WISolution,
    prim: &Primitives,
    offer: &Distribution,
    opts: &RootOptions,
) -> Result<VerificationReport> {
    let r = prim.r;
    let rows: Vec<(f64, f64, f64)> = sol
        .z_grid
        .par_iter()
        .map(|&z| {
            // The shift C enters benefits and consumption alike and cancels.
            let b = policy.base_benefit_at(z);
            let run = |f: &dyn Fn(f64) -> f64, start: f64| -> Result<(f64, f64)> {
                let ((a, fa), (c, fc)) = root::expand_increasing(f, start, offer.hi(), "UI reservation wage")?;
                let scan = root::scan(f, a, c, SCAN_POINTS);
                let endpoint_root = fa == 0.0 || fc == 0.0;
                if scan.sign_changes > 1 || (scan.sign_changes == 0 && !endpoint_root) {
                    return Err(Error::NonUniqueRoot {
                        z,
                        sign_changes: scan.sign_changes,
                    });
                }
                let root = root::solve_from(f, (a, fa), (c, fc), opts, "UI reservation wage")?;
                if root.x >= offer.hi() {
                    return Err(Error::ReservationOutOfSupport {
                        root: root.x,
                        bound: offer.hi(),
                    });
                }
                Ok((root.x, scan.min_increment))
            };
            let out = match &policy.tax {
                UiTax::LumpSum { t_star } => {
                    if prim.mode != SearchMode::ExogenousArrival {
                        return Err(Error::ModeMismatch {
                            expected: "exogenous_arrival",
                        });
                    }
                    let lam = prim.lambda_bar;
                    let phi = |y: f64| y - t_star - b - lam / r * offer.upper_partial_moment(y, 1);
                    let (w, margin) = run(&phi, offer.lo())?;
                    (w, lam, margin)
                }
                UiTax::Schedule { schedule, .. } => {
                    if prim.mode != SearchMode::EndogenousSearch {
                        return Err(Error::ModeMismatch {
                            expected: "endogenous_search",
                        });
                    }
                    // Θ(y) = q(y) - b* - R(S̃(y)), expanded around x0 where
                    // q' vanishes and Θ is flat.
                    let s0 = schedule.gain(schedule.x0()) / r;
                    let base = b - (schedule.eval(schedule.x0()) - prim.option_value(s0).value);
                    let theta = |y: f64| {
                        let ds = schedule.gain_change(y) / r;
                        schedule.rise(y) - base - prim.return_change(s0, ds)
                    };
                    let start = offer.lo().min(schedule.nodes()[0]);
                    let (w, margin) = run(&theta, start)?;
                    let s = s0 + schedule.gain_change(w) / r;
                    (w, prim.option_value(s).effort, margin)
                }
            };
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rep = VerificationReport {
        z_grid: sol.z_grid.clone(),
        w_res_ui: rows.iter().map(|r| r.0).collect(),
        effort_ui: rows.iter().map(|r| r.1).collect(),
        max_reservation_dev: 0.0,
        argmax_reservation_z: sol.z_grid[0],
        max_effort_dev: 0.0,
        min_uniqueness_margin: rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min),
    };
    for i in 0..sol.len() {
        let dw = (rep.w_res_ui[i] - sol.w_res[i]).abs();
        if dw > rep.max_reservation_dev {
            rep.max_reservation_dev = dw;
            rep.argmax_reservation_z = sol.z_grid[i];
        }
        rep.max_effort_dev = rep.max_effort_dev.max((rep.effort_ui[i] - sol.effort[i]).abs());
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BenefitSchedule, WIPolicy};

    #[test]
    fn quadratic_coefficient_for_uniform() {
        let f = Distribution::uniform(0.0, 1.0).unwrap();
        let c = f.upper_partial_moment(0.5, 1) / f.upper_partial_moment(0.5, 2);
        assert!((c - 3.0).abs() < 1e-12);
    }

    fn endo(phi: f64) -> (Primitives, WIPolicy, Distribution, Distribution) {
        (
            Primitives::endogenous(0.05, 1.0, 1.0).unwrap(),
            WIPolicy::new(BenefitSchedule::constant(0.4), 0.2, phi),
            Distribution::truncated_lognormal(0.0, 0.5, 0.2, 5.0).unwrap(),
            Distribution::uniform(0.5, 3.0).unwrap(),
        )
    }

    #[test]
    fn extension_preserves_pooled_surplus() {
        let (prim, pol, f, h) = endo(0.5);
        let m = WiModel::new(&prim, &pol, &f).unwrap();
        let sol = m.solve(&h, 101).unwrap();
        let q = construct_consumption_schedule(&m, &sol).unwrap();
        let x0 = q.x0();
        let direct = f
            .upper_integral(x0, |w| q.eval(w) - q.eval(x0), &[])
            .unwrap();
        assert!((direct - f.upper_partial_moment(x0, 1)).abs() < 1e-10);
        assert!(q.derivative(x0).abs() < 1e-15);
    }

    #[test]
    fn gain_matches_direct_quadrature() {
        let (prim, pol, f, h) = endo(0.6);
        let m = WiModel::new(&prim, &pol, &f).unwrap();
        let sol = m.solve(&h, 101).unwrap();
        let q = construct_consumption_schedule(&m, &sol).unwrap();
        let mut kinks = q.nodes().to_vec();
        kinks.push(q.x0());
        for y in [0.1, 0.3, q.nodes()[0] + 1e-3, 1.0, q.x0() - 1e-6, q.x0(), 2.5] {
            let qy = q.eval(y);
            let direct = f.upper_integral(y, |w| q.eval(w) - qy, &kinks).unwrap();
            assert!((q.gain(y) - direct).abs() < 1e-9, "y={y}: {} vs {direct}", q.gain(y));
            let tail = f.upper_integral(y, |w| q.eval(w), &kinks).unwrap();
            assert!((q.tail_integral(y) - tail).abs() < 1e-9);
        }
    }

    #[test]
    fn schedule_is_strictly_increasing_and_matches_surplus() {
        let (prim, pol, f, h) = endo(0.5);
        let m = WiModel::new(&prim, &pol, &f).unwrap();
        let sol = m.solve(&h, 201).unwrap();
        let q = construct_consumption_schedule(&m, &sol).unwrap();
        assert!(q.node_values().windows(2).all(|p| p[1] > p[0]));
        for i in 0..sol.len() {
            let s = q.gain(sol.w_res[i]) / prim.r;
            assert!((s - sol.surplus[i]).abs() < 1e-6, "z={}", sol.z_grid[i]);
        }
    }

    #[test]
    fn pooled_benefits_are_constant() {
        let (prim, pol, f, h) = endo(0.5);
        let m = WiModel::new(&prim, &pol, &f).unwrap();
        let sol = m.solve(&h, 101).unwrap();
        let q = construct_consumption_schedule(&m, &sol).unwrap();
        let rec = construct_benefits_endogenous(&q, &sol, &prim);
        let x0 = sol.x0.unwrap();
        let pooled: Vec<f64> = (0..sol.len()).filter(|&i| sol.z_grid[i] <= x0).map(|i| rec.b_star[i]).collect();
        assert!(pooled.len() > 2);
        assert!(pooled.iter().all(|&b| b == pooled[0]));
        for i in 0..sol.len() {
            assert!((rec.effort[i] - sol.effort[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn no_active_region_gives_identity_schedule() {
        let (prim, pol, f, h) = endo(0.0);
        let m = WiModel::new(&prim, &pol, &f).unwrap();
        let sol = m.solve(&h, 51).unwrap();
        let q = construct_consumption_schedule(&m, &sol).unwrap();
        assert_eq!(q.extension(), PooledExtension::Identity);
        for w in [0.2, 1.0, 3.0] {
            assert!((q.eval(w) - (w - 0.2)).abs() < 1e-14);
        }
        let ui = construct_ui_endogenous(&m, &sol, &h).unwrap();
        assert!((ui.benefit_at(1.0) - ui.shift() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn lump_sum_tax_matches_root_find() {
        let prim = Primitives::exogenous(0.05, 0.8).unwrap();
        let pol = WIPolicy::new(BenefitSchedule::constant(0.4), 0.3, 0.5);
        let f = Distribution::truncated_lognormal(0.0, 0.5, 0.2, 5.0).unwrap();
        let h = Distribution::uniform(0.5, 3.0).unwrap();
        let sol = WiModel::new(&prim, &pol, &f).unwrap().solve(&h, 101).unwrap();
        let ui = construct_ui_exogenous(&sol, &prim, &f, &h).unwrap();
        let UiTax::LumpSum { t_star } = ui.tax else { panic!() };
        // Oracle: bisection on the budget residual with b* = K - T.
        let k: Vec<f64> = ui.b_star.iter().map(|b| b + t_star).collect();
        let resid = |t: f64| {
            let p = UIOnlyPolicy::new(sol.z_grid.clone(), k.iter().map(|k| k - t).collect(), UiTax::LumpSum { t_star: t }).unwrap();
            welfare::budget_residual(&Economy::UiOnly(&p), &sol, &prim, &f, &h).unwrap()
        };
        let (mut a, mut b) = (-5.0, 5.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if resid(m) < 0.0 { a = m } else { b = m }
        }
        assert!((t_star - a).abs() < 1e-9);
        // Affine with slope 1/r.
        let slope = (resid(t_star + 0.1) - resid(t_star - 0.1)) / 0.2;
        assert!((slope - 1.0 / 0.05).abs() < 1e-8);
    }

    #[test]
    fn shift_matches_root_find() {
        let (prim, pol, f, h) = endo(0.5);
        let m = WiModel::new(&prim, &pol, &f).unwrap();
        let sol = m.solve(&h, 101).unwrap();
        let ui = construct_ui_endogenous(&m, &sol, &h).unwrap();
        let resid = |c: f64| {
            welfare::budget_residual(&Economy::UiOnly(&ui.with_shift(c)), &sol, &prim, &f, &h).unwrap()
        };
        let (mut a, mut b) = (-5.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if resid(mid) > 0.0 { a = mid } else { b = mid }
        }
        assert!((ui.shift() - a).abs() < 1e-9);
        assert!(resid(ui.shift()).abs() < 1e-9);
    }

    #[test]
    fn identity_replication_without_insurance() {
        let prim = Primitives::exogenous(0.05, 0.8).unwrap();
        let pol = WIPolicy::new(BenefitSchedule::constant(0.4), 0.3, 0.0);
        let f = Distribution::truncated_lognormal(0.0, 0.5, 0.2, 5.0).unwrap();
        let h = Distribution::uniform(0.5, 3.0).unwrap();
        let sol = WiModel::new(&prim, &pol, &f).unwrap().solve(&h, 51).unwrap();
        let ui = construct_ui_exogenous(&sol, &prim, &f, &h).unwrap();
        let UiTax::LumpSum { t_star } = ui.tax else { panic!() };
        assert!(ui.b_star.iter().all(|b| (b + t_star - 0.7).abs() < 1e-12));
        let rep = verify_replication(&ui, &sol, &prim, &f, &RootOptions::default()).unwrap();
        assert!(rep.max_reservation_dev < 1e-10);
    }
}
