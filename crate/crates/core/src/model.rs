//! The baseline economy with unemployment benefits, a lump-sum tax on the
//! employed and wage insurance.
//!
//! A worker whose previous wage was `z` and who accepts `w` consumes
//! `g(w, z) = w + φ (z - w)_+ - T` forever. The reservation wage solves
//! `g(w̄, z) = b(z) + R(S(w̄, z))`, where `S(x, z) = ∫_x [g(w,z) - g(x,z)]/r dF`
//! is the search surplus at acceptance wage `x` and `R` is the value of
//! searching: `λ̄ S` with exogenous arrivals, `max_λ λS - ψ(λ)` with effort.
//!
//! For `x ≤ z` the surplus collapses to partial moments of `F`:
//! `r S(x, z) = (1 - φ) M₁(x) + φ M₁(z)`, with `M₁(x) = ∫_x (w - x) dF`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::root::{self, RootOptions};
use crate::welfare::{self, Economy};

/// Largest admissible wage-insurance replacement rate.
pub const PHI_MAX: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Offers arrive at the fixed Poisson rate `lambda_bar`.
    ExogenousArrival,
    /// The worker chooses the arrival rate at cost `ψ(λ) = κ λ^{1+η}/(1+η)`.
    EndogenousSearch,
}

impl SearchMode {
    pub fn name(self) -> &'static str {
        match self {
            SearchMode::ExogenousArrival => "exogenous_arrival",
            SearchMode::EndogenousSearch => "endogenous_search",
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitives {
    pub r: f64,
    pub mode: SearchMode,
    #[serde(default)]
    pub lambda_bar: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default = "one")]
    pub eta: f64,
}

/// `R(S)` and the effort that attains it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchReturn {
    pub value: f64,
    pub effort: f64,
}

impl Primitives {
    pub fn exogenous(r: f64, lambda_bar: f64) -> Result<Self> {
        let p = Self {
            r,
            mode: SearchMode::ExogenousArrival,
            lambda_bar,
            kappa: 1.0,
            eta: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn endogenous(r: f64, kappa: f64, eta: f64) -> Result<Self> {
        let p = Self {
            r,
            mode: SearchMode::EndogenousSearch,
            lambda_bar: 0.0,
            kappa,
            eta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::invalid("r", "discount rate must be positive"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa", "must be positive"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", "must be positive"));
        }
        match self.mode {
            SearchMode::ExogenousArrival if !(self.lambda_bar > 0.0 && self.lambda_bar.is_finite()) => {
                Err(Error::invalid("lambda_bar", "exogenous arrival needs lambda_bar > 0"))
            }
            SearchMode::EndogenousSearch if self.lambda_bar != 0.0 => {
                Err(Error::invalid("lambda_bar", "endogenous search needs lambda_bar = 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_endogenous(&self) -> bool {
        self.mode == SearchMode::EndogenousSearch
    }

    /// `ψ(λ)`; zero in the exogenous mode, where no effort is chosen.
    pub fn search_cost(&self, effort: f64) -> f64 {
        match self.mode {
            SearchMode::ExogenousArrival => 0.0,
            SearchMode::EndogenousSearch => {
                self.kappa * effort.powf(1.0 + self.eta) / (1.0 + self.eta)
            }
        }
    }

    /// `R(S) = max_λ λS - ψ(λ)`. The first-order condition `κ λ^η = S` gives
    /// `λ* = (S/κ)^{1/η}` and `R = η/(1+η) λ* S`; `R'(S) = λ*`.
    pub fn search_return(&self, surplus: f64) -> Result<SearchReturn> {
        if self.mode != SearchMode::EndogenousSearch {
            return Err(Error::ModeMismatch {
                expected: "endogenous_search",
            });
        }
        if surplus < 0.0 || surplus.is_nan() {
            return Err(Error::invalid("surplus", format!("must be non-negative, got {surplus}")));
        }
        Ok(self.option_value(surplus))
    }

    /// Value of searching in either mode. Callers pass `S ≥ 0`.
    pub(crate) fn option_value(&self, surplus: f64) -> SearchReturn {
        let s = surplus.max(0.0);
        match self.mode {
            SearchMode::ExogenousArrival => SearchReturn {
                value: self.lambda_bar * s,
                effort: self.lambda_bar,
            },
            SearchMode::EndogenousSearch => {
                if s == 0.0 {
                    return SearchReturn {
                        value: 0.0,
                        effort: 0.0,
                    };
                }
                let effort = (s / self.kappa).powf(1.0 / self.eta);
                SearchReturn {
                    value: self.eta / (1.0 + self.eta) * effort * s,
                    effort,
                }
            }
        }
    }
}

impl Primitives {
    /// `R(s0 + ds) - R(s0)` without cancellation when `ds` is small.
    pub(crate) fn return_change(&self, s0: f64, ds: f64) -> f64 {
        match self.mode {
            SearchMode::ExogenousArrival => self.lambda_bar * ds,
            SearchMode::EndogenousSearch if s0 > 0.0 => {
                let p = (1.0 + self.eta) / self.eta;
                self.option_value(s0).value * (p * (ds / s0).max(-1.0).ln_1p()).exp_m1()
            }
            SearchMode::EndogenousSearch => self.option_value(ds).value,
        }
    }
}

/// Flow benefit paid to an unemployed worker with previous wage `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BenefitSchedule {
    Constant { value: f64 },
    Affine { a0: f64, a1: f64 },
    Table(BenefitTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBenefitTable", into = "RawBenefitTable")]
pub struct BenefitTable {
    curve: MonotoneCubic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBenefitTable {
    z: Vec<f64>,
    b: Vec<f64>,
}

impl TryFrom<RawBenefitTable> for BenefitTable {
    type Error = Error;

    fn try_from(raw: RawBenefitTable) -> Result<Self> {
        Ok(Self {
            curve: MonotoneCubic::pchip(raw.z, raw.b)?,
        })
    }
}

impl From<BenefitTable> for RawBenefitTable {
    fn from(t: BenefitTable) -> Self {
        Self {
            z: t.curve.nodes().to_vec(),
            b: t.curve.values().to_vec(),
        }
    }
}

impl BenefitSchedule {
    pub fn constant(value: f64) -> Self {
        BenefitSchedule::Constant { value }
    }

    pub fn table(z: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        Ok(BenefitSchedule::Table(BenefitTable::try_from(RawBenefitTable { z, b })?))
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            BenefitSchedule::Constant { value } => *value,
            BenefitSchedule::Affine { a0, a1 } => a0 + a1 * z,
            BenefitSchedule::Table(t) => t.curve.eval(z),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            BenefitSchedule::Constant { value } => Some(*value),
            BenefitSchedule::Affine { a0, a1 } if *a1 == 0.0 => Some(*a0),
            _ => None,
        }
    }
}

/// `(b(·), T, φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WIPolicy {
    #[serde(rename = "b")]
    pub benefit: BenefitSchedule,
    #[serde(rename = "T")]
    pub tax: f64,
    pub phi: f64,
}

impl WIPolicy {
    pub fn new(benefit: BenefitSchedule, tax: f64, phi: f64) -> Self {
        Self { benefit, tax, phi }
    }

    pub fn validate(&self, mode: SearchMode) -> Result<()> {
        if !(0.0..=PHI_MAX).contains(&self.phi) {
            return Err(Error::invalid("phi", format!("phi must lie in [0, {PHI_MAX}]")));
        }
        if !self.tax.is_finite() {
            return Err(Error::invalid("T", "tax must be finite"));
        }
        if mode == SearchMode::EndogenousSearch && self.benefit.as_constant().is_none() {
            return Err(Error::invalid("b", "b must be constant under endogenous search"));
        }
        Ok(())
    }

    pub fn with_tax(&self, tax: f64) -> Self {
        Self {
            tax,
            ..self.clone()
        }
    }
}

/// Net-of-tax consumption `w + φ (z - w)_+ - T`.
pub fn consumption_wi(w: f64, z: f64, policy: &WIPolicy) -> f64 {
    w + policy.phi * (z - w).max(0.0) - policy.tax
}

/// Tables of the solved baseline economy over a grid of previous wages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WISolution {
    pub mode: SearchMode,
    pub z_grid: Vec<f64>,
    pub w_res: Vec<f64>,
    pub surplus: Vec<f64>,
    pub effort: Vec<f64>,
    pub value: Vec<f64>,
    /// Pooling threshold: the acceptance wage without wage insurance.
    /// Absent in the exogenous mode when benefits vary with `z`.
    pub x0: Option<f64>,
}

impl WISolution {
    pub fn len(&self) -> usize {
        self.z_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_grid.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurplusEffort {
    pub surplus: f64,
    pub effort: f64,
}

/// Slopes of `w̄_φ` and `S_φ` on the active region, with the quantities they
/// were evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub w_res: f64,
    pub effort: f64,
    pub dw_res: f64,
    pub dsurplus: f64,
    /// `1 - F(w̄)`.
    pub accept_mass: f64,
}

/// The baseline economy for one `(primitives, policy, offer distribution)`.
#[derive(Debug, Clone, Copy)]
pub struct WiModel<'a> {
    pub prim: &'a Primitives,
    pub policy: &'a WIPolicy,
    pub offer: &'a Distribution,
    pub root: RootOptions,
}

impl<'a> WiModel<'a> {
    pub fn new(prim: &'a Primitives, policy: &'a WIPolicy, offer: &'a Distribution) -> Result<Self> {
        prim.validate()?;
        policy.validate(prim.mode)?;
        Ok(Self {
            prim,
            policy,
            offer,
            root: RootOptions::default(),
        })
    }

    pub fn with_root_options(mut self, root: RootOptions) -> Self {
        self.root = root;
        self
    }

    pub fn consumption(&self, w: f64, z: f64) -> f64 {
        consumption_wi(w, z, self.policy)
    }

    /// `∫_x [g(w,z) - g(x,z)] dF(w)`, i.e. `r S(x, z)`.
    pub fn gain_integral(&self, x: f64, z: f64) -> f64 {
        let f = self.offer;
        if x < z {
            let phi = self.policy.phi;
            (1.0 - phi) * f.upper_partial_moment(x, 1) + phi * f.upper_partial_moment(z, 1)
        } else {
            f.upper_partial_moment(x, 1)
        }
    }

    /// Search surplus `S(x, z)` at acceptance wage `x`.
    pub fn surplus_at(&self, x: f64, z: f64) -> f64 {
        self.gain_integral(x, z) / self.prim.r
    }

    fn check_reservation(&self, root: f64) -> Result<f64> {
        if root >= self.offer.hi() {
            return Err(Error::ReservationOutOfSupport {
                root,
                bound: self.offer.hi(),
            });
        }
        Ok(root)
    }

    /// Unique root of `Φ(y) = g(y,z) - b(z) - λ̄ S(y, z)`; `Φ' ≥ (1-φ)(1 + λ̄(1-F)/r)`.
    pub fn reservation_exogenous(&self, z: f64) -> Result<f64> {
        if self.prim.mode != SearchMode::ExogenousArrival {
            return Err(Error::ModeMismatch {
                expected: "exogenous_arrival",
            });
        }
        let b = self.policy.benefit.eval(z);
        let lam = self.prim.lambda_bar;
        let phi = |y: f64| self.consumption(y, z) - b - lam * self.surplus_at(y, z);
        let (lo, hi) = root::expand_increasing(phi, self.offer.lo(), self.offer.hi(), "reservation wage")?;
        let r = root::solve_from(phi, lo, hi, &self.root, "reservation wage")?;
        self.check_reservation(r.x)
    }

    /// The acceptance wage absent wage insurance:
    /// `x - T - b - R(M₁(x)/r) = 0`. May fall outside the offer support.
    pub fn solve_x0(&self) -> Result<f64> {
        let b = self
            .policy
            .benefit
            .as_constant()
            .ok_or_else(|| Error::invalid("b", "the pooling threshold needs a constant benefit"))?;
        let t = self.policy.tax;
        let r = self.prim.r;
        let f = |x: f64| {
            x - t - b - self.prim.option_value(self.offer.upper_partial_moment(x, 1) / r).value
        };
        let lo = b + t;
        let hi = lo.max(self.offer.hi());
        let root = root::solve(f, lo, hi, &self.root, "pooling threshold x0")?;
        Ok(root.x)
    }

    /// Reservation wage with search effort. Types at or below `x0` pool at
    /// `x0`; above it the root of `Ω(x,z) = g(x,z) - b - R(S(x,z))` lies below `z`.
    pub fn reservation_endogenous(&self, z: f64, x0: f64) -> Result<f64> {
        if self.prim.mode != SearchMode::EndogenousSearch {
            return Err(Error::ModeMismatch {
                expected: "endogenous_search",
            });
        }
        // Without insurance Ω does not depend on z and its root is x0.
        if z <= x0 || self.policy.phi == 0.0 {
            return self.check_reservation(x0);
        }
        let b = self.policy.benefit.eval(z);
        let omega = |x: f64| self.consumption(x, z) - b - self.prim.option_value(self.surplus_at(x, z)).value;
        let start = self.offer.lo().min(z - 1e-3 * z.abs().max(1.0));
        let (lo, hi) = root::expand_increasing(omega, start, z, "reservation wage")?;
        let hi = if hi.0 > z { (z, omega(z)) } else { hi };
        let r = root::solve_from(omega, lo, hi, &self.root, "reservation wage")?;
        self.check_reservation(r.x)
    }

    /// Dispatches on the mode; `x0` is required with endogenous search.
    pub fn reservation(&self, z: f64, x0: Option<f64>) -> Result<f64> {
        match self.prim.mode {
            SearchMode::ExogenousArrival => self.reservation_exogenous(z),
            SearchMode::EndogenousSearch => {
                let x0 = x0.ok_or_else(|| Error::invalid("x0", "required under endogenous search"))?;
                self.reservation_endogenous(z, x0)
            }
        }
    }

    pub fn surplus_and_effort(&self, z: f64, w_res: f64) -> SurplusEffort {
        let surplus = self.surplus_at(w_res, z);
        SurplusEffort {
            surplus,
            effort: self.prim.option_value(surplus).effort,
        }
    }

    /// Pooling threshold for this model, if one exists.
    pub fn pooling_threshold(&self) -> Result<Option<f64>> {
        match self.prim.mode {
            SearchMode::EndogenousSearch => self.solve_x0().map(Some),
            SearchMode::ExogenousArrival if self.policy.benefit.as_constant().is_some() => {
                self.solve_x0().map(Some)
            }
            SearchMode::ExogenousArrival => Ok(None),
        }
    }

    /// Implicit-function slopes on the active region `z > x0`:
    ///
    /// `w̄' = -(R'φB + rφ) / (r(1-φ) + R'(1-φ)A)`,
    /// `S' = φ(1-φ)(A - B) / (r(1-φ) + R'(1-φ)A)`,
    ///
    /// with `A = 1 - F(w̄)`, `B = 1 - F(z)` and `R' = λ(z)`.
    pub fn analytic_derivatives(&self, z: f64, x0: f64) -> Result<Derivatives> {
        if self.prim.mode != SearchMode::EndogenousSearch {
            return Err(Error::ModeMismatch {
                expected: "endogenous_search",
            });
        }
        if z <= x0 {
            return Err(Error::invalid("z", format!("z = {z} is in the pooling region (x0 = {x0})")));
        }
        let w_res = self.reservation_endogenous(z, x0)?;
        let effort = self.surplus_and_effort(z, w_res).effort;
        Ok(self.derivatives_at(z, w_res, effort))
    }

    /// Same formulas at a known `(w̄, λ)`.
    pub fn derivatives_at(&self, z: f64, w_res: f64, effort: f64) -> Derivatives {
        let r = self.prim.r;
        let phi = self.policy.phi;
        let a = self.offer.tail_mass(w_res);
        let b = self.offer.tail_mass(z);
        let denom = r * (1.0 - phi) + effort * (1.0 - phi) * a;
        Derivatives {
            w_res,
            effort,
            dw_res: -(effort * phi * b + r * phi) / denom,
            dsurplus: phi * (1.0 - phi) * (a - b) / denom,
            accept_mass: a,
        }
    }

    /// Solves every point of an evenly spaced grid over the prior's support.
    pub fn solve(&self, prior: &Distribution, n_grid: usize) -> Result<WISolution> {
        if n_grid < 51 {
            return Err(Error::invalid("n_grid", "need at least 51 grid points"));
        }
        let x0 = self.pooling_threshold()?;
        let (lo, hi) = (prior.lo(), prior.hi());
        let z_grid: Vec<f64> = (0..n_grid)
            .map(|i| lo + (hi - lo) * i as f64 / (n_grid - 1) as f64)
            .collect();
        let rows: Vec<(f64, f64, f64, f64)> = z_grid
            .par_iter()
            .map(|&z| {
                let w = self.reservation(z, x0).map_err(|e| e.at(z))?;
                let se = self.surplus_and_effort(z, w);
                let value = self.consumption(w, z) / self.prim.r;
                Ok((w, se.surplus, se.effort, value))
            })
            .collect::<Result<_>>()?;
        let mut sol = WISolution {
            mode: self.prim.mode,
            z_grid,
            w_res: Vec::with_capacity(n_grid),
            surplus: Vec::with_capacity(n_grid),
            effort: Vec::with_capacity(n_grid),
            value: Vec::with_capacity(n_grid),
            x0,
        };
        for (w, s, l, v) in rows {
            sol.w_res.push(w);
            sol.surplus.push(s);
            sol.effort.push(l);
            sol.value.push(v);
        }
        Ok(sol)
    }
}

/// Result of balancing the baseline budget through the lump-sum tax.
#[derive(Debug, Clone)]
pub struct TaxBalance {
    pub policy: WIPolicy,
    pub solution: WISolution,
    pub residual: f64,
    /// Every trial tax and its budget residual (`None` when the economy
    /// could not be solved at that tax).
    pub trace: Vec<(f64, Option<f64>)>,
}

/// Finds the lump-sum tax `T` that balances the baseline budget given
/// `b(·)` and `φ`, re-solving the economy at every trial tax.
pub fn balance_wi_tax(
    policy: &WIPolicy,
    prim: &Primitives,
    offer: &Distribution,
    prior: &Distribution,
    n_grid: usize,
    root_opts: &RootOptions,
) -> Result<TaxBalance> {
    let solve_at = |tax: f64| -> Result<(WISolution, f64)> {
        let p = policy.with_tax(tax);
        let model = WiModel::new(prim, &p, offer)?.with_root_options(*root_opts);
        let sol = model.solve(prior, n_grid)?;
        let res = welfare::budget_residual(&Economy::WageInsurance(&p), &sol, prim, offer, prior)?;
        Ok((sol, res))
    };

    let bound = offer.hi();
    let mut trace: Vec<(f64, Option<f64>)> = Vec::new();
    let eval = |t: f64, trace: &mut Vec<(f64, Option<f64>)>| {
        let r = solve_at(t).ok().map(|(_, r)| r);
        trace.push((t, r));
    };
    eval(0.0, &mut trace);
    let mut bracket = None;
    let mut m = bound / 64.0;
    while m <= bound * (1.0 + 1e-12) && bracket.is_none() {
        eval(m, &mut trace);
        eval(-m, &mut trace);
        let mut pts: Vec<(f64, f64)> = trace.iter().filter_map(|&(t, r)| r.map(|r| (t, r))).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        bracket = pts
            .windows(2)
            .filter(|w| w[0].1.signum() != w[1].1.signum() || w[0].1 == 0.0 || w[1].1 == 0.0)
            .min_by(|a, b| a[0].0.abs().min(a[1].0.abs()).total_cmp(&b[0].0.abs().min(b[1].0.abs())))
            .map(|w| (w[0], w[1]));
        m *= 2.0;
    }
    let (lo, hi) = bracket.ok_or_else(|| {
        let (f_lo, f_hi) = (
            trace.iter().find(|t| t.0 == -bound).and_then(|t| t.1).unwrap_or(f64::NAN),
            trace.iter().find(|t| t.0 == bound).and_then(|t| t.1).unwrap_or(f64::NAN),
        );
        Error::NoBracket {
            what: "budget-balancing tax",
            lo: -bound,
            hi: bound,
            f_lo,
            f_hi,
        }
    })?;

    // Residuals are O(1) present values; 1e-12 keeps them well inside 1e-9.
    let opts = RootOptions {
        ftol: 1e-12,
        xtol: 1e-15,
        max_iter: 200,
    };
    let mut failure = None;
    let found = root::solve_from(
        |t| match solve_at(t) {
            Ok((_, r)) => r,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        &opts,
        "budget-balancing tax",
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let tax = found?.x;
    let (solution, residual) = solve_at(tax)?;
    Ok(TaxBalance {
        policy: policy.with_tax(tax),
        solution,
        residual,
        trace,
    })
}
