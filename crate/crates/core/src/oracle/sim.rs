//! Monte Carlo panel of unemployed workers.
//!
//! Each agent draws a previous wage `z ~ H` and follows the tabulated
//! decision rule `(w̄(z), λ(z))`. Time advances in steps of `dt`; within a step
//! offers arrive at exponential times (so several offers can arrive in one
//! step and none is lost to discretization). Employment is absorbing, so the
//! payoff after acceptance is the discounted consumption annuity up to the
//! horizon. Every agent has its own RNG stream, which makes results
//! independent of thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::model::{consumption_wi, Primitives, WISolution};
use crate::welfare::Economy;

fn default_n_agents() -> usize {
    200_000
}
fn default_dt() -> f64 {
    0.01
}
fn default_horizon() -> f64 {
    600.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_n_agents")]
    pub n_agents: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_agents: default_n_agents(),
            dt: default_dt(),
            horizon: default_horizon(),
            seed: 0,
            antithetic: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, r: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("sim.dt", "must be positive"));
        }
        if !(self.horizon * r >= 20.0) {
            return Err(Error::invalid("sim.horizon", "horizon * r must be at least 20"));
        }
        if self.n_agents < 10_000 {
            return Err(Error::invalid("sim.n_agents", "need at least 10000 agents"));
        }
        if self.antithetic && self.n_agents % 2 == 1 {
            return Err(Error::invalid("sim.n_agents", "antithetic pairs need an even count"));
        }
        Ok(())
    }
}

/// What a simulated agent needs to know about the economy it lives in.
pub trait PanelEconomy: Sync {
    fn reservation(&self, z: f64) -> f64;
    fn effort(&self, z: f64) -> f64;
    fn benefit(&self, z: f64) -> f64;
    fn search_cost(&self, effort: f64) -> f64;
    fn consumption(&self, w: f64, z: f64) -> f64;
    fn receipts(&self, w: f64, z: f64) -> f64;
}

/// Decision rules interpolated from a solved table, paired with a policy.
pub struct TabulatedEconomy<'a> {
    w_res: MonotoneCubic,
    effort: MonotoneCubic,
    economy: Economy<'a>,
    prim: &'a Primitives,
}

impl<'a> TabulatedEconomy<'a> {
    pub fn new(sol: &WISolution, economy: Economy<'a>, prim: &'a Primitives) -> Result<Self> {
        Ok(Self {
            w_res: MonotoneCubic::pchip(sol.z_grid.clone(), sol.w_res.clone())?,
            effort: MonotoneCubic::pchip(sol.z_grid.clone(), sol.effort.clone())?,
            economy,
            prim,
        })
    }
}

impl PanelEconomy for TabulatedEconomy<'_> {
    fn reservation(&self, z: f64) -> f64 {
        self.w_res.eval(z)
    }

    fn effort(&self, z: f64) -> f64 {
        self.effort.eval(z).max(0.0)
    }

    fn benefit(&self, z: f64) -> f64 {
        match &self.economy {
            Economy::WageInsurance(p) => p.benefit.eval(z),
            Economy::UiOnly(p) => p.benefit_at(z),
        }
    }

    fn search_cost(&self, effort: f64) -> f64 {
        self.prim.search_cost(effort)
    }

    fn consumption(&self, w: f64, z: f64) -> f64 {
        match &self.economy {
            Economy::WageInsurance(p) => consumption_wi(w, z, p),
            Economy::UiOnly(p) => p.consumption(w),
        }
    }

    fn receipts(&self, w: f64, z: f64) -> f64 {
        match &self.economy {
            Economy::WageInsurance(p) => p.tax - p.phi * (z - w).max(0.0),
            Economy::UiOnly(p) => p.receipts(w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentOutcome {
    pub z: f64,
    pub welfare: f64,
    pub budget: f64,
    /// Time spent unemployed, capped at the horizon.
    pub spell: f64,
    pub accepted_wage: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HazardBin {
    pub z_lo: f64,
    pub z_hi: f64,
    pub events: u64,
    pub exposure: f64,
    pub hazard: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub n_agents: usize,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub antithetic: bool,
    pub welfare_mean: f64,
    pub welfare_se: f64,
    pub budget_mean: f64,
    pub budget_se: f64,
    pub acceptance_hazard_by_z_bin: Vec<HazardBin>,
}

pub const HAZARD_BINS: usize = 10;

/// Uniform draws for one agent; the antithetic twin reflects every draw.
struct Draws {
    rng: ChaCha8Rng,
    reflect: bool,
}

impl Draws {
    fn next(&mut self) -> f64 {
        let u: f64 = self.rng.random();
        if self.reflect {
            1.0 - u
        } else {
            u
        }
    }
}

fn simulate_agent<E: PanelEconomy + ?Sized>(
    econ: &E,
    prim: &Primitives,
    offer: &Distribution,
    prior: &Distribution,
    cfg: &SimConfig,
    draws: &mut Draws,
) -> AgentOutcome {
    let r = prim.r;
    let z = prior.sample(draws.next());
    let (w_res, lam) = (econ.reservation(z), econ.effort(z));
    let b = econ.benefit(z);
    let cost = econ.search_cost(lam);

    let mut accepted = None;
    if lam > 0.0 {
        let mut t = 0.0;
        'outer: while t < cfg.horizon {
            let step = cfg.dt.min(cfg.horizon - t);
            let mut used = 0.0;
            loop {
                let remaining = step - used;
                let u = draws.next();
                if u >= -(-lam * remaining).exp_m1() {
                    break;
                }
                used += -(-u).ln_1p() / lam;
                let w = offer.sample(draws.next());
                if w >= w_res {
                    accepted = Some((t + used.min(step), w));
                    break 'outer;
                }
            }
            t += step;
        }
    }

    let discount_end = (-r * cfg.horizon).exp();
    let (spell, welfare, budget) = match accepted {
        Some((ta, w)) => {
            let d = (-r * ta).exp();
            let unemployed = (1.0 - d) / r;
            let employed = (d - discount_end) / r;
            (
                ta,
                (b - cost) * unemployed + econ.consumption(w, z) * employed,
                -b * unemployed + econ.receipts(w, z) * employed,
            )
        }
        None => {
            let unemployed = (1.0 - discount_end) / r;
            (cfg.horizon, (b - cost) * unemployed, -b * unemployed)
        }
    };
    AgentOutcome {
        z,
        welfare,
        budget,
        spell,
        accepted_wage: accepted.map(|a| a.1),
    }
}

/// Simulates every agent; the output order is the agent index.
pub fn simulate_agents<E: PanelEconomy + ?Sized>(
    econ: &E,
    prim: &Primitives,
    offer: &Distribution,
    prior: &Distribution,
    cfg: &SimConfig,
) -> Result<Vec<AgentOutcome>> {
    cfg.validate(prim.r)?;
    Ok((0..cfg.n_agents)
        .into_par_iter()
        .map(|i| {
            let (stream, reflect) = if cfg.antithetic {
                ((i / 2) as u64, i % 2 == 1)
            } else {
                (i as u64, false)
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            let mut draws = Draws { rng, reflect };
            simulate_agent(econ, prim, offer, prior, cfg, &mut draws)
        })
        .collect())
}

/// Sum in a fixed binary tree, independent of thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Mean and standard error; antithetic samples are first averaged in pairs.
pub fn mean_se(xs: &[f64], antithetic: bool) -> (f64, f64) {
    let units: Vec<f64> = if antithetic {
        xs.chunks(2).map(|p| 0.5 * (p[0] + p[p.len() - 1])).collect()
    } else {
        xs.to_vec()
    };
    let n = units.len() as f64;
    let mean = pairwise_sum(&units) / n;
    let dev: Vec<f64> = units.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = if units.len() > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

pub fn summarize(agents: &[AgentOutcome], prior: &Distribution, cfg: &SimConfig) -> SimReport {
    let welfare: Vec<f64> = agents.iter().map(|a| a.welfare).collect();
    let budget: Vec<f64> = agents.iter().map(|a| a.budget).collect();
    let (welfare_mean, welfare_se) = mean_se(&welfare, cfg.antithetic);
    let (budget_mean, budget_se) = mean_se(&budget, cfg.antithetic);

    let (lo, hi) = (prior.lo(), prior.hi());
    let width = (hi - lo) / HAZARD_BINS as f64;
    let mut events = [0u64; HAZARD_BINS];
    let mut exposure = vec![Vec::new(); HAZARD_BINS];
    for a in agents {
        let k = (((a.z - lo) / width) as usize).min(HAZARD_BINS - 1);
        exposure[k].push(a.spell);
        if a.accepted_wage.is_some() {
            events[k] += 1;
        }
    }
    let bins = (0..HAZARD_BINS)
        .map(|k| {
            let exp = pairwise_sum(&exposure[k]);
            let ev = events[k] as f64;
            HazardBin {
                z_lo: lo + width * k as f64,
                z_hi: lo + width * (k + 1) as f64,
                events: events[k],
                exposure: exp,
                hazard: if exp > 0.0 { ev / exp } else { 0.0 },
                se: if exp > 0.0 { ev.sqrt() / exp } else { 0.0 },
            }
        })
        .collect();

    SimReport {
        n_agents: agents.len(),
        seed: cfg.seed,
        dt: cfg.dt,
        horizon: cfg.horizon,
        antithetic: cfg.antithetic,
        welfare_mean,
        welfare_se,
        budget_mean,
        budget_se,
        acceptance_hazard_by_z_bin: bins,
    }
}

pub fn simulate_panel<E: PanelEconomy + ?Sized>(
    econ: &E,
    prim: &Primitives,
    offer: &Distribution,
    prior: &Distribution,
    cfg: &SimConfig,
) -> Result<SimReport> {
    let agents = simulate_agents(econ, prim, offer, prior, cfg)?;
    Ok(summarize(&agents, prior, cfg))
}

/// Mean and standard error of the per-agent welfare difference `a - b`
/// between two runs that shared their random numbers.
pub fn paired_difference(a: &[AgentOutcome], b: &[AgentOutcome], antithetic: bool) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::invalid("agents", "paired runs differ in size"));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.welfare - y.welfare).collect();
    Ok(mean_se(&diff, antithetic))
}

pub fn write_trace_csv<W: std::io::Write>(agents: &[AgentOutcome], mut out: W) -> std::io::Result<()> {
    writeln!(out, "agent_id,z,spell_length,accepted_wage")?;
    for (i, a) in agents.iter().enumerate() {
        match a.accepted_wage {
            Some(w) => writeln!(out, "{i},{:.16e},{:.16e},{:.16e}", a.z, a.spell, w)?,
            None => writeln!(out, "{i},{:.16e},{:.16e},", a.z, a.spell)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed {
        lam: f64,
        b: f64,
    }

    impl PanelEconomy for Fixed {
        fn reservation(&self, _: f64) -> f64 {
            1.0
        }
        fn effort(&self, _: f64) -> f64 {
            self.lam
        }
        fn benefit(&self, _: f64) -> f64 {
            self.b
        }
        fn search_cost(&self, l: f64) -> f64 {
            0.5 * l * l
        }
        fn consumption(&self, w: f64, _: f64) -> f64 {
            w
        }
        fn receipts(&self, _: f64, _: f64) -> f64 {
            0.0
        }
    }

    fn dists() -> (Primitives, Distribution, Distribution) {
        (
            Primitives::endogenous(0.05, 1.0, 1.0).unwrap(),
            Distribution::uniform(0.0, 2.0).unwrap(),
            Distribution::uniform(0.5, 3.0).unwrap(),
        )
    }

    #[test]
    fn no_offers_is_deterministic() {
        let (prim, f, h) = dists();
        let cfg = SimConfig {
            n_agents: 10_000,
            ..SimConfig::default()
        };
        let rep = simulate_panel(&Fixed { lam: 0.0, b: 0.4 }, &prim, &f, &h, &cfg).unwrap();
        let want = 0.4 * (1.0 - (-0.05f64 * 600.0).exp()) / 0.05;
        assert!((rep.welfare_mean - want).abs() < 1e-12);
        assert!(rep.welfare_se < 1e-12);
    }

    #[test]
    fn constant_hazard_matches_exponential_spells() {
        let (prim, f, h) = dists();
        let cfg = SimConfig {
            n_agents: 20_000,
            dt: 0.05,
            ..SimConfig::default()
        };
        let agents = simulate_agents(&Fixed { lam: 1.0, b: 0.4 }, &prim, &f, &h, &cfg).unwrap();
        let rep = summarize(&agents, &h, &cfg);
        // Half of the offers are acceptable: hazard 0.5.
        for bin in &rep.acceptance_hazard_by_z_bin {
            assert!((bin.hazard - 0.5).abs() < 4.0 * bin.se, "{bin:?}");
        }
        // Welfare: u (b - ψ) + e E[w | w ≥ 1]/r with α = 0.5.
        let (alpha, r) = (0.5, 0.05);
        let want = (0.4 - 0.5) / (alpha + r) + alpha / (alpha + r) * 1.5 / r;
        assert!((rep.welfare_mean - want).abs() < 3.5 * rep.welfare_se);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (prim, f, h) = dists();
        let cfg = SimConfig {
            n_agents: 10_000,
            antithetic: true,
            seed: 7,
            ..SimConfig::default()
        };
        let a = simulate_panel(&Fixed { lam: 0.8, b: 0.4 }, &prim, &f, &h, &cfg).unwrap();
        let b = simulate_panel(&Fixed { lam: 0.8, b: 0.4 }, &prim, &f, &h, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.welfare_se > 0.0);
    }

    #[test]
    fn config_validation() {
        let r = 0.05;
        assert!(SimConfig { dt: 0.0, ..SimConfig::default() }.validate(r).is_err());
        assert!(SimConfig { horizon: 100.0, ..SimConfig::default() }.validate(r).is_err());
        assert!(SimConfig { n_agents: 999, ..SimConfig::default() }.validate(r).is_err());
        assert!(SimConfig::default().validate(r).is_ok());
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }
}
