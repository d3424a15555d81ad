//! Independent checks on the analytic solution: value iteration on a
//! discretized problem and a Monte Carlo panel of workers.

pub mod sim;
pub mod vi;

pub use sim::{simulate_panel, PanelEconomy, SimConfig, SimReport, TabulatedEconomy};
pub use vi::{vi_reservation, ViOptions, ViResult};
