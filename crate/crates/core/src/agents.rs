//! Extended FCN traders: fundamental, chartist, mood and noise components,
//! CARA order sizing and herd-style mood transitions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::orderbook::{align_to_tick, Order, Side, Ticks};

/// Base horizon scaled by `(1 + w_f) / (1 + w_c)` to get each agent's window.
pub const BASE_HORIZON: f64 = 100.0;
/// Mean-reversion horizon of the fundamental component.
pub const FUNDAMENTAL_HORIZON: u64 = 200;
/// Bound on `tau * r_hat` before exponentiation.
pub const MAX_LOG_MOVE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mood {
    Optimistic,
    Pessimistic,
}

impl Mood {
    pub fn sign(self) -> f64 {
        match self {
            Mood::Optimistic => 1.0,
            Mood::Pessimistic => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub w_f: f64,
    pub w_c: f64,
    pub w_m: f64,
    pub w_n: f64,
    /// Prediction horizon in steps; also the lifetime of the agent's orders.
    pub tau: u64,
    pub tau_f: u64,
    /// Risk aversion used in order sizing.
    pub alpha_j: f64,
}

impl AgentParams {
    /// Derives horizon and risk aversion from the weights and base risk
    /// aversion `alpha`.
    pub fn new(w_f: f64, w_c: f64, w_m: f64, w_n: f64, alpha: f64) -> Self {
        let ratio = (1.0 + w_f) / (1.0 + w_c);
        // round-half-up, floored at one step
        let tau = ((BASE_HORIZON * ratio + 0.5).floor() as u64).max(1);
        Self {
            w_f,
            w_c,
            w_m,
            w_n,
            tau,
            tau_f: FUNDAMENTAL_HORIZON,
            alpha_j: alpha * ratio,
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.w_f + self.w_c + self.w_m + self.w_n
    }
}

/// Holdings and mood of one agent. Cash is kept in integer units of
/// `tick_size` currency so that settlement is exact; `reserved_*` tracks what
/// is committed to the agent's resting orders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub cash: i128,
    pub shares: u64,
    pub mood: Mood,
    pub reserved_cash: i128,
    pub reserved_shares: u64,
}

impl AgentState {
    pub fn new(cash: i128, shares: u64, mood: Mood) -> Self {
        Self {
            cash,
            shares,
            mood,
            reserved_cash: 0,
            reserved_shares: 0,
        }
    }

    pub fn free_cash(&self) -> i128 {
        self.cash - self.reserved_cash
    }

    pub fn free_shares(&self) -> u64 {
        self.shares - self.reserved_shares
    }

    pub fn cash_value(&self, tick_size: f64) -> f64 {
        self.cash as f64 * tick_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum CashDistribution {
    Uniform { c_max: f64 },
    Pareto { c_min: f64, beta: f64 },
}

impl CashDistribution {
    pub fn is_pareto(&self) -> bool {
        matches!(self, CashDistribution::Pareto { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CashDistribution::Uniform { c_max } => rng.random::<f64>() * c_max,
            CashDistribution::Pareto { c_min, beta } => {
                let u = open_unit(rng);
                sample_pareto(c_min, beta, u)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub n_agents: usize,
    pub lambda_f: f64,
    pub lambda_c: f64,
    pub lambda_m: f64,
    pub lambda_n: f64,
    pub sigma_n: f64,
    pub nu: f64,
    pub alpha: f64,
    pub cash_dist: CashDistribution,
    pub w_max: u64,
    pub p_optimist_init: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n_agents: 200,
            lambda_f: 10.0,
            lambda_c: 0.0,
            lambda_m: 0.0,
            lambda_n: 1.0,
            sigma_n: 0.01,
            nu: 0.0,
            alpha: 0.3,
            cash_dist: CashDistribution::Uniform { c_max: 30_000.0 },
            w_max: 50,
            p_optimist_init: 0.5,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_agents == 0 {
            return Err(ConfigError::invalid("population.n_agents must be positive"));
        }
        for (name, v) in [
            ("lambda_f", self.lambda_f),
            ("lambda_c", self.lambda_c),
            ("lambda_m", self.lambda_m),
            ("lambda_n", self.lambda_n),
            ("sigma_n", self.sigma_n),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::invalid(format!(
                    "population.{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(ConfigError::invalid("population.alpha must be positive"));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(ConfigError::invalid("population.nu must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.p_optimist_init) {
            return Err(ConfigError::invalid(
                "population.p_optimist_init must lie in [0, 1]",
            ));
        }
        if self.w_max == 0 {
            return Err(ConfigError::invalid("population.w_max must be positive"));
        }
        match self.cash_dist {
            CashDistribution::Uniform { c_max } if !(c_max.is_finite() && c_max > 0.0) => {
                Err(ConfigError::invalid("cash_dist.c_max must be positive"))
            }
            CashDistribution::Pareto { c_min, beta }
                if !(c_min.is_finite() && c_min > 0.0 && beta.is_finite() && beta > 0.0) =>
            {
                Err(ConfigError::invalid(
                    "cash_dist.c_min and cash_dist.beta must be positive",
                ))
            }
            _ => Ok(()),
        }
    }
}

/// A uniform draw from the open interval (0, 1); zero is redrawn.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Inverse-CDF Pareto draw `c_min * u^(-1/beta)`.
///
/// `u` must lie strictly inside (0, 1); callers obtain it from [`open_unit`].
pub fn sample_pareto(c_min: f64, beta: f64, u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0 + f64::EPSILON, "u must be in (0, 1]");
    let x = c_min * u.powf(-1.0 / beta);
    // Underflow near u -> 1 must never report less than the scale.
    x.max(c_min)
}

/// Exponential with the given mean by inversion, so every call consumes one
/// uniform whatever the mean; a mean of zero yields zero.
fn exp_with_mean<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    let u = open_unit(rng);
    if mean == 0.0 {
        return 0.0;
    }
    -mean * u.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub params: AgentParams,
    pub state: AgentState,
}

/// Draws a heterogeneous population. Per agent, draws are consumed in the
/// order w_f, w_c, w_m, w_n, cash, shares, mood.
pub fn init_population<R: Rng + ?Sized>(
    config: &PopulationConfig,
    tick_size: f64,
    rng: &mut R,
) -> Vec<Agent> {
    (0..config.n_agents)
        .map(|_| {
            let w_f = exp_with_mean(config.lambda_f, rng);
            let w_c = exp_with_mean(config.lambda_c, rng);
            let w_m = exp_with_mean(config.lambda_m, rng);
            let w_n = exp_with_mean(config.lambda_n, rng);
            let cash = config.cash_dist.sample(rng);
            let shares = rng.random_range(0..=config.w_max);
            let mood = if rng.random::<f64>() < config.p_optimist_init {
                Mood::Optimistic
            } else {
                Mood::Pessimistic
            };
            let cash_units = (cash / tick_size).floor().min(i128::MAX as f64 / 4.0) as i128;
            Agent {
                params: AgentParams::new(w_f, w_c, w_m, w_n, config.alpha),
                state: AgentState::new(cash_units, shares, mood),
            }
        })
        .collect()
}

/// Market inputs for one return forecast.
#[derive(Debug, Clone, Copy)]
pub struct PriceView {
    pub price: f64,
    pub fundamental: f64,
    /// Market price one horizon ago.
    pub lagged: f64,
}

/// Weighted return forecast; `None` when every weight is zero.
pub fn predict_return(
    params: &AgentParams,
    mood: Mood,
    prices: PriceView,
    eps: f64,
) -> Option<f64> {
    let total = params.weight_sum();
    if total <= 0.0 {
        return None;
    }
    let fundamental = params.w_f / params.tau_f as f64 * (prices.fundamental / prices.price).ln();
    let chartist = params.w_c / params.tau as f64 * (prices.price / prices.lagged).ln();
    let herd = params.w_m * mood.sign();
    let noise = params.w_n * eps;
    Some((fundamental + chartist + herd + noise) / total)
}

/// `p_t * exp(tau * r_hat)` with the exponent clamped to `±MAX_LOG_MOVE`.
pub fn predict_price(price: f64, tau: u64, r_hat: f64) -> f64 {
    price
        * (tau as f64 * r_hat)
            .clamp(-MAX_LOG_MOVE, MAX_LOG_MOVE)
            .exp()
}

/// Constants of the CARA order rule.
#[derive(Debug, Clone, Copy)]
pub struct OrderRule {
    pub tick_size: f64,
    pub v_max: u64,
    pub sigma_sq: f64,
}

impl OrderRule {
    /// Myopic CARA demand `ln(p_hat/p) / (alpha_j * sigma^2 * p)`.
    pub fn desired_holding(&self, params: &AgentParams, price: f64, predicted: f64) -> f64 {
        (predicted / price).ln() / (params.alpha_j * self.sigma_sq * price)
    }

    /// Trades toward the CARA holding at the predicted price, capped by
    /// `v_max` and by unreserved cash or shares.
    pub fn decide(
        &self,
        agent_id: usize,
        params: &AgentParams,
        state: &AgentState,
        price: f64,
        predicted: f64,
        step: u64,
    ) -> Option<Order> {
        let desired = self.desired_holding(params, price, predicted);
        if !desired.is_finite() {
            return None;
        }
        let target = desired.round().clamp(i64::MIN as f64, i64::MAX as f64) as i128;
        let delta = target - state.shares as i128;
        let limit = align_to_tick(predicted, self.tick_size).ok()?;
        if limit.0 <= 0 {
            return None;
        }
        let (side, volume) = if delta > 0 {
            let affordable = (state.free_cash().max(0) / limit.0 as i128) as u128;
            let v = (delta as u128).min(self.v_max as u128).min(affordable);
            (Side::Buy, v as u64)
        } else if delta < 0 {
            let v = ((-delta) as u128)
                .min(self.v_max as u128)
                .min(state.free_shares() as u128);
            (Side::Sell, v as u64)
        } else {
            return None;
        };
        if volume == 0 {
            return None;
        }
        Some(Order {
            order_id: 0,
            agent_id,
            side,
            limit_price: limit,
            volume,
            submitted_step: step,
            expiry_step: step + params.tau,
        })
    }
}

/// Cash (in tick units) a buy order commits at its limit price.
pub fn buy_commitment(limit: Ticks, volume: u64) -> i128 {
    limit.0 as i128 * volume as i128
}

/// Herd transition: a pessimist turns optimistic with probability
/// `nu * n_opt / n_total`, an optimist turns pessimistic with probability
/// `nu * n_pes / n_total`. `u` is a uniform draw in [0, 1).
pub fn update_mood(mood: Mood, n_opt: usize, n_pes: usize, nu: f64, u: f64) -> Mood {
    let n_total = (n_opt + n_pes) as f64;
    match mood {
        Mood::Pessimistic if u < nu * n_opt as f64 / n_total => Mood::Optimistic,
        Mood::Optimistic if u < nu * n_pes as f64 / n_total => Mood::Pessimistic,
        m => m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TICK: f64 = 1e-4;

    fn params(w_f: f64, w_c: f64, w_m: f64, w_n: f64) -> AgentParams {
        AgentParams::new(w_f, w_c, w_m, w_n, 0.1)
    }

    fn at(price: f64, fundamental: f64, lagged: f64) -> PriceView {
        PriceView {
            price,
            fundamental,
            lagged,
        }
    }

    #[test]
    fn horizon_and_risk_aversion() {
        let p = AgentParams::new(10.0, 0.0, 0.0, 1.0, 0.3);
        assert_eq!(p.tau, 1100);
        assert!((p.alpha_j - 3.3).abs() < 1e-12);
        // 100 * 1.005 / 2 = 50.25 -> 50; 100 * 1.01 / 2 = 50.5 -> 51
        assert_eq!(AgentParams::new(0.005, 1.0, 0.0, 0.0, 1.0).tau, 50);
        assert_eq!(AgentParams::new(0.01, 1.0, 0.0, 0.0, 1.0).tau, 51);
        assert_eq!(AgentParams::new(0.0, 1e6, 0.0, 0.0, 1.0).tau, 1);
    }

    #[test]
    fn pure_fundamentalist_at_fundamental() {
        let r = predict_return(
            &params(3.0, 0.0, 0.0, 0.0),
            Mood::Optimistic,
            at(300.0, 300.0, 280.0),
            0.5,
        );
        assert_eq!(r, Some(0.0));
    }

    #[test]
    fn pure_fundamentalist_closed_form() {
        let r = predict_return(
            &params(1.0, 0.0, 0.0, 0.0),
            Mood::Pessimistic,
            at(270.0, 300.0, 270.0),
            0.0,
        )
        .unwrap();
        let expected = (300.0f64 / 270.0).ln() / 200.0;
        assert!((r - expected).abs() < 1e-15);
        assert!((r - 5.268e-4).abs() < 1e-6);
    }

    #[test]
    fn pure_mood_trader() {
        let p = params(0.0, 0.0, 2.0, 0.0);
        let view = at(310.0, 300.0, 290.0);
        assert_eq!(predict_return(&p, Mood::Optimistic, view, 0.3), Some(1.0));
        assert_eq!(predict_return(&p, Mood::Pessimistic, view, 0.3), Some(-1.0));
    }

    #[test]
    fn zero_weights_abstain() {
        assert_eq!(
            predict_return(
                &params(0.0, 0.0, 0.0, 0.0),
                Mood::Optimistic,
                at(1.0, 1.0, 1.0),
                0.0
            ),
            None
        );
    }

    #[test]
    fn predict_price_examples() {
        assert_eq!(predict_price(300.0, 100, 0.0), 300.0);
        assert!((predict_price(300.0, 100, 0.001) - 300.0 * 0.1f64.exp()).abs() < 1e-9);
        assert!((predict_price(300.0, 100, 0.001) - 331.55).abs() < 0.01);
        assert!(predict_price(300.0, 100, -0.001) < 300.0);
        assert_eq!(predict_price(1.0, 1000, 1.0), 10f64.exp());
    }

    fn rule() -> OrderRule {
        OrderRule {
            tick_size: TICK,
            v_max: 50,
            sigma_sq: 1e-4,
        }
    }

    #[test]
    fn no_edge_no_inventory_no_order() {
        let state = AgentState::new(10_000_000, 0, Mood::Optimistic);
        assert!(rule()
            .decide(0, &params(1.0, 0.0, 0.0, 0.0), &state, 300.0, 300.0, 5)
            .is_none());
    }

    #[test]
    fn positive_edge_buys_at_tick_aligned_prediction() {
        let state = AgentState::new(1_000_000_000, 0, Mood::Optimistic);
        let p = params(1.0, 0.0, 0.0, 0.0);
        let o = rule().decide(3, &p, &state, 300.0, 303.123456, 7).unwrap();
        assert_eq!(o.side, Side::Buy);
        assert_eq!(o.agent_id, 3);
        assert_eq!(o.limit_price, Ticks(3_031_235));
        assert!(o.volume >= 1);
        assert_eq!(o.expiry_step, 7 + p.tau);
    }

    #[test]
    fn desired_holding_closed_form_and_cap() {
        let mut p = params(1.0, 0.0, 0.0, 0.0);
        p.alpha_j = 0.1;
        let d = rule().desired_holding(&p, 300.0, 303.0);
        let expected = 1.01f64.ln() / (0.1 * 1e-4 * 300.0);
        assert!((d - expected).abs() < 1e-12);
        assert!((d - 3.3168).abs() < 1e-4);
        let state = AgentState::new(i128::from(u32::MAX) * 1000, 0, Mood::Optimistic);
        let o = rule().decide(0, &p, &state, 300.0, 303.0, 0).unwrap();
        assert_eq!(o.volume, 3);
        // a larger edge hits the per-order cap
        let o = rule().decide(0, &p, &state, 300.0, 400.0, 0).unwrap();
        assert_eq!(o.volume, 50);
    }

    #[test]
    fn buy_volume_limited_by_free_cash() {
        let p = params(1.0, 0.0, 0.0, 0.0);
        // 700 currency units of free cash at a limit of 303 -> 2 shares
        let mut state = AgentState::new(1_000 * 10_000, 0, Mood::Optimistic);
        state.reserved_cash = 300 * 10_000;
        let o = rule().decide(0, &p, &state, 300.0, 303.0, 0).unwrap();
        assert_eq!(o.volume, 2);
    }

    #[test]
    fn sell_volume_limited_by_free_shares() {
        let p = params(1.0, 0.0, 0.0, 0.0);
        let mut state = AgentState::new(0, 10, Mood::Optimistic);
        state.reserved_shares = 7;
        let o = rule().decide(0, &p, &state, 300.0, 290.0, 0).unwrap();
        assert_eq!(o.side, Side::Sell);
        assert_eq!(o.volume, 3);
        state.reserved_shares = 10;
        assert!(rule().decide(0, &p, &state, 300.0, 290.0, 0).is_none());
    }

    #[test]
    fn mood_absorbing_states() {
        for u in [0.0, 0.3, 0.99] {
            assert_eq!(
                update_mood(Mood::Optimistic, 200, 0, 0.7, u),
                Mood::Optimistic
            );
            assert_eq!(
                update_mood(Mood::Pessimistic, 0, 200, 0.7, u),
                Mood::Pessimistic
            );
            assert_eq!(
                update_mood(Mood::Pessimistic, 150, 50, 0.0, u),
                Mood::Pessimistic
            );
        }
    }

    #[test]
    fn mood_flip_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let trials = 100_000;
        let flips = (0..trials)
            .filter(|_| {
                update_mood(Mood::Pessimistic, 150, 50, 0.5, rng.random()) == Mood::Optimistic
            })
            .count();
        let freq = flips as f64 / trials as f64;
        assert!((freq - 0.375).abs() < 0.005, "{freq}");
    }

    #[test]
    fn pareto_lower_bound() {
        assert_eq!(sample_pareto(5000.0, 1.5, 1.0), 5000.0);
        assert!((sample_pareto(5000.0, 1.5, 1.0 - 1e-12) - 5000.0).abs() < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            assert!(sample_pareto(5000.0, 1.5, open_unit(&mut rng)) >= 5000.0);
        }
    }

    #[test]
    fn pareto_ks_against_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| sample_pareto(5000.0, 1.5, open_unit(&mut rng)))
            .collect();
        xs.sort_by(f64::total_cmp);
        let cdf = |x: f64| 1.0 - (5000.0 / x).powf(1.5);
        let gap = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n as f64)
                    .abs()
                    .max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(gap < 0.01, "KS gap {gap}");
    }

    #[test]
    fn population_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let config = PopulationConfig {
            n_agents: 100_000,
            ..PopulationConfig::default()
        };
        let agents = init_population(&config, TICK, &mut rng);
        let mean_wf = agents.iter().map(|a| a.params.w_f).sum::<f64>() / agents.len() as f64;
        assert!((mean_wf - 10.0).abs() < 0.2, "{mean_wf}");
        let optimists = agents
            .iter()
            .filter(|a| a.state.mood == Mood::Optimistic)
            .count();
        assert!((optimists as f64 / agents.len() as f64 - 0.5).abs() < 0.01);
        assert!(agents
            .iter()
            .all(|a| a.params.w_m == 0.0 && a.params.w_c == 0.0));
        assert!(agents.iter().all(|a| a.state.shares <= 50));
        assert!(agents.iter().all(|a| a.params.tau >= 1));
    }

    #[test]
    fn config_validation() {
        let mut c = PopulationConfig::default();
        assert!(c.validate().is_ok());
        c.nu = 1.5;
        assert!(c.validate().is_err());
        c.nu = 0.5;
        c.cash_dist = CashDistribution::Pareto {
            c_min: 0.0,
            beta: 1.5,
        };
        assert!(c.validate().is_err());
    }
}
