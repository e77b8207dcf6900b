//! Per-seed simulation driver.
//!
//! Each step draws, in this order from one ChaCha8 stream seeded with
//! `config.seed`: the acting agent, its forecast noise, the permutation for
//! the mood pass, then one uniform per agent in permutation order. The
//! population itself is drawn from the same stream before step 1.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::agents::{
    buy_commitment, init_population, predict_price, predict_return, update_mood, Agent, AgentState,
    Mood, OrderRule, PopulationConfig, PriceView,
};
use crate::error::{ConfigError, DataError, MetricsError};
use crate::orderbook::{Book, Order, Side, Trade};

/// Inclusive range of steps during which orders may rest but never execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepWindow {
    pub start: u64,
    pub end: u64,
}

impl StepWindow {
    pub fn contains(&self, step: u64) -> bool {
        (self.start..=self.end).contains(&step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub t_sim: u64,
    pub no_exec_windows: Vec<StepWindow>,
    pub p0: f64,
    pub fundamental_price: f64,
    pub tick_size: f64,
    pub population: PopulationConfig,
    pub seed: u64,
    pub v_max: u64,
    pub sigma_sq_order: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            t_sim: 2110,
            no_exec_windows: vec![
                StepWindow { start: 1, end: 100 },
                StepWindow {
                    start: 1100,
                    end: 1110,
                },
            ],
            p0: 300.0,
            fundamental_price: 300.0,
            tick_size: 1e-4,
            population: PopulationConfig::default(),
            seed: 0,
            v_max: 50,
            sigma_sq_order: 1e-4,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.t_sim == 0 {
            return Err(ConfigError::invalid("t_sim must be positive"));
        }
        for (name, v) in [
            ("p0", self.p0),
            ("fundamental_price", self.fundamental_price),
            ("tick_size", self.tick_size),
            ("sigma_sq_order", self.sigma_sq_order),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.v_max == 0 {
            return Err(ConfigError::invalid("v_max must be positive"));
        }
        let mut windows = self.no_exec_windows.clone();
        windows.sort_by_key(|w| w.start);
        for w in &windows {
            if w.start < 1 || w.end > self.t_sim || w.start > w.end {
                return Err(ConfigError::invalid(format!(
                    "no-execution window [{}, {}] must lie within [1, {}]",
                    w.start, w.end, self.t_sim
                )));
            }
        }
        if windows.windows(2).any(|p| p[1].start <= p[0].end) {
            return Err(ConfigError::invalid("no-execution windows overlap"));
        }
        self.population.validate()
    }

    pub fn execution_enabled(&self, step: u64) -> bool {
        !self.no_exec_windows.iter().any(|w| w.contains(step))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TickEvent {
    OrderPlaced,
    TradeExecuted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub step: u64,
    pub event: TickEvent,
    pub market_price: f64,
    pub mid_price: f64,
    pub best_bid: Option<f64>,
    pub best_ask: Option<f64>,
    pub order_volume: u64,
    pub exec_volume: u64,
    pub n_optimists: usize,
}

pub const TICK_CSV_HEADER: [&str; 9] = [
    "step",
    "event",
    "market_price",
    "mid_price",
    "best_bid",
    "best_ask",
    "order_volume",
    "exec_volume",
    "n_optimists",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub ticks: Vec<TickRecord>,
    pub trades: Vec<Trade>,
    /// Fraction of optimists after each step's mood pass; length `t_sim`.
    pub optimists_rate: Vec<f64>,
    /// Mid price at the end of every step; length `t_sim`.
    pub mid_prices: Vec<f64>,
    pub final_states: Vec<AgentState>,
}

impl SimulationOutput {
    /// Mid price recorded with each trade, in trade order.
    pub fn trade_mid_prices(&self) -> Vec<f64> {
        self.ticks
            .iter()
            .filter(|t| t.event == TickEvent::TradeExecuted)
            .map(|t| t.mid_price)
            .collect()
    }

    pub fn write_ticks_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TICK_CSV_HEADER)?;
        let opt = |p: Option<f64>| p.map(|v| v.to_string()).unwrap_or_default();
        for t in &self.ticks {
            let event = match t.event {
                TickEvent::OrderPlaced => "order",
                TickEvent::TradeExecuted => "trade",
            };
            w.write_record([
                t.step.to_string(),
                event.to_string(),
                t.market_price.to_string(),
                t.mid_price.to_string(),
                opt(t.best_bid),
                opt(t.best_ask),
                t.order_volume.to_string(),
                t.exec_volume.to_string(),
                t.n_optimists.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_ticks_file(&self, path: &std::path::Path) -> Result<(), DataError> {
        let file = std::fs::File::create(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_ticks_csv(std::io::BufWriter::new(file))
            .map_err(|source| DataError::Csv {
                path: path.display().to_string(),
                source,
            })
    }
}

/// A running trial. [`run`] drives it to completion; tests and bindings can
/// step it manually to inspect intermediate state.
pub struct Simulation {
    config: SimulationConfig,
    rule: OrderRule,
    rng: ChaCha8Rng,
    agents: Vec<Agent>,
    book: Book,
    step: u64,
    next_order_id: u64,
    n_optimists: usize,
    /// Market price at the end of each step, index 0 holding `p0`.
    market_history: Vec<f64>,
    mood_order: Vec<usize>,
    output: SimulationOutput,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let agents = init_population(&config.population, config.tick_size, &mut rng);
        let n_optimists = agents
            .iter()
            .filter(|a| a.state.mood == Mood::Optimistic)
            .count();
        let rule = OrderRule {
            tick_size: config.tick_size,
            v_max: config.v_max,
            sigma_sq: config.sigma_sq_order,
        };
        let t_sim = config.t_sim as usize;
        let mut market_history = Vec::with_capacity(t_sim + 1);
        market_history.push(config.p0);
        Ok(Self {
            rule,
            rng,
            mood_order: (0..agents.len()).collect(),
            agents,
            book: Book::new(),
            step: 0,
            next_order_id: 0,
            n_optimists,
            market_history,
            output: SimulationOutput {
                ticks: Vec::new(),
                trades: Vec::new(),
                optimists_rate: Vec::with_capacity(t_sim),
                mid_prices: Vec::with_capacity(t_sim),
                final_states: Vec::new(),
            },
            config,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn book(&self) -> &Book {
        &self.book
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn n_optimists(&self) -> usize {
        self.n_optimists
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.t_sim
    }

    fn market_price(&self) -> f64 {
        *self.market_history.last().expect("history starts with p0")
    }

    /// Advances one step. Returns `false` once `t_sim` steps have run.
    pub fn step(&mut self) -> bool {
        if self.is_finished() {
            return false;
        }
        self.step += 1;
        let t = self.step;
        let tick = self.config.tick_size;
        let exec = self.config.execution_enabled(t);

        let j = self.rng.random_range(0..self.agents.len());
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let eps = z * self.config.population.sigma_n;

        let price = self.market_price();
        let order = {
            let agent = &self.agents[j];
            let lag_index = t.saturating_sub(agent.params.tau) as usize;
            let view = PriceView {
                price,
                fundamental: self.config.fundamental_price,
                lagged: self.market_history[lag_index.min(self.market_history.len() - 1)],
            };
            predict_return(&agent.params, agent.state.mood, view, eps).and_then(|r_hat| {
                let predicted = predict_price(price, agent.params.tau, r_hat);
                self.rule
                    .decide(j, &agent.params, &agent.state, price, predicted, t)
            })
        };

        let mut placed = None;
        let mut trades = Vec::new();
        if let Some(mut order) = order {
            order.order_id = self.next_order_id;
            self.next_order_id += 1;
            self.reserve(&order);
            placed = Some((order.volume, order.side, order.limit_price));
            trades = self
                .book
                .submit(order.clone(), exec)
                .expect("engine orders are valid and unique");
            for trade in &trades {
                let buy_limit = match order.side {
                    Side::Buy => order.limit_price,
                    Side::Sell => trade.price,
                };
                self.settle(trade, buy_limit);
            }
        }

        for expired in self.book.drain_expired(t) {
            self.release(&expired);
        }

        self.mood_pass();

        let mid = self.book.mid_price(tick, self.config.p0);
        let market = self
            .book
            .last_trade_price()
            .map_or(self.config.p0, |p| p.to_price(tick));
        let best_bid = self.book.best_bid().map(|p| p.to_price(tick));
        let best_ask = self.book.best_ask().map(|p| p.to_price(tick));
        if let Some((volume, _, _)) = placed {
            self.output.ticks.push(TickRecord {
                step: t,
                event: TickEvent::OrderPlaced,
                market_price: market,
                mid_price: mid,
                best_bid,
                best_ask,
                order_volume: volume,
                exec_volume: 0,
                n_optimists: self.n_optimists,
            });
        }
        for trade in &trades {
            self.output.ticks.push(TickRecord {
                step: t,
                event: TickEvent::TradeExecuted,
                market_price: trade.price.to_price(tick),
                mid_price: mid,
                best_bid,
                best_ask,
                order_volume: 0,
                exec_volume: trade.volume,
                n_optimists: self.n_optimists,
            });
        }
        self.output.trades.extend(trades);
        self.output
            .optimists_rate
            .push(self.n_optimists as f64 / self.agents.len() as f64);
        self.output.mid_prices.push(mid);
        self.market_history.push(market);
        true
    }

    fn reserve(&mut self, order: &Order) {
        let state = &mut self.agents[order.agent_id].state;
        match order.side {
            Side::Buy => state.reserved_cash += buy_commitment(order.limit_price, order.volume),
            Side::Sell => state.reserved_shares += order.volume,
        }
    }

    fn release(&mut self, order: &Order) {
        let state = &mut self.agents[order.agent_id].state;
        match order.side {
            Side::Buy => state.reserved_cash -= buy_commitment(order.limit_price, order.volume),
            Side::Sell => state.reserved_shares -= order.volume,
        }
    }

    fn settle(&mut self, trade: &Trade, buy_limit: crate::orderbook::Ticks) {
        let notional = buy_commitment(trade.price, trade.volume);
        let buyer = &mut self.agents[trade.buyer].state;
        buyer.reserved_cash -= buy_commitment(buy_limit, trade.volume);
        buyer.cash -= notional;
        buyer.shares += trade.volume;
        let seller = &mut self.agents[trade.seller].state;
        seller.reserved_shares -= trade.volume;
        seller.shares -= trade.volume;
        seller.cash += notional;
    }

    /// Sequential pass in random order; counts are updated after every flip.
    fn mood_pass(&mut self) {
        let nu = self.config.population.nu;
        let n = self.agents.len();
        self.mood_order.shuffle(&mut self.rng);
        for &i in &self.mood_order {
            let u: f64 = self.rng.random();
            let before = self.agents[i].state.mood;
            let after = update_mood(before, self.n_optimists, n - self.n_optimists, nu, u);
            if after != before {
                self.agents[i].state.mood = after;
                match after {
                    Mood::Optimistic => self.n_optimists += 1,
                    Mood::Pessimistic => self.n_optimists -= 1,
                }
            }
        }
    }

    pub fn finish(mut self) -> SimulationOutput {
        while self.step() {}
        self.output.final_states = self.agents.into_iter().map(|a| a.state).collect();
        self.output
    }
}

/// Runs one full trial; deterministic in `config` (including its seed).
pub fn run(config: &SimulationConfig) -> Result<SimulationOutput, ConfigError> {
    Ok(Simulation::new(config.clone())?.finish())
}

/// Range of a series, `max - min`.
pub fn daily_mood_change_rate(rates: &[f64]) -> Result<f64, MetricsError> {
    if rates.is_empty() {
        return Err(MetricsError::Degenerate("empty optimists-rate series"));
    }
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}
