//! Continuous double-auction limit order book.
//!
//! Prices are held as integer multiples of the tick size ([`Ticks`]) so that
//! level lookup and cash settlement are exact. Matching follows price-time
//! priority and trades print at the resting order's price.

use std::collections::{BTreeMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::BookError;

/// A price expressed as an integer number of ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Ticks(pub i64);

impl Ticks {
    pub fn to_price(self, tick_size: f64) -> f64 {
        units_to_price(self.0 as f64, tick_size)
    }
}

/// `units * tick_size`, computed as a division when the tick is the inverse
/// of an integer so that e.g. 860559 ticks of 1e-4 print as 86.0559.
fn units_to_price(units: f64, tick_size: f64) -> f64 {
    let inverse = (1.0 / tick_size).round();
    if inverse >= 1.0 && (inverse * tick_size - 1.0).abs() < 1e-12 {
        units / inverse
    } else {
        units * tick_size
    }
}

/// Slack (in ticks) for recognising half-tick ties that floating point
/// division smears by a few ulps, e.g. `300.00005 / 1e-4`.
const TIE_EPS: f64 = 1e-9;

/// Round `raw_price` to the nearest multiple of `tick_size`, ties away from zero.
pub fn align_to_tick(raw_price: f64, tick_size: f64) -> Result<Ticks, BookError> {
    if !raw_price.is_finite() {
        return Err(BookError::InvalidPrice(raw_price));
    }
    if !(tick_size.is_finite() && tick_size > 0.0) {
        return Err(BookError::InvalidTickSize(tick_size));
    }
    let scaled = raw_price / tick_size;
    if scaled.abs() >= i64::MAX as f64 {
        return Err(BookError::InvalidPrice(raw_price));
    }
    let magnitude = scaled.abs();
    let floor = magnitude.floor();
    let frac = magnitude - floor;
    let slack = TIE_EPS.max(magnitude * 4.0 * f64::EPSILON);
    let rounded = if frac + slack >= 0.5 {
        floor + 1.0
    } else {
        floor
    };
    Ok(Ticks((rounded as i64) * scaled.signum() as i64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: u64,
    pub agent_id: usize,
    pub side: Side,
    pub limit_price: Ticks,
    pub volume: u64,
    pub submitted_step: u64,
    pub expiry_step: u64,
}

impl Order {
    /// Checks the order invariants (positive volume and price, expiry after
    /// submission).
    pub fn validate(&self) -> Result<(), BookError> {
        if self.volume == 0 {
            return Err(BookError::InvalidOrder {
                order_id: self.order_id,
                reason: "volume must be at least 1",
            });
        }
        if self.limit_price.0 <= 0 {
            return Err(BookError::InvalidOrder {
                order_id: self.order_id,
                reason: "limit price must be positive",
            });
        }
        if self.expiry_step <= self.submitted_step {
            return Err(BookError::InvalidOrder {
                order_id: self.order_id,
                reason: "expiry step must follow the submission step",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub buy_order_id: u64,
    pub sell_order_id: u64,
    pub buyer: usize,
    pub seller: usize,
    pub price: Ticks,
    pub volume: u64,
    pub step: u64,
}

type Level = VecDeque<Order>;

/// Order book for a single instrument. `volume` on a resting order is the
/// remaining (unfilled) quantity.
#[derive(Debug, Clone, Default)]
pub struct Book {
    bids: BTreeMap<Ticks, Level>,
    asks: BTreeMap<Ticks, Level>,
    last_trade_price: Option<Ticks>,
    seen_ids: HashSet<u64>,
}

impl Book {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_bid(&self) -> Option<Ticks> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Ticks> {
        self.asks.keys().next().copied()
    }

    pub fn last_trade_price(&self) -> Option<Ticks> {
        self.last_trade_price
    }

    pub fn is_crossed(&self) -> bool {
        matches!((self.best_bid(), self.best_ask()), (Some(b), Some(a)) if b >= a)
    }

    /// Resting orders on one side, best price first, FIFO within a level.
    pub fn resting(&self, side: Side) -> Vec<&Order> {
        match side {
            Side::Buy => self.bids.values().rev().flatten().collect(),
            Side::Sell => self.asks.values().flatten().collect(),
        }
    }

    pub fn resting_volume(&self, side: Side) -> u64 {
        let levels = match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        };
        levels.values().flatten().map(|o| o.volume).sum()
    }

    pub fn len(&self) -> usize {
        self.bids
            .values()
            .chain(self.asks.values())
            .map(VecDeque::len)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    /// Submits `order`. With execution enabled it trades against the opposite
    /// side while prices cross; any remainder rests. With execution disabled
    /// the whole order rests and no trades are produced.
    pub fn submit(
        &mut self,
        order: Order,
        execution_enabled: bool,
    ) -> Result<Vec<Trade>, BookError> {
        order.validate()?;
        if !self.seen_ids.insert(order.order_id) {
            return Err(BookError::DuplicateOrderId(order.order_id));
        }
        let mut incoming = order;
        let mut trades = Vec::new();
        if execution_enabled {
            self.match_incoming(&mut incoming, &mut trades);
        }
        if incoming.volume > 0 {
            let levels = match incoming.side {
                Side::Buy => &mut self.bids,
                Side::Sell => &mut self.asks,
            };
            levels
                .entry(incoming.limit_price)
                .or_default()
                .push_back(incoming);
        }
        Ok(trades)
    }

    fn match_incoming(&mut self, incoming: &mut Order, trades: &mut Vec<Trade>) {
        while incoming.volume > 0 {
            let (levels, best) = match incoming.side {
                Side::Buy => {
                    let best = self.asks.keys().next().copied();
                    (&mut self.asks, best.filter(|p| *p <= incoming.limit_price))
                }
                Side::Sell => {
                    let best = self.bids.keys().next_back().copied();
                    (&mut self.bids, best.filter(|p| *p >= incoming.limit_price))
                }
            };
            let Some(price) = best else { break };
            let level = levels.get_mut(&price).expect("best level exists");
            let resting = level.front_mut().expect("levels are never left empty");
            let volume = resting.volume.min(incoming.volume);
            resting.volume -= volume;
            incoming.volume -= volume;
            let (buy, sell) = match incoming.side {
                Side::Buy => (&*incoming, &*resting),
                Side::Sell => (&*resting, &*incoming),
            };
            trades.push(Trade {
                buy_order_id: buy.order_id,
                sell_order_id: sell.order_id,
                buyer: buy.agent_id,
                seller: sell.agent_id,
                price,
                volume,
                step: incoming.submitted_step,
            });
            if resting.volume == 0 {
                level.pop_front();
                if level.is_empty() {
                    levels.remove(&price);
                }
            }
            self.last_trade_price = Some(price);
        }
    }

    /// Removes every resting order with `expiry_step <= step` and returns them.
    pub fn drain_expired(&mut self, step: u64) -> Vec<Order> {
        let mut removed = Vec::new();
        for levels in [&mut self.bids, &mut self.asks] {
            levels.retain(|_, level| {
                level.retain(|o| {
                    if o.expiry_step <= step {
                        removed.push(o.clone());
                        false
                    } else {
                        true
                    }
                });
                !level.is_empty()
            });
        }
        removed
    }

    /// Removes expired orders, returning how many left the book.
    pub fn expire(&mut self, step: u64) -> usize {
        self.drain_expired(step).len()
    }

    /// Midpoint of the best quotes, falling back to the last trade and then to
    /// `fallback`.
    pub fn mid_price(&self, tick_size: f64, fallback: f64) -> f64 {
        match (self.best_bid(), self.best_ask()) {
            (Some(b), Some(a)) => units_to_price((b.0 + a.0) as f64 * 0.5, tick_size),
            _ => self
                .last_trade_price
                .map_or(fallback, |p| p.to_price(tick_size)),
        }
    }
}
