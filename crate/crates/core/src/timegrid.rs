//! Calendar-time assignment: event-time simulation output is resampled onto
//! a one-minute grid so that its cumulative transaction path follows a
//! reference day's path.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::engine::SimulationOutput;
use crate::error::{DataError, TimegridError};

pub const MINUTES_PER_DAY: usize = 300;

/// Cumulative fraction of a day's transactions completed by each minute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionPath {
    fractions: Vec<f64>,
}

impl TransactionPath {
    pub fn new(fractions: Vec<f64>) -> Result<Self, TimegridError> {
        if fractions.len() != MINUTES_PER_DAY {
            return Err(TimegridError::WrongLength {
                expected: MINUTES_PER_DAY,
                got: fractions.len(),
            });
        }
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(TimegridError::InvalidPath("fractions must lie in [0, 1]"));
        }
        if fractions.windows(2).any(|w| w[1] < w[0]) {
            return Err(TimegridError::InvalidPath(
                "fractions must be nondecreasing",
            ));
        }
        if fractions[MINUTES_PER_DAY - 1] != 1.0 {
            return Err(TimegridError::InvalidPath(
                "final fraction must be exactly 1",
            ));
        }
        Ok(Self { fractions })
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }
}

/// Prefix sums of per-minute counts divided by the day's total.
pub fn scaled_path_from_counts(counts: &[u64]) -> Result<TransactionPath, TimegridError> {
    if counts.len() != MINUTES_PER_DAY {
        return Err(TimegridError::WrongLength {
            expected: MINUTES_PER_DAY,
            got: counts.len(),
        });
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(TimegridError::DegenerateDay);
    }
    let mut acc = 0u64;
    let fractions = counts
        .iter()
        .map(|&c| {
            acc += c;
            acc as f64 / total as f64
        })
        .collect();
    TransactionPath::new(fractions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarSeries {
    pub day_id: String,
    pub mid_prices: Vec<f64>,
    /// Executed volume attributed to each minute; empty when unknown
    /// (e.g. bars read back from CSV).
    pub volumes: Vec<f64>,
}

impl BarSeries {
    pub fn new(
        day_id: impl Into<String>,
        mid_prices: Vec<f64>,
        volumes: Vec<f64>,
    ) -> Result<Self, TimegridError> {
        if mid_prices.len() != MINUTES_PER_DAY {
            return Err(TimegridError::WrongLength {
                expected: MINUTES_PER_DAY,
                got: mid_prices.len(),
            });
        }
        if mid_prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(TimegridError::InvalidBars(
                "prices must be positive and finite",
            ));
        }
        if !volumes.is_empty() && volumes.len() != MINUTES_PER_DAY {
            return Err(TimegridError::InvalidBars(
                "volume series length must match prices",
            ));
        }
        Ok(Self {
            day_id: day_id.into(),
            mid_prices,
            volumes,
        })
    }
}

/// Trade count reached by minute `m`: `fraction * total`, rounded half up.
pub fn target_trade_index(fraction: f64, total: usize) -> usize {
    // slack absorbs representation error such as 0.35 * 10 = 3.4999999999999996
    ((fraction * total as f64 + 0.5 + 1e-9).floor() as usize).min(total)
}

/// Bar `m` takes the mid price recorded with trade number `i_m` (1-based);
/// `i_m = 0` gives `p0`. Volumes sum the trades falling in each minute.
pub fn assign_calendar_time(
    sim: &SimulationOutput,
    path: &TransactionPath,
    p0: f64,
    day_id: impl Into<String>,
) -> Result<BarSeries, TimegridError> {
    let mids = sim.trade_mid_prices();
    let volumes: Vec<u64> = sim.trades.iter().map(|t| t.volume).collect();
    resample_trades(&mids, &volumes, path, p0, day_id)
}

/// [`assign_calendar_time`] on raw per-trade mid prices and volumes.
pub fn resample_trades(
    trade_mids: &[f64],
    trade_volumes: &[u64],
    path: &TransactionPath,
    p0: f64,
    day_id: impl Into<String>,
) -> Result<BarSeries, TimegridError> {
    let total = trade_mids.len();
    if total == 0 {
        return Err(TimegridError::DegenerateTrial);
    }
    let mut prices = Vec::with_capacity(MINUTES_PER_DAY);
    let mut volumes = Vec::with_capacity(MINUTES_PER_DAY);
    let mut prev = 0usize;
    for &f in path.fractions() {
        let idx = target_trade_index(f, total).max(prev);
        prices.push(if idx == 0 { p0 } else { trade_mids[idx - 1] });
        volumes.push(trade_volumes[prev..idx].iter().sum::<u64>() as f64);
        prev = idx;
    }
    BarSeries::new(day_id, prices, volumes)
}

/// Indices `i_m` chosen for each minute, exposed for inspection.
pub fn bar_trade_indices(path: &TransactionPath, total: usize) -> Vec<usize> {
    let mut prev = 0;
    path.fractions()
        .iter()
        .map(|&f| {
            prev = target_trade_index(f, total).max(prev);
            prev
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathShape {
    Uniform,
    /// Intensity `1 + 3 (2x - 1)^2` over the day, `x` in [0, 1].
    UShape,
}

/// Expected transactions per synthetic day.
pub const SYNTHETIC_DAY_TRANSACTIONS: f64 = 20_000.0;

/// Poisson per-minute counts around a deterministic intraday intensity.
pub fn synthetic_reference_path<R: Rng + ?Sized>(rng: &mut R, shape: PathShape) -> TransactionPath {
    let intensity = |m: usize| {
        let x = (m as f64 + 0.5) / MINUTES_PER_DAY as f64;
        match shape {
            PathShape::Uniform => 1.0,
            PathShape::UShape => 1.0 + 3.0 * (2.0 * x - 1.0).powi(2),
        }
    };
    let norm: f64 = (0..MINUTES_PER_DAY).map(intensity).sum();
    loop {
        let counts: Vec<u64> = (0..MINUTES_PER_DAY)
            .map(|m| {
                let mean = SYNTHETIC_DAY_TRANSACTIONS * intensity(m) / norm;
                Poisson::new(mean).expect("positive mean").sample(rng) as u64
            })
            .collect();
        if let Ok(path) = scaled_path_from_counts(&counts) {
            return path;
        }
    }
}

/// `ln(p_{m+1} / p_m)` for consecutive bars.
pub fn log_returns(bars: &BarSeries) -> Vec<f64> {
    bars.mid_prices
        .windows(2)
        .map(|w| (w[1] / w[0]).ln())
        .collect()
}

fn data_io(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &str, row: usize, column: usize, message: impl Into<String>) -> DataError {
    DataError::Malformed {
        path: path.to_string(),
        row,
        column,
        message: message.into(),
    }
}

fn csv_records<R: Read>(reader: R, label: &str) -> Result<Vec<csv::StringRecord>, DataError> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| DataError::Csv {
            path: label.to_string(),
            source,
        })
}

/// Reads per-minute transaction counts, one day per row with 300 integer
/// columns. A non-numeric first row is treated as a header.
pub fn read_count_paths<R: Read>(
    reader: R,
    label: &str,
) -> Result<Vec<TransactionPath>, DataError> {
    let records = csv_records(reader, label)?;
    let mut paths = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let row = i + 1;
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<u64>().is_err()) {
            continue;
        }
        if rec.len() != MINUTES_PER_DAY {
            return Err(malformed(
                label,
                row,
                rec.len().min(MINUTES_PER_DAY) + 1,
                format!("expected {MINUTES_PER_DAY} columns, found {}", rec.len()),
            ));
        }
        let counts = rec
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<u64>()
                    .map_err(|e| malformed(label, row, c + 1, format!("{f:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let path = scaled_path_from_counts(&counts)
            .map_err(|e| malformed(label, row, 1, e.to_string()))?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn read_count_paths_file(path: &Path) -> Result<Vec<TransactionPath>, DataError> {
    let file = std::fs::File::open(path).map_err(|e| data_io(path, e))?;
    read_count_paths(file, &path.display().to_string())
}

pub fn bars_csv_header() -> Vec<String> {
    std::iter::once("day_id".to_string())
        .chain((1..=MINUTES_PER_DAY).map(|m| format!("m{m}")))
        .collect()
}

/// Writes bars as `day_id` followed by 300 price columns, with a header row.
pub fn write_bars_csv<W: Write>(bars: &[BarSeries], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(bars_csv_header())?;
    for b in bars {
        let row =
            std::iter::once(b.day_id.clone()).chain(b.mid_prices.iter().map(|p| p.to_string()));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bars_file(bars: &[BarSeries], path: &Path) -> Result<(), DataError> {
    let file = std::fs::File::create(path).map_err(|e| data_io(path, e))?;
    write_bars_csv(bars, std::io::BufWriter::new(file)).map_err(|source| DataError::Csv {
        path: path.display().to_string(),
        source,
    })
}

/// Per-minute executed volumes in the same layout as the bars file.
pub fn write_volumes_csv<W: Write>(bars: &[BarSeries], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(bars_csv_header())?;
    for b in bars {
        let row = std::iter::once(b.day_id.clone()).chain(b.volumes.iter().map(|v| v.to_string()));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_wide_rows<R: Read>(reader: R, label: &str) -> Result<Vec<(String, Vec<f64>)>, DataError> {
    let records = csv_records(reader, label)?;
    let mut rows = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let row = i + 1;
        if i == 0 && rec.get(0) == Some("day_id") {
            continue;
        }
        if rec.len() != MINUTES_PER_DAY + 1 {
            return Err(malformed(
                label,
                row,
                rec.len().min(MINUTES_PER_DAY + 1) + 1,
                format!(
                    "expected day_id plus {MINUTES_PER_DAY} columns, found {} fields",
                    rec.len()
                ),
            ));
        }
        let values = rec
            .iter()
            .enumerate()
            .skip(1)
            .map(|(c, f)| {
                f.parse::<f64>()
                    .map_err(|e| malformed(label, row, c + 1, format!("{f:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((rec[0].to_string(), values));
    }
    Ok(rows)
}

pub fn read_bars<R: Read>(reader: R, label: &str) -> Result<Vec<BarSeries>, DataError> {
    read_wide_rows(reader, label)?
        .into_iter()
        .enumerate()
        .map(|(i, (day, prices))| {
            BarSeries::new(day, prices, Vec::new())
                .map_err(|e| malformed(label, i + 1, 2, e.to_string()))
        })
        .collect()
}

pub fn read_bars_file(path: &Path) -> Result<Vec<BarSeries>, DataError> {
    let file = std::fs::File::open(path).map_err(|e| data_io(path, e))?;
    read_bars(file, &path.display().to_string())
}

/// Reads a volumes file written by [`write_volumes_csv`], keyed by day id.
pub fn read_volumes_file(path: &Path) -> Result<Vec<(String, Vec<f64>)>, DataError> {
    let file = std::fs::File::open(path).map_err(|e| data_io(path, e))?;
    read_wide_rows(file, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_counts_give_linear_path() {
        let p = scaled_path_from_counts(&[1; 300]).unwrap();
        for (m, f) in p.fractions().iter().enumerate() {
            assert!((f - (m + 1) as f64 / 300.0).abs() < 1e-15);
        }
        assert_eq!(p.fractions()[299], 1.0);
    }

    #[test]
    fn front_loaded_counts_give_step_path() {
        let mut counts = vec![0; 300];
        counts[0] = 17;
        let p = scaled_path_from_counts(&counts).unwrap();
        assert!(p.fractions().iter().all(|&f| f == 1.0));
    }

    #[test]
    fn degenerate_days_rejected() {
        assert!(matches!(
            scaled_path_from_counts(&[0; 300]),
            Err(TimegridError::DegenerateDay)
        ));
        assert!(matches!(
            scaled_path_from_counts(&[1; 299]),
            Err(TimegridError::WrongLength { .. })
        ));
        let mut bad = vec![0.5; 300];
        bad[10] = 0.4;
        bad[299] = 1.0;
        assert!(TransactionPath::new(bad).is_err());
    }

    #[test]
    fn leading_zero_fractions_carry_p0() {
        let mut counts = vec![1; 300];
        for c in counts.iter_mut().take(5) {
            *c = 0;
        }
        let path = scaled_path_from_counts(&counts).unwrap();
        let mids: Vec<f64> = (1..=50).map(|i| 300.0 + i as f64).collect();
        let bars = resample_trades(&mids, &[1; 50], &path, 300.0, "d").unwrap();
        assert!(bars.mid_prices[..5].iter().all(|&p| p == 300.0));
        // cumulative share k/295 reaches half a trade (of 50) at k = 3
        assert_eq!(&bars.mid_prices[5..7], &[300.0, 300.0]);
        assert_eq!(bars.mid_prices[7], 301.0);
        assert_eq!(bars.volumes.iter().sum::<f64>(), 50.0);
    }

    #[test]
    fn zero_trades_is_degenerate() {
        let path = scaled_path_from_counts(&[1; 300]).unwrap();
        assert!(matches!(
            resample_trades(&[], &[], &path, 300.0, "d"),
            Err(TimegridError::DegenerateTrial)
        ));
    }

    #[test]
    fn log_return_examples() {
        let flat = BarSeries::new("d", vec![250.0; 300], vec![]).unwrap();
        let r = log_returns(&flat);
        assert_eq!(r.len(), 299);
        assert!(r.iter().all(|&x| x == 0.0));
        let mut prices = vec![100.0; 300];
        prices[1] = 110.0;
        let r = log_returns(&BarSeries::new("d", prices, vec![]).unwrap());
        assert!((r[0] - 0.09531).abs() < 1e-5);
    }

    #[test]
    fn synthetic_paths_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for shape in [PathShape::Uniform, PathShape::UShape] {
            for _ in 0..20 {
                let p = synthetic_reference_path(&mut rng, shape);
                assert!(TransactionPath::new(p.fractions().to_vec()).is_ok());
            }
        }
    }

    #[test]
    fn uniform_synthetic_path_near_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = synthetic_reference_path(&mut rng, PathShape::Uniform);
            for (m, f) in p.fractions().iter().enumerate() {
                assert!((f - (m + 1) as f64 / 300.0).abs() < 0.05);
            }
        }
    }

    #[test]
    fn u_shape_concentrates_at_open_and_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let p = synthetic_reference_path(&mut rng, PathShape::UShape);
            let f = p.fractions();
            assert!(f[149] < 0.55);
            assert!(f[29] > 0.1);
            assert!(1.0 - f[269] > 0.1);
        }
    }

    #[test]
    fn count_csv_round_trip_and_diagnostics() {
        let mut text = (1..=300)
            .map(|m| format!("m{m}"))
            .collect::<Vec<_>>()
            .join(",");
        text.push('\n');
        text.push_str(&vec!["2"; 300].join(","));
        text.push('\n');
        let paths = read_count_paths(text.as_bytes(), "counts.csv").unwrap();
        assert_eq!(paths.len(), 1);

        let mut bad = vec!["1"; 300];
        bad[41] = "x";
        let err = read_count_paths(bad.join(",").as_bytes(), "counts.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("column 42"), "{msg}");
    }

    #[test]
    fn bars_csv_round_trip() {
        let bars = vec![BarSeries::new(
            "day-1",
            (0..300).map(|i| 300.0 + i as f64 * 1e-4).collect(),
            vec![],
        )
        .unwrap()];
        let mut buf = Vec::new();
        write_bars_csv(&bars, &mut buf).unwrap();
        let back = read_bars(buf.as_slice(), "bars.csv").unwrap();
        assert_eq!(back, bars);
    }
}
