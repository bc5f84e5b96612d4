use crate::error::{ensure, Result, SppcError};

/// Points closer than this are treated as the same grid point.
const MERGE_TOL: f64 = 1e-10;

/// Simulation time grid: a uniform grid on `[0, end]` merged with every date
/// that a contract or model needs as an exact grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn build(end: f64, max_step: f64, dates: &[f64]) -> Result<Self> {
        ensure(end > 0.0 && end.is_finite(), "grid end", || format!("must be positive, got {end}"))?;
        ensure(max_step > 0.0 && max_step.is_finite(), "step", || format!("must be positive, got {max_step}"))?;
        for &d in dates {
            ensure((0.0..=end + MERGE_TOL).contains(&d), "grid date", || format!("{d} lies outside [0, {end}]"))?;
        }
        let n = (end / max_step - 1e-9).ceil().max(1.0) as usize;
        let mut pts: Vec<(f64, bool)> = (0..=n)
            .map(|k| (if k == n { end } else { end * k as f64 / n as f64 }, false))
            .chain(dates.iter().map(|&d| (d.min(end), true)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut times: Vec<f64> = Vec::with_capacity(pts.len());
        let mut pinned: Vec<bool> = Vec::with_capacity(pts.len());
        for (t, is_date) in pts {
            match times.last() {
                Some(&last) if t - last <= MERGE_TOL => {
                    // contract dates win over uniform points so lookups are exact
                    let k = times.len() - 1;
                    if is_date && !pinned[k] && k != 0 {
                        times[k] = t;
                        pinned[k] = true;
                    }
                }
                _ => {
                    times.push(t);
                    pinned.push(is_date);
                }
            }
        }
        times[0] = 0.0;
        Ok(TimeGrid { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        ensure(times.len() >= 2 && times[0] == 0.0, "grid", || "must start at 0 with at least two points".into())?;
        ensure(times.windows(2).all(|w| w[1] > w[0]), "grid", || "must be strictly increasing".into())?;
        Ok(TimeGrid { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        index_of(&self.times, t)
    }
}

pub(crate) fn index_of(times: &[f64], t: f64) -> Result<usize> {
    let k = times.partition_point(|x| *x < t - MERGE_TOL);
    match times.get(k) {
        Some(x) if (x - t).abs() <= MERGE_TOL => Ok(k),
        _ => Err(SppcError::OffGrid { time: t }),
    }
}
