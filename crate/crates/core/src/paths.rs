use crate::model::Measure;

/// Simulated log-levels of every variable on a shared grid.
///
/// Storage is path-major, then variable-major, so each variable's series for
/// one path is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub(crate) grid: Vec<f64>,
    pub(crate) n_vars: usize,
    pub(crate) n_stocks: usize,
    pub(crate) log_levels: Vec<f64>,
    pub(crate) measure: Measure,
    pub(crate) seed: u64,
}

impl PathBatch {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.log_levels.len() / (self.n_vars * self.grid.len())
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_stocks(&self) -> usize {
        self.n_stocks
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self, i: usize) -> PathView<'_> {
        let stride = self.n_vars * self.grid.len();
        PathView { grid: &self.grid, logs: &self.log_levels[i * stride..(i + 1) * stride] }
    }

    pub fn paths(&self) -> impl Iterator<Item = PathView<'_>> {
        (0..self.n_paths()).map(move |i| self.path(i))
    }
}

/// One simulated path: a log-level series per variable.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub(crate) grid: &'a [f64],
    pub(crate) logs: &'a [f64],
}

impl<'a> PathView<'a> {
    pub fn new(grid: &'a [f64], logs: &'a [f64]) -> Self {
        debug_assert_eq!(logs.len() % grid.len(), 0);
        PathView { grid, logs }
    }

    pub fn grid(&self) -> &'a [f64] {
        self.grid
    }

    pub fn log_series(&self, var: usize) -> &'a [f64] {
        let n = self.grid.len();
        &self.logs[var * n..(var + 1) * n]
    }

    pub fn level(&self, var: usize, idx: usize) -> f64 {
        self.log_series(var)[idx].exp()
    }
}
