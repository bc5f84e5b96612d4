//! Order-stable summary statistics.
//!
//! Sums are taken in fixed blocks of `BLOCK` values, pairwise within each
//! block, and the block totals are added in index order. Results depend only
//! on the input order.

const BLOCK: usize = 4096;

fn pairwise(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise(&xs[..mid]) + pairwise(&xs[mid..])
    }
}

pub fn stable_sum(xs: &[f64]) -> f64 {
    xs.chunks(BLOCK).map(pairwise).fold(0.0, |acc, s| acc + s)
}

pub fn mean(xs: &[f64]) -> f64 {
    stable_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    stable_sum(&sq) / (xs.len() - 1) as f64
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

pub fn mean_with_error(xs: &[f64]) -> Estimate {
    Estimate { value: mean(xs), std_error: (sample_variance(xs) / xs.len() as f64).sqrt() }
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        None
    } else {
        Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Sample covariance (unbiased).
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    stable_sum(&prods) / (xs.len() - 1) as f64
}
