//! Weight-density containers shared by the analytic and Monte Carlo sides.

use crate::error::{Error, Result};

/// A weight density sampled on a strictly increasing grid inside (0, 1).
///
/// `tail_mass` carries whatever probability the emitter knows to live outside
/// the sampled window (analytic emitters fill it from the CDF; histograms use
/// the half-bin overhangs), so `mass()` can be checked against 1 without the
/// grid having to reach the endpoints, where most of these densities are
/// singular or vanish.
#[derive(Debug, Clone)]
pub struct DensityCurve {
    grid: Vec<f64>,
    values: Vec<f64>,
    tail_mass: f64,
}

impl DensityCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Contract(format!(
                "grid and values lengths differ: {} vs {}",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 3 {
            return Err(Error::Contract("a density curve needs at least 3 points".into()));
        }
        for w in grid.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Contract(format!(
                    "grid must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if grid[0] <= 0.0 || *grid.last().unwrap() >= 1.0 {
            return Err(Error::Contract("grid must lie strictly inside (0, 1)".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Contract("density values must be finite and >= 0".into()));
        }
        Ok(DensityCurve {
            grid,
            values,
            tail_mass: 0.0,
        })
    }

    pub fn with_tail_mass(mut self, tail_mass: f64) -> Self {
        self.tail_mass = tail_mass.max(0.0);
        self
    }

    /// `n` equally spaced points `i / (n+1)`, `i = 1..=n`. Odd `n` puts a
    /// point exactly at 1/2, which the shape analysis relies on.
    pub fn uniform_interior_grid(n: usize) -> Vec<f64> {
        let h = 1.0 / (n as f64 + 1.0);
        (1..=n).map(|i| i as f64 * h).collect()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Trapezoid mass over the grid plus the declared tail mass.
    pub fn mass(&self) -> f64 {
        let mut m = 0.0;
        for i in 1..self.grid.len() {
            m += 0.5 * (self.values[i] + self.values[i - 1]) * (self.grid[i] - self.grid[i - 1]);
        }
        m + self.tail_mass
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Linear interpolation; errors outside the sampled window.
    pub fn value_at(&self, w: f64) -> Result<f64> {
        let (first, last) = (self.grid[0], *self.grid.last().unwrap());
        if !(w >= first && w <= last) {
            return Err(Error::invalid("w", w, "outside the sampled grid window"));
        }
        let idx = match self.grid.binary_search_by(|g| g.total_cmp(&w)) {
            Ok(i) => return Ok(self.values[i]),
            Err(i) => i,
        };
        let (g0, g1) = (self.grid[idx - 1], self.grid[idx]);
        let t = (w - g0) / (g1 - g0);
        Ok(self.values[idx - 1] * (1.0 - t) + self.values[idx] * t)
    }

    /// True when the grid itself is mirror-symmetric about 1/2.
    pub fn grid_is_symmetric(&self) -> bool {
        let n = self.grid.len();
        (0..n / 2).all(|i| (self.grid[i] + self.grid[n - 1 - i] - 1.0).abs() < 1e-12)
    }

    /// Largest value asymmetry `|p(w) - p(1-w)|` relative to the curve's peak.
    /// Errors when the grid is not symmetric, since then there is nothing to
    /// compare.
    pub fn symmetry_defect(&self) -> Result<f64> {
        if !self.grid_is_symmetric() {
            return Err(Error::Contract(
                "symmetry defect needs a grid that is mirror-symmetric about 1/2".into(),
            ));
        }
        let n = self.values.len();
        let scale = self.max_value().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..n / 2 {
            worst = worst.max((self.values[i] - self.values[n - 1 - i]).abs());
        }
        Ok(worst / scale)
    }

    /// Pointwise map of the values (used for renormalization).
    pub fn scaled(mut self, factor: f64) -> Self {
        for v in &mut self.values {
            *v *= factor;
        }
        self.tail_mass *= factor;
        self
    }
}

/// Fixed-width histogram of weights on [0, 1].
#[derive(Debug, Clone)]
pub struct Histogram {
    counts: Vec<u64>,
    n_paths: u64,
    rejected: u64,
    seed: u64,
}

impl Histogram {
    pub fn from_counts(counts: Vec<u64>, rejected: u64, seed: u64) -> Result<Self> {
        if counts.len() < 4 {
            return Err(Error::Contract("need at least 4 bins".into()));
        }
        let n_paths: u64 = counts.iter().sum();
        if n_paths == 0 {
            return Err(Error::Contract("histogram holds no samples".into()));
        }
        Ok(Histogram {
            counts,
            n_paths,
            rejected,
            seed,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_paths(&self) -> u64 {
        self.n_paths
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.counts.len() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let h = self.bin_width();
        (0..self.counts.len()).map(|i| (i as f64 + 0.5) * h).collect()
    }

    /// Per-bin density estimates `count * n_bins / n_paths`.
    pub fn density_values(&self) -> Vec<f64> {
        let scale = self.counts.len() as f64 / self.n_paths as f64;
        self.counts.iter().map(|&c| c as f64 * scale).collect()
    }

    /// Integer-exact mirror symmetrization: bin i pools with bin n-1-i.
    /// The underlying law is symmetric under swapping the two contracts, so
    /// this halves the estimator variance without touching the mean.
    pub fn symmetrized(&self) -> Histogram {
        let n = self.counts.len();
        let counts: Vec<u64> = (0..n).map(|i| self.counts[i] + self.counts[n - 1 - i]).collect();
        Histogram {
            n_paths: 2 * self.n_paths,
            counts,
            rejected: self.rejected,
            seed: self.seed,
        }
    }

    pub fn to_curve(&self) -> DensityCurve {
        let values = self.density_values();
        let tail = 0.5 * self.bin_width() * (values[0] + values[values.len() - 1]);
        DensityCurve::new(self.centers(), values)
            .expect("histogram centers form a valid grid")
            .with_tail_mass(tail)
    }

    /// Density smoothed with a discrete Gaussian kernel (std dev in bins).
    /// Kernel weights are renormalized inside the support, so no mass leaks
    /// at the edges and mirror symmetry of the input is preserved exactly.
    pub fn smoothed_curve(&self, kernel_sigma_bins: f64) -> DensityCurve {
        let raw = self.density_values();
        let n = raw.len();
        if kernel_sigma_bins <= 0.0 {
            return self.to_curve();
        }
        let reach = (4.0 * kernel_sigma_bins).ceil() as usize;
        let weights: Vec<f64> = (0..=reach)
            .map(|k| (-0.5 * (k as f64 / kernel_sigma_bins).powi(2)).exp())
            .collect();
        // Each input bin scatters exactly its own mass: divide it by the part
        // of its kernel that stays inside the support. The normalizer only
        // depends on the distance to the nearer edge, so it is mirror
        // symmetric, and the pair accumulation below keeps a mirror-symmetric
        // input bitwise mirror-symmetric after smoothing.
        let scaled: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut wsum = weights[0];
                for (k, &wgt) in weights.iter().enumerate().skip(1) {
                    let inside = (i >= k) as u8 + (i + k < n) as u8;
                    wsum += wgt * inside as f64;
                }
                v / wsum
            })
            .collect();
        let mut smoothed = vec![0.0; n];
        for i in 0..n {
            let mut acc = weights[0] * scaled[i];
            for (k, &wgt) in weights.iter().enumerate().skip(1) {
                let mut pair = 0.0;
                if i >= k {
                    pair += scaled[i - k];
                }
                if i + k < n {
                    pair += scaled[i + k];
                }
                acc += wgt * pair;
            }
            smoothed[i] = acc;
        }
        let tail = 0.5 * self.bin_width() * (smoothed[0] + smoothed[n - 1]);
        DensityCurve::new(self.centers(), smoothed)
            .expect("histogram centers form a valid grid")
            .with_tail_mass(tail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn curve_validation() {
        assert!(DensityCurve::new(vec![0.2, 0.5, 0.8], vec![1.0, 2.0, 1.0]).is_ok());
        assert!(DensityCurve::new(vec![0.2, 0.5], vec![1.0, 2.0]).is_err());
        assert!(DensityCurve::new(vec![0.2, 0.2, 0.8], vec![1.0, 2.0, 1.0]).is_err());
        assert!(DensityCurve::new(vec![0.0, 0.5, 0.8], vec![1.0, 2.0, 1.0]).is_err());
        assert!(DensityCurve::new(vec![0.2, 0.5, 0.8], vec![1.0, -2.0, 1.0]).is_err());
        assert!(DensityCurve::new(vec![0.2, 0.5, 0.8], vec![1.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn uniform_grid_hits_center() {
        let g = DensityCurve::uniform_interior_grid(101);
        assert_eq!(g.len(), 101);
        assert_relative_eq!(g[50], 0.5);
        assert_relative_eq!(g[0] + g[100], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn flat_density_has_unit_mass() {
        let grid = DensityCurve::uniform_interior_grid(999);
        let values = vec![1.0; 999];
        let c = DensityCurve::new(grid, values).unwrap().with_tail_mass(2.0 / 1000.0 * 1.0);
        assert_relative_eq!(c.mass(), 1.0, max_relative = 1e-12);
        assert_eq!(c.symmetry_defect().unwrap(), 0.0);
    }

    #[test]
    fn interpolation_between_grid_points() {
        let c = DensityCurve::new(vec![0.25, 0.5, 0.75], vec![1.0, 3.0, 2.0]).unwrap();
        assert_relative_eq!(c.value_at(0.375).unwrap(), 2.0);
        assert_relative_eq!(c.value_at(0.5).unwrap(), 3.0);
        assert!(c.value_at(0.1).is_err());
    }

    #[test]
    fn histogram_basics() {
        let h = Histogram::from_counts(vec![10, 20, 20, 10], 3, 42).unwrap();
        assert_eq!(h.n_paths(), 60);
        assert_eq!(h.rejected(), 3);
        let d = h.density_values();
        assert_relative_eq!(d[1], 20.0 * 4.0 / 60.0);
        let c = h.to_curve();
        assert_relative_eq!(c.mass(), 1.0, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn symmetrization_is_exact(counts in proptest::collection::vec(0u64..10_000, 8..64)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let n = counts.len();
            let h = Histogram::from_counts(counts, 0, 1).unwrap();
            let s = h.symmetrized();
            for i in 0..n {
                prop_assert_eq!(s.counts()[i], s.counts()[n - 1 - i]);
            }
            prop_assert_eq!(s.n_paths(), 2 * h.n_paths());
            // Mirror symmetry survives smoothing bit for bit.
            let sm = s.smoothed_curve(2.0);
            prop_assert_eq!(sm.symmetry_defect().unwrap(), 0.0);
        }

        #[test]
        fn smoothing_preserves_mass(counts in proptest::collection::vec(1u64..5_000, 16..128),
                                    sigma in 0.5f64..4.0) {
            let h = Histogram::from_counts(counts, 0, 1).unwrap();
            let m0 = h.to_curve().mass();
            let m1 = h.smoothed_curve(sigma).mass();
            // Scatter normalization conserves mass to rounding.
            prop_assert!((m1 - m0).abs() < 1e-12, "mass drift {} -> {}", m0, m1);
        }
    }
}
