//! Discrete-walk simulation of two (possibly correlated) log-price paths,
//! reduced to weight histograms, payoff-time moments, goodness-of-fit
//! checks, and effective-maturity fits.
//!
//! Determinism contract: a (seed, config) pair produces bitwise-identical
//! results for any worker count. Each path owns a counter-based RNG
//! substream keyed by its global index, and reductions either use integer
//! bin counts (order-free) or fold fixed-size block partials in block order.
//!
//! Time normalization: the effective maturity is `alpha = n_steps * dt / 2`,
//! chosen so the simulated logit-weight variance matches the analytic
//! `2 g^2 alpha` at every correlation scale (the per-step marginal variance
//! is then `(1+chi^2)/(2+chi^2) * dt` automatically).

use crate::curve::Histogram;
use crate::error::{Error, Result};
use crate::params::CorrelationScale;
use crate::special::{inv_norm_cdf, regularized_gamma_q};
use crate::analytic::european_weight_density;
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

const BLOCK: usize = 8192;
const U64_TO_UNIT: f64 = 1.0 / 9007199254740992.0; // 2^-53

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaceStyle {
    European,
    Asian,
}

#[derive(Debug, Clone, Copy)]
pub struct WalkConfig {
    pub n_steps: usize,
    pub dt: f64,
    pub mu: f64,
    pub chi: CorrelationScale,
    pub n_paths: usize,
    pub seed: u64,
}

impl WalkConfig {
    /// Chooses the step size so that `alpha = n_steps * dt / 2` exactly.
    pub fn for_alpha(
        alpha: f64,
        n_steps: usize,
        mu: f64,
        chi: CorrelationScale,
        n_paths: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", alpha, "must be finite and > 0"));
        }
        let cfg = WalkConfig {
            n_steps,
            dt: 2.0 * alpha / n_steps as f64,
            mu,
            chi,
            n_paths,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn alpha(&self) -> f64 {
        0.5 * self.n_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps", 0.0, "need at least one step"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", self.dt, "must be finite and > 0"));
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths", 0.0, "need at least one path"));
        }
        if !self.mu.is_finite() {
            return Err(Error::invalid("mu", self.mu, "must be finite"));
        }
        Ok(())
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn path_rng(seed: u64, path_index: u64) -> ChaCha12Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(path_index);
    rng
}

fn std_normal(rng: &mut ChaCha12Rng) -> f64 {
    inv_norm_cdf(((rng.next_u64() >> 11) as f64 + 0.5) * U64_TO_UNIT)
}

/// One correlated increment pair `(dB1, dB2)` over a step of size `dt`:
/// the difference carries variance `g^2 dt` (relative-mode rate), the sum
/// carries `2 dt`, so each marginal has `(1+chi^2)/(2+chi^2) dt`.
pub fn sample_increment_pair(rng: &mut ChaCha12Rng, chi: CorrelationScale, dt: f64) -> (f64, f64) {
    let u = std_normal(rng) * (chi.relative_mode_rate() * dt).sqrt();
    let v = std_normal(rng) * (2.0 * dt).sqrt();
    (0.5 * (v - u), 0.5 * (v + u))
}

/// Streaming log-sum-exp accumulator for `ln sum_n exp(x_n)`.
#[derive(Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    fn start(x0: f64) -> Self {
        LogSum { max: x0, sum: 1.0 }
    }

    fn add(&mut self, x: f64) {
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn ln_total(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Terminal statistics of one simulated pair of walks.
struct PathOutcome {
    weight: f64,
    ln_tau1: f64,
}

fn simulate_path(cfg: &WalkConfig, style: RaceStyle, path_index: u64) -> PathOutcome {
    let mut rng = path_rng(cfg.seed, path_index);
    let drift = -0.5 * cfg.mu * cfg.chi.marginal_rate() * cfg.dt;
    let mut x1 = 0.0f64;
    let mut x2 = 0.0f64;
    let mut acc1 = LogSum::start(0.0);
    let mut acc2 = LogSum::start(0.0);
    for _ in 0..cfg.n_steps {
        let (db1, db2) = sample_increment_pair(&mut rng, cfg.chi, cfg.dt);
        x1 += drift + db1;
        x2 += drift + db2;
        if style == RaceStyle::Asian {
            acc1.add(x1);
            acc2.add(x2);
        }
    }
    match style {
        RaceStyle::European => PathOutcome {
            weight: 1.0 / (1.0 + (x2 - x1).exp()),
            ln_tau1: x1,
        },
        RaceStyle::Asian => {
            let l1 = acc1.ln_total();
            let l2 = acc2.ln_total();
            PathOutcome {
                weight: 1.0 / (1.0 + (l2 - l1).exp()),
                ln_tau1: l1 + cfg.dt.ln(),
            }
        }
    }
}

/// Runs the full path ensemble and histograms the weight over [0, 1].
pub fn run_race(cfg: &WalkConfig, style: RaceStyle, n_bins: usize) -> Result<Histogram> {
    cfg.validate()?;
    if n_bins < 4 {
        return Err(Error::invalid("n_bins", n_bins as f64, "need at least 4 bins"));
    }
    let n_blocks = cfg.n_paths.div_ceil(BLOCK);
    let blocks: Vec<(Vec<u64>, u64)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = ((b + 1) * BLOCK).min(cfg.n_paths);
            let mut counts = vec![0u64; n_bins];
            let mut rejected = 0u64;
            for p in start..end {
                let out = simulate_path(cfg, style, p as u64);
                if out.weight.is_finite() && (0.0..1.0).contains(&out.weight) {
                    let idx = ((out.weight * n_bins as f64) as usize).min(n_bins - 1);
                    counts[idx] += 1;
                } else {
                    rejected += 1;
                }
            }
            (counts, rejected)
        })
        .collect();
    let mut counts = vec![0u64; n_bins];
    let mut rejected = 0u64;
    for (c, r) in blocks {
        for (tot, add) in counts.iter_mut().zip(c) {
            *tot += add;
        }
        rejected += r;
    }
    Histogram::from_counts(counts, rejected, cfg.seed)
}

#[derive(Debug, Clone, Copy)]
pub struct MomentEstimate {
    pub order: u32,
    pub value: f64,
    pub std_error: f64,
}

/// Negative payoff-time moments `E(1 / tau^n)` with bootstrap standard
/// errors (resampling over the fixed simulation blocks, seeded from the
/// config so the error bars are reproducible too).
pub fn sample_tau_moments(cfg: &WalkConfig, orders: &[u32]) -> Result<Vec<MomentEstimate>> {
    cfg.validate()?;
    if orders.is_empty() {
        return Err(Error::invalid("orders", 0.0, "need at least one moment order"));
    }
    let n_blocks = cfg.n_paths.div_ceil(BLOCK);
    // Per block: path count and one partial sum per order.
    let partials: Vec<(u64, Vec<f64>)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = ((b + 1) * BLOCK).min(cfg.n_paths);
            let mut sums = vec![0.0f64; orders.len()];
            for p in start..end {
                let out = simulate_path(cfg, RaceStyle::Asian, p as u64);
                for (s, &n) in sums.iter_mut().zip(orders) {
                    *s += (-(n as f64) * out.ln_tau1).exp();
                }
            }
            ((end - start) as u64, sums)
        })
        .collect();

    let total: u64 = partials.iter().map(|(c, _)| c).sum();
    let mut boot_rng = path_rng(cfg.seed ^ 0x5bd1_e995_u64, u64::MAX);
    let mut out = Vec::with_capacity(orders.len());
    for (k, &order) in orders.iter().enumerate() {
        let grand: f64 = partials.iter().map(|(_, s)| s[k]).sum();
        let value = grand / total as f64;
        const RESAMPLES: usize = 200;
        let mut means = Vec::with_capacity(RESAMPLES);
        for _ in 0..RESAMPLES {
            let mut sum = 0.0;
            let mut count = 0u64;
            for _ in 0..partials.len() {
                let j = (boot_rng.next_u64() % partials.len() as u64) as usize;
                sum += partials[j].1[k];
                count += partials[j].0;
            }
            means.push(sum / count as f64);
        }
        let m = means.iter().sum::<f64>() / RESAMPLES as f64;
        let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (RESAMPLES - 1) as f64;
        out.push(MomentEstimate {
            order,
            value,
            std_error: var.sqrt(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct GofReport {
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square of a histogram against a reference CDF. Bins are
/// grouped left to right until each group's expected count reaches 5, the
/// usual validity floor for the chi-square approximation.
pub fn gof_chi_square<F>(hist: &Histogram, cdf: F) -> Result<GofReport>
where
    F: Fn(f64) -> f64,
{
    let n_bins = hist.n_bins();
    let n = hist.n_paths() as f64;
    let h = hist.bin_width();
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for i in 0..n_bins {
        let lo = i as f64 * h;
        let hi = ((i + 1) as f64 * h).min(1.0);
        acc_obs += hist.counts()[i] as f64;
        acc_exp += n * (cdf(hi) - cdf(lo)).max(0.0);
        if acc_exp >= 5.0 {
            groups.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 || acc_obs > 0.0 {
        if let Some(last) = groups.last_mut() {
            last.0 += acc_obs;
            last.1 += acc_exp;
        } else {
            groups.push((acc_obs, acc_exp));
        }
    }
    if groups.len() < 3 {
        return Err(Error::Degenerate(format!(
            "only {} usable bin groups for a goodness-of-fit test",
            groups.len()
        )));
    }
    let chi_square: f64 = groups
        .iter()
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = groups.len() - 1;
    let p_value = regularized_gamma_q(0.5 * dof as f64, 0.5 * chi_square);
    Ok(GofReport {
        chi_square,
        dof,
        p_value,
    })
}

/// Least-squares fit of the closed European weight density to (w, density)
/// points, over a free effective maturity. Returns the fitted maturity and
/// the relative L2 residual on the fitted points.
pub fn fit_european_maturity(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{} points is not enough for a maturity fit",
            points.len()
        )));
    }
    let sse = |ln_alpha: f64| -> f64 {
        let alpha = ln_alpha.exp();
        points
            .iter()
            .map(|&(w, d)| {
                let model = european_weight_density(w, alpha).unwrap_or(f64::INFINITY);
                (model - d) * (model - d)
            })
            .sum()
    };
    // Golden-section over ln alpha; the profile is unimodal in practice.
    let inv_phi = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (-7.0f64, 7.0f64);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (sse(c), sse(d));
    for _ in 0..90 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = sse(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = sse(d);
        }
    }
    let ln_alpha = 0.5 * (a + b);
    let alpha = ln_alpha.exp();
    let num: f64 = sse(ln_alpha);
    let den: f64 = points.iter().map(|&(_, d)| d * d).sum();
    if den <= 0.0 {
        return Err(Error::Degenerate("all fitted densities are zero".into()));
    }
    Ok((alpha, (num / den).sqrt()))
}

/// Histogram-level wrapper over [`fit_european_maturity`]: fits over the
/// interior bins `w` in [0.05, 0.95].
pub fn fit_effective_maturity(hist: &Histogram) -> Result<(f64, f64)> {
    if hist.n_paths() < 10_000 {
        return Err(Error::Degenerate(format!(
            "{} samples is below the fit floor of 10000",
            hist.n_paths()
        )));
    }
    let occupied = hist.counts().iter().filter(|&&c| c > 0).count();
    if occupied <= 2 {
        return Err(Error::Degenerate(format!(
            "histogram mass concentrated in {occupied} bins"
        )));
    }
    let centers = hist.centers();
    let densities = hist.density_values();
    let points: Vec<(f64, f64)> = centers
        .into_iter()
        .zip(densities)
        .filter(|&(w, _)| (0.05..=0.95).contains(&w))
        .collect();
    fit_european_maturity(&points)
}

/// Mean weight of a histogram, from bin centers.
pub fn mean_weight(hist: &Histogram) -> f64 {
    let centers = hist.centers();
    let total: u64 = hist.counts().iter().sum();
    hist.counts()
        .iter()
        .zip(centers)
        .map(|(&c, w)| c as f64 * w)
        .sum::<f64>()
        / total as f64
}
