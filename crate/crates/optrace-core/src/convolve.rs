//! Scale-mixture construction of the relative-weight density: if both
//! payoff times are drawn independently from a density psi, the weight
//! `W = tau_1 / (tau_1 + tau_2)` has density
//!
//! `P(w) = Int_0^inf u psi(w u) psi((1-w) u) du`.
//!
//! The integral runs in `u = e^v` so both psi arguments stay strictly
//! positive, and the two factors are always evaluated as
//! `psi(min(w,1-w) e^v) * psi(max(w,1-w) e^v)`, so `P(w) = P(1-w)` holds
//! bitwise whenever the complement is exactly representable (and in
//! general to the ulp-level rounding of `1 - w`, not merely to quadrature
//! tolerance).
//!
//! The negative-drift payoff densities are far too expensive to sit inside
//! a nested adaptive pass, so they are sampled once onto a log-spaced grid,
//! fitted with a natural cubic spline of `ln psi` vs `ln tau`, and
//! renormalized by the measured mass before convolution.

use crate::curve::DensityCurve;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::psi::{psi_approx_negative_mu, psi_exact_negative_mu};
use crate::quad::{self, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiRoute {
    Exact,
    Approx,
}

/// Natural cubic spline on uniform knots.
#[derive(Debug, Clone)]
struct CubicSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    fn fit_uniform(x0: f64, h: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        let mut second = vec![0.0; n];
        if n > 2 {
            // Thomas solve of the natural-spline tridiagonal system.
            let m = n - 2;
            let mut diag = vec![4.0; m];
            let mut rhs: Vec<f64> = (0..m)
                .map(|i| 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (h * h))
                .collect();
            for i in 1..m {
                let w = 1.0 / diag[i - 1];
                diag[i] -= w;
                rhs[i] -= w * rhs[i - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for i in (1..m).rev() {
                second[i] = (rhs[i - 1] - second[i + 1]) / diag[i - 1];
            }
        }
        CubicSpline { x0, h, y, second }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let t = ((x - self.x0) / self.h).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        let a = t - i as f64;
        let b = 1.0 - a;
        b * self.y[i] + a * self.y[i + 1]
            + self.h * self.h / 6.0
                * ((b * b * b - b) * self.second[i] + (a * a * a - a) * self.second[i + 1])
    }
}

/// Log-log spline cache of an expensive payoff-time density on a compact
/// window, renormalized so the cached density has unit mass there.
#[derive(Debug, Clone)]
pub struct PsiCache {
    spline: CubicSpline,
    tau_lo: f64,
    tau_hi: f64,
    raw_mass: f64,
}

impl PsiCache {
    /// Samples `psi` on `nodes_per_decade` log-spaced points, fits
    /// `ln psi(ln tau)`, and measures the window mass.
    ///
    /// Deep tails of quadrature-backed densities bottom out in noise (values
    /// many orders below the local scale, or exact zeros after clamping).
    /// Feeding those into a log spline rings the cubic hard enough to fake
    /// mass, so the window is trimmed to the contiguous block around the
    /// mass-density peak where the samples still look like a density: the
    /// walk outward stops where `psi * tau` falls below 1e-13 of its peak,
    /// or jumps upward again after falling below 1e-4 of it (the noise
    /// signature; genuine node-to-node growth at this grid spacing stays
    /// under ~1.3x). The input must be unimodal in `ln tau` for this to be
    /// sound, which holds for every density this crate produces.
    pub fn build<F>(mut psi: F, tau_lo: f64, tau_hi: f64, nodes_per_decade: f64) -> Result<Self>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        if !(tau_lo > 0.0 && tau_hi > tau_lo && tau_hi.is_finite()) {
            return Err(Error::invalid("tau window", tau_hi, "need 0 < tau_lo < tau_hi < inf"));
        }
        if !(nodes_per_decade > 1.0) {
            return Err(Error::invalid(
                "nodes_per_decade",
                nodes_per_decade,
                "need more than one node per decade",
            ));
        }
        let l_lo = tau_lo.ln();
        let l_hi = tau_hi.ln();
        let n = (((l_hi - l_lo) / std::f64::consts::LN_10 * nodes_per_decade).ceil() as usize)
            .max(8)
            + 1;
        let h = (l_hi - l_lo) / (n - 1) as f64;
        let mut values = Vec::with_capacity(n);
        let mut mass_density = Vec::with_capacity(n);
        for i in 0..n {
            let tau = (l_lo + h * i as f64).exp();
            let v = psi(tau)?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::numerical(
                    "psi cache",
                    format!("density returned {v} at tau = {tau}"),
                ));
            }
            values.push(v);
            mass_density.push(v * tau);
        }
        let (peak_idx, &m_peak) = mass_density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .ok_or_else(|| Error::numerical("psi cache", "empty sample grid"))?;
        if !(m_peak > 0.0) {
            return Err(Error::numerical("psi cache", "density vanished on the whole window"));
        }

        let mut hi = n;
        let mut prev = m_peak;
        for (i, &m) in mass_density.iter().enumerate().skip(peak_idx + 1) {
            if m < m_peak * 1e-13 || (m < m_peak * 1e-4 && m > prev * 1.6) {
                hi = i;
                break;
            }
            prev = m;
        }
        let mut lo = 0;
        prev = m_peak;
        for i in (0..peak_idx).rev() {
            let m = mass_density[i];
            if m < m_peak * 1e-13 || (m < m_peak * 1e-4 && m > prev * 1.6) {
                lo = i + 1;
                break;
            }
            prev = m;
        }
        if hi - lo < 4 {
            return Err(Error::numerical(
                "psi cache",
                format!("only {} usable nodes after trimming the noise tails", hi - lo),
            ));
        }

        let x0 = l_lo + h * lo as f64;
        let logs: Vec<f64> = values[lo..hi].iter().map(|v| v.ln()).collect();
        let spline = CubicSpline::fit_uniform(x0, h, logs);
        let mut cache = PsiCache {
            spline,
            tau_lo: x0.exp(),
            tau_hi: (l_lo + h * (hi - 1) as f64).exp(),
            raw_mass: 1.0,
        };
        cache.raw_mass = cache.measure_mass()?;
        if !(cache.raw_mass > 0.0 && cache.raw_mass.is_finite()) {
            return Err(Error::numerical(
                "psi cache",
                format!("window mass {} is unusable", cache.raw_mass),
            ));
        }
        Ok(cache)
    }

    fn measure_mass(&self) -> Result<f64> {
        let l_lo = self.tau_lo.ln();
        let l_hi = self.tau_hi.ln();
        let mut points = vec![l_lo];
        let mut l = l_lo + 4.0;
        while l < l_hi {
            points.push(l);
            l += 4.0;
        }
        points.push(l_hi);
        let q = quad::integrate_segmented(
            |l: f64| (self.spline.eval(l) + l).exp(),
            &points,
            QuadOptions {
                abs_tol: 1e-10,
                rel_tol: 1e-9,
                max_segments: 3000,
            },
        )?;
        Ok(q.value)
    }

    /// Mass of the raw density over the window, before renormalization.
    /// A value far from 1 means the window clips the input or the input was
    /// not a probability density.
    pub fn raw_mass(&self) -> f64 {
        self.raw_mass
    }

    pub fn support(&self) -> (f64, f64) {
        (self.tau_lo, self.tau_hi)
    }

    /// Renormalized density; zero outside the window.
    pub fn density(&self, tau: f64) -> f64 {
        if !(tau >= self.tau_lo && tau <= self.tau_hi) {
            return 0.0;
        }
        self.spline.eval(tau.ln()).exp() / self.raw_mass
    }
}

/// Weight density from an arbitrary payoff-time density with compact
/// support. `psi` must be (close to) normalized on `support`; the caller
/// owns that contract (`PsiCache` enforces it by renormalizing).
pub fn weight_density_from_psi<F>(psi: &F, support: (f64, f64), w: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::invalid("w", w, "weight must lie strictly inside (0, 1)"));
    }
    let (tau_lo, tau_hi) = support;
    if !(tau_lo > 0.0 && tau_hi > tau_lo) {
        return Err(Error::invalid("support", tau_hi, "need 0 < tau_lo < tau_hi"));
    }
    let a = w.min(1.0 - w);
    let b = w.max(1.0 - w);
    // Both factors must land inside the support: a e^v >= tau_lo and
    // b e^v <= tau_hi.
    let v_lo = (tau_lo / a).ln();
    let v_hi = (tau_hi / b).ln();
    if v_hi <= v_lo {
        return Ok(0.0);
    }
    let integrand = |v: f64| {
        let u = v.exp();
        u * u * psi(a * u) * psi(b * u)
    };
    let mut points = vec![v_lo];
    let mut v = v_lo + 5.0;
    while v < v_hi {
        points.push(v);
        v += 5.0;
    }
    points.push(v_hi);
    let q = quad::integrate_segmented(
        integrand,
        &points,
        QuadOptions {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_segments: 3000,
        },
    )?;
    Ok(q.value.max(0.0))
}

/// Asian weight density for `mu < 0` backed by a prebuilt payoff-time cache.
/// Construction pays the nested-quadrature cost once; evaluations afterwards
/// are spline-cheap.
#[derive(Debug, Clone)]
pub struct AsianWeightDensity {
    cache: PsiCache,
    route: PsiRoute,
    alpha: f64,
}

impl AsianWeightDensity {
    pub fn new(params: &ModelParams, alpha: f64, route: PsiRoute) -> Result<Self> {
        Self::with_nodes(params, alpha, route, 40.0)
    }

    pub fn with_nodes(
        params: &ModelParams,
        alpha: f64,
        route: PsiRoute,
        nodes_per_decade: f64,
    ) -> Result<Self> {
        let mu = params.mu();
        if !(mu < 0.0) {
            return Err(Error::invalid("mu", mu, "this construction requires mu < 0"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", alpha, "must be finite and > 0"));
        }
        // Window in ln tau': the mass Gaussian is centered at |mu| alpha
        // with width ~ sqrt(2 alpha); seven widths keep the clipped tail
        // below ~1e-11 of the mass.
        let l_lo = -5.0f64;
        let l_hi = mu.abs() * alpha + 7.0 * (2.0 * alpha).sqrt();
        let to_tau = 2.0 / params.sigma_sq();
        let tau_lo = l_lo.exp() * to_tau;
        let tau_hi = l_hi.exp() * to_tau;
        let cache = match route {
            PsiRoute::Exact => PsiCache::build(
                |tau| psi_exact_negative_mu(tau, params, alpha).map(|e| e.value),
                tau_lo,
                tau_hi,
                nodes_per_decade,
            )?,
            PsiRoute::Approx => PsiCache::build(
                |tau| psi_approx_negative_mu(tau, params, alpha).map(|e| e.value),
                tau_lo,
                tau_hi,
                nodes_per_decade,
            )?,
        };
        Ok(AsianWeightDensity { cache, route, alpha })
    }

    pub fn route(&self) -> PsiRoute {
        self.route
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Mass the raw payoff-time density carried on the cache window.
    pub fn psi_window_mass(&self) -> f64 {
        self.cache.raw_mass()
    }

    pub fn density(&self, w: f64) -> Result<f64> {
        let support = self.cache.support();
        weight_density_from_psi(&|tau| self.cache.density(tau), support, w)
    }

    /// Total weight mass, integrated in logit coordinates where the density
    /// has compact support (the cache windows stop overlapping at
    /// |logit w| = ln(tau_hi / tau_lo)). Equals 1 up to quadrature error.
    pub fn mass(&self) -> Result<f64> {
        let (tau_lo, tau_hi) = self.cache.support();
        let t_max = (tau_hi / tau_lo).ln();
        let half = quad::integrate_segmented(
            |t: f64| {
                let w = 1.0 / (1.0 + (-t).exp());
                let jac = w * (1.0 - w);
                self.density(w).unwrap_or(0.0) * jac
            },
            &[0.0, 2.0, 6.0, t_max * 0.5, t_max],
            QuadOptions {
                abs_tol: 1e-8,
                rel_tol: 1e-7,
                max_segments: 2000,
            },
        )?;
        Ok(2.0 * half.value)
    }

    /// Uniform-interior-grid curve; the mass outside the grid goes into the
    /// curve's tail estimate so the reported total matches `mass()`.
    pub fn curve(&self, n_interior: usize) -> Result<DensityCurve> {
        let grid = DensityCurve::uniform_interior_grid(n_interior);
        let mut values = Vec::with_capacity(grid.len());
        for &w in &grid {
            values.push(self.density(w)?);
        }
        let total = self.mass()?;
        let curve = DensityCurve::new(grid, values)?;
        let interior = curve.mass();
        Ok(curve.with_tail_mass((total - interior).max(0.0)))
    }
}

/// One-off Asian weight density for `mu < 0`. Builds a full cache per call;
/// use [`AsianWeightDensity`] when more than one point is needed.
pub fn asian_weight_density_negative_mu(
    w: f64,
    params: &ModelParams,
    alpha: f64,
    route: PsiRoute,
) -> Result<f64> {
    AsianWeightDensity::new(params, alpha, route)?.density(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::limiting_beta_density;
    use crate::psi::psi_infinity;
    use approx::assert_relative_eq;

    fn params(sigma: f64, mu: f64) -> ModelParams {
        ModelParams::new(sigma, mu).unwrap()
    }

    #[test]
    fn beta_limit_from_limiting_density() {
        // Convolving the infinite-maturity payoff density reproduces the
        // closed beta curve; endpoints excluded for the divergent mu = 0.5.
        for (mu, ws, tol) in [
            (2.0, vec![0.1, 0.3, 0.5, 0.7, 0.9], 2e-4),
            (1.0, vec![0.1, 0.3, 0.5, 0.7, 0.9], 2e-4),
            (0.5, vec![0.05, 0.25, 0.5, 0.75, 0.95], 5e-4),
        ] {
            let p = params(2f64.sqrt(), mu);
            let psi = |tau: f64| psi_infinity(tau, &p).unwrap().value;
            // Left edge set by the essential singularity, right edge by the
            // algebraic tail; the wide window costs only closed-form evals.
            let support = (1e-4, 1e9);
            for w in ws {
                let conv = weight_density_from_psi(&psi, support, w).unwrap();
                let beta = limiting_beta_density(w, mu).unwrap();
                assert_relative_eq!(conv, beta, max_relative = tol);
            }
        }
    }

    #[test]
    fn narrow_input_concentrates_at_half() {
        // Two nearly deterministic equal payoffs: weight piles up at 1/2.
        let t0 = 3.0;
        let s = 0.01;
        let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
        let psi = move |tau: f64| norm * (-0.5 * ((tau - t0) / s).powi(2)).exp();
        let support = (t0 - 6.0 * s, t0 + 6.0 * s);
        let center = weight_density_from_psi(&psi, support, 0.5).unwrap();
        let off = weight_density_from_psi(&psi, support, 0.45).unwrap();
        assert!(center > 1e2, "center {center}");
        assert!(off < 1e-8 * center, "off-center {off} vs {center}");
    }

    #[test]
    fn convolution_is_symmetric() {
        let p = params(1.0, -1.0);
        let asian = AsianWeightDensity::new(&p, 12.0, PsiRoute::Approx).unwrap();
        // Dyadic weights have exactly representable complements: bitwise.
        for w in [0.25, 0.375, 0.0625] {
            let a = asian.density(w).unwrap();
            let b = asian.density(1.0 - w).unwrap();
            assert!(a > 0.0);
            assert_eq!(a.to_bits(), b.to_bits(), "w = {w}");
        }
        // Generic weights: 1-(1-w) lands an ulp off w, nothing more.
        for w in [0.07, 0.23, 0.41, 0.49] {
            let a = asian.density(w).unwrap();
            let b = asian.density(1.0 - w).unwrap();
            assert!(a > 0.0);
            assert!(((a - b) / a).abs() < 1e-12, "w = {w}: {a} vs {b}");
        }
    }

    #[test]
    fn cache_reproduces_the_sampled_density() {
        let p = params(2f64.sqrt(), -1.0);
        let alpha = 30.0;
        let asian = AsianWeightDensity::new(&p, alpha, PsiRoute::Approx).unwrap();
        // The closed approximation's log-Gaussian sits shifted left of the
        // true mass center (arcsinh^2(sqrt(t)) = (ln t + ln 4)^2 / 4 + o(1)),
        // which costs it ~13% of mass at mu = -1 independent of maturity.
        // The cache's renormalization exists precisely for this.
        let raw = asian.psi_window_mass();
        assert!(raw > 0.8 && raw < 1.0, "approx-route window mass {raw}");

        let cache = PsiCache::build(
            |tau| psi_approx_negative_mu(tau, &p, alpha).map(|e| e.value),
            1e-1,
            1e6,
            40.0,
        )
        .unwrap();
        for tau in [0.2, 1.0, 37.0, 1e3, 1e5] {
            let direct = psi_approx_negative_mu(tau, &p, alpha).unwrap().value;
            let mass = cache.raw_mass();
            assert_relative_eq!(cache.density(tau) * mass, direct, max_relative = 1e-5);
        }
        assert_eq!(cache.density(1e-3), 0.0);
        assert_eq!(cache.density(1e7), 0.0);
    }

    #[test]
    fn exact_route_curve_is_normalized_and_symmetric() {
        let p = params(2f64.sqrt(), -1.0);
        let asian = AsianWeightDensity::with_nodes(&p, 20.0, PsiRoute::Exact, 24.0).unwrap();
        let raw = asian.psi_window_mass();
        assert!((raw - 1.0).abs() < 0.01, "exact-route window mass {raw}");
        let curve = asian.curve(201).unwrap();
        let mass = curve.mass();
        assert!((mass - 1.0).abs() < 1e-4, "curve mass {mass}");
        assert!(curve.symmetry_defect().unwrap() < 1e-10);
    }

    #[test]
    fn interior_flattens_like_inverse_logit_area() {
        // Large-alpha interior: p(w) * sqrt(alpha) * w(1-w) is nearly flat.
        let p = params(2f64.sqrt(), -1.0);
        let asian = AsianWeightDensity::new(&p, 50.0, PsiRoute::Approx).unwrap();
        let scaled: Vec<f64> = [0.2, 0.35, 0.5, 0.65, 0.8]
            .iter()
            .map(|&w| asian.density(w).unwrap() * 50.0f64.sqrt() * w * (1.0 - w))
            .collect();
        let spread = scaled.iter().cloned().fold(0.0, f64::max)
            / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1.25, "interior spread {spread}: {scaled:?}");
    }

    #[test]
    fn no_limiting_curve_as_maturity_grows() {
        // The weight density keeps flattening instead of converging.
        let p = params(2f64.sqrt(), -1.0);
        let a20 = AsianWeightDensity::new(&p, 20.0, PsiRoute::Approx).unwrap();
        let a50 = AsianWeightDensity::new(&p, 50.0, PsiRoute::Approx).unwrap();
        let mut sup_rel = 0.0f64;
        for w in [0.2, 0.35, 0.5, 0.65, 0.8] {
            let v20 = a20.density(w).unwrap();
            let v50 = a50.density(w).unwrap();
            sup_rel = sup_rel.max((v20 - v50).abs() / v50.max(v20));
            assert!(v20 > v50, "flattening means lower maturity is taller at w={w}");
        }
        assert!(sup_rel > 0.3, "sup relative distance {sup_rel}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let p_pos = params(1.0, 1.0);
        assert!(AsianWeightDensity::new(&p_pos, 10.0, PsiRoute::Approx).is_err());
        let p = params(1.0, -1.0);
        let asian = AsianWeightDensity::new(&p, 12.0, PsiRoute::Approx).unwrap();
        assert!(asian.density(0.0).is_err());
        assert!(asian.density(1.0).is_err());
        let psi = |_tau: f64| 1.0;
        assert!(weight_density_from_psi(&psi, (1.0, 0.5), 0.5).is_err());
        assert!(weight_density_from_psi(&psi, (1.0, 2.0), -0.5).is_err());
    }
}
