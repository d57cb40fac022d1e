//! Closed-form and quadrature-form weight densities.
//!
//! The weight `W = tau_1 / (tau_1 + tau_2)` of the first of two payoffs.
//! For fixed-horizon (European style) contracts, `logit W` is exactly normal
//! and everything is closed form, for both independent and mode-coupled
//! drivers. For averaged (Asian style) contracts at drift index zero, the
//! density has an exact oscillatory-integral representation; its edges follow
//! a log-normal-type asymptotic. For positive drift index the long-maturity
//! limit is a symmetric Beta law.

use crate::curve::DensityCurve;
use crate::error::{Error, Result};
use crate::params::CorrelationScale;
use crate::quad::{self, QuadOptions};
use crate::special::{gamma, inv_norm_cdf, norm_cdf};

pub fn logit(w: f64) -> f64 {
    (w / (1.0 - w)).ln()
}

fn check_weight(w: f64) -> Result<()> {
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::invalid("w", w, "weight must lie strictly inside (0, 1)"));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid("alpha", alpha, "must be finite and >= 0"));
    }
    if alpha == 0.0 {
        return Err(Error::Degenerate(
            "at zero effective maturity the weight is a point mass at 1/2".into(),
        ));
    }
    Ok(())
}

/// Logit-normal density on (0,1) with logit variance `s2`.
fn logit_normal_density(w: f64, s2: f64) -> f64 {
    let l = logit(w);
    (-0.5 * l * l / s2).exp() / ((2.0 * std::f64::consts::PI * s2).sqrt() * w * (1.0 - w))
}

/// Weight density for two independent fixed-horizon payoffs at effective
/// maturity `alpha`: logit-normal with variance `4 alpha`.
pub fn european_weight_density(w: f64, alpha: f64) -> Result<f64> {
    correlated_weight_density(w, alpha, CorrelationScale::Independent)
}

pub fn european_weight_cdf(w: f64, alpha: f64) -> Result<f64> {
    correlated_weight_cdf(w, alpha, CorrelationScale::Independent)
}

/// Weight density for mode-coupled fixed-horizon payoffs: logit-normal with
/// variance `2 g^2 alpha`, `g^2` the relative-mode rate of `chi`.
pub fn correlated_weight_density(w: f64, alpha: f64, chi: CorrelationScale) -> Result<f64> {
    check_weight(w)?;
    check_alpha(alpha)?;
    Ok(logit_normal_density(w, chi.logit_variance(alpha)))
}

pub fn correlated_weight_cdf(w: f64, alpha: f64, chi: CorrelationScale) -> Result<f64> {
    check_weight(w)?;
    check_alpha(alpha)?;
    Ok(norm_cdf(logit(w) / chi.logit_variance(alpha).sqrt()))
}

/// Quantile of the fixed-horizon weight law (inverse of the CDF above).
pub fn correlated_weight_quantile(p: f64, alpha: f64, chi: CorrelationScale) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p", p, "probability must lie in (0, 1)"));
    }
    check_alpha(alpha)?;
    let l = inv_norm_cdf(p) * chi.logit_variance(alpha).sqrt();
    Ok(1.0 / (1.0 + (-l).exp()))
}

/// Effective maturity at which the fixed-horizon weight density flips from
/// unimodal to bimodal: `alpha_c = 1 / g^2`, i.e. `(2 + chi^2) / (2 chi^2)`,
/// and 1/2 for independent drivers. Diverges as `chi -> 0`, where the two
/// payoffs become identical and the weight never leaves 1/2.
pub fn critical_maturity_european(chi: CorrelationScale) -> f64 {
    1.0 / chi.relative_mode_rate()
}

/// Exact weight density for averaged payoffs at drift index zero.
///
/// `P(w) = pref(w) Int_{-inf}^{inf} du cosh(u)/cosh(eta) cos(pi u / alpha)
/// exp((pi^2 - 4u^2 - 4 eta^2) / (4 alpha))` with
/// `eta = arcsinh(sqrt(w/(1-w)) cosh u)` and
/// `pref = 1 / (pi alpha sqrt(w (1-w)^3))`. The integrand is even in `u`.
///
/// The oscillatory pieces cancel almost completely near the edges of (0,1);
/// results there are clamped at the quadrature noise floor, which stays far
/// below the density's central scale for `alpha` up to order 10.
pub fn asian_mu0_weight_density(w: f64, alpha: f64) -> Result<f64> {
    check_weight(w)?;
    check_alpha(alpha)?;
    let ratio = (w / (1.0 - w)).sqrt();
    let pref = 1.0 / (std::f64::consts::PI * alpha * (w * (1.0 - w).powi(3)).sqrt());
    let quarter_alpha_inv = 0.25 / alpha;
    let pi = std::f64::consts::PI;

    let integrand = |u: f64| {
        let ch = u.cosh();
        let eta = (ratio * ch).asinh();
        let expo = (pi * pi - 4.0 * u * u - 4.0 * eta * eta) * quarter_alpha_inv;
        ch / eta.cosh() * (pi * u / alpha).cos() * expo.exp()
    };

    // exp(-u^2/alpha) truncates the range; the cosine's period 2*alpha sets
    // panel boundaries so no oscillation is skipped by the adaptive pass.
    let u_max = (46.0 * alpha).sqrt() + 1.0;
    let mut points = vec![0.0];
    let step = (2.0 * alpha).min(u_max);
    let mut u = step;
    while u < u_max {
        points.push(u);
        u += step;
    }
    points.push(u_max);

    // The integrand's raw scale before cancellation: peak e^(pi^2/(4a))
    // times the cosh-widened Gaussian width. The absolute tolerance must sit
    // above the 50-eps round-off floor of that envelope or the adaptive pass
    // can never converge on the cancelled result.
    let envelope =
        (pi * pi * quarter_alpha_inv).exp() * (pi * alpha).sqrt().max(1.0) * (0.25 * alpha).exp();
    let opt = QuadOptions {
        abs_tol: 1e-13 * envelope,
        rel_tol: 3e-12,
        max_segments: 4000,
    };
    let q = quad::integrate_segmented(integrand, &points, opt)?;
    Ok((2.0 * pref * q.value).max(0.0))
}

/// Edge asymptotic of the averaged-payoff weight density at drift index zero,
/// valid on `w in (1/2, 1)` and increasingly accurate toward 1. The `w -> 0`
/// side follows by reflecting the argument.
pub fn asian_mu0_edge_asymptotic(w: f64, alpha: f64) -> Result<f64> {
    check_weight(w)?;
    check_alpha(alpha)?;
    if w <= 0.5 {
        return Err(Error::UseSymmetry { w });
    }
    let sw = w.sqrt();
    let z = (1.0 + sw) / (1.0 - w).sqrt();
    let lz = z.ln();
    let denom = 1.0 + sw * lz;
    let pi = std::f64::consts::PI;
    let expo = -lz * lz / alpha + pi * pi * sw * lz / (4.0 * alpha * denom);
    Ok(expo.exp() / (denom.sqrt() * (pi * alpha * w).sqrt() * (1.0 - w)))
}

/// Long-maturity weight density for averaged payoffs at drift index `mu > 0`:
/// the symmetric Beta law `Gamma(2 mu)/Gamma(mu)^2 (w(1-w))^(mu-1)`.
pub fn limiting_beta_density(w: f64, mu: f64) -> Result<f64> {
    check_weight(w)?;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid("mu", mu, "the Beta limit exists for mu > 0"));
    }
    let norm = gamma(2.0 * mu) / (gamma(mu) * gamma(mu));
    Ok(norm * (w * (1.0 - w)).powf(mu - 1.0))
}

/// Fixed-horizon weight density on a symmetric interior grid, with the exact
/// CDF tail mass attached.
pub fn european_curve(alpha: f64, chi: CorrelationScale, n_points: usize) -> Result<DensityCurve> {
    check_alpha(alpha)?;
    let grid = DensityCurve::uniform_interior_grid(n_points);
    let values: Result<Vec<f64>> = grid
        .iter()
        .map(|&w| correlated_weight_density(w, alpha, chi))
        .collect();
    let tail = 2.0 * correlated_weight_cdf(grid[0], alpha, chi)?;
    Ok(DensityCurve::new(grid, values?)?.with_tail_mass(tail))
}

/// Averaged-payoff weight density at drift index zero on a symmetric interior
/// grid. Tail mass beyond the grid is completed with the edge asymptotic,
/// which is accurate to a few percent there; the tails themselves carry
/// `O(1e-4)` mass for the maturities of interest.
pub fn asian_mu0_curve(alpha: f64, n_points: usize) -> Result<DensityCurve> {
    check_alpha(alpha)?;
    let grid = DensityCurve::uniform_interior_grid(n_points);
    let values: Result<Vec<f64>> = grid
        .iter()
        .map(|&w| asian_mu0_weight_density(w, alpha))
        .collect();
    let w_last = *grid.last().unwrap();
    Ok(DensityCurve::new(grid, values?)?.with_tail_mass(2.0 * asian_edge_tail(w_last, alpha)?))
}

/// `Int_{w_from}^{1} P_as1(w) dw` via the substitution `w = 1 - e^(-y)`,
/// which turns the edge asymptotic into a plain Gaussian-tailed integrand.
fn asian_edge_tail(w_from: f64, alpha: f64) -> Result<f64> {
    let y0 = -(1.0 - w_from).ln();
    let y_max = (y0 + 5.0).max(2.0 * (46.0 * alpha).sqrt() + 4.0);
    let q = quad::integrate(
        |y| {
            let w = 1.0 - (-y).exp();
            asian_mu0_edge_asymptotic(w, alpha).unwrap_or(0.0) * (-y).exp()
        },
        y0,
        y_max,
        QuadOptions::tolerances(1e-13, 1e-9),
    )?;
    Ok(q.value)
}

/// Beta-limit density on a symmetric interior grid with exact tail mass.
pub fn limiting_beta_curve(mu: f64, n_points: usize) -> Result<DensityCurve> {
    let grid = DensityCurve::uniform_interior_grid(n_points);
    let values: Result<Vec<f64>> = grid.iter().map(|&w| limiting_beta_density(w, mu)).collect();
    let h = grid[0];
    // Tail integral of w^(mu-1)(1-w)^(mu-1) over [0, h]: substitute y = w^mu
    // to remove the endpoint singularity for mu < 1.
    let norm = gamma(2.0 * mu) / (gamma(mu) * gamma(mu));
    let tail_one_side = quad::integrate(
        |y| (1.0 - y.powf(1.0 / mu)).powf(mu - 1.0) / mu,
        0.0,
        h.powf(mu),
        QuadOptions::tolerances(1e-13, 1e-10),
    )?
    .value;
    Ok(DensityCurve::new(grid, values?)?.with_tail_mass(2.0 * norm * tail_one_side))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn european_reference_values() {
        assert_relative_eq!(
            european_weight_density(0.3, 0.7).unwrap(),
            0.9987014816647627,
            max_relative = 1e-12
        );
        // At w = 1/2, alpha = 1/4 the density is 4/sqrt(2 pi).
        assert_relative_eq!(
            european_weight_density(0.5, 0.25).unwrap(),
            1.5957691216057307,
            max_relative = 1e-13
        );
    }

    #[test]
    fn correlated_reference_values() {
        let chi1 = CorrelationScale::from_chi(1.0).unwrap();
        assert_relative_eq!(
            correlated_weight_density(0.3, 1.0, chi1).unwrap(),
            1.2569027435695625,
            max_relative = 1e-12
        );
        // chi = 2, alpha = 1.5 gives logit variance exactly 4.
        let chi2 = CorrelationScale::from_chi(2.0).unwrap();
        assert_relative_eq!(
            correlated_weight_density(0.5, 1.5, chi2).unwrap(),
            0.7978845608028654,
            max_relative = 1e-12
        );
    }

    #[test]
    fn domain_errors() {
        assert!(european_weight_density(0.0, 1.0).is_err());
        assert!(european_weight_density(1.0, 1.0).is_err());
        assert!(european_weight_density(0.5, -1.0).is_err());
        assert!(matches!(
            european_weight_density(0.5, 0.0).unwrap_err(),
            Error::Degenerate(_)
        ));
        assert!(matches!(
            asian_mu0_edge_asymptotic(0.3, 1.0).unwrap_err(),
            Error::UseSymmetry { .. }
        ));
        assert!(limiting_beta_density(0.5, 0.0).is_err());
        assert!(limiting_beta_density(0.5, -1.0).is_err());
    }

    #[test]
    fn critical_maturity_closed_forms() {
        assert_eq!(critical_maturity_european(CorrelationScale::Independent), 0.5);
        let chi1 = CorrelationScale::from_chi(1.0).unwrap();
        assert_relative_eq!(critical_maturity_european(chi1), 1.5, max_relative = 1e-14);
        let chi_sqrt2 = CorrelationScale::from_chi(std::f64::consts::SQRT_2).unwrap();
        assert_relative_eq!(critical_maturity_european(chi_sqrt2), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn asian_mu0_reference_values() {
        let cases = [
            (0.5, 0.5, 1.9641064292),
            (0.25, 0.5, 1.04340732744),
            (0.5, 1.63, 1.09761721043),
            (0.25, 1.63, 1.08573569723),
            (0.5, 3.5, 0.757210446741),
            (0.25, 3.5, 0.868606881692),
        ];
        for (w, alpha, expect) in cases {
            assert_relative_eq!(
                asian_mu0_weight_density(w, alpha).unwrap(),
                expect,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn asian_mu0_curve_is_normalized_and_symmetric() {
        for alpha in [0.5, 1.63, 3.5] {
            let c = asian_mu0_curve(alpha, 801).unwrap();
            assert_relative_eq!(c.mass(), 1.0, max_relative = 2e-4);
            assert!(c.symmetry_defect().unwrap() < 1e-9, "alpha={alpha}");
        }
    }

    #[test]
    fn edge_asymptotic_tracks_exact_density() {
        // Deviation stays within a few percent well before the edge and the
        // large-maturity amplitude scales as 1/sqrt(alpha).
        for w in [0.80, 0.85, 0.90, 0.95] {
            let exact = asian_mu0_weight_density(w, 3.5).unwrap();
            let asym = asian_mu0_edge_asymptotic(w, 3.5).unwrap();
            assert!(
                (asym / exact - 1.0).abs() < 0.025,
                "w={w}: exact {exact}, asymptotic {asym}"
            );
        }
        let ratio = asian_mu0_edge_asymptotic(0.9, 400.0).unwrap()
            / asian_mu0_edge_asymptotic(0.9, 100.0).unwrap();
        assert_relative_eq!(ratio, 0.50658589, max_relative = 1e-6);
    }

    #[test]
    fn beta_limit_reference_values() {
        assert_relative_eq!(
            limiting_beta_density(0.5, 0.5).unwrap(),
            0.6366197723675813,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            limiting_beta_density(0.2, 0.5).unwrap(),
            0.7957747154594767,
            max_relative = 1e-12
        );
        assert_relative_eq!(limiting_beta_density(0.5, 2.0).unwrap(), 1.5, max_relative = 1e-12);
        assert_relative_eq!(limiting_beta_density(0.2, 2.0).unwrap(), 0.96, max_relative = 1e-12);
    }

    #[test]
    fn beta_curve_mass_with_singular_edges() {
        // Trapezoid error is dominated by the first panel next to a
        // w^(mu-1) singularity, so the tolerance loosens for mu < 1.
        for (mu, tol) in [(0.5, 2e-3), (1.0, 1e-10), (2.0, 1e-5)] {
            let c = limiting_beta_curve(mu, 1001).unwrap();
            assert_relative_eq!(c.mass(), 1.0, max_relative = tol);
        }
    }

    proptest! {
        #[test]
        fn independent_limit_of_coupling(w in 0.02f64..0.98, alpha in 0.05f64..20.0) {
            let big = CorrelationScale::from_chi(1e9).unwrap();
            let a = correlated_weight_density(w, alpha, big).unwrap();
            let b = european_weight_density(w, alpha).unwrap();
            prop_assert!((a / b - 1.0).abs() < 1e-12);
        }

        // Beyond alpha ~ 5 the fixed-horizon density piles up against the
        // endpoints and a uniform grid stops being a sensible quadrature,
        // hence the range cap. Even at the cap the edge panels see a steep
        // convex spike and trapezoid overcounts it by ~2e-3, which sets the
        // tolerance.
        #[test]
        fn european_mass_is_one(alpha in 0.05f64..5.0, inv_chi in 0.0f64..3.0) {
            let chi = CorrelationScale::from_inv_chi(inv_chi).unwrap();
            let c = european_curve(alpha, chi, 2001).unwrap();
            prop_assert!((c.mass() - 1.0).abs() < 5e-3, "mass {}", c.mass());
        }

        #[test]
        fn cdf_is_antiderivative_of_density(w in 0.1f64..0.9, alpha in 0.1f64..10.0) {
            let h = 1e-6;
            let d = (european_weight_cdf(w + h, alpha).unwrap()
                - european_weight_cdf(w - h, alpha).unwrap()) / (2.0 * h);
            let p = european_weight_density(w, alpha).unwrap();
            prop_assert!((d / p - 1.0).abs() < 1e-6);
        }

        #[test]
        fn quantile_inverts_cdf(p in 0.01f64..0.99, alpha in 0.1f64..10.0, inv_chi in 0.0f64..2.0) {
            let chi = CorrelationScale::from_inv_chi(inv_chi).unwrap();
            let w = correlated_weight_quantile(p, alpha, chi).unwrap();
            let back = correlated_weight_cdf(w, alpha, chi).unwrap();
            prop_assert!((back - p).abs() < 1e-10);
        }

        #[test]
        fn densities_are_symmetric(w in 0.05f64..0.5, alpha in 0.25f64..4.0) {
            let e = european_weight_density(w, alpha).unwrap();
            let e_ref = european_weight_density(1.0 - w, alpha).unwrap();
            prop_assert!((e / e_ref - 1.0).abs() < 1e-12);

            let a = asian_mu0_weight_density(w, alpha).unwrap();
            let a_ref = asian_mu0_weight_density(1.0 - w, alpha).unwrap();
            prop_assert!((a / a_ref - 1.0).abs() < 2e-7,
                         "asymmetry at w={}, alpha={}: {} vs {}", w, alpha, a, a_ref);
        }
    }
}
