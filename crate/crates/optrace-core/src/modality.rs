//! Shape classification of weight densities and location of the
//! unimodal-to-bimodal transition: in maturity (analytic families and MC
//! ensembles) and in correlation strength (the (mu, 1/chi) phase diagram).
//!
//! The transition criterion everywhere is the sign of the central curvature
//! of the symmetric density at w = 1/2: negative means a single central
//! peak, positive means a central dip flanked by two maxima. Mode counting
//! is ill-conditioned exactly at the transition (the density is locally
//! flat); the curvature sign is not.

use crate::curve::{DensityCurve, Histogram};
use crate::error::{Error, Result};
use crate::montecarlo::{run_race, RaceStyle, WalkConfig};
use crate::params::CorrelationScale;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Unimodal,
    UniformPlateau,
    /// Two interior maxima with the density falling off toward 0 and 1.
    BimodalM,
    /// Density rising into the endpoints themselves.
    BimodalU,
}

#[derive(Debug, Clone)]
pub struct ModalityReport {
    pub shape: ShapeClass,
    /// Discrete second difference of the density at the center.
    pub central_second_difference: f64,
    /// (max - min) / mean over w in [0.2, 0.8].
    pub plateau_spread: f64,
    /// Location of the right-half maximum (the left is its mirror).
    pub right_mode: f64,
}

/// Classifies a symmetric density curve. `prominence_eps` is the relative
/// threshold separating "flat" from "structured": it bounds the plateau
/// spread and the minimum significant central curvature.
pub fn classify(curve: &DensityCurve, prominence_eps: f64) -> Result<ModalityReport> {
    if !(prominence_eps > 0.0 && prominence_eps < 1.0) {
        return Err(Error::invalid(
            "prominence_eps",
            prominence_eps,
            "must lie in (0, 1)",
        ));
    }
    let defect = curve.symmetry_defect()?;
    if defect > 1e-6 {
        return Err(Error::Contract(format!(
            "classification needs a symmetric curve; defect {defect:.3e} (symmetrize first)"
        )));
    }
    let grid = curve.grid();
    let values = curve.values();
    let n = grid.len();

    // Central discrete curvature from the three points nearest 1/2.
    let mid = n / 2;
    let (d2, center_value) = if n % 2 == 1 {
        (
            values[mid + 1] + values[mid - 1] - 2.0 * values[mid],
            values[mid],
        )
    } else {
        // Even grids straddle the center; use the average pair and its
        // neighbors one step out.
        let c = 0.5 * (values[mid] + values[mid - 1]);
        (values[mid + 1] + values[mid - 2] - 2.0 * c, c)
    };

    let interior: Vec<f64> = grid
        .iter()
        .zip(values)
        .filter(|&(w, _)| (0.2..=0.8).contains(w))
        .map(|(_, &v)| v)
        .collect();
    let (p_max, p_min) = interior
        .iter()
        .fold((f64::MIN, f64::MAX), |(a, b), &v| (a.max(v), b.min(v)));
    let p_mean = interior.iter().sum::<f64>() / interior.len() as f64;
    let plateau_spread = (p_max - p_min) / p_mean;

    // Right-half maximum (the mirror point carries the left one).
    let (right_idx, right_value) = grid
        .iter()
        .enumerate()
        .filter(|&(_, w)| *w >= 0.5)
        .map(|(i, _)| (i, values[i]))
        .fold((mid, f64::MIN), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let right_mode = grid[right_idx];

    // Bimodality is called on peak prominence, not on the curvature sign:
    // the discrete second difference at the center is O(h^2) and drowns in
    // sampling noise on histogram-backed curves, while a mode that beats
    // the center by a fixed fraction of the peak does not.
    let scale = curve.max_value();
    let prominence = (right_value - center_value) / scale;
    let shape = if prominence > prominence_eps && right_mode > 0.5 + 1e-12 {
        // The two bimodal families differ at the boundary: an M-shape turns
        // back down before it, a U-shape is still rising at the last grid
        // point.
        if right_idx >= n - 1 - (n / 100) {
            ShapeClass::BimodalU
        } else {
            ShapeClass::BimodalM
        }
    } else if plateau_spread <= prominence_eps {
        ShapeClass::UniformPlateau
    } else {
        ShapeClass::Unimodal
    };

    Ok(ModalityReport {
        shape,
        central_second_difference: d2,
        plateau_spread,
        right_mode,
    })
}

/// Central curvature probe of a density family member: discrete second
/// difference of `density(alpha, .)` at 1/2 with offset `delta`.
fn family_curvature<F>(density: &mut F, alpha: f64, delta: f64) -> Result<f64>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    Ok(density(alpha, 0.5 + delta)? + density(alpha, 0.5 - delta)? - 2.0 * density(alpha, 0.5)?)
}

/// Bisection for the maturity where the central curvature of a density
/// family changes sign. `density(alpha, w)` evaluates one family member.
/// Returns `None` when the bracket does not straddle a sign change (which
/// is the expected answer for families that never turn bimodal).
///
/// The discrete offset `delta` shifts the located root by O(delta^2 / 3)
/// through the fourth derivative, so keep it small relative to the wanted
/// accuracy.
pub fn critical_maturity<F>(
    mut density: F,
    bracket: (f64, f64),
    tol: f64,
    delta: f64,
) -> Result<Option<f64>>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid("bracket", hi, "need 0 < lo < hi"));
    }
    if !(tol > 0.0) || !(delta > 0.0 && delta < 0.25) {
        return Err(Error::invalid("tol/delta", delta, "need tol > 0 and 0 < delta < 0.25"));
    }
    let f_lo = family_curvature(&mut density, lo, delta)?;
    let f_hi = family_curvature(&mut density, hi, delta)?;
    if f_lo.signum() == f_hi.signum() {
        return Ok(None);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = family_curvature(&mut density, mid, delta)?;
        if f_mid == 0.0 {
            return Ok(Some(mid));
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Curvature of a symmetrized histogram at the center: weighted
/// least-squares fit of `density ~ a + b x + c x^2` in `x = (w - 1/2)^2`
/// over the bins with `|w - 1/2| <= half_window`, Poisson weights. The
/// `c` term absorbs the quartic shape of the density, so the window can be
/// wide enough to keep the variance of `b` useful. Returns the central
/// curvature `2 b` and its standard error.
pub fn histogram_central_curvature(hist: &Histogram, half_window: f64) -> Result<(f64, f64)> {
    if !(half_window > 0.0 && half_window < 0.5) {
        return Err(Error::invalid("half_window", half_window, "must lie in (0, 0.5)"));
    }
    let sym = hist.symmetrized();
    let centers = sym.centers();
    let densities = sym.density_values();
    let n = sym.n_paths() as f64;
    let nb = sym.n_bins() as f64;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new(); // (x, y, weight)
    for (w, d) in centers.into_iter().zip(densities) {
        if (w - 0.5).abs() <= half_window && d > 0.0 {
            let x = (w - 0.5) * (w - 0.5);
            // Var of a bin density estimate: d * nb / n (Poisson counts).
            rows.push((x, d, n / (d * nb)));
        }
    }
    if rows.len() < 7 {
        return Err(Error::Degenerate(format!(
            "{} populated bins in the curvature window",
            rows.len()
        )));
    }
    // Normal equations in the monomial basis; x spans [0, half_window^2],
    // so rescale by its max to keep the 3x3 system well conditioned.
    let x_scale = half_window * half_window;
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for &(x, y, w) in &rows {
        let u = x / x_scale;
        let mut uk = w;
        for sk in s.iter_mut() {
            *sk += uk;
            uk *= u;
        }
        let mut uy = w * y;
        for tk in t.iter_mut() {
            *tk += uy;
            uy *= u;
        }
    }
    let a = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if !(det > 0.0) {
        return Err(Error::Degenerate("curvature window has no spread in w".into()));
    }
    // Cramer column replacement for the x coefficient.
    let b_scaled = (a[0][0] * (t[1] * a[2][2] - a[1][2] * t[2])
        - t[0] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * t[2] - t[1] * a[2][0]))
        / det;
    // Var(b) is the middle diagonal entry of the inverse normal matrix.
    let var_b_scaled = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
    let slope = b_scaled / x_scale;
    let se = var_b_scaled.max(0.0).sqrt() / x_scale;
    Ok((2.0 * slope, 2.0 * se))
}

#[derive(Debug, Clone, Copy)]
pub struct CurvatureProbe {
    pub alpha: f64,
    pub curvature: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone)]
pub enum McCritical {
    Estimate {
        alpha_c: f64,
        std_error: f64,
        probes: Vec<CurvatureProbe>,
    },
    Inconclusive {
        probes: Vec<CurvatureProbe>,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct McBudget {
    pub n_paths: usize,
    pub n_steps: usize,
    pub n_bins: usize,
    pub seed: u64,
}

impl Default for McBudget {
    fn default() -> Self {
        McBudget {
            n_paths: 1_000_000,
            n_steps: 384,
            n_bins: 200,
            seed: 0x1d872b41,
        }
    }
}

/// Monte Carlo estimate of the critical maturity: sample the central
/// curvature at `probes` maturities across the bracket, locate the pair of
/// confident curvature signs that bracket the crossing, then fit a weighted
/// line through just those probes and the unresolved ones between them. The
/// standard error propagates the fit covariance through the root.
///
/// A transition is only reported if some probe shows convexity at z >= 3;
/// extrapolating a crossing from all-negative curvatures would announce a
/// transition that was never observed, and for positive drift the curvature
/// trend genuinely rises toward a negative asymptote, so no slope test can
/// stand in for direct evidence.
///
/// The fit is deliberately local. Curvature against maturity is far from
/// linear across a wide bracket: it dives toward -inf at small maturity and
/// saturates above the transition, so a line through every probe lands its
/// root well above the true crossing while reporting a small standard
/// error. Only the stretch where the sign actually flips is close enough to
/// linear to trust, and the confident signs on both ends guarantee the
/// crossing sits inside the fitted window.
///
/// Resolving the sign flip needs real sampling depth: the curvature
/// standard error scales like `1 / sqrt(paths)` (bin count cancels in the
/// fit), and for the average-style race the central contrast near the
/// transition is weak, so budgets below a few hundred thousand paths mostly
/// return noise.
pub fn critical_maturity_mc(
    style: RaceStyle,
    mu: f64,
    chi: CorrelationScale,
    bracket: (f64, f64),
    probes: usize,
    budget: &McBudget,
) -> Result<McCritical> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid("bracket", hi, "need 0 < lo < hi"));
    }
    if probes < 3 {
        return Err(Error::invalid("probes", probes as f64, "need at least 3 probes"));
    }
    let mut samples = Vec::with_capacity(probes);
    for i in 0..probes {
        let alpha = lo + (hi - lo) * i as f64 / (probes - 1) as f64;
        let cfg = WalkConfig::for_alpha(
            alpha,
            budget.n_steps,
            mu,
            chi,
            budget.n_paths,
            budget.seed.wrapping_add(0x9e37_79b9 * i as u64),
        )?;
        let hist = run_race(&cfg, style, budget.n_bins)?;
        let (curv, se) = histogram_central_curvature(&hist, 0.16)?;
        samples.push(CurvatureProbe {
            alpha,
            curvature: curv,
            std_error: se,
        });
    }
    // A transition inside the bracket needs direct evidence of convexity at
    // some probe; extrapolating a zero crossing from all-negative curvatures
    // would report a transition that was never observed.
    let best_z = samples
        .iter()
        .map(|p| p.curvature / p.std_error)
        .fold(f64::NEG_INFINITY, f64::max);
    if best_z < 3.0 {
        return Ok(McCritical::Inconclusive {
            probes: samples,
            reason: "no probe shows significant central convexity".into(),
        });
    }
    // A probe pins its sign once the curvature clears two standard errors.
    // The crossing lies between the last confident concavity and the first
    // confident convexity after it; everything in between is noise-level and
    // belongs to the local fit.
    let confident = |p: &CurvatureProbe| p.curvature.abs() >= 2.0 * p.std_error;
    let last_neg = samples
        .iter()
        .rposition(|p| confident(p) && p.curvature < 0.0);
    let Some(i) = last_neg else {
        return Ok(McCritical::Inconclusive {
            probes: samples,
            reason: "no probe shows significant concavity; the transition lies at or below the bracket".into(),
        });
    };
    let first_pos = samples[i..]
        .iter()
        .position(|p| confident(p) && p.curvature > 0.0)
        .map(|k| i + k);
    let Some(j) = first_pos else {
        return Ok(McCritical::Inconclusive {
            probes: samples,
            reason: "curvature signs do not settle above the bracket bottom".into(),
        });
    };
    let fitted: Vec<CurvatureProbe> = samples[i..=j].to_vec();
    // Weighted linear fit curvature = u + v * alpha.
    let sw: f64 = fitted.iter().map(|p| 1.0 / (p.std_error * p.std_error)).sum();
    let swx: f64 = fitted
        .iter()
        .map(|p| p.alpha / (p.std_error * p.std_error))
        .sum();
    let swy: f64 = fitted
        .iter()
        .map(|p| p.curvature / (p.std_error * p.std_error))
        .sum();
    let swxx: f64 = fitted
        .iter()
        .map(|p| p.alpha * p.alpha / (p.std_error * p.std_error))
        .sum();
    let swxy: f64 = fitted
        .iter()
        .map(|p| p.alpha * p.curvature / (p.std_error * p.std_error))
        .sum();
    let det = sw * swxx - swx * swx;
    let v = (sw * swxy - swx * swy) / det;
    let u = (swxx * swy - swx * swxy) / det;
    if !(v > 0.0) {
        return Ok(McCritical::Inconclusive {
            probes: samples,
            reason: "curvature does not rise across the sign change".into(),
        });
    }
    let root = -u / v;
    let var_u = swxx / det;
    let var_v = sw / det;
    let cov_uv = -swx / det;
    let var_root = (var_u + root * root * var_v + 2.0 * root * cov_uv) / (v * v);
    // The confident signs put the crossing between the fitted endpoints;
    // a root escaping that window means the local fit is noise-dominated.
    let (w_lo, w_hi) = (fitted[0].alpha, fitted[fitted.len() - 1].alpha);
    let slack = w_hi - w_lo;
    if !(w_lo - slack <= root && root <= w_hi + slack) {
        return Ok(McCritical::Inconclusive {
            probes: samples,
            reason: format!("fitted root {root:.4} lies outside the sign-change window"),
        });
    }
    Ok(McCritical::Estimate {
        alpha_c: root,
        std_error: var_root.max(0.0).sqrt(),
        probes: samples,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellVerdict {
    /// Successive refinements converged to a stable unimodal curve.
    ConvergedUnimodal,
    /// Bimodality appeared at this step count.
    Transitions { n_c: usize },
    /// Budget exhausted before either outcome.
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct ChiCriticalReport {
    pub verdicts: Vec<(f64, CellVerdict)>,
    /// Largest chi on the grid whose trajectory converged unimodal.
    pub chi_c: Option<f64>,
}

fn smoothed_curve_for_shape(hist: &Histogram) -> DensityCurve {
    hist.symmetrized().smoothed_curve(2.0)
}

/// Verdict for one (mu, chi) cell: walk the step-count schedule at fixed
/// step size (maturity grows with the schedule), stop at the first bimodal
/// shape or once successive curves agree in sup-norm.
pub fn cell_verdict(
    mu: f64,
    chi: CorrelationScale,
    n_schedule: &[usize],
    dt: f64,
    conv_eps: f64,
    budget: &McBudget,
) -> Result<CellVerdict> {
    if n_schedule.len() < 2 {
        return Err(Error::invalid(
            "n_schedule",
            n_schedule.len() as f64,
            "need at least two step counts",
        ));
    }
    let mut previous: Option<DensityCurve> = None;
    for (k, &n_steps) in n_schedule.iter().enumerate() {
        let cfg = WalkConfig {
            n_steps,
            dt,
            mu,
            chi,
            n_paths: budget.n_paths,
            seed: budget.seed.wrapping_add(0x51_7c_c1 * k as u64),
        };
        let hist = run_race(&cfg, RaceStyle::Asian, budget.n_bins)?;
        let curve = smoothed_curve_for_shape(&hist);
        let report = classify(&curve, 0.05)?;
        match report.shape {
            ShapeClass::BimodalM | ShapeClass::BimodalU => {
                return Ok(CellVerdict::Transitions { n_c: n_steps });
            }
            _ => {}
        }
        if let Some(prev) = previous {
            let scale = prev.max_value();
            let sup = prev
                .values()
                .iter()
                .zip(curve.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if sup <= conv_eps * scale {
                return Ok(CellVerdict::ConvergedUnimodal);
            }
        }
        previous = Some(curve);
    }
    Ok(CellVerdict::Inconclusive)
}

/// Correlation threshold scan: the largest chi whose shape trajectory
/// converges unimodal. The grid should be sorted; verdicts are returned
/// for every chi so callers can see the crossover and any inconclusive
/// cells near it.
pub fn chi_critical(
    mu: f64,
    chi_grid: &[f64],
    n_schedule: &[usize],
    dt: f64,
    conv_eps: f64,
    budget: &McBudget,
) -> Result<ChiCriticalReport> {
    if chi_grid.is_empty() {
        return Err(Error::invalid("chi_grid", 0.0, "need at least one chi"));
    }
    let mut verdicts = Vec::with_capacity(chi_grid.len());
    for &chi in chi_grid {
        let scale = CorrelationScale::from_chi(chi)?;
        let v = cell_verdict(mu, scale, n_schedule, dt, conv_eps, budget)?;
        verdicts.push((chi, v));
    }
    let chi_c = verdicts
        .iter()
        .filter(|(_, v)| *v == CellVerdict::ConvergedUnimodal)
        .map(|(c, _)| *c)
        .fold(None, |best: Option<f64>, c| Some(best.map_or(c, |b| b.max(c))));
    Ok(ChiCriticalReport { verdicts, chi_c })
}

#[derive(Debug, Clone)]
pub struct PhaseCell {
    pub mu: f64,
    pub inv_chi: f64,
    pub verdict: CellVerdict,
}

#[derive(Debug, Clone)]
pub struct PhaseDiagram {
    pub cells: Vec<PhaseCell>,
    /// One (mu_c, 1/chi) point per correlation row that brackets the
    /// transition: midpoint between the largest transitioning mu and the
    /// smallest non-transitioning mu.
    pub boundary: Vec<(f64, f64)>,
}

/// Sweeps the (mu, 1/chi) plane cell by cell. `inv_chi = 0` means
/// independent drivers. Cells never abort the sweep: budget exhaustion is
/// recorded per cell.
pub fn phase_diagram(
    mu_grid: &[f64],
    inv_chi_grid: &[f64],
    n_schedule: &[usize],
    dt: f64,
    conv_eps: f64,
    budget: &McBudget,
) -> Result<PhaseDiagram> {
    if mu_grid.len() < 2 || inv_chi_grid.is_empty() {
        return Err(Error::invalid(
            "grids",
            mu_grid.len() as f64,
            "need >= 2 mu values and >= 1 correlation value",
        ));
    }
    let mut mus = mu_grid.to_vec();
    mus.sort_by(f64::total_cmp);
    let mut cells = Vec::with_capacity(mus.len() * inv_chi_grid.len());
    let mut boundary = Vec::new();
    for &inv_chi in inv_chi_grid {
        let scale = CorrelationScale::from_inv_chi(inv_chi)?;
        let mut row = Vec::with_capacity(mus.len());
        for &mu in &mus {
            let verdict = cell_verdict(mu, scale, n_schedule, dt, conv_eps, budget)?;
            row.push(verdict.clone());
            cells.push(PhaseCell {
                mu,
                inv_chi,
                verdict,
            });
        }
        let last_transition = row
            .iter()
            .enumerate()
            .filter(|(_, v)| matches!(v, CellVerdict::Transitions { .. }))
            .map(|(i, _)| i)
            .next_back();
        let first_stable = row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == CellVerdict::ConvergedUnimodal)
            .map(|(i, _)| i)
            .next();
        if let (Some(t), Some(s)) = (last_transition, first_stable) {
            if t < s {
                boundary.push((0.5 * (mus[t] + mus[s]), inv_chi));
            }
        }
    }
    Ok(PhaseDiagram { cells, boundary })
}
