use std::path::PathBuf;

use optrace_core::analytic::{
    asian_mu0_curve, asian_mu0_edge_asymptotic, asian_mu0_weight_density, correlated_weight_density,
    limiting_beta_curve,
};
use optrace_core::convolve::{AsianWeightDensity, PsiRoute};
use optrace_core::modality::{
    critical_maturity, critical_maturity_mc, phase_diagram, CellVerdict, McBudget, McCritical,
};
use optrace_core::montecarlo::{fit_effective_maturity, run_race, RaceStyle, WalkConfig};
use optrace_core::{CorrelationScale, DensityCurve, ModelParams};

use crate::output::{fmt_full, out_path, CsvDoc, PhasePlot, SvgPlot};
use crate::{
    CliError, CriticalArgs, CriticalFamily, Ctx, DensityArgs, DensityFamily, Method, PhaseArgs,
    SimulateArgs, Style,
};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn chi_scale(chi: Option<f64>) -> Result<CorrelationScale, CliError> {
    match chi {
        None => Ok(CorrelationScale::Independent),
        Some(v) => Ok(CorrelationScale::from_chi(v)?),
    }
}

fn alpha_label(alpha: f64) -> String {
    format!("{alpha}")
}

fn announce(path: &PathBuf) {
    say!("wrote {}", path.display());
}

pub fn density(args: &DensityArgs, ctx: &Ctx) -> Result<(), CliError> {
    let points = args.points.or(ctx.points).unwrap_or(401);
    if args.with_asymptotic && args.family != DensityFamily::AsianMu0 {
        return Err(usage("--with-asymptotic applies to the asian-mu0 family"));
    }
    if args.method.is_some() && args.family != DensityFamily::AsianNegMu {
        return Err(usage("--method applies to the asian-neg-mu family"));
    }
    if args.sigma_sq.is_some() && args.family != DensityFamily::AsianNegMu {
        return Err(usage("--sigma-sq applies to the asian-neg-mu family"));
    }
    match args.family {
        DensityFamily::European | DensityFamily::AsianMu0 => {
            if args.chi.is_some() {
                return Err(usage(
                    "this family has independent drivers; use european-correlated for --chi",
                ));
            }
            if args.mu.is_some() {
                return Err(usage("--mu does not apply to this family"));
            }
        }
        DensityFamily::EuropeanCorrelated => {
            if args.mu.is_some() {
                return Err(usage("--mu does not apply to this family"));
            }
        }
        DensityFamily::AsianNegMu | DensityFamily::BetaLimit => {
            if args.chi.is_some() {
                return Err(usage("this family has independent drivers"));
            }
        }
    }

    let mut doc = CsvDoc::new();
    doc.header("command", "density");
    doc.header("family", args.family.slug());
    doc.header("points", points);
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let mut grid_col: Option<Vec<f64>> = None;

    let push_curve = |doc: &mut CsvDoc,
                          series: &mut Vec<(String, Vec<(f64, f64)>)>,
                          grid_col: &mut Option<Vec<f64>>,
                          name: String,
                          curve: &DensityCurve| {
        if grid_col.is_none() {
            *grid_col = Some(curve.grid().to_vec());
        }
        doc.column(name.clone(), curve.values().to_vec());
        series.push((
            name,
            curve
                .grid()
                .iter()
                .copied()
                .zip(curve.values().iter().copied())
                .collect(),
        ));
    };

    match args.family {
        DensityFamily::European | DensityFamily::EuropeanCorrelated => {
            let chi = match args.family {
                DensityFamily::European => CorrelationScale::Independent,
                _ => chi_scale(Some(args.chi.ok_or_else(|| {
                    usage("european-correlated requires --chi")
                })?))?,
            };
            if let Some(c) = args.chi {
                doc.header("chi", c);
            }
            let alphas = if args.alphas.is_empty() {
                vec![0.25, 0.5, 0.7]
            } else {
                args.alphas.clone()
            };
            for &alpha in &alphas {
                let curve = optrace_core::analytic::european_curve(alpha, chi, points)?;
                push_curve(
                    &mut doc,
                    &mut series,
                    &mut grid_col,
                    format!("density_a{}", alpha_label(alpha)),
                    &curve,
                );
            }
        }
        DensityFamily::AsianMu0 => {
            let alphas = if args.alphas.is_empty() {
                vec![0.5, 1.63, 3.5]
            } else {
                args.alphas.clone()
            };
            for &alpha in &alphas {
                let curve = asian_mu0_curve(alpha, points)?;
                push_curve(
                    &mut doc,
                    &mut series,
                    &mut grid_col,
                    format!("density_a{}", alpha_label(alpha)),
                    &curve,
                );
                if args.with_asymptotic {
                    let grid = grid_col.as_ref().unwrap().clone();
                    let values: Result<Vec<f64>, _> = grid
                        .iter()
                        .map(|&w| {
                            let wa = if w > 0.5 { w } else { (1.0 - w).max(0.5 + 1e-12) };
                            asian_mu0_edge_asymptotic(wa, alpha)
                        })
                        .collect();
                    let values = values?;
                    doc.column(format!("asymptotic_a{}", alpha_label(alpha)), values.clone());
                    series.push((
                        format!("edge asymptotic a={}", alpha_label(alpha)),
                        grid.iter().copied().zip(values).collect(),
                    ));
                }
            }
        }
        DensityFamily::AsianNegMu => {
            let mu = args
                .mu
                .ok_or_else(|| usage("asian-neg-mu requires --mu < 0"))?;
            let sigma_sq = args.sigma_sq.unwrap_or(2.0);
            if !(sigma_sq > 0.0) {
                return Err(usage("--sigma-sq must be positive"));
            }
            let params = ModelParams::new(sigma_sq.sqrt(), mu)?;
            let route = match args.method.unwrap_or(Method::Exact) {
                Method::Exact => PsiRoute::Exact,
                Method::Approx => PsiRoute::Approx,
            };
            doc.header("mu", mu);
            doc.header("sigma_sq", sigma_sq);
            doc.header(
                "method",
                match route {
                    PsiRoute::Exact => "exact",
                    PsiRoute::Approx => "approx",
                },
            );
            let alphas = if args.alphas.is_empty() {
                vec![5.0]
            } else {
                args.alphas.clone()
            };
            for &alpha in &alphas {
                let dens = AsianWeightDensity::new(&params, alpha, route)?;
                let curve = dens.curve(points)?;
                push_curve(
                    &mut doc,
                    &mut series,
                    &mut grid_col,
                    format!("density_a{}", alpha_label(alpha)),
                    &curve,
                );
            }
        }
        DensityFamily::BetaLimit => {
            let mu = args
                .mu
                .ok_or_else(|| usage("beta-limit requires --mu > 0"))?;
            if !args.alphas.is_empty() {
                return Err(usage("beta-limit is the infinite-maturity curve; drop --alpha"));
            }
            doc.header("mu", mu);
            let curve = limiting_beta_curve(mu, points)?;
            push_curve(&mut doc, &mut series, &mut grid_col, "density".into(), &curve);
        }
    }

    let csv = out_path(&ctx.out_dir, &format!("density_{}.csv", args.family.slug()));
    doc.column_front("w", grid_col.unwrap_or_default());
    doc.write(&csv)?;
    announce(&csv);
    let svg = out_path(&ctx.out_dir, &format!("density_{}.svg", args.family.slug()));
    SvgPlot {
        title: format!("weight density, {}", args.family.slug()),
        x_label: "w".into(),
        y_label: "P(w)".into(),
        series,
    }
    .write(&svg)?;
    announce(&svg);
    Ok(())
}

pub fn simulate(args: &SimulateArgs, ctx: &Ctx) -> Result<(), CliError> {
    let style = match args.style {
        Style::European => RaceStyle::European,
        Style::Asian => RaceStyle::Asian,
    };
    let paths = args.paths.or(ctx.paths).unwrap_or(200_000);
    let steps = args.steps.or(ctx.steps).unwrap_or(match style {
        RaceStyle::European => 16,
        RaceStyle::Asian => 256,
    });
    let bins = args.bins.or(ctx.bins).unwrap_or(200);
    let chi = chi_scale(args.chi)?;
    if !ctx.seed_given {
        say!("seed={}", ctx.seed);
    }

    let mut doc = CsvDoc::new();
    doc.header("command", "simulate");
    doc.header(
        "style",
        match style {
            RaceStyle::European => "european",
            RaceStyle::Asian => "asian",
        },
    );
    doc.header("mu", args.mu);
    if let Some(c) = args.chi {
        doc.header("chi", c);
    }
    doc.header("paths", paths);
    doc.header("steps", steps);
    doc.header("bins", bins);
    doc.header("seed", ctx.seed);

    let mut w_col: Option<Vec<f64>> = None;
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, &alpha) in args.alphas.iter().enumerate() {
        let cfg = WalkConfig::for_alpha(
            alpha,
            steps,
            args.mu,
            chi,
            paths,
            ctx.seed.wrapping_add(i as u64),
        )?;
        let hist = run_race(&cfg, style, bins)?;
        let label = alpha_label(alpha);
        let centers = hist.centers();
        if w_col.is_none() {
            w_col = Some(centers.clone());
        }
        doc.header(format!("rejected_a{label}"), hist.rejected());
        columns.push((
            format!("count_a{label}"),
            hist.counts().iter().map(|&c| c as f64).collect(),
        ));
        let dens = hist.density_values();
        series.push((
            format!("simulated a={label}"),
            centers.iter().copied().zip(dens.iter().copied()).collect(),
        ));
        columns.push((format!("density_a{label}"), dens));
        if args.fit {
            let (fitted, residual) = fit_effective_maturity(&hist)?;
            doc.header(format!("fit_alpha_a{label}"), fmt_full(fitted));
            doc.header(format!("fit_residual_a{label}"), fmt_full(residual));
            say!("fit a={label}: alpha={} residual={}", fmt_full(fitted), fmt_full(residual));
        }
        if args.overlay_analytic {
            let model: Vec<f64> = match (style, args.mu) {
                (RaceStyle::European, m) if m == 0.0 => centers
                    .iter()
                    .map(|&w| correlated_weight_density(w, alpha, chi))
                    .collect::<Result<_, _>>()?,
                (RaceStyle::Asian, m) if m == 0.0 && chi.is_independent() => centers
                    .iter()
                    .map(|&w| asian_mu0_weight_density(w, alpha))
                    .collect::<Result<_, _>>()?,
                (RaceStyle::Asian, m) if m < 0.0 && chi.is_independent() && alpha >= 5.0 => {
                    let params = ModelParams::new(2f64.sqrt(), m)?;
                    let dens = AsianWeightDensity::new(&params, alpha, PsiRoute::Exact)?;
                    centers
                        .iter()
                        .map(|&w| dens.density(w))
                        .collect::<Result<_, _>>()?
                }
                _ => {
                    return Err(usage(
                        "no closed-form overlay here: available for european with mu = 0, \
                         asian with mu = 0, and independent asian with mu < 0 at alpha >= 5",
                    ))
                }
            };
            series.push((
                format!("model a={label}"),
                centers.iter().copied().zip(model.iter().copied()).collect(),
            ));
            columns.push((format!("analytic_a{label}"), model));
        }
    }
    doc.column_front("w", w_col.unwrap_or_default());
    for (name, values) in columns {
        doc.column(name, values);
    }
    let csv = out_path(&ctx.out_dir, "simulate.csv");
    doc.write(&csv)?;
    announce(&csv);
    let svg = out_path(&ctx.out_dir, "simulate.svg");
    SvgPlot {
        title: "simulated weight histogram".into(),
        x_label: "w".into(),
        y_label: "P(w)".into(),
        series,
    }
    .write(&svg)?;
    announce(&svg);
    Ok(())
}

pub fn critical(args: &CriticalArgs, ctx: &Ctx) -> Result<(), CliError> {
    let bracket = match &args.bracket {
        Some(b) => (b[0], b[1]),
        None => match args.family {
            CriticalFamily::European | CriticalFamily::EuropeanCorrelated => (0.02, 12.0),
            CriticalFamily::AsianMu0 => (1.0, 2.4),
            CriticalFamily::AsianMc => (0.5, 2.0),
        },
    };
    match args.family {
        CriticalFamily::AsianMc => {}
        _ => {
            for (flag, name) in [
                (args.mu.is_some(), "--mu"),
                (args.probes.is_some(), "--probes"),
                (args.paths.is_some(), "--paths"),
                (args.steps.is_some(), "--steps"),
                (args.bins.is_some(), "--bins"),
            ] {
                if flag {
                    return Err(usage(format!("{name} applies to the asian-mc family")));
                }
            }
        }
    }

    let mut doc = CsvDoc::new();
    doc.header("command", "critical");
    doc.header("family", args.family.slug());
    doc.header("bracket_lo", bracket.0);
    doc.header("bracket_hi", bracket.1);

    match args.family {
        CriticalFamily::European | CriticalFamily::EuropeanCorrelated | CriticalFamily::AsianMu0 => {
            let tol = args.tol.unwrap_or(match args.family {
                CriticalFamily::AsianMu0 => 1e-4,
                _ => 1e-8,
            });
            let chi = match args.family {
                CriticalFamily::European => {
                    if args.chi.is_some() {
                        return Err(usage(
                            "european is the independent-driver family; use european-correlated",
                        ));
                    }
                    CorrelationScale::Independent
                }
                CriticalFamily::EuropeanCorrelated => chi_scale(Some(args.chi.ok_or_else(
                    || usage("european-correlated requires --chi"),
                )?))?,
                _ => {
                    if args.chi.is_some() {
                        return Err(usage("asian-mu0 has independent drivers"));
                    }
                    CorrelationScale::Independent
                }
            };
            doc.header("tol", tol);
            doc.header("delta", args.delta);
            if let Some(c) = args.chi {
                doc.header("chi", c);
            }
            let root = match args.family {
                CriticalFamily::AsianMu0 => critical_maturity(
                    |alpha, w| asian_mu0_weight_density(w, alpha),
                    bracket,
                    tol,
                    args.delta,
                )?,
                _ => critical_maturity(
                    |alpha, w| correlated_weight_density(w, alpha, chi),
                    bracket,
                    tol,
                    args.delta,
                )?,
            };
            let csv = out_path(&ctx.out_dir, &format!("critical_{}.csv", args.family.slug()));
            match root {
                Some(a) => {
                    say!("alpha_c={}", fmt_full(a));
                    doc.column("alpha_c", vec![a]);
                }
                None => {
                    say!("alpha_c=none");
                    doc.column("alpha_c", vec![]);
                }
            }
            doc.write(&csv)?;
            announce(&csv);
        }
        CriticalFamily::AsianMc => {
            let mu = args.mu.ok_or_else(|| usage("asian-mc requires --mu"))?;
            let chi = chi_scale(args.chi)?;
            let probes = args.probes.or(ctx.probes).unwrap_or(7);
            let budget = McBudget {
                n_paths: args.paths.or(ctx.paths).unwrap_or(1_000_000),
                n_steps: args.steps.or(ctx.steps).unwrap_or(256),
                n_bins: args.bins.or(ctx.bins).unwrap_or(200),
                seed: ctx.seed,
            };
            if !ctx.seed_given {
                say!("seed={}", ctx.seed);
            }
            doc.header("mu", mu);
            if let Some(c) = args.chi {
                doc.header("chi", c);
            }
            doc.header("probes", probes);
            doc.header("paths", budget.n_paths);
            doc.header("steps", budget.n_steps);
            doc.header("bins", budget.n_bins);
            doc.header("seed", budget.seed);
            let outcome = critical_maturity_mc(RaceStyle::Asian, mu, chi, bracket, probes, &budget)?;
            let probes_list = match &outcome {
                McCritical::Estimate {
                    alpha_c,
                    std_error,
                    probes,
                } => {
                    say!("alpha_c={}", fmt_full(*alpha_c));
                    say!("std_error={}", fmt_full(*std_error));
                    doc.header("alpha_c", fmt_full(*alpha_c));
                    doc.header("std_error", fmt_full(*std_error));
                    probes
                }
                McCritical::Inconclusive { probes, reason } => {
                    say!("alpha_c=none");
                    say!("reason: {reason}");
                    doc.header("outcome", reason);
                    probes
                }
            };
            doc.column("alpha", probes_list.iter().map(|p| p.alpha).collect());
            doc.column("curvature", probes_list.iter().map(|p| p.curvature).collect());
            doc.column(
                "std_error",
                probes_list.iter().map(|p| p.std_error).collect(),
            );
            let csv = out_path(&ctx.out_dir, "critical_asian-mc.csv");
            doc.write(&csv)?;
            announce(&csv);
        }
    }
    Ok(())
}

pub fn phase(args: &PhaseArgs, ctx: &Ctx) -> Result<(), CliError> {
    let schedule = args
        .schedule
        .clone()
        .unwrap_or_else(|| vec![32, 64, 128, 256, 512]);
    let budget = McBudget {
        n_paths: args.paths.or(ctx.paths).unwrap_or(100_000),
        n_steps: *schedule.last().unwrap_or(&512),
        n_bins: args.bins.or(ctx.bins).unwrap_or(100),
        seed: ctx.seed,
    };
    if !ctx.seed_given {
        say!("seed={}", ctx.seed);
    }
    let diagram = phase_diagram(
        &args.mus,
        &args.inv_chis,
        &schedule,
        args.dt,
        args.conv_eps,
        &budget,
    )?;

    let schedule_str = schedule
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",");
    let mut head = String::new();
    head.push_str("# command=phase-diagram\n");
    head.push_str(&format!("# schedule={schedule_str}\n"));
    head.push_str(&format!("# dt={}\n", args.dt));
    head.push_str(&format!("# conv_eps={}\n", args.conv_eps));
    head.push_str(&format!("# paths={}\n", budget.n_paths));
    head.push_str(&format!("# bins={}\n", budget.n_bins));
    head.push_str(&format!("# seed={}\n", budget.seed));

    let mut body = String::from("mu,inv_chi,class,alpha_c\n");
    let mut plot_cells = Vec::new();
    for cell in &diagram.cells {
        let (class, alpha_c) = match cell.verdict {
            CellVerdict::ConvergedUnimodal => ("converged_unimodal", f64::NAN),
            CellVerdict::Transitions { n_c } => ("transitions", 0.5 * n_c as f64 * args.dt),
            CellVerdict::Inconclusive => ("inconclusive", f64::NAN),
        };
        body.push_str(&format!(
            "{},{},{class},{}\n",
            fmt_full(cell.mu),
            fmt_full(cell.inv_chi),
            fmt_full(alpha_c)
        ));
        say!(
            "mu={} inv_chi={} class={class} alpha_c={}",
            cell.mu,
            cell.inv_chi,
            if alpha_c.is_nan() {
                "none".to_string()
            } else {
                format!("{alpha_c}")
            }
        );
        plot_cells.push((cell.mu, cell.inv_chi, class));
    }
    let csv = out_path(&ctx.out_dir, "phase.csv");
    crate::output::write_file(&csv, format!("{head}{body}").as_bytes())?;
    announce(&csv);

    let mut bdoc = CsvDoc::new();
    bdoc.header("command", "phase-diagram");
    bdoc.header("seed", budget.seed);
    bdoc.column("mu_c", diagram.boundary.iter().map(|b| b.0).collect());
    bdoc.column("inv_chi", diagram.boundary.iter().map(|b| b.1).collect());
    let bcsv = out_path(&ctx.out_dir, "phase_boundary.csv");
    bdoc.write(&bcsv)?;
    announce(&bcsv);
    for &(mu_c, inv_chi) in &diagram.boundary {
        say!("boundary inv_chi={inv_chi} mu_c={mu_c}");
    }

    let svg = out_path(&ctx.out_dir, "phase.svg");
    PhasePlot {
        cells: plot_cells,
        boundary: diagram.boundary.clone(),
    }
    .write(&svg)?;
    announce(&svg);
    Ok(())
}
