use std::path::{Path, PathBuf};

use serde::Serialize;

use seqdetect::appendix::{conjecture_scan, verify_rescaling, verify_theorems, RescalingReport, TheoremReport};
use seqdetect::risk::BeliefGrid;
use seqdetect::{
    error_probs, estimate_risk, exact_bayes_risk, optimality_residual, optimize_beliefs, risk_surface, solve_threshold,
    trend_sweep, update_belief, DecisionHistory, GaussianLikelihood, ModelSpec, OptimizationResult, RiskEstimate,
};

use crate::config::ExperimentConfig;
use crate::output::{to_json, Cell, Table};
use crate::{Artifact, CliError, Command};

const MAX_SURFACE_POINTS: usize = 2_000_000;

pub(crate) fn dispatch(
    command: &Command,
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<Vec<Artifact>, CliError> {
    let name = command.name();
    let single = |contents: String| {
        vec![Artifact {
            path: out.map(Path::to_path_buf),
            contents,
        }]
    };
    Ok(match command {
        Command::Threshold => single(threshold(config)?.to_csv(name, config)),
        Command::UpdateBelief => single(update_beliefs(config)?.to_csv(name, config)),
        Command::Risk => {
            let model = config.model.build()?;
            let report = exact_bayes_risk(&model, &config.costs, config.p0, &config.belief_vector()?)?;
            single(to_json(name, config, &report))
        }
        Command::RiskSurface => single(surface(config)?.to_csv(name, config)),
        Command::Optimize => single(to_json(name, config, &optimize(config)?)),
        Command::Trend => single(trend(config)?.to_csv(name, config)),
        Command::Simulate { .. } => single(to_json(name, config, &simulate(config)?)),
        Command::VerifyAppendix { report } => {
            let (scan, theorems) = appendix(config)?;
            let report_path = report.clone().or_else(|| out.map(|p| with_suffix(p, ".theorems.json")));
            vec![
                Artifact {
                    path: out.map(Path::to_path_buf),
                    contents: scan.to_csv(name, config),
                },
                Artifact {
                    path: report_path,
                    contents: to_json(name, config, &theorems),
                },
            ]
        }
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn belief_columns(prefix: &str, agents: usize) -> Vec<String> {
    (1..=agents).map(|n| format!("{prefix}{n}")).collect()
}

fn threshold(config: &ExperimentConfig) -> Result<Table, CliError> {
    let model = config.model.build()?;
    let beliefs = match &config.beliefs {
        Some(b) => b.clone(),
        None => config.belief_axis()?,
    };
    let mut t = Table::new(["belief", "threshold", "p_fa", "p_md"]);
    for q in beliefs {
        let lambda = solve_threshold(&model, &config.costs, q)?;
        let e = error_probs(&model, lambda)?;
        t.push(vec![q.into(), lambda.into(), e.p_fa.into(), e.p_md.into()]);
    }
    Ok(t)
}

/// Histories of agent `N` (length `N - 1`) unless given explicitly.
fn update_beliefs(config: &ExperimentConfig) -> Result<Table, CliError> {
    let model = config.model.build()?;
    let histories: Vec<DecisionHistory> = match &config.histories {
        Some(h) => h.clone(),
        None => DecisionHistory::all(config.agents()? - 1).collect(),
    };
    let axis = config.belief_axis()?;
    let mut t = Table::new(["history", "q", "updated_belief", "threshold", "saturated"]);
    for h in &histories {
        for &q in &axis {
            let u = update_belief(&model, &config.costs, q, h)?;
            let lambda = solve_threshold(&model, &config.costs, u.belief)?;
            t.push(vec![
                Cell::Text(h.to_string()),
                q.into(),
                u.belief.into(),
                lambda.into(),
                Cell::Bool(u.saturated),
            ]);
        }
    }
    Ok(t)
}

fn surface(config: &ExperimentConfig) -> Result<Table, CliError> {
    let model = config.model.build()?;
    let agents = config.agents()?;
    let grid = BeliefGrid::square(config.belief_axis()?, agents).map_err(|e| CliError::Config(e.to_string()))?;
    if grid.len() > MAX_SURFACE_POINTS {
        return Err(CliError::Config(format!(
            "belief grid has {} points, more than {MAX_SURFACE_POINTS}",
            grid.len()
        )));
    }
    let mut header = vec!["p0".to_string()];
    header.extend(belief_columns("q", agents));
    header.push("risk".into());
    let mut t = Table::new(header);
    for p0 in config.p0_values()? {
        for point in risk_surface(&model, &config.costs, p0, &grid)? {
            let mut row = vec![Cell::Num(p0)];
            row.extend(point.beliefs.into_iter().map(Cell::Num));
            row.push(point.risk.into());
            t.push(row);
        }
    }
    Ok(t)
}

#[derive(Serialize)]
struct OptimizeOutput {
    p0: f64,
    agents: usize,
    result: OptimizationResult,
}

fn optimize(config: &ExperimentConfig) -> Result<OptimizeOutput, CliError> {
    let model = config.model.build()?;
    let agents = config.agents()?;
    let result = optimize_beliefs(&model, &config.costs, config.p0, agents, &config.optimizer)?;
    Ok(OptimizeOutput {
        p0: config.p0,
        agents,
        result,
    })
}

fn trend(config: &ExperimentConfig) -> Result<Table, CliError> {
    let model = config.model.build()?;
    let agents = config.agents()?;
    let p0s = match &config.p0_grid {
        Some(g) => g.values()?,
        None => crate::GridSpec::range(0.05, 0.95, 19).values()?,
    };
    let rows = trend_sweep(&model, &config.costs, &p0s, agents, &config.optimizer)?;
    let mut header = vec!["p0".to_string()];
    header.extend(belief_columns("q_star", agents));
    header.extend(["risk_star".to_string(), "residual".into(), "converged".into()]);
    let mut t = Table::new(header);
    for r in rows {
        let q = r.beliefs_star.as_slice();
        // The residual only exists for two agents and may be degenerate.
        let residual = if agents == 2 {
            optimality_residual(&model, &config.costs, r.p0, q[0], q[1]).unwrap_or(f64::NAN)
        } else {
            f64::NAN
        };
        let mut row = vec![Cell::Num(r.p0)];
        row.extend(q.iter().copied().map(Cell::Num));
        row.extend([Cell::Num(r.risk_star), Cell::Num(residual), Cell::Bool(r.converged)]);
        t.push(row);
    }
    Ok(t)
}

#[derive(Serialize)]
struct SimulateOutput {
    estimate: RiskEstimate,
    exact_risk: f64,
    /// `(mean - exact) / std_error`; absent when the standard error is zero.
    z_score: Option<f64>,
}

fn simulate(config: &ExperimentConfig) -> Result<SimulateOutput, CliError> {
    let model = config.model.build()?;
    let beliefs = config.belief_vector()?;
    let estimate = estimate_risk(
        &model,
        &config.costs,
        config.p0,
        &beliefs,
        config.simulation.trials,
        config.seed,
    )?;
    let exact_risk = exact_bayes_risk(&model, &config.costs, config.p0, &beliefs)?.risk;
    let z_score = (estimate.std_error > 0.0).then(|| (estimate.mean - exact_risk) / estimate.std_error);
    Ok(SimulateOutput {
        estimate,
        exact_risk,
        z_score,
    })
}

#[derive(Serialize)]
struct ConjectureSummary {
    /// The inequality is only checked numerically on the grid.
    status: &'static str,
    samples: usize,
    min_gap: f64,
    max_quadrature_mismatch: f64,
    /// Gap at `λ = h1/2` for each `h1`.
    midpoint_gaps: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct AppendixOutput {
    conjecture: ConjectureSummary,
    rescaling: Vec<RescalingReport>,
    theorems: TheoremReport,
}

fn appendix(config: &ExperimentConfig) -> Result<(Table, AppendixOutput), CliError> {
    let a = &config.appendix;
    let rows = conjecture_scan(&a.h1_values, a.lambda_min, a.lambda_margin, a.lambda_points)?;
    let mut t = Table::new(["h1", "lambda", "lhs", "rhs", "gap", "lhs_quadrature", "rhs_quadrature"]);
    for r in &rows {
        t.push(vec![
            r.h1.into(),
            r.lambda.into(),
            r.lhs.into(),
            r.rhs.into(),
            r.gap.into(),
            r.lhs_quadrature.into(),
            r.rhs_quadrature.into(),
        ]);
    }
    let midpoint_gaps = a
        .h1_values
        .iter()
        .map(|&h1| Ok((h1, seqdetect::appendix::conjecture_gap(h1, 0.5 * h1)?.gap)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let min_gap = rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    let supported = rows.iter().all(|r| r.gap > 0.0);
    let conjecture = ConjectureSummary {
        status: if supported { "supported" } else { "violated on grid" },
        samples: rows.len(),
        min_gap,
        max_quadrature_mismatch: rows.iter().map(|r| r.quadrature_mismatch()).fold(0.0, f64::max),
        midpoint_gaps,
    };
    let rescaling = a
        .rescaling
        .iter()
        .map(|c| verify_rescaling(c.h1, c.sigma, c.lambda))
        .collect::<Result<Vec<_>, _>>()?;
    let ModelSpec::Gaussian { h1, sigma } = config.model;
    let model = GaussianLikelihood::new(h1, sigma)?;
    let theorems = verify_theorems(
        &model,
        &config.costs,
        &a.theorem_p0.values()?,
        a.theorem_tol,
        &config.optimizer,
    )?;
    Ok((
        t,
        AppendixOutput {
            conjecture,
            rescaling,
            theorems,
        },
    ))
}
