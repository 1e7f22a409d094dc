//! Subcommand drivers.

use anyhow::{bail, Context, Result};
use critmetric::balance::{solve_critical, SolveStatus};
use critmetric::chow::{asymptotic_verdict, convexity_residual, path_profile, OneParamSubgroup, Verdict};
use critmetric::extremal::{extremal_from_curvature, lu_fit, order0_consistency, scalar_curvature};
use critmetric::gitcheck::{covering_consistency, relative_stability_probe, torus_stable, OrbitStatus, WeightConfiguration};
use critmetric::io::StateFile;
use critmetric::sections::{bergman_density, AlgebraicMetric, DensityProfile};
use critmetric::weights::IndexVector;
use critmetric::{decompose, PolarizedModel, WeightBlocks};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{num, strings, Outputs};

/// Successful runs end in one of these states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finish {
    Done,
    /// Non-convergence or an inconclusive verdict.
    Incomplete,
}

/// Input problems that map to the invalid-input exit code.
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl std::fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(InvalidInput(msg.into()).into())
}

struct Setup {
    model: PolarizedModel,
    state: AlgebraicMetric<f64>,
    blocks: WeightBlocks,
}

fn setup(config: &RunConfig) -> Result<Setup> {
    let model = config.model()?;
    let action = config.torus_action(&model)?;
    if let Some(path) = &config.start.state {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading state {}", path.display()))?;
        let (file_model, state, file_blocks) = StateFile::from_json(&text)?.restore::<f64>()?;
        if file_model.polytope != model.polytope || state.level() != config.m as usize {
            return invalid("state file does not match the configured model and level");
        }
        let blocks = if config.torus.is_empty() { file_blocks } else { decompose(state.sections(), &action) };
        return Ok(Setup { model, state, blocks });
    }
    let fs = AlgebraicMetric::<f64>::fubini_study(&model, config.m)?;
    let blocks = decompose(fs.sections(), &action);
    let state = if config.start.perturbation > 0.0 {
        let project = (blocks.count() > 1).then_some(&blocks);
        fs.perturbed(config.start.perturbation, config.seed, config.start.diagonal, project)?
    } else {
        fs
    };
    Ok(Setup { model, state, blocks })
}

fn coordinate_header(dim: usize) -> Vec<String> {
    (0..dim).map(|a| format!("x{a}")).collect()
}

pub fn balance(config: &RunConfig, out: &mut Outputs) -> Result<Finish> {
    let s = setup(config)?;
    let quad = config.quadrature(s.model.dim())?;
    let report = solve_critical(&s.state, &s.blocks, &config.solve_options(), &quad)?;
    out.json("state.json", &StateFile::new(&s.model, &report.state, &s.blocks))?;
    let rows: Vec<Vec<String>> = (0..report.residuals.len())
        .map(|i| {
            vec![
                i.to_string(),
                num(report.residuals[i]),
                report.gram_defects.get(i).map_or(String::new(), |v| num(*v)),
                if i == 0 { String::new() } else { report.energy_deltas.get(i - 1).map_or(String::new(), |v| num(*v)) },
            ]
        })
        .collect();
    out.csv("convergence.csv", &strings(&["iteration", "residual", "gram_defect", "energy_delta"]), &rows)?;
    out.json(
        "report.json",
        &json!({
            "state_file": "state.json",
            "status": report.status,
            "iterations": report.iterations,
            "b": report.index.values,
            "residuals": report.residuals,
        }),
    )?;
    Ok(if report.status == SolveStatus::Converged { Finish::Done } else { Finish::Incomplete })
}

fn random_special(blocks: &WeightBlocks, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let mut gamma = vec![0i64; blocks.total()];
    for idx in blocks.all_members() {
        let mut sum = 0;
        for &i in &idx[..idx.len() - 1] {
            let g = rng.random_range(-2..=2i64);
            gamma[i] = g;
            sum += g;
        }
        gamma[*idx.last().unwrap()] = -sum;
    }
    gamma
}

pub fn chow(config: &RunConfig, out: &mut Outputs) -> Result<Finish> {
    let s = setup(config)?;
    let quad = config.quadrature(s.model.dim())?;
    let gamma = match &config.chow.gamma {
        Some(g) => g.clone(),
        None => random_special(&s.blocks, &mut ChaCha8Rng::seed_from_u64(config.seed)),
    };
    if gamma.len() != s.state.len() {
        return invalid(format!("gamma must have {} entries", s.state.len()));
    }
    let lambda = OneParamSubgroup::special(&gamma, &s.blocks)?;
    let (t_max, points) = (config.chow.t_max, config.chow.points);
    let grid: Vec<f64> = (0..points).map(|i| -t_max + 2.0 * t_max * i as f64 / (points - 1) as f64).collect();
    let path = path_profile(&s.state, None, &lambda, &grid, &quad)?;
    let conv = convexity_residual(&path)?;
    let energy = path.energy();
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| vec![num(path.t[i]), num(path.f_prime[i]), num(path.f_second[i]), num(path.f_second_fd[i]), num(energy[i])])
        .collect();
    out.csv("path.csv", &strings(&["t", "f_prime", "f_second", "f_second_fd", "energy"]), &rows)?;
    let verdict = asymptotic_verdict(&s.state, None, &lambda, t_max, &quad)?;
    out.json(
        "chow.json",
        &json!({
            "gamma": gamma,
            "convexity_residual": conv.residual,
            "identity_error": conv.identity_error,
            "min_second": conv.min_second,
            "verdict": verdict.verdict,
            "f_minus": verdict.f_minus,
            "f_zero": verdict.f_zero,
            "f_plus": verdict.f_plus,
        }),
    )?;
    Ok(if verdict.verdict == Verdict::Inconclusive { Finish::Incomplete } else { Finish::Done })
}

pub fn git(config: &RunConfig, out: &mut Outputs) -> Result<Finish> {
    let mut finish = Finish::Done;
    let mut ran = false;
    if let Some(weights) = &config.git.weights {
        ran = true;
        let wc = WeightConfiguration::new(weights.clone()).map_err(|e| InvalidInput(e.to_string()))?;
        let verdict = torus_stable(&wc);
        let covering = if verdict.status == OrbitStatus::Closed {
            Some(covering_consistency(&wc, config.git.covering_samples, config.seed)?)
        } else {
            None
        };
        out.json("git.json", &json!({ "weights": weights, "verdict": verdict, "covering_consistent": covering }))?;
    }
    if config.git.probe_directions > 0 {
        ran = true;
        let s = setup(config)?;
        let quad = config.quadrature(s.model.dim())?;
        let report =
            relative_stability_probe(&s.state, &s.blocks, config.git.probe_directions, config.git.t_max, config.seed, &quad)?;
        if report.inconclusive > 0 {
            finish = Finish::Incomplete;
        }
        out.json("probe.json", &report)?;
    }
    if !ran {
        return invalid("git needs `git.weights` or `git.probe_directions > 0`");
    }
    Ok(finish)
}

fn density_rows(p: &DensityProfile<f64>) -> Vec<Vec<String>> {
    p.x.iter()
        .zip(&p.values)
        .map(|(x, v)| x.iter().map(|c| num(*c)).chain(std::iter::once(num(*v))).collect())
        .collect()
}

pub fn density(config: &RunConfig, out: &mut Outputs) -> Result<Finish> {
    let s = setup(config)?;
    let quad = config.quadrature(s.model.dim())?;
    let profile = match &config.density.y {
        None => bergman_density(&s.state, &quad)?,
        Some(y) => {
            let b = match &config.density.b {
                Some(b) => IndexVector::new(b.clone(), &s.blocks).map_err(|e| InvalidInput(e.to_string()))?,
                None => IndexVector::uniform(&s.blocks),
            };
            critmetric::extremal::z_profile(&s.state, &s.blocks, y, &b, &quad)?
        }
    };
    let mut header = coordinate_header(s.model.dim());
    header.push("density".into());
    out.csv("density.csv", &header, &density_rows(&profile))?;
    out.json(
        "density.json",
        &json!({ "target": profile.target, "sup_residual": profile.sup_residual, "integral": profile.integral }),
    )?;
    Ok(Finish::Done)
}

#[derive(Serialize)]
struct ExtremalSummary<'a> {
    extremal: &'a critmetric::extremal::ExtremalData<f64>,
    curvature_mean: f64,
    lu_levels: Vec<usize>,
    lu_max_residual: Option<f64>,
    lu_flagged: Option<bool>,
    order0_levels: Vec<usize>,
    order0_scaled: Vec<f64>,
    order0_q2_coefficient: f64,
    order0_q1_coefficient: f64,
    order0_flagged: bool,
}

pub fn extremal(config: &RunConfig, out: &mut Outputs) -> Result<Finish> {
    let s = setup(config)?;
    if !critmetric::linalg::is_diagonal(s.state.form()) {
        return invalid("extremal needs a state invariant under the big torus (use start.diagonal)");
    }
    let quad = config.quadrature(s.model.dim())?;
    let levels = &config.extremal.levels;
    if levels.is_empty() || levels.contains(&0) {
        bail!(InvalidInput("extremal.levels must be positive".into()));
    }
    let curv = scalar_curvature(&s.state, &quad)?;
    let data = extremal_from_curvature(&s.state, &curv, &quad)?;
    let lu = if levels.len() >= 3 { Some(lu_fit(&s.model, &s.state, levels, &quad)?) } else { None };
    let order0 = order0_consistency(&s.model, &s.state, levels, &quad)?;
    let mut header = coordinate_header(s.model.dim());
    header.extend(strings(&["sigma", "a1_fit", "residual"]));
    let rows: Vec<Vec<String>> = (0..curv.sigma.len())
        .map(|i| {
            let mut row: Vec<String> = curv.x[i].iter().map(|c| num(*c)).collect();
            row.push(num(curv.sigma[i]));
            match &lu {
                Some(f) => {
                    row.push(num(f.a1[i]));
                    row.push(num(f.residual[i]));
                }
                None => row.extend([String::new(), String::new()]),
            }
            row
        })
        .collect();
    out.csv("curvature.csv", &header, &rows)?;
    let summary = ExtremalSummary {
        extremal: &data,
        curvature_mean: curv.mean,
        lu_levels: lu.as_ref().map_or(Vec::new(), |f| f.levels.clone()),
        lu_max_residual: lu.as_ref().map(|f| f.max_residual),
        lu_flagged: lu.as_ref().map(|f| f.flagged),
        order0_levels: order0.levels.clone(),
        order0_scaled: order0.scaled.clone(),
        order0_q2_coefficient: order0.q2_coefficient,
        order0_q1_coefficient: order0.q1_coefficient,
        order0_flagged: order0.flagged,
    };
    out.json("extremal.json", &summary)?;
    let flagged = order0.flagged || lu.as_ref().is_some_and(|f| f.flagged);
    Ok(if flagged { Finish::Incomplete } else { Finish::Done })
}
