//! One function per subcommand. Each writes its artifacts and reports
//! whether the experiment's own checks passed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nonlocal_ma::envelope::{self, AbpReport};
use nonlocal_ma::geom::Point;
use nonlocal_ma::grid::GridFunction;
use nonlocal_ma::kernels::{self, KernelRule, QuadraturePlan};
use nonlocal_ma::mc::{self, JumpProcessConfig, McEstimate};
use nonlocal_ma::regularity::{self, Check, ExperimentReport};
use nonlocal_ma::sections::{self, SectionProbe};
use nonlocal_ma::solver::{self, Equation, Problem, Scheme, SolveReport};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{Artifacts, Table};

/// What a subcommand hands back to the driver.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub stage_runtimes: Vec<f64>,
}

impl Outcome {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

pub struct Context {
    /// Directory of the config file; relative input paths resolve against it.
    pub base_dir: PathBuf,
    pub input: Option<PathBuf>,
}

fn report_outcome(rep: &ExperimentReport) -> Outcome {
    Outcome {
        checks: rep.checks.clone(),
        stage_runtimes: rep.runtimes.clone(),
    }
}

fn write_experiment(art: &mut Artifacts, rep: &ExperimentReport) -> Result<()> {
    art.json("", rep)?;
    let mut t = Table::new(&rep.trace.columns.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &rep.trace.rows {
        t.push_numbers(row);
    }
    art.csv("", &t)
}

#[derive(Serialize)]
struct SectionsSummary<'a> {
    potential: nonlocal_ma::potential::Potential,
    probes: usize,
    gamma_max: f64,
    doubling_min: f64,
    doubling_max: f64,
    c_inner_min: f64,
    checks: &'a [Check],
}

pub fn sections(cfg: &RunConfig, art: &mut Artifacts) -> Result<Outcome> {
    let pot = cfg.potential()?;
    let s = &cfg.sections;
    if s.radii.is_empty() || s.radii.iter().any(|r| !(*r > 0.0)) {
        return Err(CliError::field("sections.radii", "need at least one positive radius"));
    }
    let centers: Vec<Point> = match &s.centers {
        Some(c) => c.iter().map(|p| cfg.point(*p)).collect(),
        None => {
            if s.per_axis == 0 {
                return Err(CliError::field("sections.per_axis", "must be at least 1"));
            }
            let bx = if pot.n == 1 {
                nonlocal_ma::geom::Aabb::interval(-s.half, s.half)
            } else {
                nonlocal_ma::geom::Aabb::square(-s.half, s.half)
            };
            bx.lattice(s.per_axis)
        }
    };
    let mut probes: Vec<SectionProbe> = Vec::new();
    for c in &centers {
        for &r in &s.radii {
            probes.push(sections::probe(&pot, c, r)?);
        }
    }
    let mut t = Table::new(&["center_x", "center_y", "r", "gamma_hat", "c_inner", "volume", "doubling_ratio"]);
    for p in &probes {
        t.push_numbers(&[p.center.x, p.center.y, p.r, p.gamma_hat, p.c_inner, p.volume, p.doubling_ratio]);
    }
    art.csv("", &t)?;
    let fold = |f: fn(&SectionProbe) -> f64, init: f64, pick: fn(f64, f64) -> f64| probes.iter().map(f).fold(init, pick);
    let gamma_max = fold(|p| p.gamma_hat, 0.0, f64::max);
    let doubling_min = fold(|p| p.doubling_ratio, f64::INFINITY, f64::min);
    let doubling_max = fold(|p| p.doubling_ratio, 0.0, f64::max);
    let c_inner_min = fold(|p| p.c_inner, f64::INFINITY, f64::min);
    let checks = vec![
        Check::at_most("gamma_max", gamma_max, s.gamma_max),
        Check::at_least("doubling_min", doubling_min, 1.0),
        Check::at_most("doubling_max", doubling_max, 2f64.powi(pot.n as i32) * s.doubling_slack),
        Check::at_least("c_inner_min", c_inner_min, s.c_inner_min),
    ];
    art.json(
        "",
        &SectionsSummary {
            potential: pot,
            probes: probes.len(),
            gamma_max,
            doubling_min,
            doubling_max,
            c_inner_min,
            checks: &checks,
        },
    )?;
    Ok(Outcome {
        checks,
        stage_runtimes: vec![],
    })
}

/// Reads `x[,y],value` rows onto the nodes of `grid`; every node must be set.
pub fn read_grid_function(path: &Path, cfg: &RunConfig) -> Result<GridFunction> {
    let grid = cfg.grid()?;
    let n = grid.n();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut values = vec![f64::NAN; grid.node_count()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != n + 1 {
            return Err(CliError::Input(format!("row {}: expected {} columns, got {}", line + 1, n + 1, rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| CliError::Input(format!("row {}: `{}` is not a number", line + 1, &rec[i])))
        };
        let p = cfg.point([num(0)?, if n == 2 { num(1)? } else { 0.0 }]);
        let k = grid
            .nearest(&p)
            .filter(|&k| (grid.node(k) - p).norm() <= 1e-6 * grid.h)
            .ok_or_else(|| CliError::Input(format!("row {}: ({}, {}) is not a grid node", line + 1, p.x, p.y)))?;
        values[k] = num(n)?;
    }
    let missing = values.iter().filter(|v| v.is_nan()).count();
    if missing > 0 {
        return Err(CliError::Input(format!("{missing} grid nodes have no value")));
    }
    let u = GridFunction {
        grid,
        values,
        exterior: cfg.exterior()?,
    };
    u.validate()?;
    Ok(u)
}

#[derive(Serialize)]
struct OperatorSummary<'a> {
    points: usize,
    families: &'a [Vec<KernelRule>],
    max_abs_plus: f64,
    max_abs_minus: f64,
    checks: &'a [Check],
}

pub fn operator(cfg: &RunConfig, ctx: &Context, art: &mut Artifacts) -> Result<Outcome> {
    let pot = cfg.potential()?;
    let spec = cfg.spec()?;
    let o = &cfg.operator;
    let path = match (&ctx.input, &o.input) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => ctx.base_dir.join(p),
        (None, None) => return Err(CliError::field("operator.input", "no grid function file given (use --input)")),
    };
    let u = read_grid_function(&path, cfg)?;
    let grid = u.grid;
    let points: Vec<Point> = match &o.points {
        Some(ps) => ps.iter().map(|p| cfg.point(*p)).collect(),
        None => {
            let interior = grid.interior();
            let count = o.count.clamp(1, interior.len());
            (0..count)
                .map(|i| grid.node(interior[if count == 1 { interior.len() / 2 } else { i * (interior.len() - 1) / (count - 1) }]))
                .collect()
        }
    };
    let families = o.families.clone().unwrap_or_else(|| kernels::default_families(&spec));
    let mut plan = QuadraturePlan::for_grid(&grid);
    if let Some(m) = o.ring_nodes {
        plan = plan.fixed(m);
    }
    let mut t = Table::new(&["x", "y", "m_minus", "m_plus", "isaacs"]);
    let mut worst_order = f64::INFINITY;
    let (mut max_plus, mut max_minus) = (0.0f64, 0.0f64);
    for p in &points {
        let (mm, mp) = kernels::extremal_pair(&pot, &u, p, &spec, &plan)?;
        let is = kernels::isaacs_apply(&pot, &u, p, &spec, &families, &plan)?;
        let scale = 1.0 + mm.abs().max(mp.abs());
        worst_order = worst_order.min((is - mm).min(mp - is) / scale);
        max_plus = max_plus.max(mp.abs());
        max_minus = max_minus.max(mm.abs());
        t.push_numbers(&[p.x, p.y, mm, mp, is]);
    }
    art.csv("", &t)?;
    let checks = vec![Check::at_least("ordering_margin", worst_order, -1e-10)];
    art.json(
        "",
        &OperatorSummary {
            points: points.len(),
            families: &families,
            max_abs_plus: max_plus,
            max_abs_minus: max_minus,
            checks: &checks,
        },
    )?;
    Ok(Outcome {
        checks,
        stage_runtimes: vec![],
    })
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    problem: &'a Problem,
    equation: &'a Equation,
    report: &'a SolveReport,
    nodes: usize,
    sup_u: f64,
    inf_u: f64,
    residual: f64,
}

pub fn solve(cfg: &RunConfig, art: &mut Artifacts) -> Result<Outcome> {
    let problem = cfg.problem()?;
    let eq = cfg.solve.resolve("solve", &problem.spec)?;
    let start = Instant::now();
    let scheme = Scheme::new(problem.clone())?;
    let (u, report) = solver::solve_with(&scheme, &eq, &cfg.solver_config()?)?;
    let secs = start.elapsed().as_secs_f64();
    let grid = u.grid;
    let mut t = Table::new(&["x", "y", "u"]);
    for k in 0..grid.node_count() {
        let p = grid.node(k);
        t.push_numbers(&[p.x, p.y, u.values[k]]);
    }
    art.csv("", &t)?;
    let residual = scheme.residual(&u, &eq);
    art.json(
        "",
        &SolveSummary {
            problem: &problem,
            equation: &eq,
            report: &report,
            nodes: grid.node_count(),
            sup_u: u.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            inf_u: u.values.iter().copied().fold(f64::INFINITY, f64::min),
            residual,
        },
    )?;
    Ok(Outcome {
        checks: vec![Check::at_most("residual", residual, cfg.solver.tolerance.max(1e-12) * 10.0)],
        stage_runtimes: vec![secs],
    })
}

#[derive(Serialize)]
struct AbpResolution {
    cells: usize,
    report: AbpReport,
}

#[derive(Serialize)]
struct AbpSummary<'a> {
    m: f64,
    resolutions: &'a [AbpResolution],
    c_hat_ratio: f64,
    checks: &'a [Check],
}

/// Solves `M⁺u = rhs` at each resolution and runs the envelope pipeline with `f = −rhs`.
pub fn abp(cfg: &RunConfig, art: &mut Artifacts) -> Result<Outcome> {
    let a = &cfg.abp;
    if a.cells.is_empty() {
        return Err(CliError::field("abp.cells", "need at least one resolution"));
    }
    let base = cfg.problem()?;
    let f = base.rhs.scaled(-1.0);
    let mut res = Vec::new();
    let mut runtimes = Vec::new();
    let mut contacts = Table::new(&[
        "cells",
        "x",
        "y",
        "f",
        "k_min",
        "radius",
        "shell_fraction",
        "inner_margin",
        "detachment_holds",
    ]);
    for &cells in &a.cells {
        let start = Instant::now();
        let problem = Problem {
            grid: cfg.grid_with_cells(cells)?,
            ..base.clone()
        };
        let scheme = Scheme::new(problem)?;
        let (u, _) = solver::solve_with(&scheme, &Equation::ExtremalPlus, &cfg.solver_config()?)?;
        let report = envelope::abp_experiment(&scheme, &u, &f, a.m, a.tau_samples, a.eps0)?;
        for (e, d) in report.contacts.iter().zip(&report.detachment) {
            contacts.push_numbers(&[
                cells as f64,
                e.point[0],
                e.point[1],
                e.f,
                e.k_min as f64,
                e.radius,
                d.shell_fraction,
                d.inner_margin,
                f64::from(u8::from(d.holds)),
            ]);
        }
        runtimes.push(start.elapsed().as_secs_f64());
        res.push(AbpResolution { cells, report });
    }
    let hats: Vec<f64> = res.iter().filter(|r| !r.report.trivial).map(|r| r.report.c_hat).collect();
    let ratio = if hats.len() < 2 {
        1.0
    } else {
        hats.iter().copied().fold(0.0, f64::max) / hats.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let violations = res
        .iter()
        .flat_map(|r| &r.report.detachment)
        .filter(|d| !d.holds)
        .count();
    let checks = vec![
        Check::at_most("c_hat_ratio", ratio, a.factor),
        Check::at_most("detachment_violations", violations as f64, 0.0),
    ];
    art.json(
        "",
        &AbpSummary {
            m: a.m,
            resolutions: &res,
            c_hat_ratio: ratio,
            checks: &checks,
        },
    )?;
    art.csv("_contacts", &contacts)?;
    Ok(Outcome {
        checks,
        stage_runtimes: runtimes,
    })
}

pub fn leps(cfg: &RunConfig, art: &mut Artifacts) -> Result<Outcome> {
    let rep = regularity::leps_experiment(
        &cfg.potential()?,
        &cfg.spec()?,
        &cfg.exterior()?,
        &cfg.rhs()?,
        &cfg.leps.cells,
        &cfg.leps.tail,
    )?;
    write_experiment(art, &rep)?;
    Ok(report_outcome(&rep))
}

pub fn harnack(cfg: &RunConfig, art: &mut Artifacts) -> Result<Outcome> {
    let pot = cfg.potential()?;
    let data = match &cfg.harnack.data {
        Some(d) => d.clone(),
        None => {
            let tau = envelope::compute_tau(&pot, 100)?.tau;
            let half = regularity::section_domain(&pot, 2.0 * tau)?.hi.x;
            regularity::default_harnack_data(half)
        }
    };
    let rep = regularity::harnack_experiment(&pot, &cfg.spec()?, &data, &cfg.harnack.config)?;
    write_experiment(art, &rep)?;
    Ok(report_outcome(&rep))
}

pub fn holder(cfg: &RunConfig, art: &mut Artifacts) -> Result<Outcome> {
    let base = cfg.problem()?;
    let eq = cfg.holder.equation.resolve("holder.equation", &base.spec)?;
    let rep = regularity::holder_experiment(&base, &eq, &cfg.holder.config())?;
    write_experiment(art, &rep)?;
    Ok(report_outcome(&rep))
}

pub fn c1alpha(cfg: &RunConfig, art: &mut Artifacts) -> Result<Outcome> {
    let base = cfg.problem()?;
    let rule = cfg.c1alpha.rule.clone().unwrap_or_else(|| KernelRule::midpoint(&base.spec));
    let rep = regularity::c1alpha_experiment(&base, &rule, &cfg.c1alpha.config)?;
    write_experiment(art, &rep)?;
    Ok(report_outcome(&rep))
}

#[derive(Serialize)]
struct McRow {
    x0: [f64; 2],
    #[serde(flatten)]
    estimate: McEstimate,
    solver: Option<f64>,
    deviation: Option<f64>,
    allowance: f64,
}

#[derive(Serialize)]
struct McSummary<'a> {
    seed: u64,
    eta: f64,
    estimates: &'a [McRow],
    checks: &'a [Check],
}

/// Exit payoffs of the jump process, optionally cross-checked against the
/// linear solver with the same constant kernel and zero source.
pub fn mc_validate(cfg: &RunConfig, art: &mut Artifacts) -> Result<Outcome> {
    let m = &cfg.mc;
    let problem = cfg.problem()?;
    let spec = problem.spec;
    if spec.lambda != spec.cap_lambda {
        return Err(CliError::field("kernel.cap_lambda", "mc-validate needs lambda = cap_lambda"));
    }
    if m.x0.is_empty() {
        return Err(CliError::field("mc.x0", "need at least one start point"));
    }
    if !(m.eta > 0.0) {
        return Err(CliError::field("mc.eta", format!("must be positive, got {}", m.eta)));
    }
    let jp = JumpProcessConfig {
        potential: problem.potential,
        spec,
        eta: m.eta,
        payoff: problem.exterior.clone(),
        seed: cfg.seed,
        hessian_scale: m.hessian_scale,
    };
    let mut runtimes = Vec::new();
    let solution = if m.compare {
        if problem.rhs.sup_abs() != 0.0 {
            return Err(CliError::field("rhs", "mc-validate compares exit payoffs and needs a zero source"));
        }
        let start = Instant::now();
        let eq = Equation::Linear {
            rule: KernelRule::Constant { m: spec.lambda },
        };
        let (u, _) = solver::solve(&problem, &eq, &cfg.solver_config()?)?;
        runtimes.push(start.elapsed().as_secs_f64());
        Some(u)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut t = Table::new(&["x", "y", "mean", "std_error", "bias_bound", "paths", "mean_jumps", "solver"]);
    for (i, x) in m.x0.iter().enumerate() {
        let p = cfg.point(*x);
        let start = Instant::now();
        let est = mc::estimate_exit_payoff(&jp, &p, &problem.grid.bx, m.paths)?;
        runtimes.push(start.elapsed().as_secs_f64());
        let allowance = m.std_errors * est.std_error + est.bias_bound;
        let sol = match &solution {
            Some(u) => {
                let k = u
                    .grid
                    .nearest(&p)
                    .ok_or_else(|| CliError::field(&format!("mc.x0[{i}]"), "start point outside the box"))?;
                Some(u.values[k])
            }
            None => None,
        };
        let deviation = sol.map(|s| (est.mean - s).abs());
        if let Some(d) = deviation {
            checks.push(Check::at_most(&format!("deviation[{i}]"), d, allowance));
        }
        t.push(vec![
            p.x.to_string(),
            p.y.to_string(),
            est.mean.to_string(),
            est.std_error.to_string(),
            est.bias_bound.to_string(),
            est.paths.to_string(),
            est.mean_jumps.to_string(),
            sol.map_or_else(String::new, |s| s.to_string()),
        ]);
        rows.push(McRow {
            x0: [p.x, p.y],
            estimate: est,
            solver: sol,
            deviation,
            allowance,
        });
    }
    art.csv("", &t)?;
    art.json(
        "",
        &McSummary {
            seed: cfg.seed,
            eta: m.eta,
            estimates: &rows,
            checks: &checks,
        },
    )?;
    Ok(Outcome {
        checks,
        stage_runtimes: runtimes,
    })
}
