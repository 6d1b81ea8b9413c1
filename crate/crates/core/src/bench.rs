//! Grid evaluation of warm-start strategies: every grid point is solved from
//! an actor rollout, the initial-condition guess and the best of several
//! random guesses, and the resulting costs are compared.

use std::fs;
use std::path::Path;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyncore::State;
use crate::environments::{EnvKind, EnvModel};
use crate::nn::{ActorNet, Normalizer};
use crate::seeds::{component_seed, indexed_rng, Component};
use crate::trajopt::{solve, warm_start_ics, warm_start_policy, warm_start_random, SolveReport, SolverOptions};
use crate::{Error, Result};

/// Rectangular region `x in [x[0], x[1]], y in [y[0], y[1]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Region {
    /// Region behind the obstacle where naive guesses get stuck.
    pub fn hard_region(kind: EnvKind) -> Self {
        let x_max = if kind == EnvKind::Manipulator { 23.0 } else { 15.0 };
        Region { x: [1.0, x_max], y: [-5.0, 5.0] }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x[0] && x <= self.x[1] && y >= self.y[0] && y <= self.y[1]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x[0] <= self.x[1] && self.y[0] <= self.y[1]) {
            return Err(Error::Config(format!("empty region {:?} x {:?}", self.x, self.y)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub region: Region,
    pub nx: usize,
    pub ny: usize,
    /// End-effector orientation used to place the manipulator.
    pub phi: f64,
    /// Random guesses per point; the lowest final cost is kept.
    pub random_runs: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { region: Region { x: [-15.0, 25.0], y: [-10.0, 10.0] }, nx: 31, ny: 31, phi: 0.0, random_runs: 5 }
    }
}

impl GridSpec {
    pub fn over(region: Region, n: usize) -> Self {
        GridSpec { region, nx: n, ny: n, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        if self.nx == 0 || self.ny == 0 || self.random_runs == 0 {
            return Err(Error::Config("grid sizes and random_runs must be positive".into()));
        }
        Ok(())
    }

    fn axis(range: [f64; 2], n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![range[0]];
        }
        (0..n).map(|i| range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64).collect()
    }

    /// Grid points, x varying fastest.
    pub fn points(&self) -> Vec<[f64; 2]> {
        let xs = Self::axis(self.region.x, self.nx);
        let ys = Self::axis(self.region.y, self.ny);
        ys.iter().flat_map(|&y| xs.iter().map(move |&x| [x, y])).collect()
    }
}

/// Outcome of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOutcome {
    pub cost: f64,
    pub baseline: f64,
    pub converged: bool,
}

impl From<&SolveReport> for SolveOutcome {
    fn from(r: &SolveReport) -> Self {
        SolveOutcome { cost: r.cost, baseline: r.initial_guess_cost, converged: r.converged }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub x: f64,
    pub y: f64,
    pub in_hard_region: bool,
    /// False when no start state exists for the point; such rows carry no
    /// outcomes.
    pub reachable: bool,
    pub cacto: Option<SolveOutcome>,
    pub ics: Option<SolveOutcome>,
    /// One outcome per random guess.
    pub random: Vec<SolveOutcome>,
}

impl GridRow {
    /// Best of the random guesses.
    pub fn random_best(&self) -> Option<SolveOutcome> {
        self.random.iter().copied().min_by(|a, b| a.cost.total_cmp(&b.cost))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEvalResult {
    pub rows: Vec<GridRow>,
}

impl GridEvalResult {
    pub fn unreachable(&self) -> usize {
        self.rows.iter().filter(|r| !r.reachable).count()
    }

    /// Largest absolute final cost over all columns of reachable rows.
    pub fn cost_scale(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.reachable)
            .flat_map(|r| r.cacto.iter().chain(&r.ics).chain(&r.random).map(|o| o.cost.abs()))
            .fold(0.0, f64::max)
    }

    /// Tie tolerance used by [`win_stats`].
    pub fn tie_tolerance(&self) -> f64 {
        1e-6 * self.cost_scale()
    }
}

/// Per-row seed of the `k`-th random guess.
pub fn random_guess_seed(seed: u64, row: usize, k: usize) -> u64 {
    let mut rng = indexed_rng(component_seed(seed, Component::RandomWarmStart), row as u64);
    (0..k).for_each(|_| {
        rng.next_u64();
    });
    rng.next_u64()
}

fn eval_row(
    env: &EnvModel,
    actor: Option<(&ActorNet, &Normalizer)>,
    grid: &GridSpec,
    hard: &Region,
    solver: &SolverOptions,
    seed: u64,
    index: usize,
    point: [f64; 2],
) -> Result<GridRow> {
    let [x, y] = point;
    let mut row = GridRow {
        x,
        y,
        in_hard_region: hard.contains(x, y),
        reachable: false,
        cacto: None,
        ics: None,
        random: Vec::new(),
    };
    let x0: State = match env.rest_state_at(x, y, grid.phi, 0) {
        Ok(s) => s,
        Err(Error::OutOfWorkspace { .. }) => return Ok(row),
        Err(e) => return Err(e),
    };
    row.reachable = true;
    if let Some((net, norm)) = actor {
        let guess = warm_start_policy(env, &x0, net, norm)?;
        row.cacto = Some((&solve(env, &x0, &guess, solver)?).into());
    }
    row.ics = Some((&solve(env, &x0, &warm_start_ics(env, &x0), solver)?).into());
    for k in 0..grid.random_runs {
        let guess = warm_start_random(env, &x0, random_guess_seed(seed, index, k));
        row.random.push((&solve(env, &x0, &guess, solver)?).into());
    }
    Ok(row)
}

/// Solves every grid point with each warm-start strategy. Rows are
/// independent and evaluated in parallel on `pool` (or the global pool);
/// the result does not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn eval_grid(
    env: &EnvModel,
    actor: Option<(&ActorNet, &Normalizer)>,
    grid: &GridSpec,
    hard: &Region,
    solver: &SolverOptions,
    seed: u64,
    pool: Option<&rayon::ThreadPool>,
) -> Result<GridEvalResult> {
    env.validate()?;
    grid.validate()?;
    if let Some((net, _)) = actor {
        net.check_input(crate::dyncore::ControlProblem::state_dim(env))?;
    }
    let points = grid.points();
    let run = || -> Result<Vec<GridRow>> {
        points
            .par_iter()
            .enumerate()
            .map(|(i, &p)| eval_row(env, actor, grid, hard, solver, seed, i, p))
            .collect()
    };
    let rows = match pool {
        Some(p) => p.install(run)?,
        None => run()?,
    };
    Ok(GridEvalResult { rows })
}

/// Counts of rows where `a` is strictly lower than `b` and where it is lower
/// or tied, with tie tolerance `eps`.
pub fn compare(a: &[f64], b: &[f64], eps: f64) -> (usize, usize) {
    let mut strict = 0;
    let mut weak = 0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        if d < -eps {
            strict += 1;
        }
        if d <= eps {
            weak += 1;
        }
    }
    (strict, weak)
}

/// Percentages of rows where the actor-initialised solve wins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WinStats {
    pub rows: usize,
    pub lower_than_random: f64,
    pub lower_or_equal_random: f64,
    pub lower_than_ics: f64,
    pub lower_or_equal_ics: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionStats {
    pub whole: WinStats,
    pub hard: WinStats,
    pub unreachable: usize,
    pub tie_tolerance: f64,
}

fn stats_over<'a>(rows: impl Iterator<Item = &'a GridRow>, eps: f64, what: &'static str) -> Result<WinStats> {
    let (mut c, mut r, mut i) = (Vec::new(), Vec::new(), Vec::new());
    for row in rows.filter(|r| r.reachable) {
        let (Some(cacto), Some(ics), Some(random)) = (row.cacto, row.ics, row.random_best()) else {
            return Err(Error::Config("win statistics need all three columns".into()));
        };
        c.push(cacto.cost);
        i.push(ics.cost);
        r.push(random.cost);
    }
    if c.is_empty() {
        return Err(Error::EmptyRegion(what));
    }
    let pct = |k: usize| 100.0 * k as f64 / c.len() as f64;
    let (rs, rw) = compare(&c, &r, eps);
    let (is, iw) = compare(&c, &i, eps);
    Ok(WinStats {
        rows: c.len(),
        lower_than_random: pct(rs),
        lower_or_equal_random: pct(rw),
        lower_than_ics: pct(is),
        lower_or_equal_ics: pct(iw),
    })
}

/// Win percentages over the whole grid and over the rows inside the hard
/// region. "Lower" means lower by more than `1e-6` of the largest absolute
/// cost in the result.
pub fn win_stats(result: &GridEvalResult) -> Result<RegionStats> {
    let eps = result.tie_tolerance();
    Ok(RegionStats {
        whole: stats_over(result.rows.iter(), eps, "whole grid")?,
        hard: stats_over(result.rows.iter().filter(|r| r.in_hard_region), eps, "hard region")?,
        unreachable: result.unreachable(),
        tie_tolerance: eps,
    })
}

fn table_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Table { path: path.to_path_buf(), source: e }
}

fn fmt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

const GRID_HEADER: [&str; 14] = [
    "x0", "y0", "reachable", "in_hard_region",
    "cost_cacto", "baseline_cacto", "converged_cacto",
    "cost_ics", "baseline_ics", "converged_ics",
    "cost_random", "random_costs", "random_baselines", "random_converged",
];

/// Writes `grid.csv` (raw table) and `surface_ics.csv`, `surface_random.csv`
/// holding `(cost_other - cost_cacto) / max |difference|` per point.
pub fn export(result: &GridEvalResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("grid.csv");
    let mut w = csv::Writer::from_path(&path).map_err(table_err(&path))?;
    w.write_record(GRID_HEADER).map_err(table_err(&path))?;
    for r in &result.rows {
        let join = |f: fn(&SolveOutcome) -> f64| r.random.iter().map(|o| format!("{:?}", f(o))).collect::<Vec<_>>().join(" ");
        let rec = [
            format!("{:?}", r.x),
            format!("{:?}", r.y),
            r.reachable.to_string(),
            r.in_hard_region.to_string(),
            fmt(r.cacto.map(|o| o.cost)),
            fmt(r.cacto.map(|o| o.baseline)),
            r.cacto.map(|o| o.converged.to_string()).unwrap_or_default(),
            fmt(r.ics.map(|o| o.cost)),
            fmt(r.ics.map(|o| o.baseline)),
            r.ics.map(|o| o.converged.to_string()).unwrap_or_default(),
            fmt(r.random_best().map(|o| o.cost)),
            join(|o| o.cost),
            join(|o| o.baseline),
            r.random.iter().map(|o| o.converged.to_string()).collect::<Vec<_>>().join(" "),
        ];
        w.write_record(&rec).map_err(table_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    for (name, other) in [
        ("surface_ics.csv", (|r: &GridRow| r.ics) as fn(&GridRow) -> Option<SolveOutcome>),
        ("surface_random.csv", |r: &GridRow| r.random_best()),
    ] {
        let surface = normalized_differences(result, other);
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(table_err(&path))?;
        w.write_record(["x0", "y0", "normalized_difference"]).map_err(table_err(&path))?;
        for (r, d) in result.rows.iter().zip(surface) {
            w.write_record([format!("{:?}", r.x), format!("{:?}", r.y), fmt(d)])
                .map_err(table_err(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// `(other - cacto) / max |other - cacto|` per row; all zeros when every
/// difference is zero, `None` where a column is missing.
pub fn normalized_differences(result: &GridEvalResult, other: impl Fn(&GridRow) -> Option<SolveOutcome>) -> Vec<Option<f64>> {
    let diffs: Vec<Option<f64>> = result
        .rows
        .iter()
        .map(|r| match (r.cacto, other(r)) {
            (Some(c), Some(o)) => Some(o.cost - c.cost),
            _ => None,
        })
        .collect();
    let max = diffs.iter().flatten().fold(0.0f64, |m, d| m.max(d.abs()));
    diffs
        .into_iter()
        .map(|d| d.map(|d| if max > 0.0 { d / max } else { 0.0 }))
        .collect()
}

/// Reads a table written by [`export`].
pub fn import(path: &Path) -> Result<GridEvalResult> {
    let table_err = |e| Error::Table { path: path.to_path_buf(), source: e };
    let bad = |m: String| Error::Config(format!("{}: {m}", path.display()));
    let mut rd = csv::Reader::from_path(path).map_err(table_err)?;
    let header = rd.headers().map_err(table_err)?.clone();
    if header.iter().ne(GRID_HEADER) {
        return Err(bad("unexpected header".into()));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| bad(format!("bad number `{s}`: {e}")))
        }
    };
    let flag = |s: &str| -> Result<bool> { s.parse().map_err(|e| bad(format!("bad flag `{s}`: {e}"))) };
    let nums = |s: &str| -> Result<Vec<f64>> {
        s.split_whitespace().map(|v| v.parse().map_err(|e| bad(format!("bad number `{v}`: {e}")))).collect()
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(table_err)?;
        let outcome = |c: usize| -> Result<Option<SolveOutcome>> {
            match (num(&rec[c])?, num(&rec[c + 1])?) {
                (Some(cost), Some(baseline)) => Ok(Some(SolveOutcome { cost, baseline, converged: flag(&rec[c + 2])? })),
                _ => Ok(None),
            }
        };
        let costs = nums(&rec[11])?;
        let baselines = nums(&rec[12])?;
        let converged: Vec<bool> = rec[13].split_whitespace().map(flag).collect::<Result<_>>()?;
        if costs.len() != baselines.len() || costs.len() != converged.len() {
            return Err(bad("random column counts differ".into()));
        }
        rows.push(GridRow {
            x: num(&rec[0])?.unwrap_or(f64::NAN),
            y: num(&rec[1])?.unwrap_or(f64::NAN),
            reachable: flag(&rec[2])?,
            in_hard_region: flag(&rec[3])?,
            cacto: outcome(4)?,
            ics: outcome(7)?,
            random: costs
                .into_iter()
                .zip(baselines)
                .zip(converged)
                .map(|((cost, baseline), converged)| SolveOutcome { cost, baseline, converged })
                .collect(),
        });
    }
    Ok(GridEvalResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(cost: f64) -> Option<SolveOutcome> {
        Some(SolveOutcome { cost, baseline: cost + 1.0, converged: true })
    }

    fn row(c: f64, i: f64, r: f64, hard: bool) -> GridRow {
        GridRow { x: 0.0, y: 0.0, in_hard_region: hard, reachable: true, cacto: outcome(c), ics: outcome(i), random: vec![outcome(r).unwrap()] }
    }

    #[test]
    fn hand_counted_stats() {
        let res = GridEvalResult {
            rows: vec![row(1.0, 2.0, 2.0, true), row(1.0, 2.0, 2.0, true), row(1.0, 2.0, 2.0, true), row(2.0, 2.0, 2.0, true)],
        };
        let s = win_stats(&res).unwrap();
        assert_eq!(s.hard.lower_than_ics, 75.0);
        assert_eq!(s.hard.lower_or_equal_ics, 100.0);
        let all_equal = GridEvalResult { rows: vec![row(3.0, 3.0, 3.0, true); 5] };
        let s = win_stats(&all_equal).unwrap();
        assert_eq!((s.whole.lower_than_random, s.whole.lower_or_equal_random), (0.0, 100.0));
    }

    #[test]
    fn empty_hard_region_is_an_error() {
        let res = GridEvalResult { rows: vec![row(1.0, 2.0, 3.0, false)] };
        assert!(matches!(win_stats(&res), Err(Error::EmptyRegion(_))));
    }

    #[test]
    fn grid_points_cover_corners() {
        let g = GridSpec::over(Region { x: [1.0, 15.0], y: [-5.0, 5.0] }, 11);
        let p = g.points();
        assert_eq!(p.len(), 121);
        assert_eq!(p[0], [1.0, -5.0]);
        assert_eq!(p[120], [15.0, 5.0]);
        assert_eq!(GridSpec::default().points().len(), 961);
    }
}
