//! Backtracking gradient descent on the tracking objective.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{evaluate_target, NodalField, TargetEval, TargetSpec};
use crate::linalg::SolverOptions;
use crate::mesh::project::SurfaceProjector;
use crate::mesh::{Point, SimplicialMesh};
use crate::metric::{inject, l2_norm_at, solve_mu, GradientField, MetricConfig, MetricOperator};
use crate::preshape::{
    assemble_derivative, objective, residual_max, Component, DerivativeCovector, PreShapeState,
};

/// A stopping threshold, either absolute or relative to a reference value
/// (the initial gradient norm, or the mean target density).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tolerance {
    Relative(f64),
    Absolute(f64),
}

impl Tolerance {
    pub fn resolve(&self, reference: f64) -> f64 {
        match *self {
            Tolerance::Relative(r) => r * reference,
            Tolerance::Absolute(a) => a,
        }
    }

    fn value(&self) -> f64 {
        match *self {
            Tolerance::Relative(v) | Tolerance::Absolute(v) => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// First trial step scale `c`.
    pub initial_scale: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub max_iters: usize,
    pub grad_tol: Tolerance,
    pub residual_tol: Tolerance,
    pub component: Component,
    /// Snapshot period in iterations; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Sufficient-decrease constant; 0 asks for strict decrease only.
    pub armijo: f64,
    /// Pull free shape vertices back onto the initial surface after every
    /// trial step (surfaces only).
    pub reproject: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            initial_scale: 0.01,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            max_iters: 200,
            grad_tol: Tolerance::Relative(1e-3),
            residual_tol: Tolerance::Relative(0.01),
            component: Component::Full,
            snapshot_every: 0,
            armijo: 0.0,
            reproject: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.initial_scale > 0.0) {
            return bad("initial_scale must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.grad_tol.value() >= 0.0 && self.residual_tol.value() >= 0.0) {
            return bad("tolerances must be nonnegative");
        }
        if self.grad_tol.value() == 0.0
            && self.residual_tol.value() == 0.0
            && self.max_iters == usize::MAX
        {
            return bad("no stopping criterion is active");
        }
        if !(0.0..1.0).contains(&self.armijo) {
            return bad("armijo must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub grad_l2: f64,
    pub residual_max: f64,
    /// Accepted step scale; 0 when no step was taken from this iterate.
    pub step_scale: f64,
    pub backtracks: usize,
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIters,
    Stagnated,
}

/// Which criterion ended a converged run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    GradientNorm,
    Residual,
    IterationLimit,
    NoDecrease,
}

/// A tetrahedral hold-all mesh containing the shape surface as tagged
/// facets; `map[i]` is the hold-all index of shape vertex `i`.
#[derive(Clone, Debug)]
pub struct HoldAll {
    pub mesh: SimplicialMesh,
    pub map: Vec<usize>,
}

/// Everything fixed during a run.
#[derive(Clone, Debug)]
pub struct Problem {
    pub target: TargetSpec,
    pub metric: MetricConfig,
    pub solver: SolverOptions,
    holdall: Option<Arc<HoldAll>>,
    mu: NodalField,
    projector: Option<Arc<SurfaceProjector>>,
}

impl Problem {
    /// Without a hold-all the metric lives on the shape mesh itself.
    pub fn new(
        target: TargetSpec,
        metric: MetricConfig,
        shape: &SimplicialMesh,
        holdall: Option<HoldAll>,
    ) -> Result<Problem> {
        target.validate(shape, shape.vertices())?;
        let mu = match &holdall {
            Some(h) => {
                if h.map.len() != shape.n_vertices() {
                    return Err(Error::LengthMismatch {
                        expected: shape.n_vertices(),
                        actual: h.map.len(),
                    });
                }
                for (i, &v) in h.map.iter().enumerate() {
                    if h.mesh.vertices().get(v) != Some(&shape.vertices()[i]) {
                        return Err(Error::Config(format!(
                            "shape vertex {i} does not coincide with hold-all vertex {v}"
                        )));
                    }
                    if h.mesh.is_boundary(v) {
                        return Err(Error::Config(format!(
                            "shape vertex {i} lies on the hold-all boundary"
                        )));
                    }
                }
                metric.validate(!h.mesh.boundary_vertices().is_empty())?;
                solve_mu(&h.mesh, &h.map, &metric)?
            }
            None => {
                metric.validate(!shape.boundary_vertices().is_empty())?;
                let fixed: Vec<usize> = if shape.boundary_vertices().is_empty() {
                    (0..shape.n_vertices()).collect()
                } else {
                    shape.boundary_vertices().to_vec()
                };
                solve_mu(shape, &fixed, &metric)?
            }
        };
        Ok(Problem {
            target,
            metric,
            solver: SolverOptions::default(),
            holdall: holdall.map(Arc::new),
            mu,
            projector: match shape.is_surface() {
                true => Some(Arc::new(SurfaceProjector::new(shape)?)),
                false => None,
            },
        })
    }

    pub fn holdall(&self) -> Option<&HoldAll> {
        self.holdall.as_deref()
    }

    /// Lamé field on the metric mesh.
    pub fn mu(&self) -> &NodalField {
        &self.mu
    }
}

/// One point of the descent: the shape state plus, in hold-all mode, the
/// current hold-all vertex positions.
#[derive(Clone, Debug)]
pub struct Iterate {
    pub shape: PreShapeState,
    pub holdall_positions: Option<Vec<Point>>,
}

impl Iterate {
    pub fn initial(shape: PreShapeState, problem: &Problem) -> Iterate {
        Iterate {
            holdall_positions: problem.holdall().map(|h| h.mesh.vertices().to_vec()),
            shape,
        }
    }

    fn metric_mesh<'a>(&'a self, problem: &'a Problem) -> (&'a SimplicialMesh, &'a [Point]) {
        match (problem.holdall(), &self.holdall_positions) {
            (Some(h), Some(p)) => (&h.mesh, p),
            _ => (self.shape.reference(), self.shape.positions()),
        }
    }

    /// Restriction of a metric-mesh field to the shape vertices.
    pub fn shape_part(&self, problem: &Problem, u: &[Point]) -> Vec<Point> {
        match problem.holdall() {
            Some(h) => h.map.iter().map(|&v| u[v]).collect(),
            None => u.to_vec(),
        }
    }

    /// Iterate displaced by `s u` (`u` on the metric mesh). With `reproject`
    /// the moved shape vertices are snapped back onto the initial surface.
    pub fn displaced(
        &self,
        problem: &Problem,
        u: &[Point],
        s: f64,
        reproject: bool,
    ) -> Result<Iterate> {
        let projector = match (reproject, &problem.projector) {
            (false, _) => None,
            (true, Some(p)) => Some(p),
            (true, None) => return Err(Error::Config("reprojection needs a surface shape".into())),
        };
        let mask = self.shape.reference().boundary_mask();
        match (problem.holdall(), &self.holdall_positions) {
            (Some(h), Some(pos)) => {
                let mut moved: Vec<Point> = pos.iter().zip(u).map(|(x, d)| x + d * s).collect();
                if let Some(pr) = projector {
                    let mut shape_pos: Vec<Point> = h.map.iter().map(|&v| moved[v]).collect();
                    pr.project_all(&mut shape_pos, mask);
                    for (&v, p) in h.map.iter().zip(shape_pos) {
                        moved[v] = p;
                    }
                }
                for c in 0..h.mesh.n_cells() {
                    let m = h.mesh.signed_measure(&moved, h.mesh.vertices(), c);
                    if !(m > 0.0) {
                        return Err(Error::InvertedCell { cell: c, volume: m });
                    }
                }
                let shape_pos = h.map.iter().map(|&v| moved[v]).collect();
                Ok(Iterate {
                    shape: self.shape.with_positions(shape_pos)?,
                    holdall_positions: Some(moved),
                })
            }
            _ => match projector {
                None => Ok(Iterate {
                    shape: self.shape.displaced(u, s)?,
                    holdall_positions: None,
                }),
                Some(pr) => {
                    let mut moved: Vec<Point> = self
                        .shape
                        .positions()
                        .iter()
                        .zip(u)
                        .map(|(x, d)| x + d * s)
                        .collect();
                    pr.project_all(&mut moved, mask);
                    Ok(Iterate {
                        shape: self.shape.with_positions(moved)?,
                        holdall_positions: None,
                    })
                }
            },
        }
    }
}

/// Objective, derivative and represented gradient at one iterate.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub objective: f64,
    pub residual_max: f64,
    pub target: TargetEval,
    /// Derivative covector on the shape vertices.
    pub derivative: DerivativeCovector,
    /// Descent field `U` on the metric mesh (represents minus the derivative).
    pub descent: GradientField,
    pub grad_l2: f64,
}

impl Evaluation {
    /// Volume-weighted mean of the target density.
    pub fn mean_target(&self, state: &PreShapeState) -> f64 {
        self.target.mass / state.current_volume()
    }
}

pub fn evaluate(it: &Iterate, problem: &Problem, component: Component) -> Result<Evaluation> {
    let target = evaluate_target(&problem.target, &it.shape)?;
    let j = objective(&it.shape, &target.values)?;
    let res = residual_max(&it.shape, &target.values);
    let derivative = assemble_derivative(&it.shape, &problem.target, component)?;
    let mut rhs = DerivativeCovector {
        values: derivative.values.iter().map(|d| -d).collect(),
        component,
    };
    let (mesh, positions) = it.metric_mesh(problem);
    if let Some(h) = problem.holdall() {
        rhs = inject(&rhs, &h.map, h.mesh.n_vertices())?;
    }
    let op = MetricOperator::assemble(mesh, positions, &problem.mu, &problem.metric)?;
    let (descent, _) = op.solve(&rhs.values, &problem.solver)?;
    let grad_l2 = l2_norm_at(&descent.values, mesh, positions)?;
    Ok(Evaluation {
        objective: j,
        residual_max: res,
        target,
        derivative,
        descent,
        grad_l2,
    })
}

/// Outcome of one line search.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Accepted iterate, `None` when every trial failed.
    pub next: Option<(Iterate, f64)>,
    pub step_scale: f64,
    pub backtracks: usize,
}

/// Backtracking from `s = c` along the descent field of `eval`.
pub fn line_search(
    it: &Iterate,
    eval: &Evaluation,
    problem: &Problem,
    cfg: &OptimizerConfig,
) -> Result<StepOutcome> {
    let u_shape = it.shape_part(problem, &eval.descent.values);
    let slope = eval.derivative.pair(&u_shape);
    if slope > 0.0 || !slope.is_finite() {
        return Err(Error::Solver(format!(
            "represented gradient is not a descent direction (slope {slope:e})"
        )));
    }
    let mut s = cfg.initial_scale;
    for b in 0..=cfg.max_backtracks {
        let trial = match it.displaced(problem, &eval.descent.values, s, cfg.reproject) {
            Ok(t) => Some(t),
            Err(
                Error::InvertedCell { .. }
                | Error::DegenerateCell { .. }
                | Error::DegenerateNormal(_),
            ) => None,
            Err(e) => return Err(e),
        };
        if let Some(t) = trial {
            let target = evaluate_target(&problem.target, &t.shape)?;
            let j = objective(&t.shape, &target.values)?;
            if j < eval.objective + cfg.armijo * s * slope {
                return Ok(StepOutcome {
                    next: Some((t, j)),
                    step_scale: s,
                    backtracks: b,
                });
            }
        }
        s *= cfg.backtrack_factor;
    }
    Ok(StepOutcome {
        next: None,
        step_scale: 0.0,
        backtracks: cfg.max_backtracks,
    })
}

/// Receives iteration records and iterates from [`run`].
pub trait RecordSink {
    fn record(&mut self, record: &IterationRecord) -> Result<()>;

    /// Called for every evaluated iterate, before its record.
    fn observe(&mut self, _iter: usize, _it: &Iterate, _eval: &Evaluation) -> Result<()> {
        Ok(())
    }

    /// Called every `snapshot_every` iterations and for the final iterate.
    fn snapshot(&mut self, _iter: usize, _it: &Iterate, _eval: &Evaluation) -> Result<()> {
        Ok(())
    }
}

impl RecordSink for Vec<IterationRecord> {
    fn record(&mut self, record: &IterationRecord) -> Result<()> {
        self.push(*record);
        Ok(())
    }
}

pub const CSV_HEADER: &str = "iter,objective,grad_l2,residual_max,step_scale,backtracks,wall_time";

/// Writes records as CSV. With `deterministic` set, wall times are written
/// as 0 so identical runs produce identical files.
pub struct CsvSink<W: Write> {
    out: W,
    deterministic: bool,
    header_written: bool,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W, deterministic: bool) -> Self {
        CsvSink {
            out,
            deterministic,
            header_written: false,
        }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> RecordSink for CsvSink<W> {
    fn record(&mut self, r: &IterationRecord) -> Result<()> {
        if !self.header_written {
            writeln!(self.out, "{CSV_HEADER}")?;
            self.header_written = true;
        }
        let wall = if self.deterministic { 0.0 } else { r.wall_time };
        writeln!(
            self.out,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{},{:.6}",
            r.iter, r.objective, r.grad_l2, r.residual_max, r.step_scale, r.backtracks, wall
        )?;
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub iterate: Iterate,
    pub status: Status,
    pub reason: StopReason,
    pub iterations: usize,
    pub last: IterationRecord,
}

/// Takes one step from `it`; `None` in the result means stagnation.
pub fn step(
    it: &Iterate,
    problem: &Problem,
    cfg: &OptimizerConfig,
) -> Result<(Option<Iterate>, IterationRecord)> {
    let eval = evaluate(it, problem, cfg.component)?;
    let out = line_search(it, &eval, problem, cfg)?;
    let record = IterationRecord {
        iter: 0,
        objective: eval.objective,
        grad_l2: eval.grad_l2,
        residual_max: eval.residual_max,
        step_scale: out.step_scale,
        backtracks: out.backtracks,
        wall_time: 0.0,
    };
    Ok((out.next.map(|(t, _)| t), record))
}

/// Descends until a tolerance is met, the iteration budget is spent, or no
/// trial step decreases the objective.
pub fn run(
    initial: Iterate,
    problem: &Problem,
    cfg: &OptimizerConfig,
    sink: &mut dyn RecordSink,
) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let mut it = initial;
    let mut g0 = None;
    let mut k = 0;
    loop {
        let eval = evaluate(&it, problem, cfg.component)?;
        let g0 = *g0.get_or_insert(eval.grad_l2);
        let mut record = IterationRecord {
            iter: k,
            objective: eval.objective,
            grad_l2: eval.grad_l2,
            residual_max: eval.residual_max,
            step_scale: 0.0,
            backtracks: 0,
            wall_time: 0.0,
        };
        sink.observe(k, &it, &eval)?;
        let stop = if eval.grad_l2 <= cfg.grad_tol.resolve(g0) {
            Some((Status::Converged, StopReason::GradientNorm))
        } else if eval.residual_max <= cfg.residual_tol.resolve(eval.mean_target(&it.shape)) {
            Some((Status::Converged, StopReason::Residual))
        } else if k >= cfg.max_iters {
            Some((Status::MaxIters, StopReason::IterationLimit))
        } else {
            None
        };
        let outcome = match stop {
            Some(_) => None,
            None => Some(line_search(&it, &eval, problem, cfg)?),
        };
        let (status, reason, next) = match (stop, outcome) {
            (Some((s, r)), _) => (Some(s), r, None),
            (None, Some(o)) => {
                record.step_scale = o.step_scale;
                record.backtracks = o.backtracks;
                match o.next {
                    Some((t, _)) => (None, StopReason::NoDecrease, Some(t)),
                    None => (Some(Status::Stagnated), StopReason::NoDecrease, None),
                }
            }
            (None, None) => unreachable!(),
        };
        record.wall_time = start.elapsed().as_secs_f64();
        let done = status.is_some();
        if done || (cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0) {
            sink.snapshot(k, &it, &eval)?;
        }
        sink.record(&record)?;
        log::info!(
            "iter {k}: J = {:.6e}, |U| = {:.3e}, max|rho - f| = {:.3e}, s = {:.3e}",
            record.objective,
            record.grad_l2,
            record.residual_max,
            record.step_scale
        );
        if let Some(status) = status {
            return Ok(RunResult {
                iterate: it,
                status,
                reason,
                iterations: k,
                last: record,
            });
        }
        it = next.expect("accepted step");
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::estimate_gm;
    use crate::mesh::generate;

    fn distorted(n: usize) -> (PreShapeState, Problem) {
        let m = generate::unit_square(n, 0.0, 0).unwrap();
        let pos: Vec<Point> = m
            .vertices()
            .iter()
            .enumerate()
            .map(|(v, p)| {
                if m.is_boundary(v) {
                    *p
                } else {
                    Point::new(p.x + 0.025 * (25.5 * p.x).sin(), p.y, 0.0)
                }
            })
            .collect();
        let m = m.moved(&pos).unwrap();
        let g = estimate_gm(&m).unwrap();
        let problem = Problem::new(TargetSpec::Uniform, MetricConfig::default(), &m, None).unwrap();
        (PreShapeState::new(m, g).unwrap(), problem)
    }

    #[test]
    fn exact_solution_converges_at_iteration_zero() {
        let m = generate::unit_square(6, 0.0, 0).unwrap();
        let g = estimate_gm(&m).unwrap();
        let problem = Problem::new(TargetSpec::Uniform, MetricConfig::default(), &m, None).unwrap();
        let it = Iterate::initial(PreShapeState::new(m, g).unwrap(), &problem);
        let mut log = Vec::new();
        let r = run(it, &problem, &OptimizerConfig::default(), &mut log).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn zero_budget_returns_max_iters_unchanged() {
        let (s, problem) = distorted(8);
        let before = s.positions().to_vec();
        let cfg = OptimizerConfig {
            max_iters: 0,
            ..Default::default()
        };
        let r = run(
            Iterate::initial(s, &problem),
            &problem,
            &cfg,
            &mut Vec::new(),
        )
        .unwrap();
        assert_eq!(r.status, Status::MaxIters);
        assert_eq!(r.iterate.shape.positions(), &before[..]);
    }

    #[test]
    fn objective_decreases_and_boundary_stays() {
        let (s, problem) = distorted(12);
        let cfg = OptimizerConfig {
            max_iters: 15,
            ..Default::default()
        };
        let mut log = Vec::new();
        let r = run(
            Iterate::initial(s.clone(), &problem),
            &problem,
            &cfg,
            &mut log,
        )
        .unwrap();
        assert!(log.windows(2).all(|w| w[1].objective < w[0].objective));
        for &v in s.reference().boundary_vertices() {
            assert_eq!(r.iterate.shape.positions()[v], s.positions()[v]);
        }
        assert!(log.last().unwrap().objective < 0.5 * log[0].objective);
    }

    #[test]
    fn csv_sink_writes_header_once() {
        let mut sink = CsvSink::new(Vec::new(), true);
        let rec = IterationRecord {
            iter: 0,
            objective: 1.0,
            grad_l2: 2.0,
            residual_max: 3.0,
            step_scale: 0.5,
            backtracks: 1,
            wall_time: 9.0,
        };
        sink.record(&rec).unwrap();
        sink.record(&rec).unwrap();
        let text = String::from_utf8(sink.into_inner()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",1,0.000000"));
    }
}
