use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use paramtrack_core::fields::{estimate_gm, uniform_gm};
use paramtrack_core::mesh::gmsh::load_gmsh;
use paramtrack_core::mesh::vtk::{write_vtk_at, VtkField};
use paramtrack_core::optimizer::{
    evaluate, run, CsvSink, Evaluation, HoldAll, Iterate, IterationRecord, Problem, RecordSink,
    RunResult,
};
use paramtrack_core::{Expr, Point, PreShapeState, SimplicialMesh, TargetSpec};

use crate::config::{DensitySource, Mode, RunConfig};

/// Everything needed to start a run.
pub struct Prepared {
    pub problem: Problem,
    pub initial: Iterate,
    pub spec: TargetSpec,
}

/// Loads the mesh, applies the distortion, builds the initial density,
/// the target and the metric.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let path = &cfg.mesh.path;
    let loaded = load_gmsh(path).with_context(|| format!("loading mesh {}", path.display()))?;
    let (shape, holdall) = match (cfg.mesh.mode, loaded.dim_cell(), loaded.dim_ambient()) {
        (Mode::Volume2d, 2, 2) => (loaded, None),
        (Mode::Surface3d, 2, 3) => (loaded, None),
        (Mode::Surface3d, 3, 3) => {
            let tag = cfg
                .mesh
                .shape_tag
                .context("a tetrahedral mesh needs `shape_tag` to select the shape surface")?;
            let (shape, map) = loaded.extract_surface(tag)?;
            (shape, Some(HoldAll { mesh: loaded, map }))
        }
        (mode, dc, da) => bail!("{mode:?} does not match a mesh of {dc}-cells in {da}D"),
    };
    let shape = match &cfg.initial_distortion {
        Some(d) => distort(&shape, [&d.x, &d.y, &d.z])?,
        None => shape,
    };
    let g = match cfg.density.source {
        DensitySource::Estimate => estimate_gm(&shape)?,
        DensitySource::Uniform => uniform_gm(&shape)?,
    };
    let spec = cfg.target.spec()?;
    let problem = Problem::new(spec.clone(), cfg.metric, &shape, holdall)?;
    let state = PreShapeState::new(shape, g)?;
    Ok(Prepared {
        initial: Iterate::initial(state, &problem),
        problem,
        spec,
    })
}

/// Moves interior vertices by the given displacement expressions.
pub fn distort(mesh: &SimplicialMesh, exprs: [&String; 3]) -> Result<SimplicialMesh> {
    let e: Vec<Expr> = exprs
        .iter()
        .map(|s| Expr::parse(s))
        .collect::<Result<_, _>>()?;
    let verts: Vec<Point> = mesh
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if mesh.is_boundary(i) {
                *p
            } else {
                p + Point::new(e[0].eval(p), e[1].eval(p), e[2].eval(p))
            }
        })
        .collect();
    let out = SimplicialMesh::new(
        mesh.dim_ambient(),
        mesh.dim_cell(),
        verts,
        mesh.connectivity().to_vec(),
    )?;
    for c in 0..out.n_cells() {
        if out.signed_measure(out.vertices(), mesh.vertices(), c) <= 0.0 {
            bail!("initial distortion inverts cell {c}");
        }
    }
    Ok(out)
}

/// Writes `log.csv`, periodic `iter_%04d.vtk` snapshots and tracks the mass
/// defect along the run.
pub struct RunSink {
    csv: CsvSink<BufWriter<File>>,
    dir: PathBuf,
    pub records: Vec<IterationRecord>,
    /// Largest `|sum rho vol - mass| / mass` over the evaluated iterates.
    pub max_mass_defect: f64,
    /// Largest `|sum rho vol - 1|`; the initial densities have unit integral.
    pub max_unit_mass_defect: f64,
    /// Smallest orientation-aware cell measure over the evaluated iterates.
    pub min_signed_measure: f64,
    pub snapshots_written: usize,
    holdall: Option<SimplicialMesh>,
}

impl RunSink {
    pub fn create(
        dir: &Path,
        deterministic: bool,
        holdall: Option<SimplicialMesh>,
    ) -> Result<RunSink> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let file = File::create(dir.join("log.csv"))?;
        Ok(RunSink {
            csv: CsvSink::new(BufWriter::new(file), deterministic),
            dir: dir.to_path_buf(),
            records: Vec::new(),
            max_mass_defect: 0.0,
            max_unit_mass_defect: 0.0,
            min_signed_measure: f64::INFINITY,
            snapshots_written: 0,
            holdall,
        })
    }
}

/// `sum rho vol` over the current cells.
pub fn total_mass(state: &PreShapeState) -> f64 {
    state
        .density()
        .iter()
        .zip(state.current_geometry())
        .map(|(r, g)| r * g.volume)
        .sum()
}

pub fn mass_defect(state: &PreShapeState) -> f64 {
    (total_mass(state) - state.mass()).abs() / state.mass()
}

/// Smallest orientation-aware cell measure of the shape and, if present,
/// the hold-all.
pub fn min_signed_measure(it: &Iterate, holdall: Option<&SimplicialMesh>) -> f64 {
    let m = it.shape.reference();
    let shape = (0..m.n_cells())
        .map(|c| m.signed_measure(it.shape.positions(), m.vertices(), c))
        .fold(f64::INFINITY, f64::min);
    match (holdall, &it.holdall_positions) {
        (Some(h), Some(p)) => (0..h.n_cells())
            .map(|c| h.signed_measure(p, h.vertices(), c))
            .fold(shape, f64::min),
        _ => shape,
    }
}

impl RecordSink for RunSink {
    fn record(&mut self, r: &IterationRecord) -> paramtrack_core::Result<()> {
        self.records.push(*r);
        self.csv.record(r)
    }

    fn observe(
        &mut self,
        _iter: usize,
        it: &Iterate,
        _eval: &Evaluation,
    ) -> paramtrack_core::Result<()> {
        self.max_mass_defect = self.max_mass_defect.max(mass_defect(&it.shape));
        self.max_unit_mass_defect = self
            .max_unit_mass_defect
            .max((total_mass(&it.shape) - 1.0).abs());
        self.min_signed_measure = self
            .min_signed_measure
            .min(min_signed_measure(it, self.holdall.as_ref()));
        Ok(())
    }

    fn snapshot(
        &mut self,
        iter: usize,
        it: &Iterate,
        eval: &Evaluation,
    ) -> paramtrack_core::Result<()> {
        self.snapshots_written += 1;
        write_state_vtk(&self.dir.join(format!("iter_{iter:04}.vtk")), it, eval)
    }
}

fn write_state_vtk(path: &Path, it: &Iterate, eval: &Evaluation) -> paramtrack_core::Result<()> {
    let state = &it.shape;
    let descent: Vec<Point> = match &it.holdall_positions {
        Some(_) => Vec::new(),
        None => eval.descent.values.clone(),
    };
    let mut fields = vec![
        VtkField::Cell("density", state.density()),
        VtkField::Cell("target", eval.target.values.values()),
        VtkField::Nodal("g_m", state.g_m().values()),
    ];
    if !descent.is_empty() {
        fields.push(VtkField::NodalVector("descent", &descent));
    }
    write_vtk_at(state.reference(), state.positions(), &fields, path)
}

pub struct OptimizeOutcome {
    pub result: RunResult,
    pub records: Vec<IterationRecord>,
    pub max_mass_defect: f64,
    pub max_unit_mass_defect: f64,
    pub min_signed_measure: f64,
    pub initial: PreShapeState,
    pub spec: TargetSpec,
    pub wall_time: f64,
}

/// Runs the optimizer and writes all artifacts to `cfg.output.dir`.
pub fn optimize(cfg: &RunConfig) -> Result<OptimizeOutcome> {
    let prepared = prepare(cfg)?;
    let holdall = prepared.problem.holdall().map(|h| h.mesh.clone());
    let mut sink = RunSink::create(&cfg.output.dir, cfg.output.deterministic_log, holdall)?;
    let initial = prepared.initial.shape.clone();
    let start = std::time::Instant::now();
    let result = run(
        prepared.initial,
        &prepared.problem,
        &cfg.optimizer,
        &mut sink,
    )?;
    let wall_time = start.elapsed().as_secs_f64();
    let eval = evaluate(&result.iterate, &prepared.problem, cfg.optimizer.component)?;
    write_state_vtk(&cfg.output.dir.join("final.vtk"), &result.iterate, &eval)?;
    Ok(OptimizeOutcome {
        result,
        records: sink.records,
        max_mass_defect: sink.max_mass_defect,
        max_unit_mass_defect: sink.max_unit_mass_defect,
        min_signed_measure: sink.min_signed_measure,
        initial,
        spec: prepared.spec,
        wall_time,
    })
}
