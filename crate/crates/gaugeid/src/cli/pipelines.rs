use super::render::render_heatmap;
use super::{ExperimentConfig, Pipeline, RunOutcome};
use crate::cauchy::loglog_slope;
use crate::cauchydata::{assemble_cauchy_data, subspace_distance, ForwardOptions};
use crate::cgo::{make_incident, make_phase, solve_remainders, CgoKind, CgoOptions, DEFAULT_MARGIN};
use crate::dirac::{check_clifford, conjugate_by_reduction, reduce_dirac, CliffordData, Layout};
use crate::error::{Error, Result};
use crate::field::{build_domain, DomainGrid, FormType, MatrixField};
use crate::gauge::{gauge_equivalence_check, random_section};
use crate::recon::{boundary_agreement_check, scan_extract, scan_field, ExtractOptions};
use crate::scalar::{c64, Real};
use crate::schrodinger::{
    connection_boundary, factorization_report, first_order_pair, lift_cauchy_data, manufactured_potential, recover_gauge_second_order, second_order_traces,
    ConnectionData,
};
use num_complex::Complex;
use serde::Serialize;
use std::path::Path;
use std::sync::Arc;

/// Collects artifacts and flags while a pipeline runs.
struct Sink<'a> {
    dir: &'a Path,
    artifacts: Vec<String>,
    flags: Vec<String>,
}

impl Sink<'_> {
    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(self.dir.join(name), text)?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn csv<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name)).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for r in rows {
            w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        self.artifacts.push(name.into());
        Ok(())
    }

    /// Write `<stem>.svg` and the rendered scalar field as `<stem>.bin`.
    fn heatmap<T: Real>(&mut self, stem: &str, field: &MatrixField<T>, title: &str) -> Result<()> {
        let svg = format!("{stem}.svg");
        render_heatmap(field, &self.dir.join(&svg), title)?;
        self.artifacts.push(svg);
        self.field(&format!("{stem}.bin"), field)
    }

    fn field<T: Real>(&mut self, name: &str, field: &MatrixField<T>) -> Result<()> {
        std::fs::write(self.dir.join(name), field.to_bytes())?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn flag(&mut self, msg: String) {
        self.flags.push(msg);
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    precision: &'static str,
    config: &'a ExperimentConfig,
    artifacts: &'a [String],
    flags: &'a [String],
}

pub(super) fn run_typed<T: Real>(config: &ExperimentConfig) -> Result<RunOutcome> {
    let grid = build_domain::<T>(config.grid.n, config.grid.half_side).map_err(|e| Error::Config(format!("grid: {e}")))?;
    let mut sink = Sink { dir: &config.output_dir, artifacts: Vec::new(), flags: Vec::new() };
    match config.pipeline {
        Pipeline::CgoSweep => cgo_sweep(config, &grid, &mut sink),
        Pipeline::CauchyData => cauchy_data(config, &grid, &mut sink),
        Pipeline::Extract => extract(config, &grid, &mut sink),
        Pipeline::GaugeCheck => gauge_check(config, &grid, &mut sink),
        Pipeline::SchrodingerCheck => schrodinger_check(config, &grid, &mut sink),
        Pipeline::DiracReduce => dirac_reduce(config, &grid, &mut sink),
    }?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        precision: T::NAME,
        config,
        artifacts: &sink.artifacts,
        flags: &sink.flags,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(config.output_dir.join("manifest.json"), text)?;
    let mut artifacts = sink.artifacts;
    artifacts.push("manifest.json".into());
    Ok(RunOutcome { flags: sink.flags, artifacts })
}

fn modulus<T: Real>(f: &MatrixField<T>, i: usize, j: usize) -> MatrixField<T> {
    f.entry(i, j).map(|z| crate::scalar::cof(Complex::new(c64(z).norm(), 0.0))).with_form(FormType::Function)
}

#[derive(Serialize)]
struct SweepCsv {
    component: usize,
    h: f64,
    norm_r: f64,
    norm_s: f64,
    residual: f64,
    sh_norm: f64,
    status: String,
}

#[derive(Serialize)]
struct SweepReport {
    z0: (f64, f64),
    slopes_r: Vec<Option<f64>>,
    failures: usize,
}

fn cgo_sweep<T: Real>(config: &ExperimentConfig, grid: &Arc<DomainGrid<T>>, sink: &mut Sink) -> Result<()> {
    let (v, _) = config.item()?.potentials(grid)?;
    let z0 = config.z0_points()[0];
    let phase = make_phase(grid, z0, DEFAULT_MARGIN).map_err(|e| e.at("phase"))?;
    let opts = CgoOptions { seed: config.seed, ..CgoOptions::default() };
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    let mut failures = 0;
    let mut last: Option<MatrixField<T>> = None;
    for j in 0..v.n() {
        let inc = make_incident(grid, v.n(), CgoKind::F, j)?;
        let (mut hs, mut rs) = (Vec::new(), Vec::new());
        for &h in &config.h_list {
            match solve_remainders(&v, &inc, &phase, h, &opts) {
                Ok(sol) => {
                    let (nr, ns) = sol.remainder_norm();
                    let res = sol.residual(&v)?;
                    rows.push(SweepCsv { component: j, h, norm_r: nr, norm_s: ns, residual: res, sh_norm: sol.sh_norm, status: "ok".into() });
                    if nr > 0.0 {
                        hs.push(h);
                        rs.push(nr);
                    }
                    if j == 0 {
                        last = Some(sol.r.clone());
                    }
                }
                Err(e) => {
                    failures += 1;
                    sink.flag(format!("component {j}, h = {h}: {e}"));
                    rows.push(SweepCsv { component: j, h, norm_r: f64::NAN, norm_s: f64::NAN, residual: f64::NAN, sh_norm: f64::NAN, status: e.to_string() });
                }
            }
        }
        slopes.push((hs.len() >= 2).then(|| loglog_slope(&hs, &rs)));
    }
    if failures == rows.len() {
        return Err(Error::Divergence("no h value produced a CGO solution".into()).at("cgo-sweep"));
    }
    sink.csv("sweep.csv", &rows)?;
    sink.json("sweep.json", &SweepReport { z0: (z0.re, z0.im), slopes_r: slopes, failures })?;
    if let Some(r) = last {
        sink.heatmap("remainder", &modulus(&r, 0, 0), "|r| at the smallest h, component 0")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ColumnCsv {
    matrix: usize,
    column: usize,
    trace_norm: f64,
}

#[derive(Serialize)]
struct CauchyReport {
    columns: usize,
    solver_tol: Vec<f64>,
    differential_residual: Vec<f64>,
    hardy_condition: Vec<f64>,
    subspace_distance: Option<f64>,
    boundary: Option<crate::recon::BoundaryReport>,
}

fn cauchy_data<T: Real>(config: &ExperimentConfig, grid: &Arc<DomainGrid<T>>, sink: &mut Sink) -> Result<()> {
    let (v1, v2) = config.item()?.potentials(grid)?;
    let opts = ForwardOptions { seed: config.seed, ..ForwardOptions::default() };
    let mut mats = vec![assemble_cauchy_data(&v1, config.degree, v1.n(), &opts).map_err(|e| e.at("cauchy data 1"))?];
    if let Some(v2) = &v2 {
        mats.push(assemble_cauchy_data(v2, config.degree, v2.n(), &opts).map_err(|e| e.at("cauchy data 2"))?);
    }
    let mut rows = Vec::new();
    for (k, m) in mats.iter().enumerate() {
        m.save(&config.output_dir.join(format!("cauchy_{}", k + 1)))?;
        sink.artifacts.push(format!("cauchy_{}/", k + 1));
        for (j, t) in m.traces.iter().enumerate() {
            rows.push(ColumnCsv { matrix: k + 1, column: j, trace_norm: t.norm().f64() });
        }
    }
    let (distance, boundary) = if mats.len() == 2 {
        let b = boundary_agreement_check(&mats[0], &mats[1], config.tolerances.boundary)?;
        if !b.agree {
            sink.flag("boundary agreement check failed: the potentials differ at the boundary".into());
        }
        (Some(subspace_distance(&mats[0], &mats[1])?.distance), Some(b))
    } else {
        (None, None)
    };
    sink.csv("columns.csv", &rows)?;
    sink.json(
        "cauchy.json",
        &CauchyReport {
            columns: mats[0].columns(),
            solver_tol: mats.iter().map(|m| m.solver_tol).collect(),
            differential_residual: mats.iter().map(|m| m.differential_residual).collect(),
            hardy_condition: mats.iter().map(|m| m.hardy_condition).collect(),
            subspace_distance: distance,
            boundary,
        },
    )
}

#[derive(Serialize)]
struct ExtractCsv {
    x: f64,
    y: f64,
    value_re: f64,
    value_im: f64,
    truth_re: f64,
    truth_im: f64,
    abs_error: f64,
    rel_error: f64,
    converged: bool,
    samples: usize,
}

#[derive(Serialize)]
struct ExtractReport<'a> {
    block: crate::recon::Block,
    entry: [usize; 2],
    converged: usize,
    points: usize,
    l2_error: Option<f64>,
    within_tolerance: usize,
    tolerance: f64,
    scan: &'a crate::recon::ScanResult,
}

fn extract<T: Real>(config: &ExperimentConfig, grid: &Arc<DomainGrid<T>>, sink: &mut Sink) -> Result<()> {
    let item = config.item()?;
    let (v1, v2) = item.potentials(grid)?;
    let v2 = v2.ok_or_else(|| Error::Config("corpus: extract needs a pair".into()))?;
    let mut opts = ExtractOptions::default();
    if !config.h_list.is_empty() {
        opts.h_list = config.h_list.clone();
    }
    opts.cgo.seed = config.seed;
    let entry = (config.entry[0], config.entry[1]);
    let truth = item.block_difference(config.block, entry);
    let z0s = config.z0_points();
    let scan = scan_extract(None, &v1, &v2, &z0s, entry, config.block, &opts, truth.as_deref());
    let mut rows = Vec::new();
    let mut within = 0;
    for p in &scan.points {
        let z0 = Complex::new(p.z0.0, p.z0.1);
        let t = truth.as_ref().map_or(Complex::new(f64::NAN, f64::NAN), |f| f(z0));
        let err = (p.value() - t).norm();
        let rel = err / t.norm().max(config.tolerances.extract.min(1e-3));
        if p.converged && rel <= config.tolerances.extract {
            within += 1;
        }
        rows.push(ExtractCsv {
            x: p.z0.0,
            y: p.z0.1,
            value_re: p.value.0,
            value_im: p.value.1,
            truth_re: t.re,
            truth_im: t.im,
            abs_error: err,
            rel_error: rel,
            converged: p.converged,
            samples: p.samples.len(),
        });
    }
    let unconverged = scan.points.len() - scan.converged;
    if unconverged > 0 {
        sink.flag(format!("{unconverged} of {} points did not converge", scan.points.len()));
    }
    if scan.converged == 0 {
        return Err(Error::Numerical("no extraction point converged".into()).at("extract"));
    }
    sink.csv("extract.csv", &rows)?;
    sink.json(
        "extract.json",
        &ExtractReport {
            block: config.block,
            entry: config.entry,
            converged: scan.converged,
            points: scan.points.len(),
            l2_error: scan.l2_error,
            within_tolerance: within,
            tolerance: config.tolerances.extract,
            scan: &scan,
        },
    )?;
    let field = scan_field(grid, &scan, truth.as_deref());
    sink.heatmap("extract_error", &field, "|extracted - truth| (nearest converged point)")
}

#[derive(Serialize)]
struct GaugeOutcome {
    equivalent: bool,
    reason: Option<String>,
    report: Option<crate::gauge::GaugeReport>,
}

/// Pointwise Frobenius norm as a real scalar field.
fn frobenius<T: Real>(f: &MatrixField<T>) -> MatrixField<T> {
    let nn = f.nodes();
    let mut out = MatrixField::zeros(&f.grid, 1, 1, FormType::Function);
    for k in 0..nn {
        let s: f64 = (0..f.dim()).map(|e| c64(f.data[e * nn + k]).norm_sqr()).sum();
        out.data[k] = crate::scalar::c(s.sqrt(), 0.0);
    }
    out
}

/// Gauge check; failure to find a boundary normalization is a negative
/// answer rather than a numerical failure.
fn gauge_chain<T: Real>(
    v1: &crate::dirac::BlockPotential<T>,
    v2: &crate::dirac::BlockPotential<T>,
    tol: f64,
) -> Result<(Option<crate::gauge::GaugeChain<T>>, Option<String>)> {
    match gauge_equivalence_check(v1, v2, tol) {
        Ok(c) => Ok((Some(c), None)),
        Err(e) if matches!(e.root(), Error::Numerical(_)) => Ok((None, Some(e.to_string()))),
        Err(e) => Err(e),
    }
}

fn gauge_check<T: Real>(config: &ExperimentConfig, grid: &Arc<DomainGrid<T>>, sink: &mut Sink) -> Result<()> {
    let (v1, v2) = config.item()?.potentials(grid)?;
    let v2 = v2.ok_or_else(|| Error::Config("corpus: gauge-check needs a pair".into()))?;
    let (chain, reason) = gauge_chain(&v1, &v2, config.tolerances.gauge)?;
    let outcome = GaugeOutcome {
        equivalent: chain.as_ref().is_some_and(|c| c.report.passed),
        reason: reason.clone(),
        report: chain.as_ref().map(|c| c.report.clone()),
    };
    if !outcome.equivalent {
        sink.flag(reason.unwrap_or_else(|| "gauge residuals exceed tolerance".into()));
    }
    sink.json("gauge.json", &outcome)?;
    if let Some(c) = chain {
        sink.field("gauge_f.bin", &c.f)?;
        let id = MatrixField::identity(grid, c.f.rows);
        sink.heatmap("gauge_f_defect", &frobenius(&c.f.clone().with_form(FormType::Function).sub(&id)), "|F - Id| (Frobenius)")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SchrodingerReport {
    invariants: [crate::schrodinger::InvariantReport; 2],
    factorization: crate::schrodinger::FactorizationReport,
    manufactured: crate::schrodinger::FactorizationReport,
    lift_defect: f64,
    gauge: Option<crate::gauge::GaugeReport>,
    second_order: Option<crate::schrodinger::SecondOrderReport>,
    reason: Option<String>,
    tolerances: super::Tolerances,
}

fn schrodinger_check<T: Real>(config: &ExperimentConfig, grid: &Arc<DomainGrid<T>>, sink: &mut Sink) -> Result<()> {
    let (c1, c2) = config.item()?.connections(grid)?;
    let u = random_section(grid, c1.n(), Layout::Dirac, config.seed).u;
    let factorization = factorization_report(&c1, &u).map_err(|e| e.at("factorization"))?;
    let w = manufactured_potential(&c1, &u).map_err(|e| e.at("manufactured potential"))?;
    let cm = ConnectionData::new(c1.a.clone(), w)?;
    let manufactured = factorization_report(&cm, &u)?;
    let (tu, tn) = second_order_traces(&c1, &u);
    let lifted = lift_cauchy_data(&tu, &tn, &connection_boundary(&c1)).map_err(|e| e.at("lift"))?;
    let direct = first_order_pair(&c1, &u).trace(crate::field::TRACE_ORDER);
    let lift_defect = lifted.values.iter().zip(&direct.values).map(|(a, b)| c64(*a - *b).norm()).fold(0.0, f64::max);
    let tol = &config.tolerances;
    if factorization.identity_defect > tol.factorization {
        sink.flag(format!("factorization identity defect {:.2e}", factorization.identity_defect));
    }
    if manufactured.first_order > tol.lift {
        sink.flag(format!("manufactured first-order residual {:.2e}", manufactured.first_order));
    }
    if lift_defect > tol.lift {
        sink.flag(format!("lift defect {lift_defect:.2e}"));
    }
    let v1 = crate::schrodinger::factorize(&c1);
    let v2 = crate::schrodinger::factorize(&c2);
    let (chain, reason) = gauge_chain(&v1, &v2, tol.gauge)?;
    let second = match &chain {
        Some(ch) => Some(recover_gauge_second_order(Some(ch), &c1, &c2, tol.gauge)?),
        None => None,
    };
    if !second.as_ref().is_some_and(|s| s.passed) {
        sink.flag("connections are not related by a unitary gauge within tolerance".into());
    }
    let report = SchrodingerReport {
        invariants: [c1.check_invariants(), c2.check_invariants()],
        factorization,
        manufactured,
        lift_defect,
        gauge: chain.as_ref().map(|c| c.report.clone()),
        second_order: second,
        reason,
        tolerances: tol.clone(),
    };
    sink.json("schrodinger.json", &report)?;
    c1.save(&config.output_dir.join("connection_1"))?;
    c2.save(&config.output_dir.join("connection_2"))?;
    sink.artifacts.push("connection_1/".into());
    sink.artifacts.push("connection_2/".into());
    sink.heatmap("curvature_1", &frobenius(&c1.omega), "|Omega_1| (Frobenius)")
}

#[derive(Serialize)]
struct DiracReport {
    n: usize,
    clifford: [(String, f64); 6],
    relation_defects: (f64, f64),
    condition: f64,
    conjugation_residual: f64,
}

fn dirac_reduce<T: Real>(config: &ExperimentConfig, grid: &Arc<DomainGrid<T>>, sink: &mut Sink) -> Result<()> {
    let n = match config.item() {
        Ok(item) => item.potentials(grid)?.0.n(),
        Err(_) => 1,
    };
    let cd = CliffordData::<T>::standard(n);
    let rep = check_clifford(&cd);
    let red = reduce_dirac(&cd).map_err(|e| e.at("reduce"))?;
    let p = random_section(grid, n, Layout::Domain, config.seed);
    let section = crate::dirac::stack_rows(&p.u, &p.v);
    let conj = conjugate_by_reduction(&red, &cd, &section);
    if rep.max() > 1e-12 {
        sink.flag(format!("Clifford relations violated by {:.2e}", rep.max()));
    }
    let report = DiracReport {
        n,
        clifford: [
            ("x_square".into(), rep.x_square),
            ("y_square".into(), rep.y_square),
            ("anticommutator".into(), rep.anticommutator),
            ("x_skew".into(), rep.x_skew),
            ("y_skew".into(), rep.y_skew),
            ("chirality".into(), rep.chirality),
        ],
        relation_defects: red.relation_defects(&cd),
        condition: red.condition,
        conjugation_residual: conj,
    };
    sink.json("dirac.json", &report)
}
