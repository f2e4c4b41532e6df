//! Acceptance suite. Run with `cargo test --release --test acceptance`;
//! pass criterion numbers after `--` to run a subset.

use gaugeid::cauchy::{loglog_slope, resolved_n, CauchyTransform, OscillatoryPhase, Support};
use gaugeid::cauchydata::{assemble_cauchy_data, subspace_distance, ForwardOptions};
use gaugeid::cgo::{make_incident, make_phase, solve_remainders, CgoKind, CgoOptions, Region, RemainderOperator, DEFAULT_MARGIN};
use gaugeid::cli::{self, CorpusEntry, ExperimentConfig};
use gaugeid::dirac::{check_clifford, conjugate_by_reduction, reduce_dirac, BlockPotential, CliffordData, Layout};
use gaugeid::field::{build_domain, DomainGrid, FormType, MatrixField};
use gaugeid::gauge::{gauge_equivalence_check, random_section};
use gaugeid::recon::{calibrate_weight, extract_q_at_point, interior_lattice, scan_extract, Block, ExtractOptions, CALIBRATION_H};
use gaugeid::schrodinger::{factorization_report, factorize, manufactured_potential, recover_gauge_second_order, ConnectionData};
use num_complex::Complex;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

type Grid = Arc<DomainGrid<f64>>;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn entry(name: &str) -> CorpusEntry {
    cli::corpus().into_iter().find(|e| e.name == name).unwrap_or_else(|| panic!("corpus entry {name} missing"))
}

fn pair(name: &str, grid: &Grid) -> (BlockPotential<f64>, BlockPotential<f64>) {
    let (v1, v2) = entry(name).item.potentials(grid).expect("corpus entry builds");
    (v1, v2.expect("corpus entry is a pair"))
}

fn single(name: &str, grid: &Grid) -> BlockPotential<f64> {
    entry(name).item.potentials(grid).expect("corpus entry builds").0
}

fn bump(t: f64) -> f64 {
    if t < 1.0 {
        (1.0 - t).powi(4)
    } else {
        0.0
    }
}

fn dyadic(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}

fn c1_cauchy_oracle() -> Verdict {
    let start = Instant::now();
    let g = build_domain::<f64>(256, 1.25).unwrap();
    // cell averages of the indicator, so the jump across the circle is integrated rather than sampled
    let sub = 16;
    let hs = g.spacing;
    let chi = MatrixField::scalar(&g, FormType::Form01, |z| {
        let mut inside = 0;
        for a in 0..sub {
            for b in 0..sub {
                let off = Complex::new((a as f64 + 0.5) / sub as f64 - 0.5, (b as f64 + 0.5) / sub as f64 - 0.5) * hs;
                inside += usize::from((z + off).norm() < 1.0);
            }
        }
        Complex::new(inside as f64 / (sub * sub) as f64, 0.0)
    });
    let u = CauchyTransform::new(&g).dbar_inv(&chi);
    let probes: Vec<Complex<f64>> = (0..10).map(|k| Complex::from_polar(0.08 * (k + 1) as f64, 0.7 * k as f64 + 0.3)).collect();
    let err = probes.iter().map(|z| (u.interpolate(*z, 8)[0] - z.conj()).norm()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(err < 1e-4 && secs < 5.0, format!("max probe error {err:.2e}, {secs:.2} s"))
}

fn c2_oscillatory_decay() -> Verdict {
    let start = Instant::now();
    let (rho, l) = (0.6, 1.1);
    let hs = dyadic(3, 8);
    let mut norms = vec![Vec::new(); 3];
    for &h in &hs {
        let g = build_domain::<f64>(resolved_n(h, 2.0 * rho, l).max(96), l).unwrap();
        // three densities built from the corpus bump profile, each vanishing near the circle
        let w = MatrixField::from_fn(&g, 1, 3, FormType::Form01, |z| {
            let b = bump(z.norm_sqr() / (rho * rho));
            vec![Complex::new(b, 0.0), z * b, (Complex::new(z.re, z.im * z.im) + 0.3) * b]
        });
        let phase = OscillatoryPhase::quadratic(&g, Complex::new(0.0, 0.0), h).unwrap();
        let t = CauchyTransform::with_supports(&g, Support::Disk(rho + 2.0 * g.spacing), Support::Disk(1.0));
        let u = t.osc_dbar_inv(&w, &phase).unwrap();
        for (j, v) in norms.iter_mut().enumerate() {
            v.push(u.entry(0, j).norm_l2());
        }
    }
    let slopes: Vec<f64> = norms.iter().map(|v| loglog_slope(&hs, v)).collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = slopes.iter().all(|s| (0.5..=1.1).contains(s)) && secs < 60.0;
    verdict(pass, format!("slopes {}, {secs:.1} s", fmt_list(&slopes, 3)))
}

fn c3_sh_norm_decay() -> Verdict {
    let l = 1.1;
    let hs = dyadic(3, 8);
    let mut slopes = Vec::new();
    for name in ["diagonal-bump", "diagonal-bump-2x2"] {
        let mut norms = Vec::new();
        for &h in &hs {
            // corpus bumps have radius 0.8, so |∇ψ| ≤ 1.6 on their support
            let g = build_domain::<f64>(resolved_n(h, 1.6, l).max(96), l).unwrap();
            let v = single(name, &g);
            let phase = make_phase(&g, Complex::new(0.0, 0.0), DEFAULT_MARGIN).unwrap();
            let op = RemainderOperator::new(&v, &phase, h, Region::Restricted(1.0)).unwrap();
            norms.push(op.norm_estimate(v.n(), 8, 3));
        }
        slopes.push(loglog_slope(&hs, &norms));
    }
    verdict(slopes.iter().all(|s| *s >= 0.4), format!("slopes {}", fmt_list(&slopes, 3)))
}

fn c4_cgo_residual() -> Verdict {
    let g = build_domain::<f64>(256, 1.25).unwrap();
    let phase = make_phase(&g, Complex::new(0.0, 0.0), DEFAULT_MARGIN).unwrap();
    let opts = CgoOptions::default();
    let sweep = dyadic(2, 4);
    let mut worst: f64 = 0.0;
    let mut slopes = Vec::new();
    for name in ["diagonal-bump", "diagonal-bump-2x2", "diagonal-smooth-2x2"] {
        let v = single(name, &g);
        for kind in [CgoKind::F, CgoKind::G] {
            for j in 0..v.n() {
                let inc = make_incident(&g, v.n(), kind, j).unwrap();
                let mut rem = Vec::new();
                for &h in &sweep {
                    let sol = solve_remainders(&v, &inc, &phase, h, &opts).unwrap();
                    if h == 0.0625 {
                        worst = worst.max(sol.residual(&v).unwrap());
                    }
                    let (r, s) = sol.remainder_norm();
                    rem.push((r * r + s * s).sqrt());
                }
                slopes.push(loglog_slope(&sweep, &rem));
            }
        }
    }
    let lo = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pass = worst < 1e-5 && lo >= 0.5 && hi <= 1.1;
    verdict(pass, format!("max residual {worst:.2e} at h = 2^-4, remainder slopes in [{lo:.3}, {hi:.3}]"))
}

fn c5_calibration() -> Verdict {
    let g = build_domain::<f64>(32, 1.25).unwrap();
    let phase = make_phase(&g, Complex::new(0.0, 0.0), DEFAULT_MARGIN).unwrap();
    match calibrate_weight(&phase, &CALIBRATION_H) {
        Ok(w) => {
            let rel = (w.value() - PI / 2.0).norm() / (PI / 2.0);
            verdict(rel < 0.03 && w.drift < 0.02, format!("C = {:.5}{:+.1e}i, off by {rel:.2e}, drift {:.2e}", w.c.0, w.c.1, w.drift))
        }
        Err(e) => verdict(false, e.to_string()),
    }
}

fn c6_pointwise() -> Verdict {
    let start = Instant::now();
    let g = build_domain::<f64>(256, 1.25).unwrap();
    let item = entry("bump-perturbation").item;
    let (v1, v2) = pair("bump-perturbation", &g);
    let truth = item.block_difference(Block::QMinus, (0, 0)).unwrap();
    // h = 2^-5 is below the resolution limit for radius-0.8 bumps at n = 256
    let opts = ExtractOptions { h_list: vec![0.125, 0.0625], ..Default::default() };
    let center = extract_q_at_point(None, &v1, &v2, Complex::new(0.0, 0.0), (0, 0), Block::QMinus, &opts).unwrap();
    let t0 = truth(Complex::new(0.0, 0.0));
    let center_err = (center.value() - t0).norm() / t0.norm();
    // beyond |z0| = 0.456 the phase gradient on the bump support exceeds what n = 256 resolves at h = 2^-4
    let lattice = interior_lattice(0.15, 0.45);
    let scan = scan_extract(None, &v1, &v2, &lattice, (0, 0), Block::QMinus, &opts, Some(&*truth));
    let l2 = scan.l2_error.unwrap_or(f64::NAN);
    let secs = start.elapsed().as_secs_f64();
    let pass = center.converged && center_err < 0.1 && scan.converged == lattice.len() && l2 < 0.15 && secs < 600.0;
    verdict(
        pass,
        format!("center error {center_err:.3}, lattice L2 error {l2:.3} ({}/{} converged), {secs:.1} s", scan.converged, lattice.len()),
    )
}

fn c7_cauchy_data_gauge_invariance() -> Verdict {
    let g = build_domain::<f64>(160, 1.25).unwrap();
    let mut dists = Vec::new();
    for name in ["gauge-conjugate-dirac", "gauge-conjugate-unitary", "gauge-conjugate-domain"] {
        let (v1, v2) = pair(name, &g);
        let opts = ForwardOptions::default();
        let c1 = assemble_cauchy_data(&v1, 12, 2, &opts).unwrap();
        let c2 = assemble_cauchy_data(&v2, 12, 2, &opts).unwrap();
        dists.push(subspace_distance(&c1, &c2).unwrap().distance);
    }
    verdict(dists.iter().all(|d| *d < 1e-5), format!("subspace distances {}", fmt_list(&dists, 0)))
}

fn c8_gauge_recovery() -> Verdict {
    let g = build_domain::<f64>(192, 1.5).unwrap();
    let tol = 1e-5;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    let mut pass = true;
    for name in ["gauge-conjugate-dirac", "gauge-conjugate-unitary", "gauge-conjugate-domain"] {
        let (v1, v2) = pair(name, &g);
        let r = gauge_equivalence_check(&v1, &v2, tol).unwrap().report;
        let block = r.q_plus_residual.max(r.q_minus_residual).max(r.connection_residuals[0]).max(r.connection_residuals[1]);
        worst = worst.max(block);
        pass &= r.passed;
        if name == "gauge-conjugate-unitary" {
            pass &= r.unitarity_defect < tol;
            notes.push(format!("unitary pair defect {:.2e}", r.unitarity_defect));
        }
    }
    let (c1, c2) = entry("schrodinger-unitary").item.connections(&g).unwrap();
    let chain = gauge_equivalence_check(&factorize(&c1), &factorize(&c2), tol).unwrap();
    let second = recover_gauge_second_order(Some(&chain), &c1, &c2, tol).unwrap();
    pass &= chain.report.passed && second.passed && second.unitarity_defect < tol;
    notes.push(format!("hermitian connection unitarity defect {:.2e}", second.unitarity_defect));
    verdict(pass, format!("max block residual {worst:.2e}, {}", notes.join(", ")))
}

fn c9_factorization() -> Verdict {
    let g = build_domain::<f64>(128, 1.5).unwrap();
    let (conn, _) = entry("schrodinger-unitary").item.connections(&g).unwrap();
    let mut identity: f64 = 0.0;
    let mut first: f64 = 0.0;
    for seed in 0..4 {
        let u = random_section(&g, conn.n(), Layout::Dirac, seed).u;
        identity = identity.max(factorization_report(&conn, &u).unwrap().identity_defect);
        let w = manufactured_potential(&conn, &u).unwrap();
        let manufactured = ConnectionData::new(conn.a.clone(), w).unwrap();
        first = first.max(factorization_report(&manufactured, &u).unwrap().first_order);
    }
    verdict(identity < 1e-8 && first < 1e-5, format!("identity residual {identity:.2e}, manufactured first-order residual {first:.2e}"))
}

fn c10_clifford() -> Verdict {
    let g = build_domain::<f64>(128, 1.25).unwrap();
    let mut algebra: f64 = 0.0;
    let mut conj: f64 = 0.0;
    for n in 1..=2 {
        let cd = CliffordData::<f64>::standard(n);
        let red = reduce_dirac(&cd).unwrap();
        let (a, b) = red.relation_defects(&cd);
        algebra = algebra.max(check_clifford(&cd).max()).max(a).max(b);
        let section = MatrixField::from_fn(&g, 2 * n, 1, FormType::Function, |z| {
            (0..2 * n).map(|k| z.powu(k as u32 + 1) * z.conj() + z.conj().powu(2) * (k as f64 - 0.5) + 1.0).collect()
        });
        conj = conj.max(conjugate_by_reduction(&red, &cd, &section));
    }
    verdict(algebra == 0.0 && conj < 1e-6, format!("algebraic defect {algebra:.1e}, conjugation residual {conj:.2e}"))
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|s| s.to_str()), Some("csv" | "json")) {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c11_determinism() -> Verdict {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let scratch = std::env::temp_dir().join(format!("gaugeid-acceptance-{}", std::process::id()));
    let mut names: Vec<PathBuf> = std::fs::read_dir(&configs).unwrap().flatten().map(|e| e.path()).collect();
    names.sort();
    let mut checked = 0;
    let mut differing = Vec::new();
    for path in names {
        let Ok(mut config) = ExperimentConfig::load(&path) else { continue };
        let stem = path.file_stem().unwrap().to_string_lossy().to_string();
        config.output_dir = scratch.join(&stem);
        if cli::run(&config).is_err() {
            continue;
        }
        let first = snapshot(&config.output_dir);
        cli::run(&config).unwrap();
        if snapshot(&config.output_dir) != first {
            differing.push(stem);
        }
        checked += 1;
    }
    let _ = std::fs::remove_dir_all(&scratch);
    verdict(checked > 0 && differing.is_empty(), format!("{checked} configs rerun, differing: [{}]", differing.join(", ")))
}

fn fmt_list(v: &[f64], digits: usize) -> String {
    let parts: Vec<String> = v.iter().map(|x| if digits == 0 { format!("{x:.2e}") } else { format!("{x:.digits$}") }).collect();
    format!("[{}]", parts.join(", "))
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 11] = [
    (1, "cauchy transform oracle", c1_cauchy_oracle),
    (2, "oscillatory decay", c2_oscillatory_decay),
    (3, "S_h norm decay", c3_sh_norm_decay),
    (4, "CGO residual", c4_cgo_residual),
    (5, "stationary-phase calibration", c5_calibration),
    (6, "pointwise identification", c6_pointwise),
    (7, "gauge invariance of Cauchy data", c7_cauchy_data_gauge_invariance),
    (8, "gauge recovery", c8_gauge_recovery),
    (9, "Bochner-Kodaira factorization", c9_factorization),
    (10, "Clifford reduction", c10_clifford),
    (11, "determinism", c11_determinism),
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = std::panic::catch_unwind(run).unwrap_or_else(|_| verdict(false, "panicked"));
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {name}: {status} ({}; {:.1} s)", v.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
