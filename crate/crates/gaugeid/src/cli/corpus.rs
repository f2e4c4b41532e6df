//! Built-in potentials, gauge pairs and connection pairs.

use super::expr::{parse, Expr};
use crate::dirac::{BlockPotential, Layout};
use crate::error::{Error, Result};
use crate::field::{DomainGrid, FormType, MatrixField};
use crate::gauge::{boundary_identity_gauge, gauge_action};
use crate::linalg::Mat;
use crate::scalar::{cof, Real};
use crate::schrodinger::ConnectionData;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Block potential written as row-major expression lists. An empty list is
/// the zero block. `second` is the `A'*` slot in the Dirac layout and `B`
/// in the domain layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub layout: Layout,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub q_plus: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub q_minus: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub a: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub second: Vec<String>,
}

/// Boundary-identity gauge `exp(β(z)K)` with `K` built from `generator`
/// (row-major `[re, im]` pairs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSpec {
    pub generator: Vec<[f64; 2]>,
    #[serde(default)]
    pub unitary: bool,
}

/// Connection `A` (the `dz̄` coefficient) and potential `W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSpec {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub a: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub w: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CorpusItem {
    Potential { potential: PotentialSpec },
    Pair { first: PotentialSpec, second: PotentialSpec },
    /// `second = P⁻¹(D + V)P` (Dirac) or the `(P, R)` action (domain).
    GaugePair {
        base: PotentialSpec,
        gauge: GaugeSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        second_gauge: Option<GaugeSpec>,
    },
    /// Either an explicit second connection or a gauge of the first.
    ConnectionPair {
        first: ConnectionSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        second: Option<ConnectionSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gauge: Option<GaugeSpec>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub name: String,
    pub description: String,
    pub item: CorpusItem,
}

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn diag_dirac(n: usize, qp: &[&str], qm: &[&str]) -> PotentialSpec {
    PotentialSpec { layout: Layout::Dirac, n, q_plus: s(qp), q_minus: s(qm), a: vec![], second: vec![] }
}

const REF_QP: &str = "0.4*bump(r2/0.64)";
const REF_QM: &str = "(0.3 + 0.1*i)*bump(r2/0.64)";

/// The built-in corpus. Names are stable.
pub fn corpus() -> Vec<CorpusEntry> {
    let entry = |name: &str, description: &str, item| CorpusEntry { name: name.into(), description: description.into(), item };
    let smooth2 = diag_dirac(
        2,
        &["exp(-2*r2)", "0.5*z*exp(-2*r2)", "0.3*exp(-2*r2)", "(0.5 + i*y)*exp(-2*r2)"],
        &["0.4*exp(-2*r2)", "zbar*exp(-2*r2)", "0.2*i*exp(-2*r2)", "-0.5*exp(-2*r2)"],
    );
    let conn = ConnectionSpec {
        n: 2,
        a: s(&["(0.3*x + 0.1*i)*exp(-3*r2)", "(0.2 - 0.1*i*y)*exp(-3*r2)", "(-0.15 + 0.05*i)*exp(-3*r2)", "(0.1*y + 0.2*i*x)*exp(-3*r2)"]),
        w: s(&["0.5*exp(-3*r2)", "(0.1 + 0.2*i)*exp(-3*r2)", "(0.1 - 0.2*i)*exp(-3*r2)", "-0.3*x*exp(-3*r2)"]),
    };
    vec![
        entry("zero", "vanishing 1x1 Dirac potential", CorpusItem::Potential { potential: diag_dirac(1, &[], &[]) }),
        entry(
            "diagonal-bump",
            "1x1 diagonal potential with compact bumps of radius 0.8",
            CorpusItem::Potential { potential: diag_dirac(1, &[REF_QP], &[REF_QM]) },
        ),
        entry(
            "diagonal-bump-2x2",
            "2x2 diagonal-block potential with compact bumps",
            CorpusItem::Potential {
                potential: diag_dirac(
                    2,
                    &["0.4*bump(r2/0.64)", "0.1*z*bump(r2/0.64)", "0", "-0.3*bump(r2/0.64)"],
                    &["0.2*bump(r2/0.64)", "0", "0.1*i*bump(r2/0.64)", "0.3*bump(r2/0.64)"],
                ),
            },
        ),
        entry("diagonal-smooth-2x2", "2x2 Gaussian-damped diagonal-block potential", CorpusItem::Potential { potential: smooth2.clone() }),
        entry(
            "bump-perturbation",
            "diagonal-bump and the same potential with 0.5*bump added to Q-",
            CorpusItem::Pair {
                first: diag_dirac(1, &[REF_QP], &[REF_QM]),
                second: diag_dirac(1, &[REF_QP], &["(0.8 + 0.1*i)*bump(r2/0.64)"]),
            },
        ),
        entry(
            "interior-perturbation",
            "potentials differing by a bump of radius 0.5 (equal near the boundary)",
            CorpusItem::Pair {
                first: diag_dirac(1, &[REF_QP], &[REF_QM]),
                second: diag_dirac(1, &["0.4*bump(r2/0.64) + 0.3*bump(r2/0.25)"], &[REF_QM]),
            },
        ),
        entry(
            "boundary-perturbation",
            "potentials differing by a ring concentrated at the circle",
            CorpusItem::Pair {
                first: diag_dirac(1, &[REF_QP], &[REF_QM]),
                second: diag_dirac(1, &["0.4*bump(r2/0.64) + 0.5*exp(-40*(|z| - 1)^2)"], &[REF_QM]),
            },
        ),
        entry(
            "gauge-conjugate-dirac",
            "diagonal-smooth-2x2 and its conjugate by a boundary-identity gauge",
            CorpusItem::GaugePair {
                base: smooth2.clone(),
                gauge: GaugeSpec { generator: vec![[0.5, 0.0], [-0.5, -0.1], [0.2, 0.1], [0.1, 0.0]], unitary: false },
                second_gauge: None,
            },
        ),
        entry(
            "gauge-conjugate-unitary",
            "diagonal-smooth-2x2 and its conjugate by a unitary boundary-identity gauge",
            CorpusItem::GaugePair {
                base: smooth2,
                gauge: GaugeSpec { generator: vec![[0.3, 0.0], [0.2, -0.1], [-0.1, 0.1], [0.4, 0.0]], unitary: true },
                second_gauge: None,
            },
        ),
        entry(
            "gauge-conjugate-domain",
            "domain-layout potential conjugated by two distinct gauges",
            CorpusItem::GaugePair {
                base: PotentialSpec {
                    layout: Layout::Domain,
                    n: 2,
                    a: s(&["0.2*exp(-3*r2)", "0.1*z*exp(-3*r2)", "0", "-0.1*i*exp(-3*r2)"]),
                    q_plus: s(&["0.5*exp(-2*r2)", "0.2*exp(-2*r2)", "0", "0.3*exp(-2*r2)"]),
                    q_minus: s(&["0.3*exp(-2*r2)", "0", "0.1*zbar*exp(-2*r2)", "-0.4*exp(-2*r2)"]),
                    second: s(&["0.1*exp(-3*r2)", "0", "0.2*zbar*exp(-3*r2)", "0.15*exp(-3*r2)"]),
                },
                gauge: GaugeSpec { generator: vec![[0.4, 0.0], [0.2, 0.1], [-0.3, 0.0], [0.1, -0.2]], unitary: false },
                second_gauge: Some(GaugeSpec { generator: vec![[-0.2, 0.1], [0.3, 0.0], [0.1, 0.0], [0.5, 0.0]], unitary: false }),
            },
        ),
        entry(
            "schrodinger-unitary",
            "Hermitian connection with potential and its unitary boundary-identity gauge",
            CorpusItem::ConnectionPair {
                first: conn,
                second: None,
                gauge: Some(GaugeSpec { generator: vec![[0.0, 0.6], [-0.5, 0.6], [0.5, 0.8], [0.0, 0.8]], unitary: true }),
            },
        ),
        entry(
            "schrodinger-unrelated",
            "flat connection against A = dbar(0.5*exp(-4|z|^2)), not gauge related",
            CorpusItem::ConnectionPair {
                first: ConnectionSpec { n: 1, a: vec![], w: vec![] },
                second: Some(ConnectionSpec { n: 1, a: s(&["-2*z*exp(-4*r2)"]), w: vec![] }),
                gauge: None,
            },
        ),
    ]
}

pub fn find(name: &str) -> Option<CorpusEntry> {
    corpus().into_iter().find(|e| e.name == name)
}

/// Plain-text table of the corpus.
pub fn list_corpus() -> String {
    let mut out = format!("{:<26} {:<17} {}\n", "name", "kind", "description");
    for e in corpus() {
        let kind = match e.item {
            CorpusItem::Potential { .. } => "potential",
            CorpusItem::Pair { .. } => "pair",
            CorpusItem::GaugePair { .. } => "gauge-pair",
            CorpusItem::ConnectionPair { .. } => "connection-pair",
        };
        out.push_str(&format!("{:<26} {:<17} {}\n", e.name, kind, e.description));
    }
    out
}

fn parse_block(exprs: &[String], n: usize, path: &str) -> Result<Option<Vec<Expr>>> {
    if exprs.is_empty() {
        return Ok(None);
    }
    if exprs.len() != n * n {
        return Err(Error::Config(format!("{path}: expected {} expressions for an {n}x{n} block, found {}", n * n, exprs.len())));
    }
    exprs
        .iter()
        .enumerate()
        .map(|(k, e)| parse(e).map_err(|err| Error::Config(format!("{path}[{k}]: {err}"))))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Evaluator for a block given as expressions.
pub struct BlockExpr {
    n: usize,
    exprs: Option<Vec<Expr>>,
}

impl BlockExpr {
    pub fn eval(&self, z: Complex<f64>) -> Vec<Complex<f64>> {
        match &self.exprs {
            Some(es) => es.iter().map(|e| e.eval(z)).collect(),
            None => vec![Complex::new(0.0, 0.0); self.n * self.n],
        }
    }

    pub fn field<T: Real>(&self, grid: &Arc<DomainGrid<T>>, form: FormType) -> MatrixField<T> {
        MatrixField::from_fn(grid, self.n, self.n, form, |z| self.eval(z))
    }
}

impl PotentialSpec {
    /// Parse every block; errors carry `path.block[k]`.
    pub fn blocks(&self, path: &str) -> Result<[BlockExpr; 4]> {
        if self.n == 0 {
            return Err(Error::Config(format!("{path}.n: must be positive")));
        }
        let p = |v: &[String], name: &str| -> Result<BlockExpr> { Ok(BlockExpr { n: self.n, exprs: parse_block(v, self.n, &format!("{path}.{name}"))? }) };
        Ok([p(&self.q_plus, "q_plus")?, p(&self.q_minus, "q_minus")?, p(&self.a, "a")?, p(&self.second, "second")?])
    }

    pub fn build<T: Real>(&self, grid: &Arc<DomainGrid<T>>) -> Result<BlockPotential<T>> {
        let [qp, qm, a, second] = self.blocks("potential")?;
        let f = |b: &BlockExpr| b.field(grid, FormType::Function);
        match self.layout {
            Layout::Dirac => BlockPotential::dirac(f(&qp), f(&second), f(&a), f(&qm)),
            Layout::Domain => BlockPotential::domain(f(&a), f(&qp), f(&qm), f(&second)),
        }
    }
}

impl GaugeSpec {
    pub fn validate(&self, n: usize, path: &str) -> Result<()> {
        if self.generator.len() != n * n {
            return Err(Error::Config(format!("{path}.generator: expected {} entries, found {}", n * n, self.generator.len())));
        }
        Ok(())
    }

    pub fn build<T: Real>(&self, grid: &Arc<DomainGrid<T>>, n: usize) -> Result<MatrixField<T>> {
        self.validate(n, "gauge")?;
        let m = Mat::from_fn(n, n, |i, j| {
            let [re, im] = self.generator[i * n + j];
            cof(Complex::new(re, im))
        });
        Ok(boundary_identity_gauge(grid, &m, self.unitary))
    }
}

impl ConnectionSpec {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config(format!("{path}.n: must be positive")));
        }
        parse_block(&self.a, self.n, &format!("{path}.a"))?;
        parse_block(&self.w, self.n, &format!("{path}.w"))?;
        Ok(())
    }

    pub fn build<T: Real>(&self, grid: &Arc<DomainGrid<T>>) -> Result<ConnectionData<T>> {
        let a = BlockExpr { n: self.n, exprs: parse_block(&self.a, self.n, "connection.a")? };
        let w = BlockExpr { n: self.n, exprs: parse_block(&self.w, self.n, "connection.w")? };
        ConnectionData::new(a.field(grid, FormType::Form01), w.field(grid, FormType::Function))
    }
}

impl CorpusItem {
    /// Check every expression and shape; errors carry field paths under `path`.
    pub fn validate(&self, path: &str) -> Result<()> {
        match self {
            CorpusItem::Potential { potential } => potential.blocks(&format!("{path}.potential")).map(|_| ()),
            CorpusItem::Pair { first, second } => {
                first.blocks(&format!("{path}.first"))?;
                second.blocks(&format!("{path}.second"))?;
                if first.n != second.n || first.layout != second.layout {
                    return Err(Error::Config(format!("{path}.second: layout and n must match the first potential")));
                }
                Ok(())
            }
            CorpusItem::GaugePair { base, gauge, second_gauge } => {
                base.blocks(&format!("{path}.base"))?;
                gauge.validate(base.n, &format!("{path}.gauge"))?;
                if let Some(g) = second_gauge {
                    if base.layout == Layout::Dirac {
                        return Err(Error::Config(format!("{path}.second_gauge: only the domain layout takes two gauges")));
                    }
                    g.validate(base.n, &format!("{path}.second_gauge"))?;
                }
                Ok(())
            }
            CorpusItem::ConnectionPair { first, second, gauge } => {
                first.validate(&format!("{path}.first"))?;
                match (second, gauge) {
                    (Some(s), None) => {
                        s.validate(&format!("{path}.second"))?;
                        if s.n != first.n {
                            return Err(Error::Config(format!("{path}.second.n: must equal first.n")));
                        }
                        Ok(())
                    }
                    (None, Some(g)) => g.validate(first.n, &format!("{path}.gauge")),
                    _ => Err(Error::Config(format!("{path}: give exactly one of second or gauge"))),
                }
            }
        }
    }

    /// The one or two block potentials of the item. Connection pairs yield
    /// their factorized potentials.
    pub fn potentials<T: Real>(&self, grid: &Arc<DomainGrid<T>>) -> Result<(BlockPotential<T>, Option<BlockPotential<T>>)> {
        match self {
            CorpusItem::Potential { potential } => Ok((potential.build(grid)?, None)),
            CorpusItem::Pair { first, second } => Ok((first.build(grid)?, Some(second.build(grid)?))),
            CorpusItem::GaugePair { base, gauge, second_gauge } => {
                let v = base.build(grid)?;
                let p = gauge.build(grid, base.n)?;
                let r = match second_gauge {
                    Some(g) => g.build(grid, base.n)?,
                    None => p.clone(),
                };
                let v2 = gauge_action(&v, &p, &r)?;
                Ok((v, Some(v2)))
            }
            CorpusItem::ConnectionPair { .. } => {
                let (c1, c2) = self.connections(grid)?;
                Ok((crate::schrodinger::factorize(&c1), Some(crate::schrodinger::factorize(&c2))))
            }
        }
    }

    pub fn connections<T: Real>(&self, grid: &Arc<DomainGrid<T>>) -> Result<(ConnectionData<T>, ConnectionData<T>)> {
        match self {
            CorpusItem::ConnectionPair { first, second, gauge } => {
                let c1 = first.build(grid)?;
                let c2 = match (second, gauge) {
                    (Some(s), _) => s.build(grid)?,
                    (None, Some(g)) => c1.gauge(&g.build(grid, first.n)?)?,
                    (None, None) => return Err(Error::Config("connection pair needs second or gauge".into())),
                };
                Ok((c1, c2))
            }
            _ => Err(Error::Config("item is not a connection pair".into())),
        }
    }

    /// Expression-level value of `Q₂ − Q₁` for pairs given by expressions.
    pub fn block_difference(&self, block: crate::recon::Block, entry: (usize, usize)) -> Option<Box<dyn Fn(Complex<f64>) -> Complex<f64> + Sync>> {
        let CorpusItem::Pair { first, second } = self else { return None };
        let [qp1, qm1, _, _] = first.blocks("first").ok()?;
        let [qp2, qm2, _, _] = second.blocks("second").ok()?;
        let (b1, b2) = match block {
            crate::recon::Block::QPlus => (qp1, qp2),
            crate::recon::Block::QMinus => (qm1, qm2),
        };
        let n = first.n;
        let k = entry.0 * n + entry.1;
        Some(Box::new(move |z| b2.eval(z)[k] - b1.eval(z)[k]))
    }
}
