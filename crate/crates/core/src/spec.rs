//! Resolved spacetime descriptions.
//!
//! [`parse_spacetime`] takes DSL source and produces a [`SpacetimeSpec`]:
//! identifiers bound, definitions inlined, metric symmetry enforced,
//! parameter constraints checked. Resolved charts also carry the symbolic
//! first and second derivatives of every metric component, the symbolic
//! determinant, and first derivatives of declared fields; curvature and
//! 2-form machinery evaluates these trees instead of re-differencing
//! numerically.
//!
//! Specs are immutable after construction and safe to share across threads.

use crate::expr::parser::{
    parse_source, IneqOp, ParseError, RawChart, RawConstraint, RawExpr, RawSpec, SourcePos,
};
use crate::expr::{EvalCtx, EvalError, Expr, UnaryOp};
use rand::Rng;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

/// Margin required for a point to count as inside a strict inequality.
pub const DOMAIN_MARGIN: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("line {}, column {}: unknown identifier `{name}`", pos.line, pos.col)]
    UnknownIdentifier { name: String, pos: SourcePos },
    #[error("line {}, column {}: unknown function `{name}`", pos.line, pos.col)]
    UnknownFunction { name: String, pos: SourcePos },
    #[error("line {}, column {}: cyclic definition `{name}`", pos.line, pos.col)]
    CyclicDefinition { name: String, pos: SourcePos },
    #[error("line {}, column {}: duplicate metric entry g[{i}][{j}]", pos.line, pos.col)]
    DuplicateMetricEntry { i: String, j: String, pos: SourcePos },
    #[error("line {}, column {}: duplicate name `{name}`", pos.line, pos.col)]
    DuplicateName { name: String, pos: SourcePos },
    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },
    #[error("parameter constraint violated: {detail}")]
    ParamConstraintViolated { detail: String },
    #[error("unknown chart `{0}`")]
    UnknownChart(String),
    #[error("unknown field `{field}` on chart `{chart}`")]
    UnknownField { field: String, chart: String },
    #[error("unknown coordinate `{coord}` on chart `{chart}`")]
    UnknownCoord { coord: String, chart: String },
    #[error("transition {from} -> {to}: {detail}")]
    BadTransition {
        from: String,
        to: String,
        detail: String,
    },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// A coordinate chart with resolved symbolic data.
#[derive(Debug)]
pub struct Chart {
    pub name: String,
    pub coords: Vec<String>,
    /// Full dim x dim lower-index metric; the (i,j) and (j,i) slots share one
    /// expression, so symmetry is exact by construction.
    metric: Vec<Vec<Expr>>,
    /// Number of `g` lines in the source (independent declared slots).
    pub declared_metric_slots: usize,
    pub defs: BTreeMap<String, Expr>,
    pub scalars: BTreeMap<String, Expr>,
    pub vectors: BTreeMap<String, Vec<Expr>>,
    /// Domain constraints as margin expressions; in-domain means every
    /// margin exceeds [`DOMAIN_MARGIN`].
    pub domain: Vec<Expr>,
    /// Per-coordinate sampling interval for random point draws.
    pub sample_box: Vec<(f64, f64)>,
    /// Named event functions; a flow terminates when one crosses zero.
    pub events: Vec<(String, Expr)>,
    // symbolic caches
    dg: Vec<Vec<Vec<Expr>>>,
    ddg: Vec<Vec<Vec<Vec<Expr>>>>,
    det: Expr,
    det_d: Vec<Expr>,
    vector_d: BTreeMap<String, Vec<Vec<Expr>>>,
    scalar_d: BTreeMap<String, Vec<Expr>>,
}

#[derive(Debug)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    /// One expression per target coordinate, in source-chart scope.
    pub map: Vec<Expr>,
    /// Overlap constraints (margins) in source-chart scope.
    pub overlap: Vec<Expr>,
    /// jacobian[t][s] = d map[t] / d source coord s
    pub jacobian: Vec<Vec<Expr>>,
}

#[derive(Debug)]
pub struct ParamConstraint {
    /// Which parameter's `require` clause declared this constraint.
    pub param_index: usize,
    pub desc: String,
    pub margin: Expr,
}

#[derive(Debug)]
pub struct SpacetimeSpec {
    pub name: String,
    pub dim: usize,
    pub param_names: Vec<String>,
    pub param_values: Vec<f64>,
    pub param_constraints: Vec<ParamConstraint>,
    pub charts: Vec<Chart>,
    pub transitions: Vec<Transition>,
}

impl Chart {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coord_index(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == name)
    }

    pub fn metric_component(&self, i: usize, j: usize) -> &Expr {
        &self.metric[i][j]
    }

    pub fn metric_deriv(&self, i: usize, j: usize, a: usize) -> &Expr {
        &self.dg[i][j][a]
    }

    pub fn metric_second_deriv(&self, i: usize, j: usize, a: usize, b: usize) -> &Expr {
        &self.ddg[i][j][a][b]
    }

    pub fn det_expr(&self) -> &Expr {
        &self.det
    }

    pub fn det_deriv(&self, a: usize) -> &Expr {
        &self.det_d[a]
    }

    pub fn vector(&self, name: &str) -> Option<&Vec<Expr>> {
        self.vectors.get(name)
    }

    pub fn vector_deriv(&self, name: &str) -> Option<&Vec<Vec<Expr>>> {
        self.vector_d.get(name)
    }

    pub fn scalar(&self, name: &str) -> Option<&Expr> {
        self.scalars.get(name)
    }

    pub fn scalar_deriv(&self, name: &str) -> Option<&Vec<Expr>> {
        self.scalar_d.get(name)
    }

    pub fn def(&self, name: &str) -> Option<&Expr> {
        self.defs.get(name)
    }

    /// Symbolic inverse metric via adjugate over determinant. The trees can
    /// get large; callers should build them once per chart and reuse.
    pub fn symbolic_inverse_metric(&self) -> Vec<Vec<Expr>> {
        let dim = self.dim();
        let mut inv = vec![vec![Expr::zero(); dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                let minor: Vec<Vec<Expr>> = (0..dim)
                    .filter(|&r| r != i)
                    .map(|r| {
                        (0..dim)
                            .filter(|&c| c != j)
                            .map(|c| self.metric[r][c].clone())
                            .collect()
                    })
                    .collect();
                let mut cof = if minor.is_empty() {
                    Expr::one()
                } else {
                    symbolic_det(&minor)
                };
                if (i + j) % 2 == 1 {
                    cof = Expr::neg(cof);
                }
                // adjugate transpose; the metric is symmetric so (i,j) order
                // does not matter, but keep the general form anyway
                inv[j][i] = Expr::div(cof, self.det.clone());
            }
        }
        inv
    }

    pub fn eval(&self, e: &Expr, point: &[f64], params: &[f64]) -> Result<f64, EvalError> {
        e.eval(&EvalCtx { point, params })
    }

    /// Smallest domain-constraint margin at the point; `+inf` with no
    /// constraints, `-inf` when a constraint fails to evaluate.
    pub fn domain_margin(&self, point: &[f64], params: &[f64]) -> f64 {
        let mut min = f64::INFINITY;
        for m in &self.domain {
            match self.eval(m, point, params) {
                Ok(v) => min = min.min(v),
                Err(_) => return f64::NEG_INFINITY,
            }
        }
        min
    }

    pub fn in_domain(&self, point: &[f64], params: &[f64]) -> bool {
        self.domain_margin(point, params) > DOMAIN_MARGIN
    }

    /// Draw one in-domain point uniformly from the sampling box by rejection.
    pub fn sample_point<R: Rng>(&self, rng: &mut R, params: &[f64]) -> Option<Vec<f64>> {
        for _ in 0..10_000 {
            let p: Vec<f64> = self
                .sample_box
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..hi))
                .collect();
            if self.in_domain(&p, params) {
                return Some(p);
            }
        }
        None
    }

    pub fn sample_points<R: Rng>(
        &self,
        rng: &mut R,
        params: &[f64],
        n: usize,
    ) -> Option<Vec<Vec<f64>>> {
        (0..n).map(|_| self.sample_point(rng, params)).collect()
    }
}

impl Transition {
    pub fn apply(&self, point: &[f64], params: &[f64]) -> Result<Vec<f64>, EvalError> {
        let ctx = EvalCtx { point, params };
        self.map.iter().map(|e| e.eval(&ctx)).collect()
    }

    /// Push a vector forward through the transition's differential.
    pub fn pushforward(
        &self,
        point: &[f64],
        v: &[f64],
        params: &[f64],
    ) -> Result<Vec<f64>, EvalError> {
        let ctx = EvalCtx { point, params };
        let mut out = vec![0.0; self.map.len()];
        for (t, row) in self.jacobian.iter().enumerate() {
            let mut acc = 0.0;
            for (s, e) in row.iter().enumerate() {
                acc += e.eval(&ctx)? * v[s];
            }
            out[t] = acc;
        }
        Ok(out)
    }

    /// True when the point satisfies every overlap constraint.
    pub fn overlap_holds(&self, point: &[f64], params: &[f64]) -> bool {
        let ctx = EvalCtx { point, params };
        self.overlap
            .iter()
            .all(|m| matches!(m.eval(&ctx), Ok(v) if v > DOMAIN_MARGIN))
    }
}

impl SpacetimeSpec {
    pub fn chart(&self, name: &str) -> Result<&Chart, SpecError> {
        self.charts
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| SpecError::UnknownChart(name.to_string()))
    }

    pub fn chart_index(&self, name: &str) -> Option<usize> {
        self.charts.iter().position(|c| c.name == name)
    }

    pub fn params(&self) -> &[f64] {
        &self.param_values
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.param_values[i])
    }

    /// Rebind parameter values and recheck their constraints.
    pub fn with_params(mut self, overrides: &[(String, f64)]) -> Result<Self, SpecError> {
        for (name, value) in overrides {
            let idx = self
                .param_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| SpecError::UnknownParam(name.clone()))?;
            self.param_values[idx] = *value;
        }
        check_param_constraints(&self.param_constraints, &self.param_values)?;
        Ok(self)
    }

    /// Transitions leaving the given chart.
    pub fn transitions_from(&self, chart: usize) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(move |t| t.from == chart)
    }

    pub fn transition(&self, from: usize, to: usize) -> Option<&Transition> {
        self.transitions
            .iter()
            .find(|t| t.from == from && t.to == to)
    }

    /// Render the resolved spec back to DSL source. Definitions were inlined
    /// during resolution, so the output has no `def` lines; reparsing yields
    /// a spec with identical evaluation behavior.
    pub fn print_dsl(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "spacetime {}", self.name);
        let _ = writeln!(out, "dim {}", self.dim);
        for (i, name) in self.param_names.iter().enumerate() {
            let _ = write!(out, "param {} = {:?}", name, self.param_values[i]);
            for c in self.param_constraints.iter().filter(|c| c.param_index == i) {
                let _ = write!(out, " require {}", c.desc);
            }
            out.push('\n');
        }
        for chart in &self.charts {
            let _ = writeln!(out, "chart {}", chart.name);
            let _ = writeln!(out, "  coords {}", chart.coords.join(" "));
            let dim = chart.dim();
            for i in 0..dim {
                for j in i..dim {
                    let e = chart.metric_component(i, j);
                    if !e.is_zero() {
                        let _ = writeln!(
                            out,
                            "  g {} {} = {}",
                            chart.coords[i],
                            chart.coords[j],
                            e.print(&chart.coords, &self.param_names)
                        );
                    }
                }
            }
            for (name, e) in &chart.scalars {
                let _ = writeln!(
                    out,
                    "  scalar {} = {}",
                    name,
                    e.print(&chart.coords, &self.param_names)
                );
            }
            for (name, comps) in &chart.vectors {
                let rendered: Vec<String> = comps
                    .iter()
                    .map(|e| e.print(&chart.coords, &self.param_names))
                    .collect();
                let _ = writeln!(out, "  vector {} = ( {} )", name, rendered.join(" , "));
            }
            for m in &chart.domain {
                let _ = writeln!(
                    out,
                    "  domain {} > 0",
                    m.print(&chart.coords, &self.param_names)
                );
            }
            for (i, &(lo, hi)) in chart.sample_box.iter().enumerate() {
                let _ = writeln!(out, "  sample {} {:?} {:?}", chart.coords[i], lo, hi);
            }
            for (name, e) in &chart.events {
                let _ = writeln!(
                    out,
                    "  event {} = {}",
                    name,
                    e.print(&chart.coords, &self.param_names)
                );
            }
        }
        for t in &self.transitions {
            let from = &self.charts[t.from];
            let to = &self.charts[t.to];
            let _ = writeln!(out, "transition {} -> {}", from.name, to.name);
            for (i, e) in t.map.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "  map {} = {}",
                    to.coords[i],
                    e.print(&from.coords, &self.param_names)
                );
            }
            for m in &t.overlap {
                let _ = writeln!(
                    out,
                    "  overlap {} > 0",
                    m.print(&from.coords, &self.param_names)
                );
            }
        }
        out
    }
}

/// Parse and fully resolve a spacetime source file.
pub fn parse_spacetime(text: &str) -> Result<SpacetimeSpec, SpecError> {
    let raw = parse_source(text)?;
    resolve(raw)
}

struct Scope<'a> {
    coords: &'a [String],
    params: &'a [String],
    defs: &'a BTreeMap<String, Expr>,
}

fn resolve_expr(raw: &RawExpr, scope: &Scope) -> Result<Expr, SpecError> {
    match raw {
        RawExpr::Num(v) => Ok(Expr::constant(*v)),
        RawExpr::Ident(name, pos) => {
            if let Some(i) = scope.coords.iter().position(|c| c == name) {
                return Ok(Expr::coord(i));
            }
            if let Some(i) = scope.params.iter().position(|p| p == name) {
                return Ok(Expr::param(i));
            }
            if let Some(e) = scope.defs.get(name) {
                return Ok(e.clone());
            }
            if name == "pi" || name == "π" {
                return Ok(Expr::constant(std::f64::consts::PI));
            }
            Err(SpecError::UnknownIdentifier {
                name: name.clone(),
                pos: *pos,
            })
        }
        RawExpr::Call(name, pos, arg) => {
            let a = resolve_expr(arg, scope)?;
            let op = match name.as_str() {
                "sin" => UnaryOp::Sin,
                "cos" => UnaryOp::Cos,
                "sqrt" => UnaryOp::Sqrt,
                "exp" => UnaryOp::Exp,
                "log" => UnaryOp::Log,
                _ => {
                    return Err(SpecError::UnknownFunction {
                        name: name.clone(),
                        pos: *pos,
                    })
                }
            };
            Ok(Expr::unary(op, a))
        }
        RawExpr::Unary(op, a) => Ok(Expr::unary(*op, resolve_expr(a, scope)?)),
        RawExpr::Binary(op, a, b) => Ok(Expr::binary(
            *op,
            resolve_expr(a, scope)?,
            resolve_expr(b, scope)?,
        )),
    }
}

fn resolve_constraint(c: &RawConstraint, scope: &Scope) -> Result<Expr, SpecError> {
    let lhs = resolve_expr(&c.lhs, scope)?;
    let rhs = resolve_expr(&c.rhs, scope)?;
    // normalize to a margin that must be positive
    Ok(match c.op {
        IneqOp::Gt => Expr::sub(lhs, rhs),
        IneqOp::Lt => Expr::sub(rhs, lhs),
    })
}

fn check_param_constraints(
    constraints: &[ParamConstraint],
    values: &[f64],
) -> Result<(), SpecError> {
    for c in constraints {
        let v = c
            .margin
            .eval(&EvalCtx {
                point: &[],
                params: values,
            })
            .map_err(SpecError::Eval)?;
        if v <= 0.0 {
            return Err(SpecError::ParamConstraintViolated {
                detail: format!("require {} failed (margin {})", c.desc, v),
            });
        }
    }
    Ok(())
}

/// Resolve definitions (and scalars, which live in the same namespace) with
/// cycle detection, inlining each into a closed expression.
fn resolve_defs(
    items: &[(String, RawExpr, SourcePos)],
    coords: &[String],
    params: &[String],
) -> Result<BTreeMap<String, Expr>, SpecError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Untouched,
        InProgress,
        Done,
    }

    fn visit(
        name: &str,
        items: &BTreeMap<&str, (&RawExpr, SourcePos)>,
        marks: &mut BTreeMap<String, Mark>,
        resolved: &mut BTreeMap<String, Expr>,
        coords: &[String],
        params: &[String],
    ) -> Result<(), SpecError> {
        match marks.get(name).copied().unwrap_or(Mark::Untouched) {
            Mark::Done => return Ok(()),
            Mark::InProgress => {
                let (_, pos) = items[name];
                return Err(SpecError::CyclicDefinition {
                    name: name.to_string(),
                    pos,
                });
            }
            Mark::Untouched => {}
        }
        marks.insert(name.to_string(), Mark::InProgress);
        let (raw, _) = items[name];
        // resolve dependencies first by walking for identifiers that are defs
        let mut deps = Vec::new();
        collect_idents(raw, &mut deps);
        for dep in deps {
            if items.contains_key(dep.as_str())
                && !coords.contains(&dep)
                && !params.contains(&dep)
            {
                visit(&dep, items, marks, resolved, coords, params)?;
            }
        }
        let scope = Scope {
            coords,
            params,
            defs: resolved,
        };
        let e = resolve_expr(raw, &scope)?;
        resolved.insert(name.to_string(), e);
        marks.insert(name.to_string(), Mark::Done);
        Ok(())
    }

    let mut index: BTreeMap<&str, (&RawExpr, SourcePos)> = BTreeMap::new();
    for (name, raw, pos) in items {
        if index.insert(name.as_str(), (raw, *pos)).is_some() {
            return Err(SpecError::DuplicateName {
                name: name.clone(),
                pos: *pos,
            });
        }
    }
    let mut marks = BTreeMap::new();
    let mut resolved = BTreeMap::new();
    for (name, _, _) in items {
        visit(name, &index, &mut marks, &mut resolved, coords, params)?;
    }
    Ok(resolved)
}

fn collect_idents(raw: &RawExpr, out: &mut Vec<String>) {
    match raw {
        RawExpr::Num(_) => {}
        RawExpr::Ident(name, _) => out.push(name.clone()),
        RawExpr::Call(_, _, a) | RawExpr::Unary(_, a) => collect_idents(a, out),
        RawExpr::Binary(_, a, b) => {
            collect_idents(a, out);
            collect_idents(b, out);
        }
    }
}

/// Symbolic determinant by cofactor expansion along the first row.
fn symbolic_det(m: &[Vec<Expr>]) -> Expr {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut acc = Expr::zero();
    for j in 0..n {
        if m[0][j].is_zero() {
            continue;
        }
        let minor: Vec<Vec<Expr>> = (1..n)
            .map(|r| {
                (0..n)
                    .filter(|&c| c != j)
                    .map(|c| m[r][c].clone())
                    .collect()
            })
            .collect();
        let term = Expr::mul(m[0][j].clone(), symbolic_det(&minor));
        acc = if j % 2 == 0 {
            Expr::add(acc, term)
        } else {
            Expr::sub(acc, term)
        };
    }
    acc
}

fn resolve_chart(
    raw: &RawChart,
    dim: usize,
    params: &[String],
) -> Result<Chart, SpecError> {
    if raw.coords.is_empty() {
        return Err(SpecError::DimensionMismatch {
            detail: format!("chart `{}` declares no coordinates", raw.name),
        });
    }
    if raw.coords.len() != dim {
        return Err(SpecError::DimensionMismatch {
            detail: format!(
                "chart `{}` has {} coordinates but dim is {}",
                raw.name,
                raw.coords.len(),
                dim
            ),
        });
    }
    for c in &raw.coords {
        if params.contains(c) {
            return Err(SpecError::DuplicateName {
                name: c.clone(),
                pos: raw.pos,
            });
        }
    }

    // defs and scalars share one namespace and may reference each other
    let mut def_items: Vec<(String, RawExpr, SourcePos)> = raw.defs.clone();
    def_items.extend(raw.scalars.iter().cloned());
    for (name, _, pos) in &def_items {
        if raw.coords.contains(name) || params.contains(&name.to_string()) {
            return Err(SpecError::DuplicateName {
                name: name.clone(),
                pos: *pos,
            });
        }
    }
    let all_defs = resolve_defs(&def_items, &raw.coords, params)?;
    let defs: BTreeMap<String, Expr> = raw
        .defs
        .iter()
        .map(|(n, _, _)| (n.clone(), all_defs[n].clone()))
        .collect();
    let scalars: BTreeMap<String, Expr> = raw
        .scalars
        .iter()
        .map(|(n, _, _)| (n.clone(), all_defs[n].clone()))
        .collect();

    let scope = Scope {
        coords: &raw.coords,
        params,
        defs: &all_defs,
    };

    // metric
    let mut metric: Vec<Vec<Option<Expr>>> = vec![vec![None; dim]; dim];
    for (ci, cj, raw_e, pos) in &raw.metric {
        let i = raw.coords.iter().position(|c| c == ci).ok_or_else(|| {
            SpecError::UnknownCoord {
                coord: ci.clone(),
                chart: raw.name.clone(),
            }
        })?;
        let j = raw.coords.iter().position(|c| c == cj).ok_or_else(|| {
            SpecError::UnknownCoord {
                coord: cj.clone(),
                chart: raw.name.clone(),
            }
        })?;
        if metric[i][j].is_some() {
            return Err(SpecError::DuplicateMetricEntry {
                i: ci.clone(),
                j: cj.clone(),
                pos: *pos,
            });
        }
        let e = resolve_expr(raw_e, &scope)?;
        metric[i][j] = Some(e.clone());
        if i != j {
            metric[j][i] = Some(e);
        }
    }
    let metric: Vec<Vec<Expr>> = metric
        .into_iter()
        .map(|row| row.into_iter().map(|e| e.unwrap_or_else(Expr::zero)).collect())
        .collect();

    // vectors
    let mut vectors = BTreeMap::new();
    for (name, comps, pos) in &raw.vectors {
        if comps.len() != dim {
            return Err(SpecError::DimensionMismatch {
                detail: format!(
                    "vector `{}` on chart `{}` has {} components, expected {}",
                    name,
                    raw.name,
                    comps.len(),
                    dim
                ),
            });
        }
        let resolved: Vec<Expr> = comps
            .iter()
            .map(|c| resolve_expr(c, &scope))
            .collect::<Result<_, _>>()?;
        if vectors.insert(name.clone(), resolved).is_some() {
            return Err(SpecError::DuplicateName {
                name: name.clone(),
                pos: *pos,
            });
        }
    }

    // domain constraints
    let domain: Vec<Expr> = raw
        .domains
        .iter()
        .map(|c| resolve_constraint(c, &scope))
        .collect::<Result<_, _>>()?;

    // sampling box, default [-1, 1] per coordinate
    let mut sample_box = vec![(-1.0, 1.0); dim];
    for (cname, lo, hi, _) in &raw.samples {
        let i = raw.coords.iter().position(|c| c == cname).ok_or_else(|| {
            SpecError::UnknownCoord {
                coord: cname.clone(),
                chart: raw.name.clone(),
            }
        })?;
        sample_box[i] = (*lo, *hi);
    }

    let events: Vec<(String, Expr)> = raw
        .events
        .iter()
        .map(|(n, e, _)| Ok((n.clone(), resolve_expr(e, &scope)?)))
        .collect::<Result<_, SpecError>>()?;

    // symbolic caches
    let dg: Vec<Vec<Vec<Expr>>> = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| (0..dim).map(|a| metric[i][j].diff(a)).collect())
                .collect()
        })
        .collect();
    let ddg: Vec<Vec<Vec<Vec<Expr>>>> = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    (0..dim)
                        .map(|a| (0..dim).map(|b| dg[i][j][a].diff(b)).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    let det = symbolic_det(&metric);
    let det_d: Vec<Expr> = (0..dim).map(|a| det.diff(a)).collect();
    let vector_d: BTreeMap<String, Vec<Vec<Expr>>> = vectors
        .iter()
        .map(|(n, comps)| {
            let d = comps
                .iter()
                .map(|c| (0..dim).map(|a| c.diff(a)).collect())
                .collect();
            (n.clone(), d)
        })
        .collect();
    let scalar_d: BTreeMap<String, Vec<Expr>> = scalars
        .iter()
        .map(|(n, e)| (n.clone(), (0..dim).map(|a| e.diff(a)).collect()))
        .collect();

    Ok(Chart {
        name: raw.name.clone(),
        coords: raw.coords.clone(),
        metric,
        declared_metric_slots: raw.metric.len(),
        defs,
        scalars,
        vectors,
        domain,
        sample_box,
        events,
        dg,
        ddg,
        det,
        det_d,
        vector_d,
        scalar_d,
    })
}

fn resolve(raw: RawSpec) -> Result<SpacetimeSpec, SpecError> {
    let param_names: Vec<String> = raw.params.iter().map(|p| p.name.clone()).collect();
    for (i, p) in raw.params.iter().enumerate() {
        if param_names[..i].contains(&p.name) {
            return Err(SpecError::DuplicateName {
                name: p.name.clone(),
                pos: p.pos,
            });
        }
    }
    let param_values: Vec<f64> = raw.params.iter().map(|p| p.value).collect();

    // parameter constraints live in a params-only scope
    let empty = BTreeMap::new();
    let pscope = Scope {
        coords: &[],
        params: &param_names,
        defs: &empty,
    };
    let mut param_constraints = Vec::new();
    for (i, p) in raw.params.iter().enumerate() {
        for c in &p.requires {
            let margin = resolve_constraint(c, &pscope)?;
            param_constraints.push(ParamConstraint {
                param_index: i,
                desc: constraint_desc(c),
                margin,
            });
        }
    }
    check_param_constraints(&param_constraints, &param_values)?;

    let mut charts = Vec::new();
    for rc in &raw.charts {
        if charts.iter().any(|c: &Chart| c.name == rc.name) {
            return Err(SpecError::DuplicateName {
                name: rc.name.clone(),
                pos: rc.pos,
            });
        }
        charts.push(resolve_chart(rc, raw.dim, &param_names)?);
    }

    let mut transitions = Vec::new();
    for rt in &raw.transitions {
        let from = charts
            .iter()
            .position(|c| c.name == rt.from)
            .ok_or_else(|| SpecError::UnknownChart(rt.from.clone()))?;
        let to = charts
            .iter()
            .position(|c| c.name == rt.to)
            .ok_or_else(|| SpecError::UnknownChart(rt.to.clone()))?;
        if from == to {
            return Err(SpecError::BadTransition {
                from: rt.from.clone(),
                to: rt.to.clone(),
                detail: "source and target chart are the same".into(),
            });
        }
        let src_scope = Scope {
            coords: &charts[from].coords,
            params: &param_names,
            defs: &charts[from].defs,
        };
        let mut map: Vec<Option<Expr>> = vec![None; raw.dim];
        for (cname, raw_e, _) in &rt.maps {
            let t_idx = charts[to].coord_index(cname).ok_or_else(|| {
                SpecError::BadTransition {
                    from: rt.from.clone(),
                    to: rt.to.clone(),
                    detail: format!("`{}` is not a coordinate of the target chart", cname),
                }
            })?;
            if map[t_idx].is_some() {
                return Err(SpecError::BadTransition {
                    from: rt.from.clone(),
                    to: rt.to.clone(),
                    detail: format!("coordinate `{}` mapped twice", cname),
                });
            }
            map[t_idx] = Some(resolve_expr(raw_e, &src_scope)?);
        }
        let map: Vec<Expr> = map
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                e.ok_or_else(|| SpecError::BadTransition {
                    from: rt.from.clone(),
                    to: rt.to.clone(),
                    detail: format!(
                        "target coordinate `{}` has no map line",
                        charts[to].coords[i]
                    ),
                })
            })
            .collect::<Result<_, _>>()?;
        let overlap: Vec<Expr> = rt
            .overlaps
            .iter()
            .map(|c| resolve_constraint(c, &src_scope))
            .collect::<Result<_, _>>()?;
        let jacobian: Vec<Vec<Expr>> = map
            .iter()
            .map(|e| (0..raw.dim).map(|s| e.diff(s)).collect())
            .collect();
        transitions.push(Transition {
            from,
            to,
            map,
            overlap,
            jacobian,
        });
    }

    Ok(SpacetimeSpec {
        name: raw.name,
        dim: raw.dim,
        param_names,
        param_values,
        param_constraints,
        charts,
        transitions,
    })
}

fn constraint_desc(c: &RawConstraint) -> String {
    fn render(e: &RawExpr, out: &mut String) {
        match e {
            RawExpr::Num(v) => {
                let _ = write!(out, "{:?}", v);
            }
            RawExpr::Ident(n, _) => out.push_str(n),
            RawExpr::Call(n, _, a) => {
                out.push_str(n);
                out.push('(');
                render(a, out);
                out.push(')');
            }
            RawExpr::Unary(_, a) => {
                out.push_str("(-");
                render(a, out);
                out.push(')');
            }
            RawExpr::Binary(op, a, b) => {
                out.push('(');
                render(a, out);
                out.push_str(match op {
                    crate::expr::BinaryOp::Add => " + ",
                    crate::expr::BinaryOp::Sub => " - ",
                    crate::expr::BinaryOp::Mul => "*",
                    crate::expr::BinaryOp::Div => "/",
                    crate::expr::BinaryOp::Pow => "^",
                });
                render(b, out);
                out.push(')');
            }
        }
    }
    let mut s = String::new();
    render(&c.lhs, &mut s);
    s.push_str(match c.op {
        IneqOp::Lt => " < ",
        IneqOp::Gt => " > ",
    });
    render(&c.rhs, &mut s);
    s
}
