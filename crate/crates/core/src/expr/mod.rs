//! Symbolic expression trees with exact differentiation and numeric evaluation.
//!
//! Expressions are immutable reference-counted trees, cheap to clone and safe
//! to share across threads. Construction goes through smart constructors that
//! apply constant folding and identity elimination (`x*1`, `x+0`, `0*x`, ...)
//! so that repeated differentiation stays tractable; no further algebraic
//! simplification is attempted.

pub mod parser;

use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Sqrt,
    Exp,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug)]
pub enum Node {
    /// Real constant.
    Const(f64),
    /// Coordinate of the enclosing chart, by position.
    Coord(usize),
    /// Global parameter, by position.
    Param(usize),
    Unary(UnaryOp, Expr),
    Binary(BinaryOp, Expr, Expr),
}

/// A symbolic expression, resolved against a chart scope: coordinate and
/// parameter references are positional. Definition references are inlined
/// when a source file is resolved, so evaluation needs no environment beyond
/// the point and the parameter values.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("square root of negative value {0}")]
    SqrtNegative(f64),
    #[error("logarithm of non-positive value {0}")]
    LogNonPositive(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{0}^{1} is undefined over the reals")]
    PowDomain(f64, f64),
}

/// Evaluation context: a coordinate tuple and bound parameter values.
#[derive(Clone, Copy)]
pub struct EvalCtx<'a> {
    pub point: &'a [f64],
    pub params: &'a [f64],
}

// the arithmetic constructors are deliberately free functions on Expr (they
// fold eagerly and take operands by value), not operator-trait impls
#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr(Arc::new(Node::Const(v)))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn coord(i: usize) -> Expr {
        Expr(Arc::new(Node::Coord(i)))
    }

    pub fn param(i: usize) -> Expr {
        Expr(Arc::new(Node::Param(i)))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self.0, Node::Const(v) if v == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(*self.0, Node::Const(v) if v == 1.0)
    }

    /// Integer value of a constant node, when it is one (used for the power
    /// rule; exponents beyond ±64 fall back to the exp/log form).
    fn as_integer(&self) -> Option<i64> {
        self.as_const().and_then(|v| {
            if v.fract() == 0.0 && v.abs() <= 64.0 {
                Some(v as i64)
            } else {
                None
            }
        })
    }

    pub fn neg(a: Expr) -> Expr {
        match *a.0 {
            Node::Const(v) => Expr::constant(-v),
            Node::Unary(UnaryOp::Neg, ref inner) => inner.clone(),
            _ => Expr(Arc::new(Node::Unary(UnaryOp::Neg, a))),
        }
    }

    pub fn sin(a: Expr) -> Expr {
        match a.as_const() {
            Some(v) => Expr::constant(v.sin()),
            None => Expr(Arc::new(Node::Unary(UnaryOp::Sin, a))),
        }
    }

    pub fn cos(a: Expr) -> Expr {
        match a.as_const() {
            Some(v) => Expr::constant(v.cos()),
            None => Expr(Arc::new(Node::Unary(UnaryOp::Cos, a))),
        }
    }

    pub fn sqrt(a: Expr) -> Expr {
        match a.as_const() {
            // Negative constants are left symbolic so the domain error
            // surfaces at evaluation, as specified.
            Some(v) if v >= 0.0 => Expr::constant(v.sqrt()),
            _ => Expr(Arc::new(Node::Unary(UnaryOp::Sqrt, a))),
        }
    }

    pub fn exp(a: Expr) -> Expr {
        match a.as_const() {
            Some(v) => Expr::constant(v.exp()),
            None => Expr(Arc::new(Node::Unary(UnaryOp::Exp, a))),
        }
    }

    pub fn log(a: Expr) -> Expr {
        match a.as_const() {
            Some(v) if v > 0.0 => Expr::constant(v.ln()),
            _ => Expr(Arc::new(Node::Unary(UnaryOp::Log, a))),
        }
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        match op {
            UnaryOp::Neg => Expr::neg(a),
            UnaryOp::Sin => Expr::sin(a),
            UnaryOp::Cos => Expr::cos(a),
            UnaryOp::Sqrt => Expr::sqrt(a),
            UnaryOp::Exp => Expr::exp(a),
            UnaryOp::Log => Expr::log(a),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        if a.is_zero() {
            return b;
        }
        if b.is_zero() {
            return a;
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Expr::constant(x + y);
        }
        Expr(Arc::new(Node::Binary(BinaryOp::Add, a, b)))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        if b.is_zero() {
            return a;
        }
        if a.is_zero() {
            return Expr::neg(b);
        }
        if Arc::ptr_eq(&a.0, &b.0) {
            return Expr::zero();
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Expr::constant(x - y);
        }
        Expr(Arc::new(Node::Binary(BinaryOp::Sub, a, b)))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::zero();
        }
        if a.is_one() {
            return b;
        }
        if b.is_one() {
            return a;
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Expr::constant(x * y);
        }
        Expr(Arc::new(Node::Binary(BinaryOp::Mul, a, b)))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if a.is_zero() {
            return Expr::zero();
        }
        if b.is_one() {
            return a;
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if y != 0.0 {
                return Expr::constant(x / y);
            }
        }
        Expr(Arc::new(Node::Binary(BinaryOp::Div, a, b)))
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        match b.as_integer() {
            Some(0) => return Expr::one(),
            Some(1) => return a,
            _ => {}
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            let v = x.powf(y);
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
        Expr(Arc::new(Node::Binary(BinaryOp::Pow, a, b)))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        match op {
            BinaryOp::Add => Expr::add(a, b),
            BinaryOp::Sub => Expr::sub(a, b),
            BinaryOp::Mul => Expr::mul(a, b),
            BinaryOp::Div => Expr::div(a, b),
            BinaryOp::Pow => Expr::pow(a, b),
        }
    }

    /// Sum of a sequence of expressions; zero terms drop out.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        terms
            .into_iter()
            .fold(Expr::zero(), Expr::add)
    }

    pub fn eval(&self, ctx: &EvalCtx) -> Result<f64, EvalError> {
        match *self.0 {
            Node::Const(v) => Ok(v),
            Node::Coord(i) => Ok(ctx.point[i]),
            Node::Param(i) => Ok(ctx.params[i]),
            Node::Unary(op, ref a) => {
                let x = a.eval(ctx)?;
                match op {
                    UnaryOp::Neg => Ok(-x),
                    UnaryOp::Sin => Ok(x.sin()),
                    UnaryOp::Cos => Ok(x.cos()),
                    UnaryOp::Sqrt => {
                        if x < 0.0 {
                            Err(EvalError::SqrtNegative(x))
                        } else {
                            Ok(x.sqrt())
                        }
                    }
                    UnaryOp::Exp => Ok(x.exp()),
                    UnaryOp::Log => {
                        if x <= 0.0 {
                            Err(EvalError::LogNonPositive(x))
                        } else {
                            Ok(x.ln())
                        }
                    }
                }
            }
            Node::Binary(op, ref a, ref b) => {
                let x = a.eval(ctx)?;
                let y = b.eval(ctx)?;
                match op {
                    BinaryOp::Add => Ok(x + y),
                    BinaryOp::Sub => Ok(x - y),
                    BinaryOp::Mul => Ok(x * y),
                    BinaryOp::Div => {
                        if y == 0.0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            Ok(x / y)
                        }
                    }
                    BinaryOp::Pow => {
                        let v = x.powf(y);
                        if v.is_nan() && !x.is_nan() && !y.is_nan() {
                            Err(EvalError::PowDomain(x, y))
                        } else {
                            Ok(v)
                        }
                    }
                }
            }
        }
    }

    /// Exact symbolic derivative with respect to coordinate `coord`.
    ///
    /// Composable to any order. `a^n` with a literal integer exponent uses
    /// the power rule; any other exponent differentiates through the
    /// `exp(b*log a)` form.
    pub fn diff(&self, coord: usize) -> Expr {
        match *self.0 {
            Node::Const(_) | Node::Param(_) => Expr::zero(),
            Node::Coord(i) => {
                if i == coord {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Unary(op, ref a) => {
                let da = a.diff(coord);
                if da.is_zero() {
                    return Expr::zero();
                }
                match op {
                    UnaryOp::Neg => Expr::neg(da),
                    UnaryOp::Sin => Expr::mul(Expr::cos(a.clone()), da),
                    UnaryOp::Cos => Expr::neg(Expr::mul(Expr::sin(a.clone()), da)),
                    UnaryOp::Sqrt => Expr::div(
                        da,
                        Expr::mul(Expr::constant(2.0), Expr::sqrt(a.clone())),
                    ),
                    UnaryOp::Exp => Expr::mul(Expr::exp(a.clone()), da),
                    UnaryOp::Log => Expr::div(da, a.clone()),
                }
            }
            Node::Binary(op, ref a, ref b) => match op {
                BinaryOp::Add => Expr::add(a.diff(coord), b.diff(coord)),
                BinaryOp::Sub => Expr::sub(a.diff(coord), b.diff(coord)),
                BinaryOp::Mul => Expr::add(
                    Expr::mul(a.diff(coord), b.clone()),
                    Expr::mul(a.clone(), b.diff(coord)),
                ),
                BinaryOp::Div => {
                    // (u/v)' = u'/v - u v'/v^2
                    let du = a.diff(coord);
                    let dv = b.diff(coord);
                    Expr::sub(
                        Expr::div(du, b.clone()),
                        Expr::div(
                            Expr::mul(a.clone(), dv),
                            Expr::mul(b.clone(), b.clone()),
                        ),
                    )
                }
                BinaryOp::Pow => {
                    if let Some(n) = b.as_integer() {
                        // d(a^n) = n a^(n-1) a'
                        let da = a.diff(coord);
                        if da.is_zero() {
                            return Expr::zero();
                        }
                        return Expr::mul(
                            Expr::mul(
                                Expr::constant(n as f64),
                                Expr::pow(a.clone(), Expr::constant((n - 1) as f64)),
                            ),
                            da,
                        );
                    }
                    // d(a^b) through a^b = exp(b log a):
                    // a^b (b' log a + b a'/a)
                    let da = a.diff(coord);
                    let db = b.diff(coord);
                    Expr::mul(
                        Expr::pow(a.clone(), b.clone()),
                        Expr::add(
                            Expr::mul(db, Expr::log(a.clone())),
                            Expr::div(Expr::mul(b.clone(), da), a.clone()),
                        ),
                    )
                }
            },
        }
    }

    /// Render to DSL source syntax. Fully parenthesized, so that reparsing
    /// reproduces the tree exactly.
    pub fn print(&self, coords: &[String], params: &[String]) -> String {
        let mut s = String::new();
        self.print_into(&mut s, coords, params);
        s
    }

    fn print_into(&self, out: &mut String, coords: &[String], params: &[String]) {
        use fmt::Write;
        match *self.0 {
            Node::Const(v) => {
                if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
                    let _ = write!(out, "({:?})", v);
                } else {
                    let _ = write!(out, "{:?}", v);
                }
            }
            Node::Coord(i) => out.push_str(&coords[i]),
            Node::Param(i) => out.push_str(&params[i]),
            Node::Unary(op, ref a) => {
                let name = match op {
                    UnaryOp::Neg => {
                        out.push_str("(-");
                        a.print_into(out, coords, params);
                        out.push(')');
                        return;
                    }
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Sqrt => "sqrt",
                    UnaryOp::Exp => "exp",
                    UnaryOp::Log => "log",
                };
                out.push_str(name);
                out.push('(');
                a.print_into(out, coords, params);
                out.push(')');
            }
            Node::Binary(op, ref a, ref b) => {
                let sym = match op {
                    BinaryOp::Add => " + ",
                    BinaryOp::Sub => " - ",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                    BinaryOp::Pow => "^",
                };
                out.push('(');
                a.print_into(out, coords, params);
                out.push_str(sym);
                b.print_into(out, coords, params);
                out.push(')');
            }
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self.0 {
            Node::Const(v) => write!(f, "{:?}", v),
            Node::Coord(i) => write!(f, "x{}", i),
            Node::Param(i) => write!(f, "p{}", i),
            Node::Unary(op, ref a) => write!(f, "{:?}({:?})", op, a),
            Node::Binary(op, ref a, ref b) => write!(f, "({:?} {:?} {:?})", a, op, b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx<'a>(point: &'a [f64], params: &'a [f64]) -> EvalCtx<'a> {
        EvalCtx { point, params }
    }

    #[test]
    fn constant_folding() {
        let e = Expr::add(Expr::constant(2.0), Expr::constant(3.0));
        assert_eq!(e.as_const(), Some(5.0));
        let e = Expr::mul(Expr::coord(0), Expr::one());
        assert!(matches!(*e.0, Node::Coord(0)));
        let e = Expr::mul(Expr::zero(), Expr::coord(1));
        assert!(e.is_zero());
        let e = Expr::pow(Expr::coord(0), Expr::one());
        assert!(matches!(*e.0, Node::Coord(0)));
    }

    #[test]
    fn derivative_of_quadratic() {
        // d/dr (r^2 - 2 m r + a^2) = 2r - 2m, checked by evaluation
        let r = Expr::coord(0);
        let m = Expr::param(0);
        let a = Expr::param(1);
        let e = Expr::add(
            Expr::sub(
                Expr::pow(r.clone(), Expr::constant(2.0)),
                Expr::mul(Expr::mul(Expr::constant(2.0), m), r.clone()),
            ),
            Expr::pow(a, Expr::constant(2.0)),
        );
        let d = e.diff(0);
        for r_val in [0.3, 1.0, 2.5, -1.2] {
            let v = d.eval(&ctx(&[r_val], &[1.0, 2.0])).unwrap();
            assert!((v - (2.0 * r_val - 2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_of_cos_squared() {
        // d/dθ cos(θ)^2 = -2 cos θ sin θ
        let th = Expr::coord(0);
        let e = Expr::pow(Expr::cos(th), Expr::constant(2.0));
        let d = e.diff(0);
        for t in [0.1, 0.7, 1.3, 2.9] {
            let v = d.eval(&ctx(&[t], &[])).unwrap();
            assert!((v + 2.0 * t.cos() * t.sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn higher_order_composition() {
        // third derivative of sin is -cos
        let x = Expr::coord(0);
        let d3 = Expr::sin(x).diff(0).diff(0).diff(0);
        let v = d3.eval(&ctx(&[0.4], &[])).unwrap();
        assert!((v + 0.4_f64.cos()).abs() < 1e-14);
    }

    #[test]
    fn eval_domain_errors() {
        let x = Expr::coord(0);
        assert_eq!(
            Expr::sqrt(x.clone()).eval(&ctx(&[-1.0], &[])),
            Err(EvalError::SqrtNegative(-1.0))
        );
        assert_eq!(
            Expr::log(x.clone()).eval(&ctx(&[0.0], &[])),
            Err(EvalError::LogNonPositive(0.0))
        );
        assert_eq!(
            Expr::div(Expr::one(), x).eval(&ctx(&[0.0], &[])),
            Err(EvalError::DivisionByZero)
        );
    }

    #[test]
    fn general_power_rule_falls_back_to_exp_log() {
        // d/dx x^x = x^x (log x + 1)
        let x = Expr::coord(0);
        let e = Expr::pow(x.clone(), x.clone());
        let d = e.diff(0);
        let v = d.eval(&ctx(&[1.7], &[])).unwrap();
        let expect = 1.7_f64.powf(1.7) * (1.7_f64.ln() + 1.0);
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn negative_integer_exponent_power_rule() {
        let x = Expr::coord(0);
        let e = Expr::pow(x, Expr::constant(-2.0));
        let d = e.diff(0);
        let v = d.eval(&ctx(&[2.0], &[])).unwrap();
        assert!((v + 2.0 / 8.0).abs() < 1e-14);
    }
}
