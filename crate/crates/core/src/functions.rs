//! Math functions available in model expressions.

use statrs::function::erf::erf;
use statrs::function::gamma::ln_gamma;

use crate::parser::{BinaryOp, Expr, Index, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarFn {
    Exp,
    Log,
    Sqrt,
    Abs,
    Sin,
    Cos,
    Tan,
    Logit,
    Ilogit,
    Cloglog,
    Icloglog,
    Phi,
    Step,
    Lgamma,
    Gamma,
    Round,
    Trunc,
    Floor,
    Ceiling,
    Pow,
    Equals,
}

impl ScalarFn {
    pub fn from_name(name: &str) -> Option<Self> {
        use ScalarFn::*;
        Some(match name {
            "exp" => Exp,
            "log" => Log,
            "sqrt" => Sqrt,
            "abs" => Abs,
            "sin" => Sin,
            "cos" => Cos,
            "tan" => Tan,
            "logit" => Logit,
            "ilogit" | "expit" => Ilogit,
            "cloglog" => Cloglog,
            "icloglog" => Icloglog,
            "phi" => Phi,
            "step" => Step,
            "lgamma" | "loggam" => Lgamma,
            "gammafn" => Gamma,
            "round" => Round,
            "trunc" => Trunc,
            "floor" => Floor,
            "ceiling" => Ceiling,
            "pow" => Pow,
            "equals" => Equals,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        use ScalarFn::*;
        match self {
            Exp => "exp",
            Log => "log",
            Sqrt => "sqrt",
            Abs => "abs",
            Sin => "sin",
            Cos => "cos",
            Tan => "tan",
            Logit => "logit",
            Ilogit => "ilogit",
            Cloglog => "cloglog",
            Icloglog => "icloglog",
            Phi => "phi",
            Step => "step",
            Lgamma => "lgamma",
            Gamma => "gammafn",
            Round => "round",
            Trunc => "trunc",
            Floor => "floor",
            Ceiling => "ceiling",
            Pow => "pow",
            Equals => "equals",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            ScalarFn::Pow | ScalarFn::Equals => 2,
            _ => 1,
        }
    }

    #[inline]
    pub fn apply(self, a: &[f64]) -> f64 {
        use ScalarFn::*;
        match self {
            Exp => a[0].exp(),
            Log => a[0].ln(),
            Sqrt => a[0].sqrt(),
            Abs => a[0].abs(),
            Sin => a[0].sin(),
            Cos => a[0].cos(),
            Tan => a[0].tan(),
            Logit => (a[0] / (1.0 - a[0])).ln(),
            Ilogit => 1.0 / (1.0 + (-a[0]).exp()),
            Cloglog => (-(1.0 - a[0]).ln()).ln(),
            Icloglog => 1.0 - (-(a[0].exp())).exp(),
            Phi => 0.5 * (1.0 + erf(a[0] / std::f64::consts::SQRT_2)),
            Step => f64::from(a[0] >= 0.0),
            Lgamma => ln_gamma(a[0]),
            Gamma => ln_gamma(a[0]).exp(),
            Round => a[0].round(),
            Trunc => a[0].trunc(),
            Floor => a[0].floor(),
            Ceiling => a[0].ceil(),
            Pow => a[0].powf(a[1]),
            Equals => f64::from(a[0] == a[1]),
        }
    }
}

/// Reductions over one or more vector (or scalar) arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reduction {
    Sum,
    Mean,
    Prod,
    Min,
    Max,
    Inprod,
    Sd,
}

impl Reduction {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sum" => Reduction::Sum,
            "mean" => Reduction::Mean,
            "prod" => Reduction::Prod,
            "min" => Reduction::Min,
            "max" => Reduction::Max,
            "inprod" => Reduction::Inprod,
            "sd" => Reduction::Sd,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
            Reduction::Prod => "prod",
            Reduction::Min => "min",
            Reduction::Max => "max",
            Reduction::Inprod => "inprod",
            Reduction::Sd => "sd",
        }
    }

    pub fn apply(self, args: &[&[f64]]) -> f64 {
        let all = || args.iter().flat_map(|a| a.iter().copied());
        match self {
            Reduction::Sum => all().sum(),
            Reduction::Prod => all().product(),
            Reduction::Mean => {
                let n = all().count();
                all().sum::<f64>() / n as f64
            }
            Reduction::Min => all().fold(f64::INFINITY, f64::min),
            Reduction::Max => all().fold(f64::NEG_INFINITY, f64::max),
            Reduction::Inprod => args[0].iter().zip(args[1].iter()).map(|(a, b)| a * b).sum(),
            Reduction::Sd => {
                let n = all().count() as f64;
                let m = all().sum::<f64>() / n;
                (all().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
            }
        }
    }
}

pub fn is_known(name: &str) -> bool {
    ScalarFn::from_name(name).is_some() || Reduction::from_name(name).is_some()
}

#[inline]
pub fn apply_binary(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => a / b,
        BinaryOp::Pow => a.powf(b),
        BinaryOp::Lt => f64::from(a < b),
        BinaryOp::Le => f64::from(a <= b),
        BinaryOp::Gt => f64::from(a > b),
        BinaryOp::Ge => f64::from(a >= b),
        BinaryOp::Eq => f64::from(a == b),
        BinaryOp::Ne => f64::from(a != b),
        BinaryOp::And => f64::from(a != 0.0 && b != 0.0),
        BinaryOp::Or => f64::from(a != 0.0 || b != 0.0),
    }
}

#[inline]
pub fn apply_unary(op: UnaryOp, a: f64) -> f64 {
    match op {
        UnaryOp::Neg => -a,
        UnaryOp::Not => f64::from(a == 0.0),
    }
}

/// Converts an evaluated index to a 1-based integer.
pub fn as_index(v: f64) -> Result<usize, String> {
    if v.fract() != 0.0 || v < 1.0 || !v.is_finite() {
        Err(format!("index value {v} is not a positive integer"))
    } else {
        Ok(v as usize)
    }
}

/// Evaluates an expression whose variables all resolve through `lookup`
/// (constants, loop variables, named parameters). `lookup` receives the
/// variable name and its evaluated 1-based indices.
pub fn eval_expr(
    e: &Expr,
    lookup: &dyn Fn(&str, &[usize]) -> Result<f64, String>,
) -> Result<f64, String> {
    Ok(match e {
        Expr::Number(v) => *v,
        Expr::Var(r) => {
            let mut idx = Vec::with_capacity(r.indices.len());
            for ix in &r.indices {
                match ix {
                    Index::Single(ie) => idx.push(as_index(eval_expr(ie, lookup)?)?),
                    _ => return Err(format!("slice of `{}` where a scalar is needed", r.name)),
                }
            }
            lookup(&r.name, &idx)?
        }
        Expr::Unary(op, inner) => apply_unary(*op, eval_expr(inner, lookup)?),
        Expr::Binary(op, l, r) => apply_binary(*op, eval_expr(l, lookup)?, eval_expr(r, lookup)?),
        Expr::Call(name, args) => {
            let vals = args
                .iter()
                .map(|a| eval_expr(a, lookup))
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(f) = ScalarFn::from_name(name) {
                if f.arity() != vals.len() {
                    return Err(format!(
                        "`{name}` takes {} argument(s), got {}",
                        f.arity(),
                        vals.len()
                    ));
                }
                f.apply(&vals)
            } else if let Some(r) = Reduction::from_name(name) {
                let refs: Vec<&[f64]> = vals.iter().map(std::slice::from_ref).collect();
                r.apply(&refs)
            } else {
                return Err(format!("unknown function `{name}`"));
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_expr;

    fn eval(src: &str) -> f64 {
        eval_expr(&parse_expr(src).unwrap(), &|name, idx| match (name, idx) {
            ("a", []) => Ok(2.0),
            ("v", [i]) => Ok(*i as f64 * 10.0),
            _ => Err(format!("no {name}")),
        })
        .unwrap()
    }

    #[test]
    fn arithmetic_and_functions() {
        assert_eq!(eval("1 + 2 * 3"), 7.0);
        assert_eq!(eval("-2^2"), -4.0);
        assert_eq!(eval("a^3"), 8.0);
        assert_eq!(eval("v[a + 1]"), 30.0);
        assert_eq!(eval("pow(a, 0.5)"), 2f64.sqrt());
        assert!((eval("phi(0)") - 0.5).abs() < 1e-15);
        assert!((eval("ilogit(logit(0.3))") - 0.3).abs() < 1e-15);
        assert_eq!(eval("max(1, a, 0)"), 2.0);
        assert_eq!(eval("a > 1 && a < 3"), 1.0);
    }

    #[test]
    fn bad_indices_and_arity() {
        let lookup = |_: &str, _: &[usize]| Ok(0.0);
        assert!(eval_expr(&parse_expr("v[0]").unwrap(), &lookup).is_err());
        assert!(eval_expr(&parse_expr("exp(1, 2)").unwrap(), &lookup).is_err());
        assert!(eval_expr(&parse_expr("nosuch(1)").unwrap(), &lookup).is_err());
    }
}
