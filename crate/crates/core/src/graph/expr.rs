use crate::functions::{apply_binary, apply_unary, Reduction, ScalarFn};
use crate::parser::{BinaryOp, UnaryOp};

/// An expression compiled against the flat value store: constants are
/// inlined and every variable reference is a store index.
#[derive(Debug, Clone, PartialEq)]
pub enum CExpr {
    Const(f64),
    Elem(usize),
    Unary(UnaryOp, Box<CExpr>),
    Binary(BinaryOp, Box<CExpr>, Box<CExpr>),
    Call(ScalarFn, Vec<CExpr>),
    /// Each argument is a list of scalar element expressions.
    Reduce(Reduction, Vec<Vec<CExpr>>),
}

impl CExpr {
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            CExpr::Const(c) => *c,
            CExpr::Elem(i) => v[*i],
            CExpr::Unary(op, a) => apply_unary(*op, a.eval(v)),
            CExpr::Binary(op, a, b) => apply_binary(*op, a.eval(v), b.eval(v)),
            CExpr::Call(f, args) => match args.as_slice() {
                [a] => f.apply(&[a.eval(v)]),
                [a, b] => f.apply(&[a.eval(v), b.eval(v)]),
                _ => {
                    let vals: Vec<f64> = args.iter().map(|a| a.eval(v)).collect();
                    f.apply(&vals)
                }
            },
            CExpr::Reduce(r, args) => {
                let vals: Vec<Vec<f64>> = args
                    .iter()
                    .map(|a| a.iter().map(|e| e.eval(v)).collect())
                    .collect();
                let refs: Vec<&[f64]> = vals.iter().map(Vec::as_slice).collect();
                r.apply(&refs)
            }
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            CExpr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Builds a node and folds it when all operands are constant.
    pub fn unary(op: UnaryOp, a: CExpr) -> CExpr {
        match a {
            CExpr::Const(c) => CExpr::Const(apply_unary(op, c)),
            a => CExpr::Unary(op, Box::new(a)),
        }
    }

    pub fn binary(op: BinaryOp, a: CExpr, b: CExpr) -> CExpr {
        match (&a, &b) {
            (CExpr::Const(x), CExpr::Const(y)) => CExpr::Const(apply_binary(op, *x, *y)),
            _ => CExpr::Binary(op, Box::new(a), Box::new(b)),
        }
    }

    pub fn call(f: ScalarFn, args: Vec<CExpr>) -> CExpr {
        if args.iter().all(|a| a.as_const().is_some()) {
            CExpr::Const(CExpr::Call(f, args).eval(&[]))
        } else {
            CExpr::Call(f, args)
        }
    }

    pub fn reduce(r: Reduction, args: Vec<Vec<CExpr>>) -> CExpr {
        if args.iter().flatten().all(|a| a.as_const().is_some()) {
            CExpr::Const(CExpr::Reduce(r, args).eval(&[]))
        } else {
            CExpr::Reduce(r, args)
        }
    }

    /// Store indices referenced, in first-use order, with repeats.
    pub fn elems(&self, out: &mut Vec<usize>) {
        match self {
            CExpr::Const(_) => {}
            CExpr::Elem(i) => out.push(*i),
            CExpr::Unary(_, a) => a.elems(out),
            CExpr::Binary(_, a, b) => {
                a.elems(out);
                b.elems(out);
            }
            CExpr::Call(_, args) => args.iter().for_each(|a| a.elems(out)),
            CExpr::Reduce(_, args) => args.iter().flatten().for_each(|a| a.elems(out)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding() {
        let e = CExpr::binary(
            BinaryOp::Div,
            CExpr::Const(1.0),
            CExpr::call(ScalarFn::Sqrt, vec![CExpr::Const(4.0)]),
        );
        assert_eq!(e, CExpr::Const(0.5));
        let e = CExpr::binary(BinaryOp::Mul, CExpr::Elem(1), CExpr::Const(2.0));
        assert_eq!(e.eval(&[0.0, 3.0]), 6.0);
        let r = CExpr::reduce(
            Reduction::Sum,
            vec![vec![CExpr::Elem(0), CExpr::Elem(1), CExpr::Const(1.0)]],
        );
        assert_eq!(r.eval(&[2.0, 3.0]), 6.0);
    }
}
