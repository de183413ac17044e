//! Syntax tree for BUGS-dialect model code.
//!
//! Source positions are carried for diagnostics but never take part in
//! structural equality, so a tree and the tree obtained by re-parsing its
//! deparsed text compare equal.

use std::fmt;

/// 1-based line/column of the first token of a construct.
#[derive(Debug, Clone, Copy, Default)]
pub struct SourcePos {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for SourcePos {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl fmt::Display for SourcePos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelAst {
    pub statements: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Declaration(Declaration),
    ForLoop(ForLoop),
    IfElse(IfElse),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Declaration {
    pub target: VarRef,
    pub rhs: DeclarationRhs,
    pub pos: SourcePos,
}

impl Declaration {
    pub fn is_stochastic(&self) -> bool {
        matches!(self.rhs, DeclarationRhs::Stochastic(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeclarationRhs {
    /// `target ~ dist(...)`
    Stochastic(DistributionCall),
    /// `target <- expr` (or `target = expr`)
    Deterministic(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionCall {
    pub name: String,
    pub args: Vec<Argument>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Argument {
    /// `None` for positional arguments.
    pub name: Option<String>,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForLoop {
    pub var: String,
    pub from: Expr,
    pub to: Expr,
    pub body: Vec<Statement>,
    pub pos: SourcePos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IfElse {
    pub condition: Expr,
    pub then_branch: Vec<Statement>,
    pub else_branch: Option<Vec<Statement>>,
    pub pos: SourcePos,
}

/// A possibly indexed reference to a variable, e.g. `alpha`, `x[i]`, `y[1:3, j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarRef {
    pub name: String,
    /// Empty when the reference carries no brackets.
    pub indices: Vec<Index>,
}

impl VarRef {
    pub fn scalar(name: impl Into<String>) -> Self {
        VarRef {
            name: name.into(),
            indices: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Index {
    Single(Expr),
    Range(Expr, Expr),
    /// Empty slot, as in `x[, 2]`: the whole extent of that dimension.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Lt
            | BinaryOp::Le
            | BinaryOp::Gt
            | BinaryOp::Ge
            | BinaryOp::Eq
            | BinaryOp::Ne => 3,
            BinaryOp::Add | BinaryOp::Sub => 4,
            BinaryOp::Mul | BinaryOp::Div => 5,
            BinaryOp::Pow => 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Var(VarRef),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

impl Expr {
    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub(crate) fn precedence(&self) -> u8 {
        match self {
            Expr::Number(_) | Expr::Var(_) | Expr::Call(..) => 8,
            Expr::Unary(..) => 6,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }
}
