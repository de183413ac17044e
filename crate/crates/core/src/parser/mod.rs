//! Recursive-descent parser for BUGS-dialect model code.
//!
//! The dialect follows JAGS tokens: `~` for stochastic declarations, `<-` (or
//! `=`) for deterministic ones, `for (i in a:b) { ... }` loops, and
//! `if (cond) { ... } else { ... }` blocks that select model variants from
//! constants. `#` starts a line comment. Distribution arguments may be
//! positional or named (`dgamma(shape = a, rate = b)`).
//!
//! Operator precedence, loosest first: `||`, `&&`, comparisons, `+ -`,
//! `* /`, unary `-`/`!`, `^`. `^` is right-associative and binds tighter than
//! unary minus, so `-2^2` is `-(2^2)`.

mod ast;
mod deparse;
mod lexer;

pub use ast::*;
pub(crate) use deparse::format_number;
pub use deparse::{deparse_expr, deparse_model, deparse_var_ref};

use std::collections::HashSet;
use std::fmt;

use lexer::{tokenize, Spanned, Token};

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax(String),
    DuplicateArgument(String),
    MalformedIndex(String),
    Unsupported(String),
}

/// Parse failure with the 1-based position of the offending token.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub col: usize,
    pub token: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match &self.kind {
            ParseErrorKind::Syntax(m) => m.clone(),
            ParseErrorKind::DuplicateArgument(name) => format!("duplicate named argument `{name}`"),
            ParseErrorKind::MalformedIndex(m) => format!("malformed index expression: {m}"),
            ParseErrorKind::Unsupported(m) => format!("unsupported syntax: {m}"),
        };
        write!(
            f,
            "parse error at line {}, column {}: {} (at `{}`)",
            self.line, self.col, msg, self.token
        )
    }
}

impl std::error::Error for ParseError {}

/// Parses model source into a syntax tree.
///
/// The body may be bare statements, wrapped in braces, or wrapped in
/// `model { ... }`.
pub fn parse_model(text: &str) -> Result<ModelAst, ParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser::new(tokens);
    p.skip_separators();
    if matches!(p.peek(), Token::Eof) {
        return Err(p.error(ParseErrorKind::Syntax("empty model".into())));
    }
    let wrapped = if matches!(p.peek(), Token::Ident(s) if s == "model")
        && matches!(p.peek_at(1), Token::LBrace)
    {
        p.advance();
        true
    } else {
        matches!(p.peek(), Token::LBrace)
    };
    let statements = if wrapped {
        p.expect(&Token::LBrace)?;
        let body = p.statements_until_brace()?;
        p.expect(&Token::RBrace)?;
        body
    } else {
        p.statements_until_eof()?
    };
    p.skip_separators();
    if !matches!(p.peek(), Token::Eof) {
        return Err(p.unexpected("end of model"));
    }
    Ok(ModelAst { statements })
}

/// Parses a node or variable reference such as `theta[1:3]` or `y[2, 3]`.
pub fn parse_var_ref(text: &str) -> Result<VarRef, ParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser::new(tokens);
    p.skip_separators();
    let r = p.var_ref()?;
    p.skip_separators();
    if !matches!(p.peek(), Token::Eof) {
        return Err(p.unexpected("end of node reference"));
    }
    Ok(r)
}

/// Parses a standalone expression.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser::new(tokens);
    p.skip_separators();
    let e = p.expr()?;
    p.skip_separators();
    if !matches!(p.peek(), Token::Eof) {
        return Err(p.unexpected("end of expression"));
    }
    Ok(e)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    /// Open `(`/`[` count; newlines are insignificant while positive.
    depth: usize,
}

impl Parser {
    fn new(tokens: Vec<Spanned>) -> Self {
        Parser {
            tokens,
            pos: 0,
            depth: 0,
        }
    }

    fn skip_insignificant(&mut self) {
        if self.depth > 0 {
            while matches!(self.tokens[self.pos].token, Token::Newline) {
                self.pos += 1;
            }
        }
    }

    fn peek(&mut self) -> &Token {
        self.skip_insignificant();
        &self.tokens[self.pos].token
    }

    /// Looks `n` significant tokens ahead without consuming.
    fn peek_at(&mut self, n: usize) -> &Token {
        self.skip_insignificant();
        let mut i = self.pos;
        let mut seen = 0;
        while i < self.tokens.len() - 1 {
            if self.depth > 0 && matches!(self.tokens[i].token, Token::Newline) {
                i += 1;
                continue;
            }
            if seen == n {
                break;
            }
            seen += 1;
            i += 1;
        }
        &self.tokens[i].token
    }

    fn here(&mut self) -> SourcePos {
        self.skip_insignificant();
        let t = &self.tokens[self.pos];
        SourcePos {
            line: t.line,
            col: t.col,
        }
    }

    fn advance(&mut self) -> Token {
        self.skip_insignificant();
        let t = self.tokens[self.pos].token.clone();
        if !matches!(t, Token::Eof) {
            self.pos += 1;
        }
        t
    }

    fn skip_newlines(&mut self) {
        while matches!(self.tokens[self.pos].token, Token::Newline) {
            self.pos += 1;
        }
    }

    fn skip_separators(&mut self) {
        while matches!(
            self.tokens[self.pos].token,
            Token::Newline | Token::Semicolon
        ) {
            self.pos += 1;
        }
    }

    fn error(&mut self, kind: ParseErrorKind) -> ParseError {
        self.skip_insignificant();
        let t = &self.tokens[self.pos];
        ParseError {
            kind,
            line: t.line,
            col: t.col,
            token: t.token.describe(),
        }
    }

    fn unexpected(&mut self, wanted: &str) -> ParseError {
        let found = self.peek().describe();
        self.error(ParseErrorKind::Syntax(format!(
            "expected {wanted}, found `{found}`"
        )))
    }

    fn expect(&mut self, tok: &Token) -> Result<(), ParseError> {
        if self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{}`", tok.describe())))
        }
    }

    fn open(&mut self, tok: &Token) -> Result<(), ParseError> {
        self.expect(tok)?;
        self.depth += 1;
        Ok(())
    }

    fn close(&mut self, tok: &Token) -> Result<(), ParseError> {
        if self.peek() == tok {
            self.depth -= 1;
            self.advance();
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{}`", tok.describe())))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Token::Ident(s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn statements_until_eof(&mut self) -> Result<Vec<Statement>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_separators();
            if matches!(self.peek(), Token::Eof) {
                return Ok(out);
            }
            out.push(self.statement()?);
        }
    }

    fn statements_until_brace(&mut self) -> Result<Vec<Statement>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_separators();
            match self.peek() {
                Token::RBrace => return Ok(out),
                Token::Eof => return Err(self.unexpected("`}`")),
                _ => out.push(self.statement()?),
            }
        }
    }

    /// A braced block or a single statement.
    fn block(&mut self) -> Result<Vec<Statement>, ParseError> {
        self.skip_newlines();
        if matches!(self.peek(), Token::LBrace) {
            self.advance();
            let body = self.statements_until_brace()?;
            self.expect(&Token::RBrace)?;
            Ok(body)
        } else {
            Ok(vec![self.statement()?])
        }
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        let pos = self.here();
        match self.peek().clone() {
            Token::Ident(k) if k == "for" && matches!(self.peek_at(1), Token::LParen) => {
                self.advance();
                self.for_loop(pos)
            }
            Token::Ident(k) if k == "if" && matches!(self.peek_at(1), Token::LParen) => {
                self.advance();
                self.if_else(pos)
            }
            Token::Ident(_) => self.declaration(pos),
            _ => Err(self.unexpected("a declaration, `for` loop or `if` block")),
        }
    }

    fn for_loop(&mut self, pos: SourcePos) -> Result<Statement, ParseError> {
        self.open(&Token::LParen)?;
        let var = self.ident()?;
        match self.peek() {
            Token::Ident(k) if k == "in" => {
                self.advance();
            }
            _ => return Err(self.unexpected("`in`")),
        }
        let from = self.expr()?;
        self.expect(&Token::Colon)?;
        let to = self.expr()?;
        self.close(&Token::RParen)?;
        let body = self.block()?;
        Ok(Statement::ForLoop(ForLoop {
            var,
            from,
            to,
            body,
            pos,
        }))
    }

    fn if_else(&mut self, pos: SourcePos) -> Result<Statement, ParseError> {
        self.open(&Token::LParen)?;
        let condition = self.expr()?;
        self.close(&Token::RParen)?;
        let then_branch = self.block()?;
        // `else` may sit on the line after the closing brace.
        let save = self.pos;
        self.skip_newlines();
        let else_branch = if matches!(self.peek(), Token::Ident(k) if k == "else") {
            self.advance();
            self.skip_newlines();
            let else_pos = self.here();
            if matches!(self.peek(), Token::Ident(k) if k == "if")
                && matches!(self.peek_at(1), Token::LParen)
            {
                self.advance();
                Some(vec![self.if_else(else_pos)?])
            } else {
                Some(self.block()?)
            }
        } else {
            self.pos = save;
            None
        };
        Ok(Statement::IfElse(IfElse {
            condition,
            then_branch,
            else_branch,
            pos,
        }))
    }

    fn declaration(&mut self, pos: SourcePos) -> Result<Statement, ParseError> {
        if matches!(self.peek_at(1), Token::LParen) {
            let name = self.peek().describe();
            return Err(self.error(ParseErrorKind::Unsupported(format!(
                "function `{name}(...)` on the left-hand side of a declaration"
            ))));
        }
        let target = self.var_ref()?;
        let rhs = match self.peek() {
            Token::Tilde => {
                self.advance();
                DeclarationRhs::Stochastic(self.distribution_call()?)
            }
            Token::Arrow | Token::Assign => {
                self.advance();
                self.skip_newlines();
                DeclarationRhs::Deterministic(self.expr()?)
            }
            _ => return Err(self.unexpected("`~`, `<-` or `=`")),
        };
        Ok(Statement::Declaration(Declaration { target, rhs, pos }))
    }

    fn distribution_call(&mut self) -> Result<DistributionCall, ParseError> {
        let name = self.ident()?;
        self.open(&Token::LParen)?;
        let mut args = Vec::new();
        let mut names = HashSet::new();
        if !matches!(self.peek(), Token::RParen) {
            loop {
                let arg_name = if matches!(self.peek(), Token::Ident(_))
                    && matches!(self.peek_at(1), Token::Assign)
                {
                    let n = self.ident()?;
                    if !names.insert(n.clone()) {
                        return Err(ParseError {
                            kind: ParseErrorKind::DuplicateArgument(n.clone()),
                            line: self.tokens[self.pos - 1].line,
                            col: self.tokens[self.pos - 1].col,
                            token: n,
                        });
                    }
                    self.advance();
                    Some(n)
                } else {
                    None
                };
                let value = self.expr()?;
                args.push(Argument {
                    name: arg_name,
                    value,
                });
                if matches!(self.peek(), Token::Comma) {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.close(&Token::RParen)?;
        if let Token::Ident(k) = self.peek().clone() {
            if (k == "T" || k == "I") && matches!(self.peek_at(1), Token::LParen) {
                return Err(self.error(ParseErrorKind::Unsupported(format!(
                    "truncation/censoring `{k}(,)`"
                ))));
            }
        }
        Ok(DistributionCall { name, args })
    }

    fn var_ref(&mut self) -> Result<VarRef, ParseError> {
        let name = self.ident()?;
        let mut indices = Vec::new();
        if matches!(self.peek(), Token::LBracket) {
            self.open(&Token::LBracket)?;
            loop {
                let index = match self.peek() {
                    Token::Comma | Token::RBracket => Index::All,
                    _ => {
                        let lo = self.index_expr()?;
                        if matches!(self.peek(), Token::Colon) {
                            self.advance();
                            Index::Range(lo, self.index_expr()?)
                        } else {
                            Index::Single(lo)
                        }
                    }
                };
                indices.push(index);
                if matches!(self.peek(), Token::Comma) {
                    self.advance();
                } else {
                    break;
                }
            }
            self.close(&Token::RBracket)?;
        }
        Ok(VarRef { name, indices })
    }

    fn index_expr(&mut self) -> Result<Expr, ParseError> {
        let pos = self.here();
        let e = self.expr()?;
        check_index_expr(&e).map_err(|msg| ParseError {
            kind: ParseErrorKind::MalformedIndex(msg),
            line: pos.line,
            col: pos.col,
            token: deparse_expr(&e),
        })?;
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.or_expr()
    }

    fn binary_loop(
        &mut self,
        next: fn(&mut Self) -> Result<Expr, ParseError>,
        ops: &[(Token, BinaryOp)],
    ) -> Result<Expr, ParseError> {
        let mut lhs = next(self)?;
        loop {
            let tok = self.peek().clone();
            let Some(op) = ops.iter().find(|(t, _)| *t == tok).map(|(_, op)| *op) else {
                return Ok(lhs);
            };
            self.advance();
            self.skip_newlines();
            let rhs = next(self)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_loop(Self::and_expr, &[(Token::Or, BinaryOp::Or)])
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_loop(Self::cmp_expr, &[(Token::And, BinaryOp::And)])
    }

    fn cmp_expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Token::Lt => BinaryOp::Lt,
            Token::Le => BinaryOp::Le,
            Token::Gt => BinaryOp::Gt,
            Token::Ge => BinaryOp::Ge,
            Token::EqEq => BinaryOp::Eq,
            Token::Ne => BinaryOp::Ne,
            _ => return Ok(lhs),
        };
        self.advance();
        self.skip_newlines();
        let rhs = self.add_expr()?;
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn add_expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_loop(
            Self::mul_expr,
            &[(Token::Plus, BinaryOp::Add), (Token::Minus, BinaryOp::Sub)],
        )
    }

    fn mul_expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_loop(
            Self::unary_expr,
            &[(Token::Star, BinaryOp::Mul), (Token::Slash, BinaryOp::Div)],
        )
    }

    fn unary_expr(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Token::Minus => {
                self.advance();
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary_expr()?)))
            }
            Token::Bang => {
                self.advance();
                Ok(Expr::Unary(UnaryOp::Not, Box::new(self.unary_expr()?)))
            }
            _ => self.power_expr(),
        }
    }

    fn power_expr(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if matches!(self.peek(), Token::Caret) {
            self.advance();
            self.skip_newlines();
            let exponent = self.unary_expr()?;
            Ok(Expr::binary(BinaryOp::Pow, base, exponent))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Token::Number(v) => {
                self.advance();
                Ok(Expr::Number(v))
            }
            Token::LParen => {
                self.open(&Token::LParen)?;
                let e = self.expr()?;
                self.close(&Token::RParen)?;
                Ok(e)
            }
            Token::Ident(name) => {
                if matches!(self.peek_at(1), Token::LParen) {
                    self.advance();
                    self.open(&Token::LParen)?;
                    let mut args = Vec::new();
                    if !matches!(self.peek(), Token::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if matches!(self.peek(), Token::Comma) {
                                self.advance();
                            } else {
                                break;
                            }
                        }
                    }
                    self.close(&Token::RParen)?;
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Var(self.var_ref()?))
                }
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}

/// Index expressions may only combine integer literals, names (loop
/// variables or constants) and arithmetic.
fn check_index_expr(e: &Expr) -> Result<(), String> {
    match e {
        Expr::Number(v) => {
            if v.fract() != 0.0 {
                Err(format!("non-integer literal {v}"))
            } else {
                Ok(())
            }
        }
        Expr::Var(r) => r.indices.iter().try_for_each(|ix| match ix {
            Index::Single(e) => check_index_expr(e),
            Index::Range(..) | Index::All => {
                Err(format!("range inside nested index of `{}`", r.name))
            }
        }),
        Expr::Unary(UnaryOp::Neg, inner) => check_index_expr(inner),
        Expr::Unary(UnaryOp::Not, _) => Err("logical operator".into()),
        Expr::Binary(op, l, r) => match op {
            BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Pow => {
                check_index_expr(l)?;
                check_index_expr(r)
            }
            _ => Err(format!("operator `{}`", op.symbol())),
        },
        Expr::Call(name, _) => Err(format!("function call `{name}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const PUMP: &str = r#"
{
  for (i in 1:N){
      theta[i] ~ dgamma(shape = alpha, rate = beta) ## random effects
      lambda[i] <- theta[i]*t[i]     ## t[i] is explanatory data
      x[i] ~ dpois(lambda[i])        ## x[i] is response data
  }
  alpha ~ dexp(1.0)                  ## priors for alpha and beta
  beta ~ dgamma(0.1, 1.0)
}
"#;

    fn num(v: f64) -> Expr {
        Expr::Number(v)
    }

    fn var(name: &str) -> Expr {
        Expr::Var(VarRef::scalar(name))
    }

    #[test]
    fn pump_structure() {
        let ast = parse_model(PUMP).unwrap();
        assert_eq!(ast.statements.len(), 3);
        let Statement::ForLoop(lp) = &ast.statements[0] else {
            panic!("expected loop")
        };
        assert_eq!(lp.var, "i");
        assert_eq!(lp.from, num(1.0));
        assert_eq!(lp.to, var("N"));
        assert_eq!(lp.body.len(), 3);
        let kinds: Vec<bool> = lp
            .body
            .iter()
            .map(|s| match s {
                Statement::Declaration(d) => d.is_stochastic(),
                _ => panic!("loop body should hold declarations"),
            })
            .collect();
        assert_eq!(kinds, vec![true, false, true]);
        for (stmt, name) in ast.statements[1..].iter().zip(["alpha", "beta"]) {
            let Statement::Declaration(d) = stmt else {
                panic!()
            };
            assert!(d.is_stochastic());
            assert_eq!(d.target.name, name);
        }
    }

    #[test]
    fn named_arguments_in_order() {
        let ast = parse_model("theta ~ dgamma(shape = a, rate = b)").unwrap();
        let Statement::Declaration(d) = &ast.statements[0] else {
            panic!()
        };
        let DeclarationRhs::Stochastic(call) = &d.rhs else {
            panic!()
        };
        let names: Vec<_> = call.args.iter().map(|a| a.name.as_deref()).collect();
        assert_eq!(names, vec![Some("shape"), Some("rate")]);
    }

    #[test]
    fn minimal_model() {
        let ast = parse_model("x ~ dnorm(0, 1)").unwrap();
        assert_eq!(
            ast.statements,
            vec![Statement::Declaration(Declaration {
                target: VarRef::scalar("x"),
                rhs: DeclarationRhs::Stochastic(DistributionCall {
                    name: "dnorm".into(),
                    args: vec![
                        Argument {
                            name: None,
                            value: num(0.0)
                        },
                        Argument {
                            name: None,
                            value: num(1.0)
                        },
                    ],
                }),
                pos: SourcePos::default(),
            })]
        );
    }

    #[test]
    fn multivariate_slice_target() {
        let ast = parse_model("y[1:3] ~ dmnorm(mu[1:3], prec[1:3,1:3])").unwrap();
        let Statement::Declaration(d) = &ast.statements[0] else {
            panic!()
        };
        assert_eq!(d.target.indices, vec![Index::Range(num(1.0), num(3.0))]);
        let DeclarationRhs::Stochastic(call) = &d.rhs else {
            panic!()
        };
        let Expr::Var(prec) = &call.args[1].value else {
            panic!()
        };
        assert_eq!(prec.indices.len(), 2);
    }

    #[test]
    fn equals_is_deterministic_assignment() {
        let a = parse_model("y = a + b").unwrap();
        let b = parse_model("y <- a + b").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_keyword_wrapper() {
        let a = parse_model("model {\n x ~ dnorm(0, 1)\n}").unwrap();
        let b = parse_model("x ~ dnorm(0, 1)").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn power_binds_tighter_than_unary_minus() {
        let e = parse_expr("-2^2").unwrap();
        assert_eq!(
            e,
            Expr::Unary(
                UnaryOp::Neg,
                Box::new(Expr::binary(BinaryOp::Pow, num(2.0), num(2.0)))
            )
        );
        let e = parse_expr("a^b^c").unwrap();
        assert_eq!(
            e,
            Expr::binary(
                BinaryOp::Pow,
                var("a"),
                Expr::binary(BinaryOp::Pow, var("b"), var("c"))
            )
        );
        let e = parse_expr("2^-1").unwrap();
        assert_eq!(
            e,
            Expr::binary(
                BinaryOp::Pow,
                num(2.0),
                Expr::Unary(UnaryOp::Neg, Box::new(num(1.0)))
            )
        );
    }

    #[test]
    fn newline_ends_expression_outside_brackets() {
        let ast = parse_model("a <- b\nc <- d").unwrap();
        assert_eq!(ast.statements.len(), 2);
        let ast = parse_model("a <- (b +\n c)").unwrap();
        assert_eq!(ast.statements.len(), 1);
        let ast = parse_model("a <- b +\n c").unwrap();
        assert_eq!(ast.statements.len(), 1);
    }

    #[test]
    fn if_else_with_else_on_next_line() {
        let src = "if (FLAG == 1) {\n  x ~ dnorm(0, 1)\n}\nelse {\n  x ~ dnorm(0, 2)\n}";
        let ast = parse_model(src).unwrap();
        let Statement::IfElse(ie) = &ast.statements[0] else {
            panic!()
        };
        assert!(ie.else_branch.is_some());
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_model("x ~ dnorm(0, 1)\ny ~ dnorm(0 1)").unwrap_err();
        assert_eq!((err.line, err.col), (2, 13));
        assert_eq!(err.token, "1");
        assert!(err.to_string().contains("line 2, column 13"));
    }

    #[test]
    fn duplicate_named_argument() {
        let err = parse_model("x ~ dnorm(mean = 0, mean = 1)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::DuplicateArgument("mean".into()));
        assert_eq!(err.col, 21);
    }

    #[test]
    fn malformed_indices() {
        let err = parse_model("x[1.5] ~ dnorm(0, 1)").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::MalformedIndex(_)));
        let err = parse_model("x[exp(1)] ~ dnorm(0, 1)").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::MalformedIndex(_)));
        // constant-indexed nesting is legal syntax
        parse_model("y[i] ~ dnorm(mu[group[i]], 1)").unwrap();
    }

    #[test]
    fn truncation_is_rejected() {
        let err = parse_model("x ~ dnorm(0, 1) T(0, )").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Unsupported(_)));
        let err = parse_model("x ~ dnorm(0, 1) I(0, 1)").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Unsupported(_)));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(parse_model("  # only a comment\n").is_err());
    }

    #[test]
    fn parsing_is_pure() {
        assert_eq!(parse_model(PUMP).unwrap(), parse_model(PUMP).unwrap());
    }

    #[test]
    fn var_ref_specs() {
        let r = parse_var_ref("y[2, 3]").unwrap();
        assert_eq!(r.name, "y");
        assert_eq!(
            r.indices,
            vec![Index::Single(num(2.0)), Index::Single(num(3.0))]
        );
        assert!(parse_var_ref("y[2] extra").is_err());
    }
}
