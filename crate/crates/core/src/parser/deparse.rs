use std::fmt::Write;

use super::ast::*;

/// Renders a syntax tree as canonical model text.
///
/// Declarations appear one per line with two-space indentation inside
/// blocks; deterministic declarations always use `<-`. The output carries no
/// trailing newline.
pub fn deparse_model(ast: &ModelAst) -> String {
    let mut lines = Vec::new();
    write_block(&ast.statements, 0, &mut lines);
    lines.join("\n")
}

fn write_block(stmts: &[Statement], depth: usize, lines: &mut Vec<String>) {
    let pad = "  ".repeat(depth);
    for stmt in stmts {
        match stmt {
            Statement::Declaration(d) => lines.push(format!("{pad}{}", deparse_declaration(d))),
            Statement::ForLoop(lp) => {
                lines.push(format!(
                    "{pad}for ({} in {}:{}) {{",
                    lp.var,
                    deparse_expr(&lp.from),
                    deparse_expr(&lp.to)
                ));
                write_block(&lp.body, depth + 1, lines);
                lines.push(format!("{pad}}}"));
            }
            Statement::IfElse(ie) => {
                lines.push(format!("{pad}if ({}) {{", deparse_expr(&ie.condition)));
                write_block(&ie.then_branch, depth + 1, lines);
                match &ie.else_branch {
                    Some(branch) => {
                        lines.push(format!("{pad}}} else {{"));
                        write_block(branch, depth + 1, lines);
                        lines.push(format!("{pad}}}"));
                    }
                    None => lines.push(format!("{pad}}}")),
                }
            }
        }
    }
}

fn deparse_declaration(d: &Declaration) -> String {
    let target = deparse_var_ref(&d.target);
    match &d.rhs {
        DeclarationRhs::Stochastic(call) => {
            let args: Vec<String> = call
                .args
                .iter()
                .map(|a| match &a.name {
                    Some(n) => format!("{n} = {}", deparse_expr(&a.value)),
                    None => deparse_expr(&a.value),
                })
                .collect();
            format!("{target} ~ {}({})", call.name, args.join(", "))
        }
        DeclarationRhs::Deterministic(e) => format!("{target} <- {}", deparse_expr(e)),
    }
}

pub fn deparse_var_ref(r: &VarRef) -> String {
    if r.indices.is_empty() {
        return r.name.clone();
    }
    let parts: Vec<String> = r
        .indices
        .iter()
        .map(|ix| match ix {
            Index::Single(e) => deparse_expr(e),
            Index::Range(a, b) => format!("{}:{}", deparse_expr(a), deparse_expr(b)),
            Index::All => String::new(),
        })
        .collect();
    format!("{}[{}]", r.name, parts.join(", "))
}

pub(crate) fn format_number(v: f64) -> String {
    let a = v.abs();
    if v.fract() == 0.0 && a < 1e15 {
        format!("{v:.0}")
    } else if a == 0.0 || (1e-5..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn deparse_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(e, &mut s);
    s
}

fn write_child(e: &Expr, parens: bool, out: &mut String) {
    if parens {
        out.push('(');
        write_expr(e, out);
        out.push(')');
    } else {
        write_expr(e, out);
    }
}

fn write_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Number(v) => out.push_str(&format_number(*v)),
        Expr::Var(r) => out.push_str(&deparse_var_ref(r)),
        Expr::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(a, out);
            }
            out.push(')');
        }
        Expr::Unary(op, inner) => {
            out.push(match op {
                UnaryOp::Neg => '-',
                UnaryOp::Not => '!',
            });
            write_child(inner, inner.precedence() < 6, out);
        }
        Expr::Binary(op, lhs, rhs) => {
            let p = op.precedence();
            let (left_parens, right_parens) = match op {
                BinaryOp::Pow => (lhs.precedence() <= p, rhs.precedence() < 6),
                BinaryOp::Lt
                | BinaryOp::Le
                | BinaryOp::Gt
                | BinaryOp::Ge
                | BinaryOp::Eq
                | BinaryOp::Ne => (lhs.precedence() <= p, rhs.precedence() <= p),
                _ => (lhs.precedence() < p, rhs.precedence() <= p),
            };
            write_child(lhs, left_parens, out);
            if *op == BinaryOp::Pow {
                out.push('^');
            } else {
                let _ = write!(out, " {} ", op.symbol());
            }
            write_child(rhs, right_parens, out);
        }
    }
}
