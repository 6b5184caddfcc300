//! Lexer, parser and static checks for MiniLang source text.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::ast::{builtin_arity, BinOp, Expr, Program, Stmt};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct CompileError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(u64),
    Float(f64),
    Str(String),
    Ident(String),
    Let,
    Print,
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Sep,
}

struct Lexed {
    tok: Tok,
    line: usize,
}

fn err(line: usize, message: impl Into<String>) -> CompileError {
    CompileError {
        line,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<Lexed>, CompileError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'\n' => {
                out.push(Lexed { tok: Tok::Sep, line });
                line += 1;
                i += 1;
            }
            b';' => {
                out.push(Lexed { tok: Tok::Sep, line });
                i += 1;
            }
            b' ' | b'\t' | b'\r' => i += 1,
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'(' => {
                out.push(Lexed { tok: Tok::LParen, line });
                i += 1;
            }
            b')' => {
                out.push(Lexed { tok: Tok::RParen, line });
                i += 1;
            }
            b',' => {
                out.push(Lexed { tok: Tok::Comma, line });
                i += 1;
            }
            b'"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match bytes.get(i) {
                        None | Some(b'\n') => return Err(err(line, "unterminated string literal")),
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(b'\\') => {
                            let esc = match bytes.get(i + 1) {
                                Some(b'n') => '\n',
                                Some(b't') => '\t',
                                Some(b'"') => '"',
                                Some(b'\\') => '\\',
                                _ => return Err(err(line, "invalid escape sequence")),
                            };
                            s.push(esc);
                            i += 2;
                        }
                        Some(_) => {
                            // Copy one UTF-8 scalar.
                            let rest = &src[i..];
                            let ch = rest.chars().next().unwrap_or('\u{fffd}');
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                out.push(Lexed { tok: Tok::Str(s), line });
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut is_float = false;
                if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                    is_float = true;
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text = &src[start..i];
                let tok = if is_float {
                    Tok::Float(text.parse().map_err(|_| err(line, "bad float literal"))?)
                } else {
                    Tok::Int(
                        text.parse()
                            .map_err(|_| err(line, format!("integer literal `{text}` out of range")))?,
                    )
                };
                out.push(Lexed { tok, line });
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &src[start..i];
                let tok = match word {
                    "let" => Tok::Let,
                    "print" => Tok::Print,
                    _ => Tok::Ident(word.to_string()),
                };
                out.push(Lexed { tok, line });
            }
            _ => {
                const OPS: &[&str] = &["++", "<=", ">=", "==", "!=", "+", "-", "*", "/", "%", "<", ">", "="];
                let rest = &src[i..];
                match OPS.iter().find(|op| rest.starts_with(**op)) {
                    Some(op) => {
                        out.push(Lexed { tok: Tok::Op(op), line });
                        i += op.len();
                    }
                    None => {
                        let ch = rest.chars().next().unwrap_or('?');
                        return Err(err(line, format!("unexpected character `{ch}`")));
                    }
                }
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map_or(1, |t| t.line)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), CompileError> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(err(self.line(), format!("expected {what}")))
        }
    }

    fn program(&mut self) -> Result<Program, CompileError> {
        let mut stmts = Vec::new();
        loop {
            while self.peek() == Some(&Tok::Sep) {
                self.pos += 1;
            }
            if self.peek().is_none() {
                break;
            }
            stmts.push(self.stmt()?);
            match self.peek() {
                None | Some(Tok::Sep) => {}
                Some(_) => return Err(err(self.line(), "expected end of statement")),
            }
        }
        Ok(Program { stmts })
    }

    fn stmt(&mut self) -> Result<Stmt, CompileError> {
        match self.peek() {
            Some(Tok::Let) => {
                self.pos += 1;
                let name = match self.bump() {
                    Some(Tok::Ident(n)) => n,
                    _ => return Err(err(self.line(), "expected identifier after `let`")),
                };
                self.expect(&Tok::Op("="), "`=`")?;
                Ok(Stmt::Let(name, self.expr()?))
            }
            Some(Tok::Print) => {
                self.pos += 1;
                self.expect(&Tok::LParen, "`(` after print")?;
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(Stmt::Print(e))
            }
            _ => Ok(Stmt::Expr(self.expr()?)),
        }
    }

    fn expr(&mut self) -> Result<Expr, CompileError> {
        let mut lhs = self.additive()?;
        while let Some(Tok::Op(op)) = self.peek() {
            let op = match *op {
                "<" => BinOp::Lt,
                "<=" => BinOp::Le,
                ">" => BinOp::Gt,
                ">=" => BinOp::Ge,
                "==" => BinOp::Eq,
                "!=" => BinOp::Ne,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.additive()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, CompileError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op)) = self.peek() {
            let op = match *op {
                "+" => BinOp::Add,
                "-" => BinOp::Sub,
                "++" => BinOp::Concat,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, CompileError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op)) = self.peek() {
            let op = match *op {
                "*" => BinOp::Mul,
                "/" => BinOp::Div,
                "%" => BinOp::Rem,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, CompileError> {
        if self.peek() == Some(&Tok::Op("-")) {
            self.pos += 1;
            // A minus directly applied to a numeric literal is part of the literal.
            match self.peek() {
                Some(Tok::Int(v)) => {
                    let v = *v;
                    self.pos += 1;
                    let n = if v == 1 << 63 {
                        i64::MIN
                    } else {
                        i64::try_from(v)
                            .map_err(|_| err(self.line(), "integer literal out of range"))?
                            .wrapping_neg()
                    };
                    return Ok(Expr::Int(n));
                }
                Some(Tok::Float(v)) => {
                    let v = *v;
                    self.pos += 1;
                    return Ok(Expr::Float(-v));
                }
                _ => return Ok(Expr::Neg(alloc::boxed::Box::new(self.unary()?))),
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, CompileError> {
        let line = self.line();
        match self.bump() {
            Some(Tok::Int(v)) => i64::try_from(v)
                .map(Expr::Int)
                .map_err(|_| err(line, "integer literal out of range")),
            Some(Tok::Float(v)) => Ok(Expr::Float(v)),
            Some(Tok::Str(s)) => Ok(Expr::Str(s)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let mut args = Vec::new();
                    if self.peek() != Some(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.peek() == Some(&Tok::Comma) {
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(&Tok::RParen, "`)` after arguments")?;
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            _ => Err(err(line, "expected expression")),
        }
    }
}

/// Parses and statically checks a program: every variable is bound before
/// use and every call names a builtin with the right arity. Empty programs
/// are rejected.
pub fn parse_program(src: &str) -> Result<Program, CompileError> {
    let toks = lex(src)?;
    let mut parser = Parser { toks, pos: 0 };
    let program = parser.program()?;
    if program.stmts.is_empty() {
        return Err(err(1, "empty program"));
    }
    check(&program)?;
    Ok(program)
}

fn check(program: &Program) -> Result<(), CompileError> {
    let mut bound: BTreeSet<&str> = BTreeSet::new();
    for (idx, stmt) in program.stmts.iter().enumerate() {
        check_expr(stmt.expr(), &bound, idx + 1)?;
        if let Stmt::Let(name, _) = stmt {
            bound.insert(name);
        }
    }
    Ok(())
}

fn check_expr(e: &Expr, bound: &BTreeSet<&str>, stmt_no: usize) -> Result<(), CompileError> {
    match e {
        Expr::Int(_) | Expr::Float(_) | Expr::Str(_) => Ok(()),
        Expr::Var(v) if bound.contains(v.as_str()) => Ok(()),
        Expr::Var(v) => Err(err(stmt_no, format!("undefined variable `{v}`"))),
        Expr::Neg(inner) => check_expr(inner, bound, stmt_no),
        Expr::Binary(_, l, r) => {
            check_expr(l, bound, stmt_no)?;
            check_expr(r, bound, stmt_no)
        }
        Expr::Call(name, args) => {
            match builtin_arity(name) {
                None => return Err(err(stmt_no, format!("unknown function `{name}`"))),
                Some(n) if n != args.len() => {
                    return Err(err(
                        stmt_no,
                        format!("`{name}` takes {n} argument(s), got {}", args.len()),
                    ))
                }
                Some(_) => {}
            }
            args.iter().try_for_each(|a| check_expr(a, bound, stmt_no))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_statements_and_precedence() {
        let p = parse_program("let a = 1 + 2 * 3; print(a)").unwrap();
        assert_eq!(p.stmts.len(), 2);
        assert_eq!(
            p.stmts[0],
            Stmt::Let(
                "a".into(),
                Expr::binary(
                    BinOp::Add,
                    Expr::Int(1),
                    Expr::binary(BinOp::Mul, Expr::Int(2), Expr::Int(3))
                )
            )
        );
    }

    #[test]
    fn negative_literals_are_not_negations() {
        let p = parse_program("print(-5)\nprint(-(-5))").unwrap();
        assert_eq!(p.stmts[0], Stmt::Print(Expr::Int(-5)));
        assert_eq!(p.stmts[1], Stmt::Print(Expr::Neg(alloc::boxed::Box::new(Expr::Int(-5)))));
        let p = parse_program("print(-9223372036854775808)").unwrap();
        assert_eq!(p.stmts[0], Stmt::Print(Expr::Int(i64::MIN)));
    }

    #[test]
    fn rejects_bad_programs() {
        assert!(parse_program("").is_err());
        assert!(parse_program("  // only a comment\n").is_err());
        assert!(parse_program("print(y)").is_err());
        assert!(parse_program("let x = x + 1").is_err());
        assert!(parse_program("print(nope(1))").is_err());
        assert!(parse_program("print(fma(1, 2))").is_err());
        assert!(parse_program("let = 3").is_err());
        assert!(parse_program("print(\"open").is_err());
        assert!(parse_program("print(1) print(2)").is_err());
        assert!(parse_program("print(1 @ 2)").is_err());
    }

    #[test]
    fn comments_and_strings() {
        let p = parse_program("// header\nlet s = \"a\\\"b\"; print(s ++ s) // tail").unwrap();
        assert_eq!(p.stmts[0], Stmt::Let("s".into(), Expr::Str("a\"b".into())));
    }
}
