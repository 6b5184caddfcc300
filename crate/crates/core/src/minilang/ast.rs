use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Concat,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Concat => "++",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Float(f64),
    Str(String),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// True when evaluating the expression has no observable effect beyond
    /// its value (or a runtime error).
    pub fn is_pure(&self) -> bool {
        match self {
            Expr::Int(_) | Expr::Float(_) | Expr::Str(_) | Expr::Var(_) => true,
            Expr::Neg(e) => e.is_pure(),
            Expr::Binary(_, l, r) => l.is_pure() && r.is_pure(),
            Expr::Call(name, args) => {
                name != "crash_if_fused" && args.iter().all(Expr::is_pure)
            }
        }
    }

    pub fn reads(&self, var: &str) -> bool {
        match self {
            Expr::Var(v) => v == var,
            Expr::Int(_) | Expr::Float(_) | Expr::Str(_) => false,
            Expr::Neg(e) => e.reads(var),
            Expr::Binary(_, l, r) => l.reads(var) || r.reads(var),
            Expr::Call(_, args) => args.iter().any(|a| a.reads(var)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Let(String, Expr),
    Print(Expr),
    Expr(Expr),
}

impl Stmt {
    pub fn expr(&self) -> &Expr {
        match self {
            Stmt::Let(_, e) | Stmt::Print(e) | Stmt::Expr(e) => e,
        }
    }

    pub fn expr_mut(&mut self) -> &mut Expr {
        match self {
            Stmt::Let(_, e) | Stmt::Print(e) | Stmt::Expr(e) => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub stmts: Vec<Stmt>,
}

/// Builtin functions and their arities.
pub const BUILTINS: &[(&str, usize)] = &[
    ("fma", 3),
    ("repeat", 2),
    ("str", 1),
    ("len", 1),
    ("crash_if_fused", 0),
];

pub fn builtin_arity(name: &str) -> Option<usize> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, a)| *a)
}
