//! Reference interpreter. Baseline runs interpret the parsed program as is;
//! optimized runs interpret the output of the pass pipeline.

use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;

use super::ast::{BinOp, Expr, Program, Stmt};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            // Debug keeps the trailing `.0`, so floats never print like ints.
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuntimeError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow in `{0}`")]
    Overflow(&'static str),
    #[error("non-finite float result in `{0}`")]
    NonFinite(&'static str),
    #[error("type mismatch: `{op}` on {lhs} and {rhs}")]
    TypeMismatch {
        op: &'static str,
        lhs: &'static str,
        rhs: &'static str,
    },
    #[error("negative repeat count {0}")]
    NegativeRepeat(i64),
    #[error("out of fuel")]
    OutOfFuel,
}

fn mismatch(op: BinOp, a: &Value, b: &Value) -> RuntimeError {
    RuntimeError::TypeMismatch {
        op: op.symbol(),
        lhs: a.type_name(),
        rhs: b.type_name(),
    }
}

fn finite(op: BinOp, x: f64) -> Result<Value, RuntimeError> {
    if x.is_finite() {
        Ok(Value::Float(x))
    } else {
        Err(RuntimeError::NonFinite(op.symbol()))
    }
}

fn bool_value(b: bool) -> Value {
    Value::Int(i64::from(b))
}

/// Semantics of every binary operator. Mixed int/float arithmetic is a type
/// error, float results must stay finite, and comparisons yield `0` or `1`.
pub fn apply_binary(op: BinOp, a: Value, b: Value) -> Result<Value, RuntimeError> {
    use BinOp::*;
    let overflow = || RuntimeError::Overflow(op.symbol());
    match (op, &a, &b) {
        (Concat, Value::Str(x), Value::Str(y)) => {
            let mut s = String::with_capacity(x.len() + y.len());
            s.push_str(x);
            s.push_str(y);
            Ok(Value::Str(s))
        }
        (Concat, _, _) => Err(mismatch(op, &a, &b)),
        (Add | Sub | Mul | Div | Rem, Value::Int(x), Value::Int(y)) => {
            let (x, y) = (*x, *y);
            let r = match op {
                Add => x.checked_add(y).ok_or_else(overflow)?,
                Sub => x.checked_sub(y).ok_or_else(overflow)?,
                Mul => x.checked_mul(y).ok_or_else(overflow)?,
                Div | Rem if y == 0 => return Err(RuntimeError::DivisionByZero),
                Div => x.checked_div(y).ok_or_else(overflow)?,
                _ => x.checked_rem(y).ok_or_else(overflow)?,
            };
            Ok(Value::Int(r))
        }
        (Add | Sub | Mul | Div | Rem, Value::Float(x), Value::Float(y)) => {
            let (x, y) = (*x, *y);
            match op {
                Add => finite(op, x + y),
                Sub => finite(op, x - y),
                Mul => finite(op, x * y),
                Div | Rem if y == 0.0 => Err(RuntimeError::DivisionByZero),
                Div => finite(op, x / y),
                _ => finite(op, x % y),
            }
        }
        (Add | Sub | Mul | Div | Rem, _, _) => Err(mismatch(op, &a, &b)),
        (Lt | Le | Gt | Ge | Eq | Ne, _, _) => {
            let ord = match (&a, &b) {
                (Value::Int(x), Value::Int(y)) => x.cmp(y),
                (Value::Str(x), Value::Str(y)) => x.cmp(y),
                // Floats are always finite, so partial_cmp never fails.
                (Value::Float(x), Value::Float(y)) => {
                    x.partial_cmp(y).ok_or(RuntimeError::NonFinite(op.symbol()))?
                }
                _ => return Err(mismatch(op, &a, &b)),
            };
            Ok(bool_value(match op {
                Lt => ord.is_lt(),
                Le => ord.is_le(),
                Gt => ord.is_gt(),
                Ge => ord.is_ge(),
                Eq => ord.is_eq(),
                _ => ord.is_ne(),
            }))
        }
    }
}

pub fn apply_neg(v: Value) -> Result<Value, RuntimeError> {
    match v {
        Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(RuntimeError::Overflow("-")),
        Value::Float(x) => Ok(Value::Float(-x)),
        Value::Str(_) => Err(RuntimeError::TypeMismatch {
            op: "-",
            lhs: "str",
            rhs: "str",
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecLimits {
    pub fuel: u64,
    pub max_output: usize,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            fuel: 10_000_000,
            max_output: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExecOutcome {
    Finished,
    Error(RuntimeError),
    /// `crash_if_fused()` executed while armed.
    Aborted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub stdout: String,
    pub truncated: bool,
    pub outcome: ExecOutcome,
}

enum Stop {
    Error(RuntimeError),
    Abort,
}

impl From<RuntimeError> for Stop {
    fn from(e: RuntimeError) -> Self {
        Stop::Error(e)
    }
}

struct Machine<'a> {
    env: alloc::collections::BTreeMap<&'a str, Value>,
    fuel: u64,
    limits: ExecLimits,
    crash_armed: bool,
    stdout: String,
    truncated: bool,
}

impl<'a> Machine<'a> {
    fn burn(&mut self, amount: u64) -> Result<(), Stop> {
        self.fuel = self
            .fuel
            .checked_sub(amount)
            .ok_or(Stop::Error(RuntimeError::OutOfFuel))?;
        Ok(())
    }

    fn emit(&mut self, v: &Value) {
        if self.truncated {
            return;
        }
        let line = format!("{v}\n");
        let room = self.limits.max_output.saturating_sub(self.stdout.len());
        if line.len() > room {
            let mut cut = room;
            while !line.is_char_boundary(cut) {
                cut -= 1;
            }
            self.stdout.push_str(&line[..cut]);
            self.truncated = true;
        } else {
            self.stdout.push_str(&line);
        }
    }

    fn eval(&mut self, e: &'a Expr) -> Result<Value, Stop> {
        self.burn(1)?;
        match e {
            Expr::Int(i) => Ok(Value::Int(*i)),
            Expr::Float(x) => Ok(Value::Float(*x)),
            Expr::Str(s) => Ok(Value::Str(s.clone())),
            // Static checking guarantees the binding exists.
            Expr::Var(v) => Ok(self.env.get(v.as_str()).cloned().unwrap_or(Value::Int(0))),
            Expr::Neg(inner) => {
                let v = self.eval(inner)?;
                Ok(apply_neg(v)?)
            }
            Expr::Binary(op, l, r) => {
                let a = self.eval(l)?;
                let b = self.eval(r)?;
                if *op == BinOp::Concat {
                    if let (Value::Str(x), Value::Str(y)) = (&a, &b) {
                        self.burn((x.len() + y.len()) as u64)?;
                    }
                }
                Ok(apply_binary(*op, a, b)?)
            }
            Expr::Call(name, args) => self.call(name, args),
        }
    }

    fn call(&mut self, name: &str, args: &'a [Expr]) -> Result<Value, Stop> {
        match (name, args) {
            ("fma", [a, b, c]) => {
                let (a, b, c) = (self.eval(a)?, self.eval(b)?, self.eval(c)?);
                let prod = apply_binary(BinOp::Mul, a, b)?;
                Ok(apply_binary(BinOp::Add, prod, c)?)
            }
            ("repeat", [s, n]) => match (self.eval(s)?, self.eval(n)?) {
                (Value::Str(s), Value::Int(n)) => {
                    let count = usize::try_from(n).map_err(|_| RuntimeError::NegativeRepeat(n))?;
                    self.burn((s.len() as u64).saturating_mul(count as u64))?;
                    Ok(Value::Str(s.repeat(count)))
                }
                (a, b) => Err(mismatch(BinOp::Concat, &a, &b).into()),
            },
            ("str", [v]) => {
                let s = self.eval(v)?.to_string();
                self.burn(s.len() as u64)?;
                Ok(Value::Str(s))
            }
            ("len", [v]) => match self.eval(v)? {
                Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
                other => Err(mismatch(BinOp::Concat, &other, &other).into()),
            },
            ("crash_if_fused", []) => {
                if self.crash_armed {
                    Err(Stop::Abort)
                } else {
                    Ok(Value::Int(0))
                }
            }
            // Unreachable for checked programs.
            _ => Ok(Value::Int(0)),
        }
    }

    fn run(&mut self, program: &'a Program) -> Result<(), Stop> {
        for stmt in &program.stmts {
            match stmt {
                Stmt::Let(name, e) => {
                    let v = self.eval(e)?;
                    self.env.insert(name, v);
                }
                Stmt::Print(e) => {
                    let v = self.eval(e)?;
                    self.emit(&v);
                }
                Stmt::Expr(e) => {
                    self.eval(e)?;
                }
            }
        }
        Ok(())
    }
}

pub fn execute(program: &Program, crash_armed: bool, limits: ExecLimits) -> Execution {
    let mut m = Machine {
        env: alloc::collections::BTreeMap::new(),
        fuel: limits.fuel,
        limits,
        crash_armed,
        stdout: String::new(),
        truncated: false,
    };
    let outcome = match m.run(program) {
        Ok(()) => ExecOutcome::Finished,
        Err(Stop::Error(e)) => ExecOutcome::Error(e),
        Err(Stop::Abort) => ExecOutcome::Aborted,
    };
    Execution {
        stdout: m.stdout,
        truncated: m.truncated,
        outcome,
    }
}
