
use crate::minilang::ast::{BinOp, Expr};
use crate::minilang::interp::{apply_binary, apply_neg, Value};
use crate::minilang::optimize::PassCtx;

fn is_const(e: &Expr, value: i64) -> bool {
    matches!(e, Expr::Int(v) if *v == value)
}

fn literal(e: &Expr) -> Option<Value> {
    match e {
        Expr::Int(v) => Some(Value::Int(*v)),
        Expr::Float(v) => Some(Value::Float(*v)),
        _ => None,
    }
}

fn to_expr(v: Value) -> Option<Expr> {
    match v {
        Value::Int(i) => Some(Expr::Int(i)),
        Value::Float(f) => Some(Expr::Float(f)),
        Value::Str(_) => None,
    }
}

/// Evaluates arithmetic and comparisons whose operands are numeric literals.
/// Operations that would fail at run time are left in place.
pub fn const_fold(e: &Expr, ctx: &mut PassCtx) -> Option<Expr> {
    let value = match e {
        Expr::Binary(op, l, r) if *op != BinOp::Concat => {
            let (a, b) = (literal(l)?, literal(r)?);
            apply_binary(*op, a, b).ok()?
        }
        Expr::Neg(inner) => apply_neg(literal(inner)?).ok()?,
        _ => return None,
    };
    let out = to_expr(value)?;
    ctx.hit("const_fold");
    Some(out)
}

/// `x + 0` and `0 + x` become `x`.
pub fn add_zero_elim(e: &Expr, ctx: &mut PassCtx) -> Option<Expr> {
    let Expr::Binary(BinOp::Add, l, r) = e else {
        return None;
    };
    let kept = if is_const(r, 0) {
        l
    } else if is_const(l, 0) {
        r
    } else {
        return None;
    };
    ctx.hit("add_zero_elim");
    Some(Expr::clone(kept))
}

/// `x * 1` and `1 * x` become `x`.
pub fn mul_one_elim(e: &Expr, ctx: &mut PassCtx) -> Option<Expr> {
    let Expr::Binary(BinOp::Mul, l, r) = e else {
        return None;
    };
    let kept = if is_const(r, 1) {
        l
    } else if is_const(l, 1) {
        r
    } else {
        return None;
    };
    ctx.hit("mul_one_elim");
    Some(Expr::clone(kept))
}

pub fn neg_neg_elim(e: &Expr, ctx: &mut PassCtx) -> Option<Expr> {
    let Expr::Neg(outer) = e else {
        return None;
    };
    let Expr::Neg(inner) = outer.as_ref() else {
        return None;
    };
    ctx.hit("neg_neg_elim");
    Some(Expr::clone(inner))
}
