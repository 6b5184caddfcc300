use crate::minilang::ast::{BinOp, Expr};
use crate::minilang::optimize::PassCtx;

fn negate(op: BinOp) -> BinOp {
    match op {
        BinOp::Lt => BinOp::Ge,
        BinOp::Le => BinOp::Gt,
        BinOp::Gt => BinOp::Le,
        BinOp::Ge => BinOp::Lt,
        BinOp::Eq => BinOp::Ne,
        BinOp::Ne => BinOp::Eq,
        other => other,
    }
}

/// Comparing a comparison against a boolean constant collapses into a single
/// comparison: `(a < b) == 1` is `a < b`, `(a < b) == 0` is `a >= b`, and
/// likewise for `!=`.
pub fn cmp_chain_simplify(e: &Expr, ctx: &mut PassCtx) -> Option<Expr> {
    let Expr::Binary(outer @ (BinOp::Eq | BinOp::Ne), inner, flag) = e else {
        return None;
    };
    let Expr::Binary(op, a, b) = inner.as_ref() else {
        return None;
    };
    if !op.is_comparison() {
        return None;
    }
    let keep_sense = match (outer, flag.as_ref()) {
        (BinOp::Eq, Expr::Int(1)) | (BinOp::Ne, Expr::Int(0)) => true,
        (BinOp::Eq, Expr::Int(0)) | (BinOp::Ne, Expr::Int(1)) => false,
        _ => return None,
    };
    let new_op = if keep_sense {
        *op
    } else if ctx.planted_bugs && *op == BinOp::Lt {
        // Planted miscompilation: off by one on equal operands.
        BinOp::Gt
    } else {
        negate(*op)
    };
    ctx.hit("cmp_chain_simplify");
    Some(Expr::binary(new_op, Expr::clone(a), Expr::clone(b)))
}
