use alloc::string::String;
use alloc::vec;

use crate::minilang::ast::{BinOp, Expr};
use crate::minilang::optimize::PassCtx;

fn same_var<'a>(a: &'a Expr, b: &Expr) -> Option<&'a String> {
    match (a, b) {
        (Expr::Var(x), Expr::Var(y)) if x == y => Some(x),
        _ => None,
    }
}

/// `a * b + c` becomes `fma(a, b, c)`.
pub fn mul_add_fuse(e: &Expr, ctx: &mut PassCtx) -> Option<Expr> {
    let Expr::Binary(BinOp::Add, l, c) = e else {
        return None;
    };
    let Expr::Binary(BinOp::Mul, a, b) = l.as_ref() else {
        return None;
    };
    ctx.hit("mul_add_fuse");
    if ctx.planted_bugs {
        // Planted crash: the lowered program aborts at `crash_if_fused()`.
        ctx.fused_crash_armed = true;
    }
    Some(Expr::Call(
        "fma".into(),
        vec![Expr::clone(a), Expr::clone(b), Expr::clone(c)],
    ))
}

/// `s ++ s` becomes `repeat(s, 2)`, and `repeat(s, n) ++ s` becomes
/// `repeat(s, n + 1)`, so longer chains collapse bottom-up.
pub fn repeat_concat_fuse(e: &Expr, ctx: &mut PassCtx) -> Option<Expr> {
    let Expr::Binary(BinOp::Concat, l, r) = e else {
        return None;
    };
    let (var, count) = if let Some(v) = same_var(l, r) {
        (v.clone(), 2)
    } else {
        match (l.as_ref(), r.as_ref()) {
            (Expr::Call(name, args), Expr::Var(v)) if name == "repeat" => match args.as_slice() {
                [Expr::Var(x), Expr::Int(n)] if x == v => (v.clone(), n.checked_add(1)?),
                _ => return None,
            },
            _ => return None,
        }
    };
    ctx.hit("repeat_concat_fuse");
    Some(Expr::Call("repeat".into(), vec![Expr::Var(var), Expr::Int(count)]))
}
