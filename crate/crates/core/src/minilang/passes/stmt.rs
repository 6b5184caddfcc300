use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::minilang::ast::{Expr, Stmt};
use crate::minilang::optimize::PassCtx;

fn vars_read(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Var(v) => {
            out.insert(v.clone());
        }
        Expr::Int(_) | Expr::Float(_) | Expr::Str(_) => {}
        Expr::Neg(inner) => vars_read(inner, out),
        Expr::Binary(_, l, r) => {
            vars_read(l, out);
            vars_read(r, out);
        }
        Expr::Call(_, args) => args.iter().for_each(|a| vars_read(a, out)),
    }
}

/// Removes `let` bindings with pure initializers that are never read before
/// being rebound or before the end of the program. One backward liveness
/// sweep, so chains of dead bindings disappear together.
pub fn dead_store_elim(stmts: &mut Vec<Stmt>, ctx: &mut PassCtx) -> bool {
    let mut live: BTreeSet<String> = BTreeSet::new();
    let mut keep = alloc::vec![true; stmts.len()];
    for (idx, stmt) in stmts.iter().enumerate().rev() {
        match stmt {
            Stmt::Let(name, init) => {
                if !live.contains(name) && init.is_pure() {
                    keep[idx] = false;
                    ctx.hit("dead_store_elim");
                    continue;
                }
                live.remove(name);
                vars_read(init, &mut live);
            }
            Stmt::Print(e) | Stmt::Expr(e) => vars_read(e, &mut live),
        }
    }
    let before = stmts.len();
    let mut flags = keep.into_iter();
    stmts.retain(|_| flags.next().unwrap_or(true));
    stmts.len() != before
}
