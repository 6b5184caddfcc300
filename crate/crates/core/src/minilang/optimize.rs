//! Pass pipeline driver. Expression passes run bottom-up on every node in a
//! fixed order; dead-store removal runs once over the statement list.

use alloc::string::String;
use alloc::vec::Vec;

use super::ast::{Expr, Program};
use super::passes::{arith, compare, fusion, stmt};

/// Activation sink shared by the passes.
#[derive(Debug, Default)]
pub struct PassCtx {
    pub planted_bugs: bool,
    /// Set by the planted crash in the fusion pass.
    pub fused_crash_armed: bool,
    activations: Vec<&'static str>,
}

impl PassCtx {
    pub fn new(planted_bugs: bool) -> Self {
        Self {
            planted_bugs,
            ..Self::default()
        }
    }

    pub fn hit(&mut self, pass: &'static str) {
        self.activations.push(pass);
    }

    pub fn activations(&self) -> &[&'static str] {
        &self.activations
    }
}

type ExprPass = fn(&Expr, &mut PassCtx) -> Option<Expr>;

const EXPR_PASSES: &[ExprPass] = &[
    arith::const_fold,
    arith::add_zero_elim,
    arith::mul_one_elim,
    arith::neg_neg_elim,
    compare::cmp_chain_simplify,
    fusion::repeat_concat_fuse,
    fusion::mul_add_fuse,
];

/// Names of every instrumented pass, in pipeline order.
pub const PASS_NAMES: &[&str] = &[
    "const_fold",
    "add_zero_elim",
    "mul_one_elim",
    "neg_neg_elim",
    "cmp_chain_simplify",
    "repeat_concat_fuse",
    "mul_add_fuse",
    "dead_store_elim",
];

const MAX_REWRITES_PER_NODE: usize = 16;

fn rewrite(e: Expr, ctx: &mut PassCtx) -> Expr {
    let mut e = match e {
        Expr::Neg(inner) => Expr::Neg(alloc::boxed::Box::new(rewrite(*inner, ctx))),
        Expr::Binary(op, l, r) => Expr::binary(op, rewrite(*l, ctx), rewrite(*r, ctx)),
        Expr::Call(name, args) => {
            Expr::Call(name, args.into_iter().map(|a| rewrite(a, ctx)).collect())
        }
        leaf => leaf,
    };
    for _ in 0..MAX_REWRITES_PER_NODE {
        match EXPR_PASSES.iter().find_map(|pass| pass(&e, ctx)) {
            Some(next) => e = next,
            None => break,
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub program: Program,
    /// One `WFOPT <name>` line per pass activation, in activation order.
    pub trigger_log: Vec<String>,
    pub fused_crash_armed: bool,
}

pub fn optimize(program: &Program, planted_bugs: bool) -> Optimized {
    let mut ctx = PassCtx::new(planted_bugs);
    let mut out = program.clone();
    for s in &mut out.stmts {
        let e = core::mem::replace(s.expr_mut(), Expr::Int(0));
        *s.expr_mut() = rewrite(e, &mut ctx);
    }
    stmt::dead_store_elim(&mut out.stmts, &mut ctx);
    let trigger_log = ctx
        .activations()
        .iter()
        .map(|name| alloc::format!("{}{name}", crate::sut::TRIGGER_PREFIX))
        .collect();
    Optimized {
        program: out,
        trigger_log,
        fused_crash_armed: ctx.fused_crash_armed,
    }
}
