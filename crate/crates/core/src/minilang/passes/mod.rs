//! Instrumented MiniLang optimization passes.
//!
//! Every pass reports each activation through [`PassCtx::hit`], which the
//! driver turns into a `WFOPT <name>` trigger line. This directory is also the
//! source root scanned by the optimization collector, so helpers here avoid
//! pass-like vocabulary in their names and bodies.
//!
//! Planted bugs (only active when `planted_bugs` is set):
//! - `cmp_chain_simplify` negates `<` into `>` instead of `>=`, a
//!   miscompilation visible when both operands are equal. Trigger program:
//!   `let a = 1; let b = 1; print((a < b) == 0)`.
//! - `mul_add_fuse` arms the `crash_if_fused()` intrinsic, which then aborts
//!   the optimized program at run time. Trigger program:
//!   `let a = 2; let b = 3; let c = 4; print(a * b + c); crash_if_fused()`.
//!
//! [`PassCtx::hit`]: crate::minilang::optimize::PassCtx::hit

pub mod arith;
pub mod compare;
pub mod fusion;
pub mod stmt;
