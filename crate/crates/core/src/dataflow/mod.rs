//! Control flow and def-use information.
//!
//! Each method gets a statement-level CFG with a synthetic exit node; the
//! call graph links developer-method call statements to their callees.
//! Reaching definitions are computed per method with method parameters
//! defined at entry. Inter-procedural value flow is left to the slicer.

mod cfg;
mod chains;

pub use cfg::{build_icfg, Icfg, MethodCfg};
pub use chains::{compute_chains, DefSite, DefUseChains, MethodChains};

use std::fmt::Write;

use crate::ir::Package;

/// Text listing of every CFG, call edge and UD chain, for debugging.
pub fn dump(pkg: &Package, icfg: &Icfg, chains: &DefUseChains) -> String {
    let mut out = String::new();
    for (id, _, m) in pkg.methods() {
        let cfg = icfg.cfg(id);
        writeln!(out, "method {}({})", pkg.location(id), m.params.join(", ")).unwrap();
        for (i, stmt) in m.body.iter().enumerate() {
            let succ: Vec<String> = cfg
                .succs(i)
                .iter()
                .map(|&s| {
                    if s == cfg.exit() {
                        "exit".to_string()
                    } else {
                        s.to_string()
                    }
                })
                .collect();
            writeln!(out, "  {i:>3}: {stmt}  -> [{}]", succ.join(", ")).unwrap();
            for var in stmt.used_vars() {
                let defs: Vec<String> = chains
                    .ud(crate::ir::StmtRef::new(id, i), var)
                    .map(|d| d.to_string())
                    .collect();
                writeln!(out, "       ud({var}) = {{{}}}", defs.join(", ")).unwrap();
            }
            if let Some(callee) = icfg.callee(crate::ir::StmtRef::new(id, i)) {
                writeln!(out, "       calls {}", pkg.location(callee)).unwrap();
            }
        }
    }
    out
}
