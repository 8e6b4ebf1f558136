//! Click-site location and backward slicing into data-dependency graphs.
//!
//! A click site pairs a `MotionEvent.obtain`-style constructor with the
//! dispatch call its event reaches. Two root groups are sliced per site: the
//! x/y arguments of the constructor and the operands of the branches that
//! guard the dispatch.

mod ddg;
mod sites;

pub use ddg::{build_ddg, Ddg, DdgNode, SliceError, SliceLimits, Slicer};
pub use sites::{locate_click_sites, ClickSite};

use std::fmt::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::ir::{Package, StmtRef};

/// An operand read by a statement; `slot` indexes [`crate::ir::Statement::operands`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SliceRoot {
    pub at: StmtRef,
    pub slot: usize,
}

impl SliceRoot {
    pub fn new(at: StmtRef, slot: usize) -> Self {
        Self { at, slot }
    }
}

/// Wall-clock cut-off for one package.
#[derive(Debug, Clone, Copy)]
pub struct Deadline(Instant);

impl Deadline {
    pub fn after(budget: Duration) -> Self {
        Self(Instant::now() + budget)
    }

    pub fn expired(&self) -> bool {
        Instant::now() >= self.0
    }
}

/// Line-oriented dump: one `node`, `root` or `edge` record per line.
pub fn ddg_to_text(ddg: &Ddg, pkg: &Package) -> String {
    let mut out = String::new();
    for (i, n) in ddg.nodes().iter().enumerate() {
        writeln!(out, "node {i} {n} | {}", n.short_label(pkg)).unwrap();
    }
    for r in ddg.root_indices() {
        writeln!(out, "root {r}").unwrap();
    }
    for (a, b) in ddg.edge_indices() {
        writeln!(out, "edge {a} {b}").unwrap();
    }
    if ddg.oversized {
        out.push_str("flag oversized\n");
    }
    if ddg.depth_exceeded {
        out.push_str("flag depth_exceeded\n");
    }
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz digraph; roots are drawn with a double border.
pub fn ddg_to_dot(ddg: &Ddg, pkg: &Package, name: &str) -> String {
    let mut out = format!("digraph \"{}\" {{\n  rankdir=TB;\n", dot_escape(name));
    let roots: Vec<usize> = ddg.root_indices().collect();
    for (i, n) in ddg.nodes().iter().enumerate() {
        let shape = match n {
            DdgNode::Const { .. } => "plaintext",
            DdgNode::Api { .. } => "box",
            DdgNode::VarDef { .. } => "ellipse",
            DdgNode::Param { .. } => "diamond",
        };
        let peripheries = if roots.contains(&i) { 2 } else { 1 };
        writeln!(
            out,
            "  n{i} [shape={shape}, peripheries={peripheries}, label=\"{}\"];",
            dot_escape(&n.short_label(pkg))
        )
        .unwrap();
    }
    for (a, b) in ddg.edge_indices() {
        writeln!(out, "  n{a} -> n{b};").unwrap();
    }
    out.push_str("}\n");
    out
}
