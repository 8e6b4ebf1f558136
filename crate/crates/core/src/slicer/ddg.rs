use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataflow::{DefSite, DefUseChains, Icfg};
use crate::ir::{MethodId, Operand, Package, Statement, StmtRef};

use super::{Deadline, SliceRoot};

/// A node of the data-dependency graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DdgNode {
    /// A literal operand, identified by the statement and operand slot it
    /// appears in.
    Const { at: StmtRef, slot: usize, value: String },
    /// The result of a call that does not resolve to a developer method.
    Api { at: StmtRef, api: String },
    /// A statement assigning a variable.
    VarDef { at: StmtRef },
    /// A method parameter, defined at method entry.
    Param { method: MethodId, position: usize },
}

impl DdgNode {
    pub fn short_label(&self, pkg: &Package) -> String {
        match self {
            DdgNode::Const { value, .. } => value.clone(),
            DdgNode::Api { api, .. } => api.clone(),
            DdgNode::VarDef { at } => pkg.statement(*at).to_string(),
            DdgNode::Param { method, position } => {
                format!("{}#{}", pkg.location(*method), pkg.method(*method).params[*position])
            }
        }
    }
}

impl fmt::Display for DdgNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let loc = |s: &StmtRef| format!("m{}.{}:{}", s.method.class, s.method.method, s.index);
        match self {
            DdgNode::Const { at, slot, value } => write!(f, "const {}/{} {}", loc(at), slot, value),
            DdgNode::Api { at, api } => write!(f, "api {} {}", loc(at), api),
            DdgNode::VarDef { at } => write!(f, "def {}", loc(at)),
            DdgNode::Param { method, position } => {
                write!(f, "param m{}.{}#{}", method.class, method.method, position)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceLimits {
    pub max_depth: usize,
    pub max_nodes: usize,
}

impl Default for SliceLimits {
    fn default() -> Self {
        Self {
            max_depth: 10,
            max_nodes: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SliceError {
    #[error("analysis deadline expired while slicing")]
    TimedOut,
}

/// Backward slice rooted at a group of operands. Edges point from a node to
/// the nodes its value depends on.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ddg {
    nodes: Vec<DdgNode>,
    #[serde(skip)]
    index: HashMap<DdgNode, usize>,
    edges: BTreeSet<(usize, usize)>,
    roots: BTreeSet<usize>,
    /// The node budget stopped expansion.
    pub oversized: bool,
    /// The call-depth budget stopped expansion somewhere.
    pub depth_exceeded: bool,
}

impl Ddg {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[DdgNode] {
        &self.nodes
    }

    pub fn node_set(&self) -> BTreeSet<DdgNode> {
        self.nodes.iter().cloned().collect()
    }

    pub fn roots(&self) -> impl Iterator<Item = &DdgNode> {
        self.roots.iter().map(|&i| &self.nodes[i])
    }

    pub fn edges(&self) -> impl Iterator<Item = (&DdgNode, &DdgNode)> {
        self.edges.iter().map(|&(a, b)| (&self.nodes[a], &self.nodes[b]))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn root_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.roots.iter().copied()
    }

    pub fn contains(&self, node: &DdgNode) -> bool {
        self.index.contains_key(node)
    }

    pub fn flagged(&self) -> bool {
        self.oversized || self.depth_exceeded
    }

    fn intern(&mut self, node: DdgNode) -> (usize, bool) {
        if let Some(&i) = self.index.get(&node) {
            return (i, false);
        }
        let i = self.nodes.len();
        self.index.insert(node.clone(), i);
        self.nodes.push(node);
        (i, true)
    }
}

/// Nodes for an operand read at `at` (slot = position in
/// [`Statement::operands`]).
fn operand_nodes(pkg: &Package, chains: &DefUseChains, at: StmtRef, slot: usize, out: &mut Vec<DdgNode>) {
    let stmt = pkg.statement(at);
    let Some(op) = stmt.operands().get(slot).copied() else {
        return;
    };
    match op {
        Operand::Lit(l) => out.push(DdgNode::Const {
            at,
            slot,
            value: l.to_string(),
        }),
        Operand::View(_) => {}
        Operand::Var(v) => {
            for def in chains.ud(at, v) {
                out.push(match def {
                    DefSite::Stmt(i) => DdgNode::VarDef {
                        at: StmtRef::new(at.method, i),
                    },
                    DefSite::Param(p) => DdgNode::Param {
                        method: at.method,
                        position: p,
                    },
                });
            }
        }
    }
}

/// Operand slot of call argument `k`, accounting for an explicit receiver.
pub(crate) fn arg_slot(stmt: &Statement, k: usize) -> Option<usize> {
    match stmt {
        Statement::Call { receiver, args, .. } if k < args.len() => Some(k + usize::from(receiver.is_some())),
        _ => None,
    }
}

pub struct Slicer<'a> {
    pkg: &'a Package,
    icfg: &'a Icfg,
    chains: &'a DefUseChains,
    limits: SliceLimits,
    deadline: Option<&'a Deadline>,
}

impl<'a> Slicer<'a> {
    pub fn new(pkg: &'a Package, icfg: &'a Icfg, chains: &'a DefUseChains, limits: SliceLimits) -> Self {
        Self {
            pkg,
            icfg,
            chains,
            limits,
            deadline: None,
        }
    }

    pub fn with_deadline(mut self, deadline: Option<&'a Deadline>) -> Self {
        self.deadline = deadline;
        self
    }

    /// Resolves root operands to their initial nodes.
    pub fn root_nodes(&self, roots: &[SliceRoot]) -> Vec<DdgNode> {
        let mut out = Vec::new();
        for r in roots {
            operand_nodes(self.pkg, self.chains, r.at, r.slot, &mut out);
        }
        out
    }

    pub fn build(&self, roots: &[SliceRoot]) -> Result<Ddg, SliceError> {
        self.expand(self.root_nodes(roots))
    }

    /// Direct dependencies of `node`, and whether reaching them crosses a
    /// call boundary.
    fn dependencies(&self, node: &DdgNode, out: &mut Vec<DdgNode>) -> bool {
        match node {
            DdgNode::Const { .. } | DdgNode::Api { .. } => false,
            DdgNode::VarDef { at } => match self.pkg.statement(*at) {
                Statement::Const { .. } => {
                    operand_nodes_const(self.pkg, *at, out);
                    false
                }
                Statement::Copy { .. } => {
                    operand_nodes(self.pkg, self.chains, *at, 0, out);
                    false
                }
                Statement::BinOp { .. } => {
                    operand_nodes(self.pkg, self.chains, *at, 0, out);
                    operand_nodes(self.pkg, self.chains, *at, 1, out);
                    false
                }
                Statement::Call { api, .. } => match self.icfg.callee(*at) {
                    Some(callee) => {
                        for (i, s) in self.pkg.method(callee).body.iter().enumerate() {
                            if let Statement::Return { value: Some(_) } = s {
                                operand_nodes(self.pkg, self.chains, StmtRef::new(callee, i), 0, out);
                            }
                        }
                        true
                    }
                    None => {
                        out.push(DdgNode::Api {
                            at: *at,
                            api: api.clone(),
                        });
                        false
                    }
                },
                _ => false,
            },
            DdgNode::Param { method, position } => {
                for &site in self.icfg.callers(*method) {
                    if let Some(slot) = arg_slot(self.pkg.statement(site), *position) {
                        operand_nodes(self.pkg, self.chains, site, slot, out);
                    }
                }
                true
            }
        }
    }

    /// Backward closure from `seeds` under the four expansion rules.
    pub fn expand(&self, seeds: Vec<DdgNode>) -> Result<Ddg, SliceError> {
        let mut ddg = Ddg::default();
        // smallest call depth each node has been expanded at
        let mut expanded_at: HashMap<usize, usize> = HashMap::new();
        let mut work: VecDeque<(usize, usize)> = VecDeque::new();
        for s in seeds {
            let (i, _) = ddg.intern(s);
            ddg.roots.insert(i);
            work.push_back((i, 0));
        }
        let mut deps = Vec::new();
        let mut steps = 0usize;
        while let Some((i, depth)) = work.pop_front() {
            steps += 1;
            if steps.is_multiple_of(256) && self.deadline.is_some_and(Deadline::expired) {
                return Err(SliceError::TimedOut);
            }
            if expanded_at.get(&i).is_some_and(|&d| d <= depth) {
                continue;
            }
            expanded_at.insert(i, depth);
            deps.clear();
            let node = ddg.nodes[i].clone();
            let crosses = self.dependencies(&node, &mut deps);
            let next_depth = depth + usize::from(crosses);
            if crosses && next_depth > self.limits.max_depth {
                if !deps.is_empty() {
                    ddg.depth_exceeded = true;
                }
                continue;
            }
            for d in deps.drain(..) {
                if !ddg.index.contains_key(&d) && ddg.nodes.len() >= self.limits.max_nodes {
                    ddg.oversized = true;
                    continue;
                }
                let (j, _) = ddg.intern(d);
                ddg.edges.insert((i, j));
                work.push_back((j, next_depth));
            }
        }
        Ok(ddg)
    }
}

fn operand_nodes_const(pkg: &Package, at: StmtRef, out: &mut Vec<DdgNode>) {
    if let Statement::Const { value, .. } = pkg.statement(at) {
        out.push(DdgNode::Const {
            at,
            slot: 0,
            value: value.to_string(),
        });
    }
}

/// Builds the DDG for a group of root operands.
pub fn build_ddg(pkg: &Package, icfg: &Icfg, chains: &DefUseChains, roots: &[SliceRoot], limits: SliceLimits) -> Ddg {
    Slicer::new(pkg, icfg, chains, limits)
        .build(roots)
        .expect("no deadline configured")
}
