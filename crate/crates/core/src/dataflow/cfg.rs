use std::collections::{BTreeMap, BTreeSet};

use fixedbitset::FixedBitSet;

use crate::ir::{MethodId, Package, Statement, StmtRef};

/// Statement-level CFG of one method. Node `i < len` is statement `i`;
/// node `len` is the synthetic exit.
#[derive(Debug, Clone)]
pub struct MethodCfg {
    len: usize,
    succs: Vec<Vec<usize>>,
    preds: Vec<Vec<usize>>,
}

impl MethodCfg {
    pub fn build(body: &[Statement], labels: &BTreeMap<String, usize>) -> Self {
        let len = body.len();
        let exit = len;
        let next = |i: usize| if i + 1 < len { i + 1 } else { exit };
        let target = |l: &str| labels[l];
        let mut succs: Vec<Vec<usize>> = body
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                // taken, then fallthrough
                Statement::IfGoto { label, .. } => vec![target(label), next(i)],
                Statement::Goto { label } => vec![target(label)],
                Statement::Return { .. } => vec![exit],
                _ => vec![next(i)],
            })
            .collect();
        succs.push(Vec::new());
        let mut preds = vec![Vec::new(); len + 1];
        for (i, ss) in succs.iter().enumerate() {
            for &s in ss {
                if !preds[s].contains(&i) {
                    preds[s].push(i);
                }
            }
        }
        Self { len, succs, preds }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entry(&self) -> usize {
        0
    }

    pub fn exit(&self) -> usize {
        self.len
    }

    pub fn succs(&self, node: usize) -> &[usize] {
        &self.succs[node]
    }

    pub fn preds(&self, node: usize) -> &[usize] {
        &self.preds[node]
    }

    pub fn edge_count(&self) -> usize {
        self.succs.iter().map(Vec::len).sum()
    }

    /// Post-dominator sets, indexed by node (exit included).
    pub fn post_dominators(&self) -> Vec<FixedBitSet> {
        let n = self.len + 1;
        let mut full = FixedBitSet::with_capacity(n);
        full.insert_range(..);
        let mut pdom = vec![full; n];
        let exit = self.exit();
        pdom[exit].clear();
        pdom[exit].insert(exit);
        let mut changed = true;
        while changed {
            changed = false;
            for node in (0..self.len).rev() {
                let mut acc: Option<FixedBitSet> = None;
                for &s in &self.succs[node] {
                    match acc.as_mut() {
                        None => acc = Some(pdom[s].clone()),
                        Some(a) => a.intersect_with(&pdom[s]),
                    }
                }
                let mut new = acc.unwrap_or_else(|| FixedBitSet::with_capacity(n));
                new.insert(node);
                if new != pdom[node] {
                    pdom[node] = new;
                    changed = true;
                }
            }
        }
        pdom
    }

    /// For every statement, the branch statements it is directly control
    /// dependent on.
    pub fn control_dependences(&self, body: &[Statement]) -> Vec<BTreeSet<usize>> {
        let pdom = self.post_dominators();
        let mut deps = vec![BTreeSet::new(); self.len];
        for (x, stmt) in body.iter().enumerate() {
            if !stmt.is_branch() {
                continue;
            }
            for &s in &self.succs[x] {
                for y in pdom[s].ones() {
                    if y == self.exit() {
                        continue;
                    }
                    let strictly_pdoms_x = y != x && pdom[x].contains(y);
                    if !strictly_pdoms_x {
                        deps[y].insert(x);
                    }
                }
            }
        }
        deps
    }

    /// Every branch that `node` is transitively control dependent on.
    pub fn guarding_branches(&self, body: &[Statement], node: usize) -> BTreeSet<usize> {
        let deps = self.control_dependences(body);
        let mut out = BTreeSet::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            for &b in &deps[n] {
                if out.insert(b) {
                    stack.push(b);
                }
            }
        }
        out
    }
}

/// Per-method CFGs plus call edges between developer methods.
#[derive(Debug, Clone)]
pub struct Icfg {
    cfgs: BTreeMap<MethodId, MethodCfg>,
    call_edges: BTreeMap<StmtRef, MethodId>,
    callers: BTreeMap<MethodId, Vec<StmtRef>>,
}

impl Icfg {
    pub fn cfg(&self, m: MethodId) -> &MethodCfg {
        &self.cfgs[&m]
    }

    pub fn methods(&self) -> impl Iterator<Item = (MethodId, &MethodCfg)> {
        self.cfgs.iter().map(|(k, v)| (*k, v))
    }

    /// The developer method invoked by a call statement, if it resolves.
    pub fn callee(&self, call: StmtRef) -> Option<MethodId> {
        self.call_edges.get(&call).copied()
    }

    /// Call statements that invoke `m`, in statement order.
    pub fn callers(&self, m: MethodId) -> &[StmtRef] {
        self.callers.get(&m).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn call_edges(&self) -> impl Iterator<Item = (StmtRef, MethodId)> + '_ {
        self.call_edges.iter().map(|(k, v)| (*k, *v))
    }
}

pub fn build_icfg(pkg: &Package) -> Icfg {
    let mut cfgs = BTreeMap::new();
    let mut call_edges = BTreeMap::new();
    let mut callers: BTreeMap<MethodId, Vec<StmtRef>> = BTreeMap::new();
    for (id, _, m) in pkg.methods() {
        cfgs.insert(id, MethodCfg::build(&m.body, &m.labels));
        for (i, stmt) in m.body.iter().enumerate() {
            if let Statement::Call { api, .. } = stmt {
                if let Some(callee) = pkg.resolve_call(api) {
                    let site = StmtRef::new(id, i);
                    call_edges.insert(site, callee);
                    callers.entry(callee).or_default().push(site);
                }
            }
        }
    }
    Icfg {
        cfgs,
        call_edges,
        callers,
    }
}
