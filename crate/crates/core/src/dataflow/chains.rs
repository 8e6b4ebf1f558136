use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use fixedbitset::FixedBitSet;

use super::{Icfg, MethodCfg};
use crate::ir::{MethodDecl, MethodId, Package, StmtRef};

/// Where a variable gets its value: a method parameter (defined at entry)
/// or an assigning statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DefSite {
    Param(usize),
    Stmt(usize),
}

impl fmt::Display for DefSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DefSite::Param(p) => write!(f, "param{p}"),
            DefSite::Stmt(s) => write!(f, "s{s}"),
        }
    }
}

/// Use-def and def-use chains of a single method.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MethodChains {
    ud: BTreeMap<(usize, String), BTreeSet<DefSite>>,
    du: BTreeMap<(DefSite, String), BTreeSet<usize>>,
}

impl MethodChains {
    pub fn ud(&self, stmt: usize, var: &str) -> Option<&BTreeSet<DefSite>> {
        self.ud.get(&(stmt, var.to_string()))
    }

    pub fn du(&self, def: DefSite, var: &str) -> Option<&BTreeSet<usize>> {
        self.du.get(&(def, var.to_string()))
    }

    pub fn ud_entries(&self) -> impl Iterator<Item = (usize, &str, &BTreeSet<DefSite>)> {
        self.ud.iter().map(|((s, v), d)| (*s, v.as_str(), d))
    }

    pub fn du_entries(&self) -> impl Iterator<Item = (DefSite, &str, &BTreeSet<usize>)> {
        self.du.iter().map(|((d, v), u)| (*d, v.as_str(), u))
    }
}

#[derive(Debug, Clone, Default)]
pub struct DefUseChains {
    methods: BTreeMap<MethodId, MethodChains>,
}

impl DefUseChains {
    pub fn method(&self, m: MethodId) -> &MethodChains {
        &self.methods[&m]
    }

    /// Definitions of `var` reaching statement `at`.
    pub fn ud(&self, at: StmtRef, var: &str) -> impl Iterator<Item = DefSite> + '_ {
        self.methods
            .get(&at.method)
            .and_then(|c| c.ud(at.index, var))
            .into_iter()
            .flatten()
            .copied()
    }

    /// Statements that read `var` as defined at `def` inside method `m`.
    pub fn du(&self, m: MethodId, def: DefSite, var: &str) -> impl Iterator<Item = usize> + '_ {
        self.methods
            .get(&m)
            .and_then(|c| c.du(def, var))
            .into_iter()
            .flatten()
            .copied()
    }
}

/// Reaching definitions over one method's CFG.
///
/// `order` seeds the worklist; the fixed point does not depend on it.
pub fn reaching_definitions(
    method: &MethodDecl,
    cfg: &MethodCfg,
    order: impl IntoIterator<Item = usize>,
) -> MethodChains {
    // definition universe: parameters first, then assigning statements
    let mut defs: Vec<(DefSite, &str)> = method
        .params
        .iter()
        .enumerate()
        .map(|(i, p)| (DefSite::Param(i), p.as_str()))
        .collect();
    let mut def_of_stmt: HashMap<usize, usize> = HashMap::new();
    for (i, s) in method.body.iter().enumerate() {
        if let Some(v) = s.defined_var() {
            def_of_stmt.insert(i, defs.len());
            defs.push((DefSite::Stmt(i), v));
        }
    }
    let n_defs = defs.len();
    let mut by_var: HashMap<&str, FixedBitSet> = HashMap::new();
    for (idx, (_, v)) in defs.iter().enumerate() {
        by_var
            .entry(v)
            .or_insert_with(|| FixedBitSet::with_capacity(n_defs))
            .insert(idx);
    }
    let mut entry_defs = FixedBitSet::with_capacity(n_defs);
    entry_defs.insert_range(..method.params.len());

    let n = method.body.len();
    // statements no path from the entry reaches have nothing reaching them
    let mut reachable = FixedBitSet::with_capacity(n);
    let mut stack = vec![cfg.entry()];
    while let Some(i) = stack.pop() {
        if i < n && !reachable.put(i) {
            stack.extend_from_slice(cfg.succs(i));
        }
    }
    let mut ins = vec![FixedBitSet::with_capacity(n_defs); n];
    let mut outs = vec![FixedBitSet::with_capacity(n_defs); n];

    let mut queue: VecDeque<usize> = order.into_iter().filter(|&i| i < n).collect();
    let mut queued = FixedBitSet::with_capacity(n);
    for &i in &queue {
        queued.insert(i);
    }
    for i in 0..n {
        if !queued.contains(i) {
            queue.push_back(i);
            queued.insert(i);
        }
    }

    while let Some(node) = queue.pop_front() {
        queued.set(node, false);
        if !reachable.contains(node) {
            continue;
        }
        let mut inn = if node == cfg.entry() {
            entry_defs.clone()
        } else {
            FixedBitSet::with_capacity(n_defs)
        };
        for &p in cfg.preds(node) {
            inn.union_with(&outs[p]);
        }
        let mut out = inn.clone();
        if let Some(&d) = def_of_stmt.get(&node) {
            out.difference_with(&by_var[defs[d].1]);
            out.insert(d);
        }
        ins[node] = inn;
        if out != outs[node] {
            outs[node] = out;
            for &s in cfg.succs(node) {
                if s < n && !queued.contains(s) {
                    queued.insert(s);
                    queue.push_back(s);
                }
            }
        }
    }

    let mut chains = MethodChains::default();
    for (i, stmt) in method.body.iter().enumerate() {
        for var in stmt.used_vars() {
            let Some(mask) = by_var.get(var) else { continue };
            let mut reaching = ins[i].clone();
            reaching.intersect_with(mask);
            let sites: BTreeSet<DefSite> = reaching.ones().map(|d| defs[d].0).collect();
            for &site in &sites {
                chains.du.entry((site, var.to_string())).or_default().insert(i);
            }
            chains.ud.insert((i, var.to_string()), sites);
        }
    }
    chains
}

pub fn compute_chains(pkg: &Package, icfg: &Icfg) -> DefUseChains {
    let methods = pkg
        .methods()
        .map(|(id, _, m)| (id, reaching_definitions(m, icfg.cfg(id), 0..m.body.len())))
        .collect();
    DefUseChains { methods }
}
