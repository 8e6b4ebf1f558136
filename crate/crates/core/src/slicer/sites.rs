use std::collections::{BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dataflow::{DefSite, DefUseChains, Icfg};
use crate::ir::{ApiCatalog, ApiCategory, MethodId, Operand, Package, Statement, StmtRef};

use super::ddg::arg_slot;
use super::SliceRoot;

/// Bound on the number of call boundaries followed when tracking the event
/// object forward or the dispatch receiver backward.
const FLOW_DEPTH: usize = 10;

/// A synthetic click: an event constructor call paired with the dispatch it
/// feeds, plus the operands the coordinates and the trigger depend on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClickSite {
    pub obtain_stmt: StmtRef,
    pub dispatch_stmt: StmtRef,
    pub target_view: String,
    pub axis_roots: Vec<SliceRoot>,
    pub condition_roots: Vec<SliceRoot>,
}

impl ClickSite {
    /// `Class::method` of the constructor call.
    pub fn location(&self, pkg: &Package) -> String {
        pkg.location(self.obtain_stmt.method)
    }

    /// Stable identifier, unique within a package.
    pub fn id(&self, pkg: &Package) -> String {
        format!(
            "{}:{}>{}:{}",
            pkg.location(self.obtain_stmt.method),
            self.obtain_stmt.index,
            pkg.location(self.dispatch_stmt.method),
            self.dispatch_stmt.index
        )
    }
}

fn call_parts(stmt: &Statement) -> Option<(&str, Option<&Operand>, &[Operand])> {
    match stmt {
        Statement::Call {
            api, receiver, args, ..
        } => Some((api.as_str(), receiver.as_ref(), args.as_slice())),
        _ => None,
    }
}

/// Dispatch statements reached by the event built at `obtain`.
fn dispatches_fed_by(
    pkg: &Package,
    icfg: &Icfg,
    chains: &DefUseChains,
    catalog: &ApiCatalog,
    obtain: StmtRef,
    event: &str,
) -> BTreeSet<StmtRef> {
    let mut found = BTreeSet::new();
    let mut seen: HashSet<(MethodId, DefSite, String)> = HashSet::new();
    let mut work: VecDeque<(MethodId, DefSite, String, usize)> = VecDeque::new();
    work.push_back((obtain.method, DefSite::Stmt(obtain.index), event.to_string(), 0));
    while let Some((m, def, var, depth)) = work.pop_front() {
        if !seen.insert((m, def, var.clone())) {
            continue;
        }
        for u in chains.du(m, def, &var) {
            let at = StmtRef::new(m, u);
            let stmt = pkg.statement(at);
            let reads = |op: &Operand| op.as_var() == Some(var.as_str());
            match stmt {
                Statement::Copy { target, source } if reads(source) => {
                    work.push_back((m, DefSite::Stmt(u), target.clone(), depth));
                }
                Statement::Return { value: Some(v) } if reads(v) && depth < FLOW_DEPTH => {
                    for &site in icfg.callers(m) {
                        if let Some(t) = pkg.statement(site).defined_var() {
                            work.push_back((site.method, DefSite::Stmt(site.index), t.to_string(), depth + 1));
                        }
                    }
                }
                Statement::Call { api, args, .. } => {
                    if catalog.is(api, ApiCategory::Dispatch) && args.first().is_some_and(reads) {
                        found.insert(at);
                    }
                    if let Some(callee) = icfg.callee(at) {
                        if depth < FLOW_DEPTH {
                            let params = &pkg.method(callee).params;
                            for (k, a) in args.iter().enumerate() {
                                if reads(a) && k < params.len() {
                                    work.push_back((callee, DefSite::Param(k), params[k].clone(), depth + 1));
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
    }
    found
}

/// Views an operand may refer to, following copies within a method and
/// parameters back to their callers.
fn resolve_views(pkg: &Package, icfg: &Icfg, chains: &DefUseChains, at: StmtRef, op: &Operand) -> BTreeSet<String> {
    let mut views = BTreeSet::new();
    let mut seen: HashSet<(StmtRef, String)> = HashSet::new();
    let mut work: Vec<(StmtRef, Operand, usize)> = vec![(at, op.clone(), 0)];
    while let Some((at, op, depth)) = work.pop() {
        let var = match op {
            Operand::View(name) => {
                views.insert(name);
                continue;
            }
            Operand::Lit(_) => continue,
            Operand::Var(v) => v,
        };
        if !seen.insert((at, var.clone())) {
            continue;
        }
        for def in chains.ud(at, &var) {
            match def {
                DefSite::Stmt(i) => {
                    let d = StmtRef::new(at.method, i);
                    if let Statement::Copy { source, .. } = pkg.statement(d) {
                        work.push((d, source.clone(), depth));
                    }
                }
                DefSite::Param(k) if depth < FLOW_DEPTH => {
                    for &site in icfg.callers(at.method) {
                        if let Some((_, _, args)) = call_parts(pkg.statement(site)) {
                            if let Some(a) = args.get(k) {
                                work.push((site, a.clone(), depth + 1));
                            }
                        }
                    }
                }
                DefSite::Param(_) => {}
            }
        }
    }
    views
}

/// Both operands of each branch in `branches`, deduplicated into `out`.
fn branch_roots(method: MethodId, branches: impl IntoIterator<Item = usize>, out: &mut Vec<SliceRoot>) {
    for b in branches {
        for slot in 0..2 {
            let r = SliceRoot::new(StmtRef::new(method, b), slot);
            if !out.contains(&r) {
                out.push(r);
            }
        }
    }
}

fn condition_roots(pkg: &Package, icfg: &Icfg, dispatch: StmtRef) -> Vec<SliceRoot> {
    let mut roots = Vec::new();
    let m = dispatch.method;
    let guards = icfg.cfg(m).guarding_branches(&pkg.method(m).body, dispatch.index);
    branch_roots(m, guards, &mut roots);
    for &site in icfg.callers(m) {
        let caller = site.method;
        let guards = icfg.cfg(caller).guarding_branches(&pkg.method(caller).body, site.index);
        branch_roots(caller, guards, &mut roots);
    }
    roots
}

/// Finds every constructor/dispatch pair whose event reaches the dispatch
/// and whose dispatch receiver is one of `ad_views`.
pub fn locate_click_sites(
    pkg: &Package,
    icfg: &Icfg,
    chains: &DefUseChains,
    catalog: &ApiCatalog,
    ad_views: &BTreeSet<String>,
) -> Vec<ClickSite> {
    let mut sites = Vec::new();
    for (id, _, m) in pkg.methods() {
        for (i, stmt) in m.body.iter().enumerate() {
            let Statement::Call {
                target: Some(event),
                api,
                ..
            } = stmt
            else {
                continue;
            };
            if !catalog.is(api, ApiCategory::Obtain) {
                continue;
            }
            let obtain = StmtRef::new(id, i);
            let axis_roots: Vec<SliceRoot> = [3, 4]
                .into_iter()
                .filter_map(|k| arg_slot(stmt, k))
                .map(|slot| SliceRoot::new(obtain, slot))
                .collect();
            for dispatch in dispatches_fed_by(pkg, icfg, chains, catalog, obtain, event) {
                let Some((_, Some(receiver), _)) = call_parts(pkg.statement(dispatch)) else {
                    continue;
                };
                let views = resolve_views(pkg, icfg, chains, dispatch, receiver);
                let Some(target_view) = views.intersection(ad_views).next() else {
                    continue;
                };
                sites.push(ClickSite {
                    obtain_stmt: obtain,
                    dispatch_stmt: dispatch,
                    target_view: target_view.clone(),
                    axis_roots: axis_roots.clone(),
                    condition_roots: condition_roots(pkg, icfg, dispatch),
                });
            }
        }
    }
    sites.sort();
    sites
}
