//! Test oracles shared by the integration targets. Each one recomputes a
//! result from first principles with none of the library's machinery
//! beyond the parsed IR.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write as _;

use clickslice_core::dataflow::DefSite;
use clickslice_core::ir::{MethodDecl, MethodId, Operand, Package, Statement, StmtRef};
use clickslice_core::slicer::{DdgNode, SliceRoot};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLASS: &str = "C";

#[derive(Debug, Clone, Copy)]
pub struct ProgramShape {
    pub max_statements: usize,
    pub max_methods: usize,
    /// Allow backward jumps.
    pub loops: bool,
    /// Dispatch every constructed event on the ad view.
    pub dispatches: bool,
}

impl Default for ProgramShape {
    fn default() -> Self {
        Self {
            max_statements: 50,
            max_methods: 4,
            loops: false,
            dispatches: false,
        }
    }
}

const VARS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

struct MethodGen<'r> {
    rng: &'r mut ChaCha8Rng,
    defined: Vec<String>,
    lines: Vec<String>,
    open_labels: Vec<String>,
    placed_labels: Vec<String>,
    next_label: usize,
}

impl MethodGen<'_> {
    fn operand(&mut self) -> String {
        if !self.defined.is_empty() && self.rng.random_bool(0.85) {
            self.defined.choose(self.rng).unwrap().clone()
        } else {
            match self.rng.random_range(0..4) {
                0 => format!("{}", self.rng.random_range(0..50)),
                1 => format!("{}.5", self.rng.random_range(0..9)),
                2 => "\"k\"".to_string(),
                _ => format!("{}", self.rng.random_range(-5..5)),
            }
        }
    }

    fn var_operand(&mut self) -> Option<String> {
        self.defined.choose(self.rng).cloned()
    }

    fn target(&mut self) -> String {
        // fresh names keep values alive; reused names create kills
        let v = if self.rng.random_bool(0.5) {
            format!("t{}", self.defined.len())
        } else {
            VARS.choose(self.rng).unwrap().to_string()
        };
        if !self.defined.contains(&v) {
            self.defined.push(v.clone());
        }
        v
    }
}

/// Emits IR text for a random package. Methods only call methods declared
/// after them, so the call graph is acyclic.
pub fn random_program(seed: u64, shape: ProgramShape) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_methods = rng.random_range(1..=shape.max_methods);
    let budget_total = rng.random_range(n_methods * 2..=shape.max_statements);
    emit_program(&mut rng, n_methods, budget_total, shape)
}

/// A looping package of roughly `statements` statements spread over
/// methods of about 50 statements each, with click dispatches.
pub fn large_program(seed: u64, statements: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = ProgramShape {
        max_statements: statements,
        max_methods: statements.div_ceil(50),
        loops: true,
        dispatches: true,
    };
    // each method keeps a few statements of headroom for labels and returns
    emit_program(&mut rng, shape.max_methods, statements + 3 * shape.max_methods, shape)
}

fn emit_program(rng: &mut ChaCha8Rng, n_methods: usize, budget_total: usize, shape: ProgramShape) -> String {
    let arity: Vec<usize> = (0..n_methods).map(|_| rng.random_range(0..=2)).collect();
    let mut budgets = vec![budget_total / n_methods; n_methods];
    budgets[0] += budget_total % n_methods;

    let mut out = String::new();
    out.push_str("package oracle.sample\npermission INTERNET\nlibrary com.ads.sdk\n");
    out.push_str("view adView class=com.ads.Banner w=320 h=50\n\nclass C\n");
    for m in 0..n_methods {
        let params: Vec<String> = (0..arity[m]).map(|i| format!("p{i}")).collect();
        let mut g = MethodGen {
            rng: &mut *rng,
            defined: params.clone(),
            lines: Vec::new(),
            open_labels: Vec::new(),
            placed_labels: Vec::new(),
            next_label: 0,
        };
        let budget = budgets[m];
        // room for one more pending label and the return
        while g.lines.len() + g.open_labels.len() + 3 <= budget {
            // close a pending forward label now and then
            if !g.open_labels.is_empty() && g.rng.random_bool(0.3) {
                let l = g.open_labels.remove(0);
                g.lines.push(format!("label {l}"));
                g.placed_labels.push(l);
                continue;
            }
            let kind = g.rng.random_range(0..100);
            let line = match kind {
                0..=8 => {
                    let t = g.target();
                    format!("{t} = const {}", g.rng.random_range(0..100))
                }
                9..=16 => {
                    let src = g.operand();
                    let t = g.target();
                    format!("{t} = copy {src}")
                }
                17..=44 => {
                    let (l, r) = (g.operand(), g.operand());
                    let op = ["add", "sub", "mul", "div"].choose(g.rng).unwrap();
                    let t = g.target();
                    format!("{t} = {op} {l} {r}")
                }
                45..=57 => {
                    let call = match g.rng.random_range(0..4) {
                        0 => format!("call Random.nextInt({})", g.operand()),
                        1 => "call adView View.getWidth()".to_string(),
                        2 => match g.var_operand() {
                            Some(v) => format!("call {v} MotionEvent.getX()"),
                            None => "call Random.nextFloat()".to_string(),
                        },
                        _ => {
                            let (a, b) = (g.operand(), g.operand());
                            format!("call MotionEvent.obtain(0, 0, 0, {a}, {b}, 0)")
                        }
                    };
                    if shape.dispatches && call.starts_with("call MotionEvent.obtain") {
                        let ev = format!("ev{}", g.lines.len());
                        g.lines.push(format!("{ev} = {call}"));
                        format!("call adView View.dispatchTouchEvent({ev})")
                    } else if g.rng.random_bool(0.8) {
                        let t = g.target();
                        format!("{t} = {call}")
                    } else {
                        call
                    }
                }
                58..=71 if m + 1 < n_methods => {
                    let callee = g.rng.random_range(m + 1..n_methods);
                    let args: Vec<String> = (0..arity[callee]).map(|_| g.operand()).collect();
                    let call = format!("call {CLASS}.m{callee}({})", args.join(", "));
                    if g.rng.random_bool(0.8) {
                        let t = g.target();
                        format!("{t} = {call}")
                    } else {
                        call
                    }
                }
                72..=84 => {
                    let (l, r) = (g.operand(), g.operand());
                    let cmp = ["<", "<=", "==", "!=", ">", ">="].choose(g.rng).unwrap();
                    let backward = shape.loops && !g.placed_labels.is_empty() && g.rng.random_bool(0.4);
                    let label = if backward {
                        g.placed_labels.choose(g.rng).unwrap().clone()
                    } else {
                        let l = format!("L{}", g.next_label);
                        g.next_label += 1;
                        g.open_labels.push(l.clone());
                        l
                    };
                    format!("if {l} {cmp} {r} goto {label}")
                }
                85..=87 => {
                    let l = format!("L{}", g.next_label);
                    g.next_label += 1;
                    g.open_labels.push(l.clone());
                    format!("goto {l}")
                }
                89..=92 if shape.loops => {
                    let l = format!("L{}", g.next_label);
                    g.next_label += 1;
                    g.placed_labels.push(l.clone());
                    format!("label {l}")
                }
                _ => {
                    let v = g.operand();
                    format!("call Log.d(\"t\", {v})")
                }
            };
            g.lines.push(line);
        }
        for l in std::mem::take(&mut g.open_labels) {
            g.lines.push(format!("label {l}"));
        }
        if g.rng.random_bool(0.75) {
            let v = g.operand();
            g.lines.push(format!("return {v}"));
        }
        writeln!(out, "method m{m}({})", params.join(", ")).unwrap();
        for l in &g.lines {
            writeln!(out, "    {l}").unwrap();
        }
        out.push_str("endmethod\n");
    }
    out.push_str("endclass\nendpackage\n");
    out
}

/// Random slice roots: statement operands anywhere in the package.
pub fn random_roots(pkg: &Package, seed: u64, max: usize) -> Vec<SliceRoot> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut candidates = Vec::new();
    for (id, _, m) in pkg.methods() {
        for (i, s) in m.body.iter().enumerate() {
            for (slot, op) in s.operands().into_iter().enumerate() {
                // literal roots are trivial; keep a few of them
                if matches!(op, Operand::Var(_)) || rng.random_bool(0.1) {
                    candidates.push(SliceRoot::new(StmtRef::new(id, i), slot));
                }
            }
        }
    }
    let k = rng.random_range(1..=max).min(candidates.len());
    candidates.choose_multiple(&mut rng, k).cloned().collect()
}

/// Successors of statement `i`; the method exit is implicit.
fn successors(m: &MethodDecl, i: usize) -> Vec<usize> {
    let n = m.body.len();
    let next = if i + 1 < n { vec![i + 1] } else { vec![] };
    match &m.body[i] {
        Statement::Return { .. } => vec![],
        Statement::Goto { label } => vec![m.labels[label]],
        Statement::IfGoto { label, .. } => {
            let mut s = next;
            let t = m.labels[label];
            if !s.contains(&t) {
                s.push(t);
            }
            s
        }
        _ => next,
    }
}

/// Definitions of `var` reaching the use at `stmt`, found by walking every
/// path from the method entry. Only valid for loop-free methods.
pub fn path_ud(m: &MethodDecl, stmt: usize, var: &str) -> BTreeSet<DefSite> {
    let mut found = BTreeSet::new();
    if m.body.is_empty() {
        return found;
    }
    let start = m.params.iter().position(|p| p == var).map(DefSite::Param);
    let mut stack = vec![(0usize, start)];
    let mut paths = 0usize;
    while let Some((i, last)) = stack.pop() {
        if i == stmt {
            paths += 1;
            if let Some(d) = last {
                found.insert(d);
            }
            continue;
        }
        let here = if m.body[i].defined_var() == Some(var) {
            Some(DefSite::Stmt(i))
        } else {
            last
        };
        for s in successors(m, i) {
            assert!(s > i, "path oracle needs forward edges only");
            stack.push((s, here));
        }
    }
    assert!(paths < 1_000_000);
    found
}

pub fn has_back_edge(m: &MethodDecl) -> bool {
    (0..m.body.len()).any(|i| successors(m, i).iter().any(|&s| s <= i))
}

/// Methods by id, found by scanning the declarations.
fn find_method(pkg: &Package, api: &str) -> Option<MethodId> {
    let dot = api.rfind('.')?;
    let (cls, name) = (&api[..dot], &api[dot + 1..]);
    for (id, c, m) in pkg.methods() {
        if c.name == cls && m.name == name {
            return Some(id);
        }
    }
    None
}

fn operand_nodes(pkg: &Package, at: StmtRef, slot: usize) -> Vec<DdgNode> {
    let stmt = pkg.statement(at);
    let ops = stmt.operands();
    match ops.get(slot) {
        None | Some(Operand::View(_)) => vec![],
        Some(Operand::Lit(l)) => vec![DdgNode::Const {
            at,
            slot,
            value: l.to_string(),
        }],
        Some(Operand::Var(v)) => path_ud(pkg.method(at.method), at.index, v)
            .into_iter()
            .map(|d| match d {
                DefSite::Stmt(i) => DdgNode::VarDef {
                    at: StmtRef::new(at.method, i),
                },
                DefSite::Param(p) => DdgNode::Param {
                    method: at.method,
                    position: p,
                },
            })
            .collect(),
    }
}

/// Dependencies of a node and whether they lie across a call boundary.
fn deps(pkg: &Package, node: &DdgNode) -> (Vec<DdgNode>, bool) {
    match node {
        DdgNode::Const { .. } | DdgNode::Api { .. } => (vec![], false),
        DdgNode::VarDef { at } => match pkg.statement(*at) {
            Statement::Const { value, .. } => (
                vec![DdgNode::Const {
                    at: *at,
                    slot: 0,
                    value: value.to_string(),
                }],
                false,
            ),
            Statement::Copy { .. } => (operand_nodes(pkg, *at, 0), false),
            Statement::BinOp { .. } => {
                let mut v = operand_nodes(pkg, *at, 0);
                v.extend(operand_nodes(pkg, *at, 1));
                (v, false)
            }
            Statement::Call { api, .. } => match find_method(pkg, api) {
                Some(callee) => {
                    let mut v = Vec::new();
                    for (i, s) in pkg.method(callee).body.iter().enumerate() {
                        if matches!(s, Statement::Return { value: Some(_) }) {
                            v.extend(operand_nodes(pkg, StmtRef::new(callee, i), 0));
                        }
                    }
                    (v, true)
                }
                None => (
                    vec![DdgNode::Api {
                        at: *at,
                        api: api.clone(),
                    }],
                    false,
                ),
            },
            _ => (vec![], false),
        },
        DdgNode::Param { method, position } => {
            let mut v = Vec::new();
            for (id, _, m) in pkg.methods() {
                for (i, s) in m.body.iter().enumerate() {
                    if let Statement::Call {
                        api, receiver, args, ..
                    } = s
                    {
                        if find_method(pkg, api) == Some(*method) && *position < args.len() {
                            let slot = position + usize::from(receiver.is_some());
                            v.extend(operand_nodes(pkg, StmtRef::new(id, i), slot));
                        }
                    }
                }
            }
            (v, true)
        }
    }
}

/// Every node reachable from the roots through at most `max_depth` call
/// crossings, by exhaustive search over (node, depth) states.
pub fn closure_oracle(pkg: &Package, roots: &[SliceRoot], max_depth: usize) -> BTreeSet<DdgNode> {
    let mut nodes = BTreeSet::new();
    let mut seen: BTreeSet<(DdgNode, usize)> = BTreeSet::new();
    let mut stack = Vec::new();
    for r in roots {
        for n in operand_nodes(pkg, r.at, r.slot) {
            nodes.insert(n.clone());
            stack.push((n, 0));
        }
    }
    while let Some((n, d)) = stack.pop() {
        if !seen.insert((n.clone(), d)) {
            continue;
        }
        let (ds, crosses) = deps(pkg, &n);
        let nd = d + usize::from(crosses);
        if nd > max_depth {
            continue;
        }
        for x in ds {
            nodes.insert(x.clone());
            stack.push((x, nd));
        }
    }
    nodes
}

/// Entropy weights written straight from the definition, using
/// -Σ p ln p = ln S - Σ x ln x / S on min-max scaled columns.
pub fn entropy_weights_oracle(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let k = rows[0].len();
    let mut d = vec![0.0; k];
    for j in 0..k {
        let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
        let x: Vec<f64> = rows
            .iter()
            .map(|r| if hi > lo { (r[j] - lo) / (hi - lo) } else { 0.0 })
            .collect();
        let s: f64 = x.iter().sum();
        let e = if s == 0.0 {
            1.0
        } else {
            let xlx: f64 = x.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum();
            (s.ln() - xlx / s) / (n as f64).ln()
        };
        d[j] = 1.0 - e;
    }
    let total: f64 = d.iter().sum();
    if total == 0.0 {
        vec![1.0 / k as f64; k]
    } else {
        d.iter().map(|v| v / total).collect()
    }
}

pub fn random_matrix(seed: u64, n: usize, k: usize, max: u32) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..k).map(|_| rng.random_range(0..=max) as f64).collect())
        .collect()
}

/// Outcome of running a library routine against an oracle over many cases.
#[derive(Debug, Default)]
pub struct Agreement {
    pub cases: usize,
    pub agreed: usize,
    pub first_failure: Option<String>,
}

impl Agreement {
    pub fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.cases += 1;
        if ok {
            self.agreed += 1;
        } else if self.first_failure.is_none() {
            self.first_failure = Some(detail());
        }
    }

    pub fn all(&self) -> bool {
        self.cases > 0 && self.agreed == self.cases
    }
}

fn analyze(
    text: &str,
) -> (
    Package,
    clickslice_core::dataflow::Icfg,
    clickslice_core::dataflow::DefUseChains,
) {
    let pkg = clickslice_core::ir::parse_package(text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    let icfg = clickslice_core::dataflow::build_icfg(&pkg);
    let chains = clickslice_core::dataflow::compute_chains(&pkg, &icfg);
    (pkg, icfg, chains)
}

/// Slicer node sets against the closure oracle on `cases` loop-free,
/// recursion-free random packages.
pub fn slicer_agreement(cases: usize, seed0: u64) -> Agreement {
    use clickslice_core::slicer::{build_ddg, SliceLimits};
    let mut out = Agreement::default();
    let limits = SliceLimits::default();
    for seed in seed0..seed0 + cases as u64 {
        let text = random_program(seed, ProgramShape::default());
        let (pkg, icfg, chains) = analyze(&text);
        let roots = random_roots(&pkg, seed, 3);
        let ddg = build_ddg(&pkg, &icfg, &chains, &roots, limits);
        let got = ddg.node_set();
        let want = closure_oracle(&pkg, &roots, limits.max_depth);
        out.record(got == want && !ddg.oversized, || {
            format!("seed {seed}: roots {roots:?}\nlibrary {got:?}\noracle {want:?}\n{text}")
        });
    }
    out
}

/// UD chains against path enumeration on `cases` loop-free packages.
pub fn ud_agreement(cases: usize, seed0: u64) -> Agreement {
    let mut out = Agreement::default();
    let shape = ProgramShape {
        loops: false,
        ..ProgramShape::default()
    };
    for seed in seed0..seed0 + cases as u64 {
        let text = random_program(seed, shape);
        let (pkg, _, chains) = analyze(&text);
        let mut ok = true;
        let mut detail = String::new();
        for (id, _, m) in pkg.methods() {
            for (i, s) in m.body.iter().enumerate() {
                for v in s.used_vars() {
                    let got: BTreeSet<DefSite> = chains.ud(StmtRef::new(id, i), v).collect();
                    let want = path_ud(m, i, v);
                    if got != want && ok {
                        ok = false;
                        detail = format!(
                            "seed {seed} {}:{i} var {v}: library {got:?} oracle {want:?}\n{text}",
                            m.name
                        );
                    }
                }
            }
        }
        out.record(ok, || detail);
    }
    out
}

/// UD/DU duality on random packages with loops allowed.
pub fn duality_agreement(cases: usize, seed0: u64) -> Agreement {
    let mut out = Agreement::default();
    let shape = ProgramShape {
        loops: true,
        ..ProgramShape::default()
    };
    for seed in seed0..seed0 + cases as u64 {
        let text = random_program(seed, shape);
        let (pkg, _, chains) = analyze(&text);
        let mut ok = true;
        for (id, _, m) in pkg.methods() {
            let mc = chains.method(id);
            for (i, s) in m.body.iter().enumerate() {
                for v in s.used_vars() {
                    for d in chains.ud(StmtRef::new(id, i), v) {
                        ok &= chains.du(id, d, v).any(|u| u == i);
                    }
                }
            }
            for (d, v, uses) in mc.du_entries() {
                for &u in uses {
                    ok &= chains.ud(StmtRef::new(id, u), v).any(|x| x == d);
                }
            }
        }
        out.record(ok, || format!("seed {seed}\n{text}"));
    }
    out
}

/// Worst relative error between the analytic gradient and central
/// differences over 20 random coordinates of a freshly initialized VAE.
pub fn vae_gradient_error(seed: u64) -> f64 {
    use clickslice_core::detector::{loss_and_grad, VaeConfig, VaeParams};
    use rand_distr::StandardNormal;

    let cfg = VaeConfig {
        beta: 0.3,
        ..VaeConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = VaeParams::init(7, &cfg, &mut rng);
    // biases start at zero; jitter them so every term carries gradient
    for i in 0..p.len() {
        let v = p.get(i);
        p.set(i, v + rng.random_range(-0.1..0.1));
    }
    let xs: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..7).map(|_| rng.random_range(0.0..0.5)).collect())
        .collect();
    let eps: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..cfg.latent).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let batch: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let analytic = loss_and_grad(&p, &batch, &eps, cfg.beta).1.flatten();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let i = rng.random_range(0..p.len());
        let base = p.get(i);
        p.set(i, base + h);
        let up = loss_and_grad(&p, &batch, &eps, cfg.beta).0.total;
        p.set(i, base - h);
        let down = loss_and_grad(&p, &batch, &eps, cfg.beta).0.total;
        p.set(i, base);
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

fn jittered(rng: &mut ChaCha8Rng, center: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..7).map(|_| center + rng.random_range(-0.02..0.02)).collect())
        .collect()
}

/// Trains on a tight cluster around 0.2 and returns the ratio of the mean
/// reconstruction error at 0.9 to the mean error on held-out cluster points.
pub fn two_cluster_margin(seed: u64) -> f64 {
    use clickslice_core::detector::{fit, VaeConfig};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = jittered(&mut rng, 0.2, 300);
    let held_out = jittered(&mut rng, 0.2, 50);
    let far = jittered(&mut rng, 0.9, 50);
    let cfg = VaeConfig {
        seed,
        ..VaeConfig::default()
    };
    let (p, _) = fit(&train, &cfg).expect("cluster trains");
    let mean = |xs: &[Vec<f64>]| xs.iter().map(|x| p.reconstruction_error(x)).sum::<f64>() / xs.len() as f64;
    mean(&far) / mean(&held_out)
}
