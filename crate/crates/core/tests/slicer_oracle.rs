mod common;

use clickslice_core::ir::parse_package;
use common::{has_back_edge, random_program, slicer_agreement, ProgramShape};

#[test]
fn generated_programs_respect_their_shape() {
    for seed in 0..200 {
        let text = random_program(seed, ProgramShape::default());
        let pkg = parse_package(&text).unwrap();
        assert!(pkg.statement_count() <= 50, "seed {seed}");
        assert!(pkg.methods().all(|(_, _, m)| !has_back_edge(m)), "seed {seed}");
    }
}

#[test]
fn slices_match_the_closure_oracle() {
    let a = slicer_agreement(200, 0);
    assert!(
        a.all(),
        "{}/{}\n{}",
        a.agreed,
        a.cases,
        a.first_failure.unwrap_or_default()
    );
}

#[test]
fn slices_match_the_closure_oracle_on_other_seeds() {
    let a = slicer_agreement(300, 10_000);
    assert!(
        a.all(),
        "{}/{}\n{}",
        a.agreed,
        a.cases,
        a.first_failure.unwrap_or_default()
    );
}

#[test]
fn oracle_cases_exercise_calls_and_parameters() {
    use clickslice_core::slicer::DdgNode;
    let (mut with_param, mut cross_method, mut with_api, mut with_const, mut total, mut big) = (0, 0, 0, 0, 0, 0);
    for seed in 0..200 {
        let text = random_program(seed, ProgramShape::default());
        let pkg = parse_package(&text).unwrap();
        let roots = common::random_roots(&pkg, seed, 3);
        let nodes = common::closure_oracle(&pkg, &roots, 10);
        total += nodes.len();
        big += usize::from(nodes.len() >= 8);
        with_param += usize::from(nodes.iter().any(|n| matches!(n, DdgNode::Param { .. })));
        with_api += usize::from(nodes.iter().any(|n| matches!(n, DdgNode::Api { .. })));
        with_const += usize::from(nodes.iter().any(|n| matches!(n, DdgNode::Const { .. })));
        let methods: std::collections::BTreeSet<_> = nodes
            .iter()
            .filter_map(|n| match n {
                DdgNode::VarDef { at } => Some(at.method),
                _ => None,
            })
            .collect();
        cross_method += usize::from(methods.len() > 1);
    }
    assert!(with_param >= 20, "{with_param}");
    assert!(cross_method >= 20, "{cross_method}");
    assert!(with_api >= 20 && with_const >= 50, "{with_api} {with_const}");
    assert!(total >= 600 && big >= 15, "{total} {big}");
}
