use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::sample::subsequence;

use smforge_core::eval::{evaluate, match_all, AliasMap, Counts};
use smforge_core::ir::{validate, Component, StateMachine, StateNode, Transition};
use smforge_core::postprocess::{dedupe, finalize, PostError};
use smforge_core::tables::{
    emit_partial, emit_tables, parse_response, PartialModel, RowKind, StateRow, StructureRow,
    TransitionRow,
};
use smforge_core::umple::{emit_umple, parse_umple, ParseMode};

const NAMES: [&str; 8] = ["Idle", "Running", "Stopped", "Waiting", "Done", "Failed", "Open", "Closed"];
const EVENTS: [&str; 4] = ["go", "halt", "tick", "reset"];
const GUARDS: [&str; 4] = ["ready", "x > 0", "!busy", "count >= 3"];
const ACTIONS: [&str; 4] = ["beep()", "log", "count++", "notify(user)"];

type RawTransition = (usize, usize, usize, Option<usize>, Vec<usize>);

fn build(names: &[&str], layout: u8, history: bool, raw: &[RawTransition]) -> StateMachine {
    let n = names.len();
    let s = |i: usize| StateNode::simple(names[i]);
    let roots: Vec<StateNode> = if n < 3 || layout == 0 {
        (0..n).map(s).collect()
    } else {
        let composite = match layout {
            1 => StateNode::composite(names[0], vec![vec![s(1), s(2)]]),
            2 => StateNode::composite(names[0], vec![vec![s(1)], vec![s(2)]]),
            _ => StateNode::composite(
                names[0],
                vec![vec![StateNode::composite(names[1], vec![vec![s(2)]])]],
            ),
        };
        let composite = if history { composite.with_history() } else { composite };
        std::iter::once(composite).chain((3..n).map(s)).collect()
    };
    let mut sm = StateMachine::new("Gen");
    sm.root_states = roots;
    for (src, dst, ev, guard, actions) in raw {
        let mut t = Transition::new(names[src % n], names[dst % n]).on(EVENTS[ev % EVENTS.len()]);
        if let Some(g) = guard {
            t = t.guarded(GUARDS[*g]);
        }
        for a in actions {
            t = t.action(ACTIONS[*a]);
        }
        sm.transitions.push(t);
    }
    sm.collect_events();
    sm
}

fn raw_transition() -> impl Strategy<Value = RawTransition> {
    (
        0usize..8,
        0usize..8,
        0usize..4,
        proptest::option::of(0usize..4),
        proptest::collection::vec(0usize..4, 0..3),
    )
}

prop_compose! {
    fn machine(max_states: usize, max_transitions: usize)(
        names in subsequence(NAMES.to_vec(), 1..=max_states),
        layout in 0u8..4,
        history in any::<bool>(),
        raw in proptest::collection::vec(raw_transition(), 0..=max_transitions),
    ) -> StateMachine {
        build(&names, layout, history, &raw)
    }
}

fn all_counts(gen: &StateMachine, truth: &StateMachine, aliases: &AliasMap) -> BTreeMap<Component, Counts> {
    evaluate(gen, truth, aliases).unwrap().counts
}

/// Exhaustive optimum over injective pairings of generated to truth
/// transitions, ranked by (transitions, guards, actions) in that order.
/// Generated transitions touching a state absent from the truth are out.
fn oracle(gen: &StateMachine, truth: &StateMachine) -> (usize, usize, usize) {
    let truth_names: Vec<String> = truth.all_states().iter().map(|s| s.name.to_lowercase()).collect();
    let known = |n: &str| truth_names.contains(&n.to_lowercase());
    let live: Vec<&Transition> = gen
        .transitions
        .iter()
        .filter(|t| known(&t.source) && known(&t.target))
        .collect();
    let tr = &truth.transitions;
    let gain = |g: &Transition, t: &Transition| -> Option<(usize, usize, usize)> {
        let same = |a: &str, b: &str| a.trim().to_lowercase() == b.trim().to_lowercase();
        if !(same(&g.source, &t.source) && same(&g.target, &t.target) && g.event == t.event) {
            return None;
        }
        let guard = matches!((&g.guard, &t.guard), (Some(a), Some(b)) if same(a, b)) as usize;
        let mut left: Vec<&String> = t.actions.iter().collect();
        let mut actions = 0;
        for a in &g.actions {
            if let Some(k) = left.iter().position(|b| same(a, b)) {
                left.remove(k);
                actions += 1;
            }
        }
        Some((1, guard, actions))
    };
    let add = |a: (usize, usize, usize), b: (usize, usize, usize)| (a.0 + b.0, a.1 + b.1, a.2 + b.2);
    // best[i][mask]: optimum over live[i..] with truth transitions in mask taken
    let full = 1usize << tr.len();
    let mut best = vec![vec![(0, 0, 0); full]; live.len() + 1];
    for i in (0..live.len()).rev() {
        for mask in 0..full {
            let mut b = best[i + 1][mask];
            for (j, t) in tr.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    continue;
                }
                if let Some(g) = gain(live[i], t) {
                    b = b.max(add(g, best[i + 1][mask | (1 << j)]));
                }
            }
            best[i][mask] = b;
        }
    }
    best[0][0]
}

fn rows_from(sm: &StateMachine) -> PartialModel {
    parse_response(&emit_tables(sm).unwrap()).model
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generated_machines_are_valid(sm in machine(6, 8)) {
        prop_assert!(validate(&sm).is_empty(), "{:?}", validate(&sm));
    }

    #[test]
    fn identity_scores_one(sm in machine(6, 8)) {
        let rep = evaluate(&sm, &sm, &AliasMap::new()).unwrap();
        for c in Component::ALL {
            if let Some(m) = rep.metrics(c) {
                prop_assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0), "{:?}", c);
            }
            let k = rep.counts[&c];
            prop_assert_eq!((k.fp, k.fn_), (0, 0));
        }
        if let Some(a) = rep.aggregate {
            prop_assert_eq!(a.f1, 1.0);
        }
    }

    #[test]
    fn swapping_sides_swaps_fp_and_fn(a in machine(6, 8), b in machine(6, 8)) {
        let ab = all_counts(&a, &b, &AliasMap::new());
        let ba = all_counts(&b, &a, &AliasMap::new());
        for c in Component::ALL {
            prop_assert_eq!(ab[&c].tp, ba[&c].tp, "{:?}", c);
            prop_assert_eq!(ab[&c].fp, ba[&c].fn_, "{:?}", c);
            prop_assert_eq!(ab[&c].fn_, ba[&c].fp, "{:?}", c);
        }
    }

    #[test]
    fn dropping_a_generated_transition_never_helps(a in machine(6, 8), b in machine(6, 8), k in 0usize..8) {
        prop_assume!(!a.transitions.is_empty());
        let mut fewer = a.clone();
        fewer.transitions.remove(k % a.transitions.len());
        fewer.collect_events();
        let before = all_counts(&a, &b, &AliasMap::new())[&Component::Transitions];
        let after = all_counts(&fewer, &b, &AliasMap::new())[&Component::Transitions];
        prop_assert!(after.tp <= before.tp && after.tp + 1 >= before.tp);
        prop_assert!(after.fn_ >= before.fn_);
        prop_assert_eq!(after.tp + after.fp + 1, before.tp + before.fp);
    }

    #[test]
    fn matching_agrees_with_exhaustive_search(a in machine(6, 8), b in machine(6, 8)) {
        let sets = match_all(&a, &b, &AliasMap::new()).unwrap();
        let got = (
            sets.get(Component::Transitions).tp,
            sets.get(Component::Guards).tp,
            sets.get(Component::Actions).tp,
        );
        prop_assert_eq!(got, oracle(&a, &b));
    }

    #[test]
    fn umple_round_trip(sm in machine(6, 8)) {
        let text = emit_umple(&sm).unwrap();
        let back = parse_umple(&text, ParseMode::Strict).unwrap().machine;
        prop_assert_eq!(emit_umple(&back).unwrap(), text);
        prop_assert!(back.equivalent(&sm));
    }

    #[test]
    fn table_round_trip(sm in machine(6, 8)) {
        let (back, _) = finalize(&rows_from(&sm), &sm.name).unwrap();
        prop_assert!(back.equivalent(&sm), "{:?}\n{:?}", back, sm);
    }

    #[test]
    fn partial_tables_round_trip(sm in machine(6, 8)) {
        let rows = rows_from(&sm);
        let again = parse_response(&emit_partial(&rows)).model;
        prop_assert_eq!(again.states_rows, rows.states_rows);
        prop_assert_eq!(again.transition_rows, rows.transition_rows);
        prop_assert_eq!(again.structure_rows, rows.structure_rows);
    }

    #[test]
    fn dedupe_is_idempotent(sm in machine(6, 8), dup in proptest::collection::vec(0usize..8, 0..6)) {
        let mut rows = rows_from(&sm);
        for d in dup {
            if let Some(r) = rows.transition_rows.get(d % rows.transition_rows.len().max(1)).cloned() {
                rows.transition_rows.push(r);
            }
            if let Some(r) = rows.states_rows.get(d % rows.states_rows.len().max(1)).cloned() {
                rows.states_rows.push(r);
            }
        }
        let (once, _) = dedupe(&rows);
        let (twice, w) = dedupe(&once);
        prop_assert_eq!(&twice, &once);
        // guard conflicts persist by design; nothing is left to merge
        prop_assert!(w.iter().all(|w| !w.message.contains("keeping the union")));
        // rows sharing source, target, event and guard are one transition
        let keys: std::collections::BTreeSet<_> = sm
            .transitions
            .iter()
            .map(|t| (&t.source, &t.target, &t.event, &t.guard))
            .collect();
        if keys.len() == sm.transitions.len() {
            let (clean, _) = finalize(&once, "Gen").unwrap();
            prop_assert!(clean.equivalent(&sm));
        }
    }

    #[test]
    fn finalize_output_is_valid(rows in arbitrary_rows()) {
        match finalize(&rows, "Gen") {
            Ok((sm, _)) => prop_assert!(validate(&sm).is_empty(), "{:?}", validate(&sm)),
            Err(e) => prop_assert_eq!(e, PostError::FinalizeFailed),
        }
    }
}

const NOISY: [&str; 10] = ["Idle", "idle", "Running", "Stopped", "Ghost", "Waiting", "", "Done", "my state", "9lives"];

fn name() -> impl Strategy<Value = String> {
    proptest::sample::select(NOISY.to_vec()).prop_map(String::from)
}

fn arbitrary_rows() -> impl Strategy<Value = PartialModel> {
    let state_row = (name(), proptest::option::of(name()), proptest::option::of("[ab]"), 0u8..3).prop_map(
        |(name, parent, region, k)| StateRow {
            name,
            parent,
            region,
            kind: [RowKind::Simple, RowKind::Composite, RowKind::HistoryMarker][k as usize],
        },
    );
    let transition_row = (
        name(),
        name(),
        proptest::option::of("[a-z]{1,4}"),
        proptest::option::of("[a-z ()\\[]{0,6}"),
        proptest::collection::vec("[a-z;{}()]{0,5}", 0..3),
    )
        .prop_map(|(source, target, event, guard, actions)| TransitionRow {
            source,
            target,
            event,
            guard,
            actions,
        });
    let structure_row = (name(), "[ab]", proptest::collection::vec(name(), 0..3), any::<bool>()).prop_map(
        |(composite, region, substates, has_history)| StructureRow {
            composite,
            region,
            substates,
            has_history,
        },
    );
    (
        proptest::collection::vec(state_row, 0..6),
        proptest::collection::vec(transition_row, 0..6),
        proptest::collection::vec(structure_row, 0..3),
    )
        .prop_map(|(states_rows, transition_rows, structure_rows)| PartialModel {
            states_rows,
            transition_rows,
            structure_rows,
            ..Default::default()
        })
}
