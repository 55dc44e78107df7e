mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use common::*;
use mpcflow::graph::{BuildOptions, CircuitGraph, NodeId, NodeKind};
use mpcflow::oracle::{interpret, interpret_ir, matvec};
use mpcflow::runtime::RunError;
use mpcflow::sched::{
    classify_loop_inputs, validate_trace, BranchValue, InputClass, SchedError, SchedulerState, TraceEvent, TraceKind, FINISHED,
};
use mpcflow::Fp;
use rand::Rng;

/// Cleartext node value for driving the scheduler without the protocol.
#[derive(Clone, Debug, PartialEq)]
struct Clear(Vec<Fp>);

impl BranchValue for Clear {
    fn branch_condition(&self) -> Option<bool> {
        Some(!self.0[0].is_zero())
    }
}

fn eval(kind: &NodeKind, args: &[Clear], lanes: u32) -> Vec<Fp> {
    let a = |k: usize| args[k].0.as_slice();
    let zip = |f: fn(Fp, Fp) -> Fp| a(0).iter().zip(a(1)).map(|(&x, &y)| f(x, y)).collect();
    match kind {
        NodeKind::Adder | NodeKind::AddBatch => zip(|x, y| x + y),
        NodeKind::Subtract | NodeKind::SubBatch => zip(|x, y| x - y),
        NodeKind::Multiplier | NodeKind::MultBatch => zip(|x, y| x * y),
        NodeKind::ReduceAdd => vec![a(0).iter().fold(Fp::ZERO, |s, &x| s + x)],
        NodeKind::ReduceMul => vec![a(0).iter().fold(Fp::ONE, |s, &x| s * x)],
        NodeKind::Compare { pred } => {
            a(0).iter().zip(a(1)).map(|(x, y)| if pred.eval(x.signed(), y.signed()) { Fp::ONE } else { Fp::ZERO }).collect()
        }
        NodeKind::Load => {
            let s = a(1)[0].value() as usize;
            a(0)[s..s + lanes as usize].to_vec()
        }
        NodeKind::LinearLayer { din, dout } => matvec(a(1), a(0), a(2), *din as usize, *dout as usize),
        NodeKind::Root => args.first().map_or(Vec::new(), |v| v.0.clone()),
        k => panic!("{k:?} is not executed"),
    }
}

/// A gating query made mid-run: `is_loop_epoch_complete(h, b, e)`
/// returned `got` when the trace had `at` events and epoch `e` began at
/// event `start`.
struct Probe {
    at: usize,
    start: usize,
    h: NodeId,
    b: NodeId,
    e: u32,
    got: bool,
}

struct Drive {
    output: Vec<Fp>,
    trace: Vec<TraceEvent>,
    probes: Vec<Probe>,
}

fn back_edges(g: &CircuitGraph) -> Vec<(NodeId, NodeId)> {
    let mut v = Vec::new();
    for (&h, info) in &g.loops {
        for &b in &info.members {
            let t = *g.block_nodes(b).last().unwrap();
            if let NodeKind::Branch { targets } = &g.node(t).kind {
                if targets.contains(&h) {
                    v.push((h, t));
                }
            }
        }
    }
    v
}

fn new_state(g: &Arc<CircuitGraph>, inputs: &BTreeMap<String, Vec<Fp>>) -> SchedulerState<Clear> {
    let mut s = SchedulerState::new(g.clone(), true);
    for d in &g.inputs {
        s.bind_leaf(d.node, Clear(inputs[&d.name].clone()));
    }
    for n in &g.nodes {
        if let NodeKind::Const { values } = &n.kind {
            s.bind_leaf(n.id, Clear(values.clone()));
        }
    }
    s
}

/// Runs the scheduler to completion, completing in-flight nodes in a
/// random order. With `probe`, queries loop gating after every step.
fn drive(g: &Arc<CircuitGraph>, inputs: &BTreeMap<String, Vec<Fp>>, rng: &mut impl Rng, probe: bool) -> Result<Drive, SchedError> {
    let edges = back_edges(g);
    let mut s = new_state(g, inputs);
    s.start()?;
    let mut trace = Vec::new();
    let mut probes = Vec::new();
    let mut inflight: Vec<(NodeId, Vec<Fp>)> = Vec::new();
    loop {
        trace.extend(s.take_trace());
        if probe {
            for &(h, b) in &edges {
                let e = s.epochs().epoch(h);
                if e == 0 || e == FINISHED {
                    continue;
                }
                let start = trace.iter().rposition(|t| t.event == TraceKind::EpochAdvance && t.node == h && t.epoch == e).unwrap();
                probes.push(Probe { at: trace.len(), start, h, b, e, got: s.is_loop_epoch_complete(h, b, e) });
            }
        }
        if inflight.is_empty() || rng.gen_bool(0.5) {
            if let Some(iss) = s.next_ready_node()? {
                let v = eval(&iss.kind, &iss.args, g.node(iss.id).lanes);
                inflight.push((iss.id, v));
                continue;
            }
        }
        if inflight.is_empty() {
            break;
        }
        let (id, v) = inflight.swap_remove(rng.gen_range(0..inflight.len()));
        s.mark_complete(id, Clear(v))?;
    }
    trace.extend(s.take_trace());
    assert!(s.is_finished(), "scheduler stalled before the root");
    Ok(Drive { output: s.value(g.root).unwrap().0.clone(), trace, probes })
}

fn check_against_oracle(g: &Arc<CircuitGraph>, inputs: &BTreeMap<String, Vec<Fp>>, rng: &mut impl Rng) -> Drive {
    let want = interpret(g, inputs).unwrap();
    let d = drive(g, inputs, rng, true).unwrap();
    assert_eq!(d.output, want.output);
    let summary = validate_trace(g, &d.trace).unwrap();
    // nothing speculative: only blocks on the sequential path are entered
    let path: BTreeSet<NodeId> = want.path.iter().map(|&(l, _)| l).collect();
    assert_eq!(summary.entered, path);
    for &u in &summary.issued {
        assert!(path.contains(&g.node(u).block.unwrap()));
    }
    // every loop header's epoch count equals its visits within an activation
    for (&h, seq) in &summary.epochs {
        let entries = want.path.iter().filter(|&&(l, _)| l == h).count();
        assert_eq!(seq.iter().filter(|&&e| e != FINISHED).count(), entries);
    }
    check_probes(g, &d);
    d
}

/// Brute force for the gating probes: the back edge may be taken once
/// every compute node in the loop's blocks entered during epoch `e` has
/// completed since the epoch began.
fn check_probes(g: &CircuitGraph, d: &Drive) {
    for p in &d.probes {
        let info = &g.loops[&p.h];
        let end = d.trace[p.start + 1..]
            .iter()
            .position(|t| t.event == TraceKind::EpochAdvance && t.node == p.h)
            .map_or(d.trace.len(), |k| p.start + 1 + k);
        let mut blocks: BTreeSet<NodeId> = d.trace[p.start..end]
            .iter()
            .filter(|t| t.event == TraceKind::BlockEnter && info.contains(t.node))
            .map(|t| t.node)
            .collect();
        blocks.insert(p.h);
        let taken_here = d.trace[p.start..end].iter().any(|t| t.event == TraceKind::BranchTaken && t.node == p.b);
        let done_by_then: BTreeSet<NodeId> =
            d.trace[p.start..p.at].iter().filter(|t| t.event == TraceKind::Complete).map(|t| t.node).collect();
        let want = taken_here
            && blocks.iter().flat_map(|&b| g.block_nodes(b)).filter(|&u| g.node(u).kind.is_compute()).all(|u| done_by_then.contains(&u));
        assert_eq!(p.got, want, "loop {} branch {} epoch {} after {} events", p.h, p.b, p.e, p.at);
    }
}

fn params(g: &CircuitGraph, r: &mut impl Rng) -> BTreeMap<String, Vec<Fp>> {
    random_inputs(g, &[], r).params
}

#[test]
fn random_completion_orders_match_the_oracle_on_fixtures() {
    let mut r = rng(11);
    for name in FIXTURES {
        let g = graph(name, None);
        for _ in 0..20 {
            let inp = params(&g, &mut r);
            check_against_oracle(&g, &inp, &mut r);
        }
    }
}

#[test]
fn random_programs_agree_with_both_interpreters() {
    let mut r = rng(12);
    let mut probes = 0;
    for _ in 0..100 {
        let segs = r.gen_range(1..6);
        let text = common::gen::branchy(&mut r, segs);
        let g = Arc::new(mpcflow::compile(&text, None, &BuildOptions::default()).unwrap());
        let inp = params(&g, &mut r);
        let d = check_against_oracle(&g, &inp, &mut r);
        probes += d.probes.len();
        let m = mpcflow::ir::parse_module(&text).unwrap();
        let ir = interpret_ir(m.function("f").unwrap(), &inp, 1 << 20).unwrap();
        assert_eq!(d.output, ir, "{text}");
    }
    assert!(probes > 100);
}

#[test]
fn gating_matches_brute_force_on_loops() {
    let mut r = rng(13);
    let mut hits = (0, 0);
    for name in LOOP_FIXTURES {
        let g = graph(name, None);
        for _ in 0..30 {
            let mut inp = params(&g, &mut r);
            inp.insert("n".into(), vec![Fp::new(r.gen_range(1..5))]);
            let d = check_against_oracle(&g, &inp, &mut r);
            for p in &d.probes {
                if p.got {
                    hits.0 += 1;
                } else {
                    hits.1 += 1;
                }
            }
        }
    }
    assert!(hits.0 > 0 && hits.1 > 0, "{hits:?}");
}

fn nodes_of(g: &CircuitGraph, label: &str, f: impl Fn(&NodeKind) -> bool) -> Vec<NodeId> {
    g.block_nodes(g.label_by_name(label).unwrap()).into_iter().filter(|&u| f(&g.node(u).kind)).collect()
}

fn compile(text: &str) -> Arc<CircuitGraph> {
    Arc::new(mpcflow::compile(text, None, &BuildOptions::default()).unwrap())
}

const PRIV: &str = "@.priv = private constant [8 x i8] c\"private\\00\"\n";
const DECL: &str = "declare void @llvm.var.annotation.p0.p0(ptr, ptr, ptr, i32, ptr)\n";

fn annotate(params: &[&str]) -> String {
    params.iter().map(|p| format!("  call void @llvm.var.annotation.p0.p0(ptr %{p}, ptr @.priv, ptr @.priv, i32 1, ptr null)\n")).collect()
}

#[test]
fn heavy_work_goes_first() {
    let text = format!(
        "{PRIV}define i32 @f(i32 %x, i32 %y) {{\nentry:\n{}  %a = add i32 %x, %y\n  %m = mul i32 %x, %y\n  %r = add i32 %a, %m\n  ret i32 %r\n}}\n{DECL}",
        annotate(&["x", "y"])
    );
    let g = compile(&text);
    let inp = BTreeMap::from([("x".to_string(), vec![Fp::new(3)]), ("y".to_string(), vec![Fp::new(4)])]);
    let mut s = new_state(&g, &inp);
    s.start().unwrap();
    assert_eq!(s.queue_lengths(), (1, 1));
    let first = s.next_ready_node().unwrap().unwrap();
    assert_eq!(first.kind, NodeKind::Multiplier);
    let second = s.next_ready_node().unwrap().unwrap();
    assert_eq!(second.kind, NodeKind::Adder);
    // both queues empty
    assert!(s.next_ready_node().unwrap().is_none());
    s.mark_complete(second.id, Clear(vec![Fp::new(7)])).unwrap();
    assert!(s.next_ready_node().unwrap().is_none());
    s.mark_complete(first.id, Clear(vec![Fp::new(12)])).unwrap();
    let last = s.next_ready_node().unwrap().unwrap();
    assert_eq!(last.args, vec![Clear(vec![Fp::new(7)]), Clear(vec![Fp::new(12)])]);
    assert_eq!(s.mark_complete(first.id, Clear(vec![])), Err(SchedError::DoubleCompletion { node: first.id }));
    s.mark_complete(last.id, Clear(vec![Fp::new(19)])).unwrap();
    let root = s.next_ready_node().unwrap().unwrap();
    assert_eq!(root.id, g.root);
    assert!(!s.is_finished());
    s.mark_complete(root.id, Clear(vec![Fp::new(19)])).unwrap();
    assert!(s.is_finished());
}

#[test]
fn completing_an_unissued_node_is_rejected() {
    let g = graph("straight_line.ll", None);
    let mut r = rng(3);
    let mut s = new_state(&g, &params(&g, &mut r));
    s.start().unwrap();
    let adder = g.nodes.iter().find(|n| n.kind == NodeKind::Adder).unwrap().id;
    assert_eq!(s.mark_complete(adder, Clear(vec![Fp::ONE])), Err(SchedError::NotIssued { node: adder }));
}

/// A loop whose body holds two private multiplications, the second
/// feeding an adder, so the back edge waits on the first.
fn gated_loop() -> Arc<CircuitGraph> {
    compile(&format!(
        "{PRIV}define i32 @f(i32 %n, i32 %k) {{\nentry:\n{}  br label %header\n\
header:\n  %i = phi i32 [ 0, %entry ], [ %i.next, %body ]\n  %acc = phi i32 [ 0, %entry ], [ %a1, %body ]\n  %go = icmp slt i32 %i, %n\n  br i1 %go, label %body, label %exit\n\
body:\n  %t = mul i32 %k, %acc\n  %m2 = mul i32 %k, %k\n  %a1 = add i32 %m2, 1\n  %i.next = add i32 %i, 1\n  br label %header\n\
exit:\n  ret i32 %acc\n}}\n{DECL}",
        annotate(&["k"])
    ))
}

#[test]
fn blocked_back_edge_is_requeued_behind_ready_work() {
    let g = gated_loop();
    let inp = BTreeMap::from([("n".to_string(), vec![Fp::new(3)]), ("k".to_string(), vec![Fp::new(2)])]);
    let mut s = new_state(&g, &inp);
    s.start().unwrap();
    let header = g.label_by_name("header").unwrap();
    let body = g.label_by_name("body").unwrap();
    // the header's compare runs, then its branch enters the body
    let cmp = s.next_ready_node().unwrap().unwrap();
    assert!(matches!(cmp.kind, NodeKind::Compare { .. }));
    s.mark_complete(cmp.id, Clear(vec![Fp::ONE])).unwrap();
    let t = s.next_ready_node().unwrap().unwrap();
    assert!(s.is_entered(body));
    assert_eq!(s.epochs().epoch(header), 1);
    let m2 = s.next_ready_node().unwrap().unwrap();
    assert_eq!((t.kind.clone(), m2.kind.clone()), (NodeKind::Multiplier, NodeKind::Multiplier));
    let inc = s.next_ready_node().unwrap().unwrap();
    assert_eq!(inc.kind, NodeKind::Adder);
    s.mark_complete(inc.id, Clear(vec![Fp::ONE])).unwrap();

    let back = *nodes_of(&g, "body", |k| matches!(k, NodeKind::Branch { .. })).last().unwrap();
    assert!(!s.try_branch_once(back).unwrap());
    assert!(!s.is_loop_epoch_complete(header, back, 1));

    // the adder fed by m2 becomes ready behind the waiting branch
    s.mark_complete(m2.id, Clear(vec![Fp::new(4)])).unwrap();
    let a1 = s.next_ready_node().unwrap().unwrap();
    assert_eq!(a1.operands[0], m2.id);
    assert_eq!(s.epochs().epoch(header), 1);
    s.mark_complete(a1.id, Clear(vec![Fp::new(5)])).unwrap();
    assert!(s.next_ready_node().unwrap().is_none());
    assert!(!s.is_loop_epoch_complete(header, back, 1));

    // completing t releases the back edge and starts epoch 2
    s.mark_complete(t.id, Clear(vec![Fp::ZERO])).unwrap();
    assert!(s.is_loop_epoch_complete(header, back, 1));
    assert_eq!(s.epochs().stamp(header, t.id), 1);
    let next = s.next_ready_node().unwrap().unwrap();
    assert_eq!(s.epochs().epoch(header), 2);
    assert!(!s.is_entered(body));
    assert!(matches!(next.kind, NodeKind::Compare { .. }));
    // stamps from epoch 1 no longer satisfy epoch 2
    assert!(!s.is_loop_epoch_complete(header, back, 2));
    let trace = s.take_trace();
    assert!(trace.iter().any(|e| e.event == TraceKind::BranchStalled && e.node == back));
}

#[test]
fn stamps_follow_the_epoch() {
    let g = graph("loop.ll", None);
    let header = g.label_by_name("header").unwrap();
    let body_nodes = nodes_of(&g, "body", |k| k.is_compute());
    let inp = BTreeMap::from([("n".to_string(), vec![Fp::new(5)]), ("k".to_string(), vec![Fp::new(3)])]);
    let mut s = new_state(&g, &inp);
    s.start().unwrap();
    let mut seen = BTreeSet::new();
    loop {
        if let Some(iss) = s.next_ready_node().unwrap() {
            let v = eval(&iss.kind, &iss.args, g.node(iss.id).lanes);
            let e = s.epochs().epoch(header);
            s.mark_complete(iss.id, Clear(v)).unwrap();
            if body_nodes.contains(&iss.id) {
                assert_eq!(s.epochs().stamp(header, iss.id), e);
                seen.insert(e);
            }
        } else {
            break;
        }
    }
    assert!(s.is_finished());
    assert_eq!(seen, (1..=5).collect());
    assert_eq!(s.epochs().epoch(header), FINISHED);
    assert_eq!(s.value(g.root).unwrap().0, vec![Fp::new(45)]);
}

#[test]
fn diamond_phi_takes_the_entered_side() {
    let g = graph("diamond.ll", None);
    let mut r = rng(5);
    for n in [2u32, 9] {
        let mut inp = params(&g, &mut r);
        inp.insert("n".into(), vec![Fp::new(n)]);
        let d = drive(&g, &inp, &mut r, false).unwrap();
        let summary = validate_trace(&g, &d.trace).unwrap();
        let small = g.label_by_name("small").unwrap();
        let large = g.label_by_name("large").unwrap();
        assert_eq!(summary.entered.contains(&small), n < 5);
        assert_eq!(summary.entered.contains(&large), n >= 5);
        assert_eq!(d.output, interpret(&g, &inp).unwrap().output);
    }
}

#[test]
fn header_reentry_regates_only_iterative_inputs() {
    let g = graph("loop.ll", None);
    let header = g.label_by_name("header").unwrap();
    let classes = classify_loop_inputs(&g);
    let t = nodes_of(&g, "body", |k| *k == NodeKind::Multiplier)[0];
    let k = g.input_by_name("k").unwrap().node;
    let i = nodes_of(&g, "header", |k| matches!(k, NodeKind::Phi { .. }))[0];
    let ct = &classes[&t];
    assert!(ct.contains(&(k, InputClass::Stable)));
    assert!(ct.contains(&(i, InputClass::Iterative)));
    let acc = nodes_of(&g, "header", |k| matches!(k, NodeKind::Phi { .. }))[1];
    let acc_next = nodes_of(&g, "body", |k| *k == NodeKind::Adder)[0];
    assert!(classes[&acc_next].contains(&(acc, InputClass::Iterative)));
    assert!(classes[&acc].iter().any(|&(p, c)| p == acc_next && c == InputClass::Iterative));

    // drive into epoch 2 and look at t right after re-entry
    let inp = BTreeMap::from([("n".to_string(), vec![Fp::new(4)]), ("k".to_string(), vec![Fp::new(3)])]);
    let mut s = new_state(&g, &inp);
    s.start().unwrap();
    while s.epochs().epoch(header) < 2 {
        let iss = s.next_ready_node().unwrap().unwrap();
        let v = eval(&iss.kind, &iss.args, g.node(iss.id).lanes);
        s.mark_complete(iss.id, Clear(v)).unwrap();
    }
    assert!(s.is_done(k));
    assert!(!s.is_done(t));
    assert_eq!(s.pending(t), 0, "the phi i is resolved at entry and k stays done");
    assert_eq!(s.base_unlock(t), 2);
}

#[test]
fn classification_matches_producer_blocks() {
    let mut r = rng(21);
    let mut seen = (0, 0);
    for _ in 0..100 {
        let segs = r.gen_range(1..6);
        let g = compile(&common::gen::branchy(&mut r, segs));
        let classes = classify_loop_inputs(&g);
        for node in &g.nodes {
            let Some(b) = node.block else { continue };
            // innermost loop: the smallest one containing the block
            let inner = g.loops.values().filter(|l| l.contains(b)).min_by_key(|l| l.members.len());
            let Some(l) = inner else {
                assert!(!classes.contains_key(&node.id));
                continue;
            };
            let producers: Vec<NodeId> = match &node.kind {
                NodeKind::Phi { incoming } => incoming.iter().map(|&(_, v)| v).collect(),
                _ => node.operands.clone(),
            };
            let got = &classes[&node.id];
            assert_eq!(got.len(), producers.len());
            for (&p, &(q, c)) in producers.iter().zip(got) {
                assert_eq!(p, q);
                let inside = g.node(p).block.is_some_and(|pb| l.members.contains(&pb));
                assert_eq!(c == InputClass::Iterative, inside);
                if inside {
                    seen.0 += 1;
                } else {
                    seen.1 += 1;
                }
            }
        }
    }
    assert!(seen.0 > 0 && seen.1 > 0);
}

#[test]
fn loop_invariant_load_is_stable() {
    let text = format!(
        "{PRIV}define i32 @f(i32 %n, ptr noundef dereferenceable(16) %x) {{\nentry:\n{}  %p = getelementptr inbounds i32, ptr %x, i32 2\n  %v = load i32, ptr %p, align 4\n  br label %h\n\
h:\n  %i = phi i32 [ 0, %entry ], [ %i.next, %b ]\n  %s = phi i32 [ 0, %entry ], [ %s.next, %b ]\n  %c = icmp slt i32 %i, %n\n  br i1 %c, label %b, label %e\n\
b:\n  %s.next = add i32 %s, %v\n  %i.next = add i32 %i, 1\n  br label %h\n\
e:\n  ret i32 %s\n}}\n{DECL}",
        annotate(&["x"])
    );
    let g = compile(&text);
    let load = g.nodes.iter().find(|n| n.kind == NodeKind::Load).unwrap().id;
    let add = nodes_of(&g, "b", |k| *k == NodeKind::Adder)[0];
    assert!(classify_loop_inputs(&g)[&add].contains(&(load, InputClass::Stable)));
    let mut r = rng(2);
    let inp = BTreeMap::from([
        ("n".to_string(), vec![Fp::new(3)]),
        ("x".to_string(), vec![Fp::new(1), Fp::new(2), Fp::new(10), Fp::new(4)]),
    ]);
    assert_eq!(check_against_oracle(&g, &inp, &mut r).output, vec![Fp::new(30)]);
}

#[test]
fn loops_in_sequence_each_count_their_own_epochs() {
    let g = graph("loop_after_loop.ll", None);
    let inp = BTreeMap::from([
        ("n".to_string(), vec![Fp::new(3)]),
        ("m".to_string(), vec![Fp::new(2)]),
        ("k".to_string(), vec![Fp::new(5)]),
    ]);
    let d = check_against_oracle(&g, &inp, &mut rng(8));
    let summary = validate_trace(&g, &d.trace).unwrap();
    let first = g.label_by_name("first").unwrap();
    let second = g.label_by_name("second").unwrap();
    assert_eq!(summary.epochs[&first], vec![1, 2, 3, 4, FINISHED]);
    assert_eq!(summary.epochs[&second], vec![1, 2, 3, FINISHED]);
    assert_eq!(d.output, vec![Fp::new((125 + 3) * 4)]);
}

#[test]
fn inner_loop_restarts_its_epochs_each_outer_iteration() {
    let g = graph("nested_loop.ll", None);
    let inp = BTreeMap::from([
        ("n".to_string(), vec![Fp::new(2)]),
        ("m".to_string(), vec![Fp::new(3)]),
        ("x".to_string(), vec![Fp::new(1), Fp::new(2), Fp::new(3), Fp::new(4)]),
    ]);
    let d = check_against_oracle(&g, &inp, &mut rng(9));
    let summary = validate_trace(&g, &d.trace).unwrap();
    let inner = g.label_by_name("inner").unwrap();
    assert_eq!(summary.epochs[&inner], vec![1, 2, 3, 4, FINISHED, 1, 2, 3, 4, FINISHED]);
    // sum_i sum_j x_j (i + 1) + x_j^2 over i < 2, j < 3
    assert_eq!(d.output, vec![Fp::new(6 * 3 + 2 * 14)]);
}

#[test]
fn corrupted_traces_are_caught() {
    let g = graph("loop.ll", None);
    let inp = BTreeMap::from([("n".to_string(), vec![Fp::new(2)]), ("k".to_string(), vec![Fp::new(3)])]);
    let d = drive(&g, &inp, &mut rng(4), false).unwrap();
    validate_trace(&g, &d.trace).unwrap();
    // move the first completion ahead of its issue
    let mut t = d.trace.clone();
    let c = t.iter().position(|e| e.event == TraceKind::Complete && g.node(e.node).kind.is_compute()).unwrap();
    let i = t.iter().position(|e| e.event == TraceKind::Issue && e.node == t[c].node).unwrap();
    t.swap(i, c);
    assert!(validate_trace(&g, &t).is_err());
    // drop an epoch advance
    let mut t = d.trace.clone();
    let k = t.iter().position(|e| e.event == TraceKind::EpochAdvance && e.epoch == 2).unwrap();
    t.remove(k);
    assert!(validate_trace(&g, &t).is_err());
}

#[test]
fn secret_branch_is_refused() {
    let g = graph("secret_branch.ll", None);
    let inp = inputs(&[("a", vec![1]), ("b", vec![0]), ("v", vec![5])]);
    let out = run(&g, &inp, 2, 1);
    for p in &out.parties {
        assert!(matches!(p, Err(RunError::Sched(SchedError::SecretControlFlow { .. }))), "{p:?}");
    }
    // the cleartext scheduler refuses too, before resolving the condition
    let mut s = new_state(&g, &inp.params);
    s.start().unwrap();
    let err = loop {
        match s.next_ready_node() {
            Ok(Some(iss)) => {
                let v = eval(&iss.kind, &iss.args, g.node(iss.id).lanes);
                s.mark_complete(iss.id, Clear(v)).unwrap();
            }
            Ok(None) => panic!("stalled"),
            Err(e) => break e,
        }
    };
    assert!(matches!(err, SchedError::SecretControlFlow { .. }));
    assert!(!s.is_entered(g.label_by_name("yes").unwrap()));
}
