use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::geom::{compose, inverse, DeltaAction, Pose, Vec3, MATH_TOL, SIM_TOL};
use crate::policy::{rollout, Controller, FitConfig, OracleExpert, OracleGate, PolicyModel};
use crate::world::{
    goal_satisfied, observe, reset, step, ContactEvent, CorruptionModel, Criterion, ObjectId, Role, TaskSpec, WorldState,
};

fn expert_episode(task: &TaskSpec, seed: u64) -> Episode {
    rollout(task, &CorruptionModel::none(), seed, Controller::Expert(&OracleExpert::default()), None).unwrap()
}

fn relabel(ep: &mut Episode, spans: &[(usize, usize, Actor)]) {
    for &(a, b, actor) in spans {
        for s in &mut ep.steps[a..b] {
            s.actor = actor;
        }
    }
}

fn peg_fixture() -> (TaskSpec, Dataset, PolicyModel, SourceDataset) {
    let task = TaskSpec::planar_peg_insert();
    let (base, _) = collect_demos(&task, &CorruptionModel::none(), &OracleExpert::default(), 10, 1, Provenance::Base).unwrap();
    let model = PolicyModel::fit(&base, &FitConfig::default()).unwrap();
    let (src, _) =
        collect_interventions(&task, &CorruptionModel::peg_noise(), &model, &OracleGate::for_task(&task), 4, 2).unwrap();
    (task, base, model, src)
}

/// Ten clean demos expanded by demonstration-mode generation, as the base arm.
fn expanded_base_model(task: &TaskSpec, n: usize) -> PolicyModel {
    let (demos, _) = collect_demos(task, &CorruptionModel::none(), &OracleExpert::default(), 10, 1, Provenance::Base).unwrap();
    let index = SourceIndex::build(task, &demos.episodes).unwrap();
    let cfg = GenerationConfig { mode: GenerationMode::Demo, provenance: Provenance::Base, ..GenerationConfig::default() };
    let z = CorruptionModel::none();
    let ctx = GenerationContext { task, z: &z, policy: None, sources: &index, config: &cfg };
    PolicyModel::fit(&generate(&ctx, n, 5).unwrap().dataset, &FitConfig::default()).unwrap()
}

#[test]
fn all_policy_trajectory_is_one_segment() {
    let task = TaskSpec::planar_peg_insert();
    let mut ep = expert_episode(&task, 0);
    let n = ep.steps.len();
    relabel(&mut ep, &[(0, n, Actor::Policy)]);
    let segs = segment(&task, &ep);
    assert_eq!(segs.len(), 1);
    assert_eq!((segs[0].start, segs[0].end, segs[0].actor), (0, n, Actor::Policy));
}

#[test]
fn policy_then_expert_splits_in_two() {
    let task = TaskSpec::planar_peg_insert();
    let mut ep = expert_episode(&task, 0);
    ep.steps.truncate(60);
    assert_eq!(ep.steps.len(), 60);
    relabel(&mut ep, &[(0, 40, Actor::Policy), (40, 60, Actor::Expert)]);
    let segs = segment(&task, &ep);
    let spans: Vec<_> = segs.iter().map(|s| (s.start, s.end, s.actor)).collect();
    assert_eq!(spans, vec![(0, 40, Actor::Policy), (40, 60, Actor::Expert)]);
}

#[test]
fn alternating_labels_give_four_segments() {
    let task = TaskSpec::planar_peg_insert();
    let mut ep = expert_episode(&task, 3);
    let n = ep.steps.len();
    relabel(&mut ep, &[(0, 10, Actor::Policy), (10, 20, Actor::Expert), (20, 30, Actor::Policy), (30, n, Actor::Expert)]);
    let segs = segment(&task, &ep);
    assert_eq!(segs.len(), 4);
    let states = ep.states(&task).unwrap();
    let recoveries: Vec<_> = segs.iter().filter(|s| s.actor == Actor::Expert).collect();
    assert_eq!(recoveries.len(), 2);
    for r in recoveries {
        assert_eq!(r.reference_pose, states[r.start].object(ObjectId::Peg).copied());
    }
    // Spans partition the trajectory.
    assert_eq!(segs[0].start, 0);
    assert!(segs.windows(2).all(|w| w[0].end == w[1].start));
    assert_eq!(segs[3].end, n);
}

#[test]
fn termination_is_first_firing_step() {
    let task = TaskSpec::planar_peg_insert();
    let mut ep = expert_episode(&task, 0);
    assert_eq!(detect_termination(&task, &ep.steps, Criterion::Contact), None);
    ep.steps[37].contact = Some(ContactEvent { objects: (ObjectId::Nut, ObjectId::Peg), location: Vec3::ZERO, step: 37 });
    ep.steps[50].contact = ep.steps[37].contact;
    assert_eq!(detect_termination(&task, &ep.steps, Criterion::Contact), Some(37));
}

#[test]
fn wrong_handle_grasp_terminates_when_gripper_closes_empty() {
    let task = TaskSpec::geometry_assembly();
    let (src, _) = offline_collect(&task, &CorruptionModel::none(), &OracleExpert::default(), &[ScriptedMistake::wrong_handle()], 1, 4)
        .unwrap();
    let ep = &src.episodes[0];
    let t = detect_termination(&task, &ep.steps, Criterion::GripperClosedEmpty).unwrap();
    let states = ep.states(&task).unwrap();
    // Oracle: the first recorded state with a fully closed, empty gripper.
    let expected = states.iter().position(|s| s.gripper_width == 0.0 && s.held.is_none()).unwrap();
    assert_eq!(t, expected);
    assert_eq!(ep.header.termination, Some(t as u32));
    assert!(ep.steps[..t].iter().all(|s| s.actor == Actor::Policy));
    assert!(ep.steps[t..].iter().all(|s| s.actor == Actor::Expert));
    assert!(ep.goal);
}

fn first_piece(task: &TaskSpec, ep: &Episode) -> (Piece, WorldState) {
    let p = pieces(task, ep).unwrap().remove(0);
    let state = ep.states(task).unwrap()[p.segment.start].clone();
    (p, state)
}

#[test]
fn identity_adapt_reproduces_source() {
    let task = TaskSpec::planar_peg_insert();
    let ep = expert_episode(&task, 5);
    let (p, state) = first_piece(&task, &ep);
    let plan = adapt(&state, &task, &p).unwrap();
    assert_eq!(plan.bridge_len, 0);
    assert_eq!(plan.poses.len(), p.poses.len());
    for (a, b) in plan.poses.poses().iter().zip(p.poses.poses()) {
        assert!(a.approx_eq(b, MATH_TOL));
    }
    let mut out = Vec::new();
    let end = replay(&task, state, &plan, Actor::Expert, &mut out).unwrap();
    let source_end = ep.states(&task).unwrap()[p.segment.end].clone();
    assert!(end.ee_pose.approx_eq(&source_end.ee_pose, SIM_TOL));
    assert_eq!(goal_satisfied(&end, &task), goal_satisfied(&source_end, &task));
    assert!(goal_satisfied(&end, &task));
    assert_eq!(out.len(), p.actions.len());
}

#[test]
fn shifted_object_shifts_suffix() {
    let task = TaskSpec::planar_peg_insert();
    let ep = expert_episode(&task, 5);
    let (p, mut state) = first_piece(&task, &ep);
    let shift = Vec3::new(0.05, 0.0, 0.0);
    for o in state.objects.iter_mut().filter(|o| o.id == ObjectId::Peg) {
        o.pose.position += shift;
    }
    let plan = adapt(&state, &task, &p).unwrap();
    let suffix = &plan.poses.poses()[plan.bridge_len..];
    assert_eq!(suffix.len(), p.poses.len());
    let src = p.reference();
    let dst = *state.object(ObjectId::Peg).unwrap();
    for (out, orig) in suffix.iter().zip(p.poses.poses()) {
        assert!((out.position - (orig.position + shift)).max_abs() < MATH_TOL);
        let lhs = compose(&inverse(&dst), out);
        let rhs = compose(&inverse(&src), orig);
        assert!(lhs.approx_eq(&rhs, MATH_TOL));
    }
}

#[test]
fn bridge_length_matches_distance() {
    let task = TaskSpec::planar_peg_insert();
    let ep = expert_episode(&task, 5);
    let (p, mut state) = first_piece(&task, &ep);
    let head = p.poses.first().position;
    let far = head + Vec3::new(0.0, 0.0, 0.0237);
    state.ee_pose = Pose::new(far, state.ee_pose.orientation);
    for o in state.objects.iter_mut().filter(|o| o.id == ObjectId::Nut) {
        o.pose.position += Vec3::new(0.0, 0.0, 0.0237);
    }
    let plan = adapt(&state, &task, &p).unwrap();
    let expected = libm::ceil(0.0237 / task.limits.max_step_translation) as usize;
    assert_eq!(plan.bridge_len, expected);
    assert_eq!(plan.poses.len(), expected + p.poses.len());
}

#[test]
fn adapt_rejects_poses_outside_workspace() {
    let task = TaskSpec::planar_peg_insert();
    let ep = expert_episode(&task, 5);
    let (p, mut state) = first_piece(&task, &ep);
    for o in state.objects.iter_mut().filter(|o| o.id == ObjectId::Peg) {
        o.pose.position.x += 0.25;
    }
    assert!(matches!(adapt(&state, &task, &p), Err(AdaptError::OutsideWorkspace { .. })));
}

#[test]
fn single_pose_plan_replays_nothing() {
    let task = TaskSpec::planar_peg_insert();
    let s = reset(&task, &CorruptionModel::none(), 0).unwrap();
    let plan = ReplayPlan { poses: crate::geom::PoseSequence::single(s.ee_pose), actions: Vec::new(), bridge_len: 0 };
    let mut out = Vec::new();
    let end = replay(&task, s.clone(), &plan, Actor::Expert, &mut out).unwrap();
    assert!(out.is_empty());
    assert_eq!(end, s);
}

#[test]
fn straight_descent_onto_peg_reaches_goal() {
    let task = TaskSpec::planar_peg_insert();
    let mut s = reset(&task, &CorruptionModel::none(), 0).unwrap();
    let peg = s.object(ObjectId::Peg).unwrap().position;
    let start = Pose::from_translation(Vec3::new(peg.x, peg.y, peg.z + 0.065));
    s.ee_pose = start;
    for o in s.objects.iter_mut().filter(|o| o.id == ObjectId::Nut) {
        o.pose = start;
    }
    let poses: Vec<Pose> =
        (0..10).map(|i| Pose::from_translation(start.position - Vec3::new(0.0, 0.0, 0.005 * i as f64))).collect();
    let actions = poses.windows(2).map(|w| crate::geom::delta_between(&w[0], &w[1])).collect();
    let plan = ReplayPlan { poses: crate::geom::PoseSequence::new(poses).unwrap(), actions, bridge_len: 0 };
    let mut out = Vec::new();
    let end = replay(&task, s, &plan, Actor::Expert, &mut out).unwrap();
    assert_eq!(out.len(), 9);
    assert!(out.iter().all(|s| s.actor == Actor::Expert));
    assert!(goal_satisfied(&end, &task));
}

#[test]
fn source_index_recoveries_are_expert_only() {
    let (task, _, _, src) = peg_fixture();
    let index = SourceIndex::build(&task, &src.episodes).unwrap();
    for e in &index.entries {
        let r = e.recovery(0).unwrap();
        assert_eq!(r.segment.actor, Actor::Expert);
        let labels = &e.episode.steps[r.segment.start..r.segment.end];
        assert!(labels.iter().all(|s| s.actor == Actor::Expert));
    }
}

#[test]
fn collected_interventions_contain_expert_and_reach_goal() {
    let (task, _, _, src) = peg_fixture();
    assert_eq!(src.len(), 4);
    for e in &src.episodes {
        assert!(e.goal && e.has_expert());
        assert_eq!(e.verify(&task), Ok(true));
        let t = e.header.termination.unwrap() as usize;
        assert!(e.steps[t].contact.is_some());
        assert_eq!(e.steps[t].actor, Actor::Expert);
    }
}

#[test]
fn collection_without_corruption_reports_no_mistake() {
    let task = TaskSpec::planar_peg_insert();
    let model = expanded_base_model(&task, 300);
    let err = collect_interventions(&task, &CorruptionModel::none(), &model, &OracleGate::for_task(&task), 1, 2).unwrap_err();
    assert_eq!(err, CollectError::NoMistake { attempts: NO_MISTAKE_LIMIT as u64 });
}

#[test]
fn collection_is_deterministic() {
    let (_, _, model, a) = peg_fixture();
    let task = TaskSpec::planar_peg_insert();
    let (b, _) =
        collect_interventions(&task, &CorruptionModel::peg_noise(), &model, &OracleGate::for_task(&task), 4, 2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scripted_shift_makes_contact_then_recovers() {
    let task = TaskSpec::planar_peg_insert();
    let (src, report) =
        offline_collect(&task, &CorruptionModel::none(), &OracleExpert::default(), &[ScriptedMistake::shift(0.03, 0.0)], 3, 9)
            .unwrap();
    assert_eq!(report.no_mistake, 0);
    for e in &src.episodes {
        let t = e.header.termination.unwrap() as usize;
        assert!(e.steps[t].contact.is_some());
        assert!(e.steps[..t].iter().all(|s| s.actor == Actor::Policy && s.contact.is_none()));
        assert!(e.goal);
        assert_eq!(e.verify(&task), Ok(true));
    }
}

#[test]
fn empty_script_gives_plain_demos() {
    let task = TaskSpec::planar_peg_insert();
    let (src, report) = offline_collect(&task, &CorruptionModel::none(), &OracleExpert::default(), &[], 2, 9).unwrap();
    assert_eq!(report.no_mistake, 2);
    for e in &src.episodes {
        assert_eq!(e.header.termination, None);
        assert!(e.steps.iter().all(|s| s.actor == Actor::Expert));
    }
}

fn run_generate(task: &TaskSpec, z: &CorruptionModel, model: &PolicyModel, src: &SourceDataset, config: &GenerationConfig, n: usize, seed: u64) -> Result<Generated, GenerateError> {
    let sources = SourceIndex::build(task, &src.episodes).unwrap();
    let ctx = GenerationContext { task, z, policy: Some(model), sources: &sources, config };
    generate(&ctx, n, seed)
}

fn audit(task: &TaskSpec, g: &Generated) {
    assert!(g.report.reconciles());
    assert_eq!(g.report.successes as usize, g.dataset.len());
    for e in &g.dataset.episodes {
        assert!(e.goal);
        assert_eq!(e.verify(task), Ok(true));
        if let Some(t) = e.header.termination {
            assert_eq!(e.steps[0].t, t);
            assert!(e.steps.iter().all(|s| s.t >= t));
        }
        assert!(e.steps.windows(2).all(|w| w[1].t == w[0].t + 1));
    }
}

#[test]
fn generated_episodes_pass_goal_and_suffix_filters() {
    let (task, _, model, src) = peg_fixture();
    let z = CorruptionModel::peg_noise();
    let g = run_generate(&task, &z, &model, &src, &GenerationConfig::default(), 30, 5).unwrap();
    assert_eq!(g.dataset.len(), 30);
    audit(&task, &g);
    for e in &g.dataset.episodes {
        assert_eq!(e.steps[0].actor, Actor::Expert);
        assert!(e.steps[0].contact.is_some());
        assert_eq!(e.header.provenance, Provenance::Synthetic);
    }
    // Fresh corruption: no generated offset copies a source offset or another episode's.
    let mut offsets: Vec<Vec3> = g.dataset.episodes.iter().map(|e| e.header.draw.offsets[0][0]).collect();
    offsets.extend(src.episodes.iter().map(|e| e.header.draw.offsets[0][0]));
    for i in 0..offsets.len() {
        for j in i + 1..offsets.len() {
            assert_ne!(offsets[i], offsets[j]);
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let (task, _, model, src) = peg_fixture();
    let z = CorruptionModel::peg_noise();
    let a = run_generate(&task, &z, &model, &src, &GenerationConfig::default(), 5, 8).unwrap();
    let b = run_generate(&task, &z, &model, &src, &GenerationConfig::default(), 5, 8).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.report, b.report);
}

#[test]
fn without_corruption_no_mistake_dominates() {
    let (task, _, _, src) = peg_fixture();
    let model = expanded_base_model(&task, 300);
    let cfg = GenerationConfig { attempt_factor: 5, ..GenerationConfig::default() };
    let err = run_generate(&task, &CorruptionModel::none(), &model, &src, &cfg, 4, 3).unwrap_err();
    let GenerateError::CapReached(g) = err else { panic!("expected cap") };
    assert_eq!(g.report.attempts, 20);
    assert!(g.report.failures.no_mistake * 2 > g.report.attempts);
    assert!(g.report.reconciles());
}

#[test]
fn keep_no_mistake_retains_plain_rollouts() {
    let (task, _, model, src) = peg_fixture();
    let cfg = GenerationConfig { keep_no_mistake: true, ..GenerationConfig::default() };
    let g = run_generate(&task, &CorruptionModel::none(), &model, &src, &cfg, 3, 3).unwrap();
    audit(&task, &g);
    assert!(g.dataset.episodes.iter().all(|e| e.header.termination.is_none() && !e.has_expert()));
}

#[test]
fn no_policy_mode_copies_source_offsets() {
    let (task, _, model, src) = peg_fixture();
    let cfg = GenerationConfig { mode: GenerationMode::NoPolicy, ..GenerationConfig::default() };
    let g = run_generate(&task, &CorruptionModel::peg_noise(), &model, &src, &cfg, 20, 4).unwrap();
    audit(&task, &g);
    let source_offsets: Vec<Vec3> = src.episodes.iter().map(|e| e.header.draw.offsets[0][0]).collect();
    for e in &g.dataset.episodes {
        assert!(source_offsets.contains(&e.header.draw.offsets[0][0]));
        assert!(e.steps.iter().any(|s| s.actor == Actor::Expert));
    }
}

#[test]
fn demo_mode_expands_demonstrations() {
    let task = TaskSpec::geometry_assembly();
    let z = CorruptionModel::geometry_flip(0.0);
    let (demos, _) = collect_demos(&task, &z, &OracleExpert::default(), 3, 1, Provenance::Base).unwrap();
    let sources = SourceIndex::build(&task, &demos.episodes).unwrap();
    let cfg = GenerationConfig { mode: GenerationMode::Demo, provenance: Provenance::Base, ..GenerationConfig::default() };
    let ctx = GenerationContext { task: &task, z: &z, policy: None, sources: &sources, config: &cfg };
    let g = generate(&ctx, 10, 2).unwrap();
    audit(&task, &g);
    assert!(g.dataset.episodes.iter().all(|e| e.steps[0].t == 0 && e.header.termination.is_none()));
    assert!(g.dataset.episodes.iter().flat_map(|e| &e.steps).all(|s| !s.obs.feedback.active));
}

#[test]
fn offline_sources_feed_generation() {
    let task = TaskSpec::planar_peg_insert();
    let (base, _) = collect_demos(&task, &CorruptionModel::none(), &OracleExpert::default(), 10, 1, Provenance::Base).unwrap();
    let model = PolicyModel::fit(&base, &FitConfig::default()).unwrap();
    let script = [ScriptedMistake::shift(0.03, 0.0), ScriptedMistake::shift(0.0, -0.03)];
    let (src, _) = offline_collect(&task, &CorruptionModel::none(), &OracleExpert::default(), &script, 4, 9).unwrap();
    let g = run_generate(&task, &CorruptionModel::peg_noise(), &model, &src, &GenerationConfig::default(), 5, 5).unwrap();
    audit(&task, &g);
}

#[test]
fn assembler_counts_in_index_order() {
    let task = TaskSpec::planar_peg_insert();
    let ep = expert_episode(&task, 0);
    let mut asm = Assembler::new(&task, 2, 3);
    assert_eq!(asm.cap(), 6);
    asm.push(0, 10, Err(Failure::Horizon));
    asm.push(1, 11, Ok(ep.clone()));
    asm.push(2, 12, Err(Failure::NoMistake));
    asm.push(3, 13, Ok(ep.clone()));
    assert!(asm.done());
    let g = asm.finish().unwrap();
    assert_eq!(g.report.attempts, 4);
    assert_eq!(g.report.failures.horizon, 1);
    assert_eq!(g.report.failures.no_mistake, 1);
    assert!(g.report.reconciles());
    assert_eq!(g.report.episodes.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![10, 11, 12, 13]);
}

#[test]
fn aggregate_preserves_counts_and_order() {
    let task = TaskSpec::planar_peg_insert();
    let (base, _) = collect_demos(&task, &CorruptionModel::none(), &OracleExpert::default(), 3, 1, Provenance::Base).unwrap();
    let empty = Dataset::new(task.clone());
    assert_eq!(aggregate(&base, &empty).unwrap(), base);
    let synth = base.clone().with_provenance(Provenance::Synthetic);
    let both = aggregate(&base, &synth).unwrap();
    assert_eq!(both.len(), 6);
    assert_eq!((both.count(Provenance::Base), both.count(Provenance::Synthetic)), (3, 3));
    assert_eq!(both.episodes[..3], base.episodes[..]);
    let left = aggregate(&aggregate(&base, &synth).unwrap(), &base).unwrap();
    let right = aggregate(&base, &aggregate(&synth, &base).unwrap()).unwrap();
    assert_eq!(left, right);
    let other = Dataset::new(TaskSpec::geometry_assembly());
    assert_eq!(aggregate(&base, &other).unwrap_err(), DatasetError::LayoutMismatch);
}

#[test]
fn human_filter_keeps_only_expert_steps() {
    let (_, _, _, src) = peg_fixture();
    let f = src.human_filtered();
    assert_eq!(f.len(), src.len());
    assert!(f.episodes.iter().flat_map(|e| &e.steps).all(|s| s.actor == Actor::Expert));
    assert_eq!(f.step_count(), src.episodes.iter().map(|e| e.expert_steps()).sum::<usize>());
}

#[test]
fn replay_records_robot_observations() {
    let task = TaskSpec::planar_peg_insert();
    let z = CorruptionModel::peg_noise();
    let s = reset(&task, &z, 4).unwrap();
    let a = DeltaAction::translate(0.003, 0.0, 0.0);
    let plan = ReplayPlan {
        poses: crate::geom::PoseSequence::new(vec![s.ee_pose, step(&task, &s, &a).unwrap().0.ee_pose]).unwrap(),
        actions: vec![a],
        bridge_len: 0,
    };
    let mut out = Vec::new();
    replay(&task, s.clone(), &plan, Actor::Expert, &mut out).unwrap();
    assert_eq!(out[0].obs, observe(&s, &task, Role::Robot));
    assert_ne!(out[0].obs, observe(&s, &task, Role::Expert));
}
