use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::datagen::{collect_demos, collect_interventions, Dataset, Provenance};
use crate::geom::{ControllerLimits, DeltaAction, GripperCommand, Vec3};
use crate::world::{observe, reset, CorruptionModel, ObjectId, Role, TaskSpec};

fn peg_rows(n: usize, provenance: Provenance) -> Vec<TrainingRow> {
    let task = TaskSpec::planar_peg_insert();
    let layout = FeatureLayout::for_task(&task);
    let s = reset(&task, &CorruptionModel::none(), 0).unwrap();
    let mut obs = observe(&s, &task, Role::Robot);
    (0..n)
        .map(|i| {
            obs.ee_pose.position.x = i as f64 * 1e-3;
            TrainingRow { features: layout.extract(&obs), action: DeltaAction::translate(0.001, 0.0, 0.0), provenance }
        })
        .collect()
}

fn small_demos(task: &TaskSpec, n: usize) -> Dataset {
    collect_demos(task, &CorruptionModel::none(), &OracleExpert::default(), n, 7, Provenance::Base).unwrap().0
}

#[test]
fn single_step_dataset_is_memorized() {
    let task = TaskSpec::planar_peg_insert();
    let mut d = small_demos(&task, 1);
    d.episodes[0].steps.truncate(1);
    let m = PolicyModel::fit(&d, &FitConfig { k: 1, ..FitConfig::default() }).unwrap();
    let s = &d.episodes[0].steps[0];
    assert_eq!(m.act(&s.obs), s.action);
}

#[test]
fn k1_memorizes_every_training_pair() {
    for task in [TaskSpec::planar_peg_insert(), TaskSpec::geometry_assembly()] {
        let d = small_demos(&task, 5);
        let m = PolicyModel::fit(&d, &FitConfig { k: 1, ..FitConfig::default() }).unwrap();
        let steps: Vec<_> = d.episodes.iter().flat_map(|e| e.steps.iter()).collect();
        let rows: Vec<Vec<f64>> = steps.iter().map(|s| m.layout().extract(&s.obs)).collect();
        for (i, s) in steps.iter().enumerate() {
            // Identical feature rows resolve to the lowest index.
            let first = rows.iter().position(|r| *r == rows[i]).unwrap();
            assert_eq!(m.act(&s.obs), steps[first].action, "row {i}");
        }
    }
}

#[test]
fn balanced_weights_follow_step_ratio() {
    let mut rows = peg_rows(900, Provenance::Base);
    rows.extend(peg_rows(100, Provenance::Synthetic));
    let task = TaskSpec::planar_peg_insert();
    let cfg = FitConfig { k: 3, weights: WeightsMode::Balanced };
    let m = PolicyModel::fit_rows(FeatureLayout::for_task(&task), task.limits, rows.clone(), &cfg).unwrap();
    assert!(m.data().weights[..900].iter().all(|&w| w == 1.0));
    assert!(m.data().weights[900..].iter().all(|&w| w == 9.0));
    let u = PolicyModel::fit_rows(FeatureLayout::for_task(&task), task.limits, rows, &FitConfig::default()).unwrap();
    assert!(u.data().weights.iter().all(|&w| w == 1.0));
    // Weighting never touches the stored geometry.
    assert_eq!(u.data().features, m.data().features);
    assert_eq!(u.data().mean, m.data().mean);
    assert_eq!(u.data().scale, m.data().scale);
}

#[test]
fn duplicate_rows_resolve_to_lowest_index() {
    let task = TaskSpec::planar_peg_insert();
    let mut rows = peg_rows(1, Provenance::Base);
    let mut dup = rows[0].clone();
    dup.action = DeltaAction::translate(-0.002, 0.0, 0.0);
    rows.push(dup);
    rows.extend(peg_rows(3, Provenance::Base).into_iter().skip(1));
    let m = PolicyModel::fit_rows(FeatureLayout::for_task(&task), task.limits, rows.clone(), &FitConfig { k: 1, ..FitConfig::default() })
        .unwrap();
    assert_eq!(m.act_row(&rows[0].features), rows[0].action);
    assert_eq!(m.neighbors_of_row(&rows[1].features)[0].index, 0);
}

#[test]
fn equidistant_neighbors_average_to_midpoint() {
    let task = TaskSpec::planar_peg_insert();
    let layout = FeatureLayout::for_task(&task);
    let s = reset(&task, &CorruptionModel::none(), 0).unwrap();
    let mut obs = observe(&s, &task, Role::Robot);
    // Dyadic coordinates keep both distances exact.
    obs.objects[0].pose.position = Vec3::new(0.125, 0.0, 0.0);
    let a = DeltaAction { translation: Vec3::new(0.004, 0.0, -0.002), rotation: Vec3::ZERO, gripper: GripperCommand::Open };
    let b = DeltaAction { translation: Vec3::new(0.0, 0.002, 0.002), rotation: Vec3::ZERO, gripper: GripperCommand::Close };
    obs.ee_pose.position.x = -0.125;
    let ra = TrainingRow { features: layout.extract(&obs), action: a, provenance: Provenance::Base };
    obs.ee_pose.position.x = -0.0625;
    let rb = TrainingRow { features: layout.extract(&obs), action: b, provenance: Provenance::Base };
    let m = PolicyModel::fit_rows(layout.clone(), task.limits, vec![ra, rb], &FitConfig { k: 2, ..FitConfig::default() }).unwrap();
    obs.ee_pose.position.x = -0.09375;
    let out = m.act(&obs);
    let mid = (a.translation + b.translation) * 0.5;
    assert!((out.translation - mid).max_abs() < 1e-12, "{:?}", out.translation);
    // Equal votes for open and close fall back to hold.
    assert_eq!(out.gripper, GripperCommand::Hold);
}

#[test]
fn output_is_clamped_to_limits() {
    let task = TaskSpec::planar_peg_insert();
    let mut rows = peg_rows(2, Provenance::Base);
    for r in &mut rows {
        r.action = DeltaAction::translate(0.5, 0.0, 0.0);
    }
    let m = PolicyModel::fit_rows(FeatureLayout::for_task(&task), task.limits, rows.clone(), &FitConfig::default()).unwrap();
    let out = m.act_row(&rows[0].features);
    assert!(out.within(&ControllerLimits::default()));
    assert!((out.translation.x - 0.005).abs() < 1e-15);
}

#[test]
fn active_feedback_retrieves_intervention_rows() {
    let task = TaskSpec::planar_peg_insert();
    let base = small_demos(&task, 10);
    let base_model = PolicyModel::fit(&base, &FitConfig::default()).unwrap();
    let z = CorruptionModel::peg_noise();
    let (src, _) = collect_interventions(&task, &z, &base_model, &OracleGate::for_task(&task), 3, 11).unwrap();
    let mut all = base.clone();
    all.episodes.extend(src.episodes.iter().cloned());
    let m = PolicyModel::fit(&all, &FitConfig::default()).unwrap();
    let mut audited = 0;
    for s in src.episodes.iter().flat_map(|e| e.steps.iter()).filter(|s| s.obs.feedback.active) {
        for n in m.neighbors(&s.obs) {
            assert_eq!(m.data().provenance[n.index], Provenance::SourceHuman);
        }
        audited += 1;
    }
    assert!(audited > 0);
}

#[test]
fn fit_rejects_bad_input() {
    let task = TaskSpec::planar_peg_insert();
    let empty = Dataset::new(task.clone());
    assert_eq!(PolicyModel::fit(&empty, &FitConfig::default()).unwrap_err(), FitError::EmptyDataset);
    let mut d = small_demos(&task, 1);
    assert_eq!(PolicyModel::fit(&d, &FitConfig { k: 0, ..FitConfig::default() }).unwrap_err(), FitError::InvalidK);
    d.episodes[0].steps[3].obs.objects.push(crate::world::ObjectState { id: ObjectId::Nut, pose: crate::geom::Pose::IDENTITY });
    assert_eq!(
        PolicyModel::fit(&d, &FitConfig::default()).unwrap_err(),
        FitError::InconsistentLayout { episode: 0, step: 3 }
    );
}

#[test]
fn clean_policy_makes_mistakes_under_noise() {
    let task = TaskSpec::planar_peg_insert();
    let base = small_demos(&task, 10);
    let m = PolicyModel::fit(&base, &FitConfig::default()).unwrap();
    let z = CorruptionModel::peg_noise();
    let trials = 40;
    let mistakes = (0..trials)
        .filter(|&i| {
            let ep = rollout(&task, &z, i, Controller::Policy(&m), None).unwrap();
            ep.steps.iter().any(|s| s.contact.is_some())
        })
        .count();
    assert!(mistakes * 2 > trials as usize, "{mistakes}/{trials}");
}

#[test]
fn rollouts_are_deterministic() {
    let task = TaskSpec::geometry_assembly();
    let e = OracleExpert::default();
    let z = CorruptionModel::geometry_flip(0.5);
    let a = rollout(&task, &z, 5, Controller::Expert(&e), None).unwrap();
    let b = rollout(&task, &z, 5, Controller::Expert(&e), None).unwrap();
    assert_eq!(a, b);
    assert!(a.goal);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn affine_rescaling_keeps_neighbors(
        raw in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 3), 20..60),
        col in 0usize..3,
        a in 0.01f64..100.0,
        b in -10.0f64..10.0,
        q in proptest::collection::vec(-1.0f64..1.0, 3),
    ) {
        let task = TaskSpec::planar_peg_insert();
        let layout = FeatureLayout::for_task(&task);
        let dims = layout.dims();
        let embed = |v: &[f64], scale: bool| {
            let mut r = vec![0.0; dims];
            r[..3].copy_from_slice(v);
            if scale {
                r[col] = r[col] * a + b;
            }
            r
        };
        let rows = |scale: bool| raw.iter().map(|v| TrainingRow {
            features: embed(v, scale),
            action: DeltaAction::ZERO,
            provenance: Provenance::Base,
        }).collect::<Vec<_>>();
        let cfg = FitConfig { k: 1, ..FitConfig::default() };
        let m1 = PolicyModel::fit_rows(layout.clone(), task.limits, rows(false), &cfg).unwrap();
        let m2 = PolicyModel::fit_rows(layout.clone(), task.limits, rows(true), &cfg).unwrap();
        let n1 = m1.neighbors_of_row(&embed(&q, false))[0];
        let n2 = m2.neighbors_of_row(&embed(&q, true))[0];
        // Exact ties aside, the argmin is unchanged.
        if n1.index != n2.index {
            let d_alt = crate::policy::kdtree::squared_distance(
                &m1.normalize(&embed(&q, false)),
                &m1.normalize(&embed(&raw[n2.index], false)),
            );
            prop_assert!((d_alt - n1.dist2).abs() <= 1e-9 * (1.0 + n1.dist2));
        }
    }
}
