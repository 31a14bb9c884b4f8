use super::*;
use crate::testutil::{catalog_of, mins, random_vectors, space_of, t0};

const IDS: [&str; 8] = ["s1", "s2", "s3", "a", "b", "c", "d", "e"];

fn catalog() -> Catalog {
    catalog_of(&IDS)
}

fn space() -> EmbeddingSpace {
    let vecs = random_vectors(IDS.len(), 4, 7)
        .into_iter()
        .zip(IDS)
        .map(|((_, v), id)| (id.to_string(), v))
        .collect();
    space_of("visual", vecs)
}

fn start(arm: Arm, seeds: &[&str]) -> Result<CurationSession, CurationError> {
    CurationSession::start(
        NewSession::new(
            "cs-1",
            "therapist-1",
            "patient-x",
            arm,
            seeds.iter().map(|s| s.to_string()).collect(),
        ),
        &catalog(),
        t0(),
    )
}

/// Full-sort oracle over the stored vectors, independent of `recsys`.
fn oracle(space: &EmbeddingSpace, seed: &str, excluded: &BTreeSet<String>) -> Vec<String> {
    let sv = space.vector(seed).unwrap();
    let mut all: Vec<(String, f64)> = space
        .ids()
        .iter()
        .filter(|id| *id != seed && !excluded.contains(*id))
        .map(|id| {
            let v = space.vector(id).unwrap();
            let mut dot = 0.0f64;
            for k in 0..v.len() {
                dot += f64::from(v[k]) * f64::from(sv[k]);
            }
            (id.clone(), dot)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.into_iter().map(|(id, _)| id).collect()
}

fn view(seed: &str, at: DateTime<Utc>) -> ExpertAction {
    ExpertAction::new(at, ActionKind::View, seed).subject(seed)
}

#[test]
fn start_examples() {
    let s = start(Arm::HitlVisual, &["s1"]).unwrap();
    assert_eq!(s.state(), CurationState::Elicited);
    assert!(s.lists().is_empty() && s.actions().is_empty() && s.curated().is_empty());

    assert_eq!(
        start(Arm::HitlVisual, &[]).unwrap_err(),
        CurationError::EmptySeeds
    );
    assert_eq!(
        start(Arm::ExpertOnly, &["s1", "s2", "s3"])
            .unwrap()
            .seeds()
            .len(),
        3
    );
    assert_eq!(
        start(Arm::HitlVisual, &["s1", "s2", "s3", "a"]).unwrap_err(),
        CurationError::TooManySeeds(4)
    );
    assert_eq!(
        start(Arm::HitlVisual, &["zz"]).unwrap_err(),
        CurationError::UnknownPainting("zz".into())
    );
    assert_eq!(
        start(Arm::HitlVisual, &["s1", "s1"]).unwrap_err(),
        CurationError::DuplicateSeed("s1".into())
    );
}

#[test]
fn attach_examples() {
    let space = space();
    let mut s = start(Arm::HitlVisual, &["s1", "s2"]).unwrap();
    s.attach_recommendations(&space, 200, mins(1)).unwrap();
    assert_eq!(s.state(), CurationState::Recommended);
    // 8 paintings: 7 candidates per seed
    assert_eq!(s.list("s1").unwrap().entries.len(), 7);
    assert!(matches!(
        s.attach_recommendations(&space, 200, mins(2)),
        Err(CurationError::IllegalTransition {
            operation: Operation::Attach,
            ..
        })
    ));

    let mut expert = start(Arm::ExpertOnly, &["s1"]).unwrap();
    assert!(matches!(
        expert.attach_recommendations(&space, 200, mins(1)),
        Err(CurationError::IllegalTransition { .. })
    ));
}

#[test]
fn reject_needs_reason() {
    let space = space();
    let mut s = start(Arm::HitlVisual, &["s1"]).unwrap();
    s.attach_recommendations(&space, 5, mins(0)).unwrap();
    let top = s.list("s1").unwrap().entries[0].painting_id.clone();
    let err = s
        .record_action(
            ExpertAction::new(mins(1), ActionKind::Reject, "s1").subject(&top),
            None,
        )
        .unwrap_err();
    assert_eq!(err, CurationError::MissingReason(ActionKind::Reject));
    let err = s
        .record_action(
            ExpertAction::new(mins(1), ActionKind::Flag, "s1")
                .subject(&top)
                .reason("  "),
            None,
        )
        .unwrap_err();
    assert_eq!(err, CurationError::MissingReason(ActionKind::Flag));
    // failed actions leave no trace
    assert_eq!(s.state(), CurationState::Recommended);
    assert_eq!(s.version(), 2);
}

#[test]
fn regenerate_after_rejecting_top_three() {
    let space = space();
    let mut s = start(Arm::HitlVisual, &["s1"]).unwrap();
    s.attach_recommendations(&space, 200, mins(0)).unwrap();
    let before = oracle(&space, "s1", &BTreeSet::new());
    let listed: Vec<_> = s.list("s1").unwrap().ids().map(str::to_owned).collect();
    assert_eq!(listed, before);

    for (i, id) in before.iter().take(3).enumerate() {
        s.record_action(
            ExpertAction::new(mins(i as i64 + 1), ActionKind::Reject, "s1")
                .subject(id)
                .reason("war imagery"),
            None,
        )
        .unwrap();
    }
    s.record_action(
        ExpertAction::new(mins(5), ActionKind::Regenerate, "s1"),
        Some(&space),
    )
    .unwrap();
    let list = s.list("s1").unwrap();
    assert_eq!(list.head().unwrap().painting_id, before[3]);
    let excluded: BTreeSet<String> = before[..3].iter().cloned().collect();
    let after: Vec<_> = list.ids().map(str::to_owned).collect();
    assert_eq!(after, oracle(&space, "s1", &excluded));
}

#[test]
fn regenerate_requires_matching_space() {
    let space = space();
    let mut s = start(Arm::HitlMultimodal, &["s1"]).unwrap();
    s.attach_recommendations(&space, 3, mins(0)).unwrap();
    let regen = ExpertAction::new(mins(1), ActionKind::Regenerate, "s1");
    assert_eq!(
        s.record_action(regen.clone(), None).unwrap_err(),
        CurationError::SpaceRequired
    );
    let other = space_of("multimodal", random_vectors(3, 4, 1));
    assert!(matches!(
        s.record_action(regen, Some(&other)).unwrap_err(),
        CurationError::SpaceMismatch { .. }
    ));
}

#[test]
fn accept_outside_list_rejected() {
    let space = space();
    let mut s = start(Arm::HitlVisual, &["s1"]).unwrap();
    s.attach_recommendations(&space, 2, mins(0)).unwrap();
    let outside = oracle(&space, "s1", &BTreeSet::new())[5].clone();
    let err = s
        .record_action(
            ExpertAction::new(mins(1), ActionKind::Accept, "s1").subject(&outside),
            None,
        )
        .unwrap_err();
    assert!(matches!(err, CurationError::NotInList { .. }));
    s.record_action(
        ExpertAction::new(mins(1), ActionKind::ManualAdd, "s1").subject(&outside),
        None,
    )
    .unwrap();
    s.record_action(
        ExpertAction::new(mins(2), ActionKind::Accept, "s1").subject(&outside),
        None,
    )
    .unwrap();
}

fn reviewed_hitl() -> (EmbeddingSpace, CurationSession) {
    let space = space();
    let mut s = start(Arm::HitlVisual, &["s1", "s2"]).unwrap();
    s.attach_recommendations(&space, 200, mins(0)).unwrap();
    s.record_action(view("s1", mins(1)), None).unwrap();
    (space, s)
}

fn top_picks(s: &CurationSession) -> BTreeMap<String, Vec<String>> {
    s.seeds()
        .iter()
        .map(|seed| {
            let picks = s
                .candidates(seed)
                .into_iter()
                .take(3)
                .map(str::to_owned)
                .collect();
            (seed.clone(), picks)
        })
        .collect()
}

#[test]
fn finalize_examples() {
    let (_, mut s) = reviewed_hitl();
    let mut picks = top_picks(&s);
    picks.get_mut("s2").unwrap().pop();
    assert_eq!(
        s.finalize_curation(picks, mins(2)).unwrap_err(),
        CurationError::WrongPickCount {
            seed: "s2".into(),
            got: 2,
            want: 3
        }
    );
    let mut picks = top_picks(&s);
    let dup = picks["s1"][0].clone();
    picks.get_mut("s1").unwrap()[1] = dup;
    assert!(matches!(
        s.finalize_curation(picks, mins(2)).unwrap_err(),
        CurationError::DuplicatePick { .. }
    ));
    let mut picks = top_picks(&s);
    picks.insert("zz".into(), vec![]);
    assert!(matches!(
        s.finalize_curation(picks, mins(2)).unwrap_err(),
        CurationError::UnknownSeed(_)
    ));

    let picks = top_picks(&s);
    s.finalize_curation(picks.clone(), mins(2)).unwrap();
    assert_eq!(s.state(), CurationState::Curated);
    assert_eq!(s.curated(), &picks);
    assert_eq!(s.curated().values().map(Vec::len).sum::<usize>(), 6);
}

#[test]
fn rejected_and_regenerated_away_cannot_be_picked() {
    let (space, mut s) = reviewed_hitl();
    let gone = s.list("s1").unwrap().entries[0].painting_id.clone();
    s.record_action(
        ExpertAction::new(mins(2), ActionKind::Reject, "s1")
            .subject(&gone)
            .reason("dark indoor scene"),
        None,
    )
    .unwrap();
    s.record_action(
        ExpertAction::new(mins(3), ActionKind::Regenerate, "s1"),
        Some(&space),
    )
    .unwrap();
    assert!(!s.list("s1").unwrap().contains(&gone));
    let mut picks = top_picks(&s);
    picks.get_mut("s1").unwrap()[0] = gone.clone();
    assert_eq!(
        s.finalize_curation(picks, mins(4)).unwrap_err(),
        CurationError::NotInList {
            seed: "s1".into(),
            id: gone.clone()
        }
    );
    // an explicit manual add makes it eligible again
    s.record_action(
        ExpertAction::new(mins(4), ActionKind::ManualAdd, "s1").subject(&gone),
        None,
    )
    .unwrap();
    let mut picks = top_picks(&s);
    picks.get_mut("s1").unwrap()[0] = gone;
    s.finalize_curation(picks, mins(5)).unwrap();
}

#[test]
fn expert_only_flow() {
    let mut s = start(Arm::ExpertOnly, &["s1"]).unwrap();
    s.record_action(view("s1", mins(0)), None).unwrap();
    assert_eq!(s.state(), CurationState::UnderReview);
    assert!(matches!(
        s.record_action(
            ExpertAction::new(mins(1), ActionKind::Regenerate, "s1"),
            Some(&space())
        ),
        Err(CurationError::IllegalTransition { .. })
    ));
    for (i, id) in ["a", "b", "c"].iter().enumerate() {
        s.record_action(
            ExpertAction::new(mins(10 + i as i64), ActionKind::Accept, "s1").subject(*id),
            None,
        )
        .unwrap();
    }
    let picks: BTreeMap<_, _> =
        [("s1".to_string(), vec!["a".into(), "b".into(), "d".into()])].into();
    assert!(matches!(
        s.finalize_curation(picks, mins(13)).unwrap_err(),
        CurationError::NotInList { .. }
    ));
    let picks: BTreeMap<_, _> =
        [("s1".to_string(), vec!["a".into(), "b".into(), "c".into()])].into();
    s.finalize_curation(picks, mins(13)).unwrap();
    let report = s.timing_report().unwrap();
    assert_eq!(report.per_seed[0].minutes, 13.0);
}

#[test]
fn timing_from_actions_and_supplied() {
    let (_, mut s) = reviewed_hitl();
    s.record_action(view("s2", mins(4)), None).unwrap();
    s.record_action(ExpertAction::new(mins(7), ActionKind::Finalize, "s1"), None)
        .unwrap();
    let picks = top_picks(&s);
    s.finalize_curation(picks, mins(10)).unwrap();
    let report = s.timing_report().unwrap();
    let minutes: Vec<f64> = report.per_seed.iter().map(|p| p.minutes).collect();
    assert_eq!(minutes, [6.0, 6.0]);
    assert_eq!(report.total, 12.0);

    s.supply_timing(
        [("s1".into(), 11.27), ("s2".into(), 12.08)].into(),
        mins(11),
    )
    .unwrap();
    let report = s.timing_report().unwrap();
    assert!((report.total - 23.35).abs() < 1e-9);

    assert_eq!(
        s.supply_timing([("s1".into(), 1.0)].into(), mins(12))
            .unwrap_err(),
        CurationError::MissingTiming("s2".into())
    );
    assert_eq!(
        s.supply_timing([("s1".into(), -1.0), ("s2".into(), 1.0)].into(), mins(12))
            .unwrap_err(),
        CurationError::InvalidTiming("s1".into())
    );
}

#[test]
fn timestamps_must_not_go_backwards() {
    let (_, mut s) = reviewed_hitl();
    let err = s.record_action(view("s1", t0()), None).unwrap_err();
    assert!(matches!(err, CurationError::NonMonotonicTime { .. }));
}

/// Drives a fresh session into `state`, or `None` if the arm never visits it.
fn session_in(arm: Arm, state: CurationState) -> Option<(EmbeddingSpace, CurationSession)> {
    let space = space();
    let mut s = start(arm, &["s1"]).ok()?;
    let steps = match state {
        CurationState::Elicited => 0,
        CurationState::Recommended => 1,
        CurationState::UnderReview => 2,
        CurationState::Curated => 3,
        CurationState::Delivered => 4,
    };
    if steps >= 1 && arm.uses_machine_lists() {
        s.attach_recommendations(&space, 10, mins(1)).unwrap();
    } else if steps == 1 {
        return None;
    }
    if steps >= 2 {
        s.record_action(view("s1", mins(2)), None).unwrap();
        if !arm.uses_machine_lists() {
            for (i, id) in ["a", "b", "c"].iter().enumerate() {
                s.record_action(
                    ExpertAction::new(mins(3 + i as i64), ActionKind::Accept, "s1").subject(*id),
                    None,
                )
                .unwrap();
            }
        }
    }
    if steps >= 3 {
        let picks = if arm.uses_machine_lists() {
            top_picks(&s)
        } else {
            [("s1".to_string(), vec!["a".into(), "b".into(), "c".into()])].into()
        };
        s.finalize_curation(picks, mins(10)).unwrap();
    }
    if steps >= 4 {
        s.mark_delivered("gs-1", mins(11)).unwrap();
    }
    assert_eq!(s.state(), state);
    Some((space, s))
}

/// Performs `op` with otherwise valid arguments.
fn perform(
    op: Operation,
    space: &EmbeddingSpace,
    s: &mut CurationSession,
) -> Result<(), CurationError> {
    match op {
        Operation::Attach => s.attach_recommendations(space, 10, mins(20)),
        Operation::RecordAction => s.record_action(view("s1", mins(20)), None),
        Operation::Finalize => {
            let picks = if s.arm().uses_machine_lists() {
                top_picks(s)
            } else {
                [("s1".to_string(), vec!["a".into(), "b".into(), "c".into()])].into()
            };
            s.finalize_curation(picks, mins(20))
        }
        Operation::Deliver => s.mark_delivered("gs-2", mins(20)),
        Operation::TimingReport => s.timing_report().map(|_| ()),
    }
}

#[test]
fn exhaustive_transitions() {
    use CurationState::*;
    let hitl_edges = [
        (Elicited, Operation::Attach, Recommended),
        (Recommended, Operation::RecordAction, UnderReview),
        (UnderReview, Operation::RecordAction, UnderReview),
        (UnderReview, Operation::Finalize, Curated),
        (Curated, Operation::Deliver, Delivered),
        (Delivered, Operation::Deliver, Delivered),
        (Curated, Operation::TimingReport, Curated),
        (Delivered, Operation::TimingReport, Delivered),
    ];
    let expert_edges = [
        (Elicited, Operation::RecordAction, UnderReview),
        (UnderReview, Operation::RecordAction, UnderReview),
        (UnderReview, Operation::Finalize, Curated),
        (Curated, Operation::Deliver, Delivered),
        (Delivered, Operation::Deliver, Delivered),
        (Curated, Operation::TimingReport, Curated),
        (Delivered, Operation::TimingReport, Delivered),
    ];
    let mut checked = 0;
    for arm in Arm::ALL {
        let edges: &[_] = if arm.uses_machine_lists() {
            &hitl_edges
        } else {
            &expert_edges
        };
        for state in CurationState::ALL {
            let Some((space, base)) = session_in(arm, state) else {
                continue;
            };
            for op in Operation::ALL {
                let legal = edges.iter().find(|(from, o, _)| *from == state && *o == op);
                assert_eq!(
                    transition(arm, state, op),
                    legal.map(|e| e.2),
                    "{arm} {state} {op}"
                );
                let mut s = base.clone();
                let result = perform(op, &space, &mut s);
                match legal {
                    Some((_, _, to)) => {
                        assert!(result.is_ok(), "{arm} {state} {op}: {result:?}");
                        assert_eq!(s.state(), *to);
                    }
                    None => {
                        assert_eq!(
                            result,
                            Err(CurationError::IllegalTransition {
                                state,
                                operation: op
                            }),
                            "{arm} {state} {op}"
                        );
                        assert_eq!(s.export_json(), base.export_json());
                    }
                }
                checked += 1;
            }
        }
    }
    // 5 states x 5 ops for two hitl arms, 4 reachable states for expert_only
    assert_eq!(checked, 2 * 25 + 20);
}

#[test]
fn log_round_trip_and_replay() {
    let (space, mut s) = reviewed_hitl();
    let top = s.list("s1").unwrap().entries[0].painting_id.clone();
    s.record_action(
        ExpertAction::new(mins(2), ActionKind::Reject, "s1")
            .subject(&top)
            .reason("storm"),
        None,
    )
    .unwrap();
    s.record_action(
        ExpertAction::new(mins(3), ActionKind::Regenerate, "s1"),
        Some(&space),
    )
    .unwrap();
    let picks = top_picks(&s);
    s.finalize_curation(picks, mins(4)).unwrap();
    s.mark_delivered("gs-1", mins(5)).unwrap();

    let mut buf = Vec::new();
    write_event_log(&mut buf, s.log()).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["seq"], 1);
    assert_eq!(first["kind"], "started");
    assert!(first["payload"]["seeds"].is_array());

    let events = read_event_log(&buf[..]).unwrap();
    assert_eq!(events, s.log());
    let replayed = CurationSession::replay(events).unwrap();
    assert_eq!(replayed.export_json(), s.export_json());
}

#[test]
fn replay_rejects_bad_logs() {
    let (_, s) = reviewed_hitl();
    let mut events = s.log().to_vec();
    events[1].seq = 5;
    assert!(matches!(
        CurationSession::replay(events),
        Err(CurationError::BadSequence {
            expected: 2,
            got: 5
        })
    ));

    let mut events = s.log().to_vec();
    events.swap(0, 1);
    assert!(matches!(
        CurationSession::replay(events),
        Err(CurationError::MalformedLog(_))
    ));

    let mut buf = Vec::new();
    write_event_log(&mut buf, s.log()).unwrap();
    let text = String::from_utf8(buf)
        .unwrap()
        .replace("\"seq\":2", "\"seq\":3");
    assert!(matches!(
        read_event_log(text.as_bytes()),
        Err(CurationError::BadSequence { .. })
    ));
    assert!(matches!(
        read_event_log("{\"seq\":1}".as_bytes()),
        Err(CurationError::MalformedLog(_))
    ));
}

#[test]
fn tampered_log_is_rejected_on_replay() {
    let (space, mut s) = reviewed_hitl();
    let top = s.list("s1").unwrap().entries[0].painting_id.clone();
    s.record_action(
        ExpertAction::new(mins(2), ActionKind::Reject, "s1")
            .subject(&top)
            .reason("storm"),
        None,
    )
    .unwrap();
    let mut events = s.log().to_vec();
    // a regenerate event whose list still contains the rejected painting
    let stale = s.list("s1").unwrap().clone();
    events.push(LoggedEvent {
        seq: 5,
        at: mins(3),
        event: CurationEvent::Action {
            action: ExpertAction::new(mins(3), ActionKind::Regenerate, "s1"),
            regenerated: Some(stale),
        },
    });
    assert!(matches!(
        CurationSession::replay(events),
        Err(CurationError::InvalidList(_))
    ));
    let _ = space;
}
