use nbtrie_lincheck::checker::verify_witness;
use nbtrie_lincheck::{
    check_linearizable, Call, Checker, Event, History, OracleSet, Phase, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// (thread, call, invoke ts, respond ts and result)
type Spec = (usize, Call, u64, Option<(u64, bool)>);

fn history(ops: &[Spec]) -> History {
    let mut events = Vec::new();
    for &(thread, call, inv, resp) in ops {
        events.push(Event {
            ts: inv,
            thread,
            call,
            phase: Phase::Invoke,
        });
        if let Some((ts, r)) = resp {
            events.push(Event {
                ts,
                thread,
                call,
                phase: Phase::Respond(r),
            });
        }
    }
    History::new(events)
}

#[test]
fn overlapping_find_may_go_first() {
    let h = history(&[
        (0, Call::Insert(1), 1, Some((4, true))),
        (1, Call::Find(1), 2, Some((3, false))),
    ]);
    let v = check_linearizable(&h);
    let Verdict::Linearizable { order } = &v else {
        panic!("{v:?}")
    };
    assert_eq!(order, &[1, 0]);
    verify_witness(&h, order).unwrap();
}

#[test]
fn stale_find_after_insert_is_a_violation() {
    let h = history(&[
        (0, Call::Insert(1), 1, Some((2, true))),
        (1, Call::Find(1), 3, Some((4, false))),
    ]);
    let Verdict::Violation { prefix } = check_linearizable(&h) else {
        panic!()
    };
    // the find's response is what makes it fail
    assert_eq!(prefix.events.len(), 4);
}

#[test]
fn replace_has_no_intermediate_state() {
    // 1 is present; replace(1,2) overlaps two finds that see 1 absent and
    // then 2 absent, one after the other
    let h = history(&[
        (0, Call::Insert(1), 1, Some((2, true))),
        (1, Call::Replace(1, 2), 3, Some((10, true))),
        (2, Call::Find(1), 4, Some((5, false))),
        (2, Call::Find(2), 6, Some((7, false))),
    ]);
    assert!(check_linearizable(&h).is_violation());
    assert!(!brute_force(&h));

    // the same observations are fine if replace were two steps; and with the
    // finds in the other order the history is linearizable
    let h = history(&[
        (0, Call::Insert(1), 1, Some((2, true))),
        (1, Call::Replace(1, 2), 3, Some((10, true))),
        (2, Call::Find(2), 4, Some((5, false))),
        (2, Call::Find(1), 6, Some((7, false))),
    ]);
    assert!(check_linearizable(&h).is_linearizable());
    assert!(brute_force(&h));
}

#[test]
fn pending_operations_may_be_dropped_or_included() {
    // the pending insert must take effect for the find to be explained
    let h = history(&[
        (0, Call::Insert(1), 1, None),
        (1, Call::Find(1), 2, Some((3, true))),
    ]);
    let Verdict::Linearizable { order } = check_linearizable(&h) else {
        panic!()
    };
    assert_eq!(order, vec![0, 1]);
    // and it may be left out entirely
    let h = history(&[
        (0, Call::Insert(1), 1, None),
        (1, Call::Find(1), 2, Some((3, false))),
    ]);
    let Verdict::Linearizable { order } = check_linearizable(&h) else {
        panic!()
    };
    assert_eq!(order, vec![1]);
}

#[test]
fn minimal_prefix_is_reported() {
    let h = history(&[
        (0, Call::Delete(1), 1, Some((2, true))),
        (0, Call::Insert(1), 3, Some((4, true))),
        (1, Call::Find(1), 5, Some((6, true))),
    ]);
    let Verdict::Violation { prefix } = check_linearizable(&h) else {
        panic!()
    };
    assert_eq!(prefix.events.len(), 2);
}

#[test]
fn tiny_budget_is_inconclusive() {
    let mut ops = Vec::new();
    for t in 0..4 {
        ops.push((
            t,
            Call::Insert(t as u64 + 1),
            1 + t as u64,
            Some((100 + t as u64, true)),
        ));
    }
    let h = history(&ops);
    assert!(matches!(
        Checker::with_budget(2).check(&h),
        Verdict::Inconclusive { .. }
    ));
    assert!(Checker::default().check(&h).is_linearizable());
}

// Every ordering of every subset of pending operations, filtered by real time.
fn brute_force(h: &History) -> bool {
    let ops = h.operations();
    let n = ops.len();
    fn go(ops: &[nbtrie_lincheck::Operation], used: &mut Vec<bool>, set: &OracleSet) -> bool {
        let remaining_completed = (0..ops.len()).any(|j| !used[j] && ops[j].responded.is_some());
        if !remaining_completed {
            return true;
        }
        for i in 0..ops.len() {
            if used[i] {
                continue;
            }
            let blocked = (0..ops.len()).any(|j| {
                !used[j] && j != i && ops[j].responded.is_some_and(|(ts, _)| ts < ops[i].invoked)
            });
            if blocked {
                continue;
            }
            let mut next = set.clone();
            let got = next.apply(ops[i].call);
            if ops[i].responded.is_some_and(|(_, r)| r != got) {
                continue;
            }
            used[i] = true;
            if go(ops, used, &next) {
                return true;
            }
            used[i] = false;
        }
        false
    }
    go(&ops, &mut vec![false; n], &OracleSet::new())
}

fn random_history(rng: &mut ChaCha8Rng) -> History {
    let threads = rng.gen_range(1..=3);
    let mut events = Vec::new();
    let mut ts = 0;
    let mut open: Vec<Option<Call>> = vec![None; threads];
    let mut remaining = rng.gen_range(1..=6);
    while remaining > 0 || open.iter().any(Option::is_some) {
        let t = rng.gen_range(0..threads);
        ts += 1;
        match open[t] {
            Some(call) => {
                if rng.gen_bool(0.05) && remaining == 0 {
                    // leave it pending
                    open[t] = None;
                    continue;
                }
                events.push(Event {
                    ts,
                    thread: t,
                    call,
                    phase: Phase::Respond(rng.gen_bool(0.5)),
                });
                open[t] = None;
            }
            None if remaining > 0 => {
                let a = rng.gen_range(1..=3);
                let call = match rng.gen_range(0..4) {
                    0 => Call::Insert(a),
                    1 => Call::Delete(a),
                    2 => Call::Find(a),
                    _ => Call::Replace(a, a % 3 + 1),
                };
                events.push(Event {
                    ts,
                    thread: t,
                    call,
                    phase: Phase::Invoke,
                });
                open[t] = Some(call);
                remaining -= 1;
            }
            None => {}
        }
    }
    History::new(events)
}

#[test]
fn agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut yes, mut no) = (0, 0);
    for _ in 0..3_000 {
        let h = random_history(&mut rng);
        let expected = brute_force(&h);
        match check_linearizable(&h) {
            Verdict::Linearizable { order } => {
                assert!(expected, "checker accepted a bad history:\n{h}");
                verify_witness(&h, &order).unwrap();
                yes += 1;
            }
            Verdict::Violation { prefix } => {
                assert!(!expected, "checker rejected a good history:\n{h}");
                assert!(!brute_force(&prefix));
                let shorter = History {
                    events: prefix.events[..prefix.events.len() - 1].to_vec(),
                };
                assert!(brute_force(&shorter));
                no += 1;
            }
            v => panic!("{v:?}"),
        }
    }
    // both verdicts were exercised
    assert!(yes > 300 && no > 300, "{yes} linearizable, {no} not");
}
