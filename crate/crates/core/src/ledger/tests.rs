use std::collections::BTreeMap;
use std::sync::Arc;

use super::*;
use crate::allocation::{
    allocate_with_retraction, filter_candidates, OfferResponse, RecordingSink, ScriptedOracle,
};
use crate::model::{
    ComputeProfile, EnvFeatureVector, ModelRecord, PerfCounters, TaskSpec, TaskStatus, TaskType,
    WorkerProfile, WorkerStatus,
};
use crate::scoring::{commitment_rate, completion_rate, reputation};
use crate::store::MemStore;

const D: DomainCode = DomainCode(3);

fn requester() -> Address {
    Address::derive("req", 0)
}

fn wid(i: u64) -> Address {
    Address::derive("w", i)
}

fn profile(i: u64, cores: u32, assigned: u64, accepted: u64, completed: u64) -> WorkerProfile {
    let mut p = WorkerProfile::new(
        wid(i),
        [D],
        ComputeProfile {
            cpu_cores: cores,
            ram_gb: 16,
            gpu_series: None,
        },
    );
    for kind in TaskType::ALL {
        p.stats
            .insert((D, kind), PerfCounters::new(assigned, accepted, completed));
    }
    p
}

fn training_task(n: u64, nw: u32) -> TaskSpec {
    TaskSpec {
        task_id: Address::derive("task", n),
        requester_id: requester(),
        kind: TaskType::Training,
        domain: D,
        description: String::new(),
        num_workers: nw,
        min_reputation: 0.0,
        min_rating: 0.0,
        time_constraint: 100,
        compute_req: Some(ComputeProfile {
            cpu_cores: 1,
            ram_gb: 1,
            gpu_series: None,
        }),
        env_features: None,
        similarity_weights: None,
        status: TaskStatus::Pending,
    }
}

fn sharing_task(n: u64, env: Vec<f64>) -> TaskSpec {
    TaskSpec {
        kind: TaskType::ModelSharing,
        compute_req: None,
        env_features: Some(EnvFeatureVector(env)),
        num_workers: 1,
        ..training_task(n, 1)
    }
}

struct Fixture {
    ledger: Ledger,
    tick: u64,
}

impl Fixture {
    fn new() -> Self {
        let mut f = Fixture {
            ledger: Ledger::new(AllocationConfig::default(), Arc::new(MemStore::new())),
            tick: 0,
        };
        f.ok(
            requester(),
            Call::AddRequester {
                requester_id: requester(),
            },
        );
        f
    }

    fn submit(&mut self, actor: Address, call: Call) -> Applied {
        self.tick += 1;
        self.ledger
            .submit(actor, self.tick, call)
            .expect("admitted")
    }

    fn ok(&mut self, actor: Address, call: Call) -> Applied {
        let a = self.submit(actor, call);
        assert!(a.is_accepted(), "unexpected rejection: {a:?}");
        a
    }

    fn add_active_worker(&mut self, p: WorkerProfile) {
        let id = p.worker_id.clone();
        self.ok(id.clone(), Call::AddWorker { profile: p });
        self.ok(
            id.clone(),
            Call::UpdateStatus {
                worker_id: id,
                status: WorkerStatus::Active,
            },
        );
    }

    fn put(&self, bytes: &[u8]) -> ContentId {
        self.ledger.store().put(bytes).unwrap()
    }

    fn allocate(
        &mut self,
        task: &TaskSpec,
        responses: BTreeMap<WorkerId, OfferResponse>,
    ) -> Applied {
        self.submit(
            requester(),
            Call::AllocateTask {
                task_id: task.task_id.clone(),
                responses,
            },
        )
    }
}

fn all_accept(ids: impl IntoIterator<Item = u64>) -> BTreeMap<WorkerId, OfferResponse> {
    ids.into_iter()
        .map(|i| (wid(i), OfferResponse::Accept { latency: 0 }))
        .collect()
}

#[test]
fn add_worker_grows_registry() {
    let mut f = Fixture::new();
    f.ok(
        wid(1),
        Call::AddWorker {
            profile: profile(1, 4, 0, 0, 0),
        },
    );
    assert_eq!(f.ledger.state().workers.len(), 1);
    assert!(f.ledger.state().cost(CallKind::AddWorker) > 0);
}

#[test]
fn duplicate_task_is_rejected_without_touching_state() {
    let mut f = Fixture::new();
    let t = training_task(1, 1);
    f.ok(requester(), Call::AddTask { task: t.clone() });
    let before = f.ledger.state().clone();
    let a = f.submit(requester(), Call::AddTask { task: t.clone() });
    assert_eq!(
        a,
        Applied::Rejected(LedgerError::DuplicateTask(t.task_id.clone()))
    );
    let after = f.ledger.state();
    assert_eq!(after.tasks, before.tasks);
    assert_eq!(after.domain_tasks, before.domain_tasks);
    assert_eq!(after.op_costs, before.op_costs);
    assert_eq!(after.rejections.len(), before.rejections.len() + 1);
    assert_eq!(after.rejections.last().unwrap().call, CallKind::AddTask);
}

#[test]
fn allocation_matches_the_allocation_module() {
    let mut f = Fixture::new();
    for i in 0..6 {
        f.add_active_worker(profile(i, 2 + i as u32, 10, 8 + i % 3, 7));
    }
    let t = training_task(1, 3);
    f.ok(requester(), Call::AddTask { task: t.clone() });

    let responses = all_accept(0..6);
    let workers = f.ledger.state().workers.clone();
    let filtered = filter_candidates(
        &t,
        workers.workers_in_domain(D),
        &AllocationConfig::default(),
    )
    .unwrap();
    let mut expected = allocate_with_retraction(
        &t,
        &filtered.eligible,
        &mut ScriptedOracle(responses.clone()),
        10,
        &mut RecordingSink::default(),
    )
    .unwrap();
    expected.rejected = filtered.rejected;

    let a = f.allocate(&t, responses);
    assert_eq!(a.report(), Some(&expected));
    let rec = f.ledger.state().task(&t.task_id).unwrap();
    assert_eq!(rec.status(), TaskStatus::Allocated);
    assert_eq!(rec.allocation.as_ref().unwrap().selected, expected.selected);
}

#[test]
fn lifecycle_errors() {
    let mut f = Fixture::new();
    for i in 0..3 {
        f.add_active_worker(profile(i, 4, 2, 2, 2));
    }
    let t = training_task(1, 1);
    f.ok(requester(), Call::AddTask { task: t.clone() });

    let early = f.submit(
        requester(),
        Call::UpdateTaskStatus {
            task_id: t.task_id.clone(),
            status: TaskStatus::Completed,
        },
    );
    assert!(matches!(
        early,
        Applied::Rejected(LedgerError::WrongStatus { .. })
    ));

    f.allocate(&t, all_accept(0..3));
    let chosen = f
        .ledger
        .state()
        .task(&t.task_id)
        .unwrap()
        .allocation
        .as_ref()
        .unwrap()
        .selected[0]
        .worker_id
        .clone();
    let outsider = (0..3).map(wid).find(|w| *w != chosen).unwrap();
    let cid = f.put(b"weights");
    let a = f.submit(
        outsider.clone(),
        Call::SubmitOutcome {
            task_id: t.task_id.clone(),
            worker_id: outsider.clone(),
            cid,
        },
    );
    assert_eq!(
        a,
        Applied::Rejected(LedgerError::NotSelectedWorker(outsider))
    );

    let closed = f.submit(
        requester(),
        Call::UpdateTaskStatus {
            task_id: t.task_id.clone(),
            status: TaskStatus::Completed,
        },
    );
    assert!(matches!(
        closed,
        Applied::Rejected(LedgerError::WrongStatus { .. })
    ));

    let missing = f.submit(
        requester(),
        Call::UpdateTaskStatus {
            task_id: Address::derive("task", 99),
            status: TaskStatus::Failed,
        },
    );
    assert!(matches!(
        missing,
        Applied::Rejected(LedgerError::UnknownTask(_))
    ));
}

#[test]
fn unknown_cid_is_refused_before_the_log() {
    let mut f = Fixture::new();
    let len = f.ledger.events().len();
    let err = f
        .ledger
        .submit(
            wid(0),
            99,
            Call::SubmitOutcome {
                task_id: Address::derive("task", 1),
                worker_id: wid(0),
                cid: ContentId::of(b"never stored"),
            },
        )
        .unwrap_err();
    assert!(matches!(err, LedgerError::UnknownCid(_)));
    assert_eq!(f.ledger.events().len(), len);
}

#[test]
fn happy_path_updates_counters() {
    let mut f = Fixture::new();
    for i in 0..4 {
        f.add_active_worker(profile(i, 4 + i as u32, 4, 4, 4));
    }
    let t = training_task(1, 2);
    f.ok(requester(), Call::AddTask { task: t.clone() });
    let mut responses = all_accept(0..4);
    // the best-ranked worker turns the offer down
    responses.insert(wid(3), OfferResponse::Decline);
    let a = f.allocate(&t, responses);
    let selected = a.report().unwrap().selected_ids();
    assert_eq!(selected, vec![wid(2), wid(1)]);

    for w in &selected {
        let cid = f.put(w.as_str().as_bytes());
        f.ok(
            w.clone(),
            Call::SubmitOutcome {
                task_id: t.task_id.clone(),
                worker_id: w.clone(),
                cid,
            },
        );
    }
    assert_eq!(
        f.ledger.state().task(&t.task_id).unwrap().status(),
        TaskStatus::Completed
    );
    for w in &selected {
        f.ok(
            requester(),
            Call::SubmitFeedback {
                task_id: t.task_id.clone(),
                worker_id: w.clone(),
                rating_points: 80,
            },
        );
        f.ok(
            requester(),
            Call::Pay {
                task_id: t.task_id.clone(),
                worker_id: w.clone(),
                amount: 5,
            },
        );
    }
    let dup = f.submit(
        requester(),
        Call::SubmitFeedback {
            task_id: t.task_id.clone(),
            worker_id: wid(2),
            rating_points: 10,
        },
    );
    assert_eq!(
        dup,
        Applied::Rejected(LedgerError::DuplicateFeedback(wid(2)))
    );
    let np = f.submit(
        requester(),
        Call::SubmitFeedback {
            task_id: t.task_id.clone(),
            worker_id: wid(3),
            rating_points: 10,
        },
    );
    assert_eq!(np, Applied::Rejected(LedgerError::NotParticipant(wid(3))));

    let state = f.ledger.state();
    let c = state
        .workers
        .get(&wid(2))
        .unwrap()
        .counters(D, TaskType::Training);
    assert_eq!((c.assigned, c.accepted, c.completed), (5, 5, 5));
    assert_eq!((c.rating_sum, c.rating_count), (80, 1));
    let decliner = state
        .workers
        .get(&wid(3))
        .unwrap()
        .counters(D, TaskType::Training);
    assert_eq!((decliner.assigned, decliner.accepted), (5, 4));
    let idle = state
        .workers
        .get(&wid(0))
        .unwrap()
        .counters(D, TaskType::Training);
    assert_eq!(idle.assigned, 4);

    // reputation from the raw counters, with the rates recomputed by hand
    let cm = c.accepted as f64 / c.assigned as f64;
    let cp = c.completed as f64 / c.accepted as f64;
    let rep = reputation(
        commitment_rate(c.accepted, c.assigned).unwrap(),
        completion_rate(c.completed, c.accepted).unwrap(),
    );
    assert!((rep - (cm * cp).sqrt()).abs() <= 1e-12);
    let dm = (decliner.accepted as f64 / decliner.assigned as f64).sqrt();
    let rep3 = reputation(
        commitment_rate(decliner.accepted, decliner.assigned).unwrap(),
        completion_rate(decliner.completed, decliner.accepted).unwrap(),
    );
    assert!((rep3 - dm).abs() <= 1e-12);
}

#[test]
fn model_allocation_paths() {
    let mut f = Fixture::new();
    for i in 0..2 {
        f.ok(
            wid(i),
            Call::AddWorker {
                profile: profile(i, 4, 3, 3, 3),
            },
        );
    }
    let near = f.put(b"model near");
    let far = f.put(b"model far");
    for (owner, cid, env) in [(0, far, vec![5.0, 5.0]), (1, near, vec![1.0, 2.0])] {
        f.ok(
            wid(owner),
            Call::AddModel {
                model: ModelRecord {
                    owner_id: wid(owner),
                    cid,
                    domain: D,
                    description: String::new(),
                    env_features: EnvFeatureVector(env),
                },
            },
        );
    }
    let stranger = f.submit(
        wid(7),
        Call::AddModel {
            model: ModelRecord {
                owner_id: wid(7),
                cid: near,
                domain: D,
                description: String::new(),
                env_features: EnvFeatureVector(vec![1.0, 2.0]),
            },
        },
    );
    assert_eq!(
        stranger,
        Applied::Rejected(LedgerError::UnknownOwner(wid(7)))
    );

    let t = sharing_task(1, vec![1.0, 2.0]);
    f.ok(requester(), Call::AddTask { task: t.clone() });
    let a = f.ok(
        requester(),
        Call::AllocateModel {
            task_id: t.task_id.clone(),
        },
    );
    let report = a.report().unwrap();
    assert_eq!(report.ranked_candidates[0].cid, Some(near));
    assert_eq!(report.ranked_candidates[0].scores.similarity, Some(0.0));
    assert_eq!(report.selected[0].cid, Some(near));
    let rec = f.ledger.state().task(&t.task_id).unwrap();
    assert_eq!(rec.status(), TaskStatus::Completed);
    assert_eq!(rec.outcomes.get(&wid(1)), Some(&near));

    let tt = training_task(2, 1);
    f.ok(requester(), Call::AddTask { task: tt.clone() });
    let wrong = f.submit(
        requester(),
        Call::AllocateModel {
            task_id: tt.task_id.clone(),
        },
    );
    assert_eq!(
        wrong,
        Applied::Rejected(LedgerError::WrongTaskType {
            task: tt.task_id,
            expected: TaskType::ModelSharing
        })
    );
}

#[test]
fn single_model_is_returned() {
    let mut f = Fixture::new();
    f.ok(
        wid(0),
        Call::AddWorker {
            profile: profile(0, 4, 0, 0, 0),
        },
    );
    let cid = f.put(b"only");
    f.ok(
        wid(0),
        Call::AddModel {
            model: ModelRecord {
                owner_id: wid(0),
                cid,
                domain: D,
                description: String::new(),
                env_features: EnvFeatureVector(vec![0.0]),
            },
        },
    );
    let t = sharing_task(1, vec![3.0]);
    f.ok(requester(), Call::AddTask { task: t.clone() });
    let a = f.ok(requester(), Call::AllocateModel { task_id: t.task_id });
    assert_eq!(a.report().unwrap().selected[0].cid, Some(cid));
}

#[test]
fn sequence_gap_is_fatal() {
    let mut state = LedgerState::genesis(AllocationConfig::default());
    let ev = LedgerEvent {
        seq: 2,
        timestamp: 0,
        actor: requester(),
        call: Call::AddRequester {
            requester_id: requester(),
        },
    };
    assert_eq!(
        state.apply(&ev),
        Err(LedgerError::SequenceGap {
            expected: 1,
            got: 2
        })
    );
    assert_eq!(state.last_seq, 0);
}

#[test]
fn genesis_digest_is_constant() {
    let a = replay(AllocationConfig::default(), &[]).unwrap();
    let b = LedgerState::genesis(AllocationConfig::default());
    assert_eq!(a.digest(), b.digest());
}

fn busy_ledger() -> Ledger {
    let mut f = Fixture::new();
    for i in 0..10 {
        f.add_active_worker(profile(i, 1 + i as u32, 6, 5, 4));
    }
    for n in 0..20 {
        let t = training_task(n, 2);
        f.ok(requester(), Call::AddTask { task: t.clone() });
        let mut responses = all_accept(0..10);
        responses.insert(wid(n % 10), OfferResponse::Decline);
        f.allocate(&t, responses);
    }
    f.ledger
}

#[test]
fn replay_reproduces_the_digest() {
    let ledger = busy_ledger();
    let header = ledger.header();
    let once = replay(header.config.clone(), ledger.events()).unwrap();
    let twice = replay(header.config.clone(), ledger.events()).unwrap();
    assert_eq!(once.digest(), ledger.state().digest());
    assert_eq!(once.digest(), twice.digest());
}

#[test]
fn flipping_a_payload_byte_changes_the_digest() {
    let ledger = busy_ledger();
    let config = ledger.header().config;
    let reference = ledger.state().digest();
    let target = ledger.events().len() / 2;
    let mut events = ledger.events().to_vec();
    let mut bytes = events[target].canonical_bytes();
    // flip a hex digit of the actor address: still valid JSON, different event
    let pos = bytes.windows(3).position(|w| w == b"\"0x").unwrap() + 3;
    bytes[pos] = if bytes[pos] == b'a' { b'b' } else { b'a' };
    events[target] = serde_json::from_slice(&bytes).unwrap();
    let altered = replay(config, &events).unwrap();
    assert_ne!(altered.digest(), reference);
}

#[test]
fn allocate_cost_grows_with_pool() {
    let mut costs = Vec::new();
    for n in [10u64, 40] {
        let mut f = Fixture::new();
        for i in 0..n {
            f.add_active_worker(profile(i, 4, 3, 3, 3));
        }
        let t = training_task(0, 1);
        f.ok(requester(), Call::AddTask { task: t.clone() });
        f.allocate(&t, all_accept(0..n));
        costs.push(f.ledger.state().cost(CallKind::AllocateTask));
    }
    assert!(costs[1] > 4 * costs[0]);
}
