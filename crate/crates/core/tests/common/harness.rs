use annotate_core::collab::{apply_logged, ChangeSet, Hub, Op, OpStatus};
use annotate_core::geometry::Shape;
use annotate_core::model::{
    Anchor, AttributeId, AttributeSpec, EntryDraft, FileId, InputType, Media, MetadataId, Project, Value,
};
use annotate_core::serialization::{canonical_bytes, load_project, save_project};
use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

pub struct Shared {
    pub doc: Vec<u8>,
    pub image: FileId,
    pub audio: FileId,
    pub label: AttributeId,
    pub speaker: AttributeId,
}

pub fn shared_project(pid: &str) -> Shared {
    let mut p = Project::with_pid(pid, "shared").unwrap();
    let label = p
        .add_attribute(AttributeSpec::new("label", Anchor::SpatialRegion, InputType::Text))
        .unwrap();
    let speaker = p
        .add_attribute(AttributeSpec::new("speaker", Anchor::TemporalSegment, InputType::Text))
        .unwrap();
    let image = p.add_file("street.jpg", Media::Image).unwrap();
    let audio = p.add_file("meeting.wav", Media::Audio).unwrap();
    Shared {
        doc: save_project(&p).unwrap(),
        image,
        audio,
        label,
        speaker,
    }
}

/// A client replica: the project at `revision`, plus the entries it owns.
pub struct Client {
    pub id: String,
    pub replica: Project,
    pub owned: Vec<MetadataId>,
    pub ops_sent: usize,
}

impl Client {
    pub fn join(hub: &Hub, pid: &str, id: &str) -> Client {
        let replica = load_project(&hub.document(pid).unwrap()).unwrap().project;
        Client {
            id: id.to_owned(),
            replica,
            owned: Vec::new(),
            ops_sent: 0,
        }
    }

    pub fn pull(&mut self, hub: &Hub, pid: &str) {
        let changes = hub.changes_since(pid, self.replica.revision()).unwrap();
        for e in &changes.ops {
            apply_logged(&mut self.replica, e).unwrap();
        }
        assert_eq!(self.replica.revision(), changes.revision);
    }

    fn draft(&self, s: &Shared, rng: &mut StdRng) -> EntryDraft {
        if rng.random_bool(0.5) {
            let x = rng.random_range(0..600) as f64 + 0.5;
            EntryDraft::new(s.image.clone())
                .region(Shape::Rect {
                    x,
                    y: rng.random::<f64>() * 400.0,
                    w: 10.0,
                    h: 12.25,
                })
                .value(&s.label, Value::text(format!("{} #{}", self.id, self.ops_sent)))
        } else {
            let t = rng.random_range(0..3000) as f64 / 10.0;
            EntryDraft::new(s.audio.clone())
                .segment(t, t + 1.5)
                .value(&s.speaker, Value::text(self.id.clone()))
        }
    }

    /// Builds a change-set of 1..=max ops touching only entries this
    /// client created.
    pub fn change_set(&mut self, s: &Shared, rng: &mut StdRng, max: usize) -> ChangeSet {
        let n = rng.random_range(1..=max);
        let mut ops = Vec::new();
        let mut touched: Vec<MetadataId> = Vec::new();
        for _ in 0..n {
            let free: Vec<&MetadataId> = self.owned.iter().filter(|m| !touched.contains(m)).collect();
            let roll = rng.random_range(0..10);
            let op = if free.is_empty() || roll < 5 {
                Op::Upsert {
                    mid: None,
                    entry: self.draft(s, rng),
                }
            } else if roll < 8 {
                let mid = (*free.choose(rng).unwrap()).clone();
                touched.push(mid.clone());
                let entry = self.replica.entry(mid.as_str()).unwrap();
                let entry = if entry.anchor() == Anchor::SpatialRegion {
                    EntryDraft::new(s.image.clone())
                        .region(entry.xy.clone().unwrap().translate(1.0, -0.5))
                        .value(&s.label, Value::text(format!("{} #{}", self.id, self.ops_sent)))
                } else {
                    let t = rng.random_range(0..3000) as f64 / 10.0;
                    EntryDraft::new(s.audio.clone())
                        .segment(t, t + 0.25)
                        .value(&s.speaker, Value::text(self.id.clone()))
                };
                Op::Upsert { mid: Some(mid), entry }
            } else {
                let mid = (*free.choose(rng).unwrap()).clone();
                touched.push(mid.clone());
                Op::Delete { mid }
            };
            self.ops_sent += 1;
            ops.push(op);
        }
        ChangeSet {
            client_id: self.id.clone(),
            base_revision: self.replica.revision(),
            ops,
        }
    }

    /// Records what the server decided and returns how many ops applied.
    pub fn absorb(&mut self, cs: &ChangeSet, statuses: &[OpStatus]) -> usize {
        let mut applied = 0;
        for (op, status) in cs.ops.iter().zip(statuses) {
            if let OpStatus::Applied { mid, .. } = status {
                applied += 1;
                match op {
                    Op::Upsert { mid: None, .. } => self.owned.push(mid.clone()),
                    Op::Delete { mid } => self.owned.retain(|m| m != mid),
                    Op::Upsert { .. } => {}
                }
            }
        }
        applied
    }
}

pub struct ConvergenceReport {
    pub accepted_ops: usize,
    pub statuses: Vec<OpStatus>,
    pub client_docs: Vec<Vec<u8>>,
    pub server_doc: Vec<u8>,
    pub replayed_doc: Vec<u8>,
}

/// `clients` replicas each send `ops_per_client` ops on their own entries,
/// interleaved at random and pulling only now and then.
pub fn run_convergence(hub: &Hub, rng: &mut StdRng, clients: usize, ops_per_client: usize) -> ConvergenceReport {
    let s = shared_project("convergence");
    let (pid, _) = hub.create(&s.doc).unwrap();
    let mut cs: Vec<Client> = (0..clients).map(|i| Client::join(hub, &pid, &format!("client-{i}"))).collect();
    let mut accepted_ops = 0;
    let mut statuses = Vec::new();
    // Each round some clients prepare a change-set from the revision they
    // hold; the sets then reach the server in random order.
    while cs.iter().any(|c| c.ops_sent < ops_per_client) {
        let mut round: Vec<(usize, ChangeSet)> = Vec::new();
        for (i, c) in cs.iter_mut().enumerate() {
            if c.ops_sent < ops_per_client && rng.random_bool(0.7) {
                let max = (ops_per_client - c.ops_sent).min(5);
                round.push((i, c.change_set(&s, rng, max)));
            }
        }
        round.shuffle(rng);
        for (i, set) in round {
            let out = hub.push(&pid, set.clone()).unwrap();
            accepted_ops += cs[i].absorb(&set, &out.accepted);
            statuses.extend(out.accepted);
            // a client sees its own writes; others stay behind until
            // their next push
            cs[i].pull(hub, &pid);
        }
    }
    for c in &mut cs {
        c.pull(hub, &pid);
    }
    ConvergenceReport {
        accepted_ops,
        statuses,
        client_docs: cs.iter().map(|c| canonical_bytes(&c.replica)).collect(),
        server_doc: hub.document(&pid).unwrap(),
        replayed_doc: canonical_bytes(&hub.replay(&pid).unwrap()),
    }
}

/// Outcome of one same-entry conflict round.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictOutcome {
    pub statuses: Vec<Vec<OpStatus>>,
    pub doc: Vec<u8>,
    pub replayed: Vec<u8>,
}

/// Every contender edits entry `m` from the same base revision; they arrive
/// in `order`. Each change-set also inserts an entry of its own.
pub fn run_conflict(order: &[usize], contenders: usize) -> (ConflictOutcome, Shared, MetadataId, u64) {
    let s = shared_project("conflict");
    let hub = Hub::in_memory();
    let (pid, _) = hub.create(&s.doc).unwrap();
    let seed = hub
        .push(
            &pid,
            ChangeSet {
                client_id: "seeder".into(),
                base_revision: 0,
                ops: vec![Op::Upsert {
                    mid: None,
                    entry: EntryDraft::new(s.image.clone())
                        .region(Shape::Rect {
                            x: 1.0,
                            y: 1.0,
                            w: 5.0,
                            h: 5.0,
                        })
                        .value(&s.label, Value::text("seed")),
                }],
            },
        )
        .unwrap();
    let OpStatus::Applied { mid, revision: base } = seed.accepted[0].clone() else {
        panic!("seed insert rejected");
    };
    assert!(order.len() == contenders);
    let sets: Vec<ChangeSet> = (0..contenders)
        .map(|c| {
            let edit = if c % 4 == 3 {
                Op::Delete { mid: mid.clone() }
            } else {
                Op::Upsert {
                    mid: Some(mid.clone()),
                    entry: EntryDraft::new(s.image.clone())
                        .region(Shape::Rect {
                            x: c as f64,
                            y: 1.0,
                            w: 5.0,
                            h: 5.0,
                        })
                        .value(&s.label, Value::text(format!("writer {c}"))),
                }
            };
            let own = Op::Upsert {
                mid: None,
                entry: EntryDraft::new(s.audio.clone())
                    .segment(c as f64, c as f64 + 1.0)
                    .value(&s.speaker, Value::text(format!("writer {c}"))),
            };
            ChangeSet {
                client_id: format!("writer-{c}"),
                base_revision: base,
                ops: vec![edit, own],
            }
        })
        .collect();
    let statuses = order.iter().map(|&c| hub.push(&pid, sets[c].clone()).unwrap().accepted).collect();
    (
        ConflictOutcome {
            statuses,
            doc: hub.document(&pid).unwrap(),
            replayed: canonical_bytes(&hub.replay(&pid).unwrap()),
        },
        s,
        mid,
        base,
    )
}

/// What the documented rule predicts for `run_conflict`: the first arrival
/// edits `m`, every later edit of `m` is superseded by that write, and every
/// own insert applies.
pub fn check_conflict_rule(order: &[usize], out: &ConflictOutcome, mid: &MetadataId, base: u64) -> Result<(), String> {
    let first_write = base + 1;
    let mut revision = base;
    for (k, statuses) in out.statuses.iter().enumerate() {
        if statuses.len() != 2 {
            return Err(format!("arrival {k}: {} statuses", statuses.len()));
        }
        match (&statuses[0], k) {
            (OpStatus::Applied { mid: m, revision: r }, 0) if m == mid && *r == revision + 1 => revision += 1,
            (OpStatus::Superseded { mid: m, last_write }, k)
                if k > 0 && order[0] % 4 != 3 && m == mid && *last_write == first_write => {}
            // the winner deleted the entry: it no longer exists for anyone
            (OpStatus::Rejected { cause }, k) if k > 0 && order[0] % 4 == 3 && cause.contains(mid.as_str()) => {}
            (other, _) => return Err(format!("arrival {k} (writer {}): edit got {other:?}", order[k])),
        }
        match &statuses[1] {
            OpStatus::Applied { revision: r, .. } if *r == revision + 1 => revision += 1,
            other => return Err(format!("arrival {k}: own insert got {other:?}")),
        }
    }
    let p = load_project(&out.doc).map_err(|e| e.to_string())?.project;
    let winner = order[0];
    let entry = p.entry(mid.as_str());
    match (winner % 4 == 3, entry) {
        (true, None) => {}
        (false, Some(e)) if e.av.values().any(|v| *v == Value::text(format!("writer {winner}"))) => {}
        (_, e) => return Err(format!("winner {winner} not reflected: {e:?}")),
    }
    if p.revision() != revision {
        return Err(format!("revision {} != {revision}", p.revision()));
    }
    if out.replayed != out.doc {
        return Err("replay differs from live snapshot".into());
    }
    Ok(())
}
