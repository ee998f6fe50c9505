use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use annotate_core::collab::{apply_logged, Changes, ChangeSet, Op, OpStatus, PushOutcome};
use annotate_core::model::{EntryDraft, Value};
use annotate_core::serialization::{canonical_bytes, load_project};
use annotate_core::geometry::Shape;
use rand::rngs::StdRng;
use rand::Rng;

use super::harness::shared_project;

pub const BIN: &str = env!("CARGO_BIN_EXE_annotate");

pub struct Server {
    pub child: Child,
    pub base_url: String,
    pub log: Arc<Mutex<Vec<String>>>,
}

pub fn spawn(data: &Path, snapshot_interval: u64) -> Server {
    let mut child = Command::new(BIN)
        .args(["serve", "--port", "0", "--snapshot-interval", &snapshot_interval.to_string()])
        .env("ANNOTATE_DATA_DIR", data)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn annotate serve");
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let mut log = Vec::new();
    let base_url = loop {
        let line = match lines.next() {
            Some(Ok(line)) => line,
            _ => panic!("server exited before listening: {log:?} {:?}", child.wait()),
        };
        if let Some(url) = line.strip_prefix("annotate: listening on ") {
            break url.trim().to_owned();
        }
        log.push(line);
    };
    let log = Arc::new(Mutex::new(log));
    let sink = log.clone();
    thread::spawn(move || {
        for line in lines.map_while(Result::ok) {
            sink.lock().unwrap().push(line);
        }
    });
    Server { child, base_url, log }
}

impl Server {
    pub fn signal(&self, sig: &str) {
        let ok = Command::new("kill")
            .args([format!("-{sig}"), self.child.id().to_string()])
            .status()
            .unwrap()
            .success();
        assert!(ok, "kill -{sig} failed");
    }

    pub fn wait_timeout(&mut self, limit: Duration) -> Option<ExitStatus> {
        let start = Instant::now();
        while start.elapsed() < limit {
            if let Some(status) = self.child.try_wait().unwrap() {
                return Some(status);
            }
            thread::sleep(Duration::from_millis(10));
        }
        None
    }

    pub fn stop(mut self) -> ExitStatus {
        self.signal("TERM");
        self.wait_timeout(Duration::from_secs(20)).expect("server did not stop")
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

/// `(status, body)` of a request, or an error string when the connection
/// failed.
pub fn request(agent: &ureq::Agent, method: &str, url: &str, body: Option<&[u8]>) -> Result<(u16, Vec<u8>), String> {
    let resp = match (method, body) {
        ("GET", _) => agent.get(url).call(),
        ("POST", Some(b)) => agent.post(url).header("content-type", "application/json").send(b),
        _ => unreachable!(),
    };
    let mut resp = resp.map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_vec().map_err(|e| e.to_string())?;
    Ok((status, body))
}

#[derive(Debug, Default)]
pub struct TrialReport {
    pub acked_batches: usize,
    pub sent_batches: usize,
    pub recovered_batches: usize,
    pub problems: Vec<String>,
}

/// One crash trial: a writer streams change-sets of inserts while the
/// server is killed at a random moment; a fresh server then recovers the
/// data directory. Every change-set must be wholly present or wholly absent,
/// acknowledged ones must be present, and the project must validate.
pub fn kill_trial(rng: &mut StdRng, signal: &str) -> TrialReport {
    let tmp = tempfile::tempdir().unwrap();
    let interval = rng.random_range(1..12);
    let server = spawn(tmp.path(), interval);
    let s = shared_project("crash");
    let fresh = String::from_utf8(s.doc.clone())
        .unwrap()
        .replacen("\"revision\":4", "\"revision\":0", 1)
        .into_bytes();
    let agent = agent();
    let url = server.base_url.clone();
    let (status, _) = request(&agent, "POST", &format!("{url}/projects"), Some(&fresh)).unwrap();
    assert_eq!(status, 201);

    let sizes: Vec<usize> = (0..10_000).map(|_| rng.random_range(1..40)).collect();
    let acked = Arc::new(Mutex::new(0usize));
    let sent = Arc::new(Mutex::new(0usize));
    let writer = {
        let (acked, sent, sizes) = (acked.clone(), sent.clone(), sizes.clone());
        let (image, label) = (s.image.clone(), s.label.clone());
        let agent = agent.clone();
        let url = url.clone();
        thread::spawn(move || {
            let mut base = 0;
            for (k, &n) in sizes.iter().enumerate() {
                let ops = (0..n)
                    .map(|i| Op::Upsert {
                        mid: None,
                        entry: EntryDraft::new(image.clone())
                            .region(Shape::Rect {
                                x: i as f64,
                                y: k as f64,
                                w: 2.0,
                                h: 3.5,
                            })
                            .value(&label, Value::text(format!("batch {k}"))),
                    })
                    .collect();
                let cs = ChangeSet {
                    client_id: "writer".into(),
                    base_revision: base,
                    ops,
                };
                *sent.lock().unwrap() = k + 1;
                let body = serde_json::to_vec(&cs).unwrap();
                match request(&agent, "POST", &format!("{url}/projects/crash/changes"), Some(&body)) {
                    Ok((200, reply)) => {
                        let out: PushOutcome = serde_json::from_slice(&reply).unwrap();
                        assert!(out.accepted.iter().all(|s| matches!(s, OpStatus::Applied { .. })));
                        base = out.revision;
                        *acked.lock().unwrap() = k + 1;
                    }
                    _ => return,
                }
            }
        })
    };
    thread::sleep(Duration::from_millis(rng.random_range(5..120)));
    server.signal(signal);
    let mut server = server;
    server.wait_timeout(Duration::from_secs(20)).expect("server ignored signal");
    writer.join().unwrap();
    drop(server);

    let mut report = TrialReport {
        acked_batches: *acked.lock().unwrap(),
        sent_batches: *sent.lock().unwrap(),
        ..Default::default()
    };
    let server = spawn(tmp.path(), interval);
    let (status, doc) = request(&agent, "GET", &format!("{}/projects/crash", server.base_url), None).unwrap();
    if status != 200 {
        report.problems.push(format!("GET after restart: {status}"));
        return report;
    }
    let project = match load_project(&doc) {
        Ok(l) => l.project,
        Err(e) => {
            report.problems.push(format!("recovered document does not load: {e}"));
            return report;
        }
    };
    let violations = project.validate();
    if !violations.is_empty() {
        report.problems.push(format!("violations: {violations:?}"));
    }
    let mut per_batch: BTreeMap<usize, usize> = BTreeMap::new();
    for e in project.metadata().values() {
        let Some(Value::Text(label)) = e.av.get(&s.label) else {
            report.problems.push(format!("entry {} lost its label", e.mid));
            continue;
        };
        let k: usize = label.trim_start_matches("batch ").parse().unwrap();
        *per_batch.entry(k).or_default() += 1;
    }
    report.recovered_batches = per_batch.len();
    for (&k, &n) in &per_batch {
        if n != sizes[k] {
            report.problems.push(format!("batch {k}: {n} of {} ops visible", sizes[k]));
        }
    }
    if per_batch.keys().copied().ne(0..per_batch.len()) {
        report.problems.push(format!("batches are not a prefix: {:?}", per_batch.keys()));
    }
    if per_batch.len() < report.acked_batches {
        report.problems.push(format!(
            "{} acknowledged batches but only {} recovered",
            report.acked_batches,
            per_batch.len()
        ));
    }
    if per_batch.len() > report.sent_batches {
        report.problems.push("recovered a batch that was never sent".into());
    }

    // the log replays onto the creation document to the same bytes
    let (_, changes) = request(&agent, "GET", &format!("{}/projects/crash?since=0", server.base_url), None).unwrap();
    let changes: Changes = serde_json::from_slice(&changes).unwrap();
    let mut replica = load_project(&fresh).unwrap().project;
    for e in &changes.ops {
        if let Err(e) = apply_logged(&mut replica, e) {
            report.problems.push(format!("replay failed: {e}"));
            break;
        }
    }
    if canonical_bytes(&replica) != doc {
        report.problems.push("log replay differs from recovered snapshot".into());
    }
    let status = server.stop();
    if !status.success() {
        report.problems.push(format!("graceful stop exited with {status}"));
    }
    report
}
