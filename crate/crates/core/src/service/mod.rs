//! Live labelling sessions: an OASIS run whose oracle is a person.
//!
//! Each session pins exactly one pending query. Submitting the label for
//! that pair advances the sampler, refreshes the estimate and draws the next
//! query. Draws that land on a pair labelled earlier in the session are
//! resolved from the label cache without asking again. All state changes go
//! to an append-only event log so sessions survive a restart.

mod events;

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use events::{read_events, Event, EventLog, LabelSource};

use crate::error::{Error, Result};
use crate::oracle::{Oracle, OracleKind};
use crate::pool::{read_pool, PairRecord, Pool, PoolFormat};
use crate::sampler::{Draw, OasisSampler, RunTrace, Sampler, SamplerConfig, Strategy, TraceRecord};

/// Display payload per pair_id.
pub type Records = HashMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Paused,
    Exhausted,
}

/// Body of a session-creation request. Exactly one of `pairs` and
/// `pool_csv` must be given.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub pairs: Option<Vec<PairRecord>>,
    /// Pool in the comma-separated file format.
    #[serde(default)]
    pub pool_csv: Option<String>,
    #[serde(default)]
    pub scores_are_probabilities: Option<bool>,
    /// Display payload per pair_id, passed through untouched.
    #[serde(default)]
    pub records: Option<HashMap<String, Value>>,
    #[serde(default)]
    pub config: SamplerConfig,
}

impl CreateSession {
    fn into_parts(self) -> Result<(Pool, Option<Records>, SamplerConfig)> {
        let pool = match (self.pairs, self.pool_csv) {
            (Some(pairs), None) => Pool::new(pairs, self.scores_are_probabilities)?,
            (None, Some(csv)) => {
                let format = PoolFormat {
                    scores_are_probabilities: self.scores_are_probabilities,
                    ..PoolFormat::default()
                };
                read_pool(csv.as_bytes(), &format)?
            }
            _ => return Err(Error::param("pool", "give exactly one of `pairs` and `pool_csv`")),
        };
        Ok((pool, self.records, self.config))
    }
}

/// The pair a session is waiting on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub session_id: String,
    /// Iteration this label will complete.
    pub t: usize,
    pub pair_id: String,
    pub score: f64,
    pub predicted_label: bool,
    pub stratum: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<Value>,
}

/// Read-only view of a session's estimate. The F-measure, precision and
/// recall are `None` while their denominators are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSnapshot {
    pub session_id: String,
    pub status: SessionStatus,
    pub alpha: f64,
    pub f_measure: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub estimate_pending: bool,
    /// Distinct pairs labelled so far.
    pub budget: usize,
    /// Labels accepted so far, including repeats answered from the cache.
    pub iteration: usize,
    /// Labels typed in by the labeller.
    pub labels_submitted: usize,
    pub stratum_match_rates: Vec<f64>,
    pub created_at: u64,
    pub updated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub estimate: EstimateSnapshot,
    /// Whether this label used up a unit of budget.
    pub newly_labelled: bool,
    pub next_query: Option<Query>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Parses a JSON label: `0`, `1`, `true` or `false`.
pub fn parse_label(value: &Value) -> Result<bool> {
    match value {
        Value::Bool(b) => Ok(*b),
        Value::Number(n) if n.as_u64() == Some(0) => Ok(false),
        Value::Number(n) if n.as_u64() == Some(1) => Ok(true),
        other => Err(Error::InvalidLabel(other.to_string())),
    }
}

#[derive(Debug)]
pub struct Session {
    id: String,
    pool: Arc<Pool>,
    records: Option<HashMap<String, Value>>,
    config: SamplerConfig,
    sampler: OasisSampler,
    oracle: Oracle,
    pending: Option<Draw>,
    status: SessionStatus,
    created_at: u64,
    updated_at: u64,
    last_activity: Instant,
    trace: Vec<TraceRecord>,
    labels_submitted: usize,
}

impl Session {
    /// Builds the sampler and draws the first query. Events produced along
    /// the way are pushed to `out`.
    fn start(
        id: String,
        pool: Arc<Pool>,
        records: Option<HashMap<String, Value>>,
        config: SamplerConfig,
        at: u64,
        out: &mut Vec<Event>,
    ) -> Result<Self> {
        if config.strategy != Strategy::Oasis {
            return Err(Error::param("strategy", "sessions only run oasis"));
        }
        let sampler = OasisSampler::new(&pool, &config)?;
        let mut session = Session {
            id,
            pool,
            records,
            config,
            sampler,
            oracle: Oracle::new(OracleKind::External),
            pending: None,
            status: SessionStatus::Active,
            created_at: at,
            updated_at: at,
            last_activity: Instant::now(),
            trace: Vec::new(),
            labels_submitted: 0,
        };
        session.advance(at, out)?;
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn pool(&self) -> &Pool {
        &self.pool
    }

    pub fn iteration(&self) -> usize {
        self.sampler.iteration()
    }

    pub fn budget(&self) -> usize {
        self.oracle.budget()
    }

    /// Stratum distribution the pending query was drawn from.
    pub fn instrumental(&self) -> Vec<f64> {
        self.sampler.instrumental().stratum_probs
    }

    fn finished(&self) -> bool {
        self.sampler.iteration() >= self.config.iterations
            || self.config.label_budget.is_some_and(|b| self.oracle.budget() >= b)
    }

    /// Draws until a pair without a cached label comes up, or the run ends.
    fn advance(&mut self, at: u64, out: &mut Vec<Event>) -> Result<()> {
        loop {
            if self.finished() {
                self.pending = None;
                self.status = SessionStatus::Exhausted;
                return Ok(());
            }
            let draw = self.sampler.propose(&self.pool);
            let t = self.sampler.iteration() + 1;
            let pair_id = self.pool.pair(draw.pair_index).pair_id.clone();
            out.push(Event::QueryDrawn {
                session_id: self.id.clone(),
                at,
                t,
                pair_id: pair_id.clone(),
                stratum: draw.stratum.expect("oasis draws carry a stratum"),
                weight: draw.weight,
            });
            match self.oracle.ledger().get(draw.pair_index) {
                Some(label) => {
                    self.accept(&draw, label)?;
                    out.push(Event::LabelAccepted {
                        session_id: self.id.clone(),
                        at,
                        t,
                        pair_id,
                        label,
                        source: LabelSource::Ledger,
                    });
                }
                None => {
                    self.pending = Some(draw);
                    return Ok(());
                }
            }
        }
    }

    fn accept(&mut self, draw: &Draw, label: bool) -> Result<bool> {
        let before = self.oracle.budget();
        self.oracle.supply(draw.pair_index, label);
        let label = self.oracle.query(&self.pool, draw.pair_index)?;
        self.sampler.observe(&self.pool, draw, label);
        self.trace.push(TraceRecord {
            t: self.sampler.iteration(),
            pair_index: draw.pair_index,
            stratum: draw.stratum,
            weight: draw.weight,
            label,
            prediction: self.pool.pair(draw.pair_index).predicted_label,
            estimate: self.sampler.estimate(),
            budget: self.oracle.budget(),
        });
        Ok(self.oracle.budget() > before)
    }

    fn touch(&mut self, at: u64) {
        self.last_activity = Instant::now();
        self.updated_at = at;
        if self.status == SessionStatus::Paused {
            self.status = SessionStatus::Active;
        }
    }

    /// The pending query. Repeated calls return the same pair until a label
    /// is accepted.
    pub fn query(&mut self) -> Result<Query> {
        let draw = self.pending.ok_or_else(|| Error::SessionExhausted(self.id.clone()))?;
        self.touch(self.updated_at);
        let pair = self.pool.pair(draw.pair_index);
        Ok(Query {
            session_id: self.id.clone(),
            t: self.sampler.iteration() + 1,
            pair_id: pair.pair_id.clone(),
            score: pair.score,
            predicted_label: pair.predicted_label,
            stratum: draw.stratum.expect("oasis draws carry a stratum"),
            record: self.records.as_ref().and_then(|r| r.get(&pair.pair_id)).cloned(),
        })
    }

    fn submit(&mut self, pair_id: &str, label: bool, at: u64, out: &mut Vec<Event>) -> Result<LabelOutcome> {
        let draw = self.pending.ok_or_else(|| Error::SessionExhausted(self.id.clone()))?;
        let expected = &self.pool.pair(draw.pair_index).pair_id;
        if expected != pair_id {
            return Err(Error::Conflict { expected: expected.clone(), got: pair_id.to_string() });
        }
        self.touch(at);
        self.pending = None;
        let newly_labelled = self.accept(&draw, label)?;
        self.labels_submitted += 1;
        out.push(Event::LabelAccepted {
            session_id: self.id.clone(),
            at,
            t: self.sampler.iteration(),
            pair_id: pair_id.to_string(),
            label,
            source: LabelSource::Labeller,
        });
        self.advance(at, out)?;
        let next_query = self.pending.is_some().then(|| self.query()).transpose()?;
        Ok(LabelOutcome { estimate: self.estimate(), newly_labelled, next_query })
    }

    pub fn estimate(&self) -> EstimateSnapshot {
        let sums = self.sampler.sums();
        let f_measure = sums.f_measure(self.config.alpha);
        EstimateSnapshot {
            session_id: self.id.clone(),
            status: self.status,
            alpha: self.config.alpha,
            f_measure,
            precision: sums.precision(),
            recall: sums.recall(),
            estimate_pending: f_measure.is_none(),
            budget: self.oracle.budget(),
            iteration: self.sampler.iteration(),
            labels_submitted: self.labels_submitted,
            stratum_match_rates: self.sampler.model().means(),
            created_at: self.created_at,
            updated_at: self.updated_at,
        }
    }

    /// Accepted labels so far in the batch trace format.
    pub fn trace(&self) -> RunTrace {
        RunTrace {
            strategy: Strategy::Oasis,
            records: self.trace.clone(),
            final_posterior: self.sampler.stratum_rates(),
            final_instrumental: self.sampler.stratum_distribution(),
        }
    }

    fn pause_if_idle(&mut self, window: Duration) -> bool {
        if self.status == SessionStatus::Active && self.last_activity.elapsed() >= window {
            self.status = SessionStatus::Paused;
            true
        } else {
            false
        }
    }
}

/// Owns every live session and the event log.
#[derive(Debug, Default)]
pub struct SessionManager {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    log: Option<Mutex<EventLog>>,
    idle_window: Option<Duration>,
}

impl SessionManager {
    /// In-memory manager without persistence.
    pub fn new() -> Self {
        Self::default()
    }

    /// Manager backed by the event log at `path`. Sessions recorded there
    /// are rebuilt by replaying their events.
    pub fn with_event_log(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let sessions = recover(read_events(path)?)?;
        Ok(SessionManager {
            sessions: RwLock::new(
                sessions.into_iter().map(|s| (s.id.clone(), Arc::new(Mutex::new(s)))).collect(),
            ),
            log: Some(Mutex::new(EventLog::open(path)?)),
            idle_window: None,
        })
    }

    /// Sessions idle for `window` are paused by [`SessionManager::sweep_idle`].
    pub fn idle_window(mut self, window: Duration) -> Self {
        self.idle_window = Some(window);
        self
    }

    fn record(&self, events: &[Event]) -> Result<()> {
        if let Some(log) = &self.log {
            let mut log = log.lock().expect("event log lock poisoned");
            for e in events {
                log.append(e)?;
            }
        }
        Ok(())
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::SessionNotFound(id.to_string()))
    }

    /// Runs `f` with exclusive access to session `id`.
    pub fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> T) -> Result<T> {
        let session = self.get(id)?;
        let mut guard = session.lock().expect("session lock poisoned");
        Ok(f(&mut guard))
    }

    pub fn create_session(&self, request: CreateSession) -> Result<EstimateSnapshot> {
        let (pool, records, config) = request.into_parts()?;
        let id = uuid::Uuid::new_v4().to_string();
        let at = now_ms();
        let created = Event::Created {
            session_id: id.clone(),
            at,
            pairs: pool.pairs().to_vec(),
            scores_are_probabilities: pool.scores_are_probabilities(),
            records: records.clone(),
            config: config.clone(),
        };
        let mut events = vec![created];
        let session = Session::start(id.clone(), Arc::new(pool), records, config, at, &mut events)?;
        let snapshot = session.estimate();
        let mut sessions = self.sessions.write().expect("session map lock poisoned");
        self.record(&events)?;
        sessions.insert(id, Arc::new(Mutex::new(session)));
        Ok(snapshot)
    }

    pub fn next_query(&self, id: &str) -> Result<Query> {
        self.with_session(id, Session::query)?
    }

    pub fn submit_label(&self, id: &str, pair_id: &str, label: bool) -> Result<LabelOutcome> {
        let session = self.get(id)?;
        let mut guard = session.lock().expect("session lock poisoned");
        let mut events = Vec::new();
        // Work on a copy so a failure leaves the session untouched.
        let mut next = clone_session(&guard);
        let outcome = next.submit(pair_id, label, now_ms(), &mut events)?;
        self.record(&events)?;
        *guard = next;
        Ok(outcome)
    }

    pub fn get_estimate(&self, id: &str) -> Result<EstimateSnapshot> {
        self.with_session(id, |s| s.estimate())
    }

    pub fn trace(&self, id: &str) -> Result<RunTrace> {
        self.with_session(id, |s| s.trace())
    }

    /// Pauses every active session idle beyond the configured window and
    /// returns how many were paused.
    pub fn sweep_idle(&self) -> usize {
        let Some(window) = self.idle_window else {
            return 0;
        };
        let sessions: Vec<_> =
            self.sessions.read().expect("session map lock poisoned").values().cloned().collect();
        sessions.iter().filter(|s| s.lock().expect("session lock poisoned").pause_if_idle(window)).count()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> =
            self.sessions.read().expect("session map lock poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }
}

fn clone_session(s: &Session) -> Session {
    Session {
        id: s.id.clone(),
        pool: Arc::clone(&s.pool),
        records: s.records.clone(),
        config: s.config.clone(),
        sampler: s.sampler.clone(),
        oracle: s.oracle.clone(),
        pending: s.pending,
        status: s.status,
        created_at: s.created_at,
        updated_at: s.updated_at,
        last_activity: s.last_activity,
        trace: s.trace.clone(),
        labels_submitted: s.labels_submitted,
    }
}

struct Replay {
    session: Session,
    produced: Vec<Event>,
    seen: usize,
}

impl Replay {
    fn check(&mut self, logged: &Event) -> Result<()> {
        let produced = self.produced.get(self.seen).ok_or_else(|| {
            Error::EventLog(format!("session {}: log runs past the replayed state", self.session.id))
        })?;
        let same = produced.replay_key() == logged.replay_key()
            && match (produced, logged) {
                (Event::QueryDrawn { stratum: a, .. }, Event::QueryDrawn { stratum: b, .. }) => a == b,
                (Event::LabelAccepted { source: a, .. }, Event::LabelAccepted { source: b, .. }) => a == b,
                _ => false,
            };
        if !same {
            return Err(Error::EventLog(format!(
                "session {}: replay diverged at event {}",
                self.session.id,
                self.seen + 1
            )));
        }
        self.seen += 1;
        Ok(())
    }
}

/// Rebuilds sessions from their logged events. Labeller labels are fed back
/// in order; every other event must be reproduced exactly by the replay.
fn recover(events: Vec<Event>) -> Result<Vec<Session>> {
    let mut replays: HashMap<String, Replay> = HashMap::new();
    let mut order = Vec::new();
    for event in events {
        let id = event.session_id().to_string();
        match event {
            Event::Created { at, pairs, scores_are_probabilities, records, config, .. } => {
                if replays.contains_key(&id) {
                    return Err(Error::SessionExists(id));
                }
                let pool = Pool::new(pairs, Some(scores_are_probabilities))?;
                let mut produced = Vec::new();
                let session = Session::start(id.clone(), Arc::new(pool), records, config, at, &mut produced)?;
                order.push(id.clone());
                replays.insert(id, Replay { session, produced, seen: 0 });
            }
            ref logged => {
                let replay = replays
                    .get_mut(&id)
                    .ok_or_else(|| Error::EventLog(format!("event for unknown session {id}")))?;
                if let Event::LabelAccepted { at, pair_id, label, source: LabelSource::Labeller, .. } = logged
                {
                    let mut produced = std::mem::take(&mut replay.produced);
                    replay
                        .session
                        .submit(pair_id, *label, *at, &mut produced)
                        .map_err(|e| Error::EventLog(format!("session {id}: {e}")))?;
                    replay.produced = produced;
                }
                replay.check(logged)?;
                if let Event::QueryDrawn { at, .. } | Event::LabelAccepted { at, .. } = logged {
                    replay.session.updated_at = *at;
                }
            }
        }
    }
    Ok(order.into_iter().map(|id| replays.remove(&id).expect("replayed session").session).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::run_oasis;

    fn pool_pairs(n: usize) -> Vec<PairRecord> {
        (0..n)
            .map(|i| {
                let score = (i as f64 + 0.5) / n as f64;
                PairRecord::new(format!("p{i}"), score, score > 0.7)
            })
            .collect()
    }

    fn request(n: usize, seed: u64) -> CreateSession {
        CreateSession {
            pairs: Some(pool_pairs(n)),
            config: SamplerConfig { seed, iterations: 2000, desired_strata: 5, ..SamplerConfig::default() },
            ..CreateSession::default()
        }
    }

    /// Labeller that agrees with the classifier above a score of 0.8.
    fn labeller(pair: &PairRecord) -> bool {
        pair.score > 0.8
    }

    fn label_n(mgr: &SessionManager, id: &str, n: usize) {
        for _ in 0..n {
            let q = mgr.next_query(id).unwrap();
            let pair = PairRecord::new(&q.pair_id, q.score, q.predicted_label);
            mgr.submit_label(id, &q.pair_id, labeller(&pair)).unwrap();
        }
    }

    #[test]
    fn query_is_idempotent() {
        let mgr = SessionManager::new();
        let id = mgr.create_session(request(50, 1)).unwrap().session_id;
        let a = mgr.next_query(&id).unwrap();
        let b = mgr.next_query(&id).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.t, 1);
    }

    #[test]
    fn conflict_leaves_state_unchanged() {
        let mgr = SessionManager::new();
        let id = mgr.create_session(request(50, 1)).unwrap().session_id;
        let q = mgr.next_query(&id).unwrap();
        let before = mgr.get_estimate(&id).unwrap();
        let other = if q.pair_id == "p0" { "p1" } else { "p0" };
        let err = mgr.submit_label(&id, other, true).unwrap_err();
        assert!(matches!(err, Error::Conflict { .. }));
        assert_eq!(mgr.get_estimate(&id).unwrap(), before);
        assert_eq!(mgr.next_query(&id).unwrap(), q);
    }

    #[test]
    fn budget_counts_distinct_pairs() {
        let mgr = SessionManager::new();
        let id = mgr.create_session(request(8, 3)).unwrap().session_id;
        let q = mgr.next_query(&id).unwrap();
        let out = mgr.submit_label(&id, &q.pair_id, true).unwrap();
        assert!(out.newly_labelled);
        assert_eq!(out.estimate.budget, 1);
        let mut submitted = 1;
        while mgr.next_query(&id).is_ok() {
            label_n(&mgr, &id, 1);
            submitted += 1;
        }
        // Once every pair is labelled the remaining draws are all answered
        // from the cache and the run completes.
        let est = mgr.get_estimate(&id).unwrap();
        assert_eq!(est.budget, 8);
        assert_eq!(est.labels_submitted, submitted);
        assert_eq!(submitted, 8);
        assert_eq!(est.iteration, 2000);
        assert_eq!(est.status, SessionStatus::Exhausted);
        assert_eq!(est.budget, mgr.trace(&id).unwrap().final_budget());
    }

    #[test]
    fn unknown_session_and_bad_pool() {
        let mgr = SessionManager::new();
        assert!(matches!(mgr.next_query("nope"), Err(Error::SessionNotFound(_))));
        let empty = CreateSession { pairs: Some(Vec::new()), ..CreateSession::default() };
        assert!(matches!(mgr.create_session(empty), Err(Error::EmptyPool)));
        let both = CreateSession {
            pairs: Some(pool_pairs(3)),
            pool_csv: Some("pair_id,score,predicted_label\na,0.1,0\n".into()),
            ..CreateSession::default()
        };
        assert_eq!(mgr.create_session(both).unwrap_err().field(), Some("pool"));
    }

    #[test]
    fn csv_pool_and_records_pass_through() {
        let mgr = SessionManager::new();
        let records = HashMap::from([("a".to_string(), serde_json::json!({"name": "Ann"}))]);
        let req = CreateSession {
            pool_csv: Some("pair_id,score,predicted_label\na,0.9,1\n".into()),
            records: Some(records),
            ..CreateSession::default()
        };
        let id = mgr.create_session(req).unwrap().session_id;
        let q = mgr.next_query(&id).unwrap();
        assert_eq!(q.pair_id, "a");
        assert_eq!(q.record, Some(serde_json::json!({"name": "Ann"})));
    }

    #[test]
    fn perfect_matcher_session_estimates_one() {
        let mgr = SessionManager::new();
        let id = mgr.create_session(request(40, 5)).unwrap().session_id;
        while let Ok(q) = mgr.next_query(&id) {
            let out = mgr.submit_label(&id, &q.pair_id, q.predicted_label).unwrap();
            if let Some(f) = out.estimate.f_measure {
                assert_eq!(f, 1.0);
            }
        }
    }

    #[test]
    fn precision_and_recall_follow_alpha() {
        let mut sums = crate::estimators::WeightedSums::default();
        sums.add(2.0, true, true);
        sums.add(1.0, false, true);
        assert!((sums.f_measure(0.5).unwrap() - 0.8).abs() < 1e-15);
        assert!((sums.precision().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(sums.recall(), Some(1.0));
    }

    #[test]
    fn estimate_pending_before_any_match() {
        let mgr = SessionManager::new();
        let snap = mgr.create_session(request(50, 1)).unwrap();
        assert!(snap.estimate_pending);
        assert_eq!(snap.f_measure, None);
        assert_eq!(snap.status, SessionStatus::Active);
    }

    #[test]
    fn sessions_on_one_pool_are_independent() {
        let mgr = SessionManager::new();
        let a = mgr.create_session(request(60, 9)).unwrap().session_id;
        let b = mgr.create_session(request(60, 9)).unwrap().session_id;
        assert_ne!(a, b);
        assert_eq!(mgr.next_query(&a).unwrap().pair_id, mgr.next_query(&b).unwrap().pair_id);
        for _ in 0..10 {
            let q = mgr.next_query(&a).unwrap();
            mgr.submit_label(&a, &q.pair_id, true).unwrap();
            let q = mgr.next_query(&b).unwrap();
            mgr.submit_label(&b, &q.pair_id, false).unwrap();
        }
        let ea = mgr.get_estimate(&a).unwrap();
        let eb = mgr.get_estimate(&b).unwrap();
        assert_ne!(ea.stratum_match_rates, eb.stratum_match_rates);
    }

    #[test]
    fn replay_matches_batch_run() {
        let mgr = SessionManager::new();
        let req = request(30, 11);
        let pairs = req.pairs.clone().unwrap();
        let config = req.config.clone();
        let id = mgr.create_session(req).unwrap().session_id;
        while mgr.get_estimate(&id).unwrap().status != SessionStatus::Exhausted {
            label_n(&mgr, &id, 1);
        }
        let session = mgr.trace(&id).unwrap();
        assert_eq!(session.records.len(), config.iterations);

        let truth: Vec<PairRecord> = pairs
            .into_iter()
            .map(|p| {
                let l = labeller(&p);
                p.with_truth(l)
            })
            .collect();
        let pool = Pool::new(truth, None).unwrap();
        let batch = run_oasis(&pool, OracleKind::Deterministic, &config).unwrap();
        assert_eq!(batch.records, session.records);
        assert!(matches!(mgr.next_query(&id), Err(Error::SessionExhausted(_))));
        assert!(matches!(mgr.submit_label(&id, "p0", true), Err(Error::SessionExhausted(_))));
    }

    #[test]
    fn label_budget_exhausts_session() {
        let mgr = SessionManager::new();
        let mut req = request(50, 2);
        req.config.label_budget = Some(3);
        let id = mgr.create_session(req).unwrap().session_id;
        label_n(&mgr, &id, 3);
        let est = mgr.get_estimate(&id).unwrap();
        assert_eq!(est.status, SessionStatus::Exhausted);
        assert_eq!(est.budget, 3);
    }

    #[test]
    fn rejects_non_oasis_strategy() {
        let mgr = SessionManager::new();
        let mut req = request(10, 0);
        req.config.strategy = Strategy::Passive;
        assert_eq!(mgr.create_session(req).unwrap_err().field(), Some("strategy"));
    }

    #[test]
    fn parse_label_accepts_binary_only() {
        assert!(parse_label(&serde_json::json!(1)).unwrap());
        assert!(!parse_label(&serde_json::json!(false)).unwrap());
        for bad in [serde_json::json!(2), serde_json::json!("1"), serde_json::json!(0.5)] {
            assert!(matches!(parse_label(&bad), Err(Error::InvalidLabel(_))));
        }
    }

    #[test]
    fn idle_sessions_pause_and_resume() {
        let mgr = SessionManager::new().idle_window(Duration::ZERO);
        let id = mgr.create_session(request(20, 0)).unwrap().session_id;
        assert_eq!(mgr.sweep_idle(), 1);
        assert_eq!(mgr.get_estimate(&id).unwrap().status, SessionStatus::Paused);
        mgr.next_query(&id).unwrap();
        assert_eq!(mgr.get_estimate(&id).unwrap().status, SessionStatus::Active);
    }

    #[test]
    fn recovers_from_event_log() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.ndjson");
        let (id, pending, estimate, trace) = {
            let mgr = SessionManager::with_event_log(&path).unwrap();
            let id = mgr.create_session(request(60, 4)).unwrap().session_id;
            mgr.create_session(request(25, 5)).unwrap();
            label_n(&mgr, &id, 30);
            (
                id.clone(),
                mgr.next_query(&id).unwrap(),
                mgr.get_estimate(&id).unwrap(),
                mgr.trace(&id).unwrap(),
            )
        };
        let mgr = SessionManager::with_event_log(&path).unwrap();
        assert_eq!(mgr.session_ids().len(), 2);
        assert_eq!(mgr.next_query(&id).unwrap(), pending);
        let restored = mgr.get_estimate(&id).unwrap();
        assert_eq!(restored.f_measure, estimate.f_measure);
        assert_eq!(restored.budget, estimate.budget);
        assert_eq!(restored.iteration, estimate.iteration);
        assert_eq!(mgr.trace(&id).unwrap().records, trace.records);
        label_n(&mgr, &id, 1);
        drop(mgr);
        assert!(SessionManager::with_event_log(&path).is_ok());
    }

    #[test]
    fn tampered_log_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.ndjson");
        {
            let mgr = SessionManager::with_event_log(&path).unwrap();
            let id = mgr.create_session(request(25, 4)).unwrap().session_id;
            label_n(&mgr, &id, 3);
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let last_query = lines.iter().rposition(|l| l.contains("query_drawn")).unwrap();
        lines[last_query] = lines[last_query].replace("\"t\":", "\"t\":9");
        std::fs::write(&path, lines.join("\n")).unwrap();
        let err = SessionManager::with_event_log(&path).unwrap_err();
        assert!(matches!(err, Error::EventLog(_)));
    }
}
