//! One-round federated training over a binary-tree topology.
//!
//! Rank `r` has parent `(r - 1) / 2` and children `2r + 1`, `2r + 2`. A run
//! proceeds as: seed broadcast (root to leaves), label-table broadcast, local
//! hashing and counting, optional privatization, then an all-reduce that sums
//! counts up the tree and sends the total back down. Any party that detects a
//! problem replaces its upward message with an abort, and the root turns the
//! downward broadcast into an abort, so every party fails with the same
//! diagnostic instead of hanging.
//!
//! Wire payloads:
//!
//! | kind | payload |
//! |------|---------|
//! | seed | u64 LE |
//! | labels | varint count, then per label varint length + UTF-8 |
//! | counts | u32 LE classes, u32 LE m, classes*m u32 LE counts |
//! | privatized | sparse encoding of [`PrivatizedCounts`] |
//! | abort | UTF-8 reason |

mod transport;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use transport::{kind, local_tcp_mesh, InProcessTransport, Meter, TcpTransport, Transport, FRAME_OVERHEAD};

use crate::classifier::{accumulate_counts, ClassCounts, FilterCounts, FlyNNModel, Gamma};
use crate::data::{Dataset, LabelTable};
use crate::dp::{privatize_counts, DpParams, PrivatizedCounts};
use crate::error::{Error, Result};
use crate::hash::{FlyHasher, HashParams, HashSpec};
use crate::rng::{derive_seed, stream, RngState};
use crate::varint::{put_varint, Reader};

pub fn parent(rank: usize) -> Option<usize> {
    (rank > 0).then(|| (rank - 1) / 2)
}

pub fn children(rank: usize, parties: usize) -> impl Iterator<Item = usize> {
    [2 * rank + 1, 2 * rank + 2].into_iter().filter(move |&c| c < parties)
}

/// Values that can travel through [`tree_all_reduce`].
pub trait Reducible: Sized {
    const KIND: u8;
    fn encode(&self) -> Vec<u8>;
    fn decode(bytes: &[u8]) -> Result<Self>;
    fn combine(&mut self, other: &Self) -> Result<()>;
}

impl Reducible for ClassCounts {
    const KIND: u8 = kind::COUNTS;

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.as_flat().len());
        out.extend_from_slice(&(self.classes() as u32).to_le_bytes());
        out.extend_from_slice(&(self.m() as u32).to_le_bytes());
        for &v in self.as_flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let classes = r.u32_le("classes")? as usize;
        let m = r.u32_le("m")? as usize;
        let cells = classes
            .checked_mul(m)
            .filter(|&c| c.checked_mul(4) == Some(r.remaining()))
            .ok_or_else(|| Error::Malformed("counts payload length disagrees with its shape".into()))?;
        let data = (0..cells).map(|_| r.u32_le("count")).collect::<Result<Vec<_>>>()?;
        ClassCounts::from_flat(classes, m, data)
    }

    fn combine(&mut self, other: &Self) -> Result<()> {
        self.merge_from(other)
    }
}

impl Reducible for PrivatizedCounts {
    const KIND: u8 = kind::PRIVATIZED;

    fn encode(&self) -> Vec<u8> {
        PrivatizedCounts::encode(self)
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        PrivatizedCounts::decode(bytes)
    }

    fn combine(&mut self, other: &Self) -> Result<()> {
        *self = self.merge(other)?;
        Ok(())
    }
}

fn expect_kind(rank: usize, from: usize, got: u8, want: u8, payload: &[u8]) -> Result<()> {
    if got == kind::ABORT {
        return Err(Error::Aborted(String::from_utf8_lossy(payload).into_owned()));
    }
    if got != want {
        return Err(Error::Transport(format!(
            "party {rank} expected message kind {want} from {from}, got {got}"
        )));
    }
    Ok(())
}

/// Sends the root's payload down the tree; every party returns it.
pub fn tree_broadcast(
    t: &mut dyn Transport,
    msg_kind: u8,
    root_payload: Option<Vec<u8>>,
    timeout: Duration,
) -> Result<Vec<u8>> {
    let rank = t.rank();
    let payload = match parent(rank) {
        None => root_payload.ok_or_else(|| Error::Param("the root must supply the broadcast payload".into()))?,
        Some(p) => {
            let (k, body) = t.recv(p, timeout)?;
            expect_kind(rank, p, k, msg_kind, &body)?;
            body
        }
    };
    for c in children(rank, t.parties()) {
        t.send(c, msg_kind, &payload)?;
    }
    Ok(payload)
}

/// Delivers the root's seed to every party.
pub fn broadcast_seed(t: &mut dyn Transport, root_seed: u64, timeout: Duration) -> Result<u64> {
    let root = (t.rank() == 0).then(|| root_seed.to_le_bytes().to_vec());
    let bytes = tree_broadcast(t, kind::SEED, root, timeout)?;
    let arr: [u8; 8] = bytes
        .as_slice()
        .try_into()
        .map_err(|_| Error::Malformed("seed message is not 8 bytes".into()))?;
    Ok(u64::from_le_bytes(arr))
}

/// Sum over all parties, delivered to every party. `local` is this party's
/// contribution, or the reason it cannot contribute; a failure anywhere makes
/// every party return [`Error::Aborted`].
pub fn tree_all_reduce<R: Reducible>(
    t: &mut dyn Transport,
    local: std::result::Result<R, String>,
    timeout: Duration,
) -> Result<R> {
    let rank = t.rank();
    let mut state = local;
    for c in children(rank, t.parties()) {
        let (k, body) = t.recv(c, timeout)?;
        if k == kind::ABORT {
            if state.is_ok() {
                state = Err(String::from_utf8_lossy(&body).into_owned());
            }
            continue;
        }
        if let Ok(acc) = &mut state {
            let merged = expect_kind(rank, c, k, R::KIND, &body)
                .and_then(|_| R::decode(&body))
                .and_then(|child| acc.combine(&child));
            if let Err(e) = merged {
                state = Err(format!("party {rank} could not merge party {c}: {e}"));
            }
        }
    }

    let total = match parent(rank) {
        None => state,
        Some(p) => {
            match &state {
                Ok(v) => t.send(p, R::KIND, &v.encode())?,
                Err(reason) => t.send(p, kind::ABORT, reason.as_bytes())?,
            }
            let (k, body) = t.recv(p, timeout)?;
            match expect_kind(rank, p, k, R::KIND, &body) {
                Ok(()) => Ok(R::decode(&body)?),
                Err(Error::Aborted(reason)) => Err(reason),
                Err(e) => return Err(e),
            }
        }
    };

    let (msg_kind, payload) = match &total {
        Ok(v) => (R::KIND, v.encode()),
        Err(reason) => (kind::ABORT, reason.as_bytes().to_vec()),
    };
    for c in children(rank, t.parties()) {
        t.send(c, msg_kind, &payload)?;
    }
    total.map_err(Error::Aborted)
}

/// What [`tree_all_reduce`] computes, without any transport: each rank folds
/// in its children's subtree sums in the same order, so floating-point
/// payloads come out bit-identical.
pub fn tree_reduce_local<R: Reducible + Clone>(locals: &[R]) -> Result<R> {
    fn subtree<R: Reducible + Clone>(locals: &[R], rank: usize) -> Result<R> {
        let mut acc = locals[rank].clone();
        for c in children(rank, locals.len()) {
            acc.combine(&subtree(locals, c)?)?;
        }
        Ok(acc)
    }
    if locals.is_empty() {
        return Err(Error::Param("nothing to reduce".into()));
    }
    subtree(locals, 0)
}

fn encode_labels(table: &LabelTable) -> Vec<u8> {
    let mut out = Vec::new();
    put_varint(&mut out, table.len() as u64);
    for l in table.labels() {
        put_varint(&mut out, l.len() as u64);
        out.extend_from_slice(l.as_bytes());
    }
    out
}

fn decode_labels(bytes: &[u8]) -> Result<LabelTable> {
    let mut r = Reader::new(bytes);
    let n = r.varint("label count")? as usize;
    let mut labels = Vec::with_capacity(n.min(bytes.len()));
    for _ in 0..n {
        let len = r.varint("label length")? as usize;
        let raw = r.take(len, "label")?;
        labels.push(String::from_utf8(raw.to_vec()).map_err(|_| Error::Malformed("label is not UTF-8".into()))?);
    }
    Ok(LabelTable::new(labels))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportKind {
    #[default]
    InProcess,
    Tcp,
}

/// Everything a federation needs; party `t` trains on `shards[t]`.
#[derive(Clone, Debug)]
pub struct FederationPlan {
    pub shards: Vec<Dataset>,
    pub params: HashParams,
    pub gamma: Gamma,
    /// Global budget; each party privatizes with `epsilon / parties`.
    pub dp: Option<DpParams>,
    pub dp_seed: u64,
    pub transport: TransportKind,
    pub timeout: Duration,
}

impl FederationPlan {
    pub fn new(shards: Vec<Dataset>, params: HashParams, gamma: Gamma) -> Self {
        Self {
            shards,
            params,
            gamma,
            dp: None,
            dp_seed: 0,
            transport: TransportKind::InProcess,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn parties(&self) -> usize {
        self.shards.len()
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .shards
            .first()
            .ok_or_else(|| Error::Param("a federation needs at least one party".into()))?;
        self.params.validate(first.d())?;
        if let Some(dp) = &self.dp {
            dp.validate(self.params.m * first.num_classes())?;
        }
        Ok(())
    }
}

/// What one party ends up with.
#[derive(Clone, Debug)]
pub struct PartyOutcome {
    pub model: FlyNNModel,
    pub meter: Meter,
    /// Hashing, counting and privatization time, excluding communication.
    pub local_time: Duration,
    pub total_time: Duration,
}

/// Runs one party's side of the protocol over `t`. Rank 0 is the root and
/// its `params.seed` is the one every party ends up using.
pub fn run_party(
    t: &mut dyn Transport,
    shard: &Dataset,
    params: HashParams,
    gamma: &Gamma,
    dp: Option<(DpParams, u64)>,
    timeout: Duration,
) -> Result<PartyOutcome> {
    let start = Instant::now();
    let rank = t.rank();
    let seed = broadcast_seed(t, params.seed, timeout)?;
    let root_labels = (rank == 0).then(|| encode_labels(shard.label_table()));
    let labels = decode_labels(&tree_broadcast(t, kind::LABELS, root_labels, timeout)?)?;
    let params = HashParams { seed, ..params };
    let d = shard.d();

    let mut problem = None;
    if &labels != shard.label_table() {
        problem = Some(format!(
            "party {rank} label table {:?} differs from the root's {:?}",
            shard.label_table().labels(),
            labels.labels()
        ));
    }
    let hasher = match FlyHasher::new(d, params) {
        Ok(h) => Some(h),
        Err(e) => {
            problem.get_or_insert(format!("party {rank}: {e}"));
            None
        }
    };

    let local_start = Instant::now();
    let counts = match (problem, hasher) {
        (Some(p), _) => Err(p),
        (None, Some(h)) => accumulate_counts(&h, shard).map_err(|e| format!("party {rank}: {e}")),
        (None, None) => unreachable!("hasher errors are recorded as problems"),
    };

    let (counts, local_time) = match dp {
        None => {
            let local_time = local_start.elapsed();
            let total = tree_all_reduce(t, counts, timeout)?;
            (FilterCounts::Exact(total), local_time)
        }
        Some((budget, party_seed)) => {
            let parties = t.parties() as f64;
            let private = counts.and_then(|c| {
                let per_party = DpParams::new(budget.epsilon / parties, budget.samples)
                    .map_err(|e| format!("party {rank}: {e}"))?;
                let mut rng = RngState::with_stream(party_seed, stream::PRIVACY);
                privatize_counts(&c, &per_party, &mut rng).map_err(|e| format!("party {rank}: {e}"))
            });
            let local_time = local_start.elapsed();
            let total = tree_all_reduce(t, private, timeout)?;
            (
                FilterCounts::Noisy(total.into_noisy_counts(labels.len(), params.m)?),
                local_time,
            )
        }
    };

    let model = FlyNNModel::from_parts(HashSpec::Fly { d, params }, gamma.clone(), labels, counts)?;
    Ok(PartyOutcome {
        model,
        meter: t.meter().clone(),
        local_time,
        total_time: start.elapsed(),
    })
}

#[derive(Clone, Debug)]
pub struct FederationOutcome {
    pub parties: Vec<PartyOutcome>,
    pub wall_time: Duration,
}

impl FederationOutcome {
    pub fn model(&self) -> &FlyNNModel {
        &self.parties[0].model
    }
}

/// Runs every party of `plan` as a thread of this process.
pub fn train_flynn_fl(plan: &FederationPlan) -> Result<FederationOutcome> {
    plan.validate()?;
    let n = plan.parties();
    let start = Instant::now();
    let results: Vec<Result<PartyOutcome>> = match plan.transport {
        TransportKind::InProcess => run_all(plan, InProcessTransport::mesh(n)),
        TransportKind::Tcp => run_all(plan, local_tcp_mesh(n, plan.timeout)?),
    };
    let wall_time = start.elapsed();

    // Report the root cause rather than the aborts it triggered elsewhere.
    if let Some(pos) = results
        .iter()
        .position(|r| matches!(r, Err(e) if !matches!(e, Error::Aborted(_))))
    {
        return Err(results.into_iter().nth(pos).unwrap().unwrap_err());
    }
    let parties = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(FederationOutcome { parties, wall_time })
}

fn run_all<T: Transport>(plan: &FederationPlan, ends: Vec<T>) -> Vec<Result<PartyOutcome>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = ends
            .into_iter()
            .zip(&plan.shards)
            .enumerate()
            .map(|(rank, (mut t, shard))| {
                let dp = plan.dp.map(|p| (p, derive_seed(plan.dp_seed, rank as u64)));
                s.spawn(move || run_party(&mut t, shard, plan.params, &plan.gamma, dp, plan.timeout))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Transport("party thread panicked".into())))
            })
            .collect()
    })
}

/// Byte totals of a completed run.
#[derive(Clone, Debug, Serialize)]
pub struct CommReport {
    pub per_party: Vec<Meter>,
    pub total: Meter,
}

impl CommReport {
    /// Bytes spent on the aggregation itself (counts or privatized counts).
    pub fn aggregation_bytes(&self) -> u64 {
        self.total.sent_by_kind[kind::COUNTS as usize] + self.total.sent_by_kind[kind::PRIVATIZED as usize]
    }
}

pub fn comm_report(outcome: &FederationOutcome) -> CommReport {
    let per_party: Vec<Meter> = outcome.parties.iter().map(|p| p.meter.clone()).collect();
    let mut total = Meter::default();
    for m in &per_party {
        total.add(m);
    }
    CommReport { per_party, total }
}
