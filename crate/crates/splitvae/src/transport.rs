//! In-process collective transport: rank-ordered gather and scatter over
//! a shared bus, tensor concat/split at the cut points, and a
//! byte-accurate payload ledger.
//!
//! Each rank runs as an independent worker; collectives are rendezvous
//! points. Rank 0 is the server (root), ranks 1..=N are edges. The bus
//! enforces the fixed per-batch phase cycle and fails loudly (with the
//! missing rank named) instead of hanging when a participant never
//! arrives.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Process rank: 0 is the server/root, 1..=N are edge agents.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RankId(pub usize);

impl RankId {
    pub fn root() -> RankId {
        RankId(0)
    }

    pub fn is_root(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for RankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The four collective phases of one training batch, in protocol order.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    EncFpGather,
    DecFpScatter,
    DecBpGather,
    EncBpScatter,
}

impl Phase {
    pub const CYCLE: [Phase; 4] = [
        Phase::EncFpGather,
        Phase::DecFpScatter,
        Phase::DecBpGather,
        Phase::EncBpScatter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::EncFpGather => "enc_fp_gather",
            Phase::DecFpScatter => "dec_fp_scatter",
            Phase::DecBpGather => "dec_bp_gather",
            Phase::EncBpScatter => "enc_bp_scatter",
        }
    }

    pub fn next(self) -> Phase {
        match self {
            Phase::EncFpGather => Phase::DecFpScatter,
            Phase::DecFpScatter => Phase::DecBpGather,
            Phase::DecBpGather => Phase::EncBpScatter,
            Phase::EncBpScatter => Phase::EncFpGather,
        }
    }

    fn index(self) -> usize {
        match self {
            Phase::EncFpGather => 0,
            Phase::DecFpScatter => 1,
            Phase::DecBpGather => 2,
            Phase::EncBpScatter => 3,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One transported message. `byte_size` is always the raw float64
/// payload size, 8 bytes per element, with no framing overhead.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub source: RankId,
    pub dest: RankId,
    pub phase: Phase,
    pub payload: Tensor,
    pub byte_size: usize,
}

impl Envelope {
    pub fn new(source: RankId, dest: RankId, phase: Phase, payload: Tensor) -> Self {
        let byte_size = 8 * payload.len();
        Envelope {
            source,
            dest,
            phase,
            payload,
            byte_size,
        }
    }
}

/// Shape-level record of a completed transfer, kept for instrumentation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub source: RankId,
    pub dest: RankId,
    pub rows: usize,
    pub cols: usize,
    pub bytes: usize,
}

/// Cumulative transmitted-byte accounting per (epoch, phase).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PayloadLedger {
    totals: BTreeMap<(usize, usize), u64>,
    raw_baseline: Option<u64>,
}

/// Summary produced by [`PayloadLedger::report`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LedgerReport {
    pub per_phase: Vec<(Phase, u64)>,
    pub total_bytes: u64,
    pub epochs: usize,
    pub per_epoch_bytes: u64,
    pub raw_bytes: u64,
    pub reduction_factor: f64,
}

impl PayloadLedger {
    pub fn credit(&mut self, epoch: usize, phase: Phase, bytes: u64) {
        *self.totals.entry((epoch, phase.index())).or_insert(0) += bytes;
    }

    /// Bytes of the raw (never transmitted) dataset, the comparison
    /// baseline for the reduction factor.
    pub fn set_raw_baseline(&mut self, bytes: u64) {
        self.raw_baseline = Some(bytes);
    }

    pub fn raw_baseline(&self) -> Option<u64> {
        self.raw_baseline
    }

    pub fn total_bytes(&self) -> u64 {
        self.totals.values().sum()
    }

    pub fn phase_bytes(&self, phase: Phase) -> u64 {
        self.totals
            .iter()
            .filter(|((_, p), _)| *p == phase.index())
            .map(|(_, b)| *b)
            .sum()
    }

    pub fn epoch_bytes(&self, epoch: usize) -> u64 {
        self.totals
            .iter()
            .filter(|((e, _), _)| *e == epoch)
            .map(|(_, b)| *b)
            .sum()
    }

    pub fn epochs_recorded(&self) -> usize {
        self.totals.keys().map(|(e, _)| e + 1).max().unwrap_or(0)
    }

    /// Per-phase totals, run total, per-epoch bytes, and the reduction
    /// factor (raw dataset bytes over per-epoch transmitted bytes).
    pub fn report(&self) -> Result<LedgerReport> {
        let epochs = self.epochs_recorded();
        if epochs == 0 {
            return Err(Error::Protocol(
                "ledger report requires at least one completed epoch".into(),
            ));
        }
        let total = self.total_bytes();
        if total == 0 {
            return Err(Error::Protocol(
                "ledger report with zero transmitted bytes".into(),
            ));
        }
        let raw = self.raw_baseline.ok_or_else(|| {
            Error::Protocol("ledger report requires the raw dataset baseline".into())
        })?;
        let per_epoch = self.epoch_bytes(0);
        Ok(LedgerReport {
            per_phase: Phase::CYCLE
                .iter()
                .map(|&p| (p, self.phase_bytes(p)))
                .collect(),
            total_bytes: total,
            epochs,
            per_epoch_bytes: per_epoch,
            raw_bytes: raw,
            reduction_factor: raw as f64 / per_epoch as f64,
        })
    }

    /// CSV rows `(epoch, phase, bytes, cumulative_bytes)` in epoch/cycle
    /// order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,phase,bytes,cumulative_bytes")?;
        let mut cumulative = 0u64;
        for epoch in 0..self.epochs_recorded() {
            for phase in Phase::CYCLE {
                if let Some(bytes) = self.totals.get(&(epoch, phase.index())) {
                    cumulative += bytes;
                    writeln!(out, "{},{},{},{}", epoch, phase.name(), bytes, cumulative)?;
                }
            }
        }
        Ok(())
    }
}

/// Column-wise concatenation of matrices with a shared batch dimension,
/// in rank order.
pub fn tensor_concat(parts: &[Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::Dimension("concat of zero parts".into()));
    }
    let (batch, _) = parts[0].dims2()?;
    let mut widths = Vec::with_capacity(parts.len());
    for part in parts {
        let (b, w) = part.dims2()?;
        if b != batch {
            return Err(Error::Dimension(format!(
                "concat batch mismatch: {} vs {}",
                batch, b
            )));
        }
        widths.push(w);
    }
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(batch * total);
    for r in 0..batch {
        for part in parts {
            data.extend_from_slice(part.row(r));
        }
    }
    Tensor::new(vec![batch, total], data)
}

/// Split a matrix into contiguous column blocks of the given widths, in
/// rank order. Inverse of [`tensor_concat`].
pub fn tensor_split(whole: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let (_, total) = whole.dims2()?;
    let sum: usize = widths.iter().sum();
    if sum != total {
        return Err(Error::Dimension(format!(
            "split widths sum to {}, tensor width is {}",
            sum, total
        )));
    }
    let mut parts = Vec::with_capacity(widths.len());
    let mut offset = 0;
    for &w in widths {
        parts.push(whole.slice_cols(offset, w)?);
        offset += w;
    }
    Ok(parts)
}

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

struct BusState {
    /// Per-phase slots, one per edge rank; gather slots are filled by
    /// edges and drained by root, scatter slots the other way around.
    slots: [Vec<Option<Tensor>>; 4],
    /// Completed collectives per phase, for epoch attribution.
    completed: [u64; 4],
    ledger: PayloadLedger,
    log: Vec<TransferRecord>,
    failed: Option<String>,
}

struct BusShared {
    n_edges: usize,
    batches_per_epoch: u64,
    timeout: Duration,
    state: Mutex<BusState>,
    arrival: Condvar,
}

/// Shared in-process bus realizing the gather/scatter collectives.
/// Clones share the same state; hand one to each worker.
#[derive(Clone)]
pub struct Bus {
    shared: Arc<BusShared>,
}

impl Bus {
    pub fn new(n_edges: usize, batches_per_epoch: usize) -> Self {
        Bus::with_timeout(n_edges, batches_per_epoch, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(n_edges: usize, batches_per_epoch: usize, timeout: Duration) -> Self {
        assert!(n_edges > 0, "bus needs at least one edge rank");
        assert!(
            batches_per_epoch > 0,
            "bus needs at least one batch per epoch"
        );
        let empty = || vec![None; n_edges];
        Bus {
            shared: Arc::new(BusShared {
                n_edges,
                batches_per_epoch: batches_per_epoch as u64,
                timeout,
                state: Mutex::new(BusState {
                    slots: [empty(), empty(), empty(), empty()],
                    completed: [0; 4],
                    ledger: PayloadLedger::default(),
                    log: Vec::new(),
                    failed: None,
                }),
                arrival: Condvar::new(),
            }),
        }
    }

    pub fn n_edges(&self) -> usize {
        self.shared.n_edges
    }

    pub fn edge_port(&self, rank: RankId) -> Result<EdgePort> {
        if rank.is_root() || rank.0 > self.shared.n_edges {
            return Err(Error::Protocol(format!(
                "rank {} is not an edge rank (1..={})",
                rank, self.shared.n_edges
            )));
        }
        Ok(EdgePort {
            shared: Arc::clone(&self.shared),
            rank,
            next: Phase::EncFpGather,
        })
    }

    pub fn root_port(&self) -> RootPort {
        RootPort {
            shared: Arc::clone(&self.shared),
            next: Phase::EncFpGather,
        }
    }

    pub fn set_raw_baseline(&self, bytes: u64) {
        self.shared
            .state
            .lock()
            .unwrap()
            .ledger
            .set_raw_baseline(bytes);
    }

    /// Mark the run as failed so blocked peers abort instead of timing
    /// out one by one.
    pub fn poison(&self, message: &str) {
        let mut state = self.shared.state.lock().unwrap();
        if state.failed.is_none() {
            state.failed = Some(message.to_string());
        }
        self.shared.arrival.notify_all();
    }

    /// Hand back the accounting. Call after workers join.
    pub fn into_accounting(self) -> (PayloadLedger, Vec<TransferRecord>) {
        let state = self.shared.state.lock().unwrap();
        (state.ledger.clone(), state.log.clone())
    }
}

fn check_phase(next: &mut Phase, requested: Phase, who: &str) -> Result<()> {
    if *next != requested {
        return Err(Error::ProtocolOrder(format!(
            "{} attempted phase {} but the protocol expects {}",
            who, requested, *next
        )));
    }
    *next = requested.next();
    Ok(())
}

fn check_not_failed(state: &BusState) -> Result<()> {
    match &state.failed {
        Some(msg) => Err(Error::Protocol(format!("run aborted: {}", msg))),
        None => Ok(()),
    }
}

/// Edge-side handle: deposits gather contributions and receives scatter
/// parts. Each port tracks its own position in the phase cycle.
pub struct EdgePort {
    shared: Arc<BusShared>,
    rank: RankId,
    next: Phase,
}

impl EdgePort {
    pub fn rank(&self) -> RankId {
        self.rank
    }

    /// Contribute this rank's tensor to a gather collective. Never
    /// blocks: slots are always free by the time an in-order caller
    /// arrives.
    pub fn send_gather(&mut self, phase: Phase, payload: Tensor) -> Result<()> {
        check_phase(&mut self.next, phase, &format!("edge rank {}", self.rank))?;
        let mut state = self.shared.state.lock().unwrap();
        check_not_failed(&state)?;
        let slot = &mut state.slots[phase.index()][self.rank.0 - 1];
        if slot.is_some() {
            return Err(Error::Protocol(format!(
                "duplicate gather contribution from rank {} in phase {}",
                self.rank, phase
            )));
        }
        *slot = Some(payload);
        self.shared.arrival.notify_all();
        Ok(())
    }

    /// Receive this rank's part of a scatter collective, blocking until
    /// the root deposits it.
    pub fn recv_scatter(&mut self, phase: Phase) -> Result<Tensor> {
        check_phase(&mut self.next, phase, &format!("edge rank {}", self.rank))?;
        let deadline = Instant::now() + self.shared.timeout;
        let mut state = self.shared.state.lock().unwrap();
        loop {
            check_not_failed(&state)?;
            if let Some(part) = state.slots[phase.index()][self.rank.0 - 1].take() {
                return Ok(part);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(Error::CollectiveTimeout {
                    phase,
                    missing: vec![RankId::root()],
                });
            }
            let (guard, _) = self
                .shared
                .arrival
                .wait_timeout(state, deadline - now)
                .unwrap();
            state = guard;
        }
    }
}

/// Root-side handle: collects gathers and deposits scatters.
pub struct RootPort {
    shared: Arc<BusShared>,
    next: Phase,
}

impl RootPort {
    /// Collect one tensor per edge rank, ordered by ascending rank,
    /// blocking until every edge has contributed.
    pub fn recv_gather(&mut self, phase: Phase) -> Result<Vec<Tensor>> {
        check_phase(&mut self.next, phase, "root")?;
        let deadline = Instant::now() + self.shared.timeout;
        let mut state = self.shared.state.lock().unwrap();
        loop {
            check_not_failed(&state)?;
            if state.slots[phase.index()].iter().all(|s| s.is_some()) {
                let slots = &mut state.slots[phase.index()];
                let mut parts = Vec::with_capacity(slots.len());
                for slot in slots.iter_mut() {
                    parts.push(slot.take().expect("slot checked above"));
                }
                let epoch =
                    (state.completed[phase.index()] / self.shared.batches_per_epoch) as usize;
                state.completed[phase.index()] += 1;
                for (i, part) in parts.iter().enumerate() {
                    let envelope =
                        Envelope::new(RankId(i + 1), RankId::root(), phase, part.clone());
                    record(&mut state, epoch, &envelope);
                }
                return Ok(parts);
            }
            let now = Instant::now();
            if now >= deadline {
                let missing = state.slots[phase.index()]
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.is_none())
                    .map(|(i, _)| RankId(i + 1))
                    .collect();
                return Err(Error::CollectiveTimeout { phase, missing });
            }
            let (guard, _) = self
                .shared
                .arrival
                .wait_timeout(state, deadline - now)
                .unwrap();
            state = guard;
        }
    }

    /// Deposit one part per edge rank; part `i` goes to rank `i+1`.
    pub fn send_scatter(&mut self, phase: Phase, parts: Vec<Tensor>) -> Result<()> {
        check_phase(&mut self.next, phase, "root")?;
        if parts.len() != self.shared.n_edges {
            return Err(Error::Protocol(format!(
                "scatter expects {} parts, got {}",
                self.shared.n_edges,
                parts.len()
            )));
        }
        let mut state = self.shared.state.lock().unwrap();
        check_not_failed(&state)?;
        let epoch = (state.completed[phase.index()] / self.shared.batches_per_epoch) as usize;
        state.completed[phase.index()] += 1;
        for (i, part) in parts.into_iter().enumerate() {
            if state.slots[phase.index()][i].is_some() {
                return Err(Error::Protocol(format!(
                    "scatter part for rank {} not yet consumed in phase {}",
                    i + 1,
                    phase
                )));
            }
            let envelope = Envelope::new(RankId::root(), RankId(i + 1), phase, part);
            record(&mut state, epoch, &envelope);
            state.slots[phase.index()][i] = Some(envelope.payload);
        }
        self.shared.arrival.notify_all();
        Ok(())
    }
}

fn record(state: &mut BusState, epoch: usize, envelope: &Envelope) {
    let (rows, cols) = envelope
        .payload
        .dims2()
        .unwrap_or((1, envelope.payload.len()));
    state
        .ledger
        .credit(epoch, envelope.phase, envelope.byte_size as u64);
    state.log.push(TransferRecord {
        epoch,
        phase: envelope.phase,
        source: envelope.source,
        dest: envelope.dest,
        rows,
        cols,
        bytes: envelope.byte_size,
    });
}
