//! High-throughput job pool: FIFO queue, slot registry, matchmaking, and
//! restart-from-scratch semantics for preempted work.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("duplicate job id {0}")]
    DuplicateJob(u64),
    #[error("slot {0} does not exist")]
    UnknownSlot(usize),
    #[error("slot {0} is not busy")]
    SlotNotBusy(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Fetching,
    Running,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Success,
    Preempted,
    KilledRampdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub slot: usize,
    pub start: f64,
    pub fetch_s: f64,
    pub runtime_s: f64,
    pub end: Option<f64>,
    pub outcome: Option<AttemptOutcome>,
}

impl Attempt {
    pub fn duration(&self) -> Option<f64> {
        self.end.map(|e| e - self.start)
    }
}

#[derive(Debug, Clone)]
pub struct Job {
    pub id: u64,
    pub submit_time: f64,
    pub state: JobState,
    pub attempts: Vec<Attempt>,
}

impl Job {
    pub fn current_attempt(&self) -> Option<&Attempt> {
        self.attempts.last().filter(|a| a.end.is_none())
    }

    /// GPU-seconds of closed attempts that did not succeed.
    pub fn wasted_s(&self) -> f64 {
        self.attempts
            .iter()
            .filter(|a| matches!(a.outcome, Some(o) if o != AttemptOutcome::Success))
            .filter_map(Attempt::duration)
            .sum::<f64>()
            + 0.0 // an empty float sum is -0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotState {
    Idle,
    Busy,
    Terminated,
}

#[derive(Debug, Clone)]
pub struct Slot {
    pub id: usize,
    pub instance: u64,
    /// Index into the catalog's GPU model list.
    pub gpu_model: usize,
    pub state: SlotState,
    pub current: Option<usize>,
    pub draining: bool,
    pub created: f64,
    pub terminated: Option<f64>,
    idle_since: Option<f64>,
    pub idle_s: f64,
    pub busy_s: f64,
    pub wasted_s: f64,
}

/// Job handed to [`Pool::submit`].
#[derive(Debug, Clone, Copy)]
pub struct NewJob {
    pub id: u64,
    pub submit_time: f64,
}

/// A job bound to a slot by [`Pool::match_jobs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub slot: usize,
    pub job: usize,
    pub attempt: usize,
}

/// Result of closing an attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closed {
    pub job: usize,
    pub duration_s: f64,
    pub slot_terminated: bool,
}

#[derive(Debug, Default)]
pub struct Pool {
    jobs: Vec<Job>,
    by_id: BTreeMap<u64, usize>,
    // (submit order key, job index); submit order is job index order
    queue: BTreeSet<usize>,
    slots: Vec<Slot>,
    idle: BTreeSet<usize>,
    fetching: usize,
    running: usize,
    completed: usize,
}

impl Pool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends jobs in submit order. Rejects the whole batch if any id is
    /// already known or repeated.
    pub fn submit(&mut self, batch: &[NewJob]) -> Result<usize, PoolError> {
        let mut seen = BTreeSet::new();
        for j in batch {
            if self.by_id.contains_key(&j.id) || !seen.insert(j.id) {
                return Err(PoolError::DuplicateJob(j.id));
            }
        }
        for j in batch {
            let idx = self.jobs.len();
            self.jobs.push(Job {
                id: j.id,
                submit_time: j.submit_time,
                state: JobState::Queued,
                attempts: Vec::new(),
            });
            self.by_id.insert(j.id, idx);
            self.queue.insert(idx);
        }
        Ok(self.queue.len())
    }

    pub fn add_slot(&mut self, instance: u64, gpu_model: usize, t: f64) -> usize {
        let id = self.slots.len();
        self.slots.push(Slot {
            id,
            instance,
            gpu_model,
            state: SlotState::Idle,
            current: None,
            draining: false,
            created: t,
            terminated: None,
            idle_since: Some(t),
            idle_s: 0.0,
            busy_s: 0.0,
            wasted_s: 0.0,
        });
        self.idle.insert(id);
        id
    }

    /// Oldest queued jobs to lowest-numbered idle slots, one each.
    pub fn match_jobs(&mut self, t: f64) -> Vec<Assignment> {
        let mut out = Vec::new();
        while let (Some(&slot_id), Some(&job_idx)) = (self.idle.first(), self.queue.first()) {
            self.idle.remove(&slot_id);
            self.queue.remove(&job_idx);
            let slot = &mut self.slots[slot_id];
            if let Some(since) = slot.idle_since.take() {
                slot.idle_s += t - since;
            }
            slot.state = SlotState::Busy;
            slot.current = Some(job_idx);
            let job = &mut self.jobs[job_idx];
            job.state = JobState::Fetching;
            job.attempts.push(Attempt {
                slot: slot_id,
                start: t,
                fetch_s: 0.0,
                runtime_s: 0.0,
                end: None,
                outcome: None,
            });
            self.fetching += 1;
            out.push(Assignment {
                slot: slot_id,
                job: job_idx,
                attempt: job.attempts.len() - 1,
            });
        }
        out
    }

    pub fn set_fetch_time(&mut self, job: usize, fetch_s: f64) {
        if let Some(a) = self.jobs[job].attempts.last_mut() {
            a.fetch_s = fetch_s;
        }
    }

    /// Whether `(job, attempt)` still names the job's open attempt.
    pub fn is_live(&self, job: usize, attempt: usize) -> bool {
        let j = &self.jobs[job];
        j.attempts.len() == attempt + 1 && j.attempts[attempt].end.is_none()
    }

    /// Fetch finished; the job starts computing for `runtime_s`.
    pub fn start_running(&mut self, job: usize, runtime_s: f64) {
        let j = &mut self.jobs[job];
        debug_assert_eq!(j.state, JobState::Fetching);
        j.state = JobState::Running;
        if let Some(a) = j.attempts.last_mut() {
            a.runtime_s = runtime_s;
        }
        self.fetching -= 1;
        self.running += 1;
    }

    fn close_attempt(
        &mut self,
        slot_id: usize,
        t: f64,
        outcome: AttemptOutcome,
    ) -> Result<Closed, PoolError> {
        let slot = self
            .slots
            .get(slot_id)
            .ok_or(PoolError::UnknownSlot(slot_id))?;
        let job_idx = match (slot.state, slot.current) {
            (SlotState::Busy, Some(j)) => j,
            _ => return Err(PoolError::SlotNotBusy(slot_id)),
        };
        let job = &mut self.jobs[job_idx];
        match job.state {
            JobState::Fetching => self.fetching -= 1,
            JobState::Running => self.running -= 1,
            _ => {}
        }
        let attempt = job.attempts.last_mut().expect("busy slot has an attempt");
        attempt.end = Some(t);
        attempt.outcome = Some(outcome);
        let duration = t - attempt.start;

        let slot = &mut self.slots[slot_id];
        slot.busy_s += duration;
        slot.current = None;
        if outcome == AttemptOutcome::Success {
            job.state = JobState::Completed;
            self.completed += 1;
        } else {
            slot.wasted_s += duration;
            job.state = JobState::Queued;
            // requeue by original submit order: goes ahead of younger jobs
            self.queue.insert(job_idx);
        }
        Ok(Closed {
            job: job_idx,
            duration_s: duration,
            slot_terminated: false,
        })
    }

    fn terminate(&mut self, slot_id: usize, t: f64) {
        let slot = &mut self.slots[slot_id];
        if let Some(since) = slot.idle_since.take() {
            slot.idle_s += t - since;
        }
        slot.state = SlotState::Terminated;
        slot.current = None;
        slot.terminated = Some(t);
        self.idle.remove(&slot_id);
    }

    fn make_idle(&mut self, slot_id: usize, t: f64) {
        let slot = &mut self.slots[slot_id];
        slot.state = SlotState::Idle;
        slot.idle_since = Some(t);
        self.idle.insert(slot_id);
    }

    /// Successful completion. The slot becomes idle, or terminates if it is
    /// draining.
    pub fn on_complete(&mut self, slot_id: usize, t: f64) -> Result<Closed, PoolError> {
        let mut closed = self.close_attempt(slot_id, t, AttemptOutcome::Success)?;
        if self.slots[slot_id].draining {
            self.terminate(slot_id, t);
            closed.slot_terminated = true;
        } else {
            self.make_idle(slot_id, t);
        }
        Ok(closed)
    }

    /// The slot's instance was reclaimed. A running attempt is lost in full
    /// and its job requeued; an idle slot terminates with no waste.
    pub fn on_preempt(&mut self, slot_id: usize, t: f64) -> Result<Option<Closed>, PoolError> {
        self.end_slot(slot_id, t, AttemptOutcome::Preempted)
    }

    /// Immediate termination at rampdown; running work counts as waste.
    pub fn kill(&mut self, slot_id: usize, t: f64) -> Result<Option<Closed>, PoolError> {
        self.end_slot(slot_id, t, AttemptOutcome::KilledRampdown)
    }

    fn end_slot(
        &mut self,
        slot_id: usize,
        t: f64,
        outcome: AttemptOutcome,
    ) -> Result<Option<Closed>, PoolError> {
        let state = self
            .slots
            .get(slot_id)
            .ok_or(PoolError::UnknownSlot(slot_id))?
            .state;
        let closed = match state {
            SlotState::Busy => {
                let mut c = self.close_attempt(slot_id, t, outcome)?;
                c.slot_terminated = true;
                Some(c)
            }
            SlotState::Idle | SlotState::Terminated => None,
        };
        if state != SlotState::Terminated {
            self.terminate(slot_id, t);
        }
        Ok(closed)
    }

    /// Marks a slot to stop at its next job boundary; an idle slot stops now.
    /// Returns true if the slot is terminated after the call.
    pub fn drain(&mut self, slot_id: usize, t: f64) -> bool {
        let slot = &mut self.slots[slot_id];
        slot.draining = true;
        match slot.state {
            SlotState::Idle => {
                self.terminate(slot_id, t);
                true
            }
            SlotState::Busy => false,
            SlotState::Terminated => true,
        }
    }

    pub fn job(&self, idx: usize) -> &Job {
        &self.jobs[idx]
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn slot(&self, id: usize) -> &Slot {
        &self.slots[id]
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn queue_depth(&self) -> usize {
        self.queue.len()
    }

    pub fn idle_slots(&self) -> usize {
        self.idle.len()
    }

    pub fn fetching(&self) -> usize {
        self.fetching
    }

    pub fn running(&self) -> usize {
        self.running
    }

    pub fn completed(&self) -> usize {
        self.completed
    }

    pub fn total_jobs(&self) -> usize {
        self.jobs.len()
    }

    /// Idle time accrued so far for a slot, including an open idle interval.
    pub fn slot_idle_s(&self, slot_id: usize, t: f64) -> f64 {
        let s = &self.slots[slot_id];
        s.idle_s + s.idle_since.map_or(0.0, |since| t - since)
    }
}
