//! Slot-level base-station simulator.
//!
//! Every 0.5 ms slot each slice receives `fraction * capacity_per_slot` bytes
//! of budget. Inside a slice users are visited round-robin from a cursor; a
//! visited user drains its queue head-first until the queue or the budget runs
//! out, so several packets may finish in one slot and a large packet may span
//! many slots. Unused budget is never lent to another slice.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::traffic::{
    record_delivery_outcome, Arrival, ServiceProfile, TrafficSource, UserSession,
};

pub const SLOT_MS: f64 = 0.5;
pub const WINDOW_SLOTS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub arrival_time: f64,
    pub size: f64,
    pub remaining: f64,
    pub completion_time: Option<f64>,
}

impl PacketRecord {
    pub fn new(arrival_time: f64, size: f64) -> Self {
        PacketRecord {
            arrival_time,
            size,
            remaining: size,
            completion_time: None,
        }
    }

    pub fn latency(&self) -> Option<f64> {
        self.completion_time.map(|t| t - self.arrival_time)
    }
}

#[derive(Debug, Clone)]
pub struct UserQueue {
    pub session: UserSession,
    /// Generated but not yet admitted (arrival time after the current slot start).
    pending: VecDeque<Arrival>,
    pub packets: VecDeque<PacketRecord>,
}

impl UserQueue {
    fn new(session: UserSession) -> Self {
        UserQueue {
            session,
            pending: VecDeque::new(),
            packets: VecDeque::new(),
        }
    }

    fn backlog(&self) -> f64 {
        self.packets.iter().map(|p| p.remaining).sum::<f64>()
            + self.pending.iter().map(|a| a.size).sum::<f64>()
    }

    fn oldest_arrival(&self) -> Option<f64> {
        let q = self.packets.front().map(|p| p.arrival_time);
        let p = self.pending.front().map(|a| a.time);
        match (q, p) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SliceQueueState {
    pub slice_id: usize,
    pub users: Vec<UserQueue>,
    pub round_robin_cursor: usize,
}

impl SliceQueueState {
    /// Serves up to `budget` bytes; returns bytes served.
    fn serve(&mut self, mut budget: f64, slot_end: f64, done: &mut Vec<Completion>) -> f64 {
        let n = self.users.len();
        let mut idx = self.round_robin_cursor;
        let mut served = 0.0;
        for _ in 0..n {
            if budget <= 0.0 {
                break;
            }
            let user = &mut self.users[idx];
            while let Some(head) = user.packets.front_mut() {
                if head.remaining <= budget {
                    budget -= head.remaining;
                    served += head.remaining;
                    head.remaining = 0.0;
                    head.completion_time = Some(slot_end);
                    let packet = user.packets.pop_front().expect("head exists");
                    done.push(Completion {
                        slice_id: self.slice_id,
                        user_id: idx,
                        packet,
                    });
                } else {
                    head.remaining -= budget;
                    served += budget;
                    budget = 0.0;
                    break;
                }
            }
            if !user.packets.is_empty() {
                // Budget ran out mid-queue: this user resumes next slot.
                break;
            }
            idx = (idx + 1) % n;
        }
        self.round_robin_cursor = idx;
        served
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub slice_id: usize,
    pub user_id: usize,
    pub packet: PacketRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub start_time: f64,
    pub budgets: Vec<f64>,
    pub served: Vec<f64>,
    /// Admitted bytes still queued per slice after service.
    pub queued_after: Vec<f64>,
    pub completions: Vec<Completion>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SliceWindowStats {
    /// Mean latency (ms) of packets completed in the window; when nothing
    /// completed, the age of the oldest unserved packet (0 if idle).
    pub avg_latency: f64,
    pub bytes_arrived: f64,
    /// Backlog at window start plus bytes arrived during the window.
    pub bytes_offered: f64,
    pub bytes_served: f64,
    /// Unserved bytes dropped with the queues of churned users.
    pub bytes_discarded: f64,
    pub completions: usize,
    pub deadline_violations: usize,
    pub churn_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowStats {
    pub start_time: f64,
    pub slices: Vec<SliceWindowStats>,
}

impl WindowStats {
    pub fn latencies(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.avg_latency).collect()
    }

    pub fn churn(&self) -> usize {
        self.slices.iter().map(|s| s.churn_count).sum()
    }
}

#[derive(Debug, Clone)]
pub struct BaseStation {
    pub capacity_per_slot: f64,
    pub slot_duration: f64,
    pub window_len: usize,
    pub slices: Vec<SliceQueueState>,
    profiles: Vec<ServiceProfile>,
    sources: Vec<TrafficSource>,
    now: f64,
}

impl BaseStation {
    pub fn new(profiles: Vec<ServiceProfile>, capacity_per_slot: f64, seed: u64) -> Result<Self> {
        if !(capacity_per_slot > 0.0 && capacity_per_slot.is_finite()) {
            return Err(Error::Config(format!(
                "capacity per slot must be positive, got {capacity_per_slot}"
            )));
        }
        if profiles.is_empty() {
            return Err(Error::Config(
                "base station needs at least one slice".into(),
            ));
        }
        let mut sources = Vec::with_capacity(profiles.len());
        for p in &profiles {
            p.validate()?;
            sources.push(TrafficSource::new(p)?);
        }
        let slices = profiles
            .iter()
            .zip(&sources)
            .enumerate()
            .map(|(s, (p, src))| SliceQueueState {
                slice_id: s,
                users: (0..p.num_users)
                    .map(|u| UserQueue::new(UserSession::new(seed, s, u, 0.0, src)))
                    .collect(),
                round_robin_cursor: 0,
            })
            .collect();
        Ok(BaseStation {
            capacity_per_slot,
            slot_duration: SLOT_MS,
            window_len: WINDOW_SLOTS,
            slices,
            profiles,
            sources,
            now: 0.0,
        })
    }

    pub fn with_window_len(mut self, window_len: usize) -> Result<Self> {
        if window_len == 0 {
            return Err(Error::Config(
                "window length must be at least one slot".into(),
            ));
        }
        self.window_len = window_len;
        Ok(self)
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn profiles(&self) -> &[ServiceProfile] {
        &self.profiles
    }

    pub fn window_duration(&self) -> f64 {
        self.window_len as f64 * self.slot_duration
    }

    /// Puts a packet straight into a user's queue.
    pub fn enqueue(&mut self, slice: usize, user: usize, packet: PacketRecord) {
        self.slices[slice].users[user].packets.push_back(packet);
    }

    /// Unserved bytes per slice, including arrivals not yet admitted.
    pub fn backlog(&self) -> Vec<f64> {
        self.slices
            .iter()
            .map(|s| s.users.iter().map(UserQueue::backlog).sum())
            .collect()
    }

    fn check_fractions(&self, fractions: &[f64]) -> Result<()> {
        if fractions.len() != self.slices.len() {
            return Err(Error::Usage(format!(
                "allocation has {} entries for {} slices",
                fractions.len(),
                self.slices.len()
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if fractions.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Usage(format!(
                "allocation {fractions:?} is not a distribution"
            )));
        }
        Ok(())
    }

    /// Admits due arrivals, serves one slot and advances the clock.
    pub fn run_slot(&mut self, fractions: &[f64]) -> Result<SlotOutcome> {
        self.check_fractions(fractions)?;
        let start = self.now;
        let end = start + self.slot_duration;
        let mut outcome = SlotOutcome {
            start_time: start,
            budgets: Vec::with_capacity(self.slices.len()),
            served: Vec::with_capacity(self.slices.len()),
            queued_after: Vec::with_capacity(self.slices.len()),
            completions: Vec::new(),
        };
        for (slice, &w) in self.slices.iter_mut().zip(fractions) {
            for user in &mut slice.users {
                while user.pending.front().is_some_and(|a| a.time <= start) {
                    let a = user.pending.pop_front().expect("front exists");
                    user.packets.push_back(PacketRecord::new(a.time, a.size));
                }
            }
            let budget = w * self.capacity_per_slot;
            outcome.budgets.push(budget);
            outcome
                .served
                .push(slice.serve(budget, end, &mut outcome.completions));
            outcome.queued_after.push(
                slice
                    .users
                    .iter()
                    .flat_map(|u| u.packets.iter())
                    .map(|p| p.remaining)
                    .sum(),
            );
        }
        self.now = end;
        Ok(outcome)
    }

    /// Runs one slicing window under a fixed allocation.
    pub fn run_window(&mut self, fractions: &[f64]) -> Result<WindowStats> {
        self.run_window_with(fractions, |_| {})
    }

    /// Like [`run_window`](Self::run_window), handing every slot outcome to `observe`.
    pub fn run_window_with<F: FnMut(&SlotOutcome)>(
        &mut self,
        fractions: &[f64],
        mut observe: F,
    ) -> Result<WindowStats> {
        self.check_fractions(fractions)?;
        let start = self.now;
        let end = start + self.window_duration();
        let mut stats: Vec<SliceWindowStats> = self
            .backlog()
            .into_iter()
            .map(|b| SliceWindowStats {
                bytes_offered: b,
                ..Default::default()
            })
            .collect();

        let mut scratch = Vec::new();
        for (s, slice) in self.slices.iter_mut().enumerate() {
            for user in &mut slice.users {
                scratch.clear();
                user.session
                    .generate_into(&self.sources[s], end, &mut scratch);
                stats[s].bytes_arrived += scratch.iter().map(|a| a.size).sum::<f64>();
                user.pending.extend(scratch.iter().copied());
            }
        }

        let mut latency_sum = vec![0.0; self.slices.len()];
        for _ in 0..self.window_len {
            let outcome = self.run_slot(fractions)?;
            for (s, served) in outcome.served.iter().enumerate() {
                stats[s].bytes_served += served;
            }
            for c in &outcome.completions {
                let latency = c
                    .packet
                    .latency()
                    .expect("completed packet has a timestamp");
                let st = &mut stats[c.slice_id];
                st.completions += 1;
                latency_sum[c.slice_id] += latency;
                let profile = &self.profiles[c.slice_id];
                if latency > profile.deadline {
                    st.deadline_violations += 1;
                }
                let user = &mut self.slices[c.slice_id].users[c.user_id];
                if record_delivery_outcome(&mut user.session, latency, profile).is_some() {
                    st.churn_count += 1;
                    st.bytes_discarded += user.backlog();
                    let src = &self.sources[c.slice_id];
                    let mut fresh = UserQueue::new(user.session.respawn(self.now, src));
                    scratch.clear();
                    fresh.session.generate_into(src, end, &mut scratch);
                    st.bytes_arrived += scratch.iter().map(|a| a.size).sum::<f64>();
                    fresh.pending.extend(scratch.iter().copied());
                    *user = fresh;
                }
            }
            observe(&outcome);
        }

        for (s, st) in stats.iter_mut().enumerate() {
            st.bytes_offered += st.bytes_arrived;
            st.avg_latency = if st.completions > 0 {
                latency_sum[s] / st.completions as f64
            } else {
                self.slices[s]
                    .users
                    .iter()
                    .filter_map(UserQueue::oldest_arrival)
                    .fold(None, |acc: Option<f64>, t| {
                        Some(acc.map_or(t, |a| a.min(t)))
                    })
                    .map_or(0.0, |oldest| (end - oldest).max(0.0))
            };
        }
        Ok(WindowStats {
            start_time: start,
            slices: stats,
        })
    }
}

/// Capacity per slot that puts the aggregate offered load at `target_utilization`.
pub fn calibrate_capacity(
    profiles: &[ServiceProfile],
    target_utilization: f64,
    slot_duration: f64,
) -> Result<f64> {
    if !(target_utilization > 0.0 && target_utilization < 1.0) {
        return Err(Error::Config(format!(
            "target utilization must lie in (0, 1), got {target_utilization}"
        )));
    }
    let rho: f64 = profiles.iter().map(ServiceProfile::offered_load).sum();
    if !(rho > 0.0) {
        return Err(Error::Config("offered load is zero".into()));
    }
    Ok(rho * slot_duration / target_utilization)
}
