//! Component state machines: loads, generators, lines with their protection
//! devices, and the load restoration queue.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{Generator, Line};
use crate::stochastic::{
    per_year_to_per_hour, sample_exponential, sample_outage_threshold,
    steady_state_up_probability, RngStream,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutageCause {
    GenerationInadequacy,
    SystemSplitting,
    OperatorIntervention,
}

impl OutageCause {
    pub const ALL: [OutageCause; 3] = [
        OutageCause::GenerationInadequacy,
        OutageCause::SystemSplitting,
        OutageCause::OperatorIntervention,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            OutageCause::GenerationInadequacy => "generation_inadequacy",
            OutageCause::SystemSplitting => "system_splitting",
            OutageCause::OperatorIntervention => "operator_intervention",
        }
    }
}

impl fmt::Display for OutageCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal {machine} transition {from} -> {to}")]
pub struct IllegalTransition {
    pub machine: &'static str,
    pub from: String,
    pub to: String,
}

fn illegal<S: fmt::Debug>(machine: &'static str, from: S, to: S) -> IllegalTransition {
    IllegalTransition { machine, from: format!("{from:?}"), to: format!("{to:?}") }
}

// ---------------------------------------------------------------------------
// Loads

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoadStatus {
    Connected,
    PartiallyShed,
    Disconnected,
    WaitingForRestoration,
}

impl LoadStatus {
    pub fn can_transition(self, to: LoadStatus) -> bool {
        use LoadStatus::*;
        matches!(
            (self, to),
            (Connected, PartiallyShed)
                | (Connected, Disconnected)
                | (PartiallyShed, PartiallyShed)
                | (PartiallyShed, Connected)
                | (PartiallyShed, Disconnected)
                | (Disconnected, WaitingForRestoration)
                | (WaitingForRestoration, Connected)
                | (WaitingForRestoration, Disconnected)
        )
    }

    /// Whether the load draws power (and counts in system demand).
    pub fn is_supplied(self) -> bool {
        matches!(self, LoadStatus::Connected | LoadStatus::PartiallyShed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadState {
    pub status: LoadStatus,
    /// Partially shed amount, MW. Nonzero only while partially shed.
    pub shed_mw: f64,
    pub disconnect_time: f64,
    pub cause: Option<OutageCause>,
}

impl Default for LoadState {
    fn default() -> Self {
        Self { status: LoadStatus::Connected, shed_mw: 0.0, disconnect_time: 0.0, cause: None }
    }
}

impl LoadState {
    fn go(&mut self, to: LoadStatus) -> Result<(), IllegalTransition> {
        if !self.status.can_transition(to) {
            return Err(illegal("load", self.status, to));
        }
        self.status = to;
        Ok(())
    }

    /// Adds `amount` MW of operator shedding.
    pub fn shed_partially(&mut self, amount: f64, t: f64) -> Result<(), IllegalTransition> {
        if self.status == LoadStatus::Connected {
            self.disconnect_time = t;
        }
        self.go(LoadStatus::PartiallyShed)?;
        self.shed_mw += amount;
        self.cause = Some(OutageCause::OperatorIntervention);
        Ok(())
    }

    pub fn cancel_shedding(&mut self) -> Result<(), IllegalTransition> {
        self.go(LoadStatus::Connected)?;
        self.shed_mw = 0.0;
        self.cause = None;
        Ok(())
    }

    pub fn disconnect(&mut self, t: f64, cause: OutageCause) -> Result<(), IllegalTransition> {
        self.go(LoadStatus::Disconnected)?;
        self.shed_mw = 0.0;
        self.disconnect_time = t;
        self.cause = Some(cause);
        Ok(())
    }

    pub fn begin_restoration(&mut self) -> Result<(), IllegalTransition> {
        self.go(LoadStatus::WaitingForRestoration)
    }

    pub fn abort_restoration(&mut self) -> Result<(), IllegalTransition> {
        self.go(LoadStatus::Disconnected)
    }

    pub fn reconnect(&mut self) -> Result<(), IllegalTransition> {
        self.go(LoadStatus::Connected)?;
        self.cause = None;
        Ok(())
    }

    /// Served demand given the load's full (unshed) demand.
    pub fn served(&self, full_demand: f64) -> f64 {
        match self.status {
            LoadStatus::Connected => full_demand,
            LoadStatus::PartiallyShed => (full_demand - self.shed_mw).max(0.0),
            _ => 0.0,
        }
    }

    pub fn unserved(&self, full_demand: f64) -> f64 {
        full_demand - self.served(full_demand)
    }
}

/// Full demand of a load, `gamma * peak * (1 + rho)`.
pub fn full_demand(peak_mw: f64, gamma: f64, rho: f64) -> f64 {
    (gamma * peak_mw * (1.0 + rho)).max(0.0)
}

/// Demand drawn by a load: full demand less partial shedding, floored at
/// zero; disconnected loads draw nothing.
pub fn load_demand(peak_mw: f64, gamma: f64, rho: f64, state: &LoadState) -> f64 {
    state.served(full_demand(peak_mw, gamma, rho))
}

// ---------------------------------------------------------------------------
// Generators

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorStatus {
    Up,
    ForcedDown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorState {
    pub status: GeneratorStatus,
    pub output_mw: f64,
    pub next_transition: f64,
}

/// t=0 state drawn from the stationary up-probability, with a residual
/// holding time (exact for exponential lifetimes).
pub fn initial_generator_state(gen: &Generator, rng: &mut RngStream) -> Result<GeneratorState> {
    let lambda = per_year_to_per_hour(gen.failure_rate_per_year);
    let p_up = steady_state_up_probability(lambda, gen.repair_rate_per_hour);
    let status = if rng.bernoulli(p_up) { GeneratorStatus::Up } else { GeneratorStatus::ForcedDown };
    let rate = match status {
        GeneratorStatus::Up => lambda,
        GeneratorStatus::ForcedDown => gen.repair_rate_per_hour,
    };
    Ok(GeneratorState { status, output_mw: 0.0, next_transition: sample_exponential(rate, rng)? })
}

/// Flips a unit between up and forced-down at time `t` and samples the
/// holding time of the new state.
pub fn generator_step(gen: &Generator, state: &GeneratorState, t: f64, rng: &mut RngStream) -> Result<GeneratorState> {
    let (status, rate) = match state.status {
        GeneratorStatus::Up => (GeneratorStatus::ForcedDown, gen.repair_rate_per_hour),
        GeneratorStatus::ForcedDown => (GeneratorStatus::Up, per_year_to_per_hour(gen.failure_rate_per_year)),
    };
    let output_mw = match status {
        GeneratorStatus::Up => state.output_mw,
        GeneratorStatus::ForcedDown => 0.0,
    };
    Ok(GeneratorState { status, output_mw, next_transition: t + sample_exponential(rate, rng)? })
}

// ---------------------------------------------------------------------------
// Lines and protection

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LineStatus {
    InService,
    /// Just tripped by protection.
    OutOverload,
    /// Just failed at random.
    OutPermanentFailure,
    /// Tripped, waiting for the angle condition or a manual reclose.
    WaitingReconnection,
    UnderRepair,
}

impl LineStatus {
    pub fn can_transition(self, to: LineStatus) -> bool {
        use LineStatus::*;
        matches!(
            (self, to),
            (InService, OutOverload)
                | (InService, OutPermanentFailure)
                | (OutOverload, WaitingReconnection)
                | (OutOverload, InService)
                | (WaitingReconnection, InService)
                | (OutPermanentFailure, UnderRepair)
                | (UnderRepair, InService)
        )
    }

    pub fn is_in_service(self) -> bool {
        self == LineStatus::InService
    }

    pub fn is_awaiting_reconnect(self) -> bool {
        matches!(self, LineStatus::OutOverload | LineStatus::WaitingReconnection)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineState {
    pub status: LineStatus,
    /// Scheduled time of the next random failure, repair or manual reclose.
    pub next_transition: f64,
    pub tripped_at: f64,
}

impl LineState {
    pub fn go(&mut self, to: LineStatus) -> Result<(), IllegalTransition> {
        if !self.status.can_transition(to) {
            return Err(illegal("line", self.status, to));
        }
        self.status = to;
        Ok(())
    }
}

pub fn initial_line_state(line: &Line, rng: &mut RngStream) -> Result<LineState> {
    let lambda = per_year_to_per_hour(line.failure_rate_per_year);
    let p_up = steady_state_up_probability(lambda, line.repair_rate_per_hour);
    let (status, rate) = if rng.bernoulli(p_up) {
        (LineStatus::InService, lambda)
    } else {
        (LineStatus::UnderRepair, line.repair_rate_per_hour)
    };
    Ok(LineState { status, next_transition: sample_exponential(rate, rng)?, tripped_at: f64::NEG_INFINITY })
}

/// Random permanent failure of an in-service line at `t`; the returned
/// state is under repair with its repair completion time scheduled.
pub fn line_permanent_failure_step(line: &Line, state: &LineState, t: f64, rng: &mut RngStream) -> Result<LineState> {
    let mut next = state.clone();
    next.go(LineStatus::OutPermanentFailure)?;
    next.go(LineStatus::UnderRepair)?;
    next.next_transition = t + sample_exponential(line.repair_rate_per_hour, rng)?;
    Ok(next)
}

/// Repair completion: back in service with the next failure scheduled.
pub fn line_repair_step(line: &Line, state: &LineState, t: f64, rng: &mut RngStream) -> Result<LineState> {
    let mut next = state.clone();
    next.go(LineStatus::InService)?;
    next.next_transition = t + sample_exponential(per_year_to_per_hour(line.failure_rate_per_year), rng)?;
    Ok(next)
}

/// Protection trip at `t`; a manual reclose is scheduled.
pub fn line_trip_step(line: &Line, state: &LineState, t: f64) -> Result<LineState> {
    let mut next = state.clone();
    next.go(LineStatus::OutOverload)?;
    next.tripped_at = t;
    next.next_transition = t + line.reclose_delay_h;
    Ok(next)
}

/// Largest angle difference (MW-scaled, see `powerflow`) at which a tripped
/// line may be reconnected.
pub fn reconnect_angle_limit(line: &Line, eta: f64) -> f64 {
    eta * line.reactance_pu * line.rating_mw
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReconnectDecision {
    Reconnect,
    /// Stay out until the manual reclose time.
    Wait { manual_reclose_at: f64 },
}

/// Angle-based reconnection test for a tripped line. `angle_diff` is `None`
/// when the two ends lie in different islands and no angle is defined.
pub fn line_reconnect_check(
    line: &Line,
    angle_diff: Option<f64>,
    state: &LineState,
    eta: f64,
) -> Result<(LineState, ReconnectDecision)> {
    let mut next = state.clone();
    let ok = angle_diff.is_some_and(|d| d.abs() < reconnect_angle_limit(line, eta));
    if ok {
        next.go(LineStatus::InService)?;
        Ok((next, ReconnectDecision::Reconnect))
    } else {
        if next.status == LineStatus::OutOverload {
            next.go(LineStatus::WaitingReconnection)?;
        }
        let at = state.tripped_at + line.reclose_delay_h;
        Ok((next, ReconnectDecision::Wait { manual_reclose_at: at }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtectionStatus {
    Idle,
    AlarmSent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtectionState {
    pub status: ProtectionStatus,
    pub monitored_flow: f64,
    /// Trip level for the current overload episode.
    pub outage_threshold: f64,
}

impl Default for ProtectionState {
    fn default() -> Self {
        Self { status: ProtectionStatus::Idle, monitored_flow: 0.0, outage_threshold: f64::INFINITY }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtectionAction {
    RaiseAlarm,
    ClearAlarm,
    Trip,
}

/// One protection evaluation for an in-service line carrying `flow` MW.
/// A new overload episode draws a fresh trip threshold.
pub fn protection_step(
    line: &Line,
    flow: f64,
    state: &ProtectionState,
    beta: f64,
    rng: &mut RngStream,
) -> Result<(ProtectionState, Vec<ProtectionAction>)> {
    let mut next = state.clone();
    let mut actions = Vec::new();
    let f = flow.abs();
    next.monitored_flow = f;
    match state.status {
        ProtectionStatus::Idle if f >= line.rating_mw => {
            next.status = ProtectionStatus::AlarmSent;
            next.outage_threshold = sample_outage_threshold(line.rating_mw, beta, rng)?;
            actions.push(ProtectionAction::RaiseAlarm);
        }
        ProtectionStatus::AlarmSent if f < line.rating_mw => {
            next.status = ProtectionStatus::Idle;
            next.outage_threshold = f64::INFINITY;
            actions.push(ProtectionAction::ClearAlarm);
        }
        _ => {}
    }
    if next.status == ProtectionStatus::AlarmSent && f >= next.outage_threshold {
        actions.push(ProtectionAction::Trip);
    }
    Ok((next, actions))
}

// ---------------------------------------------------------------------------
// Restoration

/// (stage start in minutes, restoration rate in MW/min).
pub const RESTORATION_STAGES: [(f64, f64); 4] = [(0.0, 10.0), (30.0, 33.3), (60.0, 66.6), (90.0, 83.3)];

/// Restoration rate after `elapsed_min` minutes of the overall process.
pub fn restoration_rate(elapsed_min: f64) -> Result<f64> {
    if !(elapsed_min >= 0.0) {
        return Err(Error::Parameter(format!("elapsed restoration time must be >= 0, got {elapsed_min}")));
    }
    Ok(RESTORATION_STAGES
        .iter()
        .rev()
        .find(|(start, _)| elapsed_min >= *start)
        .map(|&(_, rate)| rate)
        .expect("first stage starts at zero"))
}

/// Cumulative MW restorable after `elapsed_min` minutes.
pub fn restored_mw(elapsed_min: f64) -> f64 {
    let mut total = 0.0;
    for (k, &(start, rate)) in RESTORATION_STAGES.iter().enumerate() {
        if elapsed_min <= start {
            break;
        }
        let end = RESTORATION_STAGES.get(k + 1).map_or(f64::INFINITY, |s| s.0);
        total += rate * (elapsed_min.min(end) - start);
    }
    total
}

/// Minutes after process start at which `mw` cumulative MW are restored.
pub fn minutes_to_restore(mw: f64) -> f64 {
    let mut cum = 0.0;
    for (k, &(start, rate)) in RESTORATION_STAGES.iter().enumerate() {
        let end = RESTORATION_STAGES.get(k + 1).map_or(f64::INFINITY, |s| s.0);
        let cap = rate * (end - start);
        if mw <= cum + cap {
            return start + (mw - cum) / rate;
        }
        cum += cap;
    }
    unreachable!("last stage is unbounded")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestorationProcess {
    /// Process origin, hours.
    pub start_h: f64,
    pub restored_mw: f64,
    /// Load being reconnected and its completion time.
    pub in_flight: Option<(usize, f64, f64)>,
}

/// FIFO of disconnected loads awaiting reconnection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RestorationQueue {
    pub queue: VecDeque<usize>,
    pub process: Option<RestorationProcess>,
}

impl RestorationQueue {
    pub fn push(&mut self, load: usize) {
        self.queue.push_back(load);
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn in_flight(&self) -> Option<usize> {
        self.process.as_ref().and_then(|p| p.in_flight.map(|(l, _, _)| l))
    }

    /// Ends the current process; returns the load that was being restored.
    pub fn stop(&mut self) -> Option<usize> {
        self.process.take().and_then(|p| p.in_flight.map(|(l, _, _)| l))
    }

    /// Marks the in-flight load as reconnected and removes it from the queue.
    pub fn complete(&mut self, load: usize) {
        if let Some(p) = self.process.as_mut() {
            if let Some((l, _, mw)) = p.in_flight {
                if l == load {
                    p.restored_mw += mw;
                    p.in_flight = None;
                }
            }
        }
        self.queue.retain(|&l| l != load);
    }
}

/// Picks the next load to reconnect and its completion time.
///
/// `restorable(load)` returns the load's demand if its island can currently
/// take it on, `None` otherwise. Loads that cannot be restored keep their
/// queue position. A process is started at `t` if none is running; if
/// nothing is restorable the process ends.
pub fn restoration_step(
    queue: &mut RestorationQueue,
    t: f64,
    mut restorable: impl FnMut(usize) -> Option<f64>,
) -> Option<(usize, f64)> {
    if queue.in_flight().is_some() {
        return None;
    }
    let Some((load, mw)) = queue.queue.iter().find_map(|&l| restorable(l).map(|mw| (l, mw))) else {
        queue.process = None;
        return None;
    };
    let process = queue.process.get_or_insert(RestorationProcess { start_h: t, restored_mw: 0.0, in_flight: None });
    let done = (process.start_h + minutes_to_restore(process.restored_mw + mw) / 60.0).max(t);
    process.in_flight = Some((load, done, mw));
    Some((load, done))
}
