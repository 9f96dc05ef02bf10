//! Grid operators: alarm handling and the delays before a corrective action.
//!
//! Every overload alarm opens an independent procedure for that line. A
//! tie-line alarm reaches both area operators, who first need the contact
//! delay to agree; the responsible operator then needs the response delay
//! to find a solution. Inside one area the contact phase is skipped. A
//! procedure is dropped when the alarm clears or the line trips before the
//! solution is ready.

use crate::event::EventKind;
use crate::model::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorStatus {
    Idle,
    /// Received a tie-line alarm it is not responsible for.
    Alarmed,
    Contacting,
    FindingSolution,
    Executing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorConfig {
    pub enabled: bool,
    /// Overrides every area's response delay when set, minutes.
    pub response_delay_min: Option<f64>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self { enabled: true, response_delay_min: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Procedure {
    pub line: usize,
    /// Validity token carried by the procedure's events.
    pub episode: u64,
    pub status: OperatorStatus,
    pub alarm_time: f64,
    /// Area index of the responsible operator.
    pub responsible: usize,
    /// Area index of the other operator on a tie-line.
    pub counterpart: Option<usize>,
}

/// Next timer of a procedure: when and which event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timer {
    pub time: f64,
    pub kind: EventKind,
    pub token: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorState {
    config: OperatorConfig,
    procedures: Vec<Option<Procedure>>,
    next_episode: u64,
}

impl OperatorState {
    pub fn new(net: &Network, config: OperatorConfig) -> Self {
        Self { config, procedures: vec![None; net.n_lines()], next_episode: 1 }
    }

    pub fn enabled(&self) -> bool {
        self.config.enabled
    }

    fn response_h(&self, net: &Network, area: usize) -> f64 {
        self.config.response_delay_min.unwrap_or(net.area(area).response_delay_min) / 60.0
    }

    pub fn procedure(&self, line: usize) -> Option<&Procedure> {
        self.procedures[line].as_ref()
    }

    pub fn active(&self) -> impl Iterator<Item = &Procedure> {
        self.procedures.iter().flatten()
    }

    /// Aggregate status of one area's operator: the most advanced stage of
    /// any procedure it takes part in.
    pub fn area_status(&self, area: usize) -> OperatorStatus {
        let rank = |s: OperatorStatus| match s {
            OperatorStatus::Idle => 0,
            OperatorStatus::Alarmed => 1,
            OperatorStatus::Contacting => 2,
            OperatorStatus::FindingSolution => 3,
            OperatorStatus::Executing => 4,
        };
        self.active()
            .filter_map(|p| {
                if p.responsible == area {
                    Some(p.status)
                } else if p.counterpart == Some(area) {
                    Some(if p.status == OperatorStatus::Contacting {
                        OperatorStatus::Contacting
                    } else {
                        OperatorStatus::Alarmed
                    })
                } else {
                    None
                }
            })
            .max_by_key(|&s| rank(s))
            .unwrap_or(OperatorStatus::Idle)
    }

    /// Opens a procedure for an alarm on `line` at `t`. Returns the timer to
    /// schedule, or `None` when operators are disabled.
    pub fn on_alarm(&mut self, net: &Network, line: usize, t: f64) -> Option<Timer> {
        if !self.config.enabled {
            return None;
        }
        let episode = self.next_episode;
        self.next_episode += 1;
        let responsible = net.line_owner(line);
        let (f, to) = net.line_ends(line);
        let (status, counterpart, timer) = if net.is_tie_line(line) {
            let other = if net.bus_area(f) == responsible { net.bus_area(to) } else { net.bus_area(f) };
            let at = t + net.area(responsible).contact_delay_min / 60.0;
            (OperatorStatus::Contacting, Some(other), Timer { time: at, kind: EventKind::OperatorContactDone(line), token: episode })
        } else {
            let at = t + self.response_h(net, responsible);
            (OperatorStatus::FindingSolution, None, Timer { time: at, kind: EventKind::OperatorSolutionDone(line), token: episode })
        };
        self.procedures[line] = Some(Procedure { line, episode, status, alarm_time: t, responsible, counterpart });
        Some(timer)
    }

    fn current(&mut self, line: usize, token: u64, expected: OperatorStatus) -> Option<&mut Procedure> {
        self.procedures[line].as_mut().filter(|p| p.episode == token && p.status == expected)
    }

    /// Contact established; the responsible operator starts looking for a
    /// solution. Stale tokens are ignored.
    pub fn on_contact_done(&mut self, net: &Network, line: usize, token: u64, t: f64) -> Option<Timer> {
        let response = {
            let p = self.procedures[line].as_ref()?;
            self.response_h(net, p.responsible)
        };
        let p = self.current(line, token, OperatorStatus::Contacting)?;
        p.status = OperatorStatus::FindingSolution;
        Some(Timer { time: t + response, kind: EventKind::OperatorSolutionDone(line), token })
    }

    /// Solution found; returns the procedure to execute if still current.
    pub fn on_solution_done(&mut self, line: usize, token: u64) -> Option<Procedure> {
        let p = self.current(line, token, OperatorStatus::FindingSolution)?;
        p.status = OperatorStatus::Executing;
        Some(*p)
    }

    /// Closes the procedure of `line` (alarm cleared, line tripped, or action
    /// executed). Returns whether one was open.
    pub fn close(&mut self, line: usize) -> bool {
        self.procedures[line].take().is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fixtures, ControlArea};

    fn two_areas() -> Network {
        let mut m = fixtures::buses(3);
        m.areas.push(ControlArea { id: 2, contact_delay_min: 2.0, response_delay_min: 15.0 });
        m.buses[2].area = 2;
        m.lines.push(fixtures::line(1, 1, 2, 0.1, 100.0));
        m.lines.push(fixtures::line(2, 2, 3, 0.1, 100.0));
        Network::new(m).unwrap()
    }

    #[test]
    fn tie_line_waits_for_contact_then_response() {
        let net = two_areas();
        let mut op = OperatorState::new(&net, OperatorConfig::default());
        let t0 = 10.0;
        let timer = op.on_alarm(&net, 1, t0).unwrap();
        assert_eq!(timer.kind, EventKind::OperatorContactDone(1));
        assert!((timer.time - (t0 + 2.0 / 60.0)).abs() < 1e-12);
        assert_eq!(op.area_status(0), OperatorStatus::Contacting);
        assert_eq!(op.area_status(1), OperatorStatus::Contacting);
        let next = op.on_contact_done(&net, 1, timer.token, timer.time).unwrap();
        assert!((next.time - (t0 + 17.0 / 60.0)).abs() < 1e-12);
        assert_eq!(op.area_status(1), OperatorStatus::Alarmed);
        let p = op.on_solution_done(1, next.token).unwrap();
        assert_eq!(p.status, OperatorStatus::Executing);
        assert!(op.close(1));
        assert_eq!(op.area_status(0), OperatorStatus::Idle);
    }

    #[test]
    fn intra_area_skips_contact() {
        let net = two_areas();
        let mut op = OperatorState::new(&net, OperatorConfig::default());
        let timer = op.on_alarm(&net, 0, 1.0).unwrap();
        assert_eq!(timer.kind, EventKind::OperatorSolutionDone(0));
        assert!((timer.time - 1.25).abs() < 1e-12);
    }

    #[test]
    fn cleared_alarm_cancels_procedure() {
        let net = two_areas();
        let mut op = OperatorState::new(&net, OperatorConfig::default());
        let timer = op.on_alarm(&net, 1, 0.0).unwrap();
        op.close(1);
        assert!(op.on_contact_done(&net, 1, timer.token, timer.time).is_none());
        // A fresh alarm gets a new episode; the old timer stays stale.
        let fresh = op.on_alarm(&net, 1, 0.1).unwrap();
        assert_ne!(fresh.token, timer.token);
        assert!(op.on_contact_done(&net, 1, timer.token, timer.time).is_none());
        assert!(op.on_contact_done(&net, 1, fresh.token, fresh.time).is_some());
    }

    #[test]
    fn disabled_and_overridden() {
        let net = two_areas();
        let mut off = OperatorState::new(&net, OperatorConfig { enabled: false, response_delay_min: None });
        assert!(off.on_alarm(&net, 0, 0.0).is_none());
        let mut slow = OperatorState::new(&net, OperatorConfig { enabled: true, response_delay_min: Some(30.0) });
        let timer = slow.on_alarm(&net, 0, 0.0).unwrap();
        assert!((timer.time - 0.5).abs() < 1e-12);
    }

    #[test]
    fn independent_procedures_per_line() {
        let net = two_areas();
        let mut op = OperatorState::new(&net, OperatorConfig::default());
        let a = op.on_alarm(&net, 0, 0.0).unwrap();
        let b = op.on_alarm(&net, 1, 0.05).unwrap();
        assert_eq!(op.active().count(), 2);
        op.close(0);
        assert!(op.on_solution_done(0, a.token).is_none());
        assert!(op.on_contact_done(&net, 1, b.token, b.time).is_some());
    }
}
