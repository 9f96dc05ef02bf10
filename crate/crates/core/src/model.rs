//! Static network description and topology queries.
//!
//! A [`NetworkModel`] is plain data, exactly as read from a network file and
//! possibly malformed. [`Network`] wraps a validated model together with the
//! dense index maps the simulator works with; it is immutable and shared by
//! all replications. Everything dynamic (which lines are in service, which
//! units are up) lives in the engine's state.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

pub const DEFAULT_BETA: f64 = 1.4;
pub const DEFAULT_ETA: f64 = 0.9;
pub const DEFAULT_XI: f64 = 0.8;
pub const DEFAULT_SHED_WEIGHT: f64 = 10_000.0;
pub const DEFAULT_SIGMA: f64 = 0.0192;

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub area: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    /// Series reactance, per unit on the system base.
    pub reactance_pu: f64,
    /// Continuous rating in MW.
    pub rating_mw: f64,
    /// Permanent failures per year.
    pub failure_rate_per_year: f64,
    /// Repairs per hour.
    pub repair_rate_per_hour: f64,
    /// Delay until a manual reclose attempt after a protection trip, hours.
    pub reclose_delay_h: f64,
    /// Area whose operator handles overloads on this line. `None` means the
    /// lower-numbered endpoint area.
    pub responsible_area: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: u32,
    pub bus: u32,
    pub capacity_mw: f64,
    /// Dispatch priority, 1 is committed first.
    pub priority: u32,
    pub failure_rate_per_year: f64,
    pub repair_rate_per_hour: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub id: u32,
    pub bus: u32,
    pub peak_demand_mw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlArea {
    pub id: u32,
    /// Time for neighbouring operators to contact each other, minutes.
    pub contact_delay_min: f64,
    /// Time for the responsible operator to find a corrective action, minutes.
    pub response_delay_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Upper end of the trip-threshold interval as a multiple of the rating.
    pub beta: f64,
    /// Reconnect margin on the angle difference.
    pub eta: f64,
    /// Post-correction loading limit as a fraction of the rating.
    pub xi: f64,
    /// Cost weight of load shedding relative to redispatch.
    pub shed_weight: f64,
    /// Standard deviation of hourly demand deviations.
    pub sigma: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            eta: DEFAULT_ETA,
            xi: DEFAULT_XI,
            shed_weight: DEFAULT_SHED_WEIGHT,
            sigma: DEFAULT_SIGMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub base_mva: f64,
    pub areas: Vec<ControlArea>,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    pub params: Params,
}

impl NetworkModel {
    /// Peak demands and generator capacities multiplied by `level`.
    pub fn scaled(&self, level: f64) -> NetworkModel {
        let mut m = self.clone();
        for l in &mut m.loads {
            l.peak_demand_mw *= level;
        }
        for g in &mut m.generators {
            g.capacity_mw *= level;
        }
        m
    }

    pub fn total_peak_demand(&self) -> f64 {
        self.loads.iter().map(|l| l.peak_demand_mw).sum()
    }

    pub fn area_peak_demand(&self, area: u32) -> f64 {
        let in_area: HashSet<u32> = self
            .buses
            .iter()
            .filter(|b| b.area == area)
            .map(|b| b.id)
            .collect();
        self.loads
            .iter()
            .filter(|l| in_area.contains(&l.bus))
            .map(|l| l.peak_demand_mw)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Area,
    Bus,
    Line,
    Generator,
    Load,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Component::Area => "area",
            Component::Bus => "bus",
            Component::Line => "line",
            Component::Generator => "generator",
            Component::Load => "load",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateId { kind: Component, id: u32 },
    SelfLoop { line: u32 },
    UnknownBus { kind: Component, id: u32, bus: u32 },
    UnknownArea { kind: Component, id: u32, area: u32 },
    NonPositive { kind: Component, id: u32, field: &'static str, value: f64 },
    Negative { kind: Component, id: u32, field: &'static str, value: f64 },
    ZeroPriority { generator: u32 },
    /// Responsible area must be one of the line's endpoint areas.
    ForeignResponsibility { line: u32, area: u32 },
    AreaWithoutBuses { area: u32 },
    BadParam { name: &'static str, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { kind, id } => write!(f, "duplicate {kind} id {id}"),
            Violation::SelfLoop { line } => write!(f, "line {line} connects a bus to itself"),
            Violation::UnknownBus { kind, id, bus } => {
                write!(f, "{kind} {id} references unknown bus {bus}")
            }
            Violation::UnknownArea { kind, id, area } => {
                write!(f, "{kind} {id} references unknown area {area}")
            }
            Violation::NonPositive { kind, id, field, value } => {
                write!(f, "{kind} {id}: {field} must be > 0, got {value}")
            }
            Violation::Negative { kind, id, field, value } => {
                write!(f, "{kind} {id}: {field} must be >= 0, got {value}")
            }
            Violation::ZeroPriority { generator } => {
                write!(f, "generator {generator}: priority must be >= 1")
            }
            Violation::ForeignResponsibility { line, area } => {
                write!(f, "line {line}: responsible area {area} is not an endpoint area")
            }
            Violation::AreaWithoutBuses { area } => write!(f, "area {area} has no buses"),
            Violation::BadParam { name, value } => write!(f, "parameter {name} out of range: {value}"),
        }
    }
}

/// Lists every invariant violation in `model`. Empty iff well-formed.
pub fn validate(model: &NetworkModel) -> Vec<Violation> {
    let mut out = Vec::new();

    let check_dups = |kind: Component, ids: &mut dyn Iterator<Item = u32>, out: &mut Vec<Violation>| {
        let mut seen = HashSet::new();
        for id in ids {
            if !seen.insert(id) {
                out.push(Violation::DuplicateId { kind, id });
            }
        }
    };
    check_dups(Component::Area, &mut model.areas.iter().map(|a| a.id), &mut out);
    check_dups(Component::Bus, &mut model.buses.iter().map(|b| b.id), &mut out);
    check_dups(Component::Line, &mut model.lines.iter().map(|l| l.id), &mut out);
    check_dups(Component::Generator, &mut model.generators.iter().map(|g| g.id), &mut out);
    check_dups(Component::Load, &mut model.loads.iter().map(|l| l.id), &mut out);

    if !(model.base_mva > 0.0) {
        out.push(Violation::BadParam { name: "base_mva", value: model.base_mva });
    }

    let areas: HashSet<u32> = model.areas.iter().map(|a| a.id).collect();
    let bus_area: HashMap<u32, u32> = model.buses.iter().map(|b| (b.id, b.area)).collect();

    for a in &model.areas {
        if a.contact_delay_min < 0.0 {
            out.push(Violation::Negative { kind: Component::Area, id: a.id, field: "contact delay", value: a.contact_delay_min });
        }
        if a.response_delay_min < 0.0 {
            out.push(Violation::Negative { kind: Component::Area, id: a.id, field: "response delay", value: a.response_delay_min });
        }
        if !model.buses.iter().any(|b| b.area == a.id) {
            out.push(Violation::AreaWithoutBuses { area: a.id });
        }
    }
    for b in &model.buses {
        if !areas.contains(&b.area) {
            out.push(Violation::UnknownArea { kind: Component::Bus, id: b.id, area: b.area });
        }
    }

    for l in &model.lines {
        let kind = Component::Line;
        if l.from_bus == l.to_bus {
            out.push(Violation::SelfLoop { line: l.id });
        }
        for bus in [l.from_bus, l.to_bus] {
            if !bus_area.contains_key(&bus) {
                out.push(Violation::UnknownBus { kind, id: l.id, bus });
            }
        }
        if !(l.reactance_pu > 0.0) {
            out.push(Violation::NonPositive { kind, id: l.id, field: "reactance", value: l.reactance_pu });
        }
        if !(l.rating_mw > 0.0) {
            out.push(Violation::NonPositive { kind, id: l.id, field: "rating", value: l.rating_mw });
        }
        if !(l.failure_rate_per_year >= 0.0) {
            out.push(Violation::Negative { kind, id: l.id, field: "failure rate", value: l.failure_rate_per_year });
        }
        if !(l.repair_rate_per_hour > 0.0) {
            out.push(Violation::NonPositive { kind, id: l.id, field: "repair rate", value: l.repair_rate_per_hour });
        }
        if !(l.reclose_delay_h >= 0.0) {
            out.push(Violation::Negative { kind, id: l.id, field: "reclose delay", value: l.reclose_delay_h });
        }
        if let Some(area) = l.responsible_area {
            let ends = [bus_area.get(&l.from_bus), bus_area.get(&l.to_bus)];
            if !ends.iter().any(|e| *e == Some(&area)) {
                out.push(Violation::ForeignResponsibility { line: l.id, area });
            }
        }
    }

    for g in &model.generators {
        let kind = Component::Generator;
        if !bus_area.contains_key(&g.bus) {
            out.push(Violation::UnknownBus { kind, id: g.id, bus: g.bus });
        }
        if !(g.capacity_mw > 0.0) {
            out.push(Violation::NonPositive { kind, id: g.id, field: "capacity", value: g.capacity_mw });
        }
        if g.priority == 0 {
            out.push(Violation::ZeroPriority { generator: g.id });
        }
        if !(g.failure_rate_per_year >= 0.0) {
            out.push(Violation::Negative { kind, id: g.id, field: "failure rate", value: g.failure_rate_per_year });
        }
        if !(g.repair_rate_per_hour > 0.0) {
            out.push(Violation::NonPositive { kind, id: g.id, field: "repair rate", value: g.repair_rate_per_hour });
        }
    }

    for l in &model.loads {
        if !bus_area.contains_key(&l.bus) {
            out.push(Violation::UnknownBus { kind: Component::Load, id: l.id, bus: l.bus });
        }
        if !(l.peak_demand_mw > 0.0) {
            out.push(Violation::NonPositive { kind: Component::Load, id: l.id, field: "peak demand", value: l.peak_demand_mw });
        }
    }

    let p = &model.params;
    if !(p.beta > 1.0) {
        out.push(Violation::BadParam { name: "beta", value: p.beta });
    }
    if !(p.eta >= 0.0) {
        out.push(Violation::BadParam { name: "eta", value: p.eta });
    }
    if !(p.xi > 0.0 && p.xi <= 1.0) {
        out.push(Violation::BadParam { name: "xi", value: p.xi });
    }
    if !(p.shed_weight > 0.0) {
        out.push(Violation::BadParam { name: "W", value: p.shed_weight });
    }
    if !(p.sigma >= 0.0) {
        out.push(Violation::BadParam { name: "sigma", value: p.sigma });
    }
    out
}

/// Line in-service mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub in_service: Vec<bool>,
}

impl Topology {
    pub fn all_in_service(n_lines: usize) -> Self {
        Self { in_service: vec![true; n_lines] }
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.in_service.hash(&mut h);
        h.finish()
    }
}

/// Partition of buses into electrically connected islands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Islands {
    /// Bus indices per island, each sorted by bus id; islands sorted by their
    /// smallest bus id.
    pub members: Vec<Vec<usize>>,
    /// Island index per bus.
    pub island_of: Vec<usize>,
}

impl Islands {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Validated, indexed network. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Network {
    model: NetworkModel,
    bus_pos: HashMap<u32, usize>,
    area_pos: HashMap<u32, usize>,
    bus_area: Vec<usize>,
    line_ends: Vec<(usize, usize)>,
    line_owner: Vec<usize>,
    gen_bus: Vec<usize>,
    load_bus: Vec<usize>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Network {
    pub fn new(model: NetworkModel) -> Result<Self> {
        let violations = validate(&model);
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        let bus_pos: HashMap<u32, usize> =
            model.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        let area_pos: HashMap<u32, usize> =
            model.areas.iter().enumerate().map(|(i, a)| (a.id, i)).collect();
        let bus_area = model.buses.iter().map(|b| area_pos[&b.area]).collect::<Vec<_>>();
        let line_ends: Vec<(usize, usize)> = model
            .lines
            .iter()
            .map(|l| (bus_pos[&l.from_bus], bus_pos[&l.to_bus]))
            .collect();
        let line_owner = model
            .lines
            .iter()
            .zip(&line_ends)
            .map(|(l, &(f, t))| match l.responsible_area {
                Some(a) => area_pos[&a],
                None => {
                    let (af, at) = (&model.areas[bus_area[f]], &model.areas[bus_area[t]]);
                    if af.id <= at.id { bus_area[f] } else { bus_area[t] }
                }
            })
            .collect();
        let gen_bus = model.generators.iter().map(|g| bus_pos[&g.bus]).collect();
        let load_bus = model.loads.iter().map(|l| bus_pos[&l.bus]).collect();
        let mut adjacency = vec![Vec::new(); model.buses.len()];
        for (k, &(f, t)) in line_ends.iter().enumerate() {
            adjacency[f].push((k, t));
            adjacency[t].push((k, f));
        }
        Ok(Self {
            model,
            bus_pos,
            area_pos,
            bus_area,
            line_ends,
            line_owner,
            gen_bus,
            load_bus,
            adjacency,
        })
    }

    pub fn model(&self) -> &NetworkModel {
        &self.model
    }

    pub fn params(&self) -> &Params {
        &self.model.params
    }

    pub fn n_buses(&self) -> usize {
        self.model.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.model.lines.len()
    }

    pub fn n_generators(&self) -> usize {
        self.model.generators.len()
    }

    pub fn n_loads(&self) -> usize {
        self.model.loads.len()
    }

    pub fn n_areas(&self) -> usize {
        self.model.areas.len()
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.bus_pos.get(&id).copied()
    }

    pub fn area_index(&self, id: u32) -> Option<usize> {
        self.area_pos.get(&id).copied()
    }

    pub fn line_index(&self, id: u32) -> Option<usize> {
        self.model.lines.iter().position(|l| l.id == id)
    }

    pub fn bus_id(&self, bus: usize) -> u32 {
        self.model.buses[bus].id
    }

    /// Area index of a bus.
    pub fn bus_area(&self, bus: usize) -> usize {
        self.bus_area[bus]
    }

    /// Bus indices (from, to) of a line.
    pub fn line_ends(&self, line: usize) -> (usize, usize) {
        self.line_ends[line]
    }

    /// Area index of the operator responsible for a line.
    pub fn line_owner(&self, line: usize) -> usize {
        self.line_owner[line]
    }

    pub fn is_tie_line(&self, line: usize) -> bool {
        let (f, t) = self.line_ends[line];
        self.bus_area[f] != self.bus_area[t]
    }

    pub fn generator_bus(&self, gen: usize) -> usize {
        self.gen_bus[gen]
    }

    pub fn load_bus(&self, load: usize) -> usize {
        self.load_bus[load]
    }

    pub fn generator_area(&self, gen: usize) -> usize {
        self.bus_area[self.gen_bus[gen]]
    }

    pub fn load_area(&self, load: usize) -> usize {
        self.bus_area[self.load_bus[load]]
    }

    /// (line index, neighbour bus) pairs incident to a bus.
    pub fn incident(&self, bus: usize) -> &[(usize, usize)] {
        &self.adjacency[bus]
    }

    pub fn line(&self, line: usize) -> &Line {
        &self.model.lines[line]
    }

    pub fn generator(&self, gen: usize) -> &Generator {
        &self.model.generators[gen]
    }

    pub fn load(&self, load: usize) -> &Load {
        &self.model.loads[load]
    }

    pub fn area(&self, area: usize) -> &ControlArea {
        &self.model.areas[area]
    }

    pub fn topology_from_ids(&self, in_service: &BTreeSet<u32>) -> Topology {
        Topology {
            in_service: self.model.lines.iter().map(|l| in_service.contains(&l.id)).collect(),
        }
    }
}

/// Buses grouped into islands connected through in-service lines.
pub fn connected_components(net: &Network, topo: &Topology) -> Islands {
    let n = net.n_buses();
    let mut island_of = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if island_of[start] != usize::MAX {
            continue;
        }
        let idx = members.len();
        let mut group = vec![start];
        island_of[start] = idx;
        stack.push(start);
        while let Some(b) = stack.pop() {
            for &(line, other) in net.incident(b) {
                if topo.in_service[line] && island_of[other] == usize::MAX {
                    island_of[other] = idx;
                    group.push(other);
                    stack.push(other);
                }
            }
        }
        group.sort_by_key(|&b| net.bus_id(b));
        members.push(group);
    }
    members.sort_by_key(|g| net.bus_id(g[0]));
    for (i, g) in members.iter().enumerate() {
        for &b in g {
            island_of[b] = i;
        }
    }
    Islands { members, island_of }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IslandBalance {
    pub available_capacity: f64,
    pub connected_demand: f64,
}

impl IslandBalance {
    pub fn excess_demand(&self) -> f64 {
        self.connected_demand - self.available_capacity
    }
}

/// Capacity of in-service generators and demand of connected loads on an
/// island. `load_demand` holds each load's currently served demand (zero
/// when disconnected).
pub fn island_balance(
    net: &Network,
    island: &[usize],
    gen_available: &[bool],
    load_demand: &[f64],
) -> IslandBalance {
    let mut on_island = vec![false; net.n_buses()];
    for &b in island {
        on_island[b] = true;
    }
    let available_capacity = (0..net.n_generators())
        .filter(|&g| gen_available[g] && on_island[net.generator_bus(g)])
        .map(|g| net.generator(g).capacity_mw)
        .sum();
    let connected_demand = (0..net.n_loads())
        .filter(|&l| on_island[net.load_bus(l)])
        .map(|l| load_demand[l])
        .sum();
    IslandBalance { available_capacity, connected_demand }
}

/// Hourly demand fractions per control area (profile values in `[0, 1]`),
/// one column per area in the network's area order.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    n_areas: usize,
    values: Vec<f64>,
}

impl LoadProfile {
    /// `values` is row-major: hour by hour, one entry per area.
    pub fn new(n_areas: usize, values: Vec<f64>) -> Result<Self> {
        if n_areas == 0 || values.is_empty() || values.len() % n_areas != 0 {
            return Err(Error::Parameter(format!(
                "profile needs a positive whole number of rows of {n_areas} values, got {} values",
                values.len()
            )));
        }
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!(
                "profile value {v} at hour {} is outside [0, 1]",
                k / n_areas
            )));
        }
        Ok(Self { n_areas, values })
    }

    pub fn constant(n_areas: usize, hours: usize, value: f64) -> Result<Self> {
        Self::new(n_areas, vec![value; n_areas * hours])
    }

    pub fn hours(&self) -> usize {
        self.values.len() / self.n_areas
    }

    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn row(&self, hour: usize) -> &[f64] {
        &self.values[hour * self.n_areas..(hour + 1) * self.n_areas]
    }

    pub fn gamma(&self, hour: usize, area: usize) -> f64 {
        self.values[hour * self.n_areas + area]
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn line(id: u32, from: u32, to: u32, x: f64, rating: f64) -> Line {
        Line {
            id,
            from_bus: from,
            to_bus: to,
            reactance_pu: x,
            rating_mw: rating,
            failure_rate_per_year: 0.0,
            repair_rate_per_hour: 0.1,
            reclose_delay_h: 1.0,
            responsible_area: None,
        }
    }

    pub fn gen(id: u32, bus: u32, cap: f64, priority: u32) -> Generator {
        Generator {
            id,
            bus,
            capacity_mw: cap,
            priority,
            failure_rate_per_year: 0.0,
            repair_rate_per_hour: 0.1,
        }
    }

    pub fn area(id: u32) -> ControlArea {
        ControlArea { id, contact_delay_min: 2.0, response_delay_min: 15.0 }
    }

    /// Buses 1..=n in area 1, no lines.
    pub fn buses(n: u32) -> NetworkModel {
        NetworkModel {
            base_mva: 100.0,
            areas: vec![area(1)],
            buses: (1..=n).map(|id| Bus { id, area: 1 }).collect(),
            lines: vec![],
            generators: vec![],
            loads: vec![],
            params: Params::default(),
        }
    }

    pub fn triangle() -> NetworkModel {
        let mut m = buses(3);
        m.lines = vec![line(1, 1, 2, 0.1, 100.0), line(2, 2, 3, 0.1, 100.0), line(3, 1, 3, 0.1, 100.0)];
        m
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn well_formed_two_bus_model_has_empty_report() {
        let mut m = buses(2);
        m.lines.push(line(1, 1, 2, 0.1, 100.0));
        m.generators.push(gen(1, 1, 100.0, 1));
        m.loads.push(Load { id: 1, bus: 2, peak_demand_mw: 80.0 });
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn self_loop_is_reported() {
        let mut m = buses(2);
        m.lines.push(line(7, 2, 2, 0.1, 100.0));
        assert!(validate(&m).contains(&Violation::SelfLoop { line: 7 }));
    }

    #[test]
    fn dangling_generator_bus_is_reported() {
        let mut m = buses(2);
        m.generators.push(gen(4, 9, 100.0, 1));
        assert!(validate(&m).contains(&Violation::UnknownBus {
            kind: Component::Generator,
            id: 4,
            bus: 9
        }));
    }

    #[test]
    fn duplicate_ids_and_bad_numbers_are_reported() {
        let mut m = buses(2);
        m.buses.push(Bus { id: 2, area: 1 });
        m.lines.push(line(1, 1, 2, 0.0, -5.0));
        m.params.beta = 1.0;
        let r = validate(&m);
        assert!(r.contains(&Violation::DuplicateId { kind: Component::Bus, id: 2 }));
        assert!(r.iter().any(|v| matches!(v, Violation::NonPositive { field: "reactance", .. })));
        assert!(r.iter().any(|v| matches!(v, Violation::NonPositive { field: "rating", .. })));
        assert!(r.contains(&Violation::BadParam { name: "beta", value: 1.0 }));
        assert_eq!(validate(&m), r);
    }

    #[test]
    fn connected_network_is_one_island() {
        let net = Network::new(triangle()).unwrap();
        let islands = connected_components(&net, &Topology::all_in_service(3));
        assert_eq!(islands.members, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn isolating_a_vertex_gives_two_islands() {
        let net = Network::new(triangle()).unwrap();
        // Drop both lines at bus 1.
        let topo = net.topology_from_ids(&[2].into_iter().collect());
        let islands = connected_components(&net, &topo);
        assert_eq!(islands.members, vec![vec![0], vec![1, 2]]);
        assert_eq!(islands.island_of, vec![0, 1, 1]);
    }

    #[test]
    fn island_balance_sums_available_units_and_connected_loads() {
        let mut m = buses(2);
        m.lines.push(line(1, 1, 2, 0.1, 100.0));
        m.generators.push(gen(1, 1, 80.0, 1));
        m.generators.push(gen(2, 2, 50.0, 1));
        m.loads.push(Load { id: 1, bus: 2, peak_demand_mw: 100.0 });
        let net = Network::new(m).unwrap();
        let island = [0, 1];
        let b = island_balance(&net, &island, &[true, false], &[100.0]);
        assert_eq!((b.available_capacity, b.connected_demand), (80.0, 100.0));
        let b = island_balance(&net, &island, &[false, false], &[100.0]);
        assert_eq!((b.available_capacity, b.connected_demand), (0.0, 100.0));
        let b = island_balance(&net, &island, &[true, true], &[0.0]);
        assert_eq!((b.available_capacity, b.connected_demand), (130.0, 0.0));
    }

    #[test]
    fn responsibility_defaults_to_lower_area() {
        let mut m = buses(2);
        m.areas.push(area(2));
        m.buses[1].area = 2;
        m.lines.push(line(1, 2, 1, 0.1, 100.0));
        let net = Network::new(m).unwrap();
        assert!(net.is_tie_line(0));
        assert_eq!(net.area(net.line_owner(0)).id, 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_model(n: u32, edges: &[(u32, u32)]) -> NetworkModel {
            let mut m = buses(n);
            for (k, &(a, b)) in edges.iter().enumerate() {
                let (a, b) = (a % n + 1, b % n + 1);
                if a != b {
                    m.lines.push(line(k as u32 + 1, a, b, 0.1, 100.0));
                }
            }
            m
        }

        proptest! {
            #[test]
            fn islands_partition_buses_and_respond_monotonically(
                n in 2u32..15,
                edges in prop::collection::vec((0u32..100, 0u32..100), 0..30),
                drop in 0usize..30,
            ) {
                let net = Network::new(random_model(n, &edges)).unwrap();
                let full = Topology::all_in_service(net.n_lines());
                let islands = connected_components(&net, &full);
                let mut seen = vec![0; net.n_buses()];
                for g in &islands.members {
                    for &b in g { seen[b] += 1; }
                }
                prop_assert!(seen.iter().all(|&c| c == 1));
                if net.n_lines() > 0 {
                    let mut cut = full.clone();
                    cut.in_service[drop % net.n_lines()] = false;
                    let fewer = connected_components(&net, &cut);
                    prop_assert!(fewer.len() >= islands.len());
                    prop_assert!(fewer.len() <= islands.len() + 1);
                }
            }
        }
    }
}
