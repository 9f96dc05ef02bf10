//! Text formats: network files, demand profiles and the results bundle.
//!
//! All formats start with a `FORMAT v1` line. Network and profile files are
//! whitespace separated; `#` starts a comment. Network files are written in
//! a canonical form (sections in fixed order, shortest round-trip numbers)
//! so that parse, write, parse gives back an identical model. Result files
//! print every number with 6 significant digits.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::engine::{EventCounts, ReplicationResult};
use crate::error::{Error, Result};
use crate::fsm::OutageCause;
use crate::model::{validate, Bus, ControlArea, Generator, Line, Load, LoadProfile, Network, NetworkModel, Params};
use crate::operator::OperatorConfig;
use crate::powerflow::FlowMethod;
use crate::stats::{default_thresholds, SizeMetric, StatsAccumulator};

pub const FORMAT_LINE: &str = "FORMAT v1";

/// `%g`-style rendering with 6 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x.is_infinite() { format!("{}inf", if x < 0.0 { "-" } else { "" }) } else { "0".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

struct Reader<'a> {
    path: &'a Path,
}

impl Reader<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), line, msg: msg.into() }
    }

    fn num<T: std::str::FromStr>(&self, line: usize, what: &str, tok: &str) -> Result<T> {
        tok.parse().map_err(|_| self.err(line, format!("cannot read {what} from '{tok}'")))
    }

    fn fields<'t>(&self, line: usize, toks: &'t [&'t str], names: &[&str]) -> Result<&'t [&'t str]> {
        if toks.len() != names.len() {
            return Err(self.err(
                line,
                format!("expected {} fields ({}), found {}", names.len(), names.join(" "), toks.len()),
            ));
        }
        Ok(toks)
    }
}

/// Numbered, comment-stripped, non-empty lines.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let s = raw.split('#').next().unwrap_or("").trim();
        (!s.is_empty()).then_some((i + 1, s))
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Area,
    Bus,
    Line,
    Gen,
    Load,
    Params,
}

pub fn parse_network(path: &Path) -> Result<NetworkModel> {
    let text = fs::read_to_string(path)?;
    parse_network_str(&text, path)
}

/// Parses and validates a network file's contents; `path` is only used in
/// error messages.
pub fn parse_network_str(text: &str, path: &Path) -> Result<NetworkModel> {
    let r = Reader { path };
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, FORMAT_LINE)) => {}
        Some((n, other)) => return Err(r.err(n, format!("expected '{FORMAT_LINE}', found '{other}'"))),
        None => return Err(r.err(1, "empty network file")),
    }
    let mut model = NetworkModel {
        base_mva: 100.0,
        areas: Vec::new(),
        buses: Vec::new(),
        lines: Vec::new(),
        generators: Vec::new(),
        loads: Vec::new(),
        params: Params::default(),
    };
    let mut seen: [HashSet<u32>; 5] = Default::default();
    let mut section = Section::None;
    let mut base_seen = false;
    for (n, s) in lines {
        if s.starts_with('[') {
            section = match s {
                "[AREA]" => Section::Area,
                "[BUS]" => Section::Bus,
                "[LINE]" => Section::Line,
                "[GEN]" => Section::Gen,
                "[LOAD]" => Section::Load,
                "[PARAMS]" => Section::Params,
                _ => return Err(r.err(n, format!("unknown section {s}"))),
            };
            continue;
        }
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks[0] == "BASE_MVA" {
            let f = r.fields(n, &toks, &["BASE_MVA", "value"])?;
            model.base_mva = r.num(n, "base MVA", f[1])?;
            base_seen = true;
            continue;
        }
        let mut unique = |kind: usize, name: &str, id: u32| -> Result<u32> {
            if seen[kind].insert(id) {
                Ok(id)
            } else {
                Err(r.err(n, format!("duplicate {name} id {id}")))
            }
        };
        match section {
            Section::None => return Err(r.err(n, format!("data outside a section: '{s}'"))),
            Section::Area => {
                let f = r.fields(n, &toks, &["id", "dtc_min", "dtr_min"])?;
                model.areas.push(ControlArea {
                    id: unique(0, "area", r.num(n, "area id", f[0])?)?,
                    contact_delay_min: r.num(n, "contact delay", f[1])?,
                    response_delay_min: r.num(n, "response delay", f[2])?,
                });
            }
            Section::Bus => {
                let f = r.fields(n, &toks, &["id", "area"])?;
                model.buses.push(Bus { id: unique(1, "bus", r.num(n, "bus id", f[0])?)?, area: r.num(n, "area", f[1])? });
            }
            Section::Line => {
                let f = r.fields(
                    n,
                    &toks,
                    &["id", "from", "to", "x_pu", "pmax_mw", "lambda_per_y", "mu_per_h", "reclose_h", "responsible_area"],
                )?;
                model.lines.push(Line {
                    id: unique(2, "line", r.num(n, "line id", f[0])?)?,
                    from_bus: r.num(n, "from bus", f[1])?,
                    to_bus: r.num(n, "to bus", f[2])?,
                    reactance_pu: r.num(n, "reactance", f[3])?,
                    rating_mw: r.num(n, "rating", f[4])?,
                    failure_rate_per_year: r.num(n, "failure rate", f[5])?,
                    repair_rate_per_hour: r.num(n, "repair rate", f[6])?,
                    reclose_delay_h: r.num(n, "reclose delay", f[7])?,
                    responsible_area: if f[8] == "-" { None } else { Some(r.num(n, "responsible area", f[8])?) },
                });
            }
            Section::Gen => {
                let f = r.fields(n, &toks, &["id", "bus", "pmax_mw", "priority", "lambda_per_y", "mu_per_h"])?;
                model.generators.push(Generator {
                    id: unique(3, "generator", r.num(n, "generator id", f[0])?)?,
                    bus: r.num(n, "bus", f[1])?,
                    capacity_mw: r.num(n, "capacity", f[2])?,
                    priority: r.num(n, "priority", f[3])?,
                    failure_rate_per_year: r.num(n, "failure rate", f[4])?,
                    repair_rate_per_hour: r.num(n, "repair rate", f[5])?,
                });
            }
            Section::Load => {
                let f = r.fields(n, &toks, &["id", "bus", "dmax_mw"])?;
                model.loads.push(Load {
                    id: unique(4, "load", r.num(n, "load id", f[0])?)?,
                    bus: r.num(n, "bus", f[1])?,
                    peak_demand_mw: r.num(n, "peak demand", f[2])?,
                });
            }
            Section::Params => {
                let f = r.fields(n, &toks, &["name", "value"])?;
                let v: f64 = r.num(n, f[0], f[1])?;
                match f[0] {
                    "beta" => model.params.beta = v,
                    "eta" => model.params.eta = v,
                    "xi" => model.params.xi = v,
                    "W" => model.params.shed_weight = v,
                    "sigma" => model.params.sigma = v,
                    other => return Err(r.err(n, format!("unknown parameter '{other}'"))),
                }
            }
        }
    }
    if !base_seen {
        log::debug!("{}: no BASE_MVA line, using 100", path.display());
    }
    let violations = validate(&model);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    Ok(model)
}

/// Canonical text form of a model.
pub fn write_network(model: &NetworkModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{FORMAT_LINE}");
    let _ = writeln!(s, "BASE_MVA {}", model.base_mva);
    let _ = writeln!(s, "[AREA]\n# id dtc_min dtr_min");
    for a in &model.areas {
        let _ = writeln!(s, "{} {} {}", a.id, a.contact_delay_min, a.response_delay_min);
    }
    let _ = writeln!(s, "[BUS]\n# id area");
    for b in &model.buses {
        let _ = writeln!(s, "{} {}", b.id, b.area);
    }
    let _ = writeln!(s, "[LINE]\n# id from to x_pu pmax_mw lambda_per_y mu_per_h reclose_h responsible_area");
    for l in &model.lines {
        let owner = l.responsible_area.map_or_else(|| "-".to_string(), |a| a.to_string());
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            l.id,
            l.from_bus,
            l.to_bus,
            l.reactance_pu,
            l.rating_mw,
            l.failure_rate_per_year,
            l.repair_rate_per_hour,
            l.reclose_delay_h,
            owner
        );
    }
    let _ = writeln!(s, "[GEN]\n# id bus pmax_mw priority lambda_per_y mu_per_h");
    for g in &model.generators {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            g.id, g.bus, g.capacity_mw, g.priority, g.failure_rate_per_year, g.repair_rate_per_hour
        );
    }
    let _ = writeln!(s, "[LOAD]\n# id bus dmax_mw");
    for l in &model.loads {
        let _ = writeln!(s, "{} {} {}", l.id, l.bus, l.peak_demand_mw);
    }
    let p = &model.params;
    let _ = writeln!(s, "[PARAMS]");
    let _ = writeln!(s, "beta {}\neta {}\nxi {}\nW {}\nsigma {}", p.beta, p.eta, p.xi, p.shed_weight, p.sigma);
    s
}

/// SHA-256 of the canonical text form.
pub fn model_hash(model: &NetworkModel) -> String {
    hex::encode(Sha256::digest(write_network(model).as_bytes()))
}

pub fn profile_hash(profile: &LoadProfile) -> String {
    hex::encode(Sha256::digest(write_profile(profile).as_bytes()))
}

pub fn parse_profile(path: &Path, n_areas: usize) -> Result<LoadProfile> {
    let text = fs::read_to_string(path)?;
    parse_profile_str(&text, path, n_areas)
}

/// One row per hour, one column per area in area order. An optional
/// `AREAS k` line after the format line states the column count.
pub fn parse_profile_str(text: &str, path: &Path, n_areas: usize) -> Result<LoadProfile> {
    let r = Reader { path };
    let mut lines = content_lines(text).peekable();
    match lines.next() {
        Some((_, FORMAT_LINE)) => {}
        Some((n, other)) => return Err(r.err(n, format!("expected '{FORMAT_LINE}', found '{other}'"))),
        None => return Err(r.err(1, "empty profile file")),
    }
    if let Some(&(n, s)) = lines.peek() {
        if let Some(k) = s.strip_prefix("AREAS") {
            let k: usize = r.num(n, "area count", k.trim())?;
            if k != n_areas {
                return Err(r.err(n, format!("profile has {k} areas, network has {n_areas}")));
            }
            lines.next();
        }
    }
    let mut values = Vec::new();
    for (n, s) in lines {
        let row: Vec<&str> = s.split_whitespace().collect();
        if row.len() != n_areas {
            return Err(r.err(n, format!("expected {n_areas} values, found {}", row.len())));
        }
        for tok in row {
            let v: f64 = r.num(n, "load factor", tok)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(r.err(n, format!("load factor {v} outside [0, 1]")));
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(r.err(1, "profile has no hours"));
    }
    LoadProfile::new(n_areas, values)
}

pub fn write_profile(profile: &LoadProfile) -> String {
    let mut s = String::with_capacity(profile.hours() * 8 * profile.n_areas());
    let _ = writeln!(s, "{FORMAT_LINE}\nAREAS {}", profile.n_areas());
    for h in 0..profile.hours() {
        let row: Vec<String> = profile.row(h).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunHeader {
    pub seed: u64,
    pub years: u64,
    pub loading_level: f64,
    pub operator: OperatorConfig,
    pub size_metric: SizeMetric,
    pub confidence: f64,
    pub flow_method: FlowMethod,
    /// Hash of the unscaled network model.
    pub model_hash: String,
    pub profile_hash: String,
    pub profile_hours: usize,
}

impl RunHeader {
    pub fn to_text(&self) -> String {
        let op = &self.operator;
        let response = match (op.enabled, op.response_delay_min) {
            (false, _) => "-".to_string(),
            (true, Some(r)) => fmt_sig(r),
            (true, None) => "per-area".to_string(),
        };
        format!(
            "{FORMAT_LINE}\nseed {}\nyears {}\nloading_level {}\noperator {}\noperator_response_min {}\n\
             size_metric {}\nconfidence {}\nflow_method {}\nmodel_hash {}\nprofile_hash {}\nprofile_hours {}\n",
            self.seed,
            self.years,
            fmt_sig(self.loading_level),
            if op.enabled { "enabled" } else { "disabled" },
            response,
            self.size_metric.label(),
            fmt_sig(self.confidence),
            match self.flow_method {
                FlowMethod::Direct => "direct",
                FlowMethod::Iterative => "iterative",
            },
            self.model_hash,
            self.profile_hash,
            self.profile_hours,
        )
    }
}

/// Aggregated results of a Monte Carlo run, ready to be written out.
#[derive(Debug, Clone)]
pub struct ResultsBundle {
    pub header: RunHeader,
    pub stats: StatsAccumulator,
    pub counts: EventCounts,
    pub aborted: Vec<(u64, String)>,
    pub overload_alarms: Vec<u64>,
    pub integrated_unserved_mwh: f64,
}

impl ResultsBundle {
    pub fn new(header: RunHeader, n_lines: usize, results: &[ReplicationResult]) -> Self {
        let mut stats = StatsAccumulator::default();
        let mut counts = EventCounts::default();
        let mut aborted = Vec::new();
        let mut overload_alarms = vec![0; n_lines];
        let mut integrated = 0.0;
        for r in results {
            if let Some(msg) = &r.aborted {
                stats.add_aborted();
                aborted.push((r.year, msg.clone()));
                continue;
            }
            stats.add_year(&r.records);
            counts.add(&r.counts);
            integrated += r.integrated_unserved_mwh;
            for (a, b) in overload_alarms.iter_mut().zip(&r.overload_alarms) {
                *a += b;
            }
        }
        Self { header, stats, counts, aborted, overload_alarms, integrated_unserved_mwh: integrated }
    }

    pub fn events_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {FORMAT_LINE}");
        let _ = writeln!(
            s,
            "year,start_h,end_h,energy_MWh,energy_generation_inadequacy_MWh,energy_system_splitting_MWh,\
             energy_operator_intervention_MWh,max_unserved_MW,truncated"
        );
        for r in &self.stats.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.year,
                fmt_sig(r.start_h),
                fmt_sig(r.end_h),
                fmt_sig(r.energy()),
                fmt_sig(r.energy_by_cause[0]),
                fmt_sig(r.energy_by_cause[1]),
                fmt_sig(r.energy_by_cause[2]),
                fmt_sig(r.max_unserved_mw),
                u8::from(r.truncated)
            );
        }
        s
    }

    pub fn freq_csv(&self) -> Result<String> {
        let metric = self.header.size_metric;
        let mut s = String::new();
        let _ = writeln!(s, "# {FORMAT_LINE}");
        let _ = writeln!(s, "threshold,metric,Fc,lo90,hi90");
        if self.stats.n_years == 0 {
            return Ok(s);
        }
        let thresholds = default_thresholds(&self.stats.records, metric);
        let curve = self.stats.frequency_curve(&thresholds, metric, self.header.confidence)?;
        for k in 0..curve.thresholds.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt_sig(curve.thresholds[k]),
                metric.label(),
                fmt_sig(curve.fc[k]),
                fmt_sig(curve.lower[k]),
                fmt_sig(curve.upper[k])
            );
        }
        Ok(s)
    }

    pub fn overloads_csv(&self, net: &Network) -> String {
        let total: u64 = self.overload_alarms.iter().sum();
        let mut s = String::new();
        let _ = writeln!(s, "# {FORMAT_LINE}");
        let _ = writeln!(s, "line_id,alarms,h");
        for (l, &n) in self.overload_alarms.iter().enumerate() {
            let h = if total == 0 { 0.0 } else { n as f64 / total as f64 };
            let _ = writeln!(s, "{},{},{}", net.line(l).id, n, fmt_sig(h));
        }
        s
    }

    pub fn summary_text(&self) -> Result<String> {
        let mut s = String::new();
        let st = &self.stats;
        let _ = writeln!(s, "{FORMAT_LINE}");
        let _ = writeln!(s, "years_requested {}", self.header.years);
        let _ = writeln!(s, "years_completed {}", st.n_years);
        let _ = writeln!(s, "years_aborted {}", st.aborted);
        let eens = if st.n_years > 0 { st.eens_by_cause()? } else { [0.0; 3] };
        for cause in OutageCause::ALL {
            let _ = writeln!(s, "eens_{}_MWh_per_year {}", cause.label(), fmt_sig(eens[cause.index()]));
        }
        let _ = writeln!(s, "eens_total_MWh_per_year {}", fmt_sig(eens.iter().sum()));
        let _ = writeln!(s, "unserved_energy_integrated_MWh {}", fmt_sig(self.integrated_unserved_mwh));
        let _ = writeln!(s, "blackouts {}", st.records.len());
        let _ = writeln!(s, "blackouts_truncated {}", st.records.iter().filter(|r| r.truncated).count());
        let c = &self.counts;
        for (name, v) in [
            ("events", c.events),
            ("generator_outages", c.generator_outages),
            ("line_failures", c.line_failures),
            ("line_trips", c.trips),
            ("line_reconnections", c.reconnections),
            ("system_splits", c.splits),
            ("overload_alarms", c.alarms),
            ("operator_actions", c.operator_actions),
            ("lp_infeasible", c.lp_infeasible),
            ("load_disconnections", c.disconnections),
            ("load_restorations", c.restorations),
        ] {
            let _ = writeln!(s, "{name} {v}");
        }
        for (year, msg) in &self.aborted {
            let _ = writeln!(s, "aborted_year {year} {msg}");
        }
        Ok(s)
    }

    /// Writes header.txt, events.csv, freq.csv, summary.txt and
    /// overloads.csv into `dir`, creating it if needed.
    pub fn write(&self, net: &Network, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            ("header.txt", self.header.to_text()),
            ("events.csv", self.events_csv()),
            ("freq.csv", self.freq_csv()?),
            ("summary.txt", self.summary_text()?),
            ("overloads.csv", self.overloads_csv(net)),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body)?;
            written.push(p);
        }
        Ok(written)
    }
}
