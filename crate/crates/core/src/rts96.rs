//! The three-area IEEE Reliability Test System 1996.
//!
//! Each area is a copy of the 24-bus single-area system (buses `a01..a24`
//! for area `a`); area 3 carries an extra bus 325. The areas are joined by
//! five interconnections. Generator and branch reliability data, bus loads
//! and the weekly, daily and hourly load shape come from the published test
//! system tables. The HVDC link between areas 1 and 3 is not modelled.

use crate::error::Result;
use crate::model::{Bus, ControlArea, Generator, Line, Load, LoadProfile, NetworkModel, Params};

pub const AREA_PEAK_MW: f64 = 2850.0;
pub const HOURS: usize = 52 * 7 * 24;
pub const RECLOSE_DELAY_H: f64 = 1.0;
pub const CONTACT_DELAY_MIN: f64 = 2.0;
pub const RESPONSE_DELAY_MIN: f64 = 15.0;

/// (from, to, permanent outages per year, outage duration h, reactance pu,
/// continuous rating MVA), buses numbered 1..24 within the area.
const AREA_BRANCHES: [(u32, u32, f64, f64, f64, f64); 38] = [
    (1, 2, 0.24, 16.0, 0.0139, 175.0),
    (1, 3, 0.51, 10.0, 0.2112, 175.0),
    (1, 5, 0.33, 10.0, 0.0845, 175.0),
    (2, 4, 0.39, 10.0, 0.1267, 175.0),
    (2, 6, 0.48, 10.0, 0.1920, 175.0),
    (3, 9, 0.38, 10.0, 0.1190, 175.0),
    (3, 24, 0.02, 768.0, 0.0839, 400.0),
    (4, 9, 0.36, 10.0, 0.1037, 175.0),
    (5, 10, 0.34, 10.0, 0.0883, 175.0),
    (6, 10, 0.33, 35.0, 0.0605, 175.0),
    (7, 8, 0.30, 10.0, 0.0614, 175.0),
    (8, 9, 0.44, 10.0, 0.1651, 175.0),
    (8, 10, 0.44, 10.0, 0.1651, 175.0),
    (9, 11, 0.02, 768.0, 0.0839, 400.0),
    (9, 12, 0.02, 768.0, 0.0839, 400.0),
    (10, 11, 0.02, 768.0, 0.0839, 400.0),
    (10, 12, 0.02, 768.0, 0.0839, 400.0),
    (11, 13, 0.40, 11.0, 0.0476, 500.0),
    (11, 14, 0.39, 11.0, 0.0418, 500.0),
    (12, 13, 0.40, 11.0, 0.0476, 500.0),
    (12, 23, 0.52, 11.0, 0.0966, 500.0),
    (13, 23, 0.49, 11.0, 0.0865, 500.0),
    (14, 16, 0.38, 11.0, 0.0389, 500.0),
    (15, 16, 0.33, 11.0, 0.0173, 500.0),
    (15, 21, 0.41, 11.0, 0.0490, 500.0),
    (15, 21, 0.41, 11.0, 0.0490, 500.0),
    (15, 24, 0.41, 11.0, 0.0519, 500.0),
    (16, 17, 0.35, 11.0, 0.0259, 500.0),
    (16, 19, 0.34, 11.0, 0.0231, 500.0),
    (17, 18, 0.32, 11.0, 0.0144, 500.0),
    (17, 22, 0.54, 11.0, 0.1053, 500.0),
    (18, 21, 0.35, 11.0, 0.0259, 500.0),
    (18, 21, 0.35, 11.0, 0.0259, 500.0),
    (19, 20, 0.38, 11.0, 0.0396, 500.0),
    (19, 20, 0.38, 11.0, 0.0396, 500.0),
    (20, 23, 0.34, 11.0, 0.0216, 500.0),
    (20, 23, 0.34, 11.0, 0.0216, 500.0),
    (21, 22, 0.45, 11.0, 0.0678, 500.0),
];

/// Branches beyond the three area copies, full bus numbers.
const EXTRA_BRANCHES: [(u32, u32, f64, f64, f64, f64); 6] = [
    (107, 203, 0.51, 10.0, 0.1610, 175.0),
    (113, 215, 0.52, 11.0, 0.0750, 500.0),
    (123, 217, 0.49, 11.0, 0.0740, 500.0),
    (121, 325, 0.52, 11.0, 0.0970, 500.0),
    (223, 318, 0.51, 11.0, 0.1040, 500.0),
    (323, 325, 0.02, 768.0, 0.0839, 400.0),
];

/// (bus within the area, number of units, unit size MW).
const AREA_UNITS: [(u32, usize, f64); 14] = [
    (1, 2, 20.0),
    (1, 2, 76.0),
    (2, 2, 20.0),
    (2, 2, 76.0),
    (7, 3, 100.0),
    (13, 3, 197.0),
    (15, 5, 12.0),
    (15, 1, 155.0),
    (16, 1, 155.0),
    (18, 1, 400.0),
    (21, 1, 400.0),
    (22, 6, 50.0),
    (23, 2, 155.0),
    (23, 1, 350.0),
];

/// Unit size MW -> (dispatch priority, MTTF h, MTTR h).
fn unit_data(size: f64) -> (u32, f64, f64) {
    match size as u32 {
        50 => (1, 1980.0, 20.0),
        400 => (2, 1100.0, 150.0),
        350 => (3, 1150.0, 100.0),
        155 => (4, 960.0, 40.0),
        76 => (5, 1960.0, 40.0),
        197 => (6, 950.0, 50.0),
        100 => (7, 1200.0, 50.0),
        12 => (8, 2940.0, 60.0),
        20 => (9, 450.0, 50.0),
        _ => unreachable!("no unit of size {size}"),
    }
}

/// (bus within the area, peak demand MW); sums to 2850 MW.
const AREA_LOADS: [(u32, f64); 17] = [
    (1, 108.0),
    (2, 97.0),
    (3, 180.0),
    (4, 74.0),
    (5, 71.0),
    (6, 136.0),
    (7, 125.0),
    (8, 171.0),
    (9, 175.0),
    (10, 195.0),
    (13, 265.0),
    (14, 194.0),
    (15, 317.0),
    (16, 100.0),
    (18, 333.0),
    (19, 181.0),
    (20, 128.0),
];

/// Weekly peak as percent of the annual peak, weeks 1..52.
pub const WEEKLY_PEAK: [f64; 52] = [
    86.2, 90.0, 87.8, 83.4, 88.0, 84.1, 83.2, 80.6, 74.0, 73.7, 71.5, 72.7, 70.4, 75.0, 72.1, 80.0, 75.4, 83.7,
    87.0, 88.0, 85.6, 81.1, 90.0, 88.7, 89.6, 86.1, 75.5, 81.6, 80.1, 88.0, 72.2, 77.6, 80.0, 72.9, 72.6, 70.5,
    78.0, 69.5, 72.4, 72.4, 74.3, 74.4, 80.0, 88.1, 88.5, 90.9, 94.0, 89.0, 94.2, 97.0, 100.0, 95.2,
];

/// Daily peak as percent of the weekly peak, Monday first.
pub const DAILY_PEAK: [f64; 7] = [93.0, 100.0, 98.0, 96.0, 94.0, 77.0, 75.0];

const WINTER_WEEKDAY: [f64; 24] = [
    67.0, 63.0, 60.0, 59.0, 59.0, 60.0, 74.0, 86.0, 95.0, 96.0, 96.0, 95.0, 95.0, 95.0, 93.0, 94.0, 99.0, 100.0,
    100.0, 96.0, 91.0, 83.0, 73.0, 63.0,
];
const WINTER_WEEKEND: [f64; 24] = [
    78.0, 72.0, 68.0, 66.0, 64.0, 65.0, 66.0, 70.0, 80.0, 88.0, 90.0, 91.0, 90.0, 88.0, 87.0, 87.0, 91.0, 100.0,
    99.0, 97.0, 94.0, 92.0, 87.0, 81.0,
];
const SUMMER_WEEKDAY: [f64; 24] = [
    64.0, 60.0, 58.0, 56.0, 56.0, 58.0, 64.0, 76.0, 87.0, 95.0, 99.0, 100.0, 99.0, 100.0, 100.0, 97.0, 96.0, 96.0,
    93.0, 92.0, 92.0, 93.0, 87.0, 72.0,
];
const SUMMER_WEEKEND: [f64; 24] = [
    74.0, 70.0, 66.0, 65.0, 64.0, 62.0, 62.0, 66.0, 81.0, 86.0, 91.0, 93.0, 93.0, 92.0, 91.0, 91.0, 92.0, 94.0,
    95.0, 95.0, 100.0, 93.0, 88.0, 80.0,
];
const SPRING_FALL_WEEKDAY: [f64; 24] = [
    63.0, 62.0, 60.0, 58.0, 59.0, 65.0, 72.0, 85.0, 95.0, 99.0, 100.0, 99.0, 93.0, 92.0, 90.0, 88.0, 90.0, 92.0,
    96.0, 98.0, 96.0, 90.0, 80.0, 70.0,
];
const SPRING_FALL_WEEKEND: [f64; 24] = [
    75.0, 73.0, 69.0, 66.0, 65.0, 65.0, 68.0, 74.0, 83.0, 89.0, 92.0, 94.0, 91.0, 90.0, 90.0, 86.0, 85.0, 88.0,
    92.0, 100.0, 97.0, 95.0, 90.0, 85.0,
];

/// Hourly percent of the daily peak for a week (1-based) and weekday
/// (0 = Monday).
pub fn hourly_shape(week: usize, day: usize) -> &'static [f64; 24] {
    let weekend = day >= 5;
    match week {
        1..=8 | 44..=52 => {
            if weekend {
                &WINTER_WEEKEND
            } else {
                &WINTER_WEEKDAY
            }
        }
        18..=30 => {
            if weekend {
                &SUMMER_WEEKEND
            } else {
                &SUMMER_WEEKDAY
            }
        }
        _ => {
            if weekend {
                &SPRING_FALL_WEEKEND
            } else {
                &SPRING_FALL_WEEKDAY
            }
        }
    }
}

fn bus(area: u32, local: u32) -> u32 {
    area * 100 + local
}

pub fn model() -> NetworkModel {
    let mut m = NetworkModel {
        base_mva: 100.0,
        areas: (1..=3)
            .map(|id| ControlArea { id, contact_delay_min: CONTACT_DELAY_MIN, response_delay_min: RESPONSE_DELAY_MIN })
            .collect(),
        buses: Vec::new(),
        lines: Vec::new(),
        generators: Vec::new(),
        loads: Vec::new(),
        params: Params::default(),
    };
    for a in 1..=3 {
        m.buses.extend((1..=24).map(|k| Bus { id: bus(a, k), area: a }));
    }
    m.buses.push(Bus { id: 325, area: 3 });

    let branch = |id: u32, from: u32, to: u32, rate: f64, dur: f64, x: f64, rating: f64| Line {
        id,
        from_bus: from,
        to_bus: to,
        reactance_pu: x,
        rating_mw: rating,
        failure_rate_per_year: rate,
        repair_rate_per_hour: 1.0 / dur,
        reclose_delay_h: RECLOSE_DELAY_H,
        responsible_area: None,
    };
    for a in 1..=3 {
        for &(f, t, rate, dur, x, rating) in &AREA_BRANCHES {
            let id = m.lines.len() as u32 + 1;
            m.lines.push(branch(id, bus(a, f), bus(a, t), rate, dur, x, rating));
        }
    }
    for &(f, t, rate, dur, x, rating) in &EXTRA_BRANCHES {
        let id = m.lines.len() as u32 + 1;
        m.lines.push(branch(id, f, t, rate, dur, x, rating));
    }

    for a in 1..=3 {
        for &(local, count, size) in &AREA_UNITS {
            let (priority, mttf, mttr) = unit_data(size);
            for _ in 0..count {
                m.generators.push(Generator {
                    id: m.generators.len() as u32 + 1,
                    bus: bus(a, local),
                    capacity_mw: size,
                    priority,
                    failure_rate_per_year: 8760.0 / mttf,
                    repair_rate_per_hour: 1.0 / mttr,
                });
            }
        }
        for &(local, peak) in &AREA_LOADS {
            m.loads.push(Load { id: m.loads.len() as u32 + 1, bus: bus(a, local), peak_demand_mw: peak });
        }
    }
    m
}

/// 8736 hourly load factors, identical for the three areas; the year starts
/// on a Monday.
pub fn profile() -> Result<LoadProfile> {
    let mut values = Vec::with_capacity(HOURS * 3);
    for week in 1..=52 {
        for day in 0..7 {
            let shape = hourly_shape(week, day);
            for pct in shape {
                let g = WEEKLY_PEAK[week - 1] * DAILY_PEAK[day] * pct / 1e6;
                values.extend([g; 3]);
            }
        }
    }
    LoadProfile::new(3, values)
}
