//! Deterministic point-queue traffic simulation with a 1 s step.
//!
//! Vehicles enter on source links, traverse each link at free-flow speed and
//! then wait in a non-spatial queue at the stop line of the movement drawn
//! for them on arrival. A movement discharges at its saturation rate while
//! its phase shows green. Downstream capacity is unbounded.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{LinkId, Network};
use crate::observation::Observer;
use crate::seeding::{self, tag, StreamRng};
use crate::signal::{ActionSet, Controller, Decision, DecisionContext, Seconds, SignalProgram, SignalsConfig};

/// Arrival volume on one source link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDemand {
    pub source_link: LinkId,
    pub volume_vph: f64,
    /// Replaces the demand-wide profile for this source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<ProfileSegment>>,
}

/// Piecewise-constant volume multiplier in effect from `from_s` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSegment {
    pub from_s: u64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    pub sources: Vec<SourceDemand>,
    #[serde(default = "default_horizon")]
    pub horizon_s: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profile: Vec<ProfileSegment>,
}

fn default_horizon() -> u64 {
    3600
}

fn profile_scale(profile: &[ProfileSegment], t: u64) -> f64 {
    profile
        .iter()
        .filter(|s| s.from_s <= t)
        .max_by_key(|s| s.from_s)
        .map_or(1.0, |s| s.scale)
}

fn check_profile(profile: &[ProfileSegment], path: &str) -> Result<f64> {
    for (k, seg) in profile.iter().enumerate() {
        if !(seg.scale >= 0.0 && seg.scale.is_finite()) {
            return Err(Error::config(
                format!("{path}[{k}].scale"),
                format!("{} must be non-negative", seg.scale),
            ));
        }
    }
    Ok(profile.iter().map(|s| s.scale).fold(1.0f64, f64::max))
}

impl DemandSpec {
    /// Demand-wide multiplier at time `t`.
    pub fn scale_at(&self, t: u64) -> f64 {
        profile_scale(&self.profile, t)
    }

    /// Multiplier of source `k` at time `t`.
    pub fn source_scale_at(&self, k: usize, t: u64) -> f64 {
        match &self.sources[k].profile {
            Some(p) => profile_scale(p, t),
            None => self.scale_at(t),
        }
    }

    /// Same demand with every volume multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> DemandSpec {
        let mut out = self.clone();
        for s in &mut out.sources {
            s.volume_vph *= factor;
        }
        out
    }

    pub fn check(&self, network: &Network) -> Result<()> {
        if self.horizon_s == 0 {
            return Err(Error::config("demand.horizon_s", "horizon must be positive"));
        }
        let global_peak = check_profile(&self.profile, "demand.profile")?;
        for (k, s) in self.sources.iter().enumerate() {
            let path = format!("demand.sources[{k}]");
            let peak_scale = match &s.profile {
                Some(p) => check_profile(p, &format!("{path}.profile"))?,
                None => global_peak,
            };
            if !(s.volume_vph >= 0.0 && s.volume_vph.is_finite()) {
                return Err(Error::config(
                    format!("{path}.volume_vph"),
                    format!("{} must be non-negative", s.volume_vph),
                ));
            }
            if s.volume_vph * peak_scale >= 3600.0 {
                return Err(Error::config(
                    format!("{path}.volume_vph"),
                    "arrival rate must stay below one vehicle per step",
                ));
            }
            if !network.spec().source_links.contains(&s.source_link) {
                return Err(Error::config(
                    format!("{path}.source_link"),
                    format!("{} is not a source link", s.source_link),
                ));
            }
        }
        Ok(())
    }
}

/// Signal interval within a phase; always green, then yellow, then all-red.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interval {
    Green,
    Yellow,
    AllRed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalRuntime {
    pub phase: usize,
    pub interval: Interval,
    pub elapsed_in_interval: Seconds,
    /// Length of the current green interval.
    pub green_target: Seconds,
    pub program: SignalProgram,
    next_phase: usize,
    next_green: Seconds,
    awaiting: bool,
}

impl SignalRuntime {
    fn new(program: SignalProgram) -> Self {
        let green = program.greens[0];
        Self {
            phase: 0,
            interval: Interval::Green,
            elapsed_in_interval: 0,
            green_target: green,
            program,
            next_phase: 0,
            next_green: green,
            awaiting: false,
        }
    }

    pub fn is_green(&self) -> bool {
        self.interval == Interval::Green
    }

    /// Leaves green towards `next` and skips zero-length intervals.
    fn begin_clearance(&mut self, next: usize, green: Seconds) {
        self.next_phase = next;
        self.next_green = green;
        self.interval = Interval::Yellow;
        self.elapsed_in_interval = 0;
        self.settle();
    }

    fn settle(&mut self) {
        loop {
            match self.interval {
                Interval::Yellow if self.elapsed_in_interval >= self.program.yellow => {
                    self.interval = Interval::AllRed;
                    self.elapsed_in_interval = 0;
                }
                Interval::AllRed if self.elapsed_in_interval >= self.program.all_red => {
                    self.interval = Interval::Green;
                    self.phase = self.next_phase;
                    self.green_target = self.next_green;
                    self.elapsed_in_interval = 0;
                }
                _ => return,
            }
        }
    }

    /// Advances one second; returns true when the green interval just ran out.
    fn tick(&mut self) -> bool {
        self.elapsed_in_interval += 1;
        if self.interval == Interval::Green {
            if self.elapsed_in_interval >= self.green_target {
                self.awaiting = true;
                return true;
            }
            false
        } else {
            self.settle();
            false
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Link { link: usize, stop_time: u64 },
    Queue { movement: usize },
    Exited,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vehicle {
    pub id: u32,
    pub entry_time: u64,
    pub location: Location,
    pub cumulative_wait: u64,
    /// Free-flow traversal time of the links used so far.
    pub free_flow_time: u64,
    pub exit_time: Option<u64>,
}

/// Running totals from which a [`MetricsReport`] is derived.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsAccumulator {
    pub injected: u64,
    pub completed: u64,
    pub sum_travel_time: f64,
    pub sum_wait_time: f64,
    pub sum_delay: f64,
    /// Total queued vehicles after every step.
    pub queue_series: Vec<u32>,
}

impl MetricsAccumulator {
    /// Records one completed trip.
    pub fn record(&mut self, travel: f64, wait: f64, free_flow: f64) {
        self.completed += 1;
        self.sum_travel_time += travel;
        self.sum_wait_time += wait;
        self.sum_delay += travel - free_flow;
    }
}

/// Headline metrics over completed trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub completed: u64,
    pub injected: u64,
    /// Average travel time, s/veh.
    pub att: Option<f64>,
    /// Average waiting time, s/veh.
    pub awt: Option<f64>,
    /// Average delay over free-flow route time, s/veh.
    pub ad: Option<f64>,
    /// Completed vehicles per hour.
    pub vc: f64,
    pub horizon_s: u64,
}

pub fn metrics_report(acc: &MetricsAccumulator, horizon_s: u64) -> MetricsReport {
    let mean = |sum: f64| (acc.completed > 0).then(|| sum / acc.completed as f64);
    MetricsReport {
        completed: acc.completed,
        injected: acc.injected,
        att: mean(acc.sum_travel_time),
        awt: mean(acc.sum_wait_time),
        ad: mean(acc.sum_delay),
        vc: if horizon_s > 0 {
            acc.completed as f64 * 3600.0 / horizon_s as f64
        } else {
            0.0
        },
        horizon_s,
    }
}

/// Per-intersection counters used by the reward function. All are
/// cumulative since reset, except the two occupancy fields.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AgentCounters {
    /// Vehicle-seconds spent on the incoming links.
    pub travel_s: f64,
    /// Vehicle-seconds spent queued at the intersection.
    pub wait_s: f64,
    /// Vehicles discharged through the intersection.
    pub crossed: f64,
    /// Vehicles currently traversing the incoming links.
    pub moving: u64,
    /// Vehicles currently on the incoming links, moving or queued.
    pub present: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Enter,
    Queue,
    Release,
    Exit,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Enter => "enter",
            EventKind::Queue => "queue",
            EventKind::Release => "release",
            EventKind::Exit => "exit",
        })
    }
}

/// One line of the optional event log: `t,event,vehicle,location`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub t: u64,
    pub kind: EventKind,
    pub vehicle: u32,
    pub location: String,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.t, self.kind, self.vehicle, self.location)
    }
}

/// What happened during one step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepReport {
    pub clock: u64,
    pub injected: u32,
    pub joined: u32,
    pub released: u32,
    pub exited: u32,
    /// Agents whose green just ran out and who now owe a decision.
    pub decisions: Vec<usize>,
}

/// Dynamic world state.
#[derive(Debug, Clone)]
pub struct SimState {
    network: Arc<Network>,
    demand: DemandSpec,
    /// (link index, base rate per step) per source.
    sources: Vec<(usize, f64)>,
    ratios: Vec<f64>,
    clock: u64,
    vehicles: Vec<Vehicle>,
    on_link: Vec<VecDeque<u32>>,
    queues: Vec<VecDeque<u32>>,
    discharge_credit: Vec<f64>,
    signals: Vec<SignalRuntime>,
    pending: Vec<usize>,
    arrivals_rng: StreamRng,
    turns_rng: StreamRng,
    metrics: MetricsAccumulator,
    counters: Vec<AgentCounters>,
    movement_arrivals: Vec<u64>,
    in_transit: u64,
    queued: u64,
    exited: u64,
    events: Option<Vec<Event>>,
}

impl SimState {
    /// Empty network at t = 0 with every signal starting phase 0 green.
    pub fn reset(network: Arc<Network>, demand: &DemandSpec, signals: &SignalsConfig, seed: u64) -> Result<Self> {
        demand.check(&network)?;
        signals.check()?;
        let sources = demand
            .sources
            .iter()
            .map(|s| {
                let link = network.link_index(s.source_link).expect("checked source link");
                (link, s.volume_vph / 3600.0)
            })
            .collect();
        let signal_states = network
            .intersections
            .iter()
            .map(|n| SignalRuntime::new(signals.program(n.phases.len())))
            .collect();
        Ok(Self {
            ratios: network.base_ratios(),
            sources,
            demand: demand.clone(),
            clock: 0,
            vehicles: Vec::new(),
            on_link: vec![VecDeque::new(); network.links.len()],
            queues: vec![VecDeque::new(); network.movements.len()],
            discharge_credit: vec![0.0; network.movements.len()],
            signals: signal_states,
            pending: Vec::new(),
            arrivals_rng: seeding::stream(seed, &[tag::ARRIVALS]),
            turns_rng: seeding::stream(seed, &[tag::TURNS]),
            metrics: MetricsAccumulator::default(),
            counters: vec![AgentCounters::default(); network.intersections.len()],
            movement_arrivals: vec![0; network.movements.len()],
            in_transit: 0,
            queued: 0,
            exited: 0,
            events: None,
            network,
        })
    }

    /// Replaces the episode's turning ratios (indexed by movement).
    pub fn set_turning_ratios(&mut self, ratios: Vec<f64>) -> Result<()> {
        if ratios.len() != self.network.movements.len() {
            return Err(Error::Dimension(format!(
                "{} turning ratios for {} movements",
                ratios.len(),
                self.network.movements.len()
            )));
        }
        self.ratios = ratios;
        Ok(())
    }

    pub fn enable_event_log(&mut self) {
        self.events.get_or_insert_with(Vec::new);
    }

    pub fn events(&self) -> &[Event] {
        self.events.as_deref().unwrap_or(&[])
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.network
    }

    pub fn demand(&self) -> &DemandSpec {
        &self.demand
    }

    pub fn turning_ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn signals(&self) -> &[SignalRuntime] {
        &self.signals
    }

    pub fn signal(&self, agent: usize) -> &SignalRuntime {
        &self.signals[agent]
    }

    pub fn pending(&self) -> &[usize] {
        &self.pending
    }

    pub fn metrics(&self) -> &MetricsAccumulator {
        &self.metrics
    }

    pub fn counters(&self, agent: usize) -> AgentCounters {
        self.counters[agent]
    }

    /// Cumulative stop-line arrivals per movement.
    pub fn movement_arrivals(&self) -> &[u64] {
        &self.movement_arrivals
    }

    pub fn queue_len(&self, movement: usize) -> usize {
        self.queues[movement].len()
    }

    pub fn queue_lengths(&self) -> Vec<usize> {
        self.queues.iter().map(VecDeque::len).collect()
    }

    /// Vehicle ids queued at a movement, front first.
    pub fn queue(&self, movement: usize) -> impl Iterator<Item = u32> + '_ {
        self.queues[movement].iter().copied()
    }

    /// Vehicles traversing `link` whose distance to the stop line is within
    /// its detection range.
    pub fn approaching_in_range(&self, link: usize) -> usize {
        let l = &self.network.links[link];
        self.on_link[link]
            .iter()
            .take_while(|&&v| match self.vehicles[v as usize].location {
                Location::Link { stop_time, .. } => {
                    (stop_time.saturating_sub(self.clock)) as f64 * l.speed <= l.detection_range_m + 1e-9
                }
                _ => false,
            })
            .count()
    }

    /// `(injected, exited, in transit, queued)`.
    pub fn population(&self) -> (u64, u64, u64, u64) {
        (self.metrics.injected, self.exited, self.in_transit, self.queued)
    }

    pub fn report(&self) -> MetricsReport {
        metrics_report(&self.metrics, self.clock.max(1))
    }

    fn log(&mut self, t: u64, kind: EventKind, vehicle: u32, location: impl FnOnce() -> String) {
        if let Some(events) = self.events.as_mut() {
            events.push(Event {
                t,
                kind,
                vehicle,
                location: location(),
            });
        }
    }

    fn place_on_link(&mut self, vehicle: u32, link: usize, t: u64) {
        let steps = self.network.links[link].traversal_steps;
        let v = &mut self.vehicles[vehicle as usize];
        v.location = Location::Link {
            link,
            stop_time: t + steps,
        };
        v.free_flow_time += steps;
        self.on_link[link].push_back(vehicle);
        self.in_transit += 1;
    }

    fn sample_movement(&mut self, link: usize) -> usize {
        let movements = &self.network.links[link].movements;
        let u: f64 = self.turns_rng.gen();
        let mut cumulative = 0.0;
        let mut last_positive = movements[0];
        for &m in movements {
            if self.ratios[m] > 0.0 {
                last_positive = m;
            }
            cumulative += self.ratios[m];
            if u < cumulative {
                return m;
            }
        }
        last_positive
    }

    fn finish(&mut self, vehicle: u32, t: u64) {
        let v = &mut self.vehicles[vehicle as usize];
        v.location = Location::Exited;
        v.exit_time = Some(t);
        let travel = (t - v.entry_time) as f64;
        let (wait, ff) = (v.cumulative_wait as f64, v.free_flow_time as f64);
        self.metrics.record(travel, wait, ff);
        self.exited += 1;
    }

    /// Advances the clock by one second.
    ///
    /// Fails if a decision requested by the previous step is still open.
    pub fn step(&mut self) -> Result<StepReport> {
        if !self.pending.is_empty() {
            return Err(Error::Protocol(format!(
                "step called with unresolved decisions for agents {:?}",
                self.pending
            )));
        }
        let t = self.clock;
        let now = t + 1;
        let mut report = StepReport {
            clock: now,
            ..StepReport::default()
        };

        // Arrivals: one Bernoulli draw per source per step.
        for k in 0..self.sources.len() {
            let (link, rate) = self.sources[k];
            let scale = self.demand.source_scale_at(k, t);
            let u: f64 = self.arrivals_rng.gen();
            if u < rate * scale {
                let id = self.vehicles.len() as u32;
                self.vehicles.push(Vehicle {
                    id,
                    entry_time: t,
                    location: Location::Exited,
                    cumulative_wait: 0,
                    free_flow_time: 0,
                    exit_time: None,
                });
                self.metrics.injected += 1;
                self.place_on_link(id, link, t);
                let lid = self.network.links[link].id.0;
                self.log(t, EventKind::Enter, id, || format!("link:{lid}"));
                report.injected += 1;
            }
        }

        // Traversal: vehicles reaching the stop line pick a movement.
        for link in 0..self.on_link.len() {
            while let Some(&v) = self.on_link[link].front() {
                let Location::Link { stop_time, .. } = self.vehicles[v as usize].location else {
                    return Err(self.invariant(format!("vehicle {v} on link {link} has no link location")));
                };
                if stop_time > now {
                    break;
                }
                self.on_link[link].pop_front();
                self.in_transit -= 1;
                if self.network.links[link].movements.is_empty() {
                    self.finish(v, now);
                    self.log(now, EventKind::Exit, v, || "boundary".to_string());
                    report.exited += 1;
                    continue;
                }
                let m = self.sample_movement(link);
                self.vehicles[v as usize].location = Location::Queue { movement: m };
                self.queues[m].push_back(v);
                self.queued += 1;
                self.movement_arrivals[m] += 1;
                let mid = self.network.movements[m].id.0;
                self.log(now, EventKind::Queue, v, || format!("movement:{mid}"));
                report.joined += 1;
            }
        }

        // Discharge under green.
        let network = Arc::clone(&self.network);
        let mut served = vec![false; network.movements.len()];
        for (agent, node) in network.intersections.iter().enumerate() {
            let signal = &self.signals[agent];
            if !signal.is_green() {
                continue;
            }
            for &m in &node.phases[signal.phase] {
                served[m] = true;
            }
        }
        for (m, movement) in network.movements.iter().enumerate() {
            if !served[m] {
                self.discharge_credit[m] = 0.0;
                continue;
            }
            self.discharge_credit[m] += movement.discharge_rate();
            let n = (self.discharge_credit[m].floor() as usize).min(self.queues[m].len());
            self.discharge_credit[m] -= n as f64;
            for _ in 0..n {
                let v = self.queues[m].pop_front().expect("n bounded by queue length");
                self.queued -= 1;
                self.counters[movement.intersection].crossed += 1.0;
                report.released += 1;
                self.log(now, EventKind::Release, v, || format!("movement:{}", movement.id.0));
                if network.links[movement.to_link].movements.is_empty() {
                    self.finish(v, now);
                    self.log(now, EventKind::Exit, v, || format!("link:{}", network.links[movement.to_link].id.0));
                    report.exited += 1;
                } else {
                    self.place_on_link(v, movement.to_link, now);
                }
            }
            if self.queues[m].is_empty() {
                self.discharge_credit[m] = 0.0;
            }
        }

        // Signal bookkeeping.
        for (agent, signal) in self.signals.iter_mut().enumerate() {
            if signal.tick() {
                self.pending.push(agent);
            }
        }
        report.decisions = self.pending.clone();

        // Waiting and reward counters.
        let mut total_queued = 0u32;
        for (m, movement) in network.movements.iter().enumerate() {
            let q = self.queues[m].len();
            total_queued += q as u32;
            for &v in &self.queues[m] {
                self.vehicles[v as usize].cumulative_wait += 1;
            }
            let c = &mut self.counters[movement.intersection];
            c.wait_s += q as f64;
            c.travel_s += q as f64;
        }
        for (agent, node) in network.intersections.iter().enumerate() {
            let moving: u64 = node.incoming.iter().map(|&l| self.on_link[l].len() as u64).sum();
            let queued: u64 = node.movements.iter().map(|&m| self.queues[m].len() as u64).sum();
            let c = &mut self.counters[agent];
            c.travel_s += moving as f64;
            c.moving = moving;
            c.present = moving + queued;
        }
        self.metrics.queue_series.push(total_queued);

        self.clock = now;
        let (injected, exited, transit, queued) = self.population();
        if injected != exited + transit + queued {
            return Err(self.invariant(format!(
                "mass balance broken: injected {injected} != exited {exited} + transit {transit} + queued {queued}"
            )));
        }
        Ok(report)
    }

    fn invariant(&self, message: String) -> Error {
        Error::Invariant {
            clock: self.clock,
            message,
        }
    }

    /// Applies an agent's decision at the end of its green interval.
    pub fn resolve(&mut self, agent: usize, decision: Decision, actions: &ActionSet) -> Result<()> {
        let Some(slot) = self.pending.iter().position(|&a| a == agent) else {
            return Err(Error::Protocol(format!("agent {agent} has no open decision")));
        };
        let signal = &mut self.signals[agent];
        let phases = signal.program.num_phases();
        match decision {
            Decision::Adjust(index) => {
                let delta = actions.value(index).ok_or_else(|| {
                    Error::Protocol(format!("action index {index} outside 0..{}", actions.values.len()))
                })?;
                let next = (signal.phase + 1) % phases;
                signal.program.adjust(next, delta);
                let green = signal.program.greens[next];
                signal.awaiting = false;
                signal.begin_clearance(next, green);
            }
            Decision::Serve(phase) => {
                if phase >= phases {
                    return Err(Error::Protocol(format!("phase {phase} outside 0..{phases}")));
                }
                let slot_len = signal.program.g_min;
                signal.awaiting = false;
                if phase == signal.phase {
                    signal.green_target += slot_len;
                } else {
                    signal.begin_clearance(phase, slot_len);
                }
            }
        }
        self.pending.remove(slot);
        Ok(())
    }
}

/// Runs `state` to `horizon` seconds, asking `controller` at every decision
/// point, and returns the final metrics.
pub fn run_episode(
    state: SimState,
    controller: &dyn Controller,
    horizon: u64,
    actions: &ActionSet,
    observer: &Observer,
) -> Result<MetricsReport> {
    run_episode_with(state, controller, horizon, actions, observer, |_, _| {}).map(|s| metrics_report(s.metrics(), horizon))
}

/// Like [`run_episode`] but calls `hook` after every step and returns the
/// final state.
pub fn run_episode_with(
    mut state: SimState,
    controller: &dyn Controller,
    horizon: u64,
    actions: &ActionSet,
    observer: &Observer,
    mut hook: impl FnMut(&SimState, &StepReport),
) -> Result<SimState> {
    if horizon == 0 {
        return Err(Error::config("horizon_s", "horizon must be positive"));
    }
    let scope = controller.observation_scope();
    while state.clock() < horizon {
        let report = state.step()?;
        hook(&state, &report);
        if report.decisions.is_empty() {
            continue;
        }
        let queues = state.queue_lengths();
        for &agent in &report.decisions {
            let observation = scope.map(|s| observer.observe(&state, agent, s));
            let signal = state.signal(agent);
            let decision = {
                let ctx = DecisionContext {
                    intersection: state.network().intersections[agent].id,
                    agent,
                    ending_phase: signal.phase,
                    upcoming_phase: (signal.phase + 1) % signal.program.num_phases(),
                    program: &signal.program,
                    observation: observation.as_deref(),
                    queues: &queues,
                    network: state.network(),
                };
                controller.decide(&ctx)
            };
            state.resolve(agent, decision, actions)?;
        }
    }
    Ok(state)
}
