//! Static road-network topology: intersections, links, movements and phases.
//!
//! A [`NetworkSpec`] is the serialized form read from a scenario file. After
//! [`validate_network`] reports no violations it can be compiled into a
//! [`Network`], the index-based view the simulator and the observation
//! builders work with.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detection range used when a link does not declare one, in meters.
pub const DEFAULT_DETECTION_RANGE_M: f64 = 150.0;

const RATIO_TOLERANCE: f64 = 1e-9;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $label:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($label, " {}"), self.0)
            }
        }
    };
}

id_type!(
    /// Identifier of a signalized intersection.
    IntersectionId,
    "intersection"
);
id_type!(
    /// Identifier of a directed road link.
    LinkId,
    "link"
);
id_type!(
    /// Identifier of a movement (turning stream) at an intersection.
    MovementId,
    "movement"
);

/// A directed road link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: LinkId,
    pub length_m: f64,
    /// Free-flow speed in m/s.
    pub free_flow_speed: f64,
    pub lane_count: u32,
    /// Observable zone upstream of the stop line. Defaults to
    /// [`DEFAULT_DETECTION_RANGE_M`], capped at the link length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_range_m: Option<f64>,
}

impl LinkSpec {
    pub fn detection_range(&self) -> f64 {
        self.detection_range_m
            .unwrap_or_else(|| DEFAULT_DETECTION_RANGE_M.min(self.length_m))
    }

    /// Whole simulation steps needed to traverse the link at free flow.
    pub fn traversal_steps(&self) -> u64 {
        let exact = self.length_m / self.free_flow_speed;
        // Guard against 300/15 landing on 20.000000000000004.
        ((exact - 1e-9).ceil()).max(1.0) as u64
    }
}

/// A traffic stream from one incoming link to one outgoing link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovementSpec {
    pub id: MovementId,
    pub from_link: LinkId,
    pub to_link: LinkId,
    pub lanes: u32,
    /// Probability that a vehicle arriving on `from_link` takes this movement.
    pub turning_ratio: f64,
    /// Discharge rate in vehicles per second per lane.
    pub saturation_flow: f64,
}

/// A set of movements that receive green together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub movements: Vec<MovementId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionSpec {
    pub id: IntersectionId,
    pub incoming_links: Vec<LinkId>,
    pub outgoing_links: Vec<LinkId>,
    pub movements: Vec<MovementSpec>,
    /// Phases in cyclic order.
    pub phases: Vec<PhaseSpec>,
    /// Declared neighborhood. When absent it is derived from the links.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighbors: Option<Vec<IntersectionId>>,
    /// Pairs of movements that may never share a phase.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conflicts: Vec<[MovementId; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub intersections: Vec<IntersectionSpec>,
    pub links: Vec<LinkSpec>,
    /// Links on which vehicles enter the network.
    pub source_links: Vec<LinkId>,
}

/// One problem found by [`validate_network`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// The offending entity, e.g. `"intersection 2"` or `"link 7"`.
    pub entity: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, entity: impl fmt::Display, message: impl Into<String>) {
        self.violations.push(Violation {
            entity: entity.to_string(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "network ok");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn short_float(x: f64) -> String {
    format!("{}", (x * 1e6).round() / 1e6)
}

/// Checks every structural invariant of `spec` and lists what is wrong.
pub fn validate_network(spec: &NetworkSpec) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut links: BTreeMap<LinkId, &LinkSpec> = BTreeMap::new();
    for link in &spec.links {
        if links.insert(link.id, link).is_some() {
            report.push(link.id, "duplicate link id");
        }
        if !(link.length_m > 0.0 && link.length_m.is_finite()) {
            report.push(link.id, format!("length {} must be positive", link.length_m));
        }
        if !(link.free_flow_speed > 0.0 && link.free_flow_speed.is_finite()) {
            report.push(
                link.id,
                format!("free-flow speed {} must be positive", link.free_flow_speed),
            );
        }
        if link.lane_count == 0 {
            report.push(link.id, "lane count must be at least 1");
        }
        let range = link.detection_range();
        if !(range > 0.0 && range <= link.length_m) {
            report.push(
                link.id,
                format!("detection range {range} outside (0, {}]", link.length_m),
            );
        }
    }

    for id in &spec.source_links {
        if !links.contains_key(id) {
            report.push(id, "unknown link listed as source");
        }
    }

    let mut seen_intersections = BTreeSet::new();
    let mut seen_movements = BTreeSet::new();
    let mut downstream_of: HashMap<LinkId, IntersectionId> = HashMap::new();
    let mut upstream_of: HashMap<LinkId, IntersectionId> = HashMap::new();

    for node in &spec.intersections {
        if !seen_intersections.insert(node.id) {
            report.push(node.id, "duplicate intersection id");
        }
        for l in &node.incoming_links {
            if !links.contains_key(l) {
                report.push(node.id, format!("unknown link {} in incoming links", l.0));
            } else if let Some(other) = downstream_of.insert(*l, node.id) {
                report.push(l, format!("enters both {other} and {}", node.id));
            }
        }
        for l in &node.outgoing_links {
            if !links.contains_key(l) {
                report.push(node.id, format!("unknown link {} in outgoing links", l.0));
            } else if let Some(other) = upstream_of.insert(*l, node.id) {
                report.push(l, format!("leaves both {other} and {}", node.id));
            }
        }
        if node.phases.is_empty() {
            report.push(node.id, "no phases");
        }

        let mut ratio_sums: BTreeMap<LinkId, f64> = BTreeMap::new();
        let mut local_movements = BTreeSet::new();
        for m in &node.movements {
            if !seen_movements.insert(m.id) {
                report.push(m.id, "duplicate movement id");
            }
            local_movements.insert(m.id);
            for (role, l) in [("from", m.from_link), ("to", m.to_link)] {
                if !links.contains_key(&l) {
                    report.push(m.id, format!("unknown link {} ({role} link)", l.0));
                }
            }
            if !node.incoming_links.contains(&m.from_link) {
                report.push(m.id, format!("from link {} is not incoming", m.from_link.0));
            }
            if !node.outgoing_links.contains(&m.to_link) {
                report.push(m.id, format!("to link {} is not outgoing", m.to_link.0));
            }
            if m.lanes == 0 {
                report.push(m.id, "lanes must be at least 1");
            }
            if !(m.saturation_flow > 0.0 && m.saturation_flow.is_finite()) {
                report.push(
                    m.id,
                    format!("saturation flow {} must be positive", m.saturation_flow),
                );
            }
            if !(0.0..=1.0).contains(&m.turning_ratio) {
                report.push(
                    m.id,
                    format!("turning ratio {} outside [0, 1]", m.turning_ratio),
                );
            }
            *ratio_sums.entry(m.from_link).or_insert(0.0) += m.turning_ratio;
        }
        for l in &node.incoming_links {
            let sum = ratio_sums.get(l).copied().unwrap_or(0.0);
            if (sum - 1.0).abs() > RATIO_TOLERANCE {
                report.push(
                    node.id,
                    format!(
                        "approach link {}: turning ratios sum {} ≠ 1",
                        l.0,
                        short_float(sum)
                    ),
                );
            }
        }

        let mut served = BTreeSet::new();
        for (p, phase) in node.phases.iter().enumerate() {
            for m in &phase.movements {
                if !local_movements.contains(m) {
                    report.push(node.id, format!("phase {p} lists unknown movement {}", m.0));
                }
                served.insert(*m);
            }
            for [a, b] in &node.conflicts {
                if phase.movements.contains(a) && phase.movements.contains(b) {
                    report.push(
                        node.id,
                        format!("phase {p} holds conflicting movements {} and {}", a.0, b.0),
                    );
                }
            }
        }
        for m in &node.movements {
            if !served.contains(&m.id) {
                report.push(m.id, "not served by any phase");
            }
        }
        for [a, b] in &node.conflicts {
            for m in [a, b] {
                if !local_movements.contains(m) {
                    report.push(node.id, format!("conflict table lists unknown movement {}", m.0));
                }
            }
        }
    }

    // Adjacency through links that join two intersections.
    let adjacency = derived_adjacency(spec);
    for node in &spec.intersections {
        if let Some(declared) = &node.neighbors {
            let actual = adjacency.get(&node.id).cloned().unwrap_or_default();
            for j in declared {
                if *j == node.id {
                    report.push(node.id, "lists itself as a neighbor");
                } else if !actual.contains(j) {
                    report.push(node.id, format!("neighbor {} is not one link away", j.0));
                }
            }
        }
    }
    for node in &spec.intersections {
        for j in declared_or_derived(node, &adjacency) {
            let back = spec
                .intersections
                .iter()
                .find(|n| n.id == j)
                .map(|n| declared_or_derived(n, &adjacency).contains(&node.id))
                .unwrap_or(false);
            if !back {
                report.push(node.id, format!("neighbor relation with {} is not symmetric", j.0));
            }
        }
    }

    if !spec.intersections.is_empty() {
        let start = spec.intersections[0].id;
        let mut reached = BTreeSet::from([start]);
        let mut frontier = VecDeque::from([start]);
        while let Some(i) = frontier.pop_front() {
            for j in adjacency.get(&i).into_iter().flatten() {
                if reached.insert(*j) {
                    frontier.push_back(*j);
                }
            }
        }
        if reached.len() != seen_intersections.len() {
            report.push("network", "intersection graph is not connected");
        }
    } else {
        report.push("network", "no intersections");
    }

    report
}

fn derived_adjacency(spec: &NetworkSpec) -> BTreeMap<IntersectionId, BTreeSet<IntersectionId>> {
    let mut downstream: HashMap<LinkId, IntersectionId> = HashMap::new();
    for node in &spec.intersections {
        for l in &node.incoming_links {
            downstream.entry(*l).or_insert(node.id);
        }
    }
    let mut adjacency: BTreeMap<IntersectionId, BTreeSet<IntersectionId>> = spec
        .intersections
        .iter()
        .map(|n| (n.id, BTreeSet::new()))
        .collect();
    for node in &spec.intersections {
        for l in &node.outgoing_links {
            if let Some(&j) = downstream.get(l) {
                if j != node.id {
                    adjacency.entry(node.id).or_default().insert(j);
                    adjacency.entry(j).or_default().insert(node.id);
                }
            }
        }
    }
    adjacency
}

fn declared_or_derived(
    node: &IntersectionSpec,
    adjacency: &BTreeMap<IntersectionId, BTreeSet<IntersectionId>>,
) -> Vec<IntersectionId> {
    let mut out: Vec<IntersectionId> = match &node.neighbors {
        Some(declared) => declared.clone(),
        None => adjacency
            .get(&node.id)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default(),
    };
    out.sort();
    out.dedup();
    out
}

/// Neighborhood of `id` in ascending id order.
pub fn neighbors_of(spec: &NetworkSpec, id: IntersectionId) -> Result<Vec<IntersectionId>> {
    let node = spec
        .intersections
        .iter()
        .find(|n| n.id == id)
        .ok_or_else(|| Error::Lookup(id.to_string()))?;
    Ok(declared_or_derived(node, &derived_adjacency(spec)))
}

/// Compiled link data.
#[derive(Debug, Clone)]
pub struct Link {
    pub id: LinkId,
    pub length_m: f64,
    pub speed: f64,
    pub detection_range_m: f64,
    pub traversal_steps: u64,
    /// Index of the intersection this link feeds, `None` for exit links.
    pub downstream: Option<usize>,
    /// Movement indices leaving this link at its downstream intersection.
    pub movements: Vec<usize>,
}

/// Compiled movement data.
#[derive(Debug, Clone)]
pub struct Movement {
    pub id: MovementId,
    pub intersection: usize,
    pub from_link: usize,
    pub to_link: usize,
    pub lanes: u32,
    pub turning_ratio: f64,
    pub saturation_flow: f64,
}

impl Movement {
    /// Vehicles discharged per second of green.
    pub fn discharge_rate(&self) -> f64 {
        self.saturation_flow * f64::from(self.lanes)
    }
}

#[derive(Debug, Clone)]
pub struct Intersection {
    pub id: IntersectionId,
    pub incoming: Vec<usize>,
    /// Movement indices in declaration order.
    pub movements: Vec<usize>,
    /// Per phase, the movement indices it serves.
    pub phases: Vec<Vec<usize>>,
    /// Neighbor intersection indices, ascending by id.
    pub neighbors: Vec<usize>,
}

/// Index-based view of a validated [`NetworkSpec`].
///
/// Intersections are stored in ascending id order; that order doubles as the
/// agent index everywhere else in the crate.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    pub links: Vec<Link>,
    pub movements: Vec<Movement>,
    pub intersections: Vec<Intersection>,
    pub sources: Vec<usize>,
    link_index: HashMap<LinkId, usize>,
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let report = validate_network(&spec);
        if !report.is_ok() {
            return Err(Error::InvalidNetwork(report));
        }

        let link_index: HashMap<LinkId, usize> =
            spec.links.iter().enumerate().map(|(k, l)| (l.id, k)).collect();
        let mut nodes: Vec<&IntersectionSpec> = spec.intersections.iter().collect();
        nodes.sort_by_key(|n| n.id);
        let node_index: HashMap<IntersectionId, usize> =
            nodes.iter().enumerate().map(|(k, n)| (n.id, k)).collect();

        let mut links: Vec<Link> = spec
            .links
            .iter()
            .map(|l| Link {
                id: l.id,
                length_m: l.length_m,
                speed: l.free_flow_speed,
                detection_range_m: l.detection_range(),
                traversal_steps: l.traversal_steps(),
                downstream: None,
                movements: Vec::new(),
            })
            .collect();

        let adjacency = derived_adjacency(&spec);
        let mut movements = Vec::new();
        let mut intersections = Vec::with_capacity(nodes.len());
        for (k, node) in nodes.iter().enumerate() {
            let mut local: HashMap<MovementId, usize> = HashMap::new();
            let mut own = Vec::with_capacity(node.movements.len());
            for m in &node.movements {
                let idx = movements.len();
                let from = link_index[&m.from_link];
                movements.push(Movement {
                    id: m.id,
                    intersection: k,
                    from_link: from,
                    to_link: link_index[&m.to_link],
                    lanes: m.lanes,
                    turning_ratio: m.turning_ratio,
                    saturation_flow: m.saturation_flow,
                });
                links[from].movements.push(idx);
                local.insert(m.id, idx);
                own.push(idx);
            }
            let incoming: Vec<usize> = node.incoming_links.iter().map(|l| link_index[l]).collect();
            for &l in &incoming {
                links[l].downstream = Some(k);
            }
            intersections.push(Intersection {
                id: node.id,
                incoming,
                movements: own,
                phases: node
                    .phases
                    .iter()
                    .map(|p| p.movements.iter().map(|m| local[m]).collect())
                    .collect(),
                neighbors: declared_or_derived(node, &adjacency)
                    .iter()
                    .map(|j| node_index[j])
                    .collect(),
            });
        }
        let sources = spec.source_links.iter().map(|l| link_index[l]).collect();

        Ok(Self {
            spec,
            links,
            movements,
            intersections,
            sources,
            link_index,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn link_index(&self, id: LinkId) -> Option<usize> {
        self.link_index.get(&id).copied()
    }

    pub fn intersection_index(&self, id: IntersectionId) -> Option<usize> {
        self.intersections.iter().position(|n| n.id == id)
    }

    pub fn num_intersections(&self) -> usize {
        self.intersections.len()
    }

    /// Largest neighborhood size in the network.
    pub fn max_neighbors(&self) -> usize {
        self.intersections
            .iter()
            .map(|n| n.neighbors.len())
            .max()
            .unwrap_or(0)
    }

    /// Base turning ratios of every approach, keyed by movement index.
    pub fn base_ratios(&self) -> Vec<f64> {
        self.movements.iter().map(|m| m.turning_ratio).collect()
    }

    /// Movement indices grouped by approach (incoming link), in link order.
    pub fn approaches(&self) -> Vec<Vec<usize>> {
        self.links
            .iter()
            .filter(|l| !l.movements.is_empty())
            .map(|l| l.movements.clone())
            .collect()
    }
}
