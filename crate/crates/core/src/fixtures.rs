//! Synthetic scenario builders: arterial corridors and grids of four-arm
//! intersections.
//!
//! Every intersection has four approaches with left, through and right
//! movements. Four-phase plans serve, in order, east-west through+right,
//! east-west left, north-south through+right and north-south left. Two-phase
//! plans serve each axis as a whole.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::network::{
    IntersectionId, IntersectionSpec, LinkId, LinkSpec, MovementId, MovementSpec, NetworkSpec, PhaseSpec,
};
use crate::scenario::Scenario;
use crate::sim::{DemandSpec, ProfileSegment, SourceDemand};

/// `(left, through, right)` turning ratios of one approach.
pub type Turns = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub boundary_length_m: f64,
    pub speed: f64,
    pub saturation_flow: f64,
    pub through_lanes: u32,
    /// Volume on each east-west boundary entry, veh/h.
    pub arterial_vph: f64,
    /// Volume on each north-south boundary entry, veh/h.
    pub side_vph: f64,
    pub arterial_turns: Turns,
    pub side_turns: Turns,
    pub four_phase: bool,
    pub horizon_s: u64,
}

impl GridParams {
    /// A single row of `n` intersections.
    pub fn corridor(n: usize) -> Self {
        Self {
            rows: 1,
            cols: n,
            spacing_m: 300.0,
            boundary_length_m: 300.0,
            speed: 15.0,
            saturation_flow: 0.5,
            through_lanes: 2,
            arterial_vph: 1200.0,
            side_vph: 400.0,
            arterial_turns: [0.2, 0.6, 0.2],
            side_turns: [0.3, 0.5, 0.2],
            four_phase: true,
            horizon_s: 3600,
        }
    }

    pub fn grid(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            ..Self::corridor(cols)
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Dir {
    East,
    West,
    North,
    South,
}

/// Which way traffic on an approach is heading, and its left/through/right exits.
fn exits(heading: Dir) -> [Dir; 3] {
    match heading {
        Dir::East => [Dir::North, Dir::East, Dir::South],
        Dir::West => [Dir::South, Dir::West, Dir::North],
        Dir::South => [Dir::East, Dir::South, Dir::West],
        Dir::North => [Dir::West, Dir::North, Dir::East],
    }
}

fn step(dir: Dir, r: usize, c: usize, rows: usize, cols: usize) -> Option<(usize, usize)> {
    match dir {
        Dir::East => (c + 1 < cols).then_some((r, c + 1)),
        Dir::West => (c > 0).then(|| (r, c - 1)),
        Dir::North => (r > 0).then(|| (r - 1, c)),
        Dir::South => (r + 1 < rows).then_some((r + 1, c)),
    }
}

/// Builds a validated-by-construction grid scenario. Intersection ids are
/// row-major starting at 0.
pub fn grid(p: &GridParams) -> Scenario {
    let id = |r: usize, c: usize| (r * p.cols + c) as u32;
    let mut links: Vec<LinkSpec> = Vec::new();
    let mut new_link = |length: f64| {
        let lid = LinkId(links.len() as u32);
        links.push(LinkSpec {
            id: lid,
            length_m: length,
            free_flow_speed: p.speed,
            lane_count: p.through_lanes + 2,
            detection_range_m: None,
        });
        lid
    };

    // incoming[(node, heading)] is the link on which traffic heading `heading`
    // arrives at `node`; outgoing[(node, dir)] leaves `node` towards `dir`.
    let mut incoming: BTreeMap<(u32, Dir), LinkId> = BTreeMap::new();
    let mut outgoing: BTreeMap<(u32, Dir), LinkId> = BTreeMap::new();
    let mut sources: Vec<(LinkId, f64)> = Vec::new();
    for r in 0..p.rows {
        for c in 0..p.cols {
            let node = id(r, c);
            for dir in [Dir::East, Dir::West, Dir::North, Dir::South] {
                match step(dir, r, c, p.rows, p.cols) {
                    Some((r2, c2)) => {
                        let l = new_link(p.spacing_m);
                        outgoing.insert((node, dir), l);
                        incoming.insert((id(r2, c2), dir), l);
                    }
                    None => {
                        let out = new_link(p.boundary_length_m);
                        outgoing.insert((node, dir), out);
                        // Entry link carrying traffic heading away from this boundary.
                        let heading = match dir {
                            Dir::East => Dir::West,
                            Dir::West => Dir::East,
                            Dir::North => Dir::South,
                            Dir::South => Dir::North,
                        };
                        let entry = new_link(p.boundary_length_m);
                        incoming.insert((node, heading), entry);
                        let volume = match heading {
                            Dir::East | Dir::West => p.arterial_vph,
                            _ => p.side_vph,
                        };
                        sources.push((entry, volume));
                    }
                }
            }
        }
    }

    let mut intersections = Vec::new();
    let mut next_movement = 0u32;
    for r in 0..p.rows {
        for c in 0..p.cols {
            let node = id(r, c);
            let mut movements = Vec::new();
            // (heading, turn index) -> movement id
            let mut by_role: BTreeMap<(Dir, usize), MovementId> = BTreeMap::new();
            for heading in [Dir::East, Dir::West, Dir::South, Dir::North] {
                let from = incoming[&(node, heading)];
                let turns = match heading {
                    Dir::East | Dir::West => p.arterial_turns,
                    _ => p.side_turns,
                };
                for (k, exit) in exits(heading).into_iter().enumerate() {
                    let mid = MovementId(next_movement);
                    next_movement += 1;
                    by_role.insert((heading, k), mid);
                    movements.push(MovementSpec {
                        id: mid,
                        from_link: from,
                        to_link: outgoing[&(node, exit)],
                        lanes: if k == 1 { p.through_lanes } else { 1 },
                        turning_ratio: turns[k],
                        saturation_flow: p.saturation_flow,
                    });
                }
            }
            let ew = [Dir::East, Dir::West];
            let ns = [Dir::South, Dir::North];
            let by_role = &by_role;
            let pick = |heads: &[Dir], turns: &[usize]| -> Vec<MovementId> {
                heads
                    .iter()
                    .flat_map(|h| turns.iter().map(move |k| by_role[&(*h, *k)]))
                    .collect()
            };
            let phases: Vec<PhaseSpec> = if p.four_phase {
                vec![
                    PhaseSpec { movements: pick(&ew, &[1, 2]) },
                    PhaseSpec { movements: pick(&ew, &[0]) },
                    PhaseSpec { movements: pick(&ns, &[1, 2]) },
                    PhaseSpec { movements: pick(&ns, &[0]) },
                ]
            } else {
                vec![
                    PhaseSpec { movements: pick(&ew, &[0, 1, 2]) },
                    PhaseSpec { movements: pick(&ns, &[0, 1, 2]) },
                ]
            };
            // Crossing axes always conflict.
            let mut conflicts = Vec::new();
            for a in pick(&ew, &[0, 1, 2]) {
                for b in pick(&ns, &[0, 1, 2]) {
                    conflicts.push([a, b]);
                }
            }
            if p.four_phase {
                // Protected lefts conflict with the opposing through.
                for (h, opp) in [(Dir::East, Dir::West), (Dir::West, Dir::East), (Dir::South, Dir::North), (Dir::North, Dir::South)] {
                    conflicts.push([by_role[&(h, 0)], by_role[&(opp, 1)]]);
                }
            }
            let dirs = [Dir::East, Dir::West, Dir::South, Dir::North];
            intersections.push(IntersectionSpec {
                id: IntersectionId(node),
                incoming_links: dirs.iter().map(|d| incoming[&(node, *d)]).collect(),
                outgoing_links: dirs.iter().map(|d| outgoing[&(node, *d)]).collect(),
                movements,
                phases,
                neighbors: None,
                conflicts,
            });
        }
    }

    let network = NetworkSpec {
        intersections,
        source_links: sources.iter().map(|(l, _)| *l).collect(),
        links,
    };
    let demand = DemandSpec {
        sources: sources
            .into_iter()
            .map(|(source_link, volume_vph)| SourceDemand {
                source_link,
                volume_vph,
                profile: None,
            })
            .collect(),
        horizon_s: p.horizon_s,
        profile: Vec::new(),
    };
    Scenario {
        network,
        demand,
        signals: Default::default(),
        randomization: Default::default(),
        training: Default::default(),
    }
}

pub fn corridor(n: usize) -> Scenario {
    grid(&GridParams::corridor(n))
}

/// Saturated three-intersection arterial, about 4800 veh/h in total: heavy
/// east-west through traffic against light side streets.
pub fn saturated_corridor() -> Scenario {
    grid(&GridParams {
        arterial_vph: 1800.0,
        side_vph: 200.0,
        ..GridParams::corridor(3)
    })
}

/// Moderate-load version of [`saturated_corridor`] (about 1800 veh/h).
pub fn off_peak_corridor() -> Scenario {
    grid(&GridParams {
        arterial_vph: 675.0,
        side_vph: 75.0,
        ..GridParams::corridor(3)
    })
}

/// Single intersection whose arterial entries step 400 → 1200 → 400 veh/h
/// over 30-minute blocks while the side streets hold 300 veh/h. One through
/// lane brings the primary phase close to saturation at the peak. Fixed-time
/// plans hold 47 s on the primary phase.
pub fn stepped_demand() -> Scenario {
    let mut s = grid(&GridParams {
        arterial_vph: 400.0,
        side_vph: 300.0,
        through_lanes: 1,
        arterial_turns: [0.1, 0.8, 0.1],
        ..GridParams::corridor(1)
    });
    s.demand.horizon_s = 5400;
    let step = vec![
        ProfileSegment { from_s: 0, scale: 1.0 },
        ProfileSegment { from_s: 1800, scale: 3.0 },
        ProfileSegment { from_s: 3600, scale: 1.0 },
    ];
    for source in &mut s.demand.sources {
        if source.volume_vph == 400.0 {
            source.profile = Some(step.clone());
        }
    }
    s.signals.phase_greens_s = Some(vec![47, 15, 20, 15]);
    s
}

/// Returns a copy with every approach's turning ratios multiplied by
/// `(1 + shift, 1, 1 - shift)` for (left, through, right) and renormalized.
pub fn shift_turning_ratios(scenario: &Scenario, shift: f64) -> Scenario {
    let mut out = scenario.clone();
    for node in &mut out.network.intersections {
        let mut by_link: BTreeMap<LinkId, Vec<usize>> = BTreeMap::new();
        for (k, m) in node.movements.iter().enumerate() {
            by_link.entry(m.from_link).or_default().push(k);
        }
        for idx in by_link.values() {
            let factors = [1.0 + shift, 1.0, 1.0 - shift];
            let scaled: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| node.movements[i].turning_ratio * factors.get(k).copied().unwrap_or(1.0))
                .collect();
            let total: f64 = scaled.iter().sum();
            for (&i, r) in idx.iter().zip(scaled) {
                node.movements[i].turning_ratio = r / total;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{neighbors_of, validate_network};

    #[test]
    fn builders_validate() {
        for s in [corridor(1), corridor(2), corridor(3), saturated_corridor(), stepped_demand(), grid(&GridParams::grid(2, 3))] {
            let report = validate_network(&s.network);
            assert!(report.is_ok(), "{report}");
            s.compile().unwrap();
        }
        let two = grid(&GridParams {
            four_phase: false,
            ..GridParams::corridor(2)
        });
        assert!(validate_network(&two.network).is_ok());
    }

    #[test]
    fn saturated_corridor_total_volume() {
        let s = saturated_corridor();
        let total: f64 = s.demand.sources.iter().map(|d| d.volume_vph).sum();
        assert_eq!(total, 2.0 * 1800.0 + 6.0 * 200.0);
    }

    #[test]
    fn corridor_neighbors() {
        let s = corridor(3);
        assert_eq!(neighbors_of(&s.network, IntersectionId(1)).unwrap(), vec![IntersectionId(0), IntersectionId(2)]);
        assert_eq!(neighbors_of(&s.network, IntersectionId(0)).unwrap(), vec![IntersectionId(1)]);
        assert_eq!(neighbors_of(&corridor(1).network, IntersectionId(0)).unwrap(), vec![]);
    }

    #[test]
    fn shifted_ratios_still_sum_to_one() {
        let s = shift_turning_ratios(&corridor(2), 0.25);
        assert!(validate_network(&s.network).is_ok());
        assert_ne!(s.network, corridor(2).network);
    }
}
