//! Reference-point group mobility: each group centre travels between random
//! waypoints inside a region, members keep a jittered offset from it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::radio::Position;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Region {
    pub fn square(side: f64) -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            x1: side,
            y1: side,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Position {
        Position::new(
            self.x0 + rng.gen::<f64>() * (self.x1 - self.x0),
            self.y0 + rng.gen::<f64>() * (self.y1 - self.y0),
        )
    }
}

#[derive(Debug, Clone)]
pub struct MobilityGroup {
    pub members: Vec<NodeId>,
    pub center: Position,
    pub waypoint: Position,
    pub speed_mps: f64,
    pub jitter_radius_m: f64,
    pub pause_s: f64,
    pub region: Region,
    pause_left: f64,
}

impl MobilityGroup {
    pub fn new(
        members: Vec<NodeId>,
        center: Position,
        waypoint: Position,
        speed_mps: f64,
        jitter_radius_m: f64,
        pause_s: f64,
        region: Region,
    ) -> Self {
        Self {
            members,
            center,
            waypoint,
            speed_mps,
            jitter_radius_m,
            pause_s,
            region,
            pause_left: 0.0,
        }
    }

    fn step_center<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) {
        if self.speed_mps <= 0.0 {
            return;
        }
        let mut budget = dt;
        if self.pause_left > 0.0 {
            let used = self.pause_left.min(budget);
            self.pause_left -= used;
            budget -= used;
        }
        while budget > 0.0 {
            let to_go = self.center.distance(&self.waypoint);
            let reach_time = to_go / self.speed_mps;
            if reach_time > budget {
                let frac = budget * self.speed_mps / to_go;
                self.center.x += (self.waypoint.x - self.center.x) * frac;
                self.center.y += (self.waypoint.y - self.center.y) * frac;
                return;
            }
            self.center = self.waypoint;
            budget -= reach_time;
            self.waypoint = self.region.sample(rng);
            if self.pause_s > 0.0 {
                let used = self.pause_s.min(budget);
                self.pause_left = self.pause_s - used;
                budget -= used;
            }
        }
    }
}

/// Positions of every node plus the group structure that drives them.
#[derive(Debug, Clone)]
pub struct MobilityState {
    pub area_side: f64,
    pub groups: Vec<MobilityGroup>,
    /// Initial offset of each node from its group centre, indexed by node id.
    pub offsets: Vec<Position>,
    /// Current jitter displacement from the initial offset.
    pub jitter: Vec<Position>,
    pub positions: Vec<Position>,
    group_of: Vec<usize>,
}

impl MobilityState {
    /// `offsets[i]` is node i's initial offset from its group centre.
    pub fn new(area_side: f64, groups: Vec<MobilityGroup>, offsets: Vec<Position>) -> Self {
        let n = offsets.len();
        let mut group_of = vec![usize::MAX; n];
        for (g, grp) in groups.iter().enumerate() {
            for &m in &grp.members {
                group_of[m] = g;
            }
        }
        assert!(
            group_of.iter().all(|&g| g != usize::MAX),
            "every node must belong to a mobility group"
        );
        let mut s = Self {
            area_side,
            groups,
            offsets,
            jitter: vec![Position::default(); n],
            positions: vec![Position::default(); n],
            group_of,
        };
        s.refresh_positions();
        s
    }

    fn refresh_positions(&mut self) {
        for (node, pos) in self.positions.iter_mut().enumerate() {
            let c = self.groups[self.group_of[node]].center;
            let o = self.offsets[node];
            let j = self.jitter[node];
            *pos = Position::new(c.x + o.x + j.x, c.y + o.y + j.y).clamp_to(self.area_side);
        }
    }

    pub fn group_of(&self, node: NodeId) -> usize {
        self.group_of[node]
    }

    /// Moves every group centre toward its waypoint and jitters members.
    /// Stationary groups (speed 0) are left untouched.
    pub fn advance<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) {
        debug_assert!(dt > 0.0);
        for g in &mut self.groups {
            g.step_center(dt, rng);
        }
        for node in 0..self.offsets.len() {
            let g = &self.groups[self.group_of[node]];
            if g.speed_mps <= 0.0 || g.jitter_radius_m <= 0.0 {
                continue;
            }
            let step = (0.5 * g.speed_mps * dt).min(g.jitter_radius_m);
            let o = &mut self.jitter[node];
            o.x += rng.gen_range(-step..=step);
            o.y += rng.gen_range(-step..=step);
            let r = o.x.hypot(o.y);
            if r > g.jitter_radius_m {
                o.x *= g.jitter_radius_m / r;
                o.y *= g.jitter_radius_m / r;
            }
        }
        self.refresh_positions();
    }

    pub fn centroid(&self, group: usize) -> Position {
        self.groups[group].center
    }
}
