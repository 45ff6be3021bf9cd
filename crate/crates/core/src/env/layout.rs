use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::Action;
use crate::error::{config, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col) == 1
    }
}

/// Where a pick-up robot starts (its pick position, directly below the
/// belt), the box it delivers to, and how often a bottle for it enters the
/// belt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PickupSpot {
    pub spawn: Cell,
    pub box_cell: Cell,
    /// Steps between two bottles of this robot's lane. Must equal the
    /// robot's shortest pick -> drop -> return cycle.
    pub spawn_period: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub width: usize,
    pub height: usize,
    /// The belt occupies this whole row and moves bottles towards higher
    /// columns, one cell per step.
    pub belt_row: usize,
    pub pickups: Vec<PickupSpot>,
    pub mechanic_spawn: Cell,
}

impl Layout {
    /// Standard layouts on a 10x10 grid.
    ///
    /// Two-agent: the pick-up robot's box is three moves from its pick
    /// position, so one pick/drop round trip takes 8 steps and a bottle
    /// arrives every 8 steps.
    ///
    /// Three-agent: the first pick-up robot keeps the 8-step trip; the
    /// second box sits one row further down (10-step trip) and the second
    /// lane is paced to match.
    pub fn standard(n_pickup: usize) -> Result<Layout> {
        match n_pickup {
            1 => Ok(Layout {
                width: 10,
                height: 10,
                belt_row: 0,
                pickups: vec![PickupSpot {
                    spawn: Cell::new(1, 4),
                    box_cell: Cell::new(5, 4),
                    spawn_period: 8,
                }],
                mechanic_spawn: Cell::new(3, 6),
            }),
            2 => Ok(Layout {
                width: 10,
                height: 10,
                belt_row: 0,
                pickups: vec![
                    PickupSpot {
                        spawn: Cell::new(1, 2),
                        box_cell: Cell::new(5, 2),
                        spawn_period: 8,
                    },
                    PickupSpot {
                        spawn: Cell::new(1, 7),
                        box_cell: Cell::new(6, 7),
                        spawn_period: 10,
                    },
                ],
                mechanic_spawn: Cell::new(3, 4),
            }),
            n => Err(config(format!("no standard layout for {n} pick-up robots"))),
        }
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn is_belt(&self, c: Cell) -> bool {
        c.row == self.belt_row
    }

    pub fn is_box(&self, c: Cell) -> bool {
        self.pickups.iter().any(|p| p.box_cell == c)
    }

    /// Cells robots may stand on.
    pub fn is_walkable(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.is_belt(c) && !self.is_box(c)
    }

    pub fn neighbor(&self, c: Cell, action: Action) -> Option<Cell> {
        let (row, col) = match action {
            Action::Up => (c.row.checked_sub(1)?, c.col),
            Action::Down => (c.row + 1, c.col),
            Action::Left => (c.row, c.col.checked_sub(1)?),
            Action::Right => (c.row, c.col + 1),
            Action::Interact => return None,
        };
        let n = Cell::new(row, col);
        self.in_bounds(n).then_some(n)
    }

    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        [Action::Up, Action::Down, Action::Left, Action::Right]
            .into_iter()
            .filter_map(move |a| self.neighbor(c, a))
    }

    pub fn adjacent_to_box(&self, c: Cell) -> bool {
        self.pickups.iter().any(|p| p.box_cell.is_adjacent(c))
    }

    /// First belt column next to `c` that holds a bottle.
    pub fn adjacent_belt_column(&self, c: Cell, belt: &[bool]) -> Option<usize> {
        self.neighbors(c)
            .find(|n| self.is_belt(*n) && belt[n.col])
            .map(|n| n.col)
    }

    /// Walkable cells next to pick-up robot `i`'s box.
    pub fn drop_cells(&self, i: usize) -> Vec<Cell> {
        self.neighbors(self.pickups[i].box_cell)
            .filter(|c| self.is_walkable(*c))
            .collect()
    }

    /// Lane `i` spawns a bottle at the belt head at every step `t` with
    /// `t ≡ phase (mod period)`. The phase puts a bottle in front of the
    /// robot's pick position at step 0.
    pub fn spawn_phase(&self, i: usize) -> i64 {
        let p = &self.pickups[i];
        (-(p.spawn.col as i64)).rem_euclid(p.spawn_period as i64)
    }

    fn spawns_at(&self, t: i64) -> bool {
        (0..self.pickups.len()).any(|i| {
            (t - self.spawn_phase(i)).rem_euclid(self.pickups[i].spawn_period as i64) == 0
        })
    }

    /// Belt contents at step 0: every bottle the spawn schedule would have
    /// put on the belt if it had been running before the episode.
    pub fn initial_belt(&self) -> Vec<bool> {
        (0..self.width).map(|col| self.spawns_at(-(col as i64))).collect()
    }

    /// Moves every bottle one cell downstream, drops the one at the end,
    /// then spawns at the head if the schedule says so for step `t`.
    pub fn advance_belt(&self, belt: &mut [bool], t: u32) {
        belt.rotate_right(1);
        belt[0] = self.spawns_at(t as i64);
    }

    /// Shortest walk from `from` to any cell in `goals`, avoiding the belt,
    /// boxes and `blocked`. Returns the first action of the walk and its
    /// length.
    pub fn shortest_step(
        &self,
        from: Cell,
        goals: &[Cell],
        blocked: &[Cell],
    ) -> Option<(Option<Action>, usize)> {
        if goals.contains(&from) {
            return Some((None, 0));
        }
        let idx = |c: Cell| c.row * self.width + c.col;
        let mut first: Vec<Option<(Action, usize)>> = vec![None; self.width * self.height];
        let mut seen = vec![false; self.width * self.height];
        seen[idx(from)] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            for action in [Action::Up, Action::Down, Action::Left, Action::Right] {
                let Some(n) = self.neighbor(c, action) else {
                    continue;
                };
                if seen[idx(n)] || !self.is_walkable(n) || blocked.contains(&n) {
                    continue;
                }
                seen[idx(n)] = true;
                let (a0, d) = match first[idx(c)] {
                    Some((a0, d)) => (a0, d + 1),
                    None => (action, 1),
                };
                first[idx(n)] = Some((a0, d));
                if goals.contains(&n) {
                    return Some((Some(a0), d));
                }
                queue.push_back(n);
            }
        }
        None
    }

    /// Shortest pick -> drop -> return cycle for pick-up robot `i`:
    /// one pick, the walk to its box, one drop and the walk back.
    pub fn round_trip(&self, i: usize) -> Option<u32> {
        let (_, d) = self.shortest_step(self.pickups[i].spawn, &self.drop_cells(i), &[])?;
        Some(2 * d as u32 + 2)
    }

    pub fn validate(&self) -> Result<()> {
        use super::render::RenderGeometry;
        if self.width == 0 || self.height == 0 {
            return Err(config("layout must have at least one cell"));
        }
        if !RenderGeometry::default().fits(self.width, self.height) {
            return Err(config(format!(
                "a {}x{} grid does not fit the rendered frame",
                self.width, self.height
            )));
        }
        if self.belt_row >= self.height {
            return Err(config("belt row outside the grid"));
        }
        if self.pickups.is_empty() {
            return Err(config("layout needs at least one pick-up robot"));
        }
        let mut occupied = vec![self.mechanic_spawn];
        for (i, p) in self.pickups.iter().enumerate() {
            for c in [p.spawn, p.box_cell] {
                if !self.in_bounds(c) || self.is_belt(c) {
                    return Err(config(format!(
                        "pick-up robot {i}: cell {c:?} is off the grid or on the belt"
                    )));
                }
            }
            if p.spawn.row != self.belt_row + 1 && p.spawn.row + 1 != self.belt_row {
                return Err(config(format!(
                    "pick-up robot {i} must start next to the belt"
                )));
            }
            if p.spawn_period == 0 {
                return Err(config(format!("pick-up robot {i}: spawn period is zero")));
            }
            occupied.push(p.spawn);
        }
        if !self.is_walkable(self.mechanic_spawn) {
            return Err(config("mechanic must start on a free cell"));
        }
        for (i, c) in occupied.iter().enumerate() {
            if occupied[..i].contains(c) || self.is_box(*c) {
                return Err(config(format!("cell {c:?} is used twice")));
            }
        }
        for i in 0..self.pickups.len() {
            let trip = self.round_trip(i).ok_or_else(|| {
                config(format!("pick-up robot {i} cannot reach its box"))
            })?;
            if trip != self.pickups[i].spawn_period {
                return Err(config(format!(
                    "pick-up robot {i}: shortest round trip is {trip} steps but its lane \
                     spawns every {} steps",
                    self.pickups[i].spawn_period
                )));
            }
        }
        let first_trip = self.round_trip(0).unwrap_or(0);
        if first_trip != 8 {
            return Err(config(format!(
                "the first pick-up robot needs an 8-step round trip, layout gives {first_trip}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_layouts_validate() {
        Layout::standard(1).unwrap().validate().unwrap();
        Layout::standard(2).unwrap().validate().unwrap();
        assert!(Layout::standard(3).is_err());
    }

    #[test]
    fn round_trips() {
        assert_eq!(Layout::standard(1).unwrap().round_trip(0), Some(8));
        let three = Layout::standard(2).unwrap();
        assert_eq!(three.round_trip(0), Some(8));
        assert_eq!(three.round_trip(1), Some(10));
    }

    #[test]
    fn initial_belt_puts_a_bottle_in_front_of_each_robot() {
        for n in 1..=2 {
            let l = Layout::standard(n).unwrap();
            let belt = l.initial_belt();
            for p in &l.pickups {
                assert!(belt[p.spawn.col]);
            }
        }
    }

    #[test]
    fn next_bottle_arrives_one_period_later() {
        let l = Layout::standard(1).unwrap();
        let mut belt = l.initial_belt();
        let col = l.pickups[0].spawn.col;
        belt[col] = false;
        let mut arrivals = Vec::new();
        for t in 1..=24 {
            l.advance_belt(&mut belt, t);
            if belt[col] {
                arrivals.push(t);
                belt[col] = false;
            }
        }
        assert_eq!(arrivals, vec![8, 16, 24]);
    }

    #[test]
    fn mismatched_period_is_rejected() {
        let mut l = Layout::standard(1).unwrap();
        l.pickups[0].spawn_period = 6;
        assert!(l.validate().is_err());
        let mut l = Layout::standard(1).unwrap();
        l.pickups[0].box_cell = Cell::new(6, 4);
        l.pickups[0].spawn_period = 10;
        // A 10-step first robot no longer admits the 8-step cycle.
        assert!(l.validate().is_err());
    }

    #[test]
    fn shortest_step_routes_around_obstacles() {
        let l = Layout::standard(1).unwrap();
        let (a, d) = l
            .shortest_step(Cell::new(1, 4), &[Cell::new(4, 4)], &[Cell::new(2, 4)])
            .unwrap();
        assert_eq!(d, 5);
        assert!(matches!(a, Some(Action::Left) | Some(Action::Right)));
    }
}
