//! Grayscale rendering.
//!
//! The frame is 84x84. The top `strip_height` rows are left blank for the
//! visual communication map; the grid is drawn below it with one
//! `cell`x`cell` block per grid cell, centred horizontally.

use super::{EnvState, RobotKind};
use crate::frame::{Frame, Rect};

pub const FRAME_SIZE: usize = 84;

/// Pixel intensity of every entity class.
pub mod intensity {
    pub const BACKGROUND: u8 = 0;
    pub const BELT: u8 = 64;
    pub const FAILED_OVERLAY: u8 = 96;
    pub const BOX: u8 = 128;
    pub const MECHANIC: u8 = 160;
    pub const PICKUP: u8 = 192;
    pub const BOTTLE: u8 = 255;

    pub const ALL: [u8; 7] = [BACKGROUND, BELT, FAILED_OVERLAY, BOX, MECHANIC, PICKUP, BOTTLE];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenderGeometry {
    pub frame_size: usize,
    pub strip_height: usize,
    pub cell: usize,
}

impl Default for RenderGeometry {
    fn default() -> Self {
        Self {
            frame_size: FRAME_SIZE,
            strip_height: 4,
            cell: 8,
        }
    }
}

impl RenderGeometry {
    pub fn fits(&self, width: usize, height: usize) -> bool {
        width * self.cell <= self.frame_size
            && self.strip_height + height * self.cell <= self.frame_size
    }

    /// Rows reserved for the visual map.
    pub fn strip(&self) -> Rect {
        Rect::new(0, 0, self.frame_size, self.strip_height)
    }

    /// Everything below the strip.
    pub fn environment_region(&self) -> Rect {
        Rect::new(
            0,
            self.strip_height,
            self.frame_size,
            self.frame_size - self.strip_height,
        )
    }

    fn origin_x(&self, width: usize) -> usize {
        (self.frame_size - width * self.cell) / 2
    }

    pub fn cell_rect(&self, grid_width: usize, row: usize, col: usize) -> Rect {
        Rect::new(
            self.origin_x(grid_width) + col * self.cell,
            self.strip_height + row * self.cell,
            self.cell,
            self.cell,
        )
    }
}

fn inset(r: Rect, by: usize) -> Rect {
    Rect::new(r.x + by, r.y + by, r.width - 2 * by, r.height - 2 * by)
}

/// Draws the world. Belt cells are filled completely; bottles, boxes and
/// robots are drawn as inset squares so neighbouring entities stay
/// distinguishable. A failed pick-up robot carries a darker centre patch.
/// Whether a robot holds a bottle is not drawn.
pub fn render(state: &EnvState) -> Frame {
    let geo = RenderGeometry::default();
    let layout = state.layout();
    let mut frame = Frame::new(geo.frame_size, geo.frame_size);
    let cell = |r: usize, c: usize| geo.cell_rect(layout.width, r, c);

    for col in 0..layout.width {
        let r = cell(layout.belt_row, col);
        frame.fill(r, intensity::BELT);
        if state.belt()[col] {
            frame.fill(inset(r, 2), intensity::BOTTLE);
        }
    }
    for p in &layout.pickups {
        frame.fill(inset(cell(p.box_cell.row, p.box_cell.col), 1), intensity::BOX);
    }
    for robot in state.robots() {
        let r = cell(robot.position.row, robot.position.col);
        let body = match robot.kind {
            RobotKind::Pickup => intensity::PICKUP,
            RobotKind::Mechanic => intensity::MECHANIC,
        };
        frame.fill(inset(r, 1), body);
        if robot.failed {
            frame.fill(inset(r, 2), intensity::FAILED_OVERLAY);
        }
    }
    frame
}
