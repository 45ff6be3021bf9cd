use super::{Action, Cell, EnvState, RobotKind};
use crate::error::{config, Result};

/// Hand-coded shortest-path policy.
///
/// Each pick-up robot waits at its pick position, picks the bottle in front
/// of it, walks to its own box, drops and walks back. The mechanic heads for
/// the lowest-indexed failed robot and repairs it, otherwise returns to its
/// spawn cell and waits. Robots treat each other as obstacles.
pub fn scripted_oracle(state: &EnvState) -> Result<Vec<Action>> {
    let layout = state.layout();
    let robots = state.robots();
    let others = |i: usize| -> Vec<Cell> {
        robots
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, r)| r.position)
            .collect()
    };
    let walk = |i: usize, goals: &[Cell]| -> Result<Action> {
        let from = robots[i].position;
        match layout.shortest_step(from, goals, &others(i)) {
            Some((Some(a), _)) => Ok(a),
            Some((None, _)) => Ok(Action::Interact),
            // Path blocked by another robot: wait if the static layout has a
            // route, otherwise the layout is unusable.
            None => match layout.shortest_step(from, goals, &[]) {
                Some(_) => Ok(Action::Interact),
                None => Err(config(format!("robot {i} cannot reach {goals:?}"))),
            },
        }
    };

    let mut actions = Vec::with_capacity(robots.len());
    for (i, robot) in robots.iter().enumerate() {
        let action = match robot.kind {
            RobotKind::Pickup if robot.failed => Action::Interact,
            RobotKind::Pickup => {
                let spot = layout.pickups.get(i).ok_or_else(|| {
                    config(format!("robot {i} has no pick-up spot in the layout"))
                })?;
                if robot.carrying {
                    if spot.box_cell.is_adjacent(robot.position) {
                        Action::Interact
                    } else {
                        walk(i, &layout.drop_cells(i))?
                    }
                } else if robot.position == spot.spawn {
                    // Interact is a no-op while no bottle is in front.
                    Action::Interact
                } else {
                    walk(i, &[spot.spawn])?
                }
            }
            RobotKind::Mechanic => {
                let failed = robots
                    .iter()
                    .find(|r| r.kind == RobotKind::Pickup && r.failed);
                match failed {
                    Some(f) if f.position.is_adjacent(robot.position) => Action::Interact,
                    Some(f) => {
                        let goals: Vec<Cell> = layout
                            .neighbors(f.position)
                            .filter(|c| layout.is_walkable(*c))
                            .collect();
                        walk(i, &goals)?
                    }
                    None if robot.position == layout.mechanic_spawn => Action::Interact,
                    None => walk(i, &[layout.mechanic_spawn])?,
                }
            }
        };
        actions.push(action);
    }
    Ok(actions)
}
