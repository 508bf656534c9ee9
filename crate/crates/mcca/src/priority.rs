//! Decentralized priority determination: every tick each robot decides for
//! itself whether it acts as a head (drives for its own goal, ignoring other
//! robots' masked velocities) or as a normal robot (yields in masked-velocity
//! space). Freshly demoted robots sit out a tabu period so the decision does
//! not flap, and accumulated head time serves as the demotion tiebreaker.

use serde::{Deserialize, Serialize};

use crate::geometry::in_vo_infinite;
use crate::mcca::{mvo, MaskedVelocity};
use crate::simulator::RobotState;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityState {
    pub is_head: bool,
    /// Ticks left before the robot may claim head priority again.
    pub tabu_remaining: u32,
    /// Ticks spent as head since the last goal arrival.
    pub importance: u64,
}

impl PriorityState {
    pub fn label(&self) -> &'static str {
        if self.is_head {
            "head"
        } else {
            "normal"
        }
    }
}

/// Decides whether the head masked velocity of `me` conflicts with an
/// existing head: it leads into the pair's untruncated MVO while the two
/// intentions oppose (nonpositive dot product), as in a head-on encounter.
/// With aligned intentions the robot behind can simply follow the one in
/// front, so that case is not a conflict.
pub(crate) fn conflicts_with_head(
    me: &RobotState,
    candidate: MaskedVelocity,
    head: &RobotState,
) -> bool {
    let cone = match mvo(me, head, head.masked_velocity, f64::INFINITY) {
        Ok(c) => c,
        Err(_) => return true,
    };
    in_vo_infinite(candidate.v - head.masked_velocity.v, &cone)
        && candidate.v.dot(head.masked_velocity.v) <= 0.0
}

/// One priority update for `me` against the previous tick's broadcast
/// snapshot. `candidate` is the masked velocity `me` would broadcast as a
/// head, computed regardless of its current priority; `heads` are the robots
/// that were heads in the snapshot.
pub fn update_priority(
    me: &RobotState,
    candidate: MaskedVelocity,
    at_goal: bool,
    heads: &[&RobotState],
    eta: u32,
) -> PriorityState {
    let cur = me.priority;
    if at_goal {
        return PriorityState::default();
    }
    if cur.tabu_remaining > 0 {
        return PriorityState {
            is_head: false,
            tabu_remaining: cur.tabu_remaining - 1,
            importance: cur.importance,
        };
    }
    let demoted = heads.iter().any(|head| {
        head.id != me.id
            && conflicts_with_head(me, candidate, head)
            && (cur.importance < head.priority.importance
                || (cur.importance == head.priority.importance && me.id > head.id))
    });
    if demoted {
        return PriorityState {
            is_head: false,
            tabu_remaining: eta,
            importance: cur.importance,
        };
    }
    PriorityState {
        is_head: true,
        tabu_remaining: 0,
        importance: cur.importance + 1,
    }
}
