//! Robot-vehicle counts and roles for a penetration rate.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest platoon the follower observation is padded for (60% of 22 vehicles).
pub const MAX_PLATOON: usize = 13;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatoonAssignment {
    pub n_rv: usize,
    /// Front of the contiguous block.
    pub leader: usize,
    /// Nearest to the leader first.
    pub followers: Vec<usize>,
}

pub fn platoon_assign(n_vehicles: usize, penetration: f64) -> Result<PlatoonAssignment> {
    if !(0.0..=1.0).contains(&penetration) {
        return Err(Error::config("penetration must lie in [0, 1]"));
    }
    let n_rv = (n_vehicles as f64 * penetration).round() as usize;
    if n_rv == 0 {
        return Err(Error::config(format!(
            "penetration {penetration} of {n_vehicles} vehicles yields no robot vehicles"
        )));
    }
    Ok(PlatoonAssignment {
        n_rv,
        leader: n_rv - 1,
        followers: (0..n_rv - 1).rev().collect(),
    })
}
