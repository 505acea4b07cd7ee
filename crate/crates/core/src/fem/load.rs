use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mesh::Point;

use super::FemError;

/// How a total force is spread over time steps and load nodes.
///
/// At step `i` of `steps`, every load node carries `F_total · i / (steps · nodes_per_case)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForceSchedule {
    pub steps: usize,
    pub nodes_per_case: usize,
}

impl ForceSchedule {
    /// One load node per simulation, 30 steps.
    pub const SINGLE_NODE: Self = Self {
        steps: 30,
        nodes_per_case: 1,
    };

    /// A 100-node surface patch per simulation, 30 steps.
    pub const PATCH: Self = Self {
        steps: 30,
        nodes_per_case: 100,
    };

    pub fn force(&self, total: Point, step: usize) -> Result<Point, FemError> {
        scheduled_force(*self, total, step)
    }
}

/// Per-node force at time step `step` (1-based) for the given schedule.
pub fn scheduled_force(schedule: ForceSchedule, total: Point, step: usize) -> Result<Point, FemError> {
    if step == 0 || step > schedule.steps {
        return Err(FemError::InvalidTimeStep {
            step,
            steps: schedule.steps,
        });
    }
    if schedule.nodes_per_case == 0 {
        return Err(FemError::EmptyLoadSet);
    }
    let denom = (schedule.steps * schedule.nodes_per_case) as f64;
    Ok(total.map(|f| f * step as f64 / denom))
}

/// One simulation: the same force vector applied at every load node.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadCase {
    pub load_nodes: Vec<usize>,
    pub force_per_node: Point,
    pub time_step: usize,
    pub fixed_nodes: Arc<BTreeSet<usize>>,
}

impl LoadCase {
    pub fn new(
        load_nodes: Vec<usize>,
        force_per_node: Point,
        time_step: usize,
        steps: usize,
        fixed_nodes: Arc<BTreeSet<usize>>,
    ) -> Result<Self, FemError> {
        if time_step == 0 || time_step > steps {
            return Err(FemError::InvalidTimeStep { step: time_step, steps });
        }
        if let Some(&n) = load_nodes.iter().find(|n| fixed_nodes.contains(n)) {
            return Err(FemError::LoadOnFixedNode(n));
        }
        Ok(Self {
            load_nodes,
            force_per_node,
            time_step,
            fixed_nodes,
        })
    }

    /// Nodal force vectors for a mesh of `nodes` nodes.
    pub fn loads(&self, nodes: usize) -> Result<Vec<Point>, FemError> {
        let mut f = vec![[0.0; 3]; nodes];
        for &n in &self.load_nodes {
            if n >= nodes {
                return Err(FemError::NodeOutOfRange { index: n, nodes });
            }
            for a in 0..3 {
                f[n][a] += self.force_per_node[a];
            }
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_schedule() {
        let total = [0.0, 0.0, 1.35];
        assert_eq!(scheduled_force(ForceSchedule::SINGLE_NODE, total, 30).unwrap()[2], 1.35);
        assert_eq!(scheduled_force(ForceSchedule::SINGLE_NODE, total, 15).unwrap()[2], 0.675);
        let first = scheduled_force(ForceSchedule::SINGLE_NODE, total, 1).unwrap()[2];
        assert_eq!(first, 1.35 / 30.0);
        assert!((first - 0.045).abs() <= f64::EPSILON * 0.045);
    }

    #[test]
    fn patch_schedule() {
        let f = scheduled_force(ForceSchedule::PATCH, [20.0, 0.0, 0.0], 30).unwrap();
        assert_eq!(f, [0.2, 0.0, 0.0]);
    }

    #[test]
    fn step_out_of_range() {
        for step in [0, 31] {
            assert_eq!(
                scheduled_force(ForceSchedule::SINGLE_NODE, [1.0; 3], step).unwrap_err(),
                FemError::InvalidTimeStep { step, steps: 30 }
            );
        }
    }

    #[test]
    fn load_case_rejects_fixed_load_node() {
        let fixed = Arc::new(BTreeSet::from([1, 2]));
        assert_eq!(
            LoadCase::new(vec![0, 2], [1.0; 3], 1, 30, fixed).unwrap_err(),
            FemError::LoadOnFixedNode(2)
        );
    }
}
