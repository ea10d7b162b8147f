//! Scheduler/worker tree and its placement on a 3D mesh.

use crate::error::SimError;
use crate::ids::CoreId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coord3D {
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl Coord3D {
    pub fn new(x: u32, y: u32, z: u32) -> Self {
        Coord3D { x, y, z }
    }
}

/// Manhattan distance on the mesh.
pub fn hop_distance(a: Coord3D, b: Coord3D) -> u32 {
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y) + a.z.abs_diff(b.z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Scheduler,
    Worker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpeedClass {
    Fast,
    Slow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreNode {
    pub id: CoreId,
    pub coord: Coord3D,
    pub role: Role,
    pub speed_class: SpeedClass,
    pub parent: Option<CoreId>,
    pub children: Vec<CoreId>,
    /// Scheduler level (0 = top). Workers sit one below the leaf schedulers.
    pub level: usize,
}

/// Shape of the core hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Number of schedulers per level, top first. `levels[0]` must be 1.
    pub levels: Vec<usize>,
    pub workers: usize,
    /// Mesh dimensions; derived from the core count when absent.
    pub mesh: Option<[u32; 3]>,
    pub scheduler_speed: SpeedClass,
    pub worker_speed: SpeedClass,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            levels: vec![1],
            workers: 1,
            mesh: None,
            scheduler_speed: SpeedClass::Fast,
            worker_speed: SpeedClass::Slow,
        }
    }
}

impl TopologyConfig {
    pub fn new(levels: Vec<usize>, workers: usize) -> Self {
        TopologyConfig {
            levels,
            workers,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let cfg = |m: String| Err(SimError::Config(m));
        if self.levels.is_empty() {
            return cfg("at least one scheduler level is required".into());
        }
        if self.levels[0] != 1 {
            return cfg(format!(
                "top level must hold exactly 1 scheduler, got {}",
                self.levels[0]
            ));
        }
        for w in self.levels.windows(2) {
            if w[1] < w[0] {
                return cfg(format!(
                    "level sizes must be non-decreasing so every scheduler has a child: {:?}",
                    self.levels
                ));
            }
        }
        let leaves = *self.levels.last().unwrap();
        if self.workers < leaves {
            return cfg(format!(
                "{} workers cannot populate {} leaf schedulers",
                self.workers, leaves
            ));
        }
        if let Some([x, y, z]) = self.mesh {
            let total = self.levels.iter().sum::<usize>() + self.workers;
            if x == 0 || y == 0 || z == 0 || (x as usize * y as usize * z as usize) < total {
                return cfg(format!("mesh {x}x{y}x{z} cannot hold {total} cores"));
            }
        }
        Ok(())
    }
}

/// The built hierarchy. Core ids follow a depth-first walk of the tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topology {
    pub cores: Vec<CoreNode>,
    pub mesh: [u32; 3],
    /// Scheduler ids per level, top first.
    pub sched_levels: Vec<Vec<CoreId>>,
    pub workers: Vec<CoreId>,
}

/// Split `n` children among `m` parents as contiguous, near-equal blocks.
fn block_owner(child: usize, n_children: usize, n_parents: usize) -> usize {
    child * n_parents / n_children
}

pub fn build_topology(cfg: &TopologyConfig) -> Result<Topology, SimError> {
    cfg.validate()?;
    // Abstract tree: nodes indexed (level, i); the worker level is levels.len().
    let depth = cfg.levels.len();
    let mut counts = cfg.levels.clone();
    counts.push(cfg.workers);
    let mut kids: Vec<Vec<Vec<usize>>> = counts.iter().map(|&n| vec![Vec::new(); n]).collect();
    for lvl in 0..depth {
        for c in 0..counts[lvl + 1] {
            let p = block_owner(c, counts[lvl + 1], counts[lvl]);
            kids[lvl][p].push(c);
        }
    }

    let total: usize = counts.iter().sum();
    let mut ids = vec![Vec::new(); counts.len()];
    for (lvl, &n) in counts.iter().enumerate() {
        ids[lvl] = vec![CoreId(0); n];
    }
    let mut order = Vec::with_capacity(total);
    let mut stack = vec![(0usize, 0usize)];
    while let Some((lvl, i)) = stack.pop() {
        ids[lvl][i] = CoreId(order.len() as u32);
        order.push((lvl, i));
        if lvl < depth {
            for &c in kids[lvl][i].iter().rev() {
                stack.push((lvl + 1, c));
            }
        }
    }

    let mesh = cfg.mesh.unwrap_or_else(|| default_mesh(total));
    let mut cores = Vec::with_capacity(total);
    for (pos, &(lvl, i)) in order.iter().enumerate() {
        let parent = if lvl == 0 {
            None
        } else {
            let p = block_owner(i, counts[lvl], counts[lvl - 1]);
            Some(ids[lvl - 1][p])
        };
        let children = if lvl < depth {
            kids[lvl][i].iter().map(|&c| ids[lvl + 1][c]).collect()
        } else {
            Vec::new()
        };
        let role = if lvl < depth { Role::Scheduler } else { Role::Worker };
        cores.push(CoreNode {
            id: CoreId(pos as u32),
            coord: snake_coord(pos, mesh),
            role,
            speed_class: if role == Role::Scheduler {
                cfg.scheduler_speed
            } else {
                cfg.worker_speed
            },
            parent,
            children,
            level: lvl,
        });
    }
    Ok(Topology {
        cores,
        mesh,
        sched_levels: ids[..depth].to_vec(),
        workers: ids[depth].clone(),
    })
}

fn default_mesh(total: usize) -> [u32; 3] {
    let mut s = 1u32;
    while (s as usize).pow(3) < total {
        s += 1;
    }
    [s, s, s]
}

/// Boustrophedon walk so consecutive positions are always mesh neighbours.
fn snake_coord(pos: usize, [dx, dy, _]: [u32; 3]) -> Coord3D {
    let plane = (dx * dy) as usize;
    let z = pos / plane;
    let in_plane = pos % plane;
    let row = in_plane / dx as usize;
    let col = in_plane % dx as usize;
    let y = if z.is_multiple_of(2) {
        row
    } else {
        dy as usize - 1 - row
    };
    let x = if (z * dy as usize + row).is_multiple_of(2) {
        col
    } else {
        dx as usize - 1 - col
    };
    Coord3D::new(x as u32, y as u32, z as u32)
}

impl Topology {
    pub fn core(&self, id: CoreId) -> &CoreNode {
        &self.cores[id.index()]
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn top(&self) -> CoreId {
        self.sched_levels[0][0]
    }

    pub fn depth(&self) -> usize {
        self.sched_levels.len()
    }

    pub fn schedulers(&self) -> impl Iterator<Item = CoreId> + '_ {
        self.sched_levels.iter().flatten().copied()
    }

    pub fn is_peer(&self, a: CoreId, b: CoreId) -> bool {
        let ca = self.core(a);
        ca.parent == Some(b) || self.core(b).parent == Some(a)
    }

    pub fn hops(&self, a: CoreId, b: CoreId) -> u32 {
        hop_distance(self.core(a).coord, self.core(b).coord)
    }

    /// True if `node` lies in the subtree rooted at `root` (inclusive).
    pub fn in_subtree(&self, root: CoreId, mut node: CoreId) -> bool {
        loop {
            if node == root {
                return true;
            }
            match self.core(node).parent {
                Some(p) => node = p,
                None => return false,
            }
        }
    }

    /// Index into `from.children` of the child whose subtree holds `dst`.
    pub fn child_toward(&self, from: CoreId, dst: CoreId) -> Option<usize> {
        self.core(from).children.iter().position(|&c| self.in_subtree(c, dst))
    }

    /// Next hop on the tree path from `from` to `dst` (`None` when equal).
    pub fn next_hop(&self, from: CoreId, dst: CoreId) -> Option<CoreId> {
        if from == dst {
            return None;
        }
        match self.child_toward(from, dst) {
            Some(i) => Some(self.core(from).children[i]),
            None => self.core(from).parent,
        }
    }

    /// Leaf scheduler of a worker, or the core itself for schedulers.
    pub fn leaf_sched_of(&self, worker: CoreId) -> CoreId {
        match self.core(worker).role {
            Role::Worker => self.core(worker).parent.expect("worker without parent"),
            Role::Scheduler => worker,
        }
    }

    pub fn workers_under(&self, root: CoreId) -> Vec<CoreId> {
        self.workers
            .iter()
            .copied()
            .filter(|&w| self.in_subtree(root, w))
            .collect()
    }
}
