//! Access rules shared by the serial oracle and the simulated runtime.
//!
//! A task may touch a node only through a declared footprint entry that
//! covers it, and not while the node lies inside something the task has
//! delegated to a child and not yet waited for.

use crate::api::program::Value;
use crate::dependency::ArgFlags;
use crate::error::Fault;
use crate::ids::{NodeId, RegionId, TaskPath};

/// Tree structure as seen by the checker.
pub trait TreeView {
    fn parent_of(&self, node: NodeId) -> Option<NodeId>;
    fn node_exists(&self, node: NodeId) -> bool;

    /// True if `anc` equals `node` or is one of its ancestors.
    fn within(&self, anc: NodeId, node: NodeId) -> bool {
        let mut cur = Some(node);
        while let Some(n) = cur {
            if n == anc {
                return true;
            }
            cur = self.parent_of(n);
        }
        false
    }
}

impl TreeView for crate::memory::Forest {
    fn parent_of(&self, node: NodeId) -> Option<NodeId> {
        self.parent(node)
    }
    fn node_exists(&self, node: NodeId) -> bool {
        self.exists(node)
    }
}

pub fn node_of(v: Value) -> Option<NodeId> {
    match v {
        Value::Region(r) => Some(NodeId::Region(r)),
        Value::Object(o) => Some(NodeId::Object(o.key)),
        Value::Scalar(_) => None,
    }
}

/// Flag well-formedness for one argument.
pub fn validate_flags(task: &TaskPath, v: Value, f: ArgFlags) -> Result<(), Fault> {
    let bad = |why: &str| {
        Err(Fault::BadFlags {
            task: task.clone(),
            why: why.to_string(),
        })
    };
    match v {
        Value::Scalar(_) if !f.contains(ArgFlags::SAFE) => bad("scalar arguments must be SAFE"),
        Value::Scalar(_) => Ok(()),
        Value::Region(_) if !f.contains(ArgFlags::REGION) => bad("region argument without REGION"),
        Value::Object(_) if f.contains(ArgFlags::REGION) => bad("object argument with REGION"),
        _ if !f.contains(ArgFlags::SAFE) && !f.intersects(ArgFlags::INOUT) => bad("argument needs IN or OUT"),
        _ => Ok(()),
    }
}

/// What one running task may touch.
#[derive(Debug, Clone)]
pub struct Footprint {
    task: TaskPath,
    held: Vec<(NodeId, ArgFlags)>,
    delegated: Vec<NodeId>,
    /// Nodes this task freed; hides them before the owner processes the free.
    gone: Vec<NodeId>,
}

impl Footprint {
    pub fn new(task: TaskPath, args: &[(Value, ArgFlags)]) -> Self {
        let held = args
            .iter()
            .filter(|(_, f)| !f.contains(ArgFlags::SAFE))
            .filter_map(|&(v, f)| node_of(v).map(|n| (n, f)))
            .collect();
        Footprint {
            task,
            held,
            delegated: Vec::new(),
            gone: Vec::new(),
        }
    }

    pub fn task(&self) -> &TaskPath {
        &self.task
    }

    pub fn delegated(&self) -> &[NodeId] {
        &self.delegated
    }

    fn undeclared(&self, what: String) -> Fault {
        Fault::UndeclaredAccess {
            task: self.task.clone(),
            what,
        }
    }

    fn live<T: TreeView>(&self, tree: &T, n: NodeId) -> bool {
        tree.node_exists(n) && !self.gone.iter().any(|&g| tree.within(g, n))
    }

    fn missing(v: Value) -> Fault {
        match v {
            Value::Region(r) => Fault::UnknownRegion(r),
            Value::Object(o) => Fault::UnknownObject(o.addr),
            Value::Scalar(_) => unreachable!(),
        }
    }

    /// The node behind `v`, which must be live and of the expected kind.
    pub fn node<T: TreeView>(&self, tree: &T, v: Value, want_region: bool) -> Result<NodeId, Fault> {
        let n = match (v, want_region) {
            (Value::Region(r), true) => NodeId::Region(r),
            (Value::Object(o), false) => NodeId::Object(o.key),
            _ => {
                return Err(Fault::BadOperand {
                    task: self.task.clone(),
                    why: format!(
                        "expected {}, got {v:?}",
                        if want_region { "a region" } else { "an object" }
                    ),
                })
            }
        };
        if self.live(tree, n) {
            Ok(n)
        } else {
            Err(Self::missing(v))
        }
    }

    fn covering<T: TreeView>(&self, tree: &T, n: NodeId) -> Option<ArgFlags> {
        self.held.iter().find(|&&(h, _)| tree.within(h, n)).map(|&(_, f)| f)
    }

    fn is_delegated<T: TreeView>(&self, tree: &T, n: NodeId) -> bool {
        self.delegated.iter().any(|&d| tree.within(d, n))
    }

    /// Read (`need = IN`) or write (`need = OUT`) of object data.
    pub fn check_data<T: TreeView>(&self, tree: &T, n: NodeId, need: ArgFlags) -> Result<(), Fault> {
        match self.covering(tree, n) {
            Some(f) if f.contains(need) && !f.contains(ArgFlags::NOTRANSFER) => {}
            _ => return Err(self.undeclared(format!("{n} ({need:?})"))),
        }
        if self.is_delegated(tree, n) {
            return Err(self.undeclared(format!("{n} while delegated")));
        }
        Ok(())
    }

    /// Allocation into region `r`.
    pub fn check_alloc<T: TreeView>(&self, tree: &T, r: RegionId) -> Result<(), Fault> {
        let n = NodeId::Region(r);
        match self.covering(tree, n) {
            Some(f) if f.contains(ArgFlags::OUT) => {}
            _ => return Err(self.undeclared(format!("allocation in {n}"))),
        }
        if self.is_delegated(tree, n) {
            return Err(self.undeclared(format!("allocation in delegated {n}")));
        }
        Ok(())
    }

    /// Freeing or moving node `n`.
    pub fn check_free<T: TreeView>(&self, tree: &T, n: NodeId) -> Result<(), Fault> {
        if n == NodeId::Region(RegionId::ROOT) {
            return Err(Fault::FreeRoot);
        }
        if self.held.iter().any(|&(h, _)| h == n) {
            return Err(Self::busy(n));
        }
        match self.covering(tree, n) {
            Some(f) if f.contains(ArgFlags::OUT) => {}
            _ => return Err(self.undeclared(format!("free of {n}"))),
        }
        if self.is_delegated(tree, n) || self.delegated.iter().any(|&d| tree.within(n, d)) {
            return Err(Self::busy(n));
        }
        Ok(())
    }

    fn busy(n: NodeId) -> Fault {
        match n {
            NodeId::Region(r) => Fault::BusyRegion(r),
            NodeId::Object(k) => Fault::BusyObject(k),
        }
    }

    pub fn forget(&mut self, n: NodeId) {
        self.gone.push(n);
    }

    fn check_passed<T: TreeView>(&self, tree: &T, args: &[(Value, ArgFlags)]) -> Result<Vec<NodeId>, Fault> {
        let mut nodes = Vec::new();
        for &(v, f) in args {
            validate_flags(&self.task, v, f)?;
            if f.contains(ArgFlags::SAFE) {
                continue;
            }
            let n = self.node(tree, v, f.contains(ArgFlags::REGION))?;
            match self.covering(tree, n) {
                Some(h) if h.covers(f) => {}
                _ => return Err(self.undeclared(format!("{n} passed as {f:?}"))),
            }
            if nodes.iter().any(|&m| tree.within(m, n) || tree.within(n, m)) {
                return Err(Fault::BadFlags {
                    task: self.task.clone(),
                    why: format!("overlapping arguments at {n}"),
                });
            }
            nodes.push(n);
        }
        Ok(nodes)
    }

    /// Validate a spawn and record its arguments as delegated.
    pub fn spawn<T: TreeView>(&mut self, tree: &T, args: &[(Value, ArgFlags)]) -> Result<(), Fault> {
        let nodes = self.check_passed(tree, args)?;
        self.delegated.extend(nodes);
        Ok(())
    }

    /// Validate a wait and take back everything inside its targets.
    pub fn wait<T: TreeView>(&mut self, tree: &T, args: &[(Value, ArgFlags)]) -> Result<Vec<NodeId>, Fault> {
        let nodes = self.check_passed(tree, args)?;
        self.delegated.retain(|&d| !nodes.iter().any(|&n| tree.within(n, d)));
        Ok(nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::api::program::ObjRef;
    use crate::ids::{Addr, ObjKey};
    use std::collections::BTreeMap;

    /// r0 -> r1 -> {o1, r2 -> o2}
    struct T(BTreeMap<NodeId, NodeId>);
    impl TreeView for T {
        fn parent_of(&self, n: NodeId) -> Option<NodeId> {
            self.0.get(&n).copied()
        }
        fn node_exists(&self, n: NodeId) -> bool {
            n == NodeId::Region(RegionId::ROOT) || self.0.contains_key(&n)
        }
    }
    fn r(i: u64) -> NodeId {
        NodeId::Region(RegionId(i))
    }
    fn o(i: u64) -> NodeId {
        NodeId::Object(ObjKey(i))
    }
    fn tree() -> T {
        T([(r(1), r(0)), (o(1), r(1)), (r(2), r(1)), (o(2), r(2))]
            .into_iter()
            .collect())
    }
    fn rv(i: u64) -> Value {
        Value::Region(RegionId(i))
    }
    fn ov(i: u64) -> Value {
        Value::Object(ObjRef {
            key: ObjKey(i),
            addr: Addr(i * 64),
        })
    }
    const RW: ArgFlags = ArgFlags::INOUT.union(ArgFlags::REGION);

    #[test]
    fn flags_are_validated() {
        let t = TaskPath::root();
        assert!(validate_flags(&t, Value::Scalar(1), ArgFlags::IN).is_err());
        assert!(validate_flags(&t, rv(1), ArgFlags::IN).is_err());
        assert!(validate_flags(&t, ov(1), ArgFlags::IN | ArgFlags::REGION).is_err());
        assert!(validate_flags(&t, ov(1), ArgFlags::NOTRANSFER).is_err());
        assert!(validate_flags(&t, ov(1), ArgFlags::SAFE).is_ok());
        assert!(validate_flags(&t, rv(1), RW).is_ok());
    }

    #[test]
    fn data_access_follows_footprint() {
        let tr = tree();
        let fp = Footprint::new(TaskPath::root(), &[(rv(2), ArgFlags::IN | ArgFlags::REGION)]);
        assert!(fp.check_data(&tr, o(2), ArgFlags::IN).is_ok());
        assert!(fp.check_data(&tr, o(2), ArgFlags::OUT).is_err());
        assert!(fp.check_data(&tr, o(1), ArgFlags::IN).is_err());
        let nt = Footprint::new(TaskPath::root(), &[(ov(1), ArgFlags::INOUT | ArgFlags::NOTRANSFER)]);
        assert!(nt.check_data(&tr, o(1), ArgFlags::IN).is_err());
    }

    #[test]
    fn delegation_blocks_until_wait() {
        let tr = tree();
        let mut fp = Footprint::new(TaskPath::root(), &[(rv(1), RW)]);
        fp.spawn(&tr, &[(rv(2), RW)]).unwrap();
        assert!(fp.check_data(&tr, o(2), ArgFlags::IN).is_err());
        assert!(fp.check_data(&tr, o(1), ArgFlags::IN).is_ok());
        assert_eq!(fp.check_free(&tr, o(2)), Err(Fault::BusyObject(ObjKey(2))));
        assert_eq!(fp.check_free(&tr, r(2)), Err(Fault::BusyRegion(RegionId(2))));
        fp.spawn(&tr, &[(ov(2), ArgFlags::IN)]).unwrap();
        fp.wait(&tr, &[(rv(1), RW)]).unwrap();
        assert!(fp.check_data(&tr, o(2), ArgFlags::OUT).is_ok());
    }

    #[test]
    fn spawn_rules() {
        let tr = tree();
        let mut fp = Footprint::new(TaskPath::root(), &[(rv(1), ArgFlags::IN | ArgFlags::REGION)]);
        assert!(fp.spawn(&tr, &[(ov(1), ArgFlags::INOUT)]).is_err());
        assert!(fp
            .spawn(&tr, &[(rv(2), ArgFlags::IN | ArgFlags::REGION), (ov(2), ArgFlags::IN)])
            .is_err());
        fp.spawn(&tr, &[(ov(1), ArgFlags::IN), (Value::Scalar(3), ArgFlags::SAFE)])
            .unwrap();
        assert_eq!(fp.delegated(), &[o(1)]);
    }

    #[test]
    fn free_rules() {
        let tr = tree();
        let mut fp = Footprint::new(TaskPath::root(), &[(rv(1), RW)]);
        assert_eq!(fp.check_free(&tr, r(1)), Err(Fault::BusyRegion(RegionId(1))));
        assert_eq!(fp.check_free(&tr, r(0)), Err(Fault::FreeRoot));
        fp.check_free(&tr, r(2)).unwrap();
        fp.forget(r(2));
        assert_eq!(fp.node(&tr, ov(2), false), Err(Fault::UnknownObject(Addr(128))));
        assert!(fp.node(&tr, ov(1), false).is_ok());
    }
}
