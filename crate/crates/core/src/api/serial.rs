//! Serial oracle: runs a program depth-first on one thread with every spawn
//! executed at its call site and every wait a no-op.

use std::collections::BTreeMap;

use crate::api::exec::{Action, TaskCtx};
use crate::api::lineage::{initial_digest, Digest, LineageReport};
use crate::api::program::{HandleVal, ObjRef, Program, Value};
use crate::error::Fault;
use crate::ids::{Addr, CoreId, NodeId, ObjKey, RegionId};
use crate::memory::{reserved_bytes, Forest, ObjectMeta};

#[derive(Debug, Clone, Default)]
pub struct SerialRun {
    pub lineage: LineageReport,
    pub tasks: u64,
    /// Sum of all `Compute` cycles.
    pub work: u64,
    pub reads: u64,
    pub writes: u64,
    pub live_objects: usize,
    pub live_regions: usize,
}

struct State {
    forest: Forest,
    digests: BTreeMap<ObjKey, Digest>,
    next_region: u64,
    next_addr: u64,
}

impl State {
    fn digest(&mut self, k: ObjKey) -> Digest {
        *self.digests.entry(k).or_insert_with(|| initial_digest(k))
    }

    fn place(&mut self, key: ObjKey, size: u64, region: RegionId) -> Value {
        let addr = Addr(self.next_addr);
        self.next_addr += reserved_bytes(size);
        self.forest.add_object(ObjectMeta {
            key,
            addr,
            size,
            region,
            producer: None,
        });
        self.digests.entry(key).or_insert_with(|| initial_digest(key));
        Value::Object(ObjRef { key, addr })
    }
}

pub fn run_serial(prog: &Program) -> Result<SerialRun, Fault> {
    let mut st = State {
        forest: Forest::new(CoreId(0)),
        digests: BTreeMap::new(),
        next_region: 1,
        next_addr: 1 << 20,
    };
    let mut run = SerialRun::default();
    let mut stack = vec![TaskCtx::new(
        prog,
        Default::default(),
        prog.root,
        prog.root_task_args(),
    )?];
    while let Some(top) = stack.last_mut() {
        let Some(action) = top.decode(prog, &st.forest)? else {
            let done = stack.pop().expect("non-empty");
            run.tasks += 1;
            run.lineage.observations.insert(done.tid, done.lineage.read_fp);
            continue;
        };
        let result = match action {
            Action::Compute(c) => {
                run.work += c;
                HandleVal::None
            }
            Action::Read(k) => {
                let d = st.digest(k);
                top.lineage.read(d);
                run.reads += 1;
                HandleVal::None
            }
            Action::Write(k) => {
                let d = st.digest(k);
                st.digests.insert(k, top.lineage.write(d));
                run.writes += 1;
                HandleVal::None
            }
            Action::Alloc {
                region,
                size,
                keys,
                bulk,
            } => {
                let vals: Vec<Value> = keys.into_iter().map(|k| st.place(k, size, region)).collect();
                if bulk {
                    HandleVal::Many(vals)
                } else {
                    HandleVal::One(vals[0])
                }
            }
            Action::Ralloc { parent, level } => {
                let id = RegionId(st.next_region);
                st.next_region += 1;
                st.forest.add_region(id, parent, CoreId(0), level)?;
                HandleVal::One(Value::Region(id))
            }
            Action::Free(k) => {
                st.forest.remove_object(k);
                HandleVal::None
            }
            Action::Rfree(r) => {
                let regions = st.forest.subtree_regions(r);
                let objs: Vec<ObjKey> = st
                    .forest
                    .subtree_objects(NodeId::Region(r))
                    .iter()
                    .map(|o| o.key)
                    .collect();
                for k in objs {
                    st.forest.remove_object(k);
                }
                for id in regions.into_iter().rev() {
                    st.forest.remove_region(id);
                }
                HandleVal::None
            }
            Action::Realloc { key, size, region } => {
                st.forest.remove_object(key);
                HandleVal::One(st.place(key, size, region))
            }
            Action::Spawn { path, func, args } => {
                top.complete(HandleVal::None);
                let child = TaskCtx::new(prog, path, func, args)?;
                stack.push(child);
                continue;
            }
            Action::Wait { .. } => HandleVal::None,
        };
        top.complete(result);
    }
    run.lineage.objects = st.digests;
    run.live_objects = st.forest.object_count();
    run.live_regions = st.forest.region_count();
    Ok(run)
}
