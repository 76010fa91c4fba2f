//! Fusion of elementary tasks into runtime tasks.
//!
//! One pack is open per (CE, kind). A new elementary task first closes
//! every other open pack whose accesses conflict with its own, then joins
//! the pack of its key. Open packs are therefore pairwise independent, and
//! inserting them in any order preserves the program order of every pair
//! of conflicting elementary tasks.

use crate::runtime::{Access, ExecCtx, HandleId, Runtime, RuntimeError, TaskDesc, TaskResult, TaskTags};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PackKind {
    Border,
    Inner,
    Faces,
    /// All work of one temporal level confined to the inner component.
    Large(u8),
}

impl PackKind {
    pub fn name(&self) -> &'static str {
        match self {
            PackKind::Border => "border",
            PackKind::Inner => "inner",
            PackKind::Faces => "faces",
            PackKind::Large(_) => "large",
        }
    }
}

pub type TaskFn = Box<dyn FnOnce(&ExecCtx<'_>) -> TaskResult + Send>;

pub struct Elementary {
    pub ce: u32,
    pub kind: PackKind,
    pub subiteration: u32,
    pub priority: u32,
    pub accesses: Vec<(HandleId, Access)>,
    pub run: TaskFn,
}

struct OpenPack {
    ce: u32,
    kind: PackKind,
    subiteration: u32,
    priority: u32,
    accesses: Vec<(HandleId, Access)>,
    members: Vec<TaskFn>,
}

fn merge_into(acc: &mut Vec<(HandleId, Access)>, more: &[(HandleId, Access)]) {
    for &(h, a) in more {
        match acc.iter_mut().find(|(x, _)| *x == h) {
            Some(e) => e.1 = e.1.merge(a),
            None => acc.push((h, a)),
        }
    }
}

pub fn conflicts(a: &[(HandleId, Access)], b: &[(HandleId, Access)]) -> bool {
    a.iter().any(|&(h, x)| b.iter().any(|&(g, y)| h == g && (x.writes() || y.writes())))
}

pub struct Packer {
    enabled: bool,
    open: Vec<OpenPack>,
    pub elementary: u64,
    pub inserted: u64,
}

impl Packer {
    pub fn new(enabled: bool) -> Self {
        Self { enabled, open: Vec::new(), elementary: 0, inserted: 0 }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn push(&mut self, rt: &Runtime, e: Elementary) -> Result<(), RuntimeError> {
        self.elementary += 1;
        if !self.enabled {
            let tags = TaskTags { kind: e.kind.name(), ce: Some(e.ce), subiteration: Some(e.subiteration) };
            rt.insert(TaskDesc { accesses: e.accesses, priority: e.priority, tags, body: crate::runtime::TaskBody::Inline(e.run) })?;
            self.inserted += 1;
            return Ok(());
        }
        let mut i = 0;
        while i < self.open.len() {
            let p = &self.open[i];
            if (p.ce, p.kind) != (e.ce, e.kind) && conflicts(&p.accesses, &e.accesses) {
                self.close(rt, i)?;
            } else {
                i += 1;
            }
        }
        match self.open.iter_mut().find(|p| (p.ce, p.kind) == (e.ce, e.kind)) {
            Some(p) => {
                merge_into(&mut p.accesses, &e.accesses);
                p.members.push(e.run);
            }
            None => self.open.push(OpenPack {
                ce: e.ce,
                kind: e.kind,
                subiteration: e.subiteration,
                priority: e.priority,
                accesses: e.accesses,
                members: vec![e.run],
            }),
        }
        Ok(())
    }

    /// Inserts a task that must not be fused, after closing every open
    /// pack it conflicts with.
    pub fn insert_direct(&mut self, rt: &Runtime, task: TaskDesc) -> Result<(), RuntimeError> {
        let mut i = 0;
        while i < self.open.len() {
            if conflicts(&self.open[i].accesses, &task.accesses) {
                self.close(rt, i)?;
            } else {
                i += 1;
            }
        }
        self.elementary += 1;
        self.inserted += 1;
        rt.insert(task)?;
        Ok(())
    }

    fn close(&mut self, rt: &Runtime, i: usize) -> Result<(), RuntimeError> {
        let p = self.open.remove(i);
        let members = p.members;
        let tags = TaskTags { kind: p.kind.name(), ce: Some(p.ce), subiteration: Some(p.subiteration) };
        rt.insert(TaskDesc::inline(tags, p.priority, p.accesses, move |ctx| {
            for m in members {
                m(ctx)?;
            }
            Ok(())
        }))?;
        self.inserted += 1;
        Ok(())
    }

    pub fn flush_all(&mut self, rt: &Runtime) -> Result<(), RuntimeError> {
        while !self.open.is_empty() {
            self.close(rt, 0)?;
        }
        Ok(())
    }

    pub fn open_packs(&self) -> usize {
        self.open.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::{RuntimeConfig, SchedulerKind};
    use parking_lot::Mutex;
    use std::sync::Arc;

    fn rt() -> Runtime {
        Runtime::new(RuntimeConfig::new(vec![1, 1], SchedulerKind::Prio)).unwrap()
    }

    fn elem(ce: u32, kind: PackKind, acc: Vec<(HandleId, Access)>, log: &Arc<Mutex<Vec<u32>>>, tag: u32) -> Elementary {
        let log = Arc::clone(log);
        Elementary {
            ce,
            kind,
            subiteration: 1,
            priority: 0,
            accesses: acc,
            run: Box::new(move |_| {
                log.lock().push(tag);
                Ok(())
            }),
        }
    }

    #[test]
    fn kind_change_gives_two_packs() {
        let r = rt();
        let h = r.register_handles(2);
        let log = Arc::new(Mutex::new(Vec::new()));
        let mut p = Packer::new(true);
        p.push(&r, elem(0, PackKind::Faces, vec![(h[0], Access::ReadWrite)], &log, 1)).unwrap();
        p.push(&r, elem(0, PackKind::Faces, vec![(h[0], Access::ReadWrite)], &log, 2)).unwrap();
        p.push(&r, elem(0, PackKind::Border, vec![(h[1], Access::ReadWrite)], &log, 3)).unwrap();
        p.flush_all(&r).unwrap();
        r.wait_all().unwrap();
        assert_eq!((p.elementary, p.inserted), (3, 2));
    }

    #[test]
    fn same_kind_chain_is_one_task() {
        let r = rt();
        let h = r.register_handle();
        let log = Arc::new(Mutex::new(Vec::new()));
        let mut p = Packer::new(true);
        for t in 0..5 {
            p.push(&r, elem(4, PackKind::Inner, vec![(h, Access::ReadWrite)], &log, t)).unwrap();
        }
        p.flush_all(&r).unwrap();
        r.wait_all().unwrap();
        assert_eq!((p.elementary, p.inserted), (5, 1));
        assert_eq!(*log.lock(), vec![0, 1, 2, 3, 4]);
        for t in 0..4 {
            p.push(&r, elem(4, PackKind::Large(0), vec![(h, Access::ReadWrite)], &log, t)).unwrap();
        }
        p.flush_all(&r).unwrap();
        assert_eq!(p.inserted, 2);
    }

    #[test]
    fn conflicting_pack_is_closed_first() {
        // A writes h0 (CE 0); B of CE 1 reads h0 and must see A's write
        let r = rt();
        let h = r.register_handles(2);
        let log = Arc::new(Mutex::new(Vec::new()));
        let mut p = Packer::new(true);
        p.push(&r, elem(0, PackKind::Border, vec![(h[0], Access::ReadWrite)], &log, 1)).unwrap();
        p.push(&r, elem(1, PackKind::Border, vec![(h[0], Access::Read), (h[1], Access::ReadWrite)], &log, 2)).unwrap();
        assert_eq!(p.open_packs(), 1);
        p.push(&r, elem(0, PackKind::Border, vec![(h[0], Access::ReadWrite)], &log, 3)).unwrap();
        p.flush_all(&r).unwrap();
        r.wait_all().unwrap();
        assert_eq!(*log.lock(), vec![1, 2, 3]);
        assert!(!conflicts(&[(h[0], Access::Read)], &[(h[0], Access::Read)]));
    }

    #[test]
    fn disabled_packer_inserts_everything() {
        let r = rt();
        let h = r.register_handle();
        let log = Arc::new(Mutex::new(Vec::new()));
        let mut p = Packer::new(false);
        for t in 0..3 {
            p.push(&r, elem(0, PackKind::Inner, vec![(h, Access::ReadWrite)], &log, t)).unwrap();
        }
        r.wait_all().unwrap();
        assert_eq!((p.elementary, p.inserted), (3, 3));
    }
}
