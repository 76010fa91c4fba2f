use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use super::TaskId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SchedulerKind {
    /// One queue, insertion order.
    Fifo,
    /// One FIFO per priority, highest priority first.
    #[default]
    Prio,
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerKind::Fifo => "fifo",
            SchedulerKind::Prio => "prio",
        })
    }
}

impl FromStr for SchedulerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fifo" => Ok(SchedulerKind::Fifo),
            "prio" => Ok(SchedulerKind::Prio),
            _ => Err(format!("unknown scheduler `{s}` (expected fifo or prio)")),
        }
    }
}

/// Ready queue. Not synchronised; the runtime calls it under its lock.
#[derive(Debug)]
pub struct Scheduler {
    kind: SchedulerKind,
    queues: BTreeMap<u32, VecDeque<TaskId>>,
    len: usize,
}

impl Scheduler {
    pub fn new(kind: SchedulerKind) -> Self {
        Self { kind, queues: BTreeMap::new(), len: 0 }
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    pub fn push(&mut self, task: TaskId, priority: u32) {
        let p = match self.kind {
            SchedulerKind::Fifo => 0,
            SchedulerKind::Prio => priority,
        };
        self.queues.entry(p).or_default().push_back(task);
        self.len += 1;
    }

    pub fn pop(&mut self) -> Option<TaskId> {
        let (&p, q) = self.queues.iter_mut().rev().find(|(_, q)| !q.is_empty())?;
        let t = q.pop_front();
        if q.is_empty() {
            self.queues.remove(&p);
        }
        self.len -= 1;
        t
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prio_pops_by_decreasing_priority() {
        let mut s = Scheduler::new(SchedulerKind::Prio);
        s.push(10, 0);
        s.push(11, 0);
        s.push(12, 2);
        assert_eq!((s.pop(), s.pop(), s.pop(), s.pop()), (Some(12), Some(10), Some(11), None));
    }

    #[test]
    fn fifo_ignores_priority() {
        let mut s = Scheduler::new(SchedulerKind::Fifo);
        s.push(1, 0);
        s.push(2, 9);
        assert_eq!(s.len(), 2);
        assert_eq!((s.pop(), s.pop()), (Some(1), Some(2)));
        assert!(s.is_empty());
    }

    #[test]
    fn parse_names() {
        assert_eq!("prio".parse::<SchedulerKind>().unwrap(), SchedulerKind::Prio);
        assert_eq!(SchedulerKind::Fifo.to_string(), "fifo");
        assert!("lifo".parse::<SchedulerKind>().is_err());
    }
}
