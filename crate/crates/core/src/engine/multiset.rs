//! Ordered multiset of waiting tasks with prefix counts and sums.
//!
//! An arena treap keyed by `(remaining, index)`; every node carries the size
//! and total remaining time of its subtree.

use std::cmp::Ordering;

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Task {
    pub remaining: f64,
    pub index: i64,
}

impl Task {
    fn cmp_key(&self, other: &Task) -> Ordering {
        self.remaining.total_cmp(&other.remaining).then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone)]
struct Node {
    task: Task,
    prio: u64,
    left: u32,
    right: u32,
    size: u32,
    sum: f64,
}

#[derive(Debug, Clone)]
pub struct TaskSet {
    nodes: Vec<Node>,
    free: Vec<u32>,
    root: u32,
    rng: u64,
}

impl Default for TaskSet {
    fn default() -> Self {
        Self::new()
    }
}

impl TaskSet {
    pub fn new() -> Self {
        TaskSet { nodes: Vec::new(), free: Vec::new(), root: NIL, rng: 0x9E37_79B9_7F4A_7C15 }
    }

    fn next_prio(&mut self) -> u64 {
        // xorshift64*
        let mut x = self.rng;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.rng = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    fn size(&self, n: u32) -> u32 {
        if n == NIL {
            0
        } else {
            self.nodes[n as usize].size
        }
    }

    fn sum(&self, n: u32) -> f64 {
        if n == NIL {
            0.0
        } else {
            self.nodes[n as usize].sum
        }
    }

    fn pull(&mut self, n: u32) {
        let (l, r) = (self.nodes[n as usize].left, self.nodes[n as usize].right);
        let size = self.size(l) + self.size(r) + 1;
        let sum = self.sum(l) + self.sum(r) + self.nodes[n as usize].task.remaining;
        let node = &mut self.nodes[n as usize];
        node.size = size;
        node.sum = sum;
    }

    // Splits into (< key, >= key).
    fn split(&mut self, n: u32, key: &Task) -> (u32, u32) {
        if n == NIL {
            return (NIL, NIL);
        }
        if self.nodes[n as usize].task.cmp_key(key) == Ordering::Less {
            let (a, b) = self.split(self.nodes[n as usize].right, key);
            self.nodes[n as usize].right = a;
            self.pull(n);
            (n, b)
        } else {
            let (a, b) = self.split(self.nodes[n as usize].left, key);
            self.nodes[n as usize].left = b;
            self.pull(n);
            (a, n)
        }
    }

    fn merge(&mut self, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.nodes[a as usize].prio > self.nodes[b as usize].prio {
            let r = self.merge(self.nodes[a as usize].right, b);
            self.nodes[a as usize].right = r;
            self.pull(a);
            a
        } else {
            let l = self.merge(a, self.nodes[b as usize].left);
            self.nodes[b as usize].left = l;
            self.pull(b);
            b
        }
    }

    pub fn insert(&mut self, task: Task) {
        let prio = self.next_prio();
        let node = Node { task, prio, left: NIL, right: NIL, size: 1, sum: task.remaining };
        let id = match self.free.pop() {
            Some(id) => {
                self.nodes[id as usize] = node;
                id
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        };
        let (a, b) = self.split(self.root, &task);
        let left = self.merge(a, id);
        self.root = self.merge(left, b);
    }

    fn pop_min_at(&mut self, n: u32) -> (u32, u32) {
        let l = self.nodes[n as usize].left;
        if l == NIL {
            return (self.nodes[n as usize].right, n);
        }
        let (nl, removed) = self.pop_min_at(l);
        self.nodes[n as usize].left = nl;
        self.pull(n);
        (n, removed)
    }

    pub fn pop_min(&mut self) -> Option<Task> {
        if self.root == NIL {
            return None;
        }
        let (root, removed) = self.pop_min_at(self.root);
        self.root = root;
        self.free.push(removed);
        Some(self.nodes[removed as usize].task)
    }

    pub fn min(&self) -> Option<Task> {
        let mut n = self.root;
        if n == NIL {
            return None;
        }
        while self.nodes[n as usize].left != NIL {
            n = self.nodes[n as usize].left;
        }
        Some(self.nodes[n as usize].task)
    }

    pub fn len(&self) -> usize {
        self.size(self.root) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.root == NIL
    }

    /// Sum of all remaining times.
    pub fn total(&self) -> f64 {
        self.sum(self.root)
    }

    /// Count and summed remaining time of tasks with `remaining <= a`.
    pub fn prefix(&self, a: f64) -> (usize, f64) {
        let mut n = self.root;
        let mut count = 0u32;
        let mut sum = 0.0;
        while n != NIL {
            let node = &self.nodes[n as usize];
            if node.task.remaining <= a {
                count += self.size(node.left) + 1;
                sum += self.sum(node.left) + node.task.remaining;
                n = node.right;
            } else {
                n = node.left;
            }
        }
        (count as usize, sum)
    }

    /// Tasks in ascending `(remaining, index)` order.
    pub fn to_vec(&self) -> Vec<Task> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = Vec::new();
        let mut n = self.root;
        while n != NIL || !stack.is_empty() {
            while n != NIL {
                stack.push(n);
                n = self.nodes[n as usize].left;
            }
            let top = stack.pop().expect("stack nonempty");
            out.push(self.nodes[top as usize].task);
            n = self.nodes[top as usize].right;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn task(remaining: f64, index: i64) -> Task {
        Task { remaining, index }
    }

    #[test]
    fn ties_pop_in_index_order() {
        let mut s = TaskSet::new();
        s.insert(task(1.0, 5));
        s.insert(task(1.0, -2));
        s.insert(task(0.5, 9));
        assert_eq!(s.pop_min().unwrap().index, 9);
        assert_eq!(s.pop_min().unwrap().index, -2);
        assert_eq!(s.pop_min().unwrap().index, 5);
        assert!(s.pop_min().is_none());
    }

    #[test]
    fn prefix_is_closed_on_the_right() {
        let mut s = TaskSet::new();
        for (k, r) in [0.5, 0.5, 2.0].into_iter().enumerate() {
            s.insert(task(r, k as i64));
        }
        assert_eq!(s.prefix(0.4), (0, 0.0));
        assert_eq!(s.prefix(0.5), (2, 1.0));
        assert_eq!(s.prefix(10.0), (3, 3.0));
        assert_eq!(s.total(), 3.0);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insert(f64),
        Pop,
    }

    proptest! {
        #[test]
        fn matches_sorted_vec(ops in prop::collection::vec(prop_oneof![
            3 => (0.0f64..10.0).prop_map(|x| Op::Insert((x * 4.0).round() / 4.0 + 0.25)),
            1 => Just(Op::Pop),
        ], 0..200), cut in 0.0f64..11.0) {
            let mut s = TaskSet::new();
            let mut reference: Vec<Task> = Vec::new();
            for (k, op) in ops.into_iter().enumerate() {
                match op {
                    Op::Insert(r) => {
                        s.insert(task(r, k as i64));
                        reference.push(task(r, k as i64));
                        reference.sort_by(|a, b| a.cmp_key(b));
                    }
                    Op::Pop => {
                        let expect = if reference.is_empty() { None } else { Some(reference.remove(0)) };
                        prop_assert_eq!(s.pop_min(), expect);
                    }
                }
            }
            prop_assert_eq!(s.to_vec(), reference.clone());
            prop_assert_eq!(s.len(), reference.len());
            let (c, sum) = s.prefix(cut);
            let below: Vec<&Task> = reference.iter().filter(|t| t.remaining <= cut).collect();
            prop_assert_eq!(c, below.len());
            prop_assert!((sum - below.iter().map(|t| t.remaining).sum::<f64>()).abs() < 1e-9);
            prop_assert_eq!(s.min(), reference.first().copied());
        }
    }
}
