/// Fixed-size binary tree of nonnegative weights supporting O(log n) update
/// and weighted sampling. Parents are recomputed from their children on
/// every update, so sums never drift.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(len: usize) -> Self {
        let leaves = len.max(1).next_power_of_two();
        Self { leaves, nodes: vec![0.0; 2 * leaves] }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.nodes[self.leaves + idx]
    }

    pub fn set(&mut self, idx: usize, w: f64) {
        debug_assert!(w >= 0.0 && w.is_finite());
        let mut pos = self.leaves + idx;
        self.nodes[pos] = w;
        while pos > 1 {
            pos /= 2;
            self.nodes[pos] = self.nodes[2 * pos] + self.nodes[2 * pos + 1];
        }
    }

    /// Leaf whose cumulative interval contains `u * total`, `u` in `[0, 1)`.
    /// Never returns a zero-weight leaf while the total is positive.
    pub fn sample(&self, u: f64) -> usize {
        let mut target = u * self.total();
        let mut pos = 1;
        while pos < self.leaves {
            let left = self.nodes[2 * pos];
            let right = self.nodes[2 * pos + 1];
            if (target < left && left > 0.0) || right <= 0.0 {
                pos *= 2;
            } else {
                target -= left;
                pos = 2 * pos + 1;
            }
        }
        pos - self.leaves
    }
}
