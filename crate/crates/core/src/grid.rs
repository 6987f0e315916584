//! Growable array indexed by signed grid indices.
//!
//! Walk cells live on Z and paths wander both sides of the origin; this keeps
//! per-cell state (counts, deviations, event lists) addressable by the cell
//! index itself without offset bookkeeping at every call site.

#[derive(Debug, Clone)]
pub struct OffsetVec<T> {
    data: Vec<T>,
    /// Grid index of data[0].
    origin: i64,
}

impl<T: Clone + Default> OffsetVec<T> {
    pub fn new() -> Self {
        OffsetVec { data: Vec::new(), origin: 0 }
    }

    /// Preallocates [lo, hi] to avoid regrowth in hot loops.
    pub fn with_range(lo: i64, hi: i64) -> Self {
        let len = (hi - lo + 1).max(0) as usize;
        OffsetVec { data: vec![T::default(); len], origin: lo }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Smallest index currently stored (meaningless when empty).
    pub fn low(&self) -> i64 {
        self.origin
    }

    /// Largest index currently stored (meaningless when empty).
    pub fn high(&self) -> i64 {
        self.origin + self.data.len() as i64 - 1
    }

    pub fn contains(&self, idx: i64) -> bool {
        !self.data.is_empty() && idx >= self.low() && idx <= self.high()
    }

    pub fn get(&self, idx: i64) -> Option<&T> {
        if self.contains(idx) {
            Some(&self.data[(idx - self.origin) as usize])
        } else {
            None
        }
    }

    /// Mutable access, growing the backing store as needed. Growth doubles
    /// outward so amortized cost stays O(1) per access.
    pub fn get_mut_grow(&mut self, idx: i64) -> &mut T {
        if self.data.is_empty() {
            self.data.push(T::default());
            self.origin = idx;
        } else if idx < self.low() {
            let needed = (self.low() - idx) as usize;
            let grow = needed.max(self.data.len());
            let mut fresh = Vec::with_capacity(self.data.len() + grow);
            fresh.resize(grow, T::default());
            fresh.extend_from_slice(&self.data);
            self.data = fresh;
            self.origin -= grow as i64;
        } else if idx > self.high() {
            let needed = (idx - self.high()) as usize;
            let grow = needed.max(self.data.len());
            self.data.resize(self.data.len() + grow, T::default());
        }
        &mut self.data[(idx - self.origin) as usize]
    }

    /// Iterates (index, value) over the stored range.
    pub fn iter(&self) -> impl Iterator<Item = (i64, &T)> {
        let origin = self.origin;
        self.data.iter().enumerate().map(move |(i, v)| (origin + i as i64, v))
    }
}

impl<T: Clone + Default> Default for OffsetVec<T> {
    fn default() -> Self {
        Self::new()
    }
}
