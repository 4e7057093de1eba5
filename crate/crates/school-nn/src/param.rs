//! Named-parameter traversal shared by the optimizer, checkpoints and
//! gradient checks. Traversal order is fixed by each implementation.

use crate::mat::Mat;

pub trait ParamStruct {
    /// Named tensors in a fixed order.
    fn tensors(&self) -> Vec<(String, &Mat)>;
    /// Mutable view of the same tensors, in the same order.
    fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data.len()).sum()
    }

    fn zero_fill(&mut self) {
        for (_, m) in self.tensors_mut() {
            m.zero_fill();
        }
    }

    /// Accumulate `other` into `self` element-wise (gradient reduction).
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let theirs = other.tensors();
        for ((_, mine), (_, t)) in self.tensors_mut().into_iter().zip(theirs) {
            mine.add_inplace(t);
        }
    }

    fn scale(&mut self, s: f64) {
        for (_, m) in self.tensors_mut() {
            m.scale_inplace(s);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }
}
