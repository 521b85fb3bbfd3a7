/// Anything holding trainable `f64` parameters in a fixed visiting order.
///
/// Gradients are stored in a value of the same type as the parameters, so
/// the optimizer can walk both in lock-step.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    /// Overwrites every parameter from `flat`, which must hold exactly
    /// [`param_count`](Self::param_count) values.
    fn assign_flat(&mut self, flat: &[f64]) -> bool {
        if flat.len() != self.param_count() {
            return false;
        }
        let mut offset = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        true
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |s| s.fill(value));
    }
}

impl Parameters for Vec<f64> {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self)
    }
}
