use crate::error::Result;
use crate::nn::ParamStore;

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: ParamStore,
    v: ParamStore,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut ParamStore, grads: &ParamStore) -> Result<()> {
        params.check_layout(grads)?;
        params.check_layout(&self.m)?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((_, p), (_, g)), ((_, m), (_, v))) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let p = p.as_mut_slice();
            let (m, v) = (m.as_mut_slice(), v.as_mut_slice());
            for (i, &gi) in g.as_slice().iter().enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("a", Matrix::row_vector(&[v])).unwrap();
        s
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = store(1.5);
        let mut opt = Adam::new(&p, 0.1);
        opt.update(&mut p, &store(0.0)).unwrap();
        assert_eq!(p, store(1.5));
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn scalar_first_two_steps() {
        let mut p = store(1.0);
        let mut opt = Adam::new(&p, 0.01);
        opt.update(&mut p, &store(0.5)).unwrap();
        // m̂ = 0.5, v̂ = 0.25 → step = lr · 0.5 / (0.5 + 1e-8)
        let want1 = 1.0 - 0.01 * 0.5 / (0.5 + 1e-8);
        assert!((p.get("a").unwrap()[(0, 0)] - want1).abs() < 1e-15);

        opt.update(&mut p, &store(-1.0)).unwrap();
        let m = 0.9 * 0.05 - 0.1;
        let v = 0.999 * 0.00025 + 0.001 * 1.0;
        let mh = m / (1.0 - 0.9f64.powi(2));
        let vh = v / (1.0 - 0.999f64.powi(2));
        let want2 = want1 - 0.01 * mh / (vh.sqrt() + 1e-8);
        assert!((p.get("a").unwrap()[(0, 0)] - want2).abs() < 1e-15);
    }

    #[test]
    fn layout_mismatch() {
        let mut p = store(1.0);
        let mut opt = Adam::new(&p, 0.1);
        let mut g = ParamStore::new();
        g.insert("b", Matrix::row_vector(&[1.0])).unwrap();
        assert!(opt.update(&mut p, &g).is_err());
    }
}
