/// ADAM with independent moment estimates and step counters per parameter group.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    group: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    t: Vec<u64>,
}

impl Adam {
    pub fn new(groups: usize, group_size: usize, learning_rate: f64) -> Self {
        let n = groups * group_size;
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            group: group_size,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: vec![0; groups],
        }
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t.iter_mut().for_each(|x| *x = 0);
    }

    pub fn reset_group(&mut self, g: usize) {
        let r = g * self.group..(g + 1) * self.group;
        self.m[r.clone()].iter_mut().for_each(|x| *x = 0.0);
        self.v[r].iter_mut().for_each(|x| *x = 0.0);
        self.t[g] = 0;
    }

    /// One update of group `g` in place.
    pub fn step_group(&mut self, g: usize, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), self.group);
        self.t[g] += 1;
        let t = self.t[g] as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for k in 0..self.group {
            let i = g * self.group + k;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[k];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[k] * grad[k];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
