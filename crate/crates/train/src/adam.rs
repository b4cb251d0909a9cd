//! Adam with per-group learning rates and index-aware moment buffers, so
//! densification can clone, split and drop rows.

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

fn bias_corrections(t: u64) -> (f64, f64) {
    let t = t.max(1) as i32;
    (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t))
}

/// One parameter group with `N` values per primitive.
#[derive(Clone, Debug)]
pub struct Param<const N: usize> {
    pub value: Vec<[f32; N]>,
    m: Vec<[f32; N]>,
    v: Vec<[f32; N]>,
}

impl<const N: usize> Param<N> {
    pub fn new(value: Vec<[f32; N]>) -> Self {
        let n = value.len();
        Param {
            value,
            m: vec![[0.0; N]; n],
            v: vec![[0.0; N]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Adam update at step `t` (1-based).
    pub fn step(&mut self, grad: &[[f32; N]], lr: f64, t: u64) {
        assert_eq!(grad.len(), self.value.len(), "gradient rows");
        let (bc1, bc2) = bias_corrections(t);
        let (b1, b2) = (BETA1 as f32, BETA2 as f32);
        let step = (lr / bc1) as f32;
        let sbc2 = bc2.sqrt() as f32;
        let eps = EPSILON as f32;
        for i in 0..grad.len() {
            for k in 0..N {
                let g = grad[i][k];
                let m = b1 * self.m[i][k] + (1.0 - b1) * g;
                let v = b2 * self.v[i][k] + (1.0 - b2) * g * g;
                self.m[i][k] = m;
                self.v[i][k] = v;
                self.value[i][k] -= step * m / (v.sqrt() / sbc2 + eps);
            }
        }
    }

    /// Keeps rows where `keep[i]` holds, with their moments.
    pub fn retain(&mut self, keep: &[bool]) {
        let mut i = 0;
        let mut j = 0;
        let mut k = 0;
        self.value.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        self.m.retain(|_| {
            j += 1;
            keep[j - 1]
        });
        self.v.retain(|_| {
            k += 1;
            keep[k - 1]
        });
    }

    /// Appends a row with zeroed moments.
    pub fn push(&mut self, value: [f32; N]) {
        self.value.push(value);
        self.m.push([0.0; N]);
        self.v.push([0.0; N]);
    }
}

/// Adam over a flat f64 vector (small global parameter sets).
#[derive(Clone, Debug)]
pub struct AdamVec {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    epsilon: f64,
}

/// Textbook Adam epsilon, for small dense problems where roundoff-level
/// gradients must not turn into full-size steps.
pub const EPSILON_DENSE: f64 = 1e-8;

impl AdamVec {
    pub fn new(n: usize) -> Self {
        Self::with_epsilon(n, EPSILON)
    }

    pub fn with_epsilon(n: usize, epsilon: f64) -> Self {
        AdamVec {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            epsilon,
        }
    }

    pub fn step(&mut self, x: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(x.len(), self.m.len(), "parameter count");
        assert_eq!(grad.len(), self.m.len(), "gradient count");
        self.t += 1;
        let (bc1, bc2) = bias_corrections(self.t);
        for i in 0..x.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            x[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g and v_hat = g^2 after one step, so the update is lr * sign(g)
        let mut p = Param::new(vec![[1.0f32, -2.0]]);
        p.step(&[[0.5, -3.0]], 0.1, 1);
        assert!((p.value[0][0] - 0.9).abs() < 1e-6);
        assert!((p.value[0][1] + 1.9).abs() < 1e-6);
        let mut x = vec![1.0, -2.0];
        let mut a = AdamVec::new(2);
        a.step(&mut x, &[0.5, -3.0], 0.1);
        assert!((x[0] - 0.9).abs() < 1e-12 && (x[1] + 1.9).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Param::new(vec![[0.25f32, 3.0, -1.0]; 4]);
        let before = p.value.clone();
        for t in 1..5 {
            p.step(&[[0.0; 3]; 4], 0.5, t);
        }
        assert_eq!(p.value, before);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut x = vec![3.0, -4.0];
        let mut a = AdamVec::new(2);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            a.step(&mut x, &g, 0.01);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn retain_and_push_track_moments() {
        let mut p = Param::new(vec![[1.0f32], [2.0], [3.0]]);
        p.step(&[[1.0], [1.0], [1.0]], 0.1, 1);
        p.retain(&[true, false, true]);
        p.push([7.0]);
        assert_eq!(p.len(), 3);
        assert_eq!(p.m.len(), 3);
        assert_eq!(p.m[2], [0.0]);
        assert!(p.m[0][0] > 0.0);
    }
}
