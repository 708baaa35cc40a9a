use super::{apply_func, check_pow_domain, domain_error, pow_value, BinOp, ExprError, Func, Node};

/// Largest number of variables a [`Jet2`] can carry.
pub const MAX_JET_VARS: usize = 8;
const TRI: usize = MAX_JET_VARS * (MAX_JET_VARS + 1) / 2;

#[inline]
fn tri(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    b * (b + 1) / 2 + a
}

/// Second-order truncated Taylor expansion of a scalar: value, gradient and
/// Hessian, the latter stored as an upper triangle so it is symmetric by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    dim: usize,
    value: f64,
    grad: [f64; MAX_JET_VARS],
    hess: [f64; TRI],
}

impl Jet2 {
    pub fn constant(value: f64, dim: usize) -> Self {
        debug_assert!(dim <= MAX_JET_VARS);
        Self {
            dim,
            value,
            grad: [0.0; MAX_JET_VARS],
            hess: [0.0; TRI],
        }
    }

    pub fn variable(value: f64, index: usize, dim: usize) -> Self {
        let mut j = Self::constant(value, dim);
        j.grad[index] = 1.0;
        j
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad[..self.dim]
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.dim && j < self.dim, "Hessian index out of range");
        self.hess[tri(i, j)]
    }

    /// Full Hessian, row-major `dim×dim`.
    pub fn hessian_matrix(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.hess[tri(i, j)];
            }
        }
        out
    }

    fn ntri(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    fn neg(mut self) -> Self {
        self.value = -self.value;
        for g in &mut self.grad[..self.dim] {
            *g = -*g;
        }
        let n = self.ntri();
        for h in &mut self.hess[..n] {
            *h = -*h;
        }
        self
    }

    fn add(mut self, o: &Self, sign: f64) -> Self {
        self.value = if sign > 0.0 {
            self.value + o.value
        } else {
            self.value - o.value
        };
        for k in 0..self.dim {
            self.grad[k] += sign * o.grad[k];
        }
        for k in 0..self.ntri() {
            self.hess[k] += sign * o.hess[k];
        }
        self
    }

    fn mul(&self, o: &Self) -> Self {
        let mut r = Self::constant(self.value * o.value, self.dim);
        for k in 0..self.dim {
            r.grad[k] = self.grad[k] * o.value + self.value * o.grad[k];
        }
        for j in 0..self.dim {
            for i in 0..=j {
                let t = tri(i, j);
                r.hess[t] = self.hess[t] * o.value
                    + self.value * o.hess[t]
                    + self.grad[i] * o.grad[j]
                    + self.grad[j] * o.grad[i];
            }
        }
        r
    }

    fn div(&self, o: &Self) -> Self {
        let q = self.value / o.value;
        let mut r = Self::constant(q, self.dim);
        for k in 0..self.dim {
            r.grad[k] = (self.grad[k] - q * o.grad[k]) / o.value;
        }
        for j in 0..self.dim {
            for i in 0..=j {
                let t = tri(i, j);
                r.hess[t] = (self.hess[t]
                    - q * o.hess[t]
                    - r.grad[i] * o.grad[j]
                    - r.grad[j] * o.grad[i])
                    / o.value;
            }
        }
        r
    }

    /// Applies a scalar function with value `f0` and derivatives `f1`, `f2`.
    fn chain(&self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut r = Self::constant(f0, self.dim);
        for k in 0..self.dim {
            r.grad[k] = f1 * self.grad[k];
        }
        for j in 0..self.dim {
            for i in 0..=j {
                let t = tri(i, j);
                r.hess[t] = f1 * self.hess[t] + f2 * self.grad[i] * self.grad[j];
            }
        }
        r
    }
}

pub(super) fn eval_jet_node(root: &Node, p: &[f64]) -> Result<Jet2, ExprError> {
    let dim = p.len();
    fn go(node: &Node, p: &[f64], dim: usize) -> Result<Jet2, ExprError> {
        Ok(match node {
            Node::Const(c) => Jet2::constant(*c, dim),
            Node::Var(i) => Jet2::variable(p[*i], *i, dim),
            Node::Neg(a) => go(a, p, dim)?.neg(),
            Node::Call(f, a) => {
                let u = go(a, p, dim)?;
                let x = u.value;
                let v = apply_func(node, *f, x)?;
                let (d1, d2) = match f {
                    Func::Sin => (x.cos(), -v),
                    Func::Cos => (-x.sin(), -v),
                    Func::Exp => (v, v),
                    Func::Log => (1.0 / x, -1.0 / (x * x)),
                    Func::Sqrt => {
                        if v == 0.0 {
                            return Err(domain_error(node, "sqrt is not differentiable at zero"));
                        }
                        (0.5 / v, -0.25 / (v * x))
                    }
                };
                u.chain(v, d1, d2)
            }
            Node::Binary(op, a, b) => {
                let x = go(a, p, dim)?;
                let y = go(b, p, dim)?;
                match op {
                    BinOp::Add => x.add(&y, 1.0),
                    BinOp::Sub => x.add(&y, -1.0),
                    BinOp::Mul => x.mul(&y),
                    BinOp::Div => {
                        if y.value == 0.0 {
                            return Err(domain_error(node, "division by zero"));
                        }
                        x.div(&y)
                    }
                }
            }
            Node::Pow(a, e) => {
                let u = go(a, p, dim)?;
                let x = u.value;
                let e = *e;
                check_pow_domain(node, x, e)?;
                let v = pow_value(x, e);
                if e == 0.0 {
                    Jet2::constant(v, dim)
                } else if e == 1.0 {
                    u
                } else {
                    if x == 0.0 && e < 2.0 && e.fract() != 0.0 {
                        return Err(domain_error(node, "power is not twice differentiable at zero"));
                    }
                    let d1 = e * pow_value(x, e - 1.0);
                    let d2 = e * (e - 1.0) * pow_value(x, e - 2.0);
                    u.chain(v, d1, d2)
                }
            }
        })
    }
    go(root, p, dim)
}
