//! Fully connected layers over a flat parameter vector.
//!
//! Weights are stored row-major (`output x input`) followed by the bias.
//! Batches are row-major `batch x features`.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub offset: usize,
}

impl Dense {
    pub fn param_count(&self) -> usize {
        self.output * self.input + self.output
    }

    pub fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.output * self.input]
    }

    pub fn bias<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.output * self.input;
        &params[start..start + self.output]
    }

    pub fn end(&self) -> usize {
        self.offset + self.param_count()
    }

    /// Uniform initialisation in `[-limit, limit]` with zero bias.
    pub fn init(&self, params: &mut [f64], limit: f64, rng: &mut impl Rng) {
        let w = self.output * self.input;
        for p in &mut params[self.offset..self.offset + w] {
            *p = rng.random_range(-limit..=limit);
        }
        for p in &mut params[self.offset + w..self.end()] {
            *p = 0.0;
        }
    }

    pub fn glorot_limit(&self) -> f64 {
        (6.0 / (self.input + self.output) as f64).sqrt()
    }

    /// `y = x W^T + b` for a batch.
    pub fn forward(&self, params: &[f64], x: &[f64], batch: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), batch * self.input);
        let mut y = vec![0.0; batch * self.output];
        let bias = self.bias(params);
        for row in y.chunks_exact_mut(self.output) {
            row.copy_from_slice(bias);
        }
        gemm(
            batch, self.input, self.output,
            x, self.input, 1,
            self.weights(params), 1, self.input,
            &mut y, self.output, 1,
            1.0,
        );
        y
    }

    /// Accumulates parameter gradients into `grad` and returns the input
    /// gradient when requested.
    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        dy: &[f64],
        batch: usize,
        grad: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let w = self.output * self.input;
        {
            let gw = &mut grad[self.offset..self.offset + w];
            gemm(
                self.output, batch, self.input,
                dy, 1, self.output,
                x, self.input, 1,
                gw, self.input, 1,
                1.0,
            );
        }
        {
            let gb = &mut grad[self.offset + w..self.end()];
            for row in dy.chunks_exact(self.output) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        want_input_grad.then(|| {
            let mut dx = vec![0.0; batch * self.input];
            gemm(
                batch, self.output, self.input,
                dy, self.output, 1,
                self.weights(params), self.input, 1,
                &mut dx, self.input, 1,
                0.0,
            );
            dx
        })
    }
}

/// `c = a * b + beta * c` with arbitrary strides; bounds are checked before
/// handing the raw pointers over.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize, k: usize, n: usize,
    a: &[f64], rsa: usize, csa: usize,
    b: &[f64], rsb: usize, csb: usize,
    c: &mut [f64], rsc: usize, csc: usize,
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len());
        assert!(last(k, n, rsb, csb) < b.len());
    }
    assert!(last(m, n, rsc, csc) < c.len());
    // SAFETY: every index touched lies within the slices, checked above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n,
            1.0,
            a.as_ptr(), rsa as isize, csa as isize,
            b.as_ptr(), rsb as isize, csb as isize,
            beta,
            c.as_mut_ptr(), rsc as isize, csc as isize,
        );
    }
}

pub fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes gradient entries whose ReLU output was zero.
pub fn relu_backward(activated: &[f64], d: &mut [f64]) {
    for (a, g) in activated.iter().zip(d) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}
