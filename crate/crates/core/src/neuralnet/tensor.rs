//! Dense tensors and the small linear-algebra kernel set the network uses.
//!
//! Everything is 64-bit and row-major. Matrix products go through
//! `matrixmultiply`, which is deterministic for a given machine; all other
//! kernels are plain loops.

use rand::Rng;

use crate::error::{DaselError, Result};

/// A dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(DaselError::Contract(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(&self.shape)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A [steps, batch, dim] activation buffer; each step is a contiguous
/// (batch x dim) matrix, so per-timestep GEMMs need no copies.
#[derive(Debug, Clone)]
pub struct Slab {
    pub steps: usize,
    pub batch: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Slab {
    pub fn zeros(steps: usize, batch: usize, dim: usize) -> Self {
        Slab {
            steps,
            batch,
            dim,
            data: vec![0.0; steps * batch * dim],
        }
    }

    pub fn step(&self, k: usize) -> &[f64] {
        let n = self.batch * self.dim;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn step_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.batch * self.dim;
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn row(&self, k: usize, b: usize) -> &[f64] {
        let off = (k * self.batch + b) * self.dim;
        &self.data[off..off + self.dim]
    }

    pub fn row_mut(&mut self, k: usize, b: usize) -> &mut [f64] {
        let off = (k * self.batch + b) * self.dim;
        &mut self.data[off..off + self.dim]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// c[m,n] = alpha * a[m,k] . b[k,n] + beta * c
#[allow(clippy::too_many_arguments)]
pub fn gemm_nn(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c[m,n] = alpha * a^T . b + beta * c, with a stored as [k,m].
#[allow(clippy::too_many_arguments)]
pub fn gemm_tn(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c[m,n] = alpha * a . b^T + beta * c, with b stored as [n,k].
#[allow(clippy::too_many_arguments)]
pub fn gemm_nt(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Raw strided product c[m,n] = alpha * A[m,k] . B[k,n] + beta * c, where
/// each operand is described by (pointer offset into the slice, row stride,
/// column stride). Lets callers use column blocks of wider matrices and
/// implicit transposes without copies.
///
/// Safety: the caller must guarantee every (row, col) index stays inside
/// the corresponding slice; strides express layout, not bounds.
#[allow(clippy::too_many_arguments)]
pub fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_off: usize,
    rsa: isize,
    csa: isize,
    b: &[f64],
    b_off: usize,
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    c_off: usize,
    rsc: isize,
    csc: isize,
) {
    let extent = |rows: usize, cols: usize, rs: isize, cs: isize, off: usize| -> usize {
        off + (rows - 1) * rs.unsigned_abs() + (cols - 1) * cs.unsigned_abs()
    };
    assert!(m > 0 && k > 0 && n > 0);
    assert!(rsa >= 0 && csa >= 0 && rsb >= 0 && csb >= 0 && rsc >= 0 && csc >= 0);
    assert!(a.len() > extent(m, k, rsa, csa, a_off));
    assert!(b.len() > extent(k, n, rsb, csb, b_off));
    assert!(c.len() > extent(m, n, rsc, csc, c_off));
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(a_off),
            rsa,
            csa,
            b.as_ptr().add(b_off),
            rsb,
            csb,
            beta,
            c.as_mut_ptr().add(c_off),
            rsc,
            csc,
        );
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// In-place stable softmax of one row; returns the log-sum-exp.
pub fn softmax_row(row: &mut [f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

/// Samples a uniform [h, h] orthogonal matrix: QR of a standard-normal
/// matrix with the R diagonal sign-fixed so the draw is unique.
pub fn orthogonal<R: Rng>(rng: &mut R, h: usize) -> Tensor {
    use rand_distr::StandardNormal;
    let mut r: Vec<f64> = (0..h * h).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut q = vec![0.0; h * h];
    for i in 0..h {
        q[i * h + i] = 1.0;
    }

    // Householder QR: R becomes upper triangular, Q accumulates reflectors.
    let mut v = vec![0.0; h];
    for k in 0..h {
        let mut norm2 = 0.0;
        for i in k..h {
            let x = r[i * h + k];
            v[i] = x;
            norm2 += x * x;
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if v[k] >= 0.0 { -norm } else { norm };
        v[k] -= alpha;
        let vnorm2: f64 = (k..h).map(|i| v[i] * v[i]).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // R[k.., k..] -= 2 v (v^T R) / |v|^2
        for j in k..h {
            let dot: f64 = (k..h).map(|i| v[i] * r[i * h + j]).sum();
            let s = 2.0 * dot / vnorm2;
            for i in k..h {
                r[i * h + j] -= s * v[i];
            }
        }
        // Q[.., k..] -= 2 (Q v) v^T / |v|^2
        for i in 0..h {
            let dot: f64 = (k..h).map(|j| q[i * h + j] * v[j]).sum();
            let s = 2.0 * dot / vnorm2;
            for j in k..h {
                q[i * h + j] -= s * v[j];
            }
        }
    }
    for j in 0..h {
        if r[j * h + j] < 0.0 {
            for i in 0..h {
                q[i * h + j] = -q[i * h + j];
            }
        }
    }
    Tensor::from_vec(&[h, h], q).unwrap()
}

/// Glorot (scaled-uniform) initialization for an [fan_in, fan_out] matrix.
pub fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_vec(&[fan_in, fan_out], data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gemm_nn_small() {
        // [2x3] . [3x2]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0; 4];
        gemm_nn(2, 3, 2, 1.0, &a, &b, 0.0, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn gemm_tn_matches_explicit_transpose() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // [3,2] -> a^T is [2,3]
        let b = [1.0, 0.0, 2.0, 1.0, 0.0, 3.0]; // [3,2]
        let mut c = [0.0; 4];
        gemm_tn(2, 3, 2, 1.0, &a, &b, 0.0, &mut c);
        // a^T = [[1,3,5],[2,4,6]]
        assert_eq!(c, [1.0 + 6.0, 3.0 + 15.0, 2.0 + 8.0, 4.0 + 18.0]);
    }

    #[test]
    fn gemm_nt_matches_explicit_transpose() {
        let a = [1.0, 2.0, 3.0, 4.0]; // [2,2]
        let b = [1.0, 2.0, 3.0, 4.0]; // [2,2] -> b^T = [[1,3],[2,4]]
        let mut c = [0.0; 4];
        gemm_nt(2, 2, 2, 1.0, &a, &b, 0.0, &mut c);
        assert_eq!(c, [5.0, 11.0, 11.0, 25.0]);
    }

    #[test]
    fn strided_gemm_reads_column_block() {
        // wide = [2 rows, 4 cols]; use columns 2..4 as a [2,2] matrix.
        let wide = [1.0, 2.0, 10.0, 20.0, 3.0, 4.0, 30.0, 40.0];
        let b = [1.0, 0.0, 0.0, 1.0];
        let mut c = [0.0; 4];
        gemm_strided(2, 2, 2, 1.0, &wide, 2, 4, 1, &b, 0, 2, 1, 0.0, &mut c, 0, 2, 1);
        assert_eq!(c, [10.0, 20.0, 30.0, 40.0]);
    }

    #[test]
    fn strided_gemm_expresses_transpose() {
        // C = A . B^T with B stored [2,3]: equivalent to gemm_nt.
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // [2,3]
        let b = [1.0, 0.0, 1.0, 0.0, 2.0, 0.0]; // [2,3]
        let mut c1 = [0.0; 4];
        let mut c2 = [0.0; 4];
        gemm_nt(2, 3, 2, 1.0, &a, &b, 0.0, &mut c1);
        gemm_strided(2, 3, 2, 1.0, &a, 0, 3, 1, &b, 0, 1, 3, 0.0, &mut c2, 0, 2, 1);
        assert_eq!(c1, c2);
    }

    #[test]
    fn softmax_row_is_normalized_and_stable() {
        let mut row = [1000.0, 1000.0, 999.0];
        softmax_row(&mut row);
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(row[0] > row[2]);
    }

    #[test]
    fn orthogonal_has_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for h in [1usize, 2, 5, 32] {
            let q = orthogonal(&mut rng, h);
            let qd = q.data();
            for i in 0..h {
                for j in 0..h {
                    let dot: f64 = (0..h).map(|k| qd[k * h + i] * qd[k * h + j]).sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expected).abs() < 1e-10, "h={h} ({i},{j}) dot={dot}");
                }
            }
        }
    }

    #[test]
    fn orthogonal_is_deterministic_per_seed() {
        let a = orthogonal(&mut ChaCha8Rng::seed_from_u64(11), 16);
        let b = orthogonal(&mut ChaCha8Rng::seed_from_u64(11), 16);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn glorot_within_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = glorot(&mut rng, 10, 20);
        let limit = (6.0 / 30.0_f64).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= limit));
    }
}
