//! Gated recurrent layers.
//!
//! Gate algebra (per direction, gate order z|r|n):
//!
//!   z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
//!   r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
//!   n_t = tanh   (W_n x_t + U_n (r_t * h_{t-1}) + b_n)
//!   h_t = (1 - z_t) * h_{t-1} + z_t * n_t
//!
//! Masked timesteps carry state through unchanged (h_t = h_{t-1}) and emit
//! zeros, so left-padding cannot corrupt recurrent context. Input-to-hidden
//! weights are packed [in, 3h]; the candidate's recurrent weights are kept
//! separate because the reset gate applies before that product.

use crate::error::{DaselError, Result};
use crate::neuralnet::tensor::{gemm_nn, gemm_nt, gemm_strided, gemm_tn, sigmoid, Slab, Tensor};
use crate::sequencing::SEQ_LEN;

/// One direction's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GruDirParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// [input_dim, 3h]: input-to-hidden for z|r|n.
    pub w: Tensor,
    /// [h, 2h]: hidden-to-hidden for z|r.
    pub u_zr: Tensor,
    /// [h, h]: hidden-to-hidden for the candidate.
    pub u_n: Tensor,
    /// [3h] gate biases.
    pub b: Tensor,
}

impl GruDirParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        GruDirParams {
            input_dim,
            hidden_dim,
            w: Tensor::zeros(&[input_dim, 3 * hidden_dim]),
            u_zr: Tensor::zeros(&[hidden_dim, 2 * hidden_dim]),
            u_n: Tensor::zeros(&[hidden_dim, hidden_dim]),
            b: Tensor::zeros(&[3 * hidden_dim]),
        }
    }
}

/// Both directions of one bidirectional layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGruParams {
    pub fwd: GruDirParams,
    pub bwd: GruDirParams,
}

impl BiGruParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        BiGruParams {
            fwd: GruDirParams::zeros(input_dim, hidden_dim),
            bwd: GruDirParams::zeros(input_dim, hidden_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.fwd.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden_dim
    }
}

/// Single-step reference cell. This is the readable contract the batched
/// path is tested against.
pub fn gru_cell_forward(x: &[f64], h_prev: &[f64], p: &GruDirParams) -> Result<Vec<f64>> {
    let (ind, h) = (p.input_dim, p.hidden_dim);
    if x.len() != ind || h_prev.len() != h {
        return Err(DaselError::Contract(format!(
            "gru_cell_forward: got x len {} / h len {}, expected {ind} / {h}",
            x.len(),
            h_prev.len()
        )));
    }
    let w = p.w.data();
    let uzr = p.u_zr.data();
    let un = p.u_n.data();
    let b = p.b.data();

    let mut out = vec![0.0; h];
    let mut pre = vec![0.0; 3 * h];
    for (i, &xv) in x.iter().enumerate() {
        let row = &w[i * 3 * h..(i + 1) * 3 * h];
        for j in 0..3 * h {
            pre[j] += xv * row[j];
        }
    }
    for j in 0..3 * h {
        pre[j] += b[j];
    }
    for (i, &hv) in h_prev.iter().enumerate() {
        let row = &uzr[i * 2 * h..(i + 1) * 2 * h];
        for j in 0..2 * h {
            pre[j] += hv * row[j];
        }
    }
    let mut rh = vec![0.0; h];
    for j in 0..h {
        let r = sigmoid(pre[h + j]);
        rh[j] = r * h_prev[j];
    }
    let mut n_pre = vec![0.0; h];
    for (i, &rhv) in rh.iter().enumerate() {
        let row = &un[i * h..(i + 1) * h];
        for j in 0..h {
            n_pre[j] += rhv * row[j];
        }
    }
    for j in 0..h {
        let z = sigmoid(pre[j]);
        let n = (pre[2 * h + j] + n_pre[j]).tanh();
        out[j] = (1.0 - z) * h_prev[j] + z * n;
        if !out[j].is_finite() {
            return Err(DaselError::Numerical {
                layer: "gru_cell",
                msg: format!("non-finite state at unit {j}"),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Fwd,
    Bwd,
}

/// Per-direction forward activations cached for backpropagation. All slabs
/// are absolute-time-major over the processed window [t0, SEQ_LEN).
pub struct DirCache {
    /// Post-activation gates, [T, B, h] each.
    z: Slab,
    r: Slab,
    n: Slab,
    /// r * h_prev, [T, B, h].
    rh: Slab,
    /// State before processing each step, [T, B, h].
    h_prev: Slab,
}

pub struct BiGruCache {
    fwd: DirCache,
    bwd: DirCache,
    /// Input projections are recomputed in backward; inputs are kept by
    /// the caller, so only gate values live here.
    t0: usize,
}

#[allow(clippy::too_many_arguments)]
fn dir_forward(
    x: &Slab,
    masks: &[&[bool; SEQ_LEN]],
    t0: usize,
    p: &GruDirParams,
    dir: Dir,
    y: &mut Slab,
    y_col: usize,
    cache: Option<&mut DirCache>,
) {
    let steps = SEQ_LEN - t0;
    let batch = x.batch;
    let h = p.hidden_dim;

    // Input projection for every step at once: [T*B, 3h].
    let mut ip = Slab::zeros(steps, batch, 3 * h);
    gemm_nn(steps * batch, p.input_dim, 3 * h, 1.0, &x.data, p.w.data(), 0.0, &mut ip.data);
    for row in ip.data.chunks_exact_mut(3 * h) {
        for (v, bias) in row.iter_mut().zip(p.b.data()) {
            *v += bias;
        }
    }

    let mut cache = cache;
    let mut state = vec![0.0; batch * h];
    let mut hzr = vec![0.0; batch * 2 * h];
    let mut hn = vec![0.0; batch * h];
    let mut rh = vec![0.0; batch * h];
    let mut z_step = vec![0.0; batch * h];
    let mut r_step = vec![0.0; batch * h];
    let mut n_step = vec![0.0; batch * h];

    for kk in 0..steps {
        let t_abs = match dir {
            Dir::Fwd => t0 + kk,
            Dir::Bwd => SEQ_LEN - 1 - kk,
        };
        let k = t_abs - t0;

        if let Some(c) = cache.as_deref_mut() {
            c.h_prev.step_mut(k).copy_from_slice(&state);
        }

        gemm_nn(batch, h, 2 * h, 1.0, &state, p.u_zr.data(), 0.0, &mut hzr);
        let ip_step = ip.step(k);
        for b in 0..batch {
            let zs = &mut z_step[b * h..(b + 1) * h];
            let rs = &mut r_step[b * h..(b + 1) * h];
            let rhs = &mut rh[b * h..(b + 1) * h];
            if !masks[b][t_abs] {
                rhs.fill(0.0);
                continue;
            }
            let ipb = &ip_step[b * 3 * h..b * 3 * h + 2 * h];
            let hzrb = &hzr[b * 2 * h..(b + 1) * 2 * h];
            let hb = &state[b * h..(b + 1) * h];
            for j in 0..h {
                zs[j] = sigmoid(ipb[j] + hzrb[j]);
                rs[j] = sigmoid(ipb[h + j] + hzrb[h + j]);
                rhs[j] = rs[j] * hb[j];
            }
        }

        gemm_nn(batch, h, h, 1.0, &rh, p.u_n.data(), 0.0, &mut hn);
        let y_dim = y.dim;
        let y_step = y.step_mut(k);
        for b in 0..batch {
            let out = &mut y_step[b * y_dim + y_col..b * y_dim + y_col + h];
            if !masks[b][t_abs] {
                out.fill(0.0);
                n_step[b * h..(b + 1) * h].fill(0.0);
                continue;
            }
            let ipn = &ip_step[b * 3 * h + 2 * h..(b + 1) * 3 * h];
            let hnb = &hn[b * h..(b + 1) * h];
            let zs = &z_step[b * h..(b + 1) * h];
            let ns = &mut n_step[b * h..(b + 1) * h];
            let hb = &mut state[b * h..(b + 1) * h];
            for j in 0..h {
                let n = (ipn[j] + hnb[j]).tanh();
                let hv = (1.0 - zs[j]) * hb[j] + zs[j] * n;
                ns[j] = n;
                hb[j] = hv;
                out[j] = hv;
            }
        }
        if let Some(c) = cache.as_deref_mut() {
            c.z.step_mut(k).copy_from_slice(&z_step);
            c.r.step_mut(k).copy_from_slice(&r_step);
            c.n.step_mut(k).copy_from_slice(&n_step);
            c.rh.step_mut(k).copy_from_slice(&rh);
        }
    }
}

/// Batched bidirectional forward over the window [t0, SEQ_LEN). Output is
/// [T, B, 2h] with forward states in columns 0..h and backward states in
/// h..2h; masked positions are zero.
pub fn bigru_forward_batch(
    x: &Slab,
    masks: &[&[bool; SEQ_LEN]],
    t0: usize,
    params: &BiGruParams,
    want_cache: bool,
) -> Result<(Slab, Option<BiGruCache>)> {
    let steps = SEQ_LEN - t0;
    let batch = x.batch;
    let h = params.hidden_dim();
    debug_assert_eq!(x.dim, params.input_dim());
    debug_assert_eq!(x.steps, steps);
    debug_assert_eq!(masks.len(), batch);

    let mut y = Slab::zeros(steps, batch, 2 * h);
    let mut cache = want_cache.then(|| BiGruCache {
        fwd: DirCache {
            z: Slab::zeros(steps, batch, h),
            r: Slab::zeros(steps, batch, h),
            n: Slab::zeros(steps, batch, h),
            rh: Slab::zeros(steps, batch, h),
            h_prev: Slab::zeros(steps, batch, h),
        },
        bwd: DirCache {
            z: Slab::zeros(steps, batch, h),
            r: Slab::zeros(steps, batch, h),
            n: Slab::zeros(steps, batch, h),
            rh: Slab::zeros(steps, batch, h),
            h_prev: Slab::zeros(steps, batch, h),
        },
        t0,
    });

    dir_forward(x, masks, t0, &params.fwd, Dir::Fwd, &mut y, 0, cache.as_mut().map(|c| &mut c.fwd));
    dir_forward(x, masks, t0, &params.bwd, Dir::Bwd, &mut y, h, cache.as_mut().map(|c| &mut c.bwd));

    if !y.all_finite() {
        return Err(DaselError::Numerical {
            layer: "bigru",
            msg: "non-finite activation".into(),
        });
    }
    Ok((y, cache))
}

/// Gradients for one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GruDirGrads {
    pub w: Tensor,
    pub u_zr: Tensor,
    pub u_n: Tensor,
    pub b: Tensor,
}

impl GruDirGrads {
    pub fn zeros(p: &GruDirParams) -> Self {
        GruDirGrads {
            w: p.w.zeros_like(),
            u_zr: p.u_zr.zeros_like(),
            u_n: p.u_n.zeros_like(),
            b: p.b.zeros_like(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiGruGrads {
    pub fwd: GruDirGrads,
    pub bwd: GruDirGrads,
}

impl BiGruGrads {
    pub fn zeros(p: &BiGruParams) -> Self {
        BiGruGrads {
            fwd: GruDirGrads::zeros(&p.fwd),
            bwd: GruDirGrads::zeros(&p.bwd),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn dir_backward(
    x: &Slab,
    masks: &[&[bool; SEQ_LEN]],
    t0: usize,
    p: &GruDirParams,
    dir: Dir,
    cache: &DirCache,
    dy: &Slab,
    dy_col: usize,
    grads: &mut GruDirGrads,
    dx: Option<&mut Slab>,
) {
    let steps = SEQ_LEN - t0;
    let batch = x.batch;
    let h = p.hidden_dim;

    // Pre-activation gate gradients dG = [T, B, 3h] (z|r|n), absolute-time-major.
    let mut dg = Slab::zeros(steps, batch, 3 * h);
    let mut dh = vec![0.0; batch * h];
    let mut drh = vec![0.0; batch * h];
    let mut dhzr = vec![0.0; batch * h];

    for kk in (0..steps).rev() {
        let t_abs = match dir {
            Dir::Fwd => t0 + kk,
            Dir::Bwd => SEQ_LEN - 1 - kk,
        };
        let k = t_abs - t0;

        let dy_step = dy.step(k);
        let z = cache.z.step(k);
        let r = cache.r.step(k);
        let n = cache.n.step(k);
        let h_prev = cache.h_prev.step(k);
        let dg_step = dg.step_mut(k);

        // n-gate pre-activation gradient first; it feeds the U_n^T product.
        for b in 0..batch {
            if !masks[b][t_abs] {
                continue; // dg row stays zero; dh carries through.
            }
            let dhb_in = &dy_step[b * dy.dim + dy_col..b * dy.dim + dy_col + h];
            let dhb = &mut dh[b * h..(b + 1) * h];
            let dgb = &mut dg_step[b * 3 * h..(b + 1) * 3 * h];
            for j in 0..h {
                let d = dhb[j] + dhb_in[j];
                dhb[j] = d; // total dL/dh_t for this step
                let nj = n[b * h + j];
                dgb[2 * h + j] = d * z[b * h + j] * (1.0 - nj * nj);
            }
        }

        // drh[B,h] = dg_n . U_n^T (dg_n is the 2h.. column block).
        gemm_strided(
            batch, h, h, 1.0,
            dg_step, 2 * h, (3 * h) as isize, 1,
            p.u_n.data(), 0, 1, h as isize,
            0.0, &mut drh, 0, h as isize, 1,
        );

        for b in 0..batch {
            if !masks[b][t_abs] {
                continue;
            }
            let dhb = &mut dh[b * h..(b + 1) * h];
            let dgb = &mut dg_step[b * 3 * h..(b + 1) * 3 * h];
            for j in 0..h {
                let idx = b * h + j;
                let zj = z[idx];
                let rj = r[idx];
                let hp = h_prev[idx];
                let d = dhb[j];
                let dz = d * (n[idx] - hp);
                let dr = drh[idx] * hp;
                dgb[j] = dz * zj * (1.0 - zj);
                dgb[h + j] = dr * rj * (1.0 - rj);
                // carry into h_{t-1}: the kept fraction plus the reset product
                dhb[j] = d * (1.0 - zj) + drh[idx] * rj;
            }
        }

        // dhzr[B,h] = dg_zr . U_zr^T; masked rows have dg 0 and stay put.
        gemm_strided(
            batch, 2 * h, h, 1.0,
            dg_step, 0, (3 * h) as isize, 1,
            p.u_zr.data(), 0, 1, (2 * h) as isize,
            0.0, &mut dhzr, 0, h as isize, 1,
        );
        for b in 0..batch {
            if !masks[b][t_abs] {
                continue;
            }
            for j in 0..h {
                dh[b * h + j] += dhzr[b * h + j];
            }
        }
    }

    // Weight gradients over all steps at once; masked rows carry zero dg
    // and zero rh, so they drop out of every product.
    let tb = steps * batch;
    gemm_tn(p.input_dim, tb, 3 * h, 1.0, &x.data, &dg.data, 1.0, grads.w.data_mut());
    gemm_strided(
        h, tb, 2 * h, 1.0,
        &cache.h_prev.data, 0, 1, h as isize,
        &dg.data, 0, (3 * h) as isize, 1,
        1.0, grads.u_zr.data_mut(), 0, (2 * h) as isize, 1,
    );
    gemm_strided(
        h, tb, h, 1.0,
        &cache.rh.data, 0, 1, h as isize,
        &dg.data, 2 * h, (3 * h) as isize, 1,
        1.0, grads.u_n.data_mut(), 0, h as isize, 1,
    );
    {
        let db = grads.b.data_mut();
        for row in dg.data.chunks_exact(3 * h) {
            for (acc, v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    if let Some(dx) = dx {
        gemm_nt(tb, 3 * h, p.input_dim, 1.0, &dg.data, p.w.data(), 1.0, &mut dx.data);
    }
}

/// Batched bidirectional backward pass. `dy` holds dL/d(output slab);
/// accumulates parameter gradients and, when `dx` is given, dL/d(input).
#[allow(clippy::too_many_arguments)]
pub fn bigru_backward_batch(
    x: &Slab,
    masks: &[&[bool; SEQ_LEN]],
    params: &BiGruParams,
    cache: &BiGruCache,
    dy: &Slab,
    grads: &mut BiGruGrads,
    mut dx: Option<&mut Slab>,
) {
    let h = params.hidden_dim();
    dir_backward(x, masks, cache.t0, &params.fwd, Dir::Fwd, &cache.fwd, dy, 0, &mut grads.fwd, dx.as_deref_mut());
    dir_backward(x, masks, cache.t0, &params.bwd, Dir::Bwd, &cache.bwd, dy, h, &mut grads.bwd, dx);
}
