//! Elementwise LSTM cell arithmetic for one time step over a whole batch.
//!
//! Each kernel is compiled twice, for the baseline target and with
//! AVX2+FMA enabled, and the wider variant is picked at runtime when the
//! CPU supports it. Rust never contracts a multiply and an add into an FMA
//! on its own, so both variants produce identical bits.

use super::activation::{sigmoid, tanh};

/// Turns gate pre-activations `z: [B, 4H]` into activations in place and
/// advances the state: `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
pub(super) fn forward(
    h: usize,
    z: &mut [f64],
    c_prev: &[f64],
    c_next: &mut [f64],
    h_next: &mut [f64],
    tanh_c: &mut [f64],
) {
    #[cfg(target_arch = "x86_64")]
    if wide_available() {
        // SAFETY: the required CPU features were detected at runtime.
        return unsafe { forward_wide(h, z, c_prev, c_next, h_next, tanh_c) };
    }
    forward_body(h, z, c_prev, c_next, h_next, tanh_c)
}

/// Gate pre-activation gradients `dz: [B, 4H]` for one step. `dh` is the
/// total hidden-state gradient at this step; `dc` carries the cell-state
/// gradient from step `t+1` in and the one for step `t-1` out.
#[allow(clippy::too_many_arguments)]
pub(super) fn backward(
    h: usize,
    gates: &[f64],
    c_prev: &[f64],
    tanh_c: &[f64],
    dh: &[f64],
    dc: &mut [f64],
    dz: &mut [f64],
) {
    #[cfg(target_arch = "x86_64")]
    if wide_available() {
        // SAFETY: the required CPU features were detected at runtime.
        return unsafe { backward_wide(h, gates, c_prev, tanh_c, dh, dc, dz) };
    }
    backward_body(h, gates, c_prev, tanh_c, dh, dc, dz)
}

#[cfg(target_arch = "x86_64")]
fn wide_available() -> bool {
    std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn forward_wide(
    h: usize,
    z: &mut [f64],
    c_prev: &[f64],
    c_next: &mut [f64],
    h_next: &mut [f64],
    tanh_c: &mut [f64],
) {
    forward_body(h, z, c_prev, c_next, h_next, tanh_c)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
#[allow(clippy::too_many_arguments)]
unsafe fn backward_wide(
    h: usize,
    gates: &[f64],
    c_prev: &[f64],
    tanh_c: &[f64],
    dh: &[f64],
    dc: &mut [f64],
    dz: &mut [f64],
) {
    backward_body(h, gates, c_prev, tanh_c, dh, dc, dz)
}

#[inline(always)]
fn forward_body(h: usize, z: &mut [f64], c_prev: &[f64], c_next: &mut [f64], h_next: &mut [f64], tanh_c: &mut [f64]) {
    for (b, row) in z.chunks_exact_mut(4 * h).enumerate() {
        let (ifg, o) = row.split_at_mut(3 * h);
        let (i_f, g) = ifg.split_at_mut(2 * h);
        for v in i_f.iter_mut() {
            *v = sigmoid(*v);
        }
        for v in g.iter_mut() {
            *v = tanh(*v);
        }
        for v in o.iter_mut() {
            *v = sigmoid(*v);
        }
        let (i, f) = i_f.split_at(h);
        let span = b * h..(b + 1) * h;
        let cp = &c_prev[span.clone()];
        let cn = &mut c_next[span.clone()];
        let tc = &mut tanh_c[span.clone()];
        let hn = &mut h_next[span];
        for j in 0..h {
            let c = f[j] * cp[j] + i[j] * g[j];
            cn[j] = c;
            tc[j] = tanh(c);
        }
        for j in 0..h {
            hn[j] = o[j] * tc[j];
        }
    }
}

#[inline(always)]
fn backward_body(h: usize, gates: &[f64], c_prev: &[f64], tanh_c: &[f64], dh: &[f64], dc: &mut [f64], dz: &mut [f64]) {
    for (b, (g, d)) in gates.chunks_exact(4 * h).zip(dz.chunks_exact_mut(4 * h)).enumerate() {
        let span = b * h..(b + 1) * h;
        let (cp, tc, dh, dc) = (
            &c_prev[span.clone()],
            &tanh_c[span.clone()],
            &dh[span.clone()],
            &mut dc[span],
        );
        let (gi, rest) = g.split_at(h);
        let (gf, rest) = rest.split_at(h);
        let (gg, go) = rest.split_at(h);
        let (di, rest) = d.split_at_mut(h);
        let (df, rest) = rest.split_at_mut(h);
        let (dg, d_o) = rest.split_at_mut(h);
        for j in 0..h {
            let (i, f, gv, o, t) = (gi[j], gf[j], gg[j], go[j], tc[j]);
            let c_grad = dh[j] * o * (1.0 - t * t) + dc[j];
            di[j] = c_grad * gv * i * (1.0 - i);
            df[j] = c_grad * cp[j] * f * (1.0 - f);
            dg[j] = c_grad * i * (1.0 - gv * gv);
            d_o[j] = dh[j] * t * o * (1.0 - o);
            dc[j] = c_grad * f;
        }
    }
}
