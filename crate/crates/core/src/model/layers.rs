//! Layer kernels over channel-major (CHW) `f64` buffers with `f32` weights.

/// Output rows (or columns) `[start, end)` whose 3x3 tap at offset `k - 1` stays inside `[0, n)`.
fn valid_range(k: usize, n: usize) -> (usize, usize) {
    match k {
        0 => (1, n),
        1 => (0, n),
        _ => (0, n - 1),
    }
}

/// 3x3 convolution, stride 1, zero padding 1. Weights are `[out][in][ky][kx]`.
pub(super) fn conv3x3_forward(
    input: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    weights: &[f32],
    bias: &[f32],
    out_c: usize,
) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; out_c * plane];
    for oc in 0..out_c {
        let o = &mut out[oc * plane..(oc + 1) * plane];
        o.fill(bias[oc] as f64);
        for ic in 0..in_c {
            let src = &input[ic * plane..(ic + 1) * plane];
            for ky in 0..3 {
                let (y0, y1) = valid_range(ky, h);
                for kx in 0..3 {
                    let wv = weights[(oc * in_c + ic) * 9 + ky * 3 + kx] as f64;
                    let (x0, x1) = valid_range(kx, w);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let orow = &mut o[y * w + x0..y * w + x1];
                        let srow = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        for (ov, sv) in orow.iter_mut().zip(srow) {
                            *ov += wv * sv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(d_input, d_weights, d_bias)`; the parameter gradients are empty
/// unless `want_params`, the input gradient is `None` unless `want_input`.
#[allow(clippy::too_many_arguments)]
pub(super) fn conv3x3_backward(
    input: &[f64],
    dout: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    weights: &[f32],
    out_c: usize,
    want_input: bool,
    want_params: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let plane = h * w;
    let mut din = want_input.then(|| vec![0.0; in_c * plane]);
    let mut dw = if want_params { vec![0.0; out_c * in_c * 9] } else { Vec::new() };
    let db = if want_params {
        (0..out_c)
            .map(|oc| dout[oc * plane..(oc + 1) * plane].iter().sum())
            .collect()
    } else {
        Vec::new()
    };
    for oc in 0..out_c {
        let g = &dout[oc * plane..(oc + 1) * plane];
        for ic in 0..in_c {
            let src = &input[ic * plane..(ic + 1) * plane];
            for ky in 0..3 {
                let (y0, y1) = valid_range(ky, h);
                for kx in 0..3 {
                    let widx = (oc * in_c + ic) * 9 + ky * 3 + kx;
                    let (x0, x1) = valid_range(kx, w);
                    if want_params {
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            let sy = y + ky - 1;
                            let grow = &g[y * w + x0..y * w + x1];
                            let srow = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                            for (gv, sv) in grow.iter().zip(srow) {
                                acc += gv * sv;
                            }
                        }
                        dw[widx] += acc;
                    }
                    if let Some(din) = din.as_mut() {
                        let wv = weights[widx] as f64;
                        let dplane = &mut din[ic * plane..(ic + 1) * plane];
                        for y in y0..y1 {
                            let sy = y + ky - 1;
                            let grow = &g[y * w + x0..y * w + x1];
                            let drow = &mut dplane[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                            for (dv, gv) in drow.iter_mut().zip(grow) {
                                *dv += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    (din, dw, db)
}

/// 2x2 max pooling, stride 2. Also returns the flat input index of each
/// window's winner (first maximum in row-major order).
pub(super) fn maxpool2_forward(input: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * w + 2 * x + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                idx.push(best);
            }
        }
    }
    (out, idx)
}

pub(super) fn maxpool2_backward(dout: &[f64], idx: &[usize], input_len: usize) -> Vec<f64> {
    let mut din = vec![0.0; input_len];
    for (&g, &i) in dout.iter().zip(idx) {
        din[i] += g;
    }
    din
}

/// `out[o] = b[o] + sum_i W[o][i] x[i]`, with `W` row-major `(out, in)`.
pub(super) fn dense_forward(x: &[f64], weights: &[f32], bias: &[f32], out_len: usize) -> Vec<f64> {
    let in_len = x.len();
    (0..out_len)
        .map(|o| {
            let row = &weights[o * in_len..(o + 1) * in_len];
            bias[o] as f64 + row.iter().zip(x).map(|(&wv, &xv)| wv as f64 * xv).sum::<f64>()
        })
        .collect()
}

pub(super) fn dense_backward(
    x: &[f64],
    dout: &[f64],
    weights: &[f32],
    in_len: usize,
    want_params: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; in_len];
    for (o, &g) in dout.iter().enumerate() {
        let row = &weights[o * in_len..(o + 1) * in_len];
        for (d, &wv) in dx.iter_mut().zip(row) {
            *d += wv as f64 * g;
        }
    }
    if !want_params {
        return (dx, Vec::new(), Vec::new());
    }
    let mut dw = Vec::with_capacity(dout.len() * in_len);
    for &g in dout {
        dw.extend(x.iter().map(|&xv| g * xv));
    }
    (dx, dw, dout.to_vec())
}
