//! Forward and backward passes of the fixed architecture, generic over the
//! scalar type. Activations are stored channel-major per sample.

use super::float::Float;

pub(crate) const INPUT_SIDE: usize = 32;
pub(crate) const INPUT_CHANNELS: usize = 3;
pub(crate) const INPUT_LEN: usize = INPUT_CHANNELS * INPUT_SIDE * INPUT_SIDE;
pub const N_FEATURES: usize = 128;
pub(crate) const N_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub pad: usize,
    /// Input side (square).
    pub side: usize,
}

impl ConvSpec {
    pub const fn out_side(&self) -> usize {
        self.side + 2 * self.pad + 1 - self.k
    }

    pub const fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    pub const fn out_pixels(&self) -> usize {
        self.out_side() * self.out_side()
    }
}

pub(crate) const CONV1: ConvSpec = ConvSpec {
    cin: 3,
    cout: 32,
    k: 5,
    pad: 2,
    side: 32,
};
pub(crate) const CONV2: ConvSpec = ConvSpec {
    cin: 32,
    cout: 32,
    k: 5,
    pad: 2,
    side: 16,
};
pub(crate) const CONV3: ConvSpec = ConvSpec {
    cin: 32,
    cout: 64,
    k: 5,
    pad: 2,
    side: 8,
};
pub(crate) const CONV4: ConvSpec = ConvSpec {
    cin: 64,
    cout: N_FEATURES,
    k: 4,
    pad: 0,
    side: 4,
};

/// Parameter tensors in storage order.
pub const PARAM_NAMES: [&str; 12] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "conv3.weight",
    "conv3.bias",
    "conv4.weight",
    "conv4.bias",
    "fc.weight",
    "fc.bias",
    "head.weight",
    "head.bias",
];

/// Shapes matching [`PARAM_NAMES`]; weights are `[out, in, ky, kx]`.
pub const PARAM_SHAPES: [&[usize]; 12] = [
    &[32, 3, 5, 5],
    &[32],
    &[32, 32, 5, 5],
    &[32],
    &[64, 32, 5, 5],
    &[64],
    &[N_FEATURES, 64, 4, 4],
    &[N_FEATURES],
    &[N_FEATURES, N_FEATURES],
    &[N_FEATURES],
    &[N_CLASSES, N_FEATURES],
    &[N_CLASSES],
];

pub(crate) fn param_len(i: usize) -> usize {
    PARAM_SHAPES[i].iter().product()
}

pub(crate) fn is_weight(i: usize) -> bool {
    i.is_multiple_of(2)
}

pub(crate) type Params<T> = Vec<Vec<T>>;

pub(crate) fn zeros_like<T: Float>() -> Params<T> {
    (0..PARAM_SHAPES.len()).map(|i| vec![T::ZERO; param_len(i)]).collect()
}

/// Output side of a 3x3, stride-2 pool padded by one at the bottom/right.
const fn pool_out(side: usize) -> usize {
    (side + 1 - 3) / 2 + 1
}

fn im2col<T: Float>(x: &[T], spec: &ConvSpec, col: &mut [T]) {
    let (s, o, k, p) = (spec.side, spec.out_side(), spec.k, spec.pad as isize);
    let n = o * o;
    for c in 0..spec.cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((c * k + ky) * k + kx) * n..][..n];
                for oy in 0..o {
                    let iy = oy as isize + ky as isize - p;
                    let dst = &mut row[oy * o..(oy + 1) * o];
                    if iy < 0 || iy >= s as isize {
                        dst.fill(T::ZERO);
                        continue;
                    }
                    let src = &x[(c * s + iy as usize) * s..][..s];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = ox as isize + kx as isize - p;
                        *d = if ix < 0 || ix >= s as isize { T::ZERO } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Float>(col: &[T], spec: &ConvSpec, dx: &mut [T]) {
    let (s, o, k, p) = (spec.side, spec.out_side(), spec.k, spec.pad as isize);
    let n = o * o;
    dx.fill(T::ZERO);
    for c in 0..spec.cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((c * k + ky) * k + kx) * n..][..n];
                for oy in 0..o {
                    let iy = oy as isize + ky as isize - p;
                    if iy < 0 || iy >= s as isize {
                        continue;
                    }
                    let dst = &mut dx[(c * s + iy as usize) * s..][..s];
                    for ox in 0..o {
                        let ix = ox as isize + kx as isize - p;
                        if ix >= 0 && ix < s as isize {
                            dst[ix as usize] += row[oy * o + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `out = relu(W * im2col(x) + b)`.
fn conv_forward<T: Float>(x: &[T], w: &[T], b: &[T], spec: &ConvSpec, col: &mut Vec<T>, out: &mut [T]) {
    let n = spec.out_pixels();
    col.resize(spec.col_rows() * n, T::ZERO);
    im2col(x, spec, col);
    for (c, row) in out.chunks_exact_mut(n).enumerate() {
        row.fill(b[c]);
    }
    let kk = spec.col_rows();
    T::gemm(spec.cout, kk, n, T::ONE, w, (kk as isize, 1), col, (n as isize, 1), T::ONE, out, (n as isize, 1));
    relu_in_place(out);
}

/// Accumulates weight and bias gradients and optionally the input gradient.
/// `dz` is the gradient after the ReLU mask has been applied.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Float>(
    x: &[T],
    w: &[T],
    dz: &[T],
    spec: &ConvSpec,
    col: &mut Vec<T>,
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    let n = spec.out_pixels();
    let kk = spec.col_rows();
    col.resize(kk * n, T::ZERO);
    im2col(x, spec, col);
    for (c, row) in dz.chunks_exact(n).enumerate() {
        let mut s = T::ZERO;
        for &v in row {
            s += v;
        }
        db[c] += s;
    }
    T::gemm(spec.cout, n, kk, T::ONE, dz, (n as isize, 1), col, (1, n as isize), T::ONE, dw, (kk as isize, 1));
    if let Some(dx) = dx {
        let mut dcol = vec![T::ZERO; kk * n];
        T::gemm(kk, spec.cout, n, T::ONE, w, (1, kk as isize), dz, (n as isize, 1), T::ZERO, &mut dcol, (n as isize, 1));
        col2im(&dcol, spec, dx);
    }
}

fn relu_in_place<T: Float>(v: &mut [T]) {
    for x in v {
        if !(*x > T::ZERO) {
            *x = T::ZERO;
        }
    }
}

fn relu_mask<T: Float>(grad: &mut [T], act: &[T]) {
    for (g, &a) in grad.iter_mut().zip(act) {
        if !(a > T::ZERO) {
            *g = T::ZERO;
        }
    }
}

fn max_pool<T: Float>(x: &[T], channels: usize, side: usize, out: &mut [T], arg: &mut [u32]) {
    let o = pool_out(side);
    for c in 0..channels {
        for oy in 0..o {
            for ox in 0..o {
                let mut best = None::<(T, usize)>;
                for iy in 2 * oy..(2 * oy + 3).min(side) {
                    for ix in 2 * ox..(2 * ox + 3).min(side) {
                        let i = (c * side + iy) * side + ix;
                        if best.is_none_or(|(v, _)| x[i] > v) {
                            best = Some((x[i], i));
                        }
                    }
                }
                let (v, i) = best.expect("window is never empty");
                let oi = (c * o + oy) * o + ox;
                out[oi] = v;
                arg[oi] = i as u32;
            }
        }
    }
}

fn avg_pool<T: Float>(x: &[T], channels: usize, side: usize, out: &mut [T]) {
    let o = pool_out(side);
    for c in 0..channels {
        for oy in 0..o {
            for ox in 0..o {
                let (ys, xs) = (2 * oy..(2 * oy + 3).min(side), 2 * ox..(2 * ox + 3).min(side));
                let count = T::from_f64((ys.len() * xs.len()) as f64);
                let mut s = T::ZERO;
                for iy in ys {
                    for ix in xs.clone() {
                        s += x[(c * side + iy) * side + ix];
                    }
                }
                out[(c * o + oy) * o + ox] = s / count;
            }
        }
    }
}

fn avg_pool_backward<T: Float>(dout: &[T], channels: usize, side: usize, dx: &mut [T]) {
    let o = pool_out(side);
    dx.fill(T::ZERO);
    for c in 0..channels {
        for oy in 0..o {
            for ox in 0..o {
                let (ys, xs) = (2 * oy..(2 * oy + 3).min(side), 2 * ox..(2 * ox + 3).min(side));
                let g = dout[(c * o + oy) * o + ox] / T::from_f64((ys.len() * xs.len()) as f64);
                for iy in ys {
                    for ix in xs.clone() {
                        dx[(c * side + iy) * side + ix] += g;
                    }
                }
            }
        }
    }
}

/// `out = W x + b`, `W` being `rows x x.len()`.
fn dense<T: Float>(w: &[T], b: &[T], x: &[T], out: &mut [T]) {
    let k = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let mut s = b[r];
        for (&wv, &xv) in w[r * k..(r + 1) * k].iter().zip(x) {
            s += wv * xv;
        }
        *o = s;
    }
}

/// `dW += g x^T`, `db += g`, and `dx = W^T g` when requested.
fn dense_backward<T: Float>(w: &[T], x: &[T], g: &[T], dw: &mut [T], db: &mut [T], dx: Option<&mut [T]>) {
    let k = x.len();
    for (r, &gr) in g.iter().enumerate() {
        db[r] += gr;
        for (d, &xv) in dw[r * k..(r + 1) * k].iter_mut().zip(x) {
            *d += gr * xv;
        }
    }
    if let Some(dx) = dx {
        dx.fill(T::ZERO);
        for (r, &gr) in g.iter().enumerate() {
            for (d, &wv) in dx.iter_mut().zip(&w[r * k..(r + 1) * k]) {
                *d += wv * gr;
            }
        }
    }
}

/// Two-class softmax, computed stably.
pub(crate) fn softmax2<T: Float>(z: [T; 2]) -> [T; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Inverted-dropout multipliers for the output of the first pooling layer:
/// either 0 or `1/keep`.
pub(crate) type DropMask<T> = Vec<T>;

pub(crate) const DROP_LEN: usize = CONV1.cout * 16 * 16;

/// Intermediate activations of one sample.
#[derive(Debug, Clone)]
pub(crate) struct Trace<T> {
    pub x: Vec<T>,
    pub a1: Vec<T>,
    pub arg1: Vec<u32>,
    pub d1: Vec<T>,
    pub a2: Vec<T>,
    pub p2: Vec<T>,
    pub a3: Vec<T>,
    pub p3: Vec<T>,
    pub a4: Vec<T>,
    pub a5: Vec<T>,
    pub logits: [T; 2],
    pub probs: [T; 2],
}

/// Scratch buffers reused across samples.
#[derive(Default)]
pub(crate) struct Workspace<T> {
    col: Vec<T>,
}

pub(crate) fn forward<T: Float>(
    params: &[Vec<T>],
    x: &[T],
    drop: Option<&DropMask<T>>,
    ws: &mut Workspace<T>,
) -> Trace<T> {
    debug_assert_eq!(x.len(), INPUT_LEN);
    let mut a1 = vec![T::ZERO; CONV1.cout * CONV1.out_pixels()];
    conv_forward(x, &params[0], &params[1], &CONV1, &mut ws.col, &mut a1);

    let mut p1 = vec![T::ZERO; DROP_LEN];
    let mut arg1 = vec![0u32; DROP_LEN];
    max_pool(&a1, CONV1.cout, CONV1.out_side(), &mut p1, &mut arg1);
    let d1 = match drop {
        Some(m) => p1.iter().zip(m).map(|(&v, &k)| v * k).collect(),
        None => p1,
    };

    let mut a2 = vec![T::ZERO; CONV2.cout * CONV2.out_pixels()];
    conv_forward(&d1, &params[2], &params[3], &CONV2, &mut ws.col, &mut a2);
    let mut p2 = vec![T::ZERO; CONV3.cin * CONV3.side * CONV3.side];
    avg_pool(&a2, CONV2.cout, CONV2.out_side(), &mut p2);

    let mut a3 = vec![T::ZERO; CONV3.cout * CONV3.out_pixels()];
    conv_forward(&p2, &params[4], &params[5], &CONV3, &mut ws.col, &mut a3);
    let mut p3 = vec![T::ZERO; CONV4.cin * CONV4.side * CONV4.side];
    avg_pool(&a3, CONV3.cout, CONV3.out_side(), &mut p3);

    let mut a4 = vec![T::ZERO; N_FEATURES];
    conv_forward(&p3, &params[6], &params[7], &CONV4, &mut ws.col, &mut a4);

    let mut a5 = vec![T::ZERO; N_FEATURES];
    dense(&params[8], &params[9], &a4, &mut a5);
    relu_in_place(&mut a5);

    let mut z = [T::ZERO; 2];
    dense(&params[10], &params[11], &a5, &mut z);
    Trace {
        x: x.to_vec(),
        a1,
        arg1,
        d1,
        a2,
        p2,
        a3,
        p3,
        a4,
        a5,
        logits: z,
        probs: softmax2(z),
    }
}

/// Accumulates into `grads` the gradient of `weight * -log P(label)` for one
/// sample.
pub(crate) fn backward<T: Float>(
    params: &[Vec<T>],
    t: &Trace<T>,
    drop: Option<&DropMask<T>>,
    label: usize,
    weight: T,
    grads: &mut Params<T>,
    ws: &mut Workspace<T>,
) {
    let mut dz = [t.probs[0], t.probs[1]];
    dz[label] -= T::ONE;
    let dz = dz.map(|v| v * weight);

    let (g_lo, g_hi) = grads.split_at_mut(10);
    let (gw_h, gb_h) = g_hi.split_at_mut(1);
    let mut da5 = vec![T::ZERO; N_FEATURES];
    dense_backward(&params[10], &t.a5, &dz, &mut gw_h[0], &mut gb_h[0], Some(&mut da5));
    relu_mask(&mut da5, &t.a5);

    let mut da4 = vec![T::ZERO; N_FEATURES];
    {
        let (gw, gb) = g_lo[8..10].split_at_mut(1);
        dense_backward(&params[8], &t.a4, &da5, &mut gw[0], &mut gb[0], Some(&mut da4));
    }
    relu_mask(&mut da4, &t.a4);

    let mut dp3 = vec![T::ZERO; t.p3.len()];
    {
        let (gw, gb) = g_lo[6..8].split_at_mut(1);
        conv_backward(&t.p3, &params[6], &da4, &CONV4, &mut ws.col, &mut gw[0], &mut gb[0], Some(&mut dp3));
    }
    let mut da3 = vec![T::ZERO; t.a3.len()];
    avg_pool_backward(&dp3, CONV3.cout, CONV3.out_side(), &mut da3);
    relu_mask(&mut da3, &t.a3);

    let mut dp2 = vec![T::ZERO; t.p2.len()];
    {
        let (gw, gb) = g_lo[4..6].split_at_mut(1);
        conv_backward(&t.p2, &params[4], &da3, &CONV3, &mut ws.col, &mut gw[0], &mut gb[0], Some(&mut dp2));
    }
    let mut da2 = vec![T::ZERO; t.a2.len()];
    avg_pool_backward(&dp2, CONV2.cout, CONV2.out_side(), &mut da2);
    relu_mask(&mut da2, &t.a2);

    let mut dd1 = vec![T::ZERO; t.d1.len()];
    {
        let (gw, gb) = g_lo[2..4].split_at_mut(1);
        conv_backward(&t.d1, &params[2], &da2, &CONV2, &mut ws.col, &mut gw[0], &mut gb[0], Some(&mut dd1));
    }
    if let Some(m) = drop {
        for (g, &k) in dd1.iter_mut().zip(m) {
            *g *= k;
        }
    }
    let mut da1 = vec![T::ZERO; t.a1.len()];
    for (&g, &i) in dd1.iter().zip(&t.arg1) {
        da1[i as usize] += g;
    }
    relu_mask(&mut da1, &t.a1);
    let (gw, gb) = g_lo[0..2].split_at_mut(1);
    conv_backward(&t.x, &params[0], &da1, &CONV1, &mut ws.col, &mut gw[0], &mut gb[0], None);
}

/// Signature of every piecewise-linear decision taken by a forward pass:
/// ReLU on/off states and max-pool winners.
pub(crate) fn activation_pattern<T: Float>(t: &Trace<T>) -> Vec<u32> {
    let mut sig = t.arg1.clone();
    for a in [&t.a1, &t.a2, &t.a3, &t.a4, &t.a5] {
        sig.extend(a.iter().map(|&v| u32::from(v > T::ZERO)));
    }
    sig
}
