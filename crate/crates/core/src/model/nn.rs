//! Minimal CNN building blocks with hand-written backward passes.
//!
//! A network is a list of [`Layer`]s whose parameters live in one flat `f32`
//! buffer; layers hold offsets into it. A batch of `n` samples is stored
//! channel-major as `[C][n][H][W]`, so every convolution over the batch is a
//! single GEMM after im2col and a dense layer sees a `features × n` matrix.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub input: Shape,
    pub output: Shape,
    pub weight: usize,
    pub bias: usize,
}

impl Conv {
    fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.k * self.k
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub input: Shape,
    pub output: Shape,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: usize,
    pub bias: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Conv(Conv),
    Relu,
    MaxPool(Pool),
    GlobalAvgPool { input: Shape },
    Dense(Dense),
    /// `branch(x) + shortcut(x)`; an empty shortcut is the identity.
    Residual { branch: Vec<Layer>, shortcut: Vec<Layer> },
}

/// Per-layer state saved by a training forward pass.
pub enum Cache {
    Conv { cols: Vec<f32> },
    Relu { output: Vec<f32> },
    MaxPool { argmax: Vec<u32> },
    GlobalAvgPool,
    Dense { input: Vec<f32> },
    Residual { branch: Vec<Cache>, shortcut: Vec<Cache> },
}

/// Builder that allocates parameter offsets while tracking the running shape.
pub struct NetBuilder {
    shape: Shape,
    n_params: usize,
}

impl NetBuilder {
    pub fn new(input: Shape) -> Self {
        Self { shape: input, n_params: 0 }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    fn alloc(&mut self, n: usize) -> usize {
        let at = self.n_params;
        self.n_params += n;
        at
    }

    pub fn conv(&mut self, out_c: usize, k: usize, stride: usize, pad: usize) -> Layer {
        let input = self.shape;
        assert!(input.h + 2 * pad >= k && input.w + 2 * pad >= k, "kernel larger than padded input");
        let output = Shape::new(
            out_c,
            (input.h + 2 * pad - k) / stride + 1,
            (input.w + 2 * pad - k) / stride + 1,
        );
        let weight = self.alloc(out_c * input.c * k * k);
        let bias = self.alloc(out_c);
        self.shape = output;
        Layer::Conv(Conv { in_c: input.c, out_c, k, stride, pad, input, output, weight, bias })
    }

    pub fn relu(&mut self) -> Layer {
        Layer::Relu
    }

    pub fn max_pool(&mut self, k: usize, stride: usize, pad: usize) -> Layer {
        let input = self.shape;
        let output = Shape::new(
            input.c,
            (input.h + 2 * pad - k) / stride + 1,
            (input.w + 2 * pad - k) / stride + 1,
        );
        self.shape = output;
        Layer::MaxPool(Pool { k, stride, pad, input, output })
    }

    pub fn global_avg_pool(&mut self) -> Layer {
        let input = self.shape;
        self.shape = Shape::new(input.c, 1, 1);
        Layer::GlobalAvgPool { input }
    }

    pub fn dense(&mut self, outputs: usize) -> Layer {
        assert!(self.shape.h == 1 && self.shape.w == 1, "dense layers need pooled input");
        let inputs = self.shape.c;
        let weight = self.alloc(outputs * inputs);
        let bias = self.alloc(outputs);
        self.shape = Shape::new(outputs, 1, 1);
        Layer::Dense(Dense { inputs, outputs, weight, bias })
    }

    /// Builds a residual block; both closures start from the block's input shape.
    pub fn residual(
        &mut self,
        branch: impl FnOnce(&mut NetBuilder) -> Vec<Layer>,
        shortcut: impl FnOnce(&mut NetBuilder) -> Vec<Layer>,
    ) -> Layer {
        let input = self.shape;
        let branch = branch(self);
        let out = self.shape;
        self.shape = input;
        let shortcut = shortcut(self);
        assert_eq!(self.shape, out, "residual branch and shortcut disagree on shape");
        Layer::Residual { branch, shortcut }
    }
}

/// `c = alpha·a·b + beta·c` on row-major buffers, with explicit strides so
/// transposed operands need no copy.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    debug_assert!(c.len() >= m * n);
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the asserts above bound every index the kernel touches for the
    // given dimensions and strides; `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f32], conv: &Conv, n: usize) -> Vec<f32> {
    let Shape { c, h, w } = conv.input;
    let (oh, ow) = (conv.output.h, conv.output.w);
    let (k, s, p) = (conv.k, conv.stride, conv.pad as isize);
    let l = oh * ow;
    let mut cols = vec![0f32; c * k * k * n * l];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * n * l..][..n * l];
                for si in 0..n {
                    let plane = &x[(ci * n + si) * h * w..][..h * w];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * w..][..w];
                        let dst = &mut row[si * l + oy * ow..][..ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f32], conv: &Conv, n: usize) -> Vec<f32> {
    let Shape { c, h, w } = conv.input;
    let (oh, ow) = (conv.output.h, conv.output.w);
    let (k, s, p) = (conv.k, conv.stride, conv.pad as isize);
    let l = oh * ow;
    let mut x = vec![0f32; c * n * h * w];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * n * l..][..n * l];
                for si in 0..n {
                    let plane = &mut x[(ci * n + si) * h * w..][..h * w];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..][..w];
                        for (ox, &g) in row[si * l + oy * ow..][..ow].iter().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

fn conv_forward(conv: &Conv, params: &[f32], x: &[f32], n: usize, cache: Option<&mut Vec<Cache>>) -> Vec<f32> {
    let nl = n * conv.output.h * conv.output.w;
    let kk = conv.in_c * conv.k * conv.k;
    let cols = if conv.is_pointwise() { x.to_vec() } else { im2col(x, conv, n) };
    let weight = &params[conv.weight..conv.weight + conv.weight_len()];
    let bias = &params[conv.bias..conv.bias + conv.out_c];
    let mut out = vec![0f32; conv.out_c * nl];
    for (o, &b) in bias.iter().enumerate() {
        out[o * nl..(o + 1) * nl].fill(b);
    }
    gemm(conv.out_c, kk, nl, weight, (kk, 1), &cols, (nl, 1), 1.0, &mut out);
    if let Some(c) = cache {
        c.push(Cache::Conv { cols });
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    conv: &Conv,
    params: &[f32],
    cols: &[f32],
    dy: &[f32],
    n: usize,
    grads: &mut [f32],
    need_dx: bool,
) -> Vec<f32> {
    let nl = n * conv.output.h * conv.output.w;
    let kk = conv.in_c * conv.k * conv.k;
    {
        let dw = &mut grads[conv.weight..conv.weight + conv.weight_len()];
        // dW += dY · colsᵀ
        gemm(conv.out_c, nl, kk, dy, (nl, 1), cols, (1, nl), 1.0, dw);
    }
    for o in 0..conv.out_c {
        grads[conv.bias + o] += dy[o * nl..(o + 1) * nl].iter().sum::<f32>();
    }
    if !need_dx {
        return Vec::new();
    }
    let weight = &params[conv.weight..conv.weight + conv.weight_len()];
    let mut dcols = vec![0f32; kk * nl];
    // dcols = Wᵀ · dY
    gemm(kk, conv.out_c, nl, weight, (1, kk), dy, (nl, 1), 0.0, &mut dcols);
    if conv.is_pointwise() {
        dcols
    } else {
        col2im(&dcols, conv, n)
    }
}

fn max_pool_forward(pool: &Pool, x: &[f32], n: usize, cache: Option<&mut Vec<Cache>>) -> Vec<f32> {
    let (i, o) = (pool.input, pool.output);
    let planes = i.c * n;
    let mut out = vec![f32::NEG_INFINITY; planes * o.h * o.w];
    let mut argmax = vec![0u32; out.len()];
    for c in 0..planes {
        for oy in 0..o.h {
            for ox in 0..o.w {
                let idx = (c * o.h + oy) * o.w + ox;
                for ky in 0..pool.k {
                    let iy = (oy * pool.stride + ky) as isize - pool.pad as isize;
                    if iy < 0 || iy >= i.h as isize {
                        continue;
                    }
                    for kx in 0..pool.k {
                        let ix = (ox * pool.stride + kx) as isize - pool.pad as isize;
                        if ix < 0 || ix >= i.w as isize {
                            continue;
                        }
                        let src = (c * i.h + iy as usize) * i.w + ix as usize;
                        if x[src] > out[idx] {
                            out[idx] = x[src];
                            argmax[idx] = src as u32;
                        }
                    }
                }
            }
        }
    }
    if let Some(cache) = cache {
        cache.push(Cache::MaxPool { argmax });
    }
    out
}

fn forward_layer(layer: &Layer, params: &[f32], x: Vec<f32>, n: usize, mut cache: Option<&mut Vec<Cache>>) -> Vec<f32> {
    match layer {
        Layer::Conv(conv) => conv_forward(conv, params, &x, n, cache),
        Layer::Relu => {
            let mut y = x;
            for v in &mut y {
                *v = v.max(0.0);
            }
            if let Some(c) = cache {
                c.push(Cache::Relu { output: y.clone() });
            }
            y
        }
        Layer::MaxPool(pool) => max_pool_forward(pool, &x, n, cache),
        Layer::GlobalAvgPool { input } => {
            let hw = input.h * input.w;
            let y = x.chunks_exact(hw).map(|p| p.iter().sum::<f32>() / hw as f32).collect();
            if let Some(c) = cache {
                c.push(Cache::GlobalAvgPool);
            }
            y
        }
        Layer::Dense(d) => {
            let mut y = vec![0f32; d.outputs * n];
            for (o, &b) in params[d.bias..d.bias + d.outputs].iter().enumerate() {
                y[o * n..(o + 1) * n].fill(b);
            }
            let w = &params[d.weight..d.weight + d.inputs * d.outputs];
            gemm(d.outputs, d.inputs, n, w, (d.inputs, 1), &x, (n, 1), 1.0, &mut y);
            if let Some(c) = cache {
                c.push(Cache::Dense { input: x });
            }
            y
        }
        Layer::Residual { branch, shortcut } => {
            let mut branch_cache = cache.as_ref().map(|_| Vec::new());
            let mut shortcut_cache = cache.as_ref().map(|_| Vec::new());
            let mut y = forward_seq(branch, params, x.clone(), n, branch_cache.as_mut());
            let s = forward_seq(shortcut, params, x, n, shortcut_cache.as_mut());
            for (a, b) in y.iter_mut().zip(&s) {
                *a += b;
            }
            if let Some(c) = cache.as_deref_mut() {
                c.push(Cache::Residual {
                    branch: branch_cache.unwrap_or_default(),
                    shortcut: shortcut_cache.unwrap_or_default(),
                });
            }
            y
        }
    }
}

/// Runs `layers` on a batch of `n` samples. When `cache` is given, per-layer
/// state for [`backward_seq`] is appended to it.
pub fn forward_seq(
    layers: &[Layer],
    params: &[f32],
    x: Vec<f32>,
    n: usize,
    mut cache: Option<&mut Vec<Cache>>,
) -> Vec<f32> {
    let mut x = x;
    for layer in layers {
        x = forward_layer(layer, params, x, n, cache.as_deref_mut());
    }
    x
}

/// Back-propagates `dy` through `layers`, accumulating parameter gradients
/// into `grads`. Returns the gradient w.r.t. the input (empty when not needed).
pub fn backward_seq(
    layers: &[Layer],
    params: &[f32],
    cache: &[Cache],
    dy: Vec<f32>,
    n: usize,
    grads: &mut [f32],
    need_dx: bool,
) -> Vec<f32> {
    assert_eq!(layers.len(), cache.len(), "cache does not match layer list");
    let mut g = dy;
    for (i, (layer, c)) in layers.iter().zip(cache).enumerate().rev() {
        let needs = need_dx || i > 0;
        g = backward_layer(layer, params, c, g, n, grads, needs);
    }
    g
}

#[allow(clippy::too_many_arguments)]
fn backward_layer(
    layer: &Layer,
    params: &[f32],
    cache: &Cache,
    dy: Vec<f32>,
    n: usize,
    grads: &mut [f32],
    need_dx: bool,
) -> Vec<f32> {
    match (layer, cache) {
        (Layer::Conv(conv), Cache::Conv { cols }) => conv_backward(conv, params, cols, &dy, n, grads, need_dx),
        (Layer::Relu, Cache::Relu { output }) => {
            let mut g = dy;
            for (gv, &o) in g.iter_mut().zip(output) {
                if o <= 0.0 {
                    *gv = 0.0;
                }
            }
            g
        }
        (Layer::MaxPool(pool), Cache::MaxPool { argmax }) => {
            let mut dx = vec![0f32; pool.input.len() * n];
            for (&src, &g) in argmax.iter().zip(&dy) {
                dx[src as usize] += g;
            }
            dx
        }
        (Layer::GlobalAvgPool { input }, Cache::GlobalAvgPool) => {
            let hw = input.h * input.w;
            let mut dx = Vec::with_capacity(input.len() * n);
            for &g in &dy {
                dx.extend(std::iter::repeat_n(g / hw as f32, hw));
            }
            dx
        }
        (Layer::Dense(d), Cache::Dense { input }) => {
            {
                let dw = &mut grads[d.weight..d.weight + d.inputs * d.outputs];
                gemm(d.outputs, n, d.inputs, &dy, (n, 1), input, (1, n), 1.0, dw);
            }
            for o in 0..d.outputs {
                grads[d.bias + o] += dy[o * n..(o + 1) * n].iter().sum::<f32>();
            }
            if !need_dx {
                return Vec::new();
            }
            let w = &params[d.weight..d.weight + d.inputs * d.outputs];
            let mut dx = vec![0f32; d.inputs * n];
            gemm(d.inputs, d.outputs, n, w, (1, d.inputs), &dy, (n, 1), 0.0, &mut dx);
            dx
        }
        (Layer::Residual { branch, shortcut }, Cache::Residual { branch: bc, shortcut: sc }) => {
            let mut db = backward_seq(branch, params, bc, dy.clone(), n, grads, true);
            let ds = backward_seq(shortcut, params, sc, dy, n, grads, true);
            for (a, b) in db.iter_mut().zip(&ds) {
                *a += b;
            }
            db
        }
        _ => panic!("cache entry does not match layer kind"),
    }
}

/// Visits every convolution and dense layer, recursing into residual blocks.
pub fn visit_params<'a>(layers: &'a [Layer], f: &mut dyn FnMut(&'a Layer, bool)) {
    for layer in layers {
        match layer {
            Layer::Conv(_) | Layer::Dense(_) => f(layer, false),
            Layer::Residual { branch, shortcut } => {
                // The last parametrized layer of each branch is reported so it can be zero-initialized.
                let last = branch.iter().rposition(|l| matches!(l, Layer::Conv(_) | Layer::Dense(_)));
                for (i, l) in branch.iter().enumerate() {
                    match l {
                        Layer::Conv(_) | Layer::Dense(_) => f(l, Some(i) == last),
                        Layer::Residual { .. } => visit_params(std::slice::from_ref(l), f),
                        _ => {}
                    }
                }
                visit_params(shortcut, f);
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: u64) -> impl FnMut() -> f32 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
        }
    }

    /// Direct nested-loop convolution used as an oracle for the im2col path.
    fn naive_conv(conv: &Conv, params: &[f32], x: &[f32]) -> Vec<f32> {
        let (i, o) = (conv.input, conv.output);
        let mut y = vec![0f32; o.len()];
        for oc in 0..o.c {
            for oy in 0..o.h {
                for ox in 0..o.w {
                    let mut acc = params[conv.bias + oc] as f64;
                    for ic in 0..i.c {
                        for ky in 0..conv.k {
                            for kx in 0..conv.k {
                                let iy = (oy * conv.stride + ky) as isize - conv.pad as isize;
                                let ix = (ox * conv.stride + kx) as isize - conv.pad as isize;
                                if iy < 0 || ix < 0 || iy >= i.h as isize || ix >= i.w as isize {
                                    continue;
                                }
                                let w = params[conv.weight + ((oc * i.c + ic) * conv.k + ky) * conv.k + kx];
                                acc += (w * x[(ic * i.h + iy as usize) * i.w + ix as usize]) as f64;
                            }
                        }
                    }
                    y[(oc * o.h + oy) * o.w + ox] = acc as f32;
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_naive_loops() {
        for (k, s, p) in [(3, 1, 1), (5, 2, 2), (3, 2, 1), (1, 1, 0), (1, 2, 0), (7, 2, 3)] {
            let mut b = NetBuilder::new(Shape::new(3, 11, 9));
            let layer = b.conv(4, k, s, p);
            let mut r = lcg(k as u64 * 31 + s as u64);
            let params: Vec<f32> = (0..b.n_params()).map(|_| r()).collect();
            let x: Vec<f32> = (0..3 * 11 * 9).map(|_| r()).collect();
            let Layer::Conv(conv) = &layer else { unreachable!() };
            let got = forward_seq(std::slice::from_ref(&layer), &params, x.clone(), 1, None);
            let want = naive_conv(conv, &params, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-4, "k{k} s{s} p{p}: {g} vs {w}");
            }
        }
    }

    /// Central differences in f64 over a scalar objective sum(c ⊙ y).
    fn check_gradients(layers: &[Layer], n_params: usize, input: Shape, n: usize, seed: u64) {
        let mut r = lcg(seed);
        let params: Vec<f32> = (0..n_params).map(|_| r() * 0.5).collect();
        let x: Vec<f32> = (0..input.len() * n).map(|_| r()).collect();
        let y = forward_seq(layers, &params, x.clone(), n, None);
        let coef: Vec<f32> = (0..y.len()).map(|_| r()).collect();
        let objective = |p: &[f32], x: &[f32]| -> f64 {
            forward_seq(layers, p, x.to_vec(), n, None)
                .iter()
                .zip(&coef)
                .map(|(a, b)| *a as f64 * *b as f64)
                .sum()
        };
        let mut cache = Vec::new();
        forward_seq(layers, &params, x.clone(), n, Some(&mut cache));
        let mut grads = vec![0f32; n_params];
        let dx = backward_seq(layers, &params, &cache, coef.clone(), n, &mut grads, true);

        let h = 1e-2f32;
        let mut worst = 0f64;
        for i in (0..n_params).step_by((n_params / 40).max(1)) {
            let mut p = params.clone();
            p[i] += h;
            let up = objective(&p, &x);
            p[i] -= 2.0 * h;
            let down = objective(&p, &x);
            let num = (up - down) / (2.0 * h as f64);
            worst = worst.max((num - grads[i] as f64).abs() / (num.abs().max(grads[i].abs() as f64)).max(1e-2));
        }
        for i in (0..x.len()).step_by((x.len() / 20).max(1)) {
            let mut xx = x.clone();
            xx[i] += h;
            let up = objective(&params, &xx);
            xx[i] -= 2.0 * h;
            let down = objective(&params, &xx);
            let num = (up - down) / (2.0 * h as f64);
            worst = worst.max((num - dx[i] as f64).abs() / (num.abs().max(dx[i].abs() as f64)).max(1e-2));
        }
        assert!(worst < 2e-2, "worst relative gradient error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        // Average pooling and no ReLU keep the objective smooth for differencing.
        let input = Shape::new(2, 9, 8);
        let mut b = NetBuilder::new(input);
        let layers = vec![b.conv(3, 3, 2, 1), b.conv(4, 3, 1, 1), b.global_avg_pool(), b.dense(5)];
        check_gradients(&layers, b.n_params(), input, 3, 5);
    }

    #[test]
    fn residual_gradients_match_finite_differences() {
        let input = Shape::new(3, 6, 6);
        let mut b = NetBuilder::new(input);
        let res = b.residual(
            |b| vec![b.conv(4, 1, 1, 0), b.conv(4, 3, 2, 1), b.conv(5, 1, 1, 0)],
            |b| vec![b.conv(5, 1, 2, 0)],
        );
        let layers = vec![res, b.global_avg_pool(), b.dense(2)];
        check_gradients(&layers, b.n_params(), input, 2, 9);
    }

    #[test]
    fn relu_and_maxpool_route_gradients() {
        let input = Shape::new(1, 4, 4);
        let mut b = NetBuilder::new(input);
        let layers = vec![b.relu(), b.max_pool(2, 2, 0)];
        let x: Vec<f32> = (0..16).map(|i| i as f32 - 5.0).collect();
        let mut cache = Vec::new();
        let y = forward_seq(&layers, &[], x, 1, Some(&mut cache));
        assert_eq!(y, vec![0.0, 2.0, 8.0, 10.0]);
        let dx = backward_seq(&layers, &[], &cache, vec![1.0; 4], 1, &mut [], true);
        // Pool 0 holds only non-positive inputs; its argmax passes through the ReLU mask as zero.
        assert_eq!(dx.iter().sum::<f32>(), 3.0);
        assert_eq!(dx[7], 1.0);
        assert_eq!(dx[15], 1.0);
    }

    #[test]
    fn batch_columns_match_single_samples() {
        let input = Shape::new(3, 12, 12);
        let mut b = NetBuilder::new(input);
        let mut layers = vec![b.conv(4, 5, 2, 2), b.relu(), b.max_pool(3, 2, 1)];
        layers.push(b.residual(|b| vec![b.conv(6, 3, 1, 1), b.relu(), b.conv(6, 3, 1, 1)], |b| vec![b.conv(6, 1, 1, 0)]));
        layers.push(b.global_avg_pool());
        layers.push(b.dense(7));
        let mut r = lcg(13);
        let params: Vec<f32> = (0..b.n_params()).map(|_| r() * 0.3).collect();
        let n = 5;
        let samples: Vec<Vec<f32>> = (0..n).map(|_| (0..input.len()).map(|_| r()).collect()).collect();
        // Interleave into [C][n][H][W].
        let hw = input.h * input.w;
        let mut batch = vec![0f32; input.len() * n];
        for (si, smp) in samples.iter().enumerate() {
            for c in 0..input.c {
                batch[(c * n + si) * hw..][..hw].copy_from_slice(&smp[c * hw..][..hw]);
            }
        }
        let y = forward_seq(&layers, &params, batch, n, None);
        for (si, smp) in samples.iter().enumerate() {
            let single = forward_seq(&layers, &params, smp.clone(), 1, None);
            for (o, v) in single.iter().enumerate() {
                assert!((y[o * n + si] - v).abs() < 1e-5);
            }
        }
    }
}
