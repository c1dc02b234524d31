use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::fan_in_uniform;
use crate::{Error, Real, Result, Tensor4};

/// Square convolution, stride 1, zero "same" padding, with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `(out, in, k, k)` row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dGrads<T> {
    pub input: Option<Tensor4<T>>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        let fan_in = in_channels * kernel * kernel;
        let weight = fan_in_uniform(fan_in, out_channels * fan_in, rng);
        let bias = fan_in_uniform(fan_in, out_channels, rng);
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn from_parts(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        weight: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if kernel % 2 == 0
            || weight.len() != out_channels * in_channels * kernel * kernel
            || bias.len() != out_channels
        {
            return Err(Error::Shape(format!(
                "conv {in_channels}->{out_channels} k{kernel}: got {} weights, {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn im2col(&self, item: &[T], h: usize, w: usize, col: &mut [T]) {
        let k = self.kernel;
        let pad = k / 2;
        let hw = h * w;
        for c in 0..self.in_channels {
            let plane = &item[c * hw..(c + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut col[((c * k + ky) * k + kx) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad as isize;
                        let dst = &mut row[y * w..(y + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                        for (x, d) in dst.iter_mut().enumerate() {
                            let sx = x as isize + kx as isize - pad as isize;
                            *d = if sx < 0 || sx >= w as isize {
                                T::zero()
                            } else {
                                src[sx as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, col: &[T], h: usize, w: usize, item: &mut [T]) {
        let k = self.kernel;
        let pad = k / 2;
        let hw = h * w;
        for c in 0..self.in_channels {
            let plane = &mut item[c * hw..(c + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &col[((c * k + ky) * k + kx) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                        for x in 0..w {
                            let sx = x as isize + kx as isize - pad as isize;
                            if sx >= 0 && sx < w as isize {
                                dst[sx as usize] += row[y * w + x];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let [b, c, h, w] = x.dims();
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} channels, got {c}",
                self.in_channels
            )));
        }
        let hw = h * w;
        let patch = self.patch_len();
        let mut col = vec![T::zero(); patch * hw];
        let mut out = Tensor4::zeros([b, self.out_channels, h, w]);
        for item in 0..b {
            self.im2col(x.item(item), h, w, &mut col);
            let dst = out.item_mut(item);
            for (o, chunk) in dst.chunks_exact_mut(hw).enumerate() {
                chunk.fill(self.bias[o]);
            }
            T::gemm(
                self.out_channels,
                patch,
                hw,
                T::one(),
                &self.weight,
                patch as isize,
                1,
                &col,
                hw as isize,
                1,
                T::one(),
                dst,
                hw as isize,
                1,
            );
        }
        Ok(out)
    }

    pub fn backward(
        &self,
        x: &Tensor4<T>,
        grad_output: &Tensor4<T>,
        need_input: bool,
    ) -> Result<Conv2dGrads<T>> {
        let [b, _, h, w] = x.dims();
        grad_output.ensure_dims([b, self.out_channels, h, w], "conv backward")?;
        let hw = h * w;
        let patch = self.patch_len();
        let mut col = vec![T::zero(); patch * hw];
        let mut grad_col = vec![T::zero(); patch * hw];
        let mut weight = vec![T::zero(); self.weight.len()];
        let mut bias = vec![T::zero(); self.out_channels];
        let mut input = need_input.then(|| Tensor4::zeros(x.dims()));
        for item in 0..b {
            let gy = grad_output.item(item);
            for (o, chunk) in gy.chunks_exact(hw).enumerate() {
                bias[o] += chunk.iter().copied().sum::<T>();
            }
            self.im2col(x.item(item), h, w, &mut col);
            T::gemm(
                self.out_channels,
                hw,
                patch,
                T::one(),
                gy,
                hw as isize,
                1,
                &col,
                1,
                hw as isize,
                T::one(),
                &mut weight,
                patch as isize,
                1,
            );
            if let Some(gx) = input.as_mut() {
                T::gemm(
                    patch,
                    self.out_channels,
                    hw,
                    T::one(),
                    &self.weight,
                    1,
                    patch as isize,
                    gy,
                    hw as isize,
                    1,
                    T::zero(),
                    &mut grad_col,
                    hw as isize,
                    1,
                );
                self.col2im_add(&grad_col, h, w, gx.item_mut(item));
            }
        }
        Ok(Conv2dGrads {
            input,
            weight,
            bias,
        })
    }
}

/// Fully connected layer, `y = x W^T + b` with `W` stored `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    fan_in: usize,
    fan_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub input: Vec<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let weight = fan_in_uniform(fan_in, fan_in * fan_out, rng);
        let bias = fan_in_uniform(fan_in, fan_out, rng);
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn from_parts(fan_in: usize, fan_out: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weight.len() != fan_in * fan_out || bias.len() != fan_out {
            return Err(Error::Shape(format!(
                "dense {fan_in}->{fan_out}: got {} weights, {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            weight,
            bias,
            fan_in,
            fan_out,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    /// `x` is `batch x fan_in`, row-major.
    pub fn forward(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        if x.len() != batch * self.fan_in {
            return Err(Error::Shape(format!(
                "dense expects {} features per row",
                self.fan_in
            )));
        }
        let mut out = Vec::with_capacity(batch * self.fan_out);
        for _ in 0..batch {
            out.extend_from_slice(&self.bias);
        }
        T::gemm(
            batch,
            self.fan_in,
            self.fan_out,
            T::one(),
            x,
            self.fan_in as isize,
            1,
            &self.weight,
            1,
            self.fan_in as isize,
            T::one(),
            &mut out,
            self.fan_out as isize,
            1,
        );
        Ok(out)
    }

    pub fn backward(&self, x: &[T], grad_output: &[T], batch: usize) -> Result<DenseGrads<T>> {
        if x.len() != batch * self.fan_in || grad_output.len() != batch * self.fan_out {
            return Err(Error::Shape("dense backward: batch shape mismatch".into()));
        }
        let mut weight = vec![T::zero(); self.weight.len()];
        T::gemm(
            self.fan_out,
            batch,
            self.fan_in,
            T::one(),
            grad_output,
            1,
            self.fan_out as isize,
            x,
            self.fan_in as isize,
            1,
            T::zero(),
            &mut weight,
            self.fan_in as isize,
            1,
        );
        let mut bias = vec![T::zero(); self.fan_out];
        for row in grad_output.chunks_exact(self.fan_out) {
            for (acc, &g) in bias.iter_mut().zip(row) {
                *acc += g;
            }
        }
        let mut input = vec![T::zero(); x.len()];
        T::gemm(
            batch,
            self.fan_out,
            self.fan_in,
            T::one(),
            grad_output,
            self.fan_out as isize,
            1,
            &self.weight,
            self.fan_in as isize,
            1,
            T::zero(),
            &mut input,
            self.fan_in as isize,
            1,
        );
        Ok(DenseGrads {
            input,
            weight,
            bias,
        })
    }
}

pub fn relu_in_place<T: Real>(values: &mut [T]) {
    for v in values {
        if v.is_nan() || *v <= T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradients where the ReLU output was not positive.
pub fn relu_backward_in_place<T: Real>(grad: &mut [T], output: &[T]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y.is_nan() || y <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Inverted-dropout mask: each entry is `0` with probability `p`, else `1/(1-p)`.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Result<Vec<T>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!(
            "dropout probability must be in [0, 1), got {p}"
        )));
    }
    let keep = T::lit(1.0 / (1.0 - p));
    Ok((0..len)
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect())
}

fn pooled_dims(x: &Tensor4<impl Copy + Default>) -> Result<[usize; 4]> {
    let [b, c, h, w] = x.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "2x2 pooling needs even spatial dims, got {h}x{w}"
        )));
    }
    Ok([b, c, h / 2, w / 2])
}

/// 2x2 max pooling, stride 2. Also returns the flat input index of each maximum
/// (first maximum wins on ties).
pub fn maxpool2x2_forward<T: Real>(x: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<u32>)> {
    let dims = pooled_dims(x)?;
    let (h, w) = (x.height(), x.width());
    let (ph, pw) = (dims[2], dims[3]);
    let mut out = Tensor4::zeros(dims);
    let mut argmax = Vec::with_capacity(out.len());
    let src = x.as_slice();
    for (p, dst) in out.planes_mut().enumerate() {
        let base = p * h * w;
        for oy in 0..ph {
            for ox in 0..pw {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let at = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if src[at] > src[best] {
                        best = at;
                    }
                }
                dst[oy * pw + ox] = src[best];
                argmax.push(best as u32);
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2x2_backward<T: Real>(
    grad_output: &Tensor4<T>,
    argmax: &[u32],
    input_dims: [usize; 4],
) -> Result<Tensor4<T>> {
    if argmax.len() != grad_output.len() {
        return Err(Error::Cache(
            "pooling indices do not match the gradient".into(),
        ));
    }
    let mut grad = Tensor4::zeros(input_dims);
    let g = grad.as_mut_slice();
    for (&at, &v) in argmax.iter().zip(grad_output.as_slice()) {
        g[at as usize] += v;
    }
    Ok(grad)
}

/// 2x2 average pooling, stride 2.
pub fn avgpool2x2_forward<T: Real>(x: &Tensor4<T>) -> Result<Tensor4<T>> {
    let dims = pooled_dims(x)?;
    let (h, w) = (x.height(), x.width());
    let pw = dims[3];
    let quarter = T::lit(0.25);
    let mut out = Tensor4::zeros(dims);
    for (p, dst) in out.planes_mut().enumerate() {
        let src = &x.as_slice()[p * h * w..(p + 1) * h * w];
        for (i, d) in dst.iter_mut().enumerate() {
            let (oy, ox) = (i / pw, i % pw);
            let at = 2 * oy * w + 2 * ox;
            *d = quarter * (src[at] + src[at + 1] + src[at + w] + src[at + w + 1]);
        }
    }
    Ok(out)
}

pub fn avgpool2x2_backward<T: Real>(
    grad_output: &Tensor4<T>,
    input_dims: [usize; 4],
) -> Result<Tensor4<T>> {
    let [b, c, h, w] = input_dims;
    grad_output.ensure_dims([b, c, h / 2, w / 2], "avgpool backward")?;
    let quarter = T::lit(0.25);
    let pw = w / 2;
    let mut grad = Tensor4::zeros(input_dims);
    for (p, dst) in grad.planes_mut().enumerate() {
        let g = &grad_output.as_slice()[p * (h / 2) * pw..(p + 1) * (h / 2) * pw];
        for (i, d) in dst.iter_mut().enumerate() {
            let (y, x) = (i / w, i % w);
            *d = quarter * g[(y / 2) * pw + x / 2];
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn random(dims: [usize; 4], seed: u64) -> Tensor4<f64> {
        let mut rng = seeded_rng(seed);
        Tensor4::from_fn(dims, |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn centre_tap_kernel_sums_channels() {
        let x = random([2, 3, 4, 4], 1);
        let mut weight = vec![0.0; 2 * 3 * 9];
        for o in 0..2 {
            for c in 0..3 {
                weight[(o * 3 + c) * 9 + 4] = 1.0;
            }
        }
        let conv = Conv2d::from_parts(3, 2, 3, weight, vec![0.0, 0.0]).unwrap();
        let y = conv.forward(&x).unwrap();
        for b in 0..2 {
            for o in 0..2 {
                for k in 0..16 {
                    let expected: f64 = (0..3).map(|c| x.plane(b, c)[k]).sum();
                    assert!((y.plane(b, o)[k] - expected).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let x = random([1, 2, 4, 4], 2);
        let conv = Conv2d::from_parts(2, 3, 3, vec![0.0; 54], vec![0.5, -1.0, 2.0]).unwrap();
        let y = conv.forward(&x).unwrap();
        for o in 0..3 {
            assert!(y.plane(0, o).iter().all(|&v| v == [0.5, -1.0, 2.0][o]));
        }
    }

    #[test]
    fn conv_matches_direct_cross_correlation() {
        let x = random([1, 2, 4, 8], 3);
        let conv = Conv2d::<f64>::new(2, 3, 3, &mut seeded_rng(4));
        let y = conv.forward(&x).unwrap();
        for o in 0..3 {
            for yy in 0..4isize {
                for xx in 0..8isize {
                    let mut acc = conv.bias[o];
                    for c in 0..2 {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (sy, sx) = (yy + ky - 1, xx + kx - 1);
                                if (0..4).contains(&sy) && (0..8).contains(&sx) {
                                    acc += conv.weight
                                        [((o * 2 + c) * 3 + ky as usize) * 3 + kx as usize]
                                        * x.get([0, c, sy as usize, sx as usize]);
                                }
                            }
                        }
                    }
                    assert!((y.get([0, o, yy as usize, xx as usize]) - acc).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let x = random([2, 1, 8, 8], 5);
        let mut conv = Conv2d::<f64>::new(1, 3, 3, &mut seeded_rng(6));
        let probe = random([2, 3, 8, 8], 7);
        let loss = |c: &Conv2d<f64>, x: &Tensor4<f64>| {
            dot(c.forward(x).unwrap().as_slice(), probe.as_slice())
        };
        let grads = conv.backward(&x, &probe, true).unwrap();
        let h = 1e-6;
        for i in 0..conv.weight.len() {
            let orig = conv.weight[i];
            conv.weight[i] = orig + h;
            let up = loss(&conv, &x);
            conv.weight[i] = orig - h;
            let down = loss(&conv, &x);
            conv.weight[i] = orig;
            assert!(rel_err((up - down) / (2.0 * h), grads.weight[i]) < 1e-5);
        }
        for i in 0..3 {
            let orig = conv.bias[i];
            conv.bias[i] = orig + h;
            let up = loss(&conv, &x);
            conv.bias[i] = orig - h;
            let down = loss(&conv, &x);
            conv.bias[i] = orig;
            assert!(rel_err((up - down) / (2.0 * h), grads.bias[i]) < 1e-5);
        }
        let gx = grads.input.unwrap();
        let mut xp = x.clone();
        for i in (0..x.len()).step_by(7) {
            let orig = xp.as_slice()[i];
            xp.as_mut_slice()[i] = orig + h;
            let up = loss(&conv, &xp);
            xp.as_mut_slice()[i] = orig - h;
            let down = loss(&conv, &xp);
            xp.as_mut_slice()[i] = orig;
            assert!(rel_err((up - down) / (2.0 * h), gx.as_slice()[i]) < 1e-5);
        }
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut dense = Dense::<f64>::new(5, 4, &mut seeded_rng(8));
        let x = random([3, 5, 1, 1], 9).into_vec();
        let probe = random([3, 4, 1, 1], 10).into_vec();
        let loss = |d: &Dense<f64>, x: &[f64]| dot(&d.forward(x, 3).unwrap(), &probe);
        let grads = dense.backward(&x, &probe, 3).unwrap();
        let h = 1e-6;
        for i in 0..dense.weight.len() {
            let orig = dense.weight[i];
            dense.weight[i] = orig + h;
            let up = loss(&dense, &x);
            dense.weight[i] = orig - h;
            let down = loss(&dense, &x);
            dense.weight[i] = orig;
            assert!(rel_err((up - down) / (2.0 * h), grads.weight[i]) < 1e-6);
        }
        for i in 0..4 {
            let expected: f64 = (0..3).map(|b| probe[b * 4 + i]).sum();
            assert!((grads.bias[i] - expected).abs() < 1e-12);
        }
        let mut xp = x.clone();
        for i in 0..x.len() {
            let orig = xp[i];
            xp[i] = orig + h;
            let up = loss(&dense, &xp);
            xp[i] = orig - h;
            let down = loss(&dense, &xp);
            xp[i] = orig;
            assert!(rel_err((up - down) / (2.0 * h), grads.input[i]) < 1e-6);
        }
    }

    #[test]
    fn pooling_examples() {
        let x = Tensor4::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.as_slice(), &[4.0]);
        assert_eq!(idx, vec![3]);
        let g = maxpool2x2_backward(
            &Tensor4::from_vec([1, 1, 1, 1], vec![5.0]).unwrap(),
            &idx,
            [1, 1, 2, 2],
        )
        .unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0, 0.0, 5.0]);

        assert_eq!(avgpool2x2_forward(&x).unwrap().as_slice(), &[2.5]);
        let g = avgpool2x2_backward(
            &Tensor4::from_vec([1, 1, 1, 1], vec![4.0]).unwrap(),
            [1, 1, 2, 2],
        )
        .unwrap();
        assert_eq!(g.as_slice(), &[1.0; 4]);

        let odd = Tensor4::<f64>::zeros([1, 1, 3, 2]);
        assert!(maxpool2x2_forward(&odd).is_err());
    }

    #[test]
    fn relu_and_dropout() {
        let mut v = vec![-2.0, 0.0, 3.0];
        relu_in_place(&mut v);
        assert_eq!(v, vec![0.0, 0.0, 3.0]);
        let mut g = vec![1.0, 1.0, 1.0];
        relu_backward_in_place(&mut g, &v);
        assert_eq!(g, vec![0.0, 0.0, 1.0]);

        let a: Vec<f64> = dropout_mask(10_000, 0.2, &mut seeded_rng(11)).unwrap();
        let b: Vec<f64> = dropout_mask(10_000, 0.2, &mut seeded_rng(11)).unwrap();
        assert_eq!(a, b);
        let dropped = a.iter().filter(|&&m| m == 0.0).count();
        assert!((1800..2200).contains(&dropped));
        assert!(a.iter().all(|&m| m == 0.0 || (m - 1.25).abs() < 1e-15));
        assert!(dropout_mask::<f64, _>(3, 1.0, &mut seeded_rng(1)).is_err());
    }
}
