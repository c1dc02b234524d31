//! The multi-path HT-perceptron layer.
//!
//! For an input `x` of shape `(B, C_i, H, W)`:
//!
//! ```text
//! X   = HT2D(x)                      per (batch, channel) plane, unnormalized
//! X_i = X ∘ A_i                      A_i: H x W, broadcast over batch and channel
//! Z_i = V_i ⊛ X_i                    1x1 channel mixing, V_i: C_o x C_i, no bias
//! Y_i = sign(Z_i) ∘ (|Z_i| - T_i)+   T_i: H x W, non-negative
//! y   = IHT2D(sum_i Y_i)             1/(H W) folded into the inverse
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::hadamard::{ensure_pow2, fht2d_in_place};
use crate::quantum::{hybrid_ht2d, Epsilon, MeasurementPlan};
use crate::scalar::fsqrt;
use crate::{Error, Matrix, Real, Result, Tensor4};

/// Which implementation computes the 2D transforms in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HtBackend {
    /// Fast butterfly in the layer's own precision.
    #[default]
    Classical,
    /// Hybrid quantum-classical transform with exact probabilities.
    QuantumExact,
    /// Hybrid transform with `shots` measurements per 1D transform.
    QuantumSampled { shots: u64, seed: u64 },
}

/// Trainable parameters of a `P`-path layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HtPerceptronParams<T> {
    /// `A_i`, one `H x W` scaling matrix per path.
    pub scales: Vec<Matrix<T>>,
    /// `T_i`, one non-negative `H x W` threshold matrix per path.
    pub thresholds: Vec<Matrix<T>>,
    /// `V_i`, one `C_o x C_i` channel-mixing kernel per path.
    pub kernels: Vec<Matrix<T>>,
}

impl<T: Real> HtPerceptronParams<T> {
    /// Random initialization: `A ~ U[0, 1)`, `T ~ U[0, 0.1)`,
    /// `V ~ U(-1/sqrt(C_i), 1/sqrt(C_i))`.
    pub fn init<R: Rng + ?Sized>(
        paths: usize,
        height: usize,
        width: usize,
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / fsqrt(in_channels as f64);
        let mut scales = Vec::with_capacity(paths);
        let mut thresholds = Vec::with_capacity(paths);
        let mut kernels = Vec::with_capacity(paths);
        for _ in 0..paths {
            scales.push(Matrix::from_fn(height, width, |_, _| {
                T::lit(rng.random::<f64>())
            }));
            thresholds.push(Matrix::from_fn(height, width, |_, _| {
                T::lit(0.1 * rng.random::<f64>())
            }));
            kernels.push(Matrix::from_fn(out_channels, in_channels, |_, _| {
                T::lit(bound * (2.0 * rng.random::<f64>() - 1.0))
            }));
        }
        Self {
            scales,
            thresholds,
            kernels,
        }
    }

    pub fn paths(&self) -> usize {
        self.scales.len()
    }

    pub fn spatial(&self) -> (usize, usize) {
        self.scales.first().map_or((0, 0), Matrix::shape)
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.first().map_or(0, Matrix::cols)
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.first().map_or(0, Matrix::rows)
    }

    pub fn param_count(&self) -> usize {
        self.scales
            .iter()
            .chain(&self.thresholds)
            .chain(&self.kernels)
            .map(|m| m.as_slice().len())
            .sum()
    }

    /// Checks that all paths agree in shape and all thresholds are non-negative.
    pub fn validate(&self) -> Result<()> {
        let p = self.paths();
        if p == 0 || self.thresholds.len() != p || self.kernels.len() != p {
            return Err(Error::Shape(format!(
                "path counts differ: {} scales, {} thresholds, {} kernels",
                self.scales.len(),
                self.thresholds.len(),
                self.kernels.len()
            )));
        }
        let spatial = self.spatial();
        let kernel = self.kernels[0].shape();
        for i in 0..p {
            if self.scales[i].shape() != spatial || self.thresholds[i].shape() != spatial {
                return Err(Error::Shape(format!(
                    "path {i}: scale/threshold shape differs from {spatial:?}"
                )));
            }
            if self.kernels[i].shape() != kernel {
                return Err(Error::Shape(format!(
                    "path {i}: kernel shape differs from {kernel:?}"
                )));
            }
            check_thresholds(&self.thresholds[i])?;
        }
        Ok(())
    }

    /// Projects every threshold back onto `[0, inf)`.
    pub fn clamp_thresholds(&mut self) {
        for t in &mut self.thresholds {
            clamp_non_negative(t.as_mut_slice());
        }
    }
}

pub(crate) fn clamp_non_negative<T: Real>(values: &mut [T]) {
    for v in values {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

fn check_thresholds<T: Real>(t: &Matrix<T>) -> Result<()> {
    match t.as_slice().iter().find(|v| v.is_nan() || **v < T::zero()) {
        Some(bad) => Err(Error::NegativeThreshold(bad.as_f64())),
        None => Ok(()),
    }
}

/// Intermediates retained by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    input_dims: [usize; 4],
    /// `HT2D(x)`.
    spectrum: Tensor4<T>,
    /// `X ∘ A_i` per path.
    scaled: Vec<Tensor4<T>>,
    /// `Z_i` per path, before thresholding.
    pre_threshold: Vec<Tensor4<T>>,
}

impl<T> LayerCache<T> {
    pub fn input_dims(&self) -> [usize; 4] {
        self.input_dims
    }

    /// `Z_i` per path, before thresholding.
    pub fn pre_threshold(&self) -> &[Tensor4<T>] {
        &self.pre_threshold
    }
}

/// Gradients of the loss with respect to the layer input and every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct HtPerceptronGrads<T> {
    pub input: Tensor4<T>,
    pub scales: Vec<Matrix<T>>,
    pub thresholds: Vec<Matrix<T>>,
    pub kernels: Vec<Matrix<T>>,
}

/// `sign(x) * max(|x| - t, 0)`, with `t` broadcast over batch and channel.
pub fn soft_threshold<T: Real>(x: &Tensor4<T>, t: &Matrix<T>) -> Result<Tensor4<T>> {
    if t.shape() != (x.height(), x.width()) {
        return Err(Error::Shape(format!(
            "threshold is {:?}, tensor planes are {}x{}",
            t.shape(),
            x.height(),
            x.width()
        )));
    }
    check_thresholds(t)?;
    let mut out = x.clone();
    let t = t.as_slice();
    for plane in out.planes_mut() {
        for (v, &th) in plane.iter_mut().zip(t) {
            *v = shrink(*v, th);
        }
    }
    Ok(out)
}

#[inline]
fn shrink<T: Real>(v: T, t: T) -> T {
    let mag = v.abs() - t;
    if mag > T::zero() {
        mag.copysign(v)
    } else {
        T::zero()
    }
}

/// 1x1 channel mixing: `out[b, o] = sum_c V[o, c] * x[b, c]`, no bias.
pub fn channelwise_1x1<T: Real>(x: &Tensor4<T>, v: &Matrix<T>) -> Result<Tensor4<T>> {
    let [b, c, h, w] = x.dims();
    if v.cols() != c {
        return Err(Error::Shape(format!(
            "kernel expects {} input channels, tensor has {c}",
            v.cols()
        )));
    }
    let co = v.rows();
    let hw = h * w;
    let mut out = Tensor4::zeros([b, co, h, w]);
    for item in 0..b {
        T::gemm(
            co,
            c,
            hw,
            T::one(),
            v.as_slice(),
            c as isize,
            1,
            x.item(item),
            hw as isize,
            1,
            T::zero(),
            out.item_mut(item),
            hw as isize,
            1,
        );
    }
    Ok(out)
}

fn transform_planes<T: Real>(
    t: &mut Tensor4<T>,
    backend: HtBackend,
    stage: u64,
    inverse: bool,
) -> Result<()> {
    let (h, w) = (t.height(), t.width());
    let channels = t.channels();
    match backend {
        HtBackend::Classical => {
            for plane in t.planes_mut() {
                fht2d_in_place(plane, h, w)?;
            }
            if inverse {
                let s = T::lit(1.0 / (h * w) as f64);
                t.as_mut_slice().iter_mut().for_each(|v| *v *= s);
            }
        }
        HtBackend::QuantumExact | HtBackend::QuantumSampled { .. } => {
            let plan = match backend {
                HtBackend::QuantumSampled { shots, seed } => {
                    MeasurementPlan::Sampled { shots, seed }
                }
                _ => MeasurementPlan::Exact,
            };
            // The hybrid transform is symmetric-normalized; rescale to the
            // layer's unnormalized forward / 1/(HW) inverse.
            let root = fsqrt((h * w) as f64);
            let scale = if inverse { 1.0 / root } else { root };
            for (index, plane) in t.planes_mut().enumerate() {
                let (b, c) = ((index / channels) as u64, (index % channels) as u64);
                let m = Matrix::from_vec(h, w, plane.iter().map(|v| v.as_f64()).collect())?;
                let out = hybrid_ht2d(&m, Epsilon::default(), plan.derive(&[stage, b, c]))?;
                for (dst, src) in plane.iter_mut().zip(out.as_slice()) {
                    *dst = T::lit(src * scale);
                }
            }
        }
    }
    Ok(())
}

fn check_input<T: Real>(x: &Tensor4<T>, params: &HtPerceptronParams<T>) -> Result<()> {
    params.validate()?;
    ensure_pow2(x.height())?;
    ensure_pow2(x.width())?;
    if params.spatial() != (x.height(), x.width()) {
        return Err(Error::Shape(format!(
            "parameters are {:?}, input planes are {}x{}",
            params.spatial(),
            x.height(),
            x.width()
        )));
    }
    if params.in_channels() != x.channels() {
        return Err(Error::Shape(format!(
            "layer expects {} channels, input has {}",
            params.in_channels(),
            x.channels()
        )));
    }
    Ok(())
}

/// Forward pass. Returns the output and the cache needed by [`backward`].
pub fn forward<T: Real>(
    x: &Tensor4<T>,
    params: &HtPerceptronParams<T>,
    backend: HtBackend,
) -> Result<(Tensor4<T>, LayerCache<T>)> {
    check_input(x, params)?;
    let [b, _, h, w] = x.dims();
    let mut spectrum = x.clone();
    transform_planes(&mut spectrum, backend, 0, false)?;

    let mut summed = Tensor4::zeros([b, params.out_channels(), h, w]);
    let mut scaled_all = Vec::with_capacity(params.paths());
    let mut pre_all = Vec::with_capacity(params.paths());
    for ((a, t), v) in params
        .scales
        .iter()
        .zip(&params.thresholds)
        .zip(&params.kernels)
    {
        let mut scaled = spectrum.clone();
        for plane in scaled.planes_mut() {
            for (s, &av) in plane.iter_mut().zip(a.as_slice()) {
                *s *= av;
            }
        }
        let z = channelwise_1x1(&scaled, v)?;
        let t = t.as_slice();
        for (plane_out, plane_z) in summed.planes_mut().zip(z.as_slice().chunks_exact(h * w)) {
            for ((o, &zv), &th) in plane_out.iter_mut().zip(plane_z).zip(t) {
                *o += shrink(zv, th);
            }
        }
        scaled_all.push(scaled);
        pre_all.push(z);
    }
    transform_planes(&mut summed, backend, 1, true)?;
    let cache = LayerCache {
        input_dims: x.dims(),
        spectrum,
        scaled: scaled_all,
        pre_threshold: pre_all,
    };
    Ok((summed, cache))
}

/// Exact adjoint of [`forward`] (classical transforms), with the soft-threshold
/// subgradient taken as zero on the kink `|Z| = T`.
pub fn backward<T: Real>(
    params: &HtPerceptronParams<T>,
    cache: &LayerCache<T>,
    grad_output: &Tensor4<T>,
) -> Result<HtPerceptronGrads<T>> {
    let [b, ci, h, w] = cache.input_dims;
    let co = params.out_channels();
    if cache.pre_threshold.len() != params.paths() || cache.scaled.len() != params.paths() {
        return Err(Error::Cache(format!(
            "cache holds {} paths, parameters have {}",
            cache.pre_threshold.len(),
            params.paths()
        )));
    }
    if params.in_channels() != ci || params.spatial() != (h, w) {
        return Err(Error::Cache(
            "parameter shapes differ from the cached forward call".into(),
        ));
    }
    if grad_output.dims() != [b, co, h, w] {
        return Err(Error::Cache(format!(
            "gradient dims {:?} do not match forward output {:?}",
            grad_output.dims(),
            [b, co, h, w]
        )));
    }
    let hw = h * w;

    // Adjoint of y = (1/HW) H Y H is gY = (1/HW) H gy H.
    let mut grad_sum = grad_output.clone();
    transform_planes(&mut grad_sum, HtBackend::Classical, 0, true)?;

    let mut grad_spectrum = Tensor4::zeros([b, ci, h, w]);
    let mut grads_a = Vec::with_capacity(params.paths());
    let mut grads_t = Vec::with_capacity(params.paths());
    let mut grads_v = Vec::with_capacity(params.paths());
    for i in 0..params.paths() {
        let z = &cache.pre_threshold[i];
        let t = params.thresholds[i].as_slice();
        let mut grad_z = grad_sum.clone();
        let mut grad_t = vec![T::zero(); hw];
        for (gz_plane, z_plane) in grad_z.planes_mut().zip(z.as_slice().chunks_exact(hw)) {
            for (k, (g, &zv)) in gz_plane.iter_mut().zip(z_plane).enumerate() {
                if zv.abs() > t[k] {
                    grad_t[k] -= *g * zv.signum();
                } else {
                    *g = T::zero();
                }
            }
        }

        let v = &params.kernels[i];
        let scaled = &cache.scaled[i];
        let mut grad_v = Matrix::filled(co, ci, T::zero());
        let mut grad_scaled = Tensor4::zeros([b, ci, h, w]);
        for item in 0..b {
            // gV += gZ_b (co x hw) * X_b^T (hw x ci)
            T::gemm(
                co,
                hw,
                ci,
                T::one(),
                grad_z.item(item),
                hw as isize,
                1,
                scaled.item(item),
                1,
                hw as isize,
                T::one(),
                grad_v.as_mut_slice(),
                ci as isize,
                1,
            );
            // gX_b = V^T (ci x co) * gZ_b (co x hw)
            T::gemm(
                ci,
                co,
                hw,
                T::one(),
                v.as_slice(),
                1,
                ci as isize,
                grad_z.item(item),
                hw as isize,
                1,
                T::zero(),
                grad_scaled.item_mut(item),
                hw as isize,
                1,
            );
        }

        let a = params.scales[i].as_slice();
        let mut grad_a = vec![T::zero(); hw];
        for ((gs_plane, x_plane), gx_plane) in grad_scaled
            .as_slice()
            .chunks_exact(hw)
            .zip(cache.spectrum.as_slice().chunks_exact(hw))
            .zip(grad_spectrum.planes_mut())
        {
            for k in 0..hw {
                grad_a[k] += gs_plane[k] * x_plane[k];
                gx_plane[k] += gs_plane[k] * a[k];
            }
        }
        grads_a.push(Matrix::from_vec(h, w, grad_a)?);
        grads_t.push(Matrix::from_vec(h, w, grad_t)?);
        grads_v.push(grad_v);
    }

    // Adjoint of the unnormalized forward transform is itself.
    transform_planes(&mut grad_spectrum, HtBackend::Classical, 0, false)?;
    Ok(HtPerceptronGrads {
        input: grad_spectrum,
        scales: grads_a,
        thresholds: grads_t,
        kernels: grads_v,
    })
}
