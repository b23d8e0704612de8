//! Squeeze-and-excitation operators on (C, F, T) feature maps with analytic
//! backward passes and a central-difference gradient checker.
//!
//! Everything here runs in f64.

use std::fmt;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis, LinalgScalar, Zip};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twofloat::TwoFloat;

use crate::dataset_io::SlsaTensor;
use crate::error::{Result, SeldError};

pub type Tensor3 = Array3<f64>;

pub const DEFAULT_CHANNEL_RATIO: usize = 4;
pub const DEFAULT_FREQ_RATIO: usize = 16;

/// Bottleneck MLP weights for one SE block over a squeezed axis of size `d`
/// with `d / r` hidden units.
#[derive(Debug, Clone, PartialEq)]
pub struct SeParams {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

impl SeParams {
    pub fn new(w1: Array2<f64>, b1: Array1<f64>, w2: Array2<f64>, b2: Array1<f64>) -> Result<Self> {
        let (h, d) = w1.dim();
        if h == 0 || d % h != 0 {
            return Err(SeldError::ShapeMismatch(format!(
                "hidden size {h} does not divide squeezed size {d}"
            )));
        }
        if b1.len() != h || w2.dim() != (d, h) || b2.len() != d {
            return Err(SeldError::ShapeMismatch(format!(
                "w1 {:?}, b1 {}, w2 {:?}, b2 {}",
                w1.dim(),
                b1.len(),
                w2.dim(),
                b2.len()
            )));
        }
        let p = Self { w1, b1, w2, b2 };
        if !p.iter().all(|v| v.is_finite()) {
            return Err(SeldError::NonFinite("SE parameters"));
        }
        Ok(p)
    }

    fn hidden_for(d: usize, r: usize) -> Result<usize> {
        if r == 0 || d == 0 || d % r != 0 {
            return Err(SeldError::InvalidConfig(format!(
                "reduction ratio {r} must divide {d}"
            )));
        }
        Ok(d / r)
    }

    pub fn zeros(d: usize, r: usize) -> Result<Self> {
        let h = Self::hidden_for(d, r)?;
        Ok(Self {
            w1: Array2::zeros((h, d)),
            b1: Array1::zeros(h),
            w2: Array2::zeros((d, h)),
            b2: Array1::zeros(d),
        })
    }

    /// Entries uniform in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(d: usize, r: usize, scale: f64, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(d, r)?;
        for v in p.iter_mut() {
            *v = rng.random_range(-scale..=scale);
        }
        Ok(p)
    }

    pub fn w1(&self) -> &Array2<f64> {
        &self.w1
    }

    pub fn b1(&self) -> &Array1<f64> {
        &self.b1
    }

    pub fn w2(&self) -> &Array2<f64> {
        &self.w2
    }

    pub fn b2(&self) -> &Array1<f64> {
        &self.b2
    }

    pub fn squeezed_len(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_len(&self) -> usize {
        self.w1.nrows()
    }

    pub fn ratio(&self) -> usize {
        self.squeezed_len() / self.hidden_len()
    }

    pub fn n_params(&self) -> usize {
        2 * self.w1.len() + self.b1.len() + self.b2.len()
    }

    /// Parameters in the order w1, b1, w2, b2 (row-major).
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "flat parameter length");
        for (dst, &src) in self.iter_mut().zip(flat) {
            *dst = src;
        }
    }

    /// Packs into a `(d, 2h + 2)` container: row `j` holds `w1[:, j]`,
    /// `w2[j, :]`, `b2[j]` and `b1[j]` (zero for `j >= h`). Values are
    /// stored as f32.
    pub fn to_slsa(&self) -> SlsaTensor {
        let (d, h) = (self.squeezed_len(), self.hidden_len());
        let mut data = Vec::with_capacity(d * (2 * h + 2));
        for j in 0..d {
            data.extend(self.w1.column(j).iter().map(|&v| v as f32));
            data.extend(self.w2.row(j).iter().map(|&v| v as f32));
            data.push(self.b2[j] as f32);
            data.push(if j < h { self.b1[j] as f32 } else { 0.0 });
        }
        SlsaTensor::new(vec![d, 2 * h + 2], data).expect("packed length matches dims")
    }

    pub fn from_slsa(tensor: &SlsaTensor) -> Result<Self> {
        let bad = || SeldError::ShapeMismatch(format!("SE parameter dims {:?}", tensor.dims));
        if tensor.dims.len() != 2 || tensor.dims[1] < 4 || tensor.dims[1] % 2 != 0 {
            return Err(bad());
        }
        let (d, cols) = (tensor.dims[0], tensor.dims[1]);
        let h = (cols - 2) / 2;
        if h > d {
            return Err(bad());
        }
        let at = |j: usize, k: usize| tensor.data[j * cols + k] as f64;
        let w1 = Array2::from_shape_fn((h, d), |(i, j)| at(j, i));
        let w2 = Array2::from_shape_fn((d, h), |(j, i)| at(j, h + i));
        let b2 = Array1::from_shape_fn(d, |j| at(j, 2 * h));
        let b1 = Array1::from_shape_fn(h, |j| at(j, 2 * h + 1));
        Self::new(w1, b1, w2, b2)
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Scalar type the forward maps are written over: `f64` for normal use and
/// double-double for the finite-difference side of [`gradcheck`].
pub trait Real: Float + LinalgScalar + fmt::Debug {
    /// `e^self` to the full precision of the type.
    fn exp_full(self) -> Self;
    /// `self / rhs` to the full precision of the type.
    fn div_full(self, rhs: Self) -> Self;
}

impl Real for f64 {
    fn exp_full(self) -> Self {
        self.exp()
    }

    fn div_full(self, rhs: Self) -> Self {
        self / rhs
    }
}

impl Real for TwoFloat {
    /// `TwoFloat::exp` is only good to about 60 bits, which is not enough
    /// for differences at `eps = 1e-5`. This scales the argument below
    /// 2^-8, sums the Taylor series with exact double-double operations and
    /// squares back up.
    fn exp_full(self) -> Self {
        if !self.hi().is_finite() || self.hi().abs() > 700.0 {
            return self.exp();
        }
        let mut halvings = 0;
        let mut r = self;
        while r.hi().abs() > 1.0 / 256.0 {
            r = r / 2.0;
            halvings += 1;
        }
        let mut term = TwoFloat::from(1.0);
        let mut sum = TwoFloat::from(1.0);
        for n in 1..=20 {
            term = term * r / n as f64;
            sum += term;
            if term.hi().abs() < 1e-34 {
                break;
            }
        }
        for _ in 0..halvings {
            sum = sum * sum;
        }
        sum
    }

    /// TwoFloat / TwoFloat in twofloat 0.8 drops the low word of the
    /// reciprocal; one Newton step on `1 / rhs.hi` restores it.
    fn div_full(self, rhs: Self) -> Self {
        let y0 = rhs.hi().recip();
        let residual = TwoFloat::from(1.0) - rhs * y0;
        let recip = TwoFloat::from(y0) + residual * y0;
        let q = self * recip;
        q + (self - rhs * q) * recip
    }
}

/// Borrowed MLP weights in some scalar type.
struct Mlp<'a, S> {
    w1: ArrayView2<'a, S>,
    b1: ArrayView1<'a, S>,
    w2: ArrayView2<'a, S>,
    b2: ArrayView1<'a, S>,
}

/// Owned MLP weights rebuilt from a flat parameter slice.
struct OwnedMlp<S> {
    w1: Array2<S>,
    b1: Array1<S>,
    w2: Array2<S>,
    b2: Array1<S>,
}

impl<S: Real> OwnedMlp<S> {
    fn from_flat(d: usize, h: usize, flat: &[S]) -> Self {
        assert_eq!(flat.len(), 2 * d * h + d + h, "flat parameter length");
        let (w1, rest) = flat.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(d * h);
        Self {
            w1: Array2::from_shape_vec((h, d), w1.to_vec()).expect("w1 shape"),
            b1: Array1::from(b1.to_vec()),
            w2: Array2::from_shape_vec((d, h), w2.to_vec()).expect("w2 shape"),
            b2: Array1::from(b2.to_vec()),
        }
    }

    fn view(&self) -> Mlp<'_, S> {
        Mlp {
            w1: self.w1.view(),
            b1: self.b1.view(),
            w2: self.w2.view(),
            b2: self.b2.view(),
        }
    }
}

impl SeParams {
    fn view(&self) -> Mlp<'_, f64> {
        Mlp {
            w1: self.w1.view(),
            b1: self.b1.view(),
            w2: self.w2.view(),
            b2: self.b2.view(),
        }
    }
}

fn sigmoid_in<S: Real>(v: S) -> S {
    if v >= S::zero() {
        S::one().div_full(S::one() + (-v).exp_full())
    } else {
        let e = v.exp_full();
        e.div_full(S::one() + e)
    }
}

impl<S: Real> Mlp<'_, S> {
    /// Gate vector for squeezed input `z`; pushes the sign of every hidden
    /// pre-activation onto `pattern`.
    fn gate(&self, z: ArrayView1<S>, pattern: &mut Vec<bool>) -> Array1<S> {
        let pre1 = self.w1.dot(&z) + self.b1;
        pattern.extend(pre1.iter().map(|&v| v > S::zero()));
        let hidden = pre1.mapv(|v| v.max(S::zero()));
        (self.w2.dot(&hidden) + self.b2).mapv(sigmoid_in)
    }
}

fn count<S: Real>(n: usize) -> S {
    S::from(n).expect("size fits the scalar type")
}

fn channel_forward_in<S: Real>(x: &Array3<S>, mlp: &Mlp<S>) -> Array3<S> {
    channel_forward_pattern(x, mlp).0
}

fn channel_forward_pattern<S: Real>(x: &Array3<S>, mlp: &Mlp<S>) -> (Array3<S>, Vec<bool>) {
    let (n_chan, n_freq, n_frames) = x.dim();
    let per_channel = count::<S>(n_freq * n_frames);
    let z = Array1::from_shape_fn(n_chan, |c| x.index_axis(Axis(0), c).sum().div_full(per_channel));
    let mut pattern = Vec::new();
    let gate = mlp.gate(z.view(), &mut pattern);
    let y = Array3::from_shape_fn(x.dim(), |(c, f, t)| gate[c] * x[[c, f, t]]);
    (y, pattern)
}

fn freq_forward_in<S: Real>(x: &Array3<S>, mlp: &Mlp<S>, squeeze: FreqSqueeze) -> (Array3<S>, Vec<bool>) {
    let (n_chan, n_freq, n_frames) = x.dim();
    let per_bin = count::<S>(n_chan);
    let z = Array2::from_shape_fn((n_freq, n_frames), |(f, t)| {
        x.slice(s![.., f, t]).sum().div_full(per_bin)
    });
    let mut pattern = Vec::new();
    let gates: Vec<Array1<S>> = match squeeze {
        FreqSqueeze::PerFrame => z.columns().into_iter().map(|col| mlp.gate(col, &mut pattern)).collect(),
        FreqSqueeze::Global => {
            let pooled = z.sum_axis(Axis(1)).mapv(|v| v.div_full(count::<S>(n_frames)));
            vec![mlp.gate(pooled.view(), &mut pattern)]
        }
    };
    let y = Array3::from_shape_fn(x.dim(), |(c, f, t)| {
        let gate = if gates.len() == 1 { &gates[0] } else { &gates[t] };
        gate[f] * x[[c, f, t]]
    });
    (y, pattern)
}

/// Intermediate values of the excitation MLP for one squeezed vector.
struct Excitation {
    z: Array1<f64>,
    pre1: Array1<f64>,
    hidden: Array1<f64>,
    pre2: Array1<f64>,
    gate: Array1<f64>,
}

fn excite(p: &SeParams, z: Array1<f64>) -> Excitation {
    let pre1 = p.w1.dot(&z) + &p.b1;
    let hidden = pre1.mapv(|v| v.max(0.0));
    let pre2 = p.w2.dot(&hidden) + &p.b2;
    let gate = pre2.mapv(sigmoid);
    Excitation {
        z,
        pre1,
        hidden,
        pre2,
        gate,
    }
}

/// Backpropagates `d_gate` through the MLP, accumulating into `grads`, and
/// returns the gradient with respect to the squeezed vector.
fn excite_backward(p: &SeParams, ex: &Excitation, d_gate: &Array1<f64>, grads: &mut SeParams) -> Array1<f64> {
    // s * (1 - s) cancels badly once the gate saturates; s(a) * s(-a) does not.
    let d_pre2 = Zip::from(d_gate)
        .and(&ex.gate)
        .and(&ex.pre2)
        .map_collect(|&g, &s, &a| g * s * sigmoid(-a));
    grads.b2 += &d_pre2;
    for (j, &dp) in d_pre2.iter().enumerate() {
        grads.w2.row_mut(j).scaled_add(dp, &ex.hidden);
    }
    let d_hidden = p.w2.t().dot(&d_pre2);
    let d_pre1 = Zip::from(&d_hidden)
        .and(&ex.pre1)
        .map_collect(|&g, &a| if a > 0.0 { g } else { 0.0 });
    grads.b1 += &d_pre1;
    for (i, &dp) in d_pre1.iter().enumerate() {
        grads.w1.row_mut(i).scaled_add(dp, &ex.z);
    }
    p.w1.t().dot(&d_pre1)
}

fn check_squeezed(p: &SeParams, len: usize, axis: &str) -> Result<()> {
    if p.squeezed_len() != len {
        return Err(SeldError::ShapeMismatch(format!(
            "{axis} SE parameters expect {} entries, input has {len}",
            p.squeezed_len()
        )));
    }
    Ok(())
}

fn check_same_shape(x: &Tensor3, grad_y: &Tensor3) -> Result<()> {
    if x.dim() != grad_y.dim() {
        return Err(SeldError::ShapeMismatch(format!(
            "input {:?} vs output gradient {:?}",
            x.dim(),
            grad_y.dim()
        )));
    }
    Ok(())
}

fn channel_excitation(x: &Tensor3, p: &SeParams) -> Result<Excitation> {
    check_squeezed(p, x.dim().0, "channel")?;
    let per_channel = (x.dim().1 * x.dim().2) as f64;
    let z = x.map_axis(Axis(2), |row| row.sum()).sum_axis(Axis(1)) / per_channel;
    Ok(excite(p, z))
}

/// Gates each channel by an excitation computed from its global mean.
pub fn channel_se_forward(x: &Tensor3, p: &SeParams) -> Result<Tensor3> {
    check_squeezed(p, x.dim().0, "channel")?;
    Ok(channel_forward_in(x, &p.view()))
}

pub fn channel_se_backward(x: &Tensor3, p: &SeParams, grad_y: &Tensor3) -> Result<(Tensor3, SeParams)> {
    check_same_shape(x, grad_y)?;
    let ex = channel_excitation(x, p)?;
    let (_, n_freq, n_frames) = x.dim();
    let d_gate = Array1::from_shape_fn(x.dim().0, |c| {
        (&grad_y.index_axis(Axis(0), c) * &x.index_axis(Axis(0), c)).sum()
    });
    let mut grads = SeParams::zeros(p.squeezed_len(), p.ratio())?;
    let d_z = excite_backward(p, &ex, &d_gate, &mut grads);
    let mean_scale = 1.0 / (n_freq * n_frames) as f64;
    let mut grad_x = grad_y.clone();
    for (c, mut plane) in grad_x.axis_iter_mut(Axis(0)).enumerate() {
        let (gate, spread) = (ex.gate[c], d_z[c] * mean_scale);
        plane.mapv_inplace(|g| g * gate + spread);
    }
    Ok((grad_x, grads))
}

/// Pooling used to squeeze the frequency axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FreqSqueeze {
    /// Mean over channels, separately for every time frame.
    #[default]
    PerFrame,
    /// Mean over channels and time; one gate vector shared by all frames.
    Global,
}

fn freq_excitations(x: &Tensor3, p: &SeParams, squeeze: FreqSqueeze) -> Result<Vec<Excitation>> {
    check_squeezed(p, x.dim().1, "frequency")?;
    let channel_mean = x.mean_axis(Axis(0)).expect("channel axis is non-empty");
    Ok(match squeeze {
        FreqSqueeze::PerFrame => channel_mean
            .axis_iter(Axis(1))
            .map(|z| excite(p, z.to_owned()))
            .collect(),
        FreqSqueeze::Global => {
            let z = channel_mean.sum_axis(Axis(1)) / x.dim().2 as f64;
            vec![excite(p, z)]
        }
    })
}

fn frame_excitation(exs: &[Excitation], t: usize) -> &Excitation {
    if exs.len() == 1 {
        &exs[0]
    } else {
        &exs[t]
    }
}

/// Gates each frequency bin by an excitation computed from the channel mean,
/// recomputed for every time frame under [`FreqSqueeze::PerFrame`].
pub fn freq_se_forward(x: &Tensor3, p: &SeParams) -> Result<Tensor3> {
    freq_se_forward_with(x, p, FreqSqueeze::PerFrame)
}

pub fn freq_se_forward_with(x: &Tensor3, p: &SeParams, squeeze: FreqSqueeze) -> Result<Tensor3> {
    check_squeezed(p, x.dim().1, "frequency")?;
    Ok(freq_forward_in(x, &p.view(), squeeze).0)
}

pub fn freq_se_backward(x: &Tensor3, p: &SeParams, grad_y: &Tensor3) -> Result<(Tensor3, SeParams)> {
    freq_se_backward_with(x, p, grad_y, FreqSqueeze::PerFrame)
}

pub fn freq_se_backward_with(
    x: &Tensor3,
    p: &SeParams,
    grad_y: &Tensor3,
    squeeze: FreqSqueeze,
) -> Result<(Tensor3, SeParams)> {
    check_same_shape(x, grad_y)?;
    let exs = freq_excitations(x, p, squeeze)?;
    let (n_chan, n_freq, n_frames) = x.dim();
    let mut grads = SeParams::zeros(p.squeezed_len(), p.ratio())?;
    // d_gate[f, t] = sum_c grad_y * x
    let d_gate_ft = (grad_y * x).sum_axis(Axis(0));
    let mut d_z = Array2::<f64>::zeros((n_freq, n_frames));
    match squeeze {
        FreqSqueeze::PerFrame => {
            for t in 0..n_frames {
                let dz = excite_backward(p, &exs[t], &d_gate_ft.column(t).to_owned(), &mut grads);
                d_z.column_mut(t).assign(&(dz / n_chan as f64));
            }
        }
        FreqSqueeze::Global => {
            let dz = excite_backward(p, &exs[0], &d_gate_ft.sum_axis(Axis(1)), &mut grads);
            let spread = dz / (n_chan * n_frames) as f64;
            for mut col in d_z.axis_iter_mut(Axis(1)) {
                col.assign(&spread);
            }
        }
    }
    let mut grad_x = grad_y.clone();
    for ((c, f, t), g) in grad_x.indexed_iter_mut() {
        let _ = c;
        *g = *g * frame_excitation(&exs, t).gate[f] + d_z[[f, t]];
    }
    Ok((grad_x, grads))
}

/// Frequency SE followed by channel SE.
pub fn multi_dim_se_forward(x: &Tensor3, p_freq: &SeParams, p_chan: &SeParams) -> Result<Tensor3> {
    channel_se_forward(&freq_se_forward(x, p_freq)?, p_chan)
}

/// Which operator [`se_backward`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeAxis {
    Channel,
    Frequency(FreqSqueeze),
}

pub fn se_backward(x: &Tensor3, p: &SeParams, grad_y: &Tensor3, which: SeAxis) -> Result<(Tensor3, SeParams)> {
    match which {
        SeAxis::Channel => channel_se_backward(x, p, grad_y),
        SeAxis::Frequency(squeeze) => freq_se_backward_with(x, p, grad_y, squeeze),
    }
}

pub type Extended = TwoFloat;

/// A map from a tensor to a tensor with flat parameters and an analytic
/// backward pass, as consumed by [`gradcheck`].
pub trait Differentiable {
    fn forward(&self, x: &Tensor3) -> Result<Tensor3>;
    /// Gradients with respect to the input and to [`params`](Self::params).
    fn backward(&self, x: &Tensor3, grad_y: &Tensor3) -> Result<(Tensor3, Vec<f64>)>;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, flat: &[f64]);
    /// The same forward map in double-double arithmetic with explicit flat
    /// parameters, plus the on/off pattern of every ReLU it evaluated.
    fn forward_extended(&self, x: &Array3<Extended>, params: &[Extended]) -> Result<(Array3<Extended>, Vec<bool>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSe(pub SeParams);

#[derive(Debug, Clone, PartialEq)]
pub struct FreqSe {
    pub params: SeParams,
    pub squeeze: FreqSqueeze,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiDimSe {
    pub freq: SeParams,
    pub chan: SeParams,
}

impl Differentiable for ChannelSe {
    fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        channel_se_forward(x, &self.0)
    }

    fn backward(&self, x: &Tensor3, grad_y: &Tensor3) -> Result<(Tensor3, Vec<f64>)> {
        let (gx, gp) = channel_se_backward(x, &self.0, grad_y)?;
        Ok((gx, gp.to_flat()))
    }

    fn params(&self) -> Vec<f64> {
        self.0.to_flat()
    }

    fn set_params(&mut self, flat: &[f64]) {
        self.0.set_flat(flat)
    }

    fn forward_extended(&self, x: &Array3<Extended>, params: &[Extended]) -> Result<(Array3<Extended>, Vec<bool>)> {
        check_squeezed(&self.0, x.dim().0, "channel")?;
        let mlp = OwnedMlp::from_flat(self.0.squeezed_len(), self.0.hidden_len(), params);
        Ok(channel_forward_pattern(x, &mlp.view()))
    }
}

impl Differentiable for FreqSe {
    fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        freq_se_forward_with(x, &self.params, self.squeeze)
    }

    fn backward(&self, x: &Tensor3, grad_y: &Tensor3) -> Result<(Tensor3, Vec<f64>)> {
        let (gx, gp) = freq_se_backward_with(x, &self.params, grad_y, self.squeeze)?;
        Ok((gx, gp.to_flat()))
    }

    fn params(&self) -> Vec<f64> {
        self.params.to_flat()
    }

    fn set_params(&mut self, flat: &[f64]) {
        self.params.set_flat(flat)
    }

    fn forward_extended(&self, x: &Array3<Extended>, params: &[Extended]) -> Result<(Array3<Extended>, Vec<bool>)> {
        check_squeezed(&self.params, x.dim().1, "frequency")?;
        let mlp = OwnedMlp::from_flat(self.params.squeezed_len(), self.params.hidden_len(), params);
        Ok(freq_forward_in(x, &mlp.view(), self.squeeze))
    }
}

impl Differentiable for MultiDimSe {
    fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        multi_dim_se_forward(x, &self.freq, &self.chan)
    }

    fn backward(&self, x: &Tensor3, grad_y: &Tensor3) -> Result<(Tensor3, Vec<f64>)> {
        let mid = freq_se_forward(x, &self.freq)?;
        let (g_mid, g_chan) = channel_se_backward(&mid, &self.chan, grad_y)?;
        let (gx, g_freq) = freq_se_backward(x, &self.freq, &g_mid)?;
        let mut flat = g_freq.to_flat();
        flat.extend(g_chan.to_flat());
        Ok((gx, flat))
    }

    fn params(&self) -> Vec<f64> {
        let mut flat = self.freq.to_flat();
        flat.extend(self.chan.to_flat());
        flat
    }

    fn set_params(&mut self, flat: &[f64]) {
        let split = self.freq.n_params();
        self.freq.set_flat(&flat[..split]);
        self.chan.set_flat(&flat[split..]);
    }

    fn forward_extended(&self, x: &Array3<Extended>, params: &[Extended]) -> Result<(Array3<Extended>, Vec<bool>)> {
        check_squeezed(&self.freq, x.dim().1, "frequency")?;
        check_squeezed(&self.chan, x.dim().0, "channel")?;
        let (pf, pc) = params.split_at(self.freq.n_params());
        let freq = OwnedMlp::from_flat(self.freq.squeezed_len(), self.freq.hidden_len(), pf);
        let chan = OwnedMlp::from_flat(self.chan.squeezed_len(), self.chan.hidden_len(), pc);
        let (mid, mut pattern) = freq_forward_in(x, &freq.view(), FreqSqueeze::PerFrame);
        let (y, chan_pattern) = channel_forward_pattern(&mid, &chan.view());
        pattern.extend(chan_pattern);
        Ok((y, pattern))
    }
}

/// Wraps an operator and skews its input gradient by 1%. Used as a negative
/// control for the checker.
#[doc(hidden)]
#[derive(Debug, Clone)]
pub struct CorruptedBackward<M>(pub M);

impl<M: Differentiable> Differentiable for CorruptedBackward<M> {
    fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        self.0.forward(x)
    }

    fn backward(&self, x: &Tensor3, grad_y: &Tensor3) -> Result<(Tensor3, Vec<f64>)> {
        let (gx, gp) = self.0.backward(x, grad_y)?;
        Ok((gx * 1.01, gp))
    }

    fn params(&self) -> Vec<f64> {
        self.0.params()
    }

    fn set_params(&mut self, flat: &[f64]) {
        self.0.set_params(flat)
    }

    fn forward_extended(&self, x: &Array3<Extended>, params: &[Extended]) -> Result<(Array3<Extended>, Vec<bool>)> {
        self.0.forward_extended(x, params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    /// Number of scalar entries compared (inputs plus parameters).
    pub entries: usize,
    /// Entries whose step had to shrink because `±eps` flipped a ReLU.
    pub refined: usize,
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// `L(plus) - L(minus)` for `L = sum y^2`, evaluated as
/// `sum (y+ - y-)(y+ + y-)`.
fn loss_difference(plus: &Array3<Extended>, minus: &Array3<Extended>) -> Extended {
    Zip::from(plus)
        .and(minus)
        .fold(Extended::from(0.0), |acc, &p, &m| acc + (p - m) * (p + m))
}

/// Step multipliers tried after `eps` when the stencil straddles a ReLU kink.
const REFINED_STEPS: [f64; 3] = [1e-3, 1e-6, 1e-9];

/// Five-point central difference of `L` along one coordinate:
/// `(8 [L(h) - L(-h)] - [L(2h) - L(-2h)]) / 12h`. `probe(h)` evaluates the
/// extended forward with that coordinate shifted by `h`.
fn central_difference(
    eps: f64,
    base_pattern: &[bool],
    mut probe: impl FnMut(f64) -> Result<(Array3<Extended>, Vec<bool>)>,
) -> Result<(f64, bool)> {
    let last = REFINED_STEPS.len();
    for (attempt, shrink) in std::iter::once(1.0).chain(REFINED_STEPS).enumerate() {
        let h = eps * shrink;
        let mut outputs = Vec::with_capacity(4);
        let mut smooth = true;
        for offset in [h, -h, 2.0 * h, -2.0 * h] {
            let (y, pattern) = probe(offset)?;
            smooth &= pattern == base_pattern;
            outputs.push(y);
        }
        if smooth || attempt == last {
            let near = loss_difference(&outputs[0], &outputs[1]);
            let far = loss_difference(&outputs[2], &outputs[3]);
            let diff = (near * 8.0 - far) / (12.0 * h);
            return Ok((f64::from(diff), attempt > 0));
        }
    }
    unreachable!("the final attempt always returns")
}

/// Compares the analytic gradient of `L = sum y^2` with central differences
/// for every input and parameter entry and returns the largest relative
/// error `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// The differences use the fourth-order five-point stencil with step `eps`
/// and run through [`forward_extended`](Differentiable::forward_extended),
/// so neither truncation nor f64 round-off swamps small gradient entries.
/// If the stencil would flip a ReLU, the step shrinks until it is smooth.
pub fn gradcheck<M: Differentiable>(model: &M, x: &Tensor3, eps: f64) -> Result<GradcheckReport> {
    if !(eps > 0.0 && eps < 1e-3) {
        return Err(SeldError::InvalidConfig(format!("eps {eps} not in (0, 1e-3)")));
    }
    let y = model.forward(x)?;
    let (grad_x, grad_p) = model.backward(x, &(&y * 2.0))?;
    let x_ext = x.mapv(Extended::from);
    let p_ext: Vec<Extended> = model.params().into_iter().map(Extended::from).collect();
    let (_, base_pattern) = model.forward_extended(&x_ext, &p_ext)?;
    let mut worst = 0.0f64;
    let mut refined = 0;

    let mut probe_x = x_ext.clone();
    for (idx, &analytic) in grad_x.indexed_iter() {
        let orig = x_ext[idx];
        let (numeric, r) = central_difference(eps, &base_pattern, |h| {
            probe_x[idx] = orig + h;
            let out = model.forward_extended(&probe_x, &p_ext);
            probe_x[idx] = orig;
            out
        })?;
        refined += r as usize;
        worst = worst.max(relative_error(analytic, numeric));
    }

    let mut probe_p = p_ext.clone();
    for (k, &analytic) in grad_p.iter().enumerate() {
        let orig = p_ext[k];
        let (numeric, r) = central_difference(eps, &base_pattern, |h| {
            probe_p[k] = orig + h;
            let out = model.forward_extended(&x_ext, &probe_p);
            probe_p[k] = orig;
            out
        })?;
        refined += r as usize;
        worst = worst.max(relative_error(analytic, numeric));
    }

    Ok(GradcheckReport {
        max_rel_err: worst,
        entries: grad_x.len() + grad_p.len(),
        refined,
    })
}

/// Step used by [`seeded_gradcheck`].
pub const DEFAULT_EPS: f64 = 1e-5;

/// The three SE operators covered by [`seeded_gradcheck`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeVariant {
    Channel,
    Frequency,
    MultiDim,
}

impl SeVariant {
    pub const ALL: [SeVariant; 3] = [SeVariant::Channel, SeVariant::Frequency, SeVariant::MultiDim];

    pub fn name(self) -> &'static str {
        match self {
            SeVariant::Channel => "channel",
            SeVariant::Frequency => "frequency",
            SeVariant::MultiDim => "multi-dim",
        }
    }

    /// True when `ratio` divides every axis this variant squeezes.
    pub fn accepts(self, shape: (usize, usize, usize), ratio: usize) -> bool {
        let divides = |d: usize| ratio > 0 && d > 0 && d % ratio == 0;
        match self {
            SeVariant::Channel => divides(shape.0),
            SeVariant::Frequency => divides(shape.1),
            SeVariant::MultiDim => divides(shape.0) && divides(shape.1),
        }
    }
}

/// Draws `x` and all parameters uniformly from [-1, 1] using `seed`, then
/// runs [`gradcheck`] at [`DEFAULT_EPS`]. With `corrupt` the input gradient
/// is skewed first, which the check must catch.
pub fn seeded_gradcheck(
    variant: SeVariant,
    shape: (usize, usize, usize),
    ratio: usize,
    seed: u64,
    corrupt: bool,
) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array3::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0));
    let (c, f, _) = shape;
    fn run<M: Differentiable>(m: M, x: &Tensor3, corrupt: bool) -> Result<GradcheckReport> {
        if corrupt {
            gradcheck(&CorruptedBackward(m), x, DEFAULT_EPS)
        } else {
            gradcheck(&m, x, DEFAULT_EPS)
        }
    }
    match variant {
        SeVariant::Channel => run(ChannelSe(SeParams::random(c, ratio, 1.0, &mut rng)?), &x, corrupt),
        SeVariant::Frequency => {
            let params = SeParams::random(f, ratio, 1.0, &mut rng)?;
            run(FreqSe { params, squeeze: FreqSqueeze::PerFrame }, &x, corrupt)
        }
        SeVariant::MultiDim => {
            let freq = SeParams::random(f, ratio, 1.0, &mut rng)?;
            let chan = SeParams::random(c, ratio, 1.0, &mut rng)?;
            run(MultiDimSe { freq, chan }, &x, corrupt)
        }
    }
}
