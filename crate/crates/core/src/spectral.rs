//! 2D discrete Fourier transforms and learnable complex spectral modulation.
//!
//! Convention: the forward transform is unnormalized,
//! `F(u,v) = Σ_x Σ_y X(x,y)·exp(−j2π(ux/H + vy/W))`, and the inverse carries
//! the `1/(HW)` factor. Each `(batch, channel)` plane is transformed
//! independently. When both `H` and `W` are powers of two an iterative
//! radix-2 Cooley–Tukey transform is used; otherwise the plane falls back to
//! the direct double-sum DFT.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Real/imaginary pair of equally shaped tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor<T: Element = f64> {
    pub re: Tensor<T>,
    pub im: Tensor<T>,
}

impl<T: Element> ComplexTensor<T> {
    pub fn new(re: Tensor<T>, im: Tensor<T>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::dim(
                "complex_tensor",
                format!("re {:?} and im {:?} differ", re.shape(), im.shape()),
            ));
        }
        Ok(ComplexTensor { re, im })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.re.shape()
    }

    /// `Σ |z|²` over every element.
    pub fn energy(&self) -> T {
        self.re
            .data()
            .iter()
            .zip(self.im.data())
            .map(|(&a, &b)| a * a + b * b)
            .sum()
    }
}

/// One branch of learnable spectral weights, shaped `(1, C, H, W)` and
/// broadcast over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexWeights<T: Element = f64>(pub ComplexTensor<T>);

impl<T: Element> ComplexWeights<T> {
    pub fn new(w: ComplexTensor<T>) -> Result<Self> {
        if w.shape()[0] != 1 {
            return Err(Error::dim(
                "complex_weights",
                format!("weights must have leading dim 1, got {:?}", w.shape()),
            ));
        }
        Ok(ComplexWeights(w))
    }

    /// `1 + 0j` everywhere: modulation is then the identity.
    pub fn identity(c: usize, h: usize, w: usize) -> Result<Self> {
        Self::new(ComplexTensor::new(
            Tensor::ones([1, c, h, w])?,
            Tensor::zeros([1, c, h, w])?,
        )?)
    }

    pub fn spectrum(&self) -> &ComplexTensor<T> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FftPath {
    /// Radix-2 when both sides are powers of two, direct DFT otherwise.
    Auto,
    /// Always the direct `O((HW)²)` double sum.
    Naive,
}

static MODULATE_SIGN_FAULT: AtomicBool = AtomicBool::new(false);

/// Deliberately corrupts [`modulate`] by flipping the sign of its cross
/// terms. Exists only so the property harness can prove it catches faults.
#[doc(hidden)]
pub fn inject_modulate_sign_fault(on: bool) {
    MODULATE_SIGN_FAULT.store(on, Ordering::SeqCst);
}

/// `(cos, sin)` of `sign·2πk/n` for `k` in `0..n`.
fn twiddles(n: usize, sign: f64) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let a = sign * 2.0 * PI * k as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .collect()
}

/// In-place iterative radix-2 transform of one strided line.
fn radix2_line<T: Element>(re: &mut [T], im: &mut [T], tw: &[(T, T)]) {
    let n = re.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let (c, s) = tw[k * step];
                let (a, b) = (start + k, start + k + len / 2);
                let tr = re[b] * c - im[b] * s;
                let ti = re[b] * s + im[b] * c;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] = re[a] + tr;
                im[a] = im[a] + ti;
            }
        }
        len <<= 1;
    }
}

fn radix2_plane<T: Element>(re: &mut [T], im: &mut [T], h: usize, w: usize, sign: f64) {
    let cast = |t: Vec<(f64, f64)>| -> Vec<(T, T)> {
        t.into_iter().map(|(c, s)| (T::from_f64(c), T::from_f64(s))).collect()
    };
    let tw_w = cast(twiddles(w, sign));
    for row in 0..h {
        radix2_line(&mut re[row * w..][..w], &mut im[row * w..][..w], &tw_w);
    }
    let tw_h = cast(twiddles(h, sign));
    let mut cr = vec![T::zero(); h];
    let mut ci = vec![T::zero(); h];
    for col in 0..w {
        for row in 0..h {
            cr[row] = re[row * w + col];
            ci[row] = im[row * w + col];
        }
        radix2_line(&mut cr, &mut ci, &tw_h);
        for row in 0..h {
            re[row * w + col] = cr[row];
            im[row * w + col] = ci[row];
        }
    }
}

/// Direct double sum over the whole plane; phases are reduced modulo the
/// line lengths so large products `u·x` stay exact.
fn naive_plane<T: Element>(re: &mut [T], im: &mut [T], h: usize, w: usize, sign: f64) {
    let th: Vec<(T, T)> =
        twiddles(h, sign).into_iter().map(|(c, s)| (T::from_f64(c), T::from_f64(s))).collect();
    let tw: Vec<(T, T)> =
        twiddles(w, sign).into_iter().map(|(c, s)| (T::from_f64(c), T::from_f64(s))).collect();
    let (src_re, src_im) = (re.to_vec(), im.to_vec());
    for u in 0..h {
        for v in 0..w {
            let (mut ar, mut ai) = (T::zero(), T::zero());
            for x in 0..h {
                let (hc, hs) = th[(u * x) % h];
                for y in 0..w {
                    let (wc, ws) = tw[(v * y) % w];
                    let pc = hc * wc - hs * ws;
                    let ps = hc * ws + hs * wc;
                    let (xr, xi) = (src_re[x * w + y], src_im[x * w + y]);
                    ar = ar + xr * pc - xi * ps;
                    ai = ai + xr * ps + xi * pc;
                }
            }
            re[u * w + v] = ar;
            im[u * w + v] = ai;
        }
    }
}

/// Unnormalized transform of every plane; `sign = −1` forward, `+1` inverse.
fn transform<T: Element>(
    re: &Tensor<T>,
    im: &Tensor<T>,
    sign: f64,
    path: FftPath,
) -> Result<(Vec<T>, Vec<T>)> {
    let [_, _, h, w] = re.shape();
    let mut out_re = re.data().to_vec();
    let mut out_im = im.data().to_vec();
    let fast = path == FftPath::Auto && h.is_power_of_two() && w.is_power_of_two();
    out_re
        .par_chunks_mut(h * w)
        .zip(out_im.par_chunks_mut(h * w))
        .for_each(|(pr, pi)| {
            if fast {
                radix2_plane(pr, pi, h, w, sign)
            } else {
                naive_plane(pr, pi, h, w, sign)
            }
        });
    Ok((out_re, out_im))
}

pub fn fft2_with<T: Element>(x: &Tensor<T>, path: FftPath) -> Result<ComplexTensor<T>> {
    let zeros = Tensor::zeros(x.shape())?;
    let (re, im) = transform(x, &zeros, -1.0, path)?;
    ComplexTensor::new(
        Tensor::from_op("fft2", x.shape(), re)?,
        Tensor::from_op("fft2", x.shape(), im)?,
    )
}

/// Forward 2D DFT of each `(batch, channel)` plane.
pub fn fft2<T: Element>(x: &Tensor<T>) -> Result<ComplexTensor<T>> {
    fft2_with(x, FftPath::Auto)
}

/// Forward 2D DFT through the direct double sum regardless of size.
pub fn dft2_naive<T: Element>(x: &Tensor<T>) -> Result<ComplexTensor<T>> {
    fft2_with(x, FftPath::Naive)
}

/// Inverse transform including the `1/(HW)` factor, returned as a full
/// complex field.
pub fn ifft2_complex<T: Element>(s: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
    let [_, _, h, w] = s.shape();
    let (mut re, mut im) = transform(&s.re, &s.im, 1.0, FftPath::Auto)?;
    let k = T::from_f64(1.0 / (h * w) as f64);
    re.iter_mut().chain(im.iter_mut()).for_each(|v| *v = *v * k);
    ComplexTensor::new(
        Tensor::from_op("ifft2", s.shape(), re)?,
        Tensor::from_op("ifft2", s.shape(), im)?,
    )
}

/// Inverse transform keeping only the real part, plus the largest discarded
/// imaginary magnitude.
pub fn ifft2_with_residue<T: Element>(s: &ComplexTensor<T>) -> Result<(Tensor<T>, T)> {
    let z = ifft2_complex(s)?;
    let residue = z.im.max_abs();
    Ok((z.re, residue))
}

/// Inverse 2D DFT; the imaginary part is discarded.
pub fn ifft2<T: Element>(s: &ComplexTensor<T>) -> Result<Tensor<T>> {
    Ok(ifft2_complex(s)?.re)
}

fn check_modulate<T: Element>(s: &ComplexTensor<T>, w: &ComplexWeights<T>) -> Result<()> {
    let [_, c, h, wd] = s.shape();
    let ws = w.0.shape();
    if ws != [1, c, h, wd] {
        return Err(Error::dim(
            "modulate",
            format!("weights {ws:?} do not match spectrum {:?}", s.shape()),
        ));
    }
    Ok(())
}

/// Elementwise complex product `s ⊙ w`, with `w` broadcast over the batch.
pub fn modulate<T: Element>(s: &ComplexTensor<T>, w: &ComplexWeights<T>) -> Result<ComplexTensor<T>> {
    check_modulate(s, w)?;
    let plane = s.shape()[1..].iter().product::<usize>();
    let fault = MODULATE_SIGN_FAULT.load(Ordering::Relaxed);
    let (sr, si) = (s.re.data(), s.im.data());
    let (wr, wi) = (w.0.re.data(), w.0.im.data());
    let mut re = Vec::with_capacity(sr.len());
    let mut im = Vec::with_capacity(sr.len());
    for k in 0..sr.len() {
        let q = k % plane;
        if fault {
            re.push(sr[k] * wr[q] + si[k] * wi[q]);
            im.push(sr[k] * wi[q] - si[k] * wr[q]);
        } else {
            re.push(sr[k] * wr[q] - si[k] * wi[q]);
            im.push(sr[k] * wi[q] + si[k] * wr[q]);
        }
    }
    ComplexTensor::new(
        Tensor::from_op("modulate", s.shape(), re)?,
        Tensor::from_op("modulate", s.shape(), im)?,
    )
}

/// One spatial output per branch: `ifft2(modulate(fft2(x), Wⁱ))`.
pub fn multi_branch_enhance<T: Element>(
    x: &Tensor<T>,
    weights: &[ComplexWeights<T>],
) -> Result<Vec<Tensor<T>>> {
    if weights.is_empty() {
        return Err(Error::arg("multi_branch_enhance", "need at least one branch"));
    }
    let spectrum = fft2(x)?;
    weights
        .iter()
        .map(|w| ifft2(&modulate(&spectrum, w)?))
        .collect()
}

/// Backward of [`fft2`] for real input: `Re(Σ_k Ḡ_k·e^{+jθ})`.
pub fn fft2_backward<T: Element>(grad: &ComplexTensor<T>) -> Result<Tensor<T>> {
    let (re, _) = transform(&grad.re, &grad.im, 1.0, FftPath::Auto)?;
    Tensor::from_op("fft2_backward", grad.shape(), re)
}

/// Backward of [`ifft2`] (real part): the spectrum gradient is `fft2(g)/(HW)`.
pub fn ifft2_backward<T: Element>(grad: &Tensor<T>) -> Result<ComplexTensor<T>> {
    let [_, _, h, w] = grad.shape();
    let mut g = fft2(grad)?;
    let k = T::from_f64(1.0 / (h * w) as f64);
    g.re = g.re.scale(k)?;
    g.im = g.im.scale(k)?;
    Ok(g)
}

/// Backward of [`modulate`]: `(Ḡ⊙conj(W), Σ_batch Ḡ⊙conj(S))`.
pub fn modulate_backward<T: Element>(
    s: &ComplexTensor<T>,
    w: &ComplexWeights<T>,
    grad: &ComplexTensor<T>,
) -> Result<(ComplexTensor<T>, ComplexTensor<T>)> {
    check_modulate(s, w)?;
    if grad.shape() != s.shape() {
        return Err(Error::dim(
            "modulate_backward",
            format!("grad {:?} != spectrum {:?}", grad.shape(), s.shape()),
        ));
    }
    let plane = s.shape()[1..].iter().product::<usize>();
    let (sr, si) = (s.re.data(), s.im.data());
    let (wr, wi) = (w.0.re.data(), w.0.im.data());
    let (gr, gi) = (grad.re.data(), grad.im.data());
    let mut ds_re = Vec::with_capacity(sr.len());
    let mut ds_im = Vec::with_capacity(sr.len());
    let mut dw_re = vec![T::zero(); plane];
    let mut dw_im = vec![T::zero(); plane];
    for k in 0..sr.len() {
        let q = k % plane;
        ds_re.push(gr[k] * wr[q] + gi[k] * wi[q]);
        ds_im.push(gi[k] * wr[q] - gr[k] * wi[q]);
        dw_re[q] = dw_re[q] + gr[k] * sr[k] + gi[k] * si[k];
        dw_im[q] = dw_im[q] + gi[k] * sr[k] - gr[k] * si[k];
    }
    let wshape = w.0.shape();
    Ok((
        ComplexTensor::new(
            Tensor::from_op("modulate_backward", s.shape(), ds_re)?,
            Tensor::from_op("modulate_backward", s.shape(), ds_im)?,
        )?,
        ComplexTensor::new(
            Tensor::from_op("modulate_backward", wshape, dw_re)?,
            Tensor::from_op("modulate_backward", wshape, dw_im)?,
        )?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn zeros_and_delta() {
        let z = fft2(&Tensor::<f64>::zeros([1, 1, 4, 4]).unwrap()).unwrap();
        assert_eq!(z.energy(), 0.0);
        let delta = Tensor::<f64>::from_fn([1, 1, 4, 4], |_, _, i, j| (i + j == 0) as u8 as f64).unwrap();
        let s = fft2(&delta).unwrap();
        assert!(s.re.data().iter().all(|&v| v == 1.0));
        assert!(s.im.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_spectrum_inverts_to_delta() {
        let s = ComplexTensor::new(
            Tensor::<f64>::ones([1, 1, 4, 8]).unwrap(),
            Tensor::zeros([1, 1, 4, 8]).unwrap(),
        )
        .unwrap();
        let x = ifft2(&s).unwrap();
        for (k, &v) in x.data().iter().enumerate() {
            let want = if k == 0 { 1.0 } else { 0.0 };
            assert!((v - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn round_trip_both_paths() {
        let mut rng = seeded(21);
        for &(h, w) in &[(8, 8), (7, 5), (4, 12), (1, 1), (1, 8)] {
            let x = Tensor::<f64>::randn([2, 2, h, w], 0.0, 1.0, &mut rng).unwrap();
            let (y, residue) = ifft2_with_residue(&fft2(&x).unwrap()).unwrap();
            assert!(y.max_abs_diff(&x).unwrap() <= 1e-10, "{h}x{w}");
            assert!(residue <= 1e-9);
            let fast = fft2(&x).unwrap();
            let slow = dft2_naive(&x).unwrap();
            assert!(fast.re.max_abs_diff(&slow.re).unwrap() <= 1e-9);
            assert!(fast.im.max_abs_diff(&slow.im).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn modulate_identity_and_zero() {
        let mut rng = seeded(22);
        let x = Tensor::<f64>::randn([2, 3, 4, 4], 0.0, 1.0, &mut rng).unwrap();
        let s = fft2(&x).unwrap();
        let id = ComplexWeights::identity(3, 4, 4).unwrap();
        assert_eq!(modulate(&s, &id).unwrap(), s);
        let zero = ComplexWeights::new(
            ComplexTensor::new(Tensor::zeros([1, 3, 4, 4]).unwrap(), Tensor::zeros([1, 3, 4, 4]).unwrap())
                .unwrap(),
        )
        .unwrap();
        assert_eq!(modulate(&s, &zero).unwrap().energy(), 0.0);
        let wrong = ComplexWeights::identity(2, 4, 4).unwrap();
        assert!(matches!(modulate(&s, &wrong), Err(Error::Dimension { .. })));
        assert!(multi_branch_enhance::<f64>(&x, &[]).is_err());
    }

    #[test]
    fn f32_round_trip() {
        let mut rng = seeded(23);
        let x = Tensor::<f32>::randn([1, 2, 16, 16], 0.0, 1.0, &mut rng).unwrap();
        let y = ifft2(&fft2(&x).unwrap()).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() <= 1e-5);
    }
}
