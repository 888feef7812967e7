//! Dense third-order tensors, the mode-3 DFT and the tensor Schatten p-norm.
//!
//! A [`Tensor3`] of dims `n1 × n2 × n3` is stored slice-major: all of frontal
//! slice 0 (row-major `n1 × n2`), then slice 1, and so on. The flat index of
//! element `(i, j, k)` is `k·n1·n2 + i·n2 + j`. [`SpectrumStack`] uses the same
//! layout with one complex frontal slice per frequency index.
//!
//! The Schatten p-norm and its proximal map are evaluated in the Fourier
//! domain, one frontal slice at a time. Slices `k` and `n3 − k` of a real
//! tensor's spectrum are complex conjugates, so only frequencies
//! `0..=n3/2` are decomposed and the rest are mirrored.

use nalgebra::DMatrix;
use ndarray::{ArrayView2, ArrayViewMut2};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Default bound on the imaginary part left by [`idft_mode3`].
pub const DEFAULT_IMAG_TOLERANCE: f64 = 1e-8;

const GST_MAX_ITER: usize = 50;
const GST_STEP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Result<Self> {
        check_dims(n1, n2, n3)?;
        Ok(Self {
            dims: (n1, n2, n3),
            data: vec![0.0; n1 * n2 * n3],
        })
    }

    /// Builds a tensor from slice-major values. Rejects non-finite entries.
    pub fn from_vec(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let (n1, n2, n3) = dims;
        check_dims(n1, n2, n3)?;
        if data.len() != n1 * n2 * n3 {
            return Err(Error::domain(format!(
                "tensor of dims {n1}x{n2}x{n3} needs {} values, got {}",
                n1 * n2 * n3,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite tensor entry at flat index {pos}")));
        }
        Ok(Self { dims, data })
    }

    /// Stacks equally-shaped matrices as frontal slices.
    pub fn from_slices(slices: &[ndarray::Array2<f64>]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::domain("at least one frontal slice is required"))?;
        let (n1, n2) = first.dim();
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for s in slices {
            if s.dim() != (n1, n2) {
                return Err(Error::domain("frontal slices must share one shape"));
            }
            data.extend(s.iter().copied());
        }
        Self::from_vec((n1, n2, slices.len()), data)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let (n1, n2, _) = self.dims;
        k * n1 * n2 + i * n2 + j
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let idx = self.index(i, j, k);
        self.data[idx] = value;
    }

    /// Frontal slice `k` as an `n1 × n2` view.
    pub fn slice(&self, k: usize) -> ArrayView2<'_, f64> {
        let (n1, n2, _) = self.dims;
        let len = n1 * n2;
        ArrayView2::from_shape((n1, n2), &self.data[k * len..(k + 1) * len])
            .expect("slice length matches its shape")
    }

    pub fn slice_mut(&mut self, k: usize) -> ArrayViewMut2<'_, f64> {
        let (n1, n2, _) = self.dims;
        let len = n1 * n2;
        ArrayViewMut2::from_shape((n1, n2), &mut self.data[k * len..(k + 1) * len])
            .expect("slice length matches its shape")
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `self + scale · other`, elementwise.
    pub fn add_scaled(&self, other: &Tensor3, scale: f64) -> Result<Tensor3> {
        self.check_same_dims(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        Tensor3::from_vec(self.dims, data)
    }

    /// Squared Frobenius distance `‖self − other‖²`.
    pub fn distance_sq(&self, other: &Tensor3) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub(crate) fn check_same_dims(&self, other: &Tensor3) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::domain(format!(
                "tensor dims differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}

/// Per-frequency complex frontal slices of a mode-3 DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumStack {
    dims: (usize, usize, usize),
    data: Vec<Complex64>,
}

impl SpectrumStack {
    pub fn from_vec(dims: (usize, usize, usize), data: Vec<Complex64>) -> Result<Self> {
        let (n1, n2, n3) = dims;
        check_dims(n1, n2, n3)?;
        if data.len() != n1 * n2 * n3 {
            return Err(Error::domain("spectrum value count does not match its dims"));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        let (n1, n2, _) = self.dims;
        self.data[k * n1 * n2 + i * n2 + j]
    }

    pub fn slice(&self, k: usize) -> ArrayView2<'_, Complex64> {
        let (n1, n2, _) = self.dims;
        let len = n1 * n2;
        ArrayView2::from_shape((n1, n2), &self.data[k * len..(k + 1) * len])
            .expect("slice length matches its shape")
    }

    /// Largest `|slice(k) − conj(slice(n3 − k))|` over all entries.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let (n1, n2, n3) = self.dims;
        let mut worst = 0.0f64;
        for k in 1..n3 {
            for i in 0..n1 {
                for j in 0..n2 {
                    let d = self.get(i, j, k) - self.get(i, j, n3 - k).conj();
                    worst = worst.max(d.norm());
                }
            }
        }
        worst
    }
}

fn check_dims(n1: usize, n2: usize, n3: usize) -> Result<()> {
    if n1 == 0 || n2 == 0 || n3 == 0 {
        return Err(Error::domain(format!(
            "tensor dims must all be >= 1, got {n1}x{n2}x{n3}"
        )));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain(format!("Schatten exponent p must lie in (0, 1], got {p}")));
    }
    Ok(())
}

/// Applies a length-`n3` FFT to every mode-3 fiber, in place on a slice-major buffer.
fn fft_fibers(dims: (usize, usize, usize), data: &mut [Complex64], inverse: bool) {
    let (n1, n2, n3) = dims;
    let plane = n1 * n2;
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n3)
    } else {
        planner.plan_fft_forward(n3)
    };
    // gather fibers contiguously, transform them in one batch, scatter back
    let mut fibers = vec![Complex64::new(0.0, 0.0); plane * n3];
    for k in 0..n3 {
        for f in 0..plane {
            fibers[f * n3 + k] = data[k * plane + f];
        }
    }
    fft.process(&mut fibers);
    for k in 0..n3 {
        for f in 0..plane {
            data[k * plane + f] = fibers[f * n3 + k];
        }
    }
}

/// Unnormalized DFT of every mode-3 fiber.
pub fn dft_mode3(t: &Tensor3) -> SpectrumStack {
    let mut data: Vec<Complex64> = t.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_fibers(t.dims, &mut data, false);
    SpectrumStack { dims: t.dims, data }
}

/// Inverse of [`dft_mode3`], with the default imaginary-residue tolerance.
pub fn idft_mode3(s: &SpectrumStack) -> Result<Tensor3> {
    idft_mode3_with_tolerance(s, DEFAULT_IMAG_TOLERANCE)
}

pub fn idft_mode3_with_tolerance(s: &SpectrumStack, tolerance: f64) -> Result<Tensor3> {
    let mut data = s.data.clone();
    fft_fibers(s.dims, &mut data, true);
    let scale = 1.0 / s.dims.2 as f64;
    let residue = data.iter().map(|c| (c.im * scale).abs()).fold(0.0, f64::max);
    if residue > tolerance {
        return Err(Error::ImaginaryResidue { residue, tolerance });
    }
    Tensor3::from_vec(s.dims, data.iter().map(|c| c.re * scale).collect())
}

fn slice_matrix(s: &SpectrumStack, k: usize) -> DMatrix<Complex64> {
    let view = s.slice(k);
    DMatrix::from_fn(view.nrows(), view.ncols(), |i, j| view[[i, j]])
}

/// Number of spectrum slices sharing the singular values of slice `k`
/// (itself plus its conjugate partner).
fn conjugate_multiplicity(k: usize, n3: usize) -> usize {
    if k == 0 || 2 * k == n3 {
        1
    } else {
        2
    }
}

/// Tensor Schatten p-norm: `(Σ_k Σ_j σ_j(Ā_k)^p)^(1/p)` over all Fourier-domain slices.
pub fn schatten_p_norm(t: &Tensor3, p: f64) -> Result<f64> {
    check_p(p)?;
    let spectrum = dft_mode3(t);
    let n3 = t.dims.2;
    let total: f64 = (0..=n3 / 2)
        .into_par_iter()
        .map(|k| {
            let sv = slice_matrix(&spectrum, k).singular_values();
            let sum: f64 = sv.iter().map(|s| s.powf(p)).sum();
            sum * conjugate_multiplicity(k, n3) as f64
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(total.powf(1.0 / p))
}

/// Threshold below which [`gst_scalar`] returns zero.
pub fn gst_threshold(tau: f64, p: f64) -> f64 {
    if p >= 1.0 {
        return tau;
    }
    let base = 2.0 * tau * (1.0 - p);
    base.powf(1.0 / (2.0 - p)) + tau * p * base.powf((p - 1.0) / (2.0 - p))
}

/// Generalized soft-thresholding: `argmin_{x ≥ 0} tau·x^p + ½(x − a)²`.
pub fn gst_scalar(a: f64, tau: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if !(a >= 0.0) || !(tau >= 0.0) {
        return Err(Error::domain(format!(
            "generalized soft-thresholding needs a >= 0 and tau >= 0, got a={a}, tau={tau}"
        )));
    }
    if tau == 0.0 {
        return Ok(a);
    }
    if p == 1.0 {
        return Ok((a - tau).max(0.0));
    }
    if a <= gst_threshold(tau, p) {
        return Ok(0.0);
    }
    let mut x = a;
    for _ in 0..GST_MAX_ITER {
        let next = a - tau * p * x.powf(p - 1.0);
        let step = (next - x).abs();
        x = next;
        if step < GST_STEP_TOL {
            break;
        }
    }
    Ok(x.max(0.0))
}

/// Proximal map of `tau·‖·‖_Sp^p` at `a`.
///
/// Each Fourier-domain slice `U Σ Vᴴ` becomes `U · gst(Σ) · Vᴴ`; the result
/// is transformed back and must be real within [`DEFAULT_IMAG_TOLERANCE`].
pub fn prox_schatten_p(a: &Tensor3, tau: f64, p: f64) -> Result<Tensor3> {
    prox_schatten_p_with_tolerance(a, tau, p, DEFAULT_IMAG_TOLERANCE)
}

pub fn prox_schatten_p_with_tolerance(
    a: &Tensor3,
    tau: f64,
    p: f64,
    imag_tolerance: f64,
) -> Result<Tensor3> {
    check_p(p)?;
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("prox threshold must be >= 0, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(a.clone());
    }
    let (n1, n2, n3) = a.dims;
    let spectrum = dft_mode3(a);

    let half: Vec<DMatrix<Complex64>> = (0..=n3 / 2)
        .into_par_iter()
        .map(|k| -> Result<DMatrix<Complex64>> {
            let svd = slice_matrix(&spectrum, k).svd(true, true);
            let u = svd.u.as_ref().expect("U requested");
            let v_t = svd.v_t.as_ref().expect("Vᴴ requested");
            let mut scaled_u = u.clone();
            for (c, &sigma) in svd.singular_values.iter().enumerate() {
                let shrunk = gst_scalar(sigma, tau, p)?;
                scaled_u.column_mut(c).scale_mut(shrunk);
            }
            Ok(scaled_u * v_t)
        })
        .collect::<Result<_>>()?;

    let plane = n1 * n2;
    let mut data = vec![Complex64::new(0.0, 0.0); plane * n3];
    for k in 0..n3 {
        let (src, conjugate) = if k <= n3 / 2 { (k, false) } else { (n3 - k, true) };
        let m = &half[src];
        for i in 0..n1 {
            for j in 0..n2 {
                let v = m[(i, j)];
                data[k * plane + i * n2 + j] = if conjugate { v.conj() } else { v };
            }
        }
    }
    idft_mode3_with_tolerance(&SpectrumStack { dims: a.dims, data }, imag_tolerance)
}
