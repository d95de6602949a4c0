//! Two-phase piecewise-constant Chan–Vese segmentation.
//!
//! The level set `phi` (inside = `phi > 0`) is evolved with the semi-implicit
//! Jacobi update of the Chan–Vese Euler–Lagrange equation
//!
//! ```text
//! phi' = (phi + dt d(phi) (mu K + l2 (I - c2)^2 - l1 (I - c1)^2)) / (1 + mu dt d(phi) sum C)
//! ```
//!
//! where `K = sum C_j phi_j` runs over the four neighbours with the
//! curvature coefficients `C_j = 1 / |grad phi|` taken on the matching
//! half-pixel stencil, `d(p) = 1 / (1 + p^2)` and `c1`, `c2` are the phase
//! means. Progress is measured by the regularised energy
//!
//! ```text
//! E = mu * TV(H(phi)) + l1 sum (I - c1)^2 H(phi) + l2 sum (I - c2)^2 (1 - H(phi))
//! ```
//!
//! with `H(p) = (1 + 2/pi atan p) / 2`. A step that would raise `E` is retried
//! with half the time step; when no trial step descends, the contour has
//! stalled and the run stops. The energy trace is therefore non-increasing.

use serde::{Deserialize, Serialize};

use super::{BinaryMask, Image};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ChanVeseParams<T: Scalar> {
    /// Contour length weight.
    pub mu: T,
    pub lambda1: T,
    pub lambda2: T,
    pub max_iter: usize,
    /// Stop once fewer than this fraction of pixels change phase per iteration.
    pub tol: T,
    pub dt: T,
    pub checkerboard_period: T,
}

impl<T: Scalar> Default for ChanVeseParams<T> {
    fn default() -> Self {
        Self {
            mu: T::lit(0.25),
            lambda1: T::one(),
            lambda2: T::one(),
            max_iter: 200,
            tol: T::lit(1e-3),
            dt: T::lit(0.5),
            checkerboard_period: T::lit(25.0),
        }
    }
}

impl<T: Scalar> ChanVeseParams<T> {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: T| v.is_finite() && v >= T::zero();
        let finite_pos = |v: T| v.is_finite() && v > T::zero();
        if !finite_nonneg(self.mu) {
            return Err(Error::param("mu", format!("must be >= 0, got {}", self.mu)));
        }
        if !finite_pos(self.lambda1) {
            return Err(Error::param("lambda1", "must be > 0"));
        }
        if !finite_pos(self.lambda2) {
            return Err(Error::param("lambda2", "must be > 0"));
        }
        if !finite_pos(self.tol) {
            return Err(Error::param("tol", "must be > 0"));
        }
        if !finite_pos(self.dt) {
            return Err(Error::param("dt", "must be > 0"));
        }
        if !finite_pos(self.checkerboard_period) {
            return Err(Error::param("checkerboard_period", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChanVeseResult<T> {
    /// Pixels of the phase with the higher mean intensity.
    pub mask: BinaryMask,
    pub converged: bool,
    pub iterations: usize,
    /// Energy of the initial partition followed by one entry per iteration.
    pub energy: Vec<T>,
    /// Means of the foreground and background phases.
    pub foreground_mean: T,
    pub background_mean: T,
}

/// Consecutive iterations the partition must stay settled before stopping.
const PATIENCE: usize = 5;
const MAX_HALVINGS: usize = 8;

/// Chan–Vese from a checkerboard initialisation.
pub fn chan_vese<T: Scalar>(
    img: &Image<T>,
    params: &ChanVeseParams<T>,
) -> Result<ChanVeseResult<T>> {
    params.validate()?;
    let (w, h) = img.dims();
    let omega = T::TAU() / params.checkerboard_period;
    let half = T::lit(0.5);
    let mut phi = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let sx = (omega * (T::from_count(x) + half)).sin();
            let sy = (omega * (T::from_count(y) + half)).sin();
            phi.push(sx * sy);
        }
    }
    evolve(img, phi, params)
}

/// Chan–Vese started from an existing foreground mask.
pub fn chan_vese_from_mask<T: Scalar>(
    img: &Image<T>,
    init: &BinaryMask,
    params: &ChanVeseParams<T>,
) -> Result<ChanVeseResult<T>> {
    params.validate()?;
    super::ensure_same_dims(img.dims(), init.dims())?;
    let phi = init
        .bits()
        .iter()
        .map(|&b| if b { T::one() } else { -T::one() })
        .collect();
    evolve(img, phi, params)
}

const ETA: f64 = 1e-16;

struct Level<'a, T> {
    img: &'a [T],
    w: usize,
    h: usize,
}

#[inline]
fn heaviside<T: Scalar>(p: T) -> T {
    T::lit(0.5) * (T::one() + p.atan() * T::FRAC_2_PI())
}

#[inline]
fn dirac<T: Scalar>(p: T) -> T {
    T::one() / (T::one() + p * p)
}

impl<T: Scalar> Level<'_, T> {
    #[inline]
    fn at(&self, phi: &[T], x: isize, y: isize) -> T {
        let xc = x.clamp(0, self.w as isize - 1) as usize;
        let yc = y.clamp(0, self.h as isize - 1) as usize;
        phi[yc * self.w + xc]
    }

    fn weighted_means(&self, weights: impl Iterator<Item = T>) -> (T, T) {
        let (mut s_in, mut w_in, mut s_out, mut w_out) =
            (T::zero(), T::zero(), T::zero(), T::zero());
        for (&v, h) in self.img.iter().zip(weights) {
            s_in += v * h;
            w_in += h;
            s_out += v * (T::one() - h);
            w_out += T::one() - h;
        }
        let c1 = if w_in > T::zero() { s_in / w_in } else { s_in };
        let c2 = if w_out > T::zero() {
            s_out / w_out
        } else {
            s_out
        };
        (c1, c2)
    }

    fn energy(&self, phi: &[T], p: &ChanVeseParams<T>) -> T {
        let hv: Vec<T> = phi.iter().map(|&v| heaviside(v)).collect();
        let (c1, c2) = self.weighted_means(hv.iter().copied());
        let (w, h) = (self.w, self.h);
        let mut total = T::zero();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (v, hi) = (self.img[i], hv[i]);
                let dx = if x + 1 < w { hv[i + 1] - hi } else { T::zero() };
                let dy = if y + 1 < h { hv[i + w] - hi } else { T::zero() };
                total += p.mu * (dx * dx + dy * dy).sqrt()
                    + p.lambda1 * (v - c1) * (v - c1) * hi
                    + p.lambda2 * (v - c2) * (v - c2) * (T::one() - hi);
            }
        }
        total
    }

    fn step(&self, phi: &[T], dt: T, p: &ChanVeseParams<T>) -> Vec<T> {
        let (c1, c2) =
            self.weighted_means(
                phi.iter()
                    .map(|&v| if v > T::zero() { T::one() } else { T::zero() }),
            );
        let two = T::lit(2.0);
        let eta = T::lit(ETA);
        let mut out = Vec::with_capacity(phi.len());
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let i = y as usize * self.w + x as usize;
                let c = phi[i];
                let (xp, xn) = (self.at(phi, x + 1, y), self.at(phi, x - 1, y));
                let (yp, yn) = (self.at(phi, x, y + 1), self.at(phi, x, y - 1));
                let x0 = (xp - xn) / two;
                let y0 = (yp - yn) / two;
                let c_xp = T::one() / (eta + (xp - c) * (xp - c) + y0 * y0).sqrt();
                let c_xn = T::one() / (eta + (c - xn) * (c - xn) + y0 * y0).sqrt();
                let c_yp = T::one() / (eta + x0 * x0 + (yp - c) * (yp - c)).sqrt();
                let c_yn = T::one() / (eta + x0 * x0 + (c - yn) * (c - yn)).sqrt();
                let k = xp * c_xp + xn * c_xn + yp * c_yp + yn * c_yn;
                let v = self.img[i];
                let fit = p.lambda2 * (v - c2) * (v - c2) - p.lambda1 * (v - c1) * (v - c1);
                let d = dt * dirac(c);
                out.push(
                    (c + d * (p.mu * k + fit))
                        / (T::one() + p.mu * d * (c_xp + c_xn + c_yp + c_yn)),
                );
            }
        }
        out
    }
}

fn evolve<T: Scalar>(
    img: &Image<T>,
    mut phi: Vec<T>,
    params: &ChanVeseParams<T>,
) -> Result<ChanVeseResult<T>> {
    if img.is_constant() {
        return Err(Error::DegenerateImage(
            "Chan-Vese needs a non-constant image".into(),
        ));
    }
    let level = Level {
        img: img.pixels(),
        w: img.width(),
        h: img.height(),
    };
    let n = T::from_count(phi.len());
    let mut energy = vec![level.energy(&phi, params)];
    let mut iterations = 0;
    let mut quiet = 0;
    let mut converged = false;

    while iterations < params.max_iter {
        iterations += 1;
        let current = *energy.last().expect("initial energy");
        let mut accepted = None;
        let mut dt = params.dt;
        for _ in 0..=MAX_HALVINGS {
            let trial = level.step(&phi, dt, params);
            let e = level.energy(&trial, params);
            if e <= current {
                accepted = Some((trial, e));
                break;
            }
            dt *= T::lit(0.5);
        }
        let Some((trial, e)) = accepted else {
            energy.push(current);
            converged = true;
            break;
        };

        let flips = phi
            .iter()
            .zip(&trial)
            .filter(|(&a, &b)| (a > T::zero()) != (b > T::zero()))
            .count();
        // pixels still heading for the zero level will flip later
        let pending = phi
            .iter()
            .zip(&trial)
            .filter(|(&a, &b)| (a > T::zero()) == (b > T::zero()) && b.abs() < a.abs())
            .count();
        phi = trial;
        energy.push(e);
        if T::from_count(flips) / n < params.tol {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if quiet >= PATIENCE && T::from_count(pending) / n < params.tol {
            converged = true;
            break;
        }
    }

    let (c1, c2) = sharp_means(level.img, &phi);
    let inside_is_bright = c1 >= c2;
    let bits = phi
        .iter()
        .map(|&p| (p > T::zero()) == inside_is_bright)
        .collect();
    let (foreground_mean, background_mean) = if inside_is_bright { (c1, c2) } else { (c2, c1) };
    Ok(ChanVeseResult {
        mask: BinaryMask::from_bits(img.width(), img.height(), bits),
        converged,
        iterations,
        energy,
        foreground_mean,
        background_mean,
    })
}

/// Plain means of the `phi > 0` and `phi <= 0` phases.
fn sharp_means<T: Scalar>(img: &[T], phi: &[T]) -> (T, T) {
    let (mut s_in, mut n_in, mut s_out, mut n_out) = (T::zero(), 0usize, T::zero(), 0usize);
    for (&v, &p) in img.iter().zip(phi) {
        if p > T::zero() {
            s_in += v;
            n_in += 1;
        } else {
            s_out += v;
            n_out += 1;
        }
    }
    let all = (s_in + s_out) / T::from_count(img.len());
    let c1 = if n_in > 0 {
        s_in / T::from_count(n_in)
    } else {
        all
    };
    let c2 = if n_out > 0 {
        s_out / T::from_count(n_out)
    } else {
        all
    };
    (c1, c2)
}
