//! Minimal real and complex 3-vector helpers.

use num_complex::Complex64;

pub type Vec3 = [f64; 3];
pub type CVec3 = [Complex64; 3];

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(s: f64, a: &Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

#[inline]
pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn dist(a: &Vec3, b: &Vec3) -> f64 {
    norm(&sub(a, b))
}

/// Complex vector `re + i im`.
#[inline]
pub fn complexify(re: &Vec3, im: &Vec3) -> CVec3 {
    [
        Complex64::new(re[0], im[0]),
        Complex64::new(re[1], im[1]),
        Complex64::new(re[2], im[2]),
    ]
}

pub fn re(a: &CVec3) -> Vec3 {
    [a[0].re, a[1].re, a[2].re]
}

pub fn im(a: &CVec3) -> Vec3 {
    [a[0].im, a[1].im, a[2].im]
}

/// Complex bilinear product (no conjugation).
#[inline]
pub fn cdot(a: &CVec3, b: &CVec3) -> Complex64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `x . rho` for a real point and a complex vector.
#[inline]
pub fn rdot(x: &Vec3, rho: &CVec3) -> Complex64 {
    rho[0] * x[0] + rho[1] * x[1] + rho[2] * x[2]
}

pub fn cnorm(a: &CVec3) -> f64 {
    (a[0].norm_sqr() + a[1].norm_sqr() + a[2].norm_sqr()).sqrt()
}
