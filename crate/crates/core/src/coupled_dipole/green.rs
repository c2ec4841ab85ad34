//! Free-space dyadic Green's function in units where the probe wavenumber
//! is 1, so that the field of a dipole `p` is `G(r)·p`.

use std::f64::consts::PI;

use num_complex::Complex64;

pub type Vec3 = [Complex64; 3];
pub type Tensor = [[Complex64; 3]; 3];

/// `G(r) = e^{ir}/(4πr) [(1 + i/r − 1/r²) I + (−1 − 3i/r + 3/r²) r̂r̂]`.
/// `d` must be nonzero.
pub fn green_tensor(d: [f64; 3]) -> Tensor {
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let inv = 1.0 / r;
    let n = [d[0] * inv, d[1] * inv, d[2] * inv];
    let pref = Complex64::from_polar(inv / (4.0 * PI), r);
    let a = pref * Complex64::new(1.0 - inv * inv, inv);
    let b = pref * Complex64::new(-1.0 + 3.0 * inv * inv, -3.0 * inv);
    let mut g = [[Complex64::new(0.0, 0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            g[i][j] = b * (n[i] * n[j]);
        }
        g[i][i] += a;
    }
    g
}

/// Imaginary part of `G` including the coincident limit `I/(6π)`.
pub fn im_green(d: [f64; 3]) -> [[f64; 3]; 3] {
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    if r2 < 1e-16 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0 / (6.0 * PI);
        }
        return m;
    }
    let g = green_tensor(d);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = g[i][j].im;
        }
    }
    m
}

pub fn apply(g: &Tensor, p: &Vec3) -> Vec3 {
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for i in 0..3 {
        out[i] = g[i][0] * p[0] + g[i][1] * p[1] + g[i][2] * p[2];
    }
    out
}
