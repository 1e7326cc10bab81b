//! Fourier collocation on a periodic grid.
//!
//! Wave vectors are `k = 2 pi m` with signed indices `m`; the Nyquist index
//! of an even axis gets `k = 0`. Nonzero modes with `k = 0` count as
//! gradients, which makes the split into curl-free and divergence-free
//! parts an exact orthogonal decomposition on the grid.

use crate::tensor::Vec3;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::TAU;
use std::sync::Arc;

pub struct Spectral {
    dims: [usize; 3],
    plans: Vec<Option<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>>,
    wave: [Vec<f64>; 3],
}

fn wavenumbers(n: usize) -> Vec<f64> {
    (0..n)
        .map(|m| {
            if 2 * m == n {
                0.0
            } else if 2 * m < n {
                TAU * m as f64
            } else {
                TAU * (m as f64 - n as f64)
            }
        })
        .collect()
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

impl Spectral {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let plans = dims
            .iter()
            .map(|&n| (n > 1).then(|| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))))
            .collect();
        Self {
            dims,
            plans,
            wave: [wavenumbers(dims[0]), wavenumbers(dims[1]), wavenumbers(dims[2])],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn plan(&self, axis: usize, inverse: bool) -> Option<&Arc<dyn Fft<f64>>> {
        self.plans[axis]
            .as_ref()
            .map(|(f, i)| if inverse { i } else { f })
    }

    /// Unnormalized 3D transform in place.
    pub fn transform(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>, inverse: bool) {
        let [nx, ny, nz] = self.dims;
        scratch.resize(data.len(), Complex64::default());
        if let Some(p) = self.plan(2, inverse) {
            p.process(data);
        }
        if let Some(p) = self.plan(1, inverse) {
            let plane = ny * nz;
            for i in 0..nx {
                let block = &mut data[i * plane..(i + 1) * plane];
                let buf = &mut scratch[..plane];
                transpose(block, buf, ny, nz);
                p.process(buf);
                transpose(buf, block, nz, ny);
            }
        }
        if let Some(p) = self.plan(0, inverse) {
            let rest = ny * nz;
            transpose(data, scratch, nx, rest);
            p.process(scratch);
            transpose(scratch, data, rest, nx);
        }
    }

    /// Wave vector of the flat index `idx`.
    pub fn wave(&self, idx: usize) -> Vec3 {
        let [_, ny, nz] = self.dims;
        let k = idx % nz;
        let j = (idx / nz) % ny;
        let i = idx / (ny * nz);
        Vec3::new(self.wave[0][i], self.wave[1][j], self.wave[2][k])
    }

    fn forward_vec(&self, v: &[Vec3], ws: &mut Workspace) {
        for c in 0..3 {
            for (dst, src) in ws.comps[c].iter_mut().zip(v) {
                *dst = Complex64::new(src[c], 0.0);
            }
            self.transform(&mut ws.comps[c], &mut ws.scratch, false);
        }
    }

    /// Orthogonal projection onto zero-mean gradient fields.
    pub fn project_gradient(&self, v: &[Vec3], ws: &mut Workspace, out: &mut [Vec3]) {
        ws.ensure(self.len());
        self.forward_vec(v, ws);
        let [c0, c1, c2] = &mut ws.comps;
        for idx in 0..self.len() {
            if idx == 0 {
                c0[0] = Complex64::default();
                c1[0] = Complex64::default();
                c2[0] = Complex64::default();
                continue;
            }
            let k = self.wave(idx);
            let k2 = k.norm_squared();
            if k2 == 0.0 {
                continue;
            }
            let dot = (c0[idx] * k[0] + c1[idx] * k[1] + c2[idx] * k[2]) / k2;
            c0[idx] = dot * k[0];
            c1[idx] = dot * k[1];
            c2[idx] = dot * k[2];
        }
        let scale = 1.0 / self.len() as f64;
        for c in 0..3 {
            self.transform(&mut ws.comps[c], &mut ws.scratch, true);
            for (dst, src) in out.iter_mut().zip(&ws.comps[c]) {
                dst[c] = src.re * scale;
            }
        }
    }

    /// Root-mean-square of the discrete curl.
    pub fn curl_rms(&self, v: &[Vec3], ws: &mut Workspace) -> f64 {
        ws.ensure(self.len());
        self.forward_vec(v, ws);
        let mut acc = 0.0;
        for idx in 0..self.len() {
            let k = self.wave(idx);
            let c = [ws.comps[0][idx], ws.comps[1][idx], ws.comps[2][idx]];
            let curl = [
                c[2] * k[1] - c[1] * k[2],
                c[0] * k[2] - c[2] * k[0],
                c[1] * k[0] - c[0] * k[1],
            ];
            acc += curl.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        acc.sqrt() / self.len() as f64
    }
}

/// Reusable buffers for one thread.
#[derive(Default)]
pub struct Workspace {
    comps: [Vec<Complex64>; 3],
    scratch: Vec<Complex64>,
}

impl Workspace {
    fn ensure(&mut self, n: usize) {
        for c in self.comps.iter_mut() {
            c.resize(n, Complex64::default());
        }
    }
}
