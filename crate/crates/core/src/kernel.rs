//! FFT evaluation of translation-invariant interaction sums
//! `out[n] = Σ_m mass[m] K((m − n)·dx + offset)` on a uniform mesh.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Correlator {
    n: usize,
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    spectra: Vec<Vec<Complex<f64>>>,
}

/// Reusable buffers for [`Correlator::correlate`].
#[derive(Default)]
pub(crate) struct CorrelatorWorkspace {
    buf: Vec<Complex<f64>>,
    tmp: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Correlator {
    pub(crate) fn new(n: usize, dx: f64, kernel: impl Fn(f64) -> f64, offsets: &[f64]) -> Self {
        let len = (2 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let mut scratch = vec![Complex::default(); fwd.get_inplace_scratch_len()];
        let spectra = offsets
            .iter()
            .map(|&o| {
                // out = mass * g with g[i] = K(-i·dx + o), i = n_out − m
                let mut g = vec![Complex::default(); len];
                let reach = n as i64 - 1;
                for i in -reach..=reach {
                    let slot = i.rem_euclid(len as i64) as usize;
                    g[slot] = Complex::new(kernel(-(i as f64) * dx + o), 0.0);
                }
                fwd.process_with_scratch(&mut g, &mut scratch);
                g
            })
            .collect();
        Self {
            n,
            len,
            fwd,
            inv,
            spectra,
        }
    }

    /// Evaluate every offset's sum. `outs[k]` receives the sums for
    /// `offsets[k]` and may be shorter than the mesh.
    pub(crate) fn correlate(
        &self,
        mass: &[f64],
        outs: &mut [&mut [f64]],
        ws: &mut CorrelatorWorkspace,
    ) {
        debug_assert_eq!(mass.len(), self.n);
        debug_assert_eq!(outs.len(), self.spectra.len());
        let need = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        ws.scratch.resize(need, Complex::default());
        ws.buf.clear();
        ws.buf.extend(mass.iter().map(|&m| Complex::new(m, 0.0)));
        ws.buf.resize(self.len, Complex::default());
        self.fwd.process_with_scratch(&mut ws.buf, &mut ws.scratch);
        let scale = 1.0 / self.len as f64;
        for (spec, out) in self.spectra.iter().zip(outs.iter_mut()) {
            ws.tmp.clear();
            ws.tmp
                .extend(ws.buf.iter().zip(spec.iter()).map(|(a, b)| a * b));
            self.inv.process_with_scratch(&mut ws.tmp, &mut ws.scratch);
            for (o, c) in out.iter_mut().zip(ws.tmp.iter()) {
                *o = c.re * scale;
            }
        }
    }
}
