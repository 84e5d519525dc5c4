//! FFT-based operators on the periodic grid.
//!
//! Plans are cached per resolution behind a mutex; the plans themselves are
//! `Send + Sync` and shared freely.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{check_finite, FieldError, PeriodicGrid, Point, ScalarField, VectorField};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// In-place multidimensional FFT. The inverse is normalized by `1/N^dim`.
pub(crate) fn fft_nd(grid: &PeriodicGrid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let dim = grid.dim();
    let p = plans(n);
    let fft = if inverse { &p.inverse } else { &p.forward };
    let total = data.len();
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut lines = vec![Complex64::new(0.0, 0.0); total];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch);
            continue;
        }
        let outer = total / (n * stride);
        // Gather every line along `axis` into contiguous storage.
        let mut line = 0;
        for o in 0..outer {
            for i in 0..stride {
                let base = o * n * stride + i;
                for k in 0..n {
                    lines[line * n + k] = data[base + k * stride];
                }
                line += 1;
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch);
        let mut line = 0;
        for o in 0..outer {
            for i in 0..stride {
                let base = o * n * stride + i;
                for k in 0..n {
                    data[base + k * stride] = lines[line * n + k];
                }
                line += 1;
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}

fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

/// Applies a spectral multiplier `m(k, bin)` and returns the real part of the
/// inverse transform.
fn apply_multiplier(
    grid: &PeriodicGrid,
    values: &[f64],
    multiplier: impl Fn(&[f64; 3], &[usize; 3]) -> Complex64,
) -> Vec<f64> {
    let mut data = to_complex(values);
    fft_nd(grid, &mut data, false);
    for (i, z) in data.iter_mut().enumerate() {
        let bins = grid.unravel(i);
        let mut k = [0.0; 3];
        for axis in 0..grid.dim() {
            k[axis] = grid.wavenumber(bins[axis]);
        }
        *z *= multiplier(&k, &bins);
    }
    fft_nd(grid, &mut data, true);
    data.into_iter().map(|z| z.re).collect()
}

/// Solves `−ΔS + S = ρ` on the torus: `Ŝ_k = ρ̂_k / (1 + |k|²)`.
pub fn solve_screened_poisson(rho: &ScalarField) -> Result<ScalarField, FieldError> {
    check_finite(rho.values())?;
    let grid = *rho.grid();
    let mean = rho.mean();
    let mut values = apply_multiplier(&grid, rho.values(), |k, _| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        Complex64::new(1.0 / (1.0 + k2), 0.0)
    });
    // Pin the k = 0 mode to the exact mean of ρ.
    let drift = values.iter().sum::<f64>() / values.len() as f64 - mean;
    for v in &mut values {
        *v -= drift;
    }
    Ok(ScalarField::from_raw(grid, values))
}

fn is_nyquist(grid: &PeriodicGrid, bin: usize) -> bool {
    bin == grid.n() / 2
}

/// Spectral gradient. Nyquist bins carry no odd derivative.
pub fn gradient_field(s: &ScalarField) -> Result<VectorField, FieldError> {
    check_finite(s.values())?;
    let grid = *s.grid();
    let mut spectrum = to_complex(s.values());
    fft_nd(&grid, &mut spectrum, false);
    let components = (0..grid.dim())
        .map(|axis| {
            let mut d = spectrum.clone();
            for (i, z) in d.iter_mut().enumerate() {
                let bins = grid.unravel(i);
                if is_nyquist(&grid, bins[axis]) {
                    *z = Complex64::new(0.0, 0.0);
                } else {
                    *z *= Complex64::new(0.0, grid.wavenumber(bins[axis]));
                }
            }
            fft_nd(&grid, &mut d, true);
            d.into_iter().map(|z| z.re).collect()
        })
        .collect();
    Ok(VectorField {
        grid,
        components,
    })
}

/// Spectral divergence of a vector field.
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = *v.grid();
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.len()];
    for axis in 0..grid.dim() {
        let mut d = to_complex(v.component(axis));
        fft_nd(&grid, &mut d, false);
        for (i, (a, z)) in acc.iter_mut().zip(d.iter()).enumerate() {
            let bins = grid.unravel(i);
            if !is_nyquist(&grid, bins[axis]) {
                *a += z * Complex64::new(0.0, grid.wavenumber(bins[axis]));
            }
        }
    }
    fft_nd(&grid, &mut acc, true);
    ScalarField::from_raw(grid, acc.into_iter().map(|z| z.re).collect())
}

/// Spectral Laplacian `−|k|² ŝ`.
pub fn laplacian(s: &ScalarField) -> ScalarField {
    let grid = *s.grid();
    let values = apply_multiplier(&grid, s.values(), |k, _| {
        Complex64::new(-(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]), 0.0)
    });
    ScalarField::from_raw(grid, values)
}

/// Backward difference `(s_new − s_old)/dt`.
pub fn time_derivative_field(
    s_new: &ScalarField,
    s_old: &ScalarField,
    dt: f64,
) -> Result<ScalarField, FieldError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FieldError::NonPositiveStep(dt));
    }
    if s_new.grid() != s_old.grid() {
        return Err(FieldError::GridMismatch);
    }
    let values = s_new
        .values()
        .iter()
        .zip(s_old.values())
        .map(|(a, b)| (a - b) / dt)
        .collect();
    Ok(ScalarField::from_raw(*s_new.grid(), values))
}

/// Translates a nodal field by `shift` (new(x) = old(x − shift)) through a
/// Fourier phase shift of its trigonometric interpolant.
pub fn translate(field: &ScalarField, shift: Point) -> ScalarField {
    let grid = *field.grid();
    let mut values = field.values().to_vec();
    translate_in_place(&grid, &mut values, shift);
    ScalarField::from_raw(grid, values)
}

pub(crate) fn translate_in_place(grid: &PeriodicGrid, values: &mut [f64], shift: Point) {
    let mut data = to_complex(values);
    fft_nd(grid, &mut data, false);
    for (i, z) in data.iter_mut().enumerate() {
        let bins = grid.unravel(i);
        let mut phase = 0.0;
        for axis in 0..grid.dim() {
            phase -= grid.wavenumber(bins[axis]) * shift[axis];
        }
        *z *= Complex64::from_polar(1.0, phase);
    }
    fft_nd(grid, &mut data, true);
    for (v, z) in values.iter_mut().zip(data) {
        *v = z.re;
    }
}

/// Fourier interpolation onto a grid with `n_new` nodes per axis
/// (`n_new ≥ n`). The Nyquist bin is split evenly between ±N/2.
pub fn resample(field: &ScalarField, n_new: usize) -> Result<ScalarField, FieldError> {
    let grid = *field.grid();
    let fine = PeriodicGrid::new(grid.dim(), n_new, grid.length())?;
    if n_new < grid.n() {
        return Err(FieldError::InvalidGrid(format!(
            "resample target {n_new} is coarser than {}",
            grid.n()
        )));
    }
    let n = grid.n();
    let mut spec = to_complex(field.values());
    fft_nd(&grid, &mut spec, false);
    let mut out = vec![Complex64::new(0.0, 0.0); fine.len()];
    let scale = (fine.len() as f64) / (grid.len() as f64);
    for (i, z) in spec.iter().enumerate() {
        let bins = grid.unravel(i);
        // Each Nyquist axis splits into two targets (±N/2) with half weight.
        let mut targets: Vec<([usize; 3], f64)> = vec![([0; 3], 1.0)];
        for axis in 0..grid.dim() {
            let b = bins[axis];
            let mut next = Vec::with_capacity(targets.len() * 2);
            for (t, w) in &targets {
                if b == n / 2 {
                    let mut lo = *t;
                    lo[axis] = n_new - n / 2;
                    let mut hi = *t;
                    hi[axis] = n / 2;
                    next.push((lo, w * 0.5));
                    next.push((hi, w * 0.5));
                } else {
                    let mut tt = *t;
                    tt[axis] = if b < n / 2 { b } else { n_new - (n - b) };
                    next.push((tt, *w));
                }
            }
            targets = next;
        }
        for (t, w) in targets {
            out[fine.ravel(t)] += z * (w * scale);
        }
    }
    fft_nd(&fine, &mut out, true);
    Ok(ScalarField::from_raw(
        fine,
        out.into_iter().map(|z| z.re).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(dim: usize) -> PeriodicGrid {
        PeriodicGrid::new(dim, 16, 5.0).unwrap()
    }

    fn band_limited(grid: PeriodicGrid, seed: u64, modes: i32) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::new();
        for _ in 0..6 {
            let m: Vec<i32> = (0..grid.dim()).map(|_| rng.random_range(-modes..=modes)).collect();
            terms.push((m, rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI)));
        }
        let l = grid.length();
        ScalarField::from_fn(grid, move |x| {
            terms
                .iter()
                .map(|(m, a, ph)| {
                    let arg: f64 = m.iter().enumerate().map(|(ax, &mm)| 2.0 * PI * mm as f64 * x[ax] / l).sum();
                    a * (arg + ph).cos()
                })
                .sum()
        })
    }

    #[test]
    fn constant_density_is_fixed_point() {
        for dim in [2, 3] {
            let g = grid(dim);
            let s = solve_screened_poisson(&ScalarField::constant(g, 0.7)).unwrap();
            assert!(s.values().iter().all(|v| (v - 0.7).abs() < 1e-14));
        }
    }

    #[test]
    fn single_mode_is_scaled() {
        let g = grid(2);
        let k = 2.0 * PI / g.length();
        let rho = ScalarField::from_fn(g, |x| (k * x[0]).cos());
        let s = solve_screened_poisson(&rho).unwrap();
        for (i, v) in s.values().iter().enumerate() {
            let x = g.node_position(i);
            assert!((v - (k * x[0]).cos() / (1.0 + k * k)).abs() < 1e-14);
        }
    }

    #[test]
    fn mean_identity_on_random_density() {
        let g = PeriodicGrid::new(3, 16, 7.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut v: Vec<f64> = (0..g.len()).map(|_| rng.random::<f64>()).collect();
        let total: f64 = v.iter().sum::<f64>() * g.cell_volume();
        v.iter_mut().for_each(|x| *x /= total);
        let rho = ScalarField::new(g, v).unwrap();
        let s = solve_screened_poisson(&rho).unwrap();
        assert!((rho.integral() - 1.0).abs() < 1e-12);
        assert!((s.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_density() {
        let g = grid(2);
        let mut rho = ScalarField::zeros(g);
        rho.values_mut()[3] = f64::INFINITY;
        assert!(matches!(
            solve_screened_poisson(&rho),
            Err(FieldError::NonFinite { index: 3, .. })
        ));
    }

    #[test]
    fn gradient_of_sine() {
        let g = grid(2);
        let k = 2.0 * PI / g.length();
        let s = ScalarField::from_fn(g, |x| (k * x[0]).sin());
        let grad = gradient_field(&s).unwrap();
        for i in 0..g.len() {
            let x = g.node_position(i);
            assert!((grad.component(0)[i] - k * (k * x[0]).cos()).abs() < 1e-12);
            assert!(grad.component(1)[i].abs() < 1e-12);
        }
        let c = gradient_field(&ScalarField::constant(g, 4.0)).unwrap();
        assert!(c.max_magnitude() < 1e-14);
    }

    #[test]
    fn divergence_of_gradient_is_laplacian() {
        for dim in [2, 3] {
            let g = grid(dim);
            let s = band_limited(g, 11 + dim as u64, 5);
            let via_grad = divergence(&gradient_field(&s).unwrap());
            let direct = laplacian(&s);
            for (a, b) in via_grad.values().iter().zip(direct.values()) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn time_derivative_recovers_rate() {
        let g = grid(2);
        let k = 2.0 * PI / g.length();
        let mode = ScalarField::from_fn(g, |x| (k * x[0]).cos());
        let at = |t: f64| mode.scaled(t);
        let dt = 0.05;
        let d1 = time_derivative_field(&at(dt), &at(0.0), dt).unwrap();
        let d2 = time_derivative_field(&at(2.0 * dt), &at(dt), dt).unwrap();
        for d in [d1, d2] {
            for (a, b) in d.values().iter().zip(mode.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let same = time_derivative_field(&mode, &mode, 0.1).unwrap();
        assert!(same.sup_norm() == 0.0);
        assert!(time_derivative_field(&mode, &mode, 0.0).is_err());
    }

    #[test]
    fn translate_roundtrip_and_integer_shift() {
        let g = grid(2);
        let s = band_limited(g, 5, 4);
        let shifted = translate(&s, [0.37, -0.81, 0.0]);
        let back = translate(&shifted, [-0.37, 0.81, 0.0]);
        for (a, b) in back.values().iter().zip(s.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let h = g.spacing();
        let one = translate(&s, [h, 0.0, 0.0]);
        for i in 0..g.len() {
            let mut idx = g.unravel(i);
            idx[0] = (idx[0] + g.n() - 1) % g.n();
            assert!((one.values()[i] - s.values()[g.ravel(idx)]).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_preserves_band_limited_values() {
        let g = grid(2);
        let s = band_limited(g, 9, 3);
        let fine = resample(&s, 32).unwrap();
        for i in 0..g.len() {
            let idx = g.unravel(i);
            let j = fine.grid().ravel([2 * idx[0], 2 * idx[1], 0]);
            assert!((fine.values()[j] - s.values()[i]).abs() < 1e-12);
        }
        assert!((fine.integral() - s.integral()).abs() < 1e-12);
    }
}
