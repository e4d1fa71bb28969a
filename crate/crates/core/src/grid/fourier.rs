//! 2-D DFT / IDFT (row-column decomposition over `rustfft`) and quadrant shifts.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{ComplexGrid2D, Grid2D};
use crate::error::{Error, Result};

/// Relative bound on the imaginary residue `idft2` will silently discard.
pub const IDFT_IMAG_TOLERANCE: f64 = 1e-9;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], height: usize, width: usize) {
    for r in 0..height {
        for c in 0..width {
            dst[c * height + r] = src[r * width + c];
        }
    }
}

fn transform_in_place(data: &mut [Complex64], height: usize, width: usize, dir: Direction) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let (row_fft, col_fft) = match dir {
            Direction::Forward => (planner.plan_fft_forward(width), planner.plan_fft_forward(height)),
            Direction::Inverse => (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height)),
        };
        let scratch_len = row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
        // rows are contiguous; columns become rows after a transpose
        row_fft.process_with_scratch(data, &mut scratch);
        let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
        transpose(data, &mut t, height, width);
        col_fft.process_with_scratch(&mut t, &mut scratch);
        transpose(&t, data, width, height);
    });
}

/// Unnormalized forward DFT, `I(k1,k2) = sum i(p1,p2) exp(-2 pi i (k1 p1/N1 + k2 p2/N2))`.
pub fn dft2(g: &Grid2D) -> Result<ComplexGrid2D> {
    if !g.is_finite() {
        return Err(Error::InvalidInput("dft2 input has non-finite values".into()));
    }
    let (h, w) = g.dims();
    let mut data: Vec<Complex64> = g.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_in_place(&mut data, h, w, Direction::Forward);
    Ok(ComplexGrid2D::from_raw(h, w, data))
}

/// Inverse DFT with the `1/(N1 N2)` factor, returning the real part.
///
/// The imaginary residue must stay below `IDFT_IMAG_TOLERANCE` relative to the
/// largest real magnitude (floored at 1); anything larger means the spectrum
/// was edited without keeping conjugate symmetry.
pub fn idft2(spectrum: &ComplexGrid2D) -> Result<Grid2D> {
    idft2_with_tolerance(spectrum, IDFT_IMAG_TOLERANCE)
}

pub fn idft2_with_tolerance(spectrum: &ComplexGrid2D, tolerance: f64) -> Result<Grid2D> {
    let (h, w) = spectrum.dims();
    if spectrum.values().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::InvalidInput("idft2 input has non-finite values".into()));
    }
    let mut data = spectrum.values().to_vec();
    transform_in_place(&mut data, h, w, Direction::Inverse);
    let norm = 1.0 / (h * w) as f64;

    let mut max_re = 0.0f64;
    let mut max_im = 0.0f64;
    let values: Vec<f64> = data
        .iter()
        .map(|v| {
            let re = v.re * norm;
            max_re = max_re.max(re.abs());
            max_im = max_im.max((v.im * norm).abs());
            re
        })
        .collect();
    let allowed = tolerance * max_re.max(1.0);
    if max_im > allowed {
        return Err(Error::SymmetryViolation { residue: max_im, tolerance: allowed });
    }
    Ok(Grid2D::from_raw(h, w, values))
}

fn check_even(h: usize, w: usize) -> Result<()> {
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::UnsupportedShape(format!(
            "quadrant shift needs even dimensions, got {h}x{w}"
        )));
    }
    Ok(())
}

fn roll(spectrum: &ComplexGrid2D) -> ComplexGrid2D {
    let (h, w) = spectrum.dims();
    let (dh, dw) = (h / 2, w / 2);
    let mut out = ComplexGrid2D::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            out.set((r + dh) % h, (c + dw) % w, spectrum.get(r, c));
        }
    }
    out
}

/// Moves the DC bin from `(0, 0)` to `(h/2, w/2)`.
pub fn center_shift(spectrum: &ComplexGrid2D) -> Result<ComplexGrid2D> {
    let (h, w) = spectrum.dims();
    check_even(h, w)?;
    Ok(roll(spectrum))
}

/// Inverse of [`center_shift`]. For even dimensions the swap is its own inverse.
pub fn uncenter_shift(spectrum: &ComplexGrid2D) -> Result<ComplexGrid2D> {
    let (h, w) = spectrum.dims();
    check_even(h, w)?;
    Ok(roll(spectrum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_grid(h: usize, w: usize, seed: u64) -> Grid2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Grid2D::from_fn(h, w, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Direct double sum, O(N^4).
    fn brute_force_dft(g: &Grid2D) -> Vec<Complex64> {
        let (n1, n2) = g.dims();
        let mut out = vec![Complex64::new(0.0, 0.0); n1 * n2];
        for k1 in 0..n1 {
            for k2 in 0..n2 {
                let mut acc = Complex64::new(0.0, 0.0);
                for p1 in 0..n1 {
                    for p2 in 0..n2 {
                        let phase = -2.0 * PI * ((k1 * p1) as f64 / n1 as f64 + (k2 * p2) as f64 / n2 as f64);
                        acc += g.get(p1, p2) * Complex64::from_polar(1.0, phase);
                    }
                }
                out[k1 * n2 + k2] = acc;
            }
        }
        out
    }

    #[test]
    fn constant_grid_has_only_dc() {
        let n = 16;
        let v = 2.5;
        let spec = dft2(&Grid2D::filled(n, n, v)).unwrap();
        let dc = spec.get(0, 0);
        assert!((dc.re - v * (n * n) as f64).abs() <= 1e-9 * v * (n * n) as f64);
        for (i, z) in spec.values().iter().enumerate().skip(1) {
            assert!(z.norm() <= 1e-9 * dc.norm(), "bin {i} = {z}");
        }
    }

    #[test]
    fn roundtrip_random_64() {
        let g = random_grid(64, 64, 1);
        let back = idft2(&dft2(&g).unwrap()).unwrap();
        assert!(g.max_abs_diff(&back) <= 1e-9);
    }

    #[test]
    fn matches_brute_force_and_parseval() {
        let g = random_grid(32, 32, 2);
        let fast = dft2(&g).unwrap();
        let slow = brute_force_dft(&g);
        let worst = fast.values().iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-9 * 1024.0, "fft vs brute force {worst}");

        let energy: f64 = g.values().iter().map(|v| v * v).sum();
        let spectral: f64 = slow.iter().map(|z| z.norm_sqr()).sum::<f64>() / 1024.0;
        assert!((energy - spectral).abs() <= 1e-9 * energy);
    }

    #[test]
    fn rectangular_grids_match_brute_force() {
        let g = random_grid(6, 10, 3);
        let fast = dft2(&g).unwrap();
        let slow = brute_force_dft(&g);
        for (a, b) in fast.values().iter().zip(&slow) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn dc_only_spectrum_inverts_to_ones() {
        let n = 8;
        let mut spec = ComplexGrid2D::zeros(n, n);
        spec.set(0, 0, Complex64::new((n * n) as f64, 0.0));
        let g = idft2(&spec).unwrap();
        assert!(g.max_abs_diff(&Grid2D::filled(n, n, 1.0)) < 1e-12);
    }

    #[test]
    fn asymmetric_edit_is_rejected() {
        let g = random_grid(16, 16, 4);
        let mut spec = dft2(&g).unwrap();
        let v = spec.get(2, 3);
        spec.set(2, 3, v + Complex64::new(50.0, 0.0));
        assert!(matches!(idft2(&spec), Err(Error::SymmetryViolation { .. })));
    }

    #[test]
    fn symmetric_edit_raises_magnitudes() {
        let g = random_grid(16, 16, 5);
        let spec = dft2(&g).unwrap();
        let mut edited = spec.clone();
        for &(r, c) in &[(2usize, 3usize), (14, 13)] {
            let v = edited.get(r, c);
            edited.set(r, c, v + Complex64::new(40.0 * v.re.signum(), 0.0));
        }
        let out = idft2(&edited).unwrap();
        let again = dft2(&out).unwrap();
        for &(r, c) in &[(2usize, 3usize), (14, 13)] {
            assert!(again.get(r, c).norm() > spec.get(r, c).norm());
        }
    }

    #[test]
    fn shifts_move_dc_and_are_involutions() {
        let g = random_grid(8, 6, 6);
        let spec = dft2(&g).unwrap();
        let shifted = center_shift(&spec).unwrap();
        assert_eq!(shifted.get(4, 3), spec.get(0, 0));
        assert_eq!(uncenter_shift(&shifted).unwrap(), spec);
        assert_eq!(center_shift(&shifted).unwrap(), spec);

        let mut a: Vec<f64> = spec.values().iter().map(|z| z.norm()).collect();
        let mut b: Vec<f64> = shifted.values().iter().map(|z| z.norm()).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn odd_dimensions_are_rejected_by_shift() {
        let spec = dft2(&random_grid(5, 4, 7)).unwrap();
        assert!(matches!(center_shift(&spec), Err(Error::UnsupportedShape(_))));
    }

    #[test]
    fn real_input_spectrum_is_conjugate_symmetric() {
        let spec = dft2(&random_grid(12, 12, 8)).unwrap();
        assert!(spec.conjugate_symmetry_residue() < 1e-9);
    }
}
