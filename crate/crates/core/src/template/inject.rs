use num_complex::Complex64;

use super::mask::TemplateMask;
use crate::ddim::InjectionHook;
use crate::error::{Error, Result};
use crate::grid::{center_shift, dft2, idft2, population_std, uncenter_shift, ComplexGrid2D, Grid2D, LatentTensor};

/// Which bins the injection step size `std(|F|)` is measured over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaScope {
    /// Bins outside the mask. The template never feeds back into its own step size.
    #[default]
    Background,
    /// Every bin of the channel spectrum.
    AllBins,
}

pub(crate) fn centered_spectrum(g: &Grid2D) -> Result<ComplexGrid2D> {
    center_shift(&dft2(g)?)
}

pub(crate) fn from_centered_spectrum(spectrum: &ComplexGrid2D) -> Result<Grid2D> {
    idft2(&uncenter_shift(spectrum)?)
}

fn check_dims(z: &LatentTensor, mask: &TemplateMask) -> Result<()> {
    if (z.height(), z.width()) != (mask.height(), mask.width()) {
        return Err(Error::ShapeMismatch(format!(
            "mask is {}x{}, latent is {}x{}",
            mask.height(),
            mask.width(),
            z.height(),
            z.width()
        )));
    }
    Ok(())
}

/// Adds `eta * std(|F|)` to the real part of every mask bin of every channel.
pub fn inject(z0: &LatentTensor, mask: &TemplateMask, eta: f64) -> Result<LatentTensor> {
    inject_scoped(z0, mask, eta, SigmaScope::Background)
}

pub fn inject_scoped(z0: &LatentTensor, mask: &TemplateMask, eta: f64, scope: SigmaScope) -> Result<LatentTensor> {
    check_dims(z0, mask)?;
    if eta == 0.0 {
        return Ok(z0.clone());
    }
    z0.try_map_channels(|_, ch| {
        let mut spectrum = centered_spectrum(ch)?;
        let mags: Vec<f64> = match scope {
            SigmaScope::AllBins => spectrum.values().iter().map(|v| v.norm()).collect(),
            SigmaScope::Background => spectrum
                .values()
                .iter()
                .zip(mask.grid().values())
                .filter(|(_, &m)| m == 0.0)
                .map(|(v, _)| v.norm())
                .collect(),
        };
        let step = eta * population_std(&mags);
        for &(r, c) in mask.points() {
            let v = spectrum.get(r, c);
            spectrum.set(r, c, v + Complex64::new(step, 0.0));
        }
        from_centered_spectrum(&spectrum)
    })
}

/// Injection hook for the reverse process.
#[derive(Debug, Clone)]
pub struct TemplateInjector {
    pub mask: TemplateMask,
    pub eta: f64,
    pub scope: SigmaScope,
}

impl TemplateInjector {
    pub fn new(mask: TemplateMask, eta: f64) -> Self {
        Self { mask, eta, scope: SigmaScope::Background }
    }
}

impl InjectionHook for TemplateInjector {
    fn apply(&self, z0: &LatentTensor, _t: usize) -> Result<LatentTensor> {
        inject_scoped(z0, &self.mask, self.eta, self.scope)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Zeroes spectral bins whose magnitude exceeds `k` times the median of their
/// ring (integer distance from the spectrum center). Rings are symmetric about
/// the center, so the result stays real.
pub fn suppress_spectral_peaks(z: &LatentTensor, k: f64) -> Result<LatentTensor> {
    if k <= 0.0 {
        return Ok(z.clone());
    }
    if z.height() % 2 != 0 {
        return Err(Error::UnsupportedShape(format!("odd latent size {}", z.height())));
    }
    z.try_map_channels(|_, ch| {
        let mut spectrum = centered_spectrum(ch)?;
        let (h, w) = spectrum.dims();
        let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
        let ring_of = |r: usize, c: usize| (r as f64 - cy).hypot(c as f64 - cx).round() as usize;
        let rings = ring_of(0, 0) + 1;
        let mut members: Vec<Vec<f64>> = vec![Vec::new(); rings];
        for r in 0..h {
            for c in 0..w {
                members[ring_of(r, c)].push(spectrum.get(r, c).norm());
            }
        }
        let limits: Vec<f64> = members.iter_mut().map(|m| k * median(m)).collect();
        let mut changed = false;
        for r in 0..h {
            for c in 0..w {
                // keep the unpaired Nyquist row/column untouched; its partner wraps outside the grid
                if r == 0 || c == 0 {
                    continue;
                }
                if spectrum.get(r, c).norm() > limits[ring_of(r, c)] {
                    spectrum.set(r, c, Complex64::new(0.0, 0.0));
                    changed = true;
                }
            }
        }
        if changed {
            from_centered_spectrum(&spectrum)
        } else {
            Ok(ch.clone())
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddim::{Denoiser, SeededNoiseDenoiser};
    use crate::template::mask::{build_mask, TemplateConfig};

    fn random_latent(seed: u64) -> LatentTensor {
        SeededNoiseDenoiser { seed, sigma: 1.0 }.predict(&LatentTensor::zeros(64, 4), 0)
    }

    fn mask() -> TemplateMask {
        build_mask(64, 64, &TemplateConfig::default()).unwrap()
    }

    #[test]
    fn zero_strength_is_identity() {
        let z = random_latent(1);
        assert_eq!(inject(&z, &mask(), 0.0).unwrap(), z);
    }

    #[test]
    fn zero_input_gets_exact_template_with_all_bins_scope() {
        // all-bin sigma of a zero spectrum is zero, so nothing is added
        let z = LatentTensor::zeros(64, 1);
        let out = inject_scoped(&z, &mask(), 5.0, SigmaScope::AllBins).unwrap();
        assert!(out.max_abs_diff(&z) < 1e-12);
    }

    #[test]
    fn mask_bins_rise_by_the_injected_step() {
        let m = mask();
        let z = random_latent(2);
        let out = inject(&z, &m, 5.0).unwrap();
        for (before, after) in z.channels().iter().zip(out.channels()) {
            let g0 = centered_spectrum(before).unwrap();
            let g1 = centered_spectrum(after).unwrap();
            let background: Vec<f64> = g0
                .values()
                .iter()
                .zip(m.grid().values())
                .filter(|(_, &k)| k == 0.0)
                .map(|(v, _)| v.norm())
                .collect();
            let step = 5.0 * population_std(&background);
            let mut gain = 0.0;
            for &(r, c) in m.points() {
                let (a, b) = (g0.get(r, c), g1.get(r, c));
                assert!(((b - a).re - step).abs() < 1e-6 * step);
                assert!((b - a).im.abs() < 1e-6);
                assert!(b.norm() >= a.norm() - step - 1e-9);
                gain += b.norm() - a.norm();
            }
            assert!(gain > 0.0);
            // bins off the mask are untouched
            for r in 0..64 {
                for c in 0..64 {
                    if !m.contains(r, c) {
                        assert!((g1.get(r, c) - g0.get(r, c)).norm() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn injection_output_is_real() {
        // idft2 errors if the edit broke conjugate symmetry, so success is the check
        for seed in 0..5 {
            let z = random_latent(seed);
            let out = inject(&z, &mask(), 7.0).unwrap();
            for ch in out.channels() {
                let residue = dft2(ch).unwrap().conjugate_symmetry_residue();
                assert!(residue < 1e-9 * 4096.0);
            }
        }
    }

    #[test]
    fn suppression_removes_injected_peaks_and_little_else() {
        let z = random_latent(3);
        let m = mask();
        let mut marked = z.clone();
        for _ in 0..50 {
            marked = inject(&marked, &m, 5.0).unwrap();
        }
        let cleaned = suppress_spectral_peaks(&marked, 4.0).unwrap();
        let err = cleaned.axpby(1.0, &z, -1.0);
        let energy = |t: &LatentTensor| t.to_values().iter().map(|v| v * v).sum::<f64>();
        assert!(energy(&err) < 0.05 * energy(&z), "{}", energy(&err) / energy(&z));
        assert!(energy(&marked.axpby(1.0, &z, -1.0)) > 10.0 * energy(&z));

        let untouched = suppress_spectral_peaks(&z, 4.0).unwrap();
        assert!(untouched.axpby(1.0, &z, -1.0).to_values().iter().map(|v| v * v).sum::<f64>() < 0.01 * energy(&z));
        assert_eq!(suppress_spectral_peaks(&z, 0.0).unwrap(), z);
    }

    #[test]
    fn hook_matches_function() {
        let m = mask();
        let z = random_latent(4);
        let hook = TemplateInjector::new(m.clone(), 3.0);
        assert_eq!(hook.apply(&z, 7).unwrap(), inject(&z, &m, 3.0).unwrap());
        let wrong = LatentTensor::zeros(32, 4);
        assert!(inject(&wrong, &m, 1.0).is_err());
    }
}
