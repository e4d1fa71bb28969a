use crate::grid::Grid2D;

/// Taps of a normalized `k`-tap Gaussian. The width follows the usual
/// `0.3 * ((k - 1) / 2 - 1) + 0.8` rule for an unspecified sigma.
pub fn gaussian_kernel(k: usize) -> Vec<f64> {
    let sigma = 0.3 * ((k as f64 - 1.0) * 0.5 - 1.0) + 0.8;
    let center = (k as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..k).map(|i| (-((i as f64 - center).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Window offsets `[-(k-1)/2 ..= k/2]`; even sizes lean toward the high side.
fn window(k: usize) -> std::ops::RangeInclusive<isize> {
    -(((k - 1) / 2) as isize)..=((k / 2) as isize)
}

fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable Gaussian blur with replicated edges.
pub fn gaussian_blur(g: &Grid2D, k: usize) -> Grid2D {
    if k <= 1 {
        return g.clone();
    }
    let taps = gaussian_kernel(k);
    let (h, w) = g.dims();
    let offsets: Vec<isize> = window(k).collect();
    let rows = Grid2D::from_fn(h, w, |r, c| {
        offsets.iter().zip(&taps).map(|(&d, t)| t * g.get(r, clamp_index(c as isize + d, w))).sum()
    });
    Grid2D::from_fn(h, w, |r, c| {
        offsets.iter().zip(&taps).map(|(&d, t)| t * rows.get(clamp_index(r as isize + d, h), c)).sum()
    })
}

/// `k x k` median with replicated edges; even windows average the two middle values.
pub fn median_filter(g: &Grid2D, k: usize) -> Grid2D {
    if k <= 1 {
        return g.clone();
    }
    let (h, w) = g.dims();
    let mut buf = Vec::with_capacity(k * k);
    Grid2D::from_fn(h, w, |r, c| {
        buf.clear();
        for dr in window(k) {
            for dc in window(k) {
                buf.push(g.get(clamp_index(r as isize + dr, h), clamp_index(c as isize + dc, w)));
            }
        }
        buf.sort_by(f64::total_cmp);
        let n = buf.len();
        if n % 2 == 1 {
            buf[n / 2]
        } else {
            0.5 * (buf[n / 2 - 1] + buf[n / 2])
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        for k in [3, 5, 15] {
            let taps = gaussian_kernel(k);
            assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..k {
                assert!((taps[i] - taps[k - 1 - i]).abs() < 1e-15);
            }
        }
        // sigma 0.8 for k = 3
        let t = gaussian_kernel(3);
        let e = (-1.0f64 / (2.0 * 0.64)).exp();
        assert!((t[0] - e / (1.0 + 2.0 * e)).abs() < 1e-12);
    }

    #[test]
    fn blur_keeps_constants_and_smooths_impulses() {
        let flat = Grid2D::filled(16, 16, 2.5);
        assert!(gaussian_blur(&flat, 5).max_abs_diff(&flat) < 1e-12);
        let mut impulse = Grid2D::zeros(16, 16);
        impulse.set(8, 8, 1.0);
        let b = gaussian_blur(&impulse, 3);
        assert!((b.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(b.get(8, 8) < 1.0 && b.get(8, 9) > 0.0);
    }

    #[test]
    fn median_removes_isolated_spikes() {
        let mut g = Grid2D::filled(8, 8, 1.0);
        g.set(4, 4, 100.0);
        let m = median_filter(&g, 3);
        assert_eq!(m.get(4, 4), 1.0);
        let m2 = median_filter(&g, 2);
        assert_eq!(m2.get(4, 4), 1.0);
    }
}
