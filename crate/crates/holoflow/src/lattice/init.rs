//! Initial data: band-limited random fields and compatible ansatz classes.
//!
//! A band-limited field is a finite cosine sum over integer wave vectors
//! |k|_2 <= k_max. All randomness (mode subset, phases, amplitude tables) is
//! drawn before any grid is consulted, so the same config and seed describe
//! one continuum field that can be sampled on several grids; refinement
//! ratios then measure pure truncation error.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::sync::Arc;

use super::ops::{rodrigues, RotationField};
use super::{Field, Grid};
use crate::util::gaussian;

#[derive(Debug, Clone)]
pub struct BandLimited {
    /// Keep wave vectors with |k|_2 <= k_max.
    pub k_max: i32,
    /// Optional subsample size; None keeps the whole band. Useful in seven
    /// dimensions, where the full band is ~500 modes.
    pub modes: Option<usize>,
    /// Target root-mean-square of the pointwise norm |A| over the torus
    /// (exact in the continuum, grid-independent).
    pub amplitude: f64,
    pub seed: u64,
}

impl BandLimited {
    pub fn new(k_max: i32, amplitude: f64, seed: u64) -> BandLimited {
        BandLimited {
            k_max,
            modes: None,
            amplitude,
            seed,
        }
    }

    pub fn default_for_tests(seed: u64) -> BandLimited {
        BandLimited::new(2, 1.0, seed)
    }
}

/// Canonical representatives of +-k pairs with |k|_2 <= k_max, zero first,
/// in a deterministic order (first nonzero component positive).
pub fn mode_list(n: usize, k_max: i32) -> Vec<Vec<i32>> {
    let mut out = vec![vec![0i32; n]];
    let mut cur = vec![-k_max; n];
    loop {
        let norm2: i32 = cur.iter().map(|&v| v * v).sum();
        if norm2 > 0 && norm2 <= k_max * k_max {
            if cur.iter().find(|&&v| v != 0).copied().unwrap_or(0) > 0 {
                out.push(cur.clone());
            }
        }
        let mut axis = n;
        while axis > 0 {
            axis -= 1;
            if cur[axis] < k_max {
                cur[axis] += 1;
                for v in &mut cur[axis + 1..] {
                    *v = -k_max;
                }
                break;
            }
            if axis == 0 {
                return out;
            }
        }
    }
}

struct ModeSet {
    /// (wave vector, phase, amplitudes[values_per_site])
    modes: Vec<(Vec<i32>, f64, Vec<f64>)>,
    scale: f64,
}

/// Draw the mode data for `values` channels. The overall scale makes the
/// continuum mean square of the per-site value vector equal amplitude^2.
fn draw_modes(n: usize, values: usize, cfg: &BandLimited) -> ModeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let all = mode_list(n, cfg.k_max);
    let chosen: Vec<Vec<i32>> = match cfg.modes {
        Some(m) if m < all.len() => {
            let idx = sample(&mut rng, all.len(), m);
            let mut v: Vec<usize> = idx.into_iter().collect();
            v.sort_unstable();
            v.into_iter().map(|i| all[i].clone()).collect()
        }
        _ => all,
    };
    let mut modes = Vec::with_capacity(chosen.len());
    let mut power = 0.0;
    for k in chosen {
        let phase = rng.gen_range(0.0..TAU);
        let amps: Vec<f64> = (0..values).map(|_| gaussian(&mut rng)).collect();
        // mean of cos^2 over the torus is 1/2 for k != 0, 1 at k = 0
        let w = if k.iter().all(|&v| v == 0) {
            phase.cos().powi(2)
        } else {
            0.5
        };
        power += w * amps.iter().map(|a| a * a).sum::<f64>();
        modes.push((k, phase, amps));
    }
    let scale = if power > 0.0 {
        cfg.amplitude / power.sqrt()
    } else {
        0.0
    };
    ModeSet { modes, scale }
}

/// Evaluate the band-limited field site by site, handing each site's value
/// vector to `sink`. Grid-shape-agnostic: positions enter as fractions
/// x_a / L_a.
pub fn band_limited_eval<F>(grid: &Grid, values: usize, cfg: &BandLimited, mut sink: F)
where
    F: FnMut(usize, &[f64]),
{
    let set = draw_modes(grid.n, values, cfg);
    let n = grid.n;
    let mut coords = vec![0usize; n];
    let mut buf = vec![0.0; values];
    for site in 0..grid.sites {
        grid.coords_of(site, &mut coords);
        buf.iter_mut().for_each(|v| *v = 0.0);
        for (k, phase, amps) in &set.modes {
            let mut angle = *phase;
            for a in 0..n {
                angle += TAU * k[a] as f64 * coords[a] as f64 / grid.shape[a] as f64;
            }
            let c = angle.cos() * set.scale;
            for (b, amp) in buf.iter_mut().zip(amps) {
                *b += c * amp;
            }
        }
        sink(site, &buf);
    }
}

/// Band-limited ad-valued 1-form.
pub fn band_limited(grid: &Arc<Grid>, lie: usize, cfg: &BandLimited) -> Field {
    let mut f = Field::zeros(grid, 1, lie);
    let per = f.per_site();
    let data = &mut f.data;
    band_limited_eval(grid, per, cfg, |site, vals| {
        data[site * per..(site + 1) * per].copy_from_slice(vals);
    });
    f
}

/// Smooth per-site rotations: Rodrigues applied to a band-limited so(3)
/// field with RMS angle `amplitude`.
pub fn so3_rotation_field(grid: &Arc<Grid>, amplitude: f64, seed: u64) -> RotationField {
    let cfg = BandLimited::new(1, amplitude, seed);
    let mut rot = RotationField::identity(grid);
    let data = &mut rot.data;
    band_limited_eval(grid, 3, &cfg, |site, vals| {
        let r = rodrigues(&[vals[0], vals[1], vals[2]]);
        data[site * 9..site * 9 + 9].copy_from_slice(&r);
    });
    rot
}

/// Pair-local abelian ansatz on an even-dimensional torus: for each complex
/// pair (2l, 2l+1), the components A_{2l}, A_{2l+1} depend only on the pair's
/// own two coordinates, and every component sits in the single Lie direction
/// T_0. The curvature is then block-diagonal of type (1,1) pointwise (zero
/// projection onto the +1 eigenspace), and the discrete flow preserves the
/// ansatz exactly: d_star keeps each component pair-local and abelian.
pub fn kahler_compatible(grid: &Arc<Grid>, lie: usize, cfg: &BandLimited) -> Field {
    let n = grid.n;
    assert!(n % 2 == 0, "needs a complex structure: even dimension");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let modes2 = mode_list(2, cfg.k_max);
    let mut f = Field::zeros(grid, 1, lie);

    let pairs = n / 2;
    // (component, mode, phase, amps) per pair; normalized across the whole
    // field like draw_modes
    let mut power = 0.0;
    let mut table = Vec::new();
    for _pair in 0..pairs {
        let mut per_comp = Vec::new();
        for _comp in 0..2 {
            let mut list = Vec::with_capacity(modes2.len());
            for k in &modes2 {
                let phase = rng.gen_range(0.0..TAU);
                let amp = gaussian(&mut rng);
                let w = if k.iter().all(|&v| v == 0) {
                    phase.cos().powi(2)
                } else {
                    0.5
                };
                power += w * amp * amp;
                list.push((k.clone(), phase, amp));
            }
            per_comp.push(list);
        }
        table.push(per_comp);
    }
    let scale = if power > 0.0 {
        cfg.amplitude / power.sqrt()
    } else {
        0.0
    };

    let mut coords = vec![0usize; n];
    for site in 0..grid.sites {
        grid.coords_of(site, &mut coords);
        let slot = f.site_mut(site);
        for pair in 0..pairs {
            let (u, v) = (2 * pair, 2 * pair + 1);
            for (c_off, comp_modes) in table[pair].iter().enumerate() {
                let comp = 2 * pair + c_off;
                let mut acc = 0.0;
                for (k, phase, amp) in comp_modes {
                    let angle = phase
                        + TAU * k[0] as f64 * coords[u] as f64 / grid.shape[u] as f64
                        + TAU * k[1] as f64 * coords[v] as f64 / grid.shape[v] as f64;
                    acc += amp * angle.cos();
                }
                slot[comp * lie] = scale * acc;
            }
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryContext;
    use crate::lattice::ops::{curvature, project_alpha};
    use crate::liealg::LieAlgebra;

    #[test]
    fn mode_list_counts() {
        // |k|^2 <= 4 in Z^7: 953 vectors, 476 canonical pairs plus zero
        assert_eq!(mode_list(7, 2).len(), 477);
        // n = 1: k in {0, 1, 2}
        assert_eq!(mode_list(1, 2).len(), 3);
    }

    #[test]
    fn same_continuum_field_on_two_grids() {
        // coarse sites are a subset of fine sites; sampled values must agree
        // exactly there.
        let cfg = BandLimited::default_for_tests(7);
        let g1 = Grid::unit(&[6, 6, 6]);
        let g2 = Grid::unit(&[12, 12, 12]);
        let a1 = band_limited(&g1, 3, &cfg);
        let a2 = band_limited(&g2, 3, &cfg);
        let mut c = vec![0usize; 3];
        for s in 0..g1.sites {
            g1.coords_of(s, &mut c);
            let fine: Vec<usize> = c.iter().map(|&v| 2 * v).collect();
            let s2 = g2.index(&fine);
            for (x, y) in a1.site(s).iter().zip(a2.site(s2)) {
                assert!((x - y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rms_normalization() {
        let cfg = BandLimited::new(2, 0.37, 11);
        let g = Grid::unit(&[16, 16]);
        let a = band_limited(&g, 3, &cfg);
        // discrete mean square is exact for a trigonometric polynomial of
        // bandwidth < N/2
        let ms = a.l2_norm_sq() / g.volume();
        assert!(
            (ms.sqrt() - 0.37).abs() < 1e-12,
            "rms {} vs 0.37",
            ms.sqrt()
        );
    }

    #[test]
    fn subsampled_modes_are_deterministic() {
        let mut cfg = BandLimited::default_for_tests(3);
        cfg.modes = Some(20);
        let g = Grid::unit(&[6, 6, 6, 6, 6, 6, 6]);
        let a = band_limited(&g, 3, &cfg);
        let b = band_limited(&g, 3, &cfg);
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn kahler_ansatz_has_no_plus_one_curvature() {
        let alg = LieAlgebra::su2();
        let ctx = GeometryContext::from_name("kahler3").unwrap();
        let g = Grid::unit(&[8, 8, 8, 8, 8, 8]);
        let a = kahler_compatible(&g, 3, &BandLimited::default_for_tests(23));
        let f = curvature(&alg, &a);
        // eigenvalue order: -1 (su(k)), +1, k-1; the +1 cluster must vanish
        assert!((ctx.split.lambdas[1] - 1.0).abs() < 1e-12);
        let bad = project_alpha(&f, &ctx.split, 1);
        assert!(bad.sup_norm() < 1e-13, "type (2,0) curvature leaked");

        // negative control: a generic connection has O(1) bad part
        let a = band_limited(&g, 3, &BandLimited::default_for_tests(24));
        let f = curvature(&alg, &a);
        let bad = project_alpha(&f, &ctx.split, 1);
        assert!(bad.sup_norm() > 0.05 * f.sup_norm());
    }
}
