//! Stencil operators on lattice fields.
//!
//! Everything is a second-order central difference. The exterior covariant
//! derivative and d_star are exact discrete adjoints of each other (the
//! stencil transpose of a central difference is its negative, and the
//! ad-invariance of the Killing-orthonormal basis handles the bracket
//! terms), which pins every sign in this file.

use rayon::prelude::*;

use super::{DerivativeTable, Field, Grid, PairTable, PAR_CHUNK};
use crate::exterior::eigen::EigenSplit;
use crate::liealg::LieAlgebra;
use std::sync::Arc;

/// Parallel site map writing `per` floats per site. Chunks are fixed-size,
/// so output bytes do not depend on the worker count.
fn par_site_map<F>(grid: &Grid, per: usize, out: &mut [f64], f: F)
where
    F: Fn(usize, &[usize], &mut [f64]) + Sync,
{
    out.par_chunks_mut(per * PAR_CHUNK)
        .enumerate()
        .for_each(|(ci, chunk)| {
            let mut coords = vec![0usize; grid.n];
            let base = ci * PAR_CHUNK;
            for (s, slot) in chunk.chunks_mut(per).enumerate() {
                let site = base + s;
                grid.coords_of(site, &mut coords);
                f(site, &coords, slot);
            }
        });
}

/// F_ij = d_i A_j - d_j A_i + [A_i, A_j].
pub fn curvature(alg: &LieAlgebra, a: &Field) -> Field {
    assert_eq!(a.k, 1);
    let grid = a.grid.clone();
    let lie = a.lie;
    let pt = PairTable::new(grid.n);
    let mut out = Field::zeros(&grid, 2, lie);
    let per = out.per_site();
    par_site_map(&grid, per, &mut out.data, |site, coords, slot| {
        for (c, &(i, j)) in pt.list.iter().enumerate() {
            let xpi = grid.neighbor(site, coords, i, 1);
            let xmi = grid.neighbor(site, coords, i, -1);
            let xpj = grid.neighbor(site, coords, j, 1);
            let xmj = grid.neighbor(site, coords, j, -1);
            let wi = 0.5 / grid.h[i];
            let wj = 0.5 / grid.h[j];
            let aj_p = a.value(xpi, j);
            let aj_m = a.value(xmi, j);
            let ai_p = a.value(xpj, i);
            let ai_m = a.value(xmj, i);
            let dst = &mut slot[c * lie..(c + 1) * lie];
            for l in 0..lie {
                dst[l] = wi * (aj_p[l] - aj_m[l]) - wj * (ai_p[l] - ai_m[l]);
            }
            alg.bracket_acc(1.0, a.value(site, i), a.value(site, j), dst);
        }
    });
    out
}

/// (D*F)_j = -sum_i (d_i F_ij + [A_i, F_ij]).
pub fn d_star(alg: &LieAlgebra, a: &Field, f: &Field) -> Field {
    assert_eq!(a.k, 1);
    assert_eq!(f.k, 2);
    let grid = a.grid.clone();
    let lie = a.lie;
    let pt = PairTable::new(grid.n);
    let mut out = Field::zeros(&grid, 1, lie);
    let per = out.per_site();
    par_site_map(&grid, per, &mut out.data, |site, coords, slot| {
        for j in 0..grid.n {
            let dst = &mut slot[j * lie..(j + 1) * lie];
            for i in 0..grid.n {
                if i == j {
                    continue;
                }
                let (c, sg) = pt.comp(i, j);
                let xp = grid.neighbor(site, coords, i, 1);
                let xm = grid.neighbor(site, coords, i, -1);
                let w = sg * 0.5 / grid.h[i];
                let fp = f.value(xp, c);
                let fm = f.value(xm, c);
                for l in 0..lie {
                    dst[l] -= w * (fp[l] - fm[l]);
                }
                alg.bracket_acc(-sg, a.value(site, i), f.value(site, c), dst);
            }
        }
    });
    out
}

/// Exterior covariant derivative: k-form to (k+1)-form,
/// (Dw)_K = sum_m (-1)^m (d_{K_m} w_{K - K_m} + [A_{K_m}, w_{K - K_m}]).
pub fn cov_d(alg: &LieAlgebra, a: &Field, w: &Field) -> Field {
    assert_eq!(a.k, 1);
    let grid = a.grid.clone();
    let lie = w.lie;
    assert_eq!(a.lie, lie);
    let dt = DerivativeTable::new(grid.n, w.k);
    let mut out = Field::zeros(&grid, w.k + 1, lie);
    let per = out.per_site();
    par_site_map(&grid, per, &mut out.data, |site, coords, slot| {
        for (q, row) in dt.rows.iter().enumerate() {
            let dst = &mut slot[q * lie..(q + 1) * lie];
            for &(axis, sign, sub) in row {
                let xp = grid.neighbor(site, coords, axis, 1);
                let xm = grid.neighbor(site, coords, axis, -1);
                let wgt = sign * 0.5 / grid.h[axis];
                let wp = w.value(xp, sub);
                let wm = w.value(xm, sub);
                for l in 0..lie {
                    dst[l] += wgt * (wp[l] - wm[l]);
                }
                alg.bracket_acc(sign, a.value(site, axis), w.value(site, sub), dst);
            }
        }
    });
    out
}

/// One covariant central difference along `axis`: d_a w + [A_a, w],
/// componentwise on form indices.
fn cov_partial(alg: &LieAlgebra, a: &Field, w: &Field, axis: usize, out: &mut Field) {
    let grid = a.grid.clone();
    let lie = w.lie;
    let comps = w.comps;
    let per = w.per_site();
    let wgt = 0.5 / grid.h[axis];
    par_site_map(&grid, per, &mut out.data, |site, coords, slot| {
        let xp = grid.neighbor(site, coords, axis, 1);
        let xm = grid.neighbor(site, coords, axis, -1);
        let wp = w.site(xp);
        let wm = w.site(xm);
        for v in 0..per {
            slot[v] = wgt * (wp[v] - wm[v]);
        }
        for c in 0..comps {
            alg.bracket_acc(
                1.0,
                a.value(site, axis),
                w.value(site, c),
                &mut slot[c * lie..(c + 1) * lie],
            );
        }
    });
}

/// Rough Laplacian nabla* nabla = -sum_a nabla_a nabla_a with composed
/// covariant central differences (a wide stencil, still O(h^2)). The form
/// degree is untouched: the flat torus has trivial frame holonomy, so the
/// connection only acts on the Lie factor.
pub fn connection_laplacian(alg: &LieAlgebra, a: &Field, w: &Field) -> Field {
    let grid = a.grid.clone();
    let mut out = Field::zeros(&grid, w.k, w.lie);
    let mut first = Field::zeros(&grid, w.k, w.lie);
    let mut second = Field::zeros(&grid, w.k, w.lie);
    for axis in 0..grid.n {
        cov_partial(alg, a, w, axis, &mut first);
        cov_partial(alg, a, &first, axis, &mut second);
        out.axpy(-1.0, &second);
    }
    out
}

/// Hodge Laplacian applied to the curvature: by the Bianchi identity
/// Delta_A F = (D D* + D* D) F reduces to D(D*F) in the continuum; the
/// discrete D*D F remainder is O(h^2) and measured, not dropped silently,
/// in the Weitzenboeck checks.
pub fn hodge_laplacian_on_f(alg: &LieAlgebra, a: &Field, f: &Field) -> Field {
    cov_d(alg, a, &d_star(alg, a, f))
}

/// Pointwise eigenspace projection of a 2-form field.
pub fn project_alpha(f: &Field, split: &EigenSplit, alpha: usize) -> Field {
    assert_eq!(f.k, 2);
    assert_eq!(f.comps, split.dim);
    let grid = f.grid.clone();
    let lie = f.lie;
    let d = split.dim;
    let p = &split.projectors[alpha];
    let mut out = Field::zeros(&grid, 2, lie);
    let per = out.per_site();
    par_site_map(&grid, per, &mut out.data, |site, _, slot| {
        let src = f.site(site);
        for r in 0..d {
            let row = &p[r * d..(r + 1) * d];
            let dst = &mut slot[r * lie..(r + 1) * lie];
            for c in 0..d {
                let pc = row[c];
                if pc == 0.0 {
                    continue;
                }
                let sv = &src[c * lie..(c + 1) * lie];
                for l in 0..lie {
                    dst[l] += pc * sv[l];
                }
            }
        }
    });
    out
}

/// Per-site n x n real tensor field.
#[derive(Debug, Clone)]
pub struct StressField {
    pub grid: Arc<Grid>,
    pub n: usize,
    pub data: Vec<f64>,
}

impl StressField {
    pub fn zeros(grid: &Arc<Grid>) -> StressField {
        StressField {
            grid: grid.clone(),
            n: grid.n,
            data: vec![0.0; grid.sites * grid.n * grid.n],
        }
    }

    #[inline]
    pub fn at(&self, site: usize) -> &[f64] {
        let p = self.n * self.n;
        &self.data[site * p..(site + 1) * p]
    }
}

#[inline]
fn lie_dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// S_ij = sum_k <F_ik, F_jk> - (1/4) delta_ij sum_{k,l} <F_kl, F_kl>, all
/// contractions full (unsorted) sums; the trace part is half the sorted
/// pointwise norm. Symmetric; vanishes on (anti)self-dual fields in n = 4.
pub fn stress_energy(f: &Field) -> StressField {
    assert_eq!(f.k, 2);
    let grid = f.grid.clone();
    let n = grid.n;
    let pt = PairTable::new(n);
    let mut out = StressField::zeros(&grid);
    let per = n * n;
    par_site_map(&grid, per, &mut out.data, |site, _, slot| {
        let nf2 = f.norm_sq_at(site);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    let (ci, si) = pt.comp(i, k);
                    let (cj, sj) = pt.comp(j, k);
                    acc += si * sj * lie_dot(f.value(site, ci), f.value(site, cj));
                }
                if i == j {
                    acc -= 0.5 * nf2;
                }
                slot[i * n + j] = acc;
                slot[j * n + i] = acc;
            }
        }
    });
    out
}

/// Per-eigenspace pieces S~^alpha_ij = sum_k <F^alpha_ik, F_jk>
/// - (1/4) delta_ij (full) |F^alpha|^2. Not symmetric individually; they sum
/// to S exactly.
pub fn stress_components(f: &Field, split: &EigenSplit) -> Vec<StressField> {
    assert_eq!(f.k, 2);
    let grid = f.grid.clone();
    let n = grid.n;
    let pt = PairTable::new(n);
    let mut parts = Vec::with_capacity(split.lambdas.len());
    for alpha in 0..split.lambdas.len() {
        let fa = project_alpha(f, split, alpha);
        let mut out = StressField::zeros(&grid);
        let per = n * n;
        par_site_map(&grid, per, &mut out.data, |site, _, slot| {
            let na2 = fa.norm_sq_at(site);
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        if k == i || k == j {
                            continue;
                        }
                        let (ci, si) = pt.comp(i, k);
                        let (cj, sj) = pt.comp(j, k);
                        acc += si * sj * lie_dot(fa.value(site, ci), f.value(site, cj));
                    }
                    if i == j {
                        acc -= 0.5 * na2;
                    }
                    slot[i * n + j] = acc;
                }
            }
        });
        parts.push(out);
    }
    parts
}

/// (div S)_j = sum_i d_i S_ij, central differences; a real covector field.
pub fn stress_divergence(s: &StressField) -> Field {
    let grid = s.grid.clone();
    let n = grid.n;
    let mut out = Field::zeros(&grid, 1, 1);
    par_site_map(&grid, n, &mut out.data, |site, coords, slot| {
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                let xp = grid.neighbor(site, coords, i, 1);
                let xm = grid.neighbor(site, coords, i, -1);
                acc += (s.at(xp)[i * n + j] - s.at(xm)[i * n + j]) * 0.5 / grid.h[i];
            }
            slot[j] = acc;
        }
    });
    out
}

/// Per-site rotation matrices acting on the adjoint coordinates (su(2) in
/// the T-basis: the group is SO(3)).
#[derive(Debug, Clone)]
pub struct RotationField {
    pub grid: Arc<Grid>,
    pub data: Vec<f64>,
}

impl RotationField {
    pub fn identity(grid: &Arc<Grid>) -> RotationField {
        let mut r = RotationField {
            grid: grid.clone(),
            data: vec![0.0; grid.sites * 9],
        };
        for s in 0..grid.sites {
            r.data[s * 9] = 1.0;
            r.data[s * 9 + 4] = 1.0;
            r.data[s * 9 + 8] = 1.0;
        }
        r
    }

    #[inline]
    pub fn mat(&self, site: usize) -> &[f64] {
        &self.data[site * 9..site * 9 + 9]
    }
}

/// Rodrigues formula for the rotation exp(hat(w)).
pub fn rodrigues(w: &[f64; 3]) -> [f64; 9] {
    let th2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let th = th2.sqrt();
    let (c1, c2) = if th < 1e-6 {
        (1.0 - th2 / 6.0, 0.5 - th2 / 24.0)
    } else {
        (th.sin() / th, (1.0 - th.cos()) / th2)
    };
    let hat = [
        0.0, -w[2], w[1], //
        w[2], 0.0, -w[0], //
        -w[1], w[0], 0.0,
    ];
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            let mut h2 = 0.0;
            for m in 0..3 {
                h2 += hat[r * 3 + m] * hat[m * 3 + c];
            }
            out[r * 3 + c] =
                if r == c { 1.0 } else { 0.0 } + c1 * hat[r * 3 + c] + c2 * h2;
        }
    }
    out
}

/// Gauge transform in adjoint coordinates: A_i -> R A_i - v_i, where
/// hat(v_i) is the antisymmetric part of (d_i R) R^T. Central differences on
/// R make the inhomogeneous term O(h^2)-accurate; a constant R transforms
/// exactly.
pub fn gauge_transform(a: &Field, rot: &RotationField) -> Field {
    assert_eq!(a.k, 1);
    assert_eq!(a.lie, 3, "adjoint SO(3) action is su(2)-specific");
    let grid = a.grid.clone();
    let n = grid.n;
    let mut out = Field::zeros(&grid, 1, 3);
    let per = out.per_site();
    par_site_map(&grid, per, &mut out.data, |site, coords, slot| {
        let r = rot.mat(site);
        for i in 0..n {
            let src = a.value(site, i);
            let dst = &mut slot[i * 3..(i + 1) * 3];
            for row in 0..3 {
                dst[row] = r[row * 3] * src[0] + r[row * 3 + 1] * src[1] + r[row * 3 + 2] * src[2];
            }
            let xp = grid.neighbor(site, coords, i, 1);
            let xm = grid.neighbor(site, coords, i, -1);
            let rp = rot.mat(xp);
            let rm = rot.mat(xm);
            let w = 0.5 / grid.h[i];
            // m = (d_i R) R^T
            let mut m = [0.0f64; 9];
            for row in 0..3 {
                for col in 0..3 {
                    let mut acc = 0.0;
                    for t in 0..3 {
                        acc += w * (rp[row * 3 + t] - rm[row * 3 + t]) * r[col * 3 + t];
                    }
                    m[row * 3 + col] = acc;
                }
            }
            dst[0] -= 0.5 * (m[7] - m[5]);
            dst[1] -= 0.5 * (m[2] - m[6]);
            dst[2] -= 0.5 * (m[3] - m[1]);
        }
    });
    out
}

/// Rotate every component of an ad-valued field pointwise (the adjoint
/// action on curvature).
pub fn rotate_field(f: &Field, rot: &RotationField) -> Field {
    assert_eq!(f.lie, 3);
    let grid = f.grid.clone();
    let comps = f.comps;
    let mut out = Field::zeros(&grid, f.k, 3);
    let per = out.per_site();
    par_site_map(&grid, per, &mut out.data, |site, _, slot| {
        let r = rot.mat(site);
        for c in 0..comps {
            let src = f.value(site, c);
            let dst = &mut slot[c * 3..(c + 1) * 3];
            for row in 0..3 {
                dst[row] = r[row * 3] * src[0] + r[row * 3 + 1] * src[1] + r[row * 3 + 2] * src[2];
            }
        }
    });
    out
}

/// Energy summary of a curvature field under an eigenspace splitting.
#[derive(Debug, Clone)]
pub struct EnergyRecord {
    /// (1/2) integral of |F|^2.
    pub total: f64,
    /// ||F^alpha||^2 in L^2, aligned with the split's clusters.
    pub per_alpha: Vec<f64>,
    /// sup |F|.
    pub sup_f: f64,
    /// sup |F^+| with F^+ = sum of all clusters except beta.
    pub sup_f_plus: f64,
}

/// beta is the distinguished cluster (default 0: the instanton eigenvalue
/// -1), so sup_f_plus tracks K(t) = sup|F^+| and vanishes on instantons.
pub fn energies(f: &Field, split: &EigenSplit, beta: usize) -> EnergyRecord {
    assert_eq!(f.k, 2);
    assert_eq!(f.comps, split.dim);
    let grid = f.grid.clone();
    let lie = f.lie;
    let d = split.dim;
    let nclusters = split.lambdas.len();
    let cell = grid.cell_volume();
    let pb = &split.projectors[beta];

    let per = f.per_site();
    let chunks: Vec<(f64, Vec<f64>, f64, f64)> = f
        .data
        .par_chunks(per * PAR_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let base = ci * PAR_CHUNK;
            let mut tot = 0.0;
            let mut pa = vec![0.0; nclusters];
            let mut supf: f64 = 0.0;
            let mut supp: f64 = 0.0;
            let mut proj = vec![0.0; d];
            let mut comp = vec![0.0; d];
            for (s, sitev) in chunk.chunks(per).enumerate() {
                let _site = base + s;
                let n2 = sitev.iter().map(|v| v * v).sum::<f64>();
                tot += n2;
                supf = supf.max(n2);
                let mut plus2 = 0.0;
                for l in 0..lie {
                    for c in 0..d {
                        comp[c] = sitev[c * lie + l];
                    }
                    for alpha in 0..nclusters {
                        let p = &split.projectors[alpha];
                        let mut acc2 = 0.0;
                        for r in 0..d {
                            let row = &p[r * d..(r + 1) * d];
                            let mut acc = 0.0;
                            for c in 0..d {
                                acc += row[c] * comp[c];
                            }
                            acc2 += acc * acc;
                        }
                        pa[alpha] += acc2;
                    }
                    // F^+ = F - P_beta F pointwise
                    for r in 0..d {
                        let row = &pb[r * d..(r + 1) * d];
                        let mut acc = 0.0;
                        for c in 0..d {
                            acc += row[c] * comp[c];
                        }
                        proj[r] = comp[r] - acc;
                    }
                    plus2 += proj.iter().map(|v| v * v).sum::<f64>();
                }
                supp = supp.max(plus2);
            }
            (tot, pa, supf, supp)
        })
        .collect();

    let mut total = 0.0;
    let mut per_alpha = vec![0.0; nclusters];
    let mut sup_f: f64 = 0.0;
    let mut sup_f_plus: f64 = 0.0;
    for (t, pa, sf, sp) in chunks {
        total += t;
        for (acc, v) in per_alpha.iter_mut().zip(pa) {
            *acc += v;
        }
        sup_f = sup_f.max(sf);
        sup_f_plus = sup_f_plus.max(sp);
    }
    EnergyRecord {
        total: 0.5 * cell * total,
        per_alpha: per_alpha.into_iter().map(|v| cell * v).collect(),
        sup_f: sup_f.sqrt(),
        sup_f_plus: sup_f_plus.sqrt(),
    }
}

/// Riemann sum of the n-form <F ^ F> ^ Psi. The pointwise coefficient is
/// the quadratic form sum_{I,J} L_IJ <F_I, F_J> with L the matrix of
/// star(. ^ Psi), built directly from Psi by wedge and star (independent of
/// any eigendecomposition).
pub fn chern_weil(f: &Field, lpsi: &[f64]) -> f64 {
    assert_eq!(f.k, 2);
    let d = f.comps;
    assert_eq!(lpsi.len(), d * d);
    let lie = f.lie;
    let cell = f.grid.cell_volume();
    let per = f.per_site();
    let partials: Vec<f64> = f
        .data
        .par_chunks(per * PAR_CHUNK)
        .map(|chunk| {
            let mut acc = 0.0;
            for sitev in chunk.chunks(per) {
                for i in 0..d {
                    let li = &lpsi[i * d..(i + 1) * d];
                    let vi = &sitev[i * lie..(i + 1) * lie];
                    for j in 0..d {
                        let w = li[j];
                        if w == 0.0 {
                            continue;
                        }
                        let vj = &sitev[j * lie..(j + 1) * lie];
                        acc += w * lie_dot(vi, vj);
                    }
                }
            }
            acc
        })
        .collect();
    cell * partials.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryContext;
    use crate::lattice::init;
    use crate::lattice::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn su2() -> LieAlgebra {
        LieAlgebra::su2()
    }

    fn random_field(grid: &Arc<Grid>, k: usize, lie: usize, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::zeros(grid, k, lie);
        for v in &mut f.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        f
    }

    /// A_1 = c sin(2 pi x_2 / L) T_1 on a 4-torus.
    fn abelian_mode(grid: &Arc<Grid>, c: f64) -> Field {
        let mut a = Field::zeros(grid, 1, 3);
        let mut coords = vec![0usize; grid.n];
        for s in 0..grid.sites {
            grid.coords_of(s, &mut coords);
            let x2 = coords[2] as f64 * grid.h[2];
            a.site_mut(s)[1 * 3 + 1] = c * (TAU * x2 / grid.periods[2]).sin();
        }
        a
    }

    #[test]
    fn zero_and_constant_connections() {
        let alg = su2();
        let g = Grid::unit(&[5, 4, 4]);
        let a = Field::zeros(&g, 1, 3);
        let f = curvature(&alg, &a);
        assert_eq!(f.l2_norm_sq(), 0.0);

        // constant A: F_ij = [A_i, A_j] exactly
        let mut a = Field::zeros(&g, 1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let consts: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for s in 0..g.sites {
            a.site_mut(s).copy_from_slice(&consts);
        }
        let f = curvature(&alg, &a);
        let pt = PairTable::new(3);
        for s in [0, g.sites / 2] {
            for (c, &(i, j)) in pt.list.iter().enumerate() {
                let mut want = vec![0.0; 3];
                alg.bracket_acc(1.0, &consts[i * 3..i * 3 + 3], &consts[j * 3..j * 3 + 3], &mut want);
                for l in 0..3 {
                    assert!((f.value(s, c)[l] - want[l]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn abelian_mode_frozen_values_and_order() {
        let alg = su2();
        let c = 0.7;
        let mut sup_errs = Vec::new();
        let mut dstar_errs = Vec::new();
        for nn in [8usize, 16] {
            let g = Grid::unit(&[nn, nn, nn, nn]);
            let a = abelian_mode(&g, c);
            let f = curvature(&alg, &a);
            let s = d_star(&alg, &a, &f);
            let pt = PairTable::new(4);
            let (c12, _) = pt.comp(1, 2);
            let mut coords = vec![0usize; 4];
            let mut ef: f64 = 0.0;
            let mut es: f64 = 0.0;
            for site in 0..g.sites {
                g.coords_of(site, &mut coords);
                let x2 = coords[2] as f64 * g.h[2];
                let want_f = -c * TAU * (TAU * x2).cos();
                ef = ef.max((f.value(site, c12)[1] - want_f).abs());
                // derived sign: the mode is a decaying heat mode, so
                // D*F = (2 pi / L)^2 A on it, with a plus sign.
                let want_s = c * TAU * TAU * (TAU * x2).sin();
                es = es.max((s.value(site, 1)[1] - want_s).abs());
                for l in [0usize, 2] {
                    assert_eq!(f.value(site, c12)[l], 0.0);
                    assert_eq!(s.value(site, 1)[l], 0.0);
                }
            }
            sup_errs.push(ef);
            dstar_errs.push(es);
        }
        let order_f = (sup_errs[0] / sup_errs[1]).log2();
        let order_s = (dstar_errs[0] / dstar_errs[1]).log2();
        assert!(order_f >= 1.9, "curvature order {order_f}");
        assert!(order_s >= 1.9, "d_star order {order_s}");
    }

    #[test]
    fn laplacian_fourier_mode_order() {
        let alg = su2();
        let mut errs = Vec::new();
        for nn in [8usize, 16] {
            let g = Grid::unit(&[nn, nn, nn, nn]);
            let a = Field::zeros(&g, 1, 3);
            let mut w = Field::zeros(&g, 2, 3);
            let pt = PairTable::new(4);
            let (c23, _) = pt.comp(2, 3);
            let mut coords = vec![0usize; 4];
            for s in 0..g.sites {
                g.coords_of(s, &mut coords);
                let x1 = coords[1] as f64 * g.h[1];
                w.site_mut(s)[c23 * 3 + 1] = (TAU * x1).sin();
            }
            let lw = connection_laplacian(&alg, &a, &w);
            let mut err: f64 = 0.0;
            for s in 0..g.sites {
                g.coords_of(s, &mut coords);
                let x1 = coords[1] as f64 * g.h[1];
                let want = TAU * TAU * (TAU * x1).sin();
                err = err.max((lw.value(s, c23)[1] - want).abs());
            }
            errs.push(err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 1.9, "laplacian order {order}");
    }

    #[test]
    fn discrete_bianchi_abelian_exact_nonabelian_h2() {
        let alg = su2();
        // abelian: D(dA) = dd A = 0 exactly (central differences commute)
        let g = Grid::unit(&[6, 6, 6, 6]);
        let a = abelian_mode(&g, 0.9);
        let f = curvature(&alg, &a);
        let df = cov_d(&alg, &a, &f);
        assert!(df.sup_norm() < 1e-13);

        // nonabelian: O(h^2) from the product rule. Wavenumber-1 data keeps
        // the quadratic products resolved on the coarse grid.
        let mut resid = Vec::new();
        for nn in [8usize, 16] {
            let g = Grid::unit(&[nn, nn, nn, nn]);
            let a = init::band_limited(&g, 3, &init::BandLimited::new(1, 1.0, 11));
            let f = curvature(&alg, &a);
            let df = cov_d(&alg, &a, &f);
            resid.push(df.l2_norm());
        }
        let ratio = resid[0] / resid[1];
        assert!(ratio >= 3.0, "bianchi refinement ratio {ratio}");
    }

    #[test]
    fn cov_d_and_d_star_are_exact_adjoints() {
        let alg = su2();
        let g = Grid::new(&[5, 4, 6, 4], &[1.0, 0.8, 1.3, 1.0]);
        let a = random_field(&g, 1, 3, 21);
        let w = random_field(&g, 1, 3, 22);
        let f = random_field(&g, 2, 3, 23);
        let lhs = cov_d(&alg, &a, &w).l2_dot(&f);
        let rhs = w.l2_dot(&d_star(&alg, &a, &f));
        let scale = w.l2_norm() * f.l2_norm();
        assert!(
            (lhs - rhs).abs() < 1e-12 * scale,
            "adjointness broken: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn connection_laplacian_self_adjoint_nonnegative() {
        let alg = su2();
        let g = Grid::new(&[4, 5, 4], &[1.0, 1.0, 0.7]);
        let a = random_field(&g, 1, 3, 31);
        for k in [0usize, 1, 2] {
            let u = random_field(&g, k, 3, 40 + k as u64);
            let v = random_field(&g, k, 3, 50 + k as u64);
            let lu = connection_laplacian(&alg, &a, &u);
            let lv = connection_laplacian(&alg, &a, &v);
            let scale = u.l2_norm() * v.l2_norm();
            assert!((lu.l2_dot(&v) - u.l2_dot(&lv)).abs() < 1e-11 * scale);
            assert!(lu.l2_dot(&u) >= -1e-12 * u.l2_norm_sq());
        }
    }

    #[test]
    fn gauge_covariance() {
        let alg = su2();
        // constant rotation: exact conjugation
        let g = Grid::unit(&[6, 6, 6, 6]);
        let a = init::band_limited(&g, 3, &init::BandLimited::default_for_tests(61));
        let f = curvature(&alg, &a);
        let mut rot = RotationField::identity(&g);
        let r = rodrigues(&[0.3, -1.1, 0.7]);
        for s in 0..g.sites {
            rot.data[s * 9..s * 9 + 9].copy_from_slice(&r);
        }
        let at = gauge_transform(&a, &rot);
        let ft = curvature(&alg, &at);
        let want = rotate_field(&f, &rot);
        let mut diff = ft.clone();
        diff.axpy(-1.0, &want);
        assert!(diff.sup_norm() < 1e-12);
        assert!((ft.l2_norm_sq() - f.l2_norm_sq()).abs() < 1e-12 * f.l2_norm_sq());

        // smooth rotation: covariant to O(h^2)
        let mut errs = Vec::new();
        for nn in [8usize, 16] {
            let g = Grid::unit(&[nn, nn, nn, nn]);
            let a = init::band_limited(&g, 3, &init::BandLimited::new(1, 1.0, 62));
            let rot = init::so3_rotation_field(&g, 0.8, 63);
            let f = curvature(&alg, &a);
            let at = gauge_transform(&a, &rot);
            let ft = curvature(&alg, &at);
            let mut diff = ft.clone();
            diff.axpy(-1.0, &rotate_field(&f, &rot));
            errs.push(diff.l2_norm());
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio >= 3.0, "gauge covariance ratio {ratio}");
    }

    #[test]
    fn stress_vanishes_on_self_dual_and_splits() {
        let g = Grid::unit(&[4, 4, 4, 4]);
        let mut f = Field::zeros(&g, 2, 3);
        let pt = PairTable::new(4);
        let (c12, _) = pt.comp(0, 1);
        let (c34, _) = pt.comp(2, 3);
        for s in 0..g.sites {
            f.site_mut(s)[c12 * 3] = 1.0;
            f.site_mut(s)[c34 * 3] = 1.0;
        }
        let s = stress_energy(&f);
        for v in s.at(0) {
            assert!(v.abs() < 1e-14);
        }

        // S = sum_alpha S~^alpha exactly, S symmetric
        let ctx = GeometryContext::from_name("four").unwrap();
        let f = random_field(&g, 2, 3, 71);
        let s = stress_energy(&f);
        let parts = stress_components(&f, &ctx.split);
        for site in [0usize, 17, g.sites - 1] {
            let sv = s.at(site);
            for i in 0..4 {
                for j in 0..4 {
                    assert!((sv[i * 4 + j] - sv[j * 4 + i]).abs() < 1e-13);
                    let got: f64 = parts.iter().map(|p| p.at(site)[i * 4 + j]).sum();
                    assert!((sv[i * 4 + j] - got).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn stress_divergence_proportionality() {
        // div S = sum_alpha kappa_alpha div S~^alpha. On a four-manifold with
        // beta = 0 this reads div S = 2 div S~^{SD}, and it holds pointwise:
        // S~^{SD} - S~^{ASD} contracts F against *F, which is pure trace and
        // cancels against the quarter-trace term. So the discrete residual is
        // rounding noise, not O(h^2).
        let alg = su2();
        let ctx = GeometryContext::from_name("four").unwrap();
        let kappas = ctx.split.kappas(0);
        let g = Grid::unit(&[12, 12, 12, 12]);
        let a = init::band_limited(&g, 3, &init::BandLimited::new(1, 1.0, 81));
        let f = curvature(&alg, &a);
        let div_s = stress_divergence(&stress_energy(&f));
        let parts = stress_components(&f, &ctx.split);
        let mut r = div_s.clone();
        for (alpha, p) in parts.iter().enumerate() {
            r.axpy(-kappas[alpha], &stress_divergence(p));
        }
        assert!(r.l2_norm() <= 1e-12 * div_s.l2_norm());
    }

    #[test]
    fn energy_record_and_pythagoras() {
        let ctx = GeometryContext::from_name("four").unwrap();
        let g = Grid::unit(&[4, 4, 4, 4]);
        let mut f = Field::zeros(&g, 2, 3);
        for s in 0..g.sites {
            f.site_mut(s)[0] = 1.0; // e^{01} T_0
        }
        let rec = energies(&f, &ctx.split, 0);
        assert!((rec.total - 0.5).abs() < 1e-13);
        assert!((rec.sup_f - 1.0).abs() < 1e-13);

        let g7 = Grid::unit(&[4, 4, 4, 4, 4, 4, 4]);
        let ctx7 = GeometryContext::from_name("g2").unwrap();
        let f = random_field(&g7, 2, 3, 91);
        let rec = energies(&f, &ctx7.split, 0);
        let sum: f64 = rec.per_alpha.iter().sum();
        assert!((sum - f.l2_norm_sq()).abs() < 1e-12 * f.l2_norm_sq());
        assert!(rec.sup_f_plus <= rec.sup_f + 1e-14);
    }

    #[test]
    fn chern_weil_matches_weighted_component_norms() {
        use crate::exterior::eigen::lpsi_matrix;
        let ctx = GeometryContext::from_name("g2").unwrap();
        let lm = lpsi_matrix(&ctx.psi);
        let g = Grid::unit(&[4, 4, 4, 4, 4, 4, 4]);
        let f = random_field(&g, 2, 3, 101);
        let cw = chern_weil(&f, &lm);
        let rec = energies(&f, &ctx.split, 0);
        let want: f64 = rec
            .per_alpha
            .iter()
            .zip(&ctx.split.lambdas)
            .map(|(n2, l)| l * n2)
            .sum();
        assert!(
            (cw - want).abs() < 1e-10 * want.abs().max(1.0),
            "chern-weil {cw} vs weighted norms {want}"
        );
        let zero = Field::zeros(&g, 2, 3);
        assert_eq!(chern_weil(&zero, &lm), 0.0);
    }
}

