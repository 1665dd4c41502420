//! Calibration geometries on flat tori, one per holonomy family:
//!
//! * `four`           n = 4,  Psi = 1                       (star itself)
//! * `kahler{k}`      n = 2k, Psi = omega^{k-2} / (k-2)!
//! * `quatkahler{k}`  n = 4k, Psi = Omega^{k-1} / (2k-1)!,  Omega = sum omega_i ^ omega_i
//! * `g2`             n = 7,  Psi = phi
//! * `spin7`          n = 8,  Psi = Theta = psi - phi ^ e^7
//!
//! Each family knows the exact eigenvalue spectrum of w |-> star(w ^ Psi) on
//! 2-forms; `GeometryContext::new` builds the splitting numerically and
//! refuses to hand out a context whose spectrum does not match, which is the
//! main guard against a miscopied calibration form.

use crate::exterior::{eigen_split, lpsi_matrix, rank, EigenSplit, KForm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug)]
pub enum GeomError {
    UnknownFamily(String),
    BadParameter(String),
    Eigen(crate::exterior::eigen::EigenError),
    SpectrumMismatch {
        family: String,
        expected: Vec<(f64, usize)>,
        got: Vec<(f64, usize)>,
    },
}

impl std::fmt::Display for GeomError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeomError::UnknownFamily(s) => write!(
                f,
                "unknown geometry '{s}' (expected one of: {})",
                FAMILY_TEMPLATES.join(", ")
            ),
            GeomError::BadParameter(s) => write!(f, "bad geometry parameter: {s}"),
            GeomError::Eigen(e) => write!(f, "eigen splitting failed: {e}"),
            GeomError::SpectrumMismatch {
                family,
                expected,
                got,
            } => write!(
                f,
                "{family}: eigenvalue spectrum {got:?} does not match expected {expected:?}"
            ),
        }
    }
}

impl std::error::Error for GeomError {}

pub const FAMILY_TEMPLATES: &[&str] = &["four", "kahler<k>", "quatkahler<k>", "g2", "spin7"];

/// One calibration family; implementations are registered in `parse_family`
/// and selected by name at runtime.
pub trait CalibrationFamily: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn calibration(&self) -> KForm;
    /// (eigenvalue, multiplicity), -1 first, then ascending.
    fn expected_spectrum(&self) -> Vec<(f64, usize)>;
}

pub struct FourManifold;

impl CalibrationFamily for FourManifold {
    fn name(&self) -> String {
        "four".into()
    }
    fn dim(&self) -> usize {
        4
    }
    fn calibration(&self) -> KForm {
        KForm::scalar(4, 1.0)
    }
    fn expected_spectrum(&self) -> Vec<(f64, usize)> {
        vec![(-1.0, 3), (1.0, 3)]
    }
}

pub struct Kahler {
    pub k: usize,
}

impl CalibrationFamily for Kahler {
    fn name(&self) -> String {
        format!("kahler{}", self.k)
    }
    fn dim(&self) -> usize {
        2 * self.k
    }
    fn calibration(&self) -> KForm {
        let k = self.k;
        let omega = kahler_omega(k);
        let mut psi = KForm::scalar(2 * k, 1.0);
        for _ in 0..k - 2 {
            psi = psi.wedge(&omega);
        }
        psi.scale(1.0 / factorial(k - 2))
    }
    fn expected_spectrum(&self) -> Vec<(f64, usize)> {
        let k = self.k;
        if k == 2 {
            // the su(2) and trace + (2,0)(0,2) blocks merge at +-1
            return vec![(-1.0, 3), (1.0, 3)];
        }
        vec![
            (-1.0, k * k - 1),
            (1.0, k * (k - 1)),
            ((k - 1) as f64, 1),
        ]
    }
}

pub struct QuatKahler {
    pub k: usize,
}

impl CalibrationFamily for QuatKahler {
    fn name(&self) -> String {
        format!("quatkahler{}", self.k)
    }
    fn dim(&self) -> usize {
        4 * self.k
    }
    fn calibration(&self) -> KForm {
        let k = self.k;
        let [w1, w2, w3] = quaternionic_triple(k);
        let omega = w1.wedge(&w1).add(&w2.wedge(&w2)).add(&w3.wedge(&w3));
        let mut psi = KForm::scalar(4 * k, 1.0);
        for _ in 0..k - 1 {
            psi = psi.wedge(&omega);
        }
        psi.scale(1.0 / factorial(2 * k - 1))
    }
    fn expected_spectrum(&self) -> Vec<(f64, usize)> {
        // sp(k) at -1, its complement in so(4k) minus the sp(1) line bundle
        // at 1/3, and the omega_i span at (2k+1)/3; multiplicities add up to
        // binom(4k, 2).
        let k = self.k;
        vec![
            (-1.0, 2 * k * k + k),
            (1.0 / 3.0, 6 * k * k - 3 * k - 3),
            ((2 * k + 1) as f64 / 3.0, 3),
        ]
    }
}

pub struct G2;

impl CalibrationFamily for G2 {
    fn name(&self) -> String {
        "g2".into()
    }
    fn dim(&self) -> usize {
        7
    }
    fn calibration(&self) -> KForm {
        g2_phi()
    }
    fn expected_spectrum(&self) -> Vec<(f64, usize)> {
        vec![(-1.0, 14), (2.0, 7)]
    }
}

pub struct Spin7;

impl CalibrationFamily for Spin7 {
    fn name(&self) -> String {
        "spin7".into()
    }
    fn dim(&self) -> usize {
        8
    }
    fn calibration(&self) -> KForm {
        spin7_theta()
    }
    fn expected_spectrum(&self) -> Vec<(f64, usize)> {
        vec![(-1.0, 21), (3.0, 7)]
    }
}

/// Registry lookup: "four", "g2", "spin7", "kahler3", "quatkahler2", ...
pub fn parse_family(name: &str) -> Result<Box<dyn CalibrationFamily>, GeomError> {
    match name {
        "four" => return Ok(Box::new(FourManifold)),
        "g2" => return Ok(Box::new(G2)),
        "spin7" => return Ok(Box::new(Spin7)),
        _ => {}
    }
    for (prefix, min_k) in [("quatkahler", 2usize), ("kahler", 2usize)] {
        if let Some(rest) = name.strip_prefix(prefix) {
            let k: usize = rest
                .parse()
                .map_err(|_| GeomError::UnknownFamily(name.to_string()))?;
            if k < min_k || k > 8 {
                return Err(GeomError::BadParameter(format!(
                    "{prefix} index {k} out of range [{min_k}, 8]"
                )));
            }
            return Ok(match prefix {
                "kahler" => Box::new(Kahler { k }),
                _ => Box::new(QuatKahler { k }),
            });
        }
    }
    Err(GeomError::UnknownFamily(name.to_string()))
}

/// A calibration together with its validated 2-form eigenspace splitting.
pub struct GeometryContext {
    pub name: String,
    pub n: usize,
    pub psi: KForm,
    pub split: EigenSplit,
}

impl GeometryContext {
    pub fn new(family: &dyn CalibrationFamily) -> Result<Self, GeomError> {
        let n = family.dim();
        let psi = family.calibration();
        let m = lpsi_matrix(&psi);
        let d = psi_two_form_dim(n);
        let split = eigen_split(&m, d).map_err(GeomError::Eigen)?;
        let expected = family.expected_spectrum();
        let got: Vec<(f64, usize)> = split
            .lambdas
            .iter()
            .cloned()
            .zip(split.multiplicities.iter().cloned())
            .collect();
        let ok = got.len() == expected.len()
            && got
                .iter()
                .zip(&expected)
                .all(|(g, e)| (g.0 - e.0).abs() < 1e-10 && g.1 == e.1);
        if !ok {
            return Err(GeomError::SpectrumMismatch {
                family: family.name(),
                expected,
                got,
            });
        }
        Ok(GeometryContext {
            name: family.name(),
            n,
            psi,
            split,
        })
    }

    pub fn from_name(name: &str) -> Result<Self, GeomError> {
        GeometryContext::new(parse_family(name)?.as_ref())
    }
}

fn psi_two_form_dim(n: usize) -> usize {
    n * (n - 1) / 2
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

/// omega = sum_l e^{2l} ^ e^{2l+1} on R^{2k}.
pub fn kahler_omega(k: usize) -> KForm {
    let n = 2 * k;
    let mut w = KForm::zero(n, 2);
    for l in 0..k {
        w.c[rank(n, &[2 * l as u8, 2 * l as u8 + 1])] = 1.0;
    }
    w
}

/// Standard complex structure on R^{2k}: J e_{2l} = e_{2l+1}. Returns the
/// action on covectors: (J alpha)_i = alpha_j J_{ji}, as a dense n x n map.
pub fn kahler_j_on_covectors(k: usize) -> Vec<f64> {
    let n = 2 * k;
    let mut j = vec![0.0; n * n];
    for l in 0..k {
        // J e_{2l} = e_{2l+1}, J e_{2l+1} = -e_{2l}
        // (J alpha)(v) = -alpha(J v) would be the other convention; we take
        // (J alpha)(v) = alpha(J v), so (J e^{2l}) = -e^{2l+1} ... computed:
        // (J e^{2l})(e_{2l+1}) = e^{2l}(J e_{2l+1}) = e^{2l}(-e_{2l}) = -1
        j[(2 * l + 1) * n + 2 * l] = -1.0;
        j[2 * l * n + 2 * l + 1] = 1.0;
    }
    j
}

/// Hyperkahler triple on R^{4k} from left quaternion multiplication on each
/// block (x0, x1, x2, x3): omega_1 = e^{01} + e^{23}, omega_2 = e^{02} - e^{13},
/// omega_3 = e^{03} + e^{12}, summed over blocks.
pub fn quaternionic_triple(k: usize) -> [KForm; 3] {
    let n = 4 * k;
    let mut w1 = KForm::zero(n, 2);
    let mut w2 = KForm::zero(n, 2);
    let mut w3 = KForm::zero(n, 2);
    for b in 0..k {
        let o = 4 * b as u8;
        w1.c[rank(n, &[o, o + 1])] += 1.0;
        w1.c[rank(n, &[o + 2, o + 3])] += 1.0;
        w2.c[rank(n, &[o, o + 2])] += 1.0;
        w2.c[rank(n, &[o + 1, o + 3])] -= 1.0;
        w3.c[rank(n, &[o, o + 3])] += 1.0;
        w3.c[rank(n, &[o + 1, o + 2])] += 1.0;
    }
    [w1, w2, w3]
}

/// Associative 3-form phi = e^{012} - e^{034} - e^{056} - e^{135} + e^{146}
/// - e^{236} - e^{245} (0-based axes).
pub const PHI_TERMS: [(u8, u8, u8, f64); 7] = [
    (0, 1, 2, 1.0),
    (0, 3, 4, -1.0),
    (0, 5, 6, -1.0),
    (1, 3, 5, -1.0),
    (1, 4, 6, 1.0),
    (2, 3, 6, -1.0),
    (2, 4, 5, -1.0),
];

pub fn g2_phi() -> KForm {
    let mut w = KForm::zero(7, 3);
    for &(i, j, k, s) in PHI_TERMS.iter() {
        w.c[rank(7, &[i, j, k])] = s;
    }
    w
}

/// Coassociative 4-form psi = star(phi).
pub fn g2_psi() -> KForm {
    g2_phi().star()
}

/// Cayley 4-form on R^8 = R^7 x S^1 with the circle as the last axis:
/// Theta = psi + phi ^ e^7. The sign of the circle factor is pinned by the
/// eigenvalue signature {-1: 21, +3: 7}, which `GeometryContext::new` checks;
/// the opposite sign lands on {+1: 21, -3: 7} and is rejected.
pub fn spin7_theta() -> KForm {
    let phi8 = embed(&g2_phi(), 8, 0);
    let psi8 = embed(&g2_psi(), 8, 0);
    let e7 = KForm::basis_element(8, &[7]);
    psi8.add(&phi8.wedge(&e7))
}

/// Reinterpret a form on R^m as a form on R^n (n >= m + offset) with axes
/// shifted up by `offset`.
pub fn embed(w: &KForm, n: usize, offset: u8) -> KForm {
    assert!(w.n + offset as usize <= n);
    let mut out = KForm::zero(n, w.k);
    for (i, idx) in crate::exterior::basis(w.n, w.k).iter().enumerate() {
        if w.c[i] == 0.0 {
            continue;
        }
        let shifted: Vec<u8> = idx.iter().map(|&a| a + offset).collect();
        out.c[rank(n, &shifted)] = w.c[i];
    }
    out
}

/// Largest |Psi(v_1 .. v_m)| over `samples` Gram-Schmidt orthonormalized
/// Gaussian m-frames, m = deg Psi. For a calibration this must stay <= 1.
pub fn comass_max(psi: &KForm, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = psi.n;
    let m = psi.k;
    if m == 0 {
        return psi.c[0].abs();
    }
    let mut best = 0.0f64;
    let mut frame: Vec<Vec<f64>> = vec![vec![0.0; n]; m];
    let mut done = 0usize;
    while done < samples {
        let mut ok = true;
        for a in 0..m {
            for x in frame[a].iter_mut() {
                *x = gaussian(&mut rng);
            }
            for b in 0..a {
                let dot: f64 = frame[a].iter().zip(&frame[b]).map(|(x, y)| x * y).sum();
                let (fa, fb) = {
                    let (lo, hi) = frame.split_at_mut(a);
                    (&mut hi[0], &lo[b])
                };
                for (x, y) in fa.iter_mut().zip(fb) {
                    *x -= dot * y;
                }
            }
            let norm: f64 = frame[a].iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for x in frame[a].iter_mut() {
                *x /= norm;
            }
        }
        if !ok {
            continue;
        }
        best = best.max(psi.eval(&frame).abs());
        done += 1;
    }
    best
}

use crate::util::gaussian;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn spectra_match_all_families() {
        for name in [
            "four",
            "kahler2",
            "kahler3",
            "kahler4",
            "kahler5",
            "quatkahler2",
            "quatkahler3",
            "g2",
            "spin7",
        ] {
            let ctx = GeometryContext::from_name(name)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!((ctx.split.lambdas[0] + 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dstar_proportionality_weights() {
        // kappa_alpha = (lambda_beta - lambda_alpha)/lambda_beta reproduces
        // both normalizations D*F = 3 D*F_7 (beta = 0) and (3/2) D*F_14.
        let g2 = GeometryContext::from_name("g2").unwrap();
        let k0 = g2.split.kappas(0);
        assert!((k0[0] - 0.0).abs() < 1e-12 && (k0[1] - 3.0).abs() < 1e-12);
        let kb = g2.split.kappas(g2.split.beta_max());
        assert!((kb[0] - 1.5).abs() < 1e-12 && (kb[1] - 0.0).abs() < 1e-12);
        assert!((g2.split.kappa_total() - 3.0).abs() < 1e-12);

        let s7 = GeometryContext::from_name("spin7").unwrap();
        assert!((s7.split.kappa_total() - 4.0).abs() < 1e-12);
        let qk = GeometryContext::from_name("quatkahler2").unwrap();
        // 1 + 1/3 plus 1 + 5/3
        assert!((qk.split.kappa_total() - 4.0).abs() < 1e-10);
    }

    #[test]
    fn psi_normalization_examples() {
        // kahler3: Psi = omega itself
        let k3 = Kahler { k: 3 }.calibration();
        assert!(k3.sub(&kahler_omega(3)).norm() < 1e-14);
        // quatkahler2: Psi = Omega / 3!
        let [w1, w2, w3] = quaternionic_triple(2);
        let omega = w1.wedge(&w1).add(&w2.wedge(&w2)).add(&w3.wedge(&w3));
        let q2 = QuatKahler { k: 2 }.calibration();
        assert!(q2.sub(&omega.scale(1.0 / 6.0)).norm() < 1e-14);
    }

    #[test]
    fn coassociative_norm_and_contraction() {
        let psi = g2_psi();
        assert!((psi.norm_sq() - 7.0).abs() < 1e-12);
        // e_0 -| phi = e^{12} - e^{34} - e^{56}
        let mut e0 = vec![0.0; 7];
        e0[0] = 1.0;
        let c = g2_phi().interior(&e0);
        let mut want = KForm::zero(7, 2);
        want.c[rank(7, &[1, 2])] = 1.0;
        want.c[rank(7, &[3, 4])] = -1.0;
        want.c[rank(7, &[5, 6])] = -1.0;
        assert!(c.sub(&want).norm() < 1e-14);
    }

    #[test]
    fn wrong_circle_orientation_breaks_spin7_signature() {
        // Theta' = psi - phi ^ e^7 has spectrum {-3: 7, +1: 21}: no -1 space.
        let phi8 = embed(&g2_phi(), 8, 0);
        let psi8 = embed(&g2_psi(), 8, 0);
        let e7 = KForm::basis_element(8, &[7]);
        let theta_flipped = psi8.sub(&phi8.wedge(&e7));
        let m = lpsi_matrix(&theta_flipped);
        match eigen_split(&m, 28) {
            Err(_) => {}
            Ok(split) => panic!("flipped orientation unexpectedly valid: {:?}", split.lambdas),
        }
    }

    #[test]
    fn instanton_space_closed_under_commutator() {
        // the -1 eigenspace of each family is a Lie subalgebra of so(n)
        for name in ["four", "kahler3", "quatkahler2", "g2", "spin7"] {
            let ctx = GeometryContext::from_name(name).unwrap();
            let n = ctx.n;
            let b2 = crate::exterior::basis(n, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            for _ in 0..20 {
                let mut a = KForm::zero(n, 2);
                let mut b = KForm::zero(n, 2);
                for c in a.c.iter_mut().chain(b.c.iter_mut()) {
                    *c = rng.gen_range(-1.0..1.0);
                }
                let a0 = ctx.split.project_form(0, &a);
                let b0 = ctx.split.project_form(0, &b);
                // matrix commutator of the associated antisymmetric matrices
                let to_mat = |w: &KForm| {
                    let mut m = vec![0.0; n * n];
                    for (i, idx) in b2.iter().enumerate() {
                        let (r, c) = (idx[0] as usize, idx[1] as usize);
                        m[r * n + c] = w.c[i];
                        m[c * n + r] = -w.c[i];
                    }
                    m
                };
                let (ma, mb) = (to_mat(&a0), to_mat(&b0));
                let mut comm = KForm::zero(n, 2);
                for (i, idx) in b2.iter().enumerate() {
                    let (r, c) = (idx[0] as usize, idx[1] as usize);
                    let mut acc = 0.0;
                    for t in 0..n {
                        acc += ma[r * n + t] * mb[t * n + c] - mb[r * n + t] * ma[t * n + c];
                    }
                    comm.c[i] = acc;
                }
                let outside = comm.sub(&ctx.split.project_form(0, &comm));
                assert!(
                    outside.norm() < 1e-10 * (1.0 + comm.norm()),
                    "{name}: commutator leaves the -1 eigenspace by {}",
                    outside.norm()
                );
            }
        }
    }

    #[test]
    fn comass_at_most_one_and_attained() {
        for name in ["kahler3", "quatkahler2", "g2", "spin7"] {
            let ctx = GeometryContext::from_name(name).unwrap();
            let max = comass_max(&ctx.psi, 2000, 4242);
            assert!(max <= 1.0 + 1e-9, "{name}: comass sample {max} > 1");
            assert!(max > 0.2, "{name}: comass sampling suspiciously small");
        }
        // attained on a calibrated plane: phi(e0, e1, e2) = 1
        let phi = g2_phi();
        let frame: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                let mut e = vec![0.0; 7];
                e[i] = 1.0;
                e
            })
            .collect();
        assert!((phi.eval(&frame) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn registry_rejects_unknown_and_out_of_range() {
        assert!(parse_family("kahler1").is_err());
        assert!(parse_family("kahler9").is_err());
        assert!(parse_family("hyperbolic").is_err());
        assert!(parse_family("quatkahler2").is_ok());
    }
}
