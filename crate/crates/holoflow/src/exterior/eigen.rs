//! Eigenspace splitting of the operator w |-> star(w ^ Psi) on 2-forms.
//!
//! For a closed calibrating (n-4)-form Psi the operator is symmetric and
//! traceless on Lambda^2 R^n; its eigenspaces split the 2-forms into the
//! instanton subalgebra (eigenvalue -1) and its complements. Eigenvalues
//! come from a dense symmetric eigendecomposition; the projectors are then
//! rebuilt by Lagrange interpolation in the operator itself, whose accuracy
//! is set by the eigenvalue accuracy rather than by the eigenvector basis
//! (which degrades inside large clusters).

use super::{basis, binomial, KForm};
use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum EigenError {
    /// No eigenvalue cluster within tolerance of -1.
    MissingInstantonEigenvalue { closest: f64 },
    /// Operator matrix is not symmetric to the stated tolerance.
    NotSymmetric { max_asym: f64 },
}

impl std::fmt::Display for EigenError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EigenError::MissingInstantonEigenvalue { closest } => write!(
                f,
                "no eigenvalue within tolerance of -1 (closest was {closest})"
            ),
            EigenError::NotSymmetric { max_asym } => {
                write!(f, "operator matrix asymmetric by {max_asym}")
            }
        }
    }
}

impl std::error::Error for EigenError {}

/// Matrix of w |-> star(w ^ Psi) on the sorted 2-form basis, row-major D x D
/// with D = C(n,2).
pub fn lpsi_matrix(psi: &KForm) -> Vec<f64> {
    let n = psi.n;
    assert_eq!(psi.k, n - 4, "calibration must have degree n - 4");
    let d = binomial(n, 2);
    let b2 = basis(n, 2);
    let mut m = vec![0.0; d * d];
    for (col, idx) in b2.iter().enumerate() {
        let e = KForm::basis_element(n, idx);
        let image = e.wedge(psi).star();
        for row in 0..d {
            m[row * d + col] = image.c[row];
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct EigenSplit {
    /// Form dimension the split lives on (C(n,2)).
    pub dim: usize,
    /// Distinct eigenvalues; index 0 is the instanton eigenvalue -1, the
    /// rest are in ascending order.
    pub lambdas: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// Orthogonal projectors, row-major dim x dim, aligned with `lambdas`.
    pub projectors: Vec<Vec<f64>>,
}

impl EigenSplit {
    /// Apply projector alpha to a coefficient vector (e.g. one Lie component
    /// of an ad-valued 2-form).
    pub fn project(&self, alpha: usize, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let p = &self.projectors[alpha];
        for r in 0..d {
            let mut acc = 0.0;
            let row = &p[r * d..(r + 1) * d];
            for c in 0..d {
                acc += row[c] * x[c];
            }
            out[r] = acc;
        }
    }

    pub fn project_form(&self, alpha: usize, w: &KForm) -> KForm {
        assert_eq!(w.k, 2);
        let mut out = KForm::zero(w.n, 2);
        self.project(alpha, &w.c, &mut out.c);
        out
    }

    /// kappa_alpha = (lambda_beta - lambda_alpha) / lambda_beta for a chosen
    /// cluster index beta with nonzero eigenvalue; kappa_beta = 0 by
    /// construction, and D*F = sum_alpha kappa_alpha D*F^alpha.
    pub fn kappas(&self, beta: usize) -> Vec<f64> {
        let lb = self.lambdas[beta];
        assert!(lb != 0.0, "beta eigenvalue must be nonzero");
        self.lambdas.iter().map(|l| (lb - l) / lb).collect()
    }

    /// Index of the largest positive eigenvalue cluster.
    pub fn beta_max(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.lambdas.iter().enumerate() {
            if l > self.lambdas[best] {
                best = i;
            }
        }
        assert!(self.lambdas[best] > 0.0, "no positive eigenvalue");
        best
    }

    /// Sum of |kappa_alpha| with beta = 0 (the instanton eigenvalue -1), so
    /// kappa_alpha = 1 + lambda_alpha.
    pub fn kappa_total(&self) -> f64 {
        self.kappas(0).iter().map(|k| k.abs()).sum()
    }
}

const CLUSTER_TOL: f64 = 1e-9;

/// Symmetric eigendecomposition of a row-major D x D matrix, clustered into
/// distinct eigenvalues with the -1 eigenspace first.
pub fn eigen_split(matrix: &[f64], dim: usize) -> Result<EigenSplit, EigenError> {
    assert_eq!(matrix.len(), dim * dim);
    let mut max_asym = 0.0f64;
    for r in 0..dim {
        for c in r + 1..dim {
            max_asym = max_asym.max((matrix[r * dim + c] - matrix[c * dim + r]).abs());
        }
    }
    if max_asym > 1e-12 {
        return Err(EigenError::NotSymmetric { max_asym });
    }
    let m = DMatrix::from_row_slice(dim, dim, matrix);
    let se = m.symmetric_eigen();

    // sort eigenpairs by eigenvalue
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());

    // cluster by adjacent gaps
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match clusters.last_mut() {
            Some(cl)
                if (se.eigenvalues[i] - se.eigenvalues[*cl.last().unwrap()]).abs()
                    < CLUSTER_TOL =>
            {
                cl.push(i)
            }
            _ => clusters.push(vec![i]),
        }
    }

    let lambdas: Vec<f64> = clusters
        .iter()
        .map(|cl| cl.iter().map(|&i| se.eigenvalues[i]).sum::<f64>() / cl.len() as f64)
        .collect();

    // P_alpha = prod_{beta != alpha} (M - lambda_beta) / (lambda_alpha -
    // lambda_beta), evaluated on the original matrix. Exact in the cluster
    // eigenvalues, immune to eigenvector mixing inside large clusters.
    let mut entries: Vec<(f64, usize, Vec<f64>)> = Vec::with_capacity(clusters.len());
    for (alpha, cl) in clusters.iter().enumerate() {
        let mut p = vec![0.0; dim * dim];
        for i in 0..dim {
            p[i * dim + i] = 1.0;
        }
        let mut tmp = vec![0.0; dim * dim];
        for (beta, &lb) in lambdas.iter().enumerate() {
            if beta == alpha {
                continue;
            }
            let scale = 1.0 / (lambdas[alpha] - lb);
            for r in 0..dim {
                for c in 0..dim {
                    let mut acc = 0.0;
                    for t in 0..dim {
                        let m_tc = matrix[t * dim + c] - if t == c { lb } else { 0.0 };
                        acc += p[r * dim + t] * m_tc;
                    }
                    tmp[r * dim + c] = acc * scale;
                }
            }
            std::mem::swap(&mut p, &mut tmp);
        }
        entries.push((lambdas[alpha], cl.len(), p));
    }

    let inst = entries
        .iter()
        .position(|(l, _, _)| (l + 1.0).abs() < CLUSTER_TOL)
        .ok_or_else(|| {
            let closest = entries
                .iter()
                .map(|(l, _, _)| *l)
                .min_by(|a, b| (a + 1.0).abs().partial_cmp(&(b + 1.0).abs()).unwrap())
                .unwrap_or(f64::NAN);
            EigenError::MissingInstantonEigenvalue { closest }
        })?;
    entries.swap(0, inst);
    // keep the rest ascending
    entries[1..].sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    Ok(EigenSplit {
        dim,
        lambdas: entries.iter().map(|e| e.0).collect(),
        multiplicities: entries.iter().map(|e| e.1).collect(),
        projectors: entries.into_iter().map(|e| e.2).collect(),
    })
}
