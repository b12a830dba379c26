//! Linear dimensionality reduction: PCA, Fisher LDA, and LDA fitted on the
//! reliability-filtered subset (FLDA).
//!
//! LDA solves `S_b w = lambda (S_w + r I) w` with ridge `r = 1e-4 * tr(S_w) / d`.
//! The pencil is reduced to a symmetric problem by Cholesky whitening:
//! with `S_w + r I = L L^T`, the eigenvectors `v` of `L^-1 S_b L^-T` give the
//! axes `w = L^-T v`, normalized so that `w^T (S_w + r I) w = 1`.
//! Every axis is sign-normalized so its largest-magnitude entry is positive.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reliability::{filter_unreliable, ReliabilityMap};
use crate::store::LabeledDataset;

/// Ridge on the within-class scatter, relative to its mean diagonal.
pub const LDA_RIDGE: f64 = 1e-4;
/// Eigenvalues at or below this fraction of the largest one are treated as zero.
pub const RANK_RTOL: f64 = 1e-10;
/// Largest LDA eigenvalue below which the fit is flagged degenerate.
pub const DEGENERATE_EIGENVALUE: f64 = 1e-10;

pub const EPRJ_MAGIC: &[u8; 4] = b"EPRJ";
pub const EPRJ_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    Pca,
    Lda,
    Flda,
}

impl ProjectionKind {
    fn code(self) -> u16 {
        match self {
            ProjectionKind::Pca => 0,
            ProjectionKind::Lda => 1,
            ProjectionKind::Flda => 2,
        }
    }

    fn from_code(code: u16) -> Result<Self> {
        match code {
            0 => Ok(ProjectionKind::Pca),
            1 => Ok(ProjectionKind::Lda),
            2 => Ok(ProjectionKind::Flda),
            other => Err(Error::Format(format!("unknown projection kind {}", other))),
        }
    }
}

impl fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProjectionKind::Pca => "pca",
            ProjectionKind::Lda => "lda",
            ProjectionKind::Flda => "flda",
        })
    }
}

impl FromStr for ProjectionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(Self::Pca),
            "lda" => Ok(Self::Lda),
            "flda" => Ok(Self::Flda),
            other => Err(Error::validation(format!("unknown projection kind '{}'", other))),
        }
    }
}

/// Fitted affine map `x -> (x - mean) C^T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub kind: ProjectionKind,
    pub mean: Vec<f64>,
    /// `p x d`, row-major; each row is one axis.
    pub components: Vec<f64>,
    pub output_dim: usize,
    pub fit_sample_count: usize,
    /// Eigenvalue of each retained axis (variance for PCA, Fisher ratio for LDA).
    #[serde(default)]
    pub eigenvalues: Vec<f64>,
    /// PCA only: share of total variance per retained axis.
    #[serde(default)]
    pub explained_variance_ratio: Vec<f64>,
    /// PCA returned fewer axes than requested.
    #[serde(default)]
    pub rank_deficient: bool,
    /// LDA found no between-class separation.
    #[serde(default)]
    pub degenerate: bool,
}

impl Projection {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        let d = self.input_dim();
        &self.components[i * d..(i + 1) * d]
    }

    /// EPRJ v1: magic `EPRJ`, version u16, kind u16, p u32, d u32,
    /// fit_sample_count u64, mean (d x f64), components (p x d x f64), all
    /// little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.input_dim();
        let mut out = Vec::with_capacity(28 + 8 * (d + self.components.len()));
        out.extend_from_slice(EPRJ_MAGIC);
        out.extend_from_slice(&EPRJ_VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind.code().to_le_bytes());
        out.extend_from_slice(&(self.output_dim as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(self.fit_sample_count as u64).to_le_bytes());
        for v in self.mean.iter().chain(&self.components) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Inverse of [`to_bytes`](Self::to_bytes). Eigenvalues and flags are not
    /// part of the binary block and come back empty.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != EPRJ_MAGIC {
            return Err(Error::Format("missing EPRJ magic".into()));
        }
        if bytes.len() < 28 {
            return Err(Error::Corruption("EPRJ header truncated".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != EPRJ_VERSION {
            return Err(Error::Format(format!("unsupported EPRJ version {}", version)));
        }
        let kind = ProjectionKind::from_code(u16::from_le_bytes([bytes[6], bytes[7]]))?;
        let p = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let fit = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let body = &bytes[24..];
        let expected = (d + p * d) * 8;
        if body.len() != expected {
            return Err(Error::Corruption(format!(
                "expected {} EPRJ payload bytes, found {}",
                expected,
                body.len()
            )));
        }
        let vals: Vec<f64> = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        Ok(Self {
            kind,
            mean: vals[..d].to_vec(),
            components: vals[d..].to_vec(),
            output_dim: p,
            fit_sample_count: fit,
            eigenvalues: Vec::new(),
            explained_variance_ratio: Vec::new(),
            rank_deficient: false,
            degenerate: false,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }
}

fn data_matrix(data: &LabeledDataset) -> DMatrix<f64> {
    DMatrix::from_row_iterator(data.len(), data.dim(), data.embeddings().iter().map(|&v| v as f64))
}

fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

fn center(x: &mut DMatrix<f64>, mean: &DVector<f64>) {
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }
}

/// Flips `axis` so its largest-magnitude entry (first one on ties) is positive.
fn sign_normalize(axis: &mut [f64]) {
    let mut best = 0;
    for (i, v) in axis.iter().enumerate() {
        if v.abs() > axis[best].abs() {
            best = i;
        }
    }
    if axis[best] < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Eigenpairs sorted by descending eigenvalue.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Principal axes of the sample covariance.
pub fn fit_pca(train: &LabeledDataset, n_components: usize) -> Result<Projection> {
    let (n, d) = (train.len(), train.dim());
    if n_components == 0 || n < 2 || n_components > (n - 1).min(d) {
        return Err(Error::validation(format!(
            "n_components = {} must lie in [1, min(n - 1, d)] = [1, {}]",
            n_components,
            n.saturating_sub(1).min(d)
        )));
    }
    let mut x = data_matrix(train);
    let mean = column_mean(&x);
    center(&mut x, &mean);
    let cov = (x.transpose() * &x) / (n as f64 - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;
    let (values, vectors) = sorted_eigen(cov);
    let top = values[0].max(0.0);
    let total: f64 = values.iter().filter(|&&v| v > 0.0).sum();
    let rank = values.iter().take_while(|&&v| v > RANK_RTOL * top && v > 0.0).count();
    let p = n_components.min(rank);
    let mut components = Vec::with_capacity(p * d);
    for c in 0..p {
        let mut axis: Vec<f64> = vectors.column(c).iter().copied().collect();
        sign_normalize(&mut axis);
        components.extend(axis);
    }
    let eigenvalues: Vec<f64> = values[..p].to_vec();
    let explained_variance_ratio = eigenvalues.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect();
    Ok(Projection {
        kind: ProjectionKind::Pca,
        mean: mean.iter().copied().collect(),
        components,
        output_dim: p,
        fit_sample_count: n,
        eigenvalues,
        explained_variance_ratio,
        rank_deficient: p < n_components,
        degenerate: false,
    })
}

/// Within-class and between-class scatter plus the global mean.
pub(crate) fn scatter_matrices(train: &LabeledDataset) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, Vec<usize>) {
    let d = train.dim();
    let counts = train.class_counts();
    let mut sums = vec![DVector::<f64>::zeros(d); train.num_classes()];
    for i in 0..train.len() {
        let s = &mut sums[train.labels()[i] as usize];
        for (acc, &v) in s.iter_mut().zip(train.row(i)) {
            *acc += v as f64;
        }
    }
    let class_means: Vec<DVector<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { s })
        .collect();
    let mut x = data_matrix(train);
    let global = column_mean(&x);
    for (i, mut row) in x.row_iter_mut().enumerate() {
        row -= class_means[train.labels()[i] as usize].transpose();
    }
    let within = x.transpose() * &x;
    let mut between = DMatrix::zeros(d, d);
    for (m, &c) in class_means.iter().zip(&counts) {
        if c > 0 {
            let diff = m - &global;
            between += (&diff * diff.transpose()) * c as f64;
        }
    }
    (within, between, global, counts)
}

/// Fisher discriminant axes, at most `C_present - 1` of them.
pub fn fit_lda(train: &LabeledDataset) -> Result<Projection> {
    lda(train, ProjectionKind::Lda)
}

fn lda(train: &LabeledDataset, kind: ProjectionKind) -> Result<Projection> {
    let d = train.dim();
    let counts = train.class_counts();
    let present: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
    if present.len() < 2 {
        return Err(Error::validation(format!(
            "LDA needs at least 2 classes, found {}",
            present.len()
        )));
    }
    if let Some(&c) = present.iter().find(|&&c| counts[c] < 2) {
        return Err(Error::validation(format!("class {} has a single sample; LDA needs 2 per class", c)));
    }
    let (within, between, global, _) = scatter_matrices(train);
    let within = (&within + within.transpose()) * 0.5;
    let between = (&between + between.transpose()) * 0.5;
    let ridge = LDA_RIDGE * within.trace() / d as f64;
    let ridge = if ridge > 0.0 { ridge } else { LDA_RIDGE };
    let reg = within + DMatrix::identity(d, d) * ridge;
    let chol = reg
        .cholesky()
        .ok_or_else(|| Error::validation("regularized within-class scatter is not positive definite"))?;
    let l = chol.l();
    let l_inv_sb = l
        .solve_lower_triangular(&between)
        .ok_or_else(|| Error::validation("singular Cholesky factor"))?;
    let m = l
        .solve_lower_triangular(&l_inv_sb.transpose())
        .ok_or_else(|| Error::validation("singular Cholesky factor"))?;
    let m = (&m + m.transpose()) * 0.5;
    let (values, vectors) = sorted_eigen(m);
    let p = (present.len() - 1).min(d);
    let lt = l.transpose();
    let mut components = Vec::with_capacity(p * d);
    for c in 0..p {
        let w = lt
            .solve_upper_triangular(&vectors.column(c).into_owned())
            .ok_or_else(|| Error::validation("singular Cholesky factor"))?;
        let mut axis: Vec<f64> = w.iter().copied().collect();
        sign_normalize(&mut axis);
        components.extend(axis);
    }
    let eigenvalues: Vec<f64> = values[..p].to_vec();
    Ok(Projection {
        kind,
        mean: global.iter().copied().collect(),
        components,
        output_dim: p,
        fit_sample_count: train.len(),
        degenerate: eigenvalues.first().is_none_or(|&v| v <= DEGENERATE_EIGENVALUE),
        eigenvalues,
        explained_variance_ratio: Vec::new(),
        rank_deficient: false,
    })
}

/// LDA fitted on the samples with `eta > 1/k_max` only. Every class present
/// in `train` must keep at least two samples.
pub fn fit_flda(train: &LabeledDataset, rmap: &ReliabilityMap) -> Result<Projection> {
    let kept = filter_unreliable(train, rmap)?;
    if kept.is_empty() {
        return Err(Error::validation("reliability filter removed every training sample"));
    }
    let before = train.class_counts();
    let after = kept.class_counts();
    for c in 0..before.len() {
        if before[c] > 0 && after[c] < 2 {
            return Err(Error::validation(format!(
                "reliability filter left class {} with {} of {} samples",
                c, after[c], before[c]
            )));
        }
    }
    lda(&kept, ProjectionKind::Flda)
}

/// Replaces embeddings by `(x - mean) C^T`; labels and ids are unchanged.
pub fn project(data: &LabeledDataset, proj: &Projection) -> Result<LabeledDataset> {
    let d = proj.input_dim();
    if data.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: data.dim(),
        });
    }
    if proj.output_dim == 0 {
        return Err(Error::validation("projection has no axes"));
    }
    let mut out = Vec::with_capacity(data.len() * proj.output_dim);
    let mut centered = vec![0.0f64; d];
    for i in 0..data.len() {
        for ((c, &v), m) in centered.iter_mut().zip(data.row(i)).zip(&proj.mean) {
            *c = v as f64 - m;
        }
        for a in 0..proj.output_dim {
            let dot: f64 = proj.axis(a).iter().zip(&centered).map(|(w, x)| w * x).sum();
            out.push(dot as f32);
        }
    }
    data.with_embeddings(proj.output_dim, out)
}
