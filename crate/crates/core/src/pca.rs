//! Distributed private PCA with correlated noise, its baselines and the
//! subspace quality metrics.

use nalgebra::SVD;

use crate::cape::{cape_plan_per_site, draw_correlated_shares, CapeRngs, ProtocolOptions};
use crate::dp::{sym_noise_matrix, Privacy};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{orthonormality_defect, top_k_eigs, Matrix, SymMatrix};
use crate::transcript::{Payload, PayloadKind, ProtocolTranscript, Role};

const NORM_SLACK: f64 = 1e-9;

/// One site's samples as the columns of a `D x N_s` matrix, each with
/// `‖x‖₂ ≤ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteDataset {
    id: usize,
    data: Matrix,
}

impl SiteDataset {
    pub fn new(id: usize, data: Matrix) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(Error::Empty(format!("site {id} has no samples")));
        }
        for (n, col) in data.column_iter().enumerate() {
            let norm = col.norm();
            if !(norm <= 1.0 + NORM_SLACK) {
                return Err(Error::InvalidArgument(format!(
                    "site {id} sample {n} has norm {norm} > 1"
                )));
            }
        }
        Ok(SiteDataset { id, data })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }
}

/// Centers the columns and scales them so the largest norm is 1. Input with
/// all columns equal comes back as zeros.
pub fn preprocess(raw: &Matrix) -> Matrix {
    if raw.ncols() == 0 {
        return raw.clone();
    }
    let mean = raw.column_mean();
    let mut out = raw.clone();
    for mut col in out.column_iter_mut() {
        col -= &mean;
    }
    let max_norm = out.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max_norm > 0.0 {
        out /= max_norm;
    }
    out
}

/// `(1/N) X Xᵀ`
pub fn second_moment(x: &SiteDataset) -> Result<SymMatrix> {
    second_moment_of(x.data())
}

pub fn second_moment_of(x: &Matrix) -> Result<SymMatrix> {
    if x.ncols() == 0 {
        return Err(Error::Empty("no samples".into()));
    }
    let a = x * x.transpose() / x.ncols() as f64;
    SymMatrix::symmetric_part(&a)
}

/// Second moment of all sites' samples together.
pub fn pooled_second_moment(sites: &[SiteDataset]) -> Result<SymMatrix> {
    let d = check_sites(sites)?;
    let mut acc = Matrix::zeros(d, d);
    let mut n = 0;
    for s in sites {
        acc += s.data() * s.data().transpose();
        n += s.n_samples();
    }
    SymMatrix::symmetric_part(&(acc / n as f64))
}

fn check_sites(sites: &[SiteDataset]) -> Result<usize> {
    let first = sites.first().ok_or_else(|| Error::Empty("no sites".into()))?;
    let d = first.dim();
    if let Some(bad) = sites.iter().find(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch(format!(
            "site {} has dimension {}, site {} has {d}",
            bad.id(),
            bad.dim(),
            first.id()
        )));
    }
    Ok(d)
}

fn check_k(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("K = {k} must be in 1..={d}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PcaMethod {
    Cape,
    Conv,
    Local,
    PooledDp,
    NonPrivate,
}

#[derive(Clone, Debug)]
pub struct PcaResult {
    /// `D x K`, orthonormal columns.
    pub subspace: Matrix,
    pub method: PcaMethod,
    /// `tr(Vᵀ A V)` against the pooled, noise-free second moment.
    pub captured_energy: f64,
}

/// A distributed run: the result plus the aggregator's noisy matrix and the
/// message log.
#[derive(Clone, Debug)]
pub struct PcaRun {
    pub result: PcaResult,
    pub aggregate: SymMatrix,
    pub transcript: ProtocolTranscript,
}

fn finish(method: PcaMethod, aggregate: &SymMatrix, pooled: &SymMatrix, k: usize) -> Result<PcaResult> {
    let eig = top_k_eigs(aggregate, k)?;
    let energy = captured_energy(&eig.vectors, pooled);
    Ok(PcaResult {
        subspace: eig.vectors,
        method,
        captured_energy: energy,
    })
}

/// Per-site noise scale for the second moment, `Δ = 1/N_s`.
pub fn site_taus(sites: &[SiteDataset], privacy: &Privacy) -> Result<Vec<f64>> {
    sites
        .iter()
        .map(|s| privacy.std_for(1.0 / s.n_samples() as f64))
        .collect()
}

/// Correlated-noise distributed PCA (round 1 of the protocol).
///
/// Site `s` uploads `A_s + E_s + F_s + G_s` with `E_s` zero-sum across sites
/// and i.i.d. entrywise, `F_s` i.i.d. from the aggregator and `G_s` symmetric.
/// The aggregator forms `(1/S) Σ (Â_s − F_s)`, symmetrizes it and keeps the
/// top `k` eigenvectors.
pub fn cape_pca(
    sites: &[SiteDataset],
    privacy: &Privacy,
    k: usize,
    rngs: &CapeRngs,
    opts: ProtocolOptions,
) -> Result<PcaRun> {
    let d = check_sites(sites)?;
    check_k(k, d)?;
    let (aggregate, transcript) = cape_aggregate_m2(sites, privacy, rngs, 1, opts)?;
    let pooled = pooled_second_moment(sites)?;
    let result = finish(PcaMethod::Cape, &aggregate, &pooled, k)?;
    Ok(PcaRun {
        result,
        aggregate,
        transcript,
    })
}

/// The correlated-noise estimate of `(1/S) Σ A_s` for `round`, shared with
/// the tensor pipeline.
pub fn cape_aggregate_m2_from(
    moments: &[SymMatrix],
    taus: &[f64],
    rngs: &CapeRngs,
    round: u32,
    opts: ProtocolOptions,
) -> Result<(SymMatrix, ProtocolTranscript)> {
    let s = moments.len();
    if s == 0 {
        return Err(Error::Empty("no sites".into()));
    }
    if taus.len() != s {
        return Err(Error::DimensionMismatch(format!("{} taus for {s} sites", taus.len())));
    }
    let d = moments[0].dim();
    if moments.iter().any(|m| m.dim() != d) {
        return Err(Error::DimensionMismatch("site moments differ in size".into()));
    }
    let plan = cape_plan_per_site(taus)?;
    let shares = draw_correlated_shares(&plan, d * d, rngs, round, opts)?;
    let mut tr = ProtocolTranscript::new();
    let e: Vec<Matrix> = shares.e.iter().map(|v| Matrix::from_row_slice(d, d, v)).collect();
    let f: Vec<Matrix> = shares.f.iter().map(|v| Matrix::from_row_slice(d, d, v)).collect();
    for (k, m) in e.iter().enumerate() {
        tr.push(round, Role::NoiseGenerator, Role::Site(k), PayloadKind::EShare, Payload::Matrix(m.clone()));
    }
    for (k, m) in f.iter().enumerate() {
        tr.push(round, Role::Aggregator, Role::Site(k), PayloadKind::FShare, Payload::Matrix(m.clone()));
    }
    let mut acc = Matrix::zeros(d, d);
    for k in 0..s {
        let mut rng = rngs.stream(Role::Site(k), round);
        let g = sym_noise_matrix(d, plan.sites()[k].tau_g_sq.sqrt(), &mut rng);
        let upload = moments[k].as_matrix() + &e[k] + &f[k] + g.as_matrix();
        tr.push(round, Role::Site(k), Role::Site(k), PayloadKind::LocalNoise, Payload::Matrix(g.into_matrix()));
        acc += &upload - &f[k];
        tr.push(round, Role::Site(k), Role::Aggregator, PayloadKind::SiteUpload, Payload::Matrix(upload));
    }
    let aggregate = SymMatrix::symmetric_part(&(acc / s as f64))?;
    Ok((aggregate, tr))
}

fn cape_aggregate_m2(
    sites: &[SiteDataset],
    privacy: &Privacy,
    rngs: &CapeRngs,
    round: u32,
    opts: ProtocolOptions,
) -> Result<(SymMatrix, ProtocolTranscript)> {
    let moments = sites.iter().map(second_moment).collect::<Result<Vec<_>>>()?;
    let taus = site_taus(sites, privacy)?;
    cape_aggregate_m2_from(&moments, &taus, rngs, round, opts)
}

/// Baseline without correlated noise: each site adds symmetric noise at its
/// full `τ_s` and the aggregator averages.
pub fn conv_pca(sites: &[SiteDataset], privacy: &Privacy, k: usize, rngs: &CapeRngs) -> Result<PcaRun> {
    let d = check_sites(sites)?;
    check_k(k, d)?;
    let taus = site_taus(sites, privacy)?;
    let mut tr = ProtocolTranscript::new();
    let mut acc = Matrix::zeros(d, d);
    for (k_site, (site, tau)) in sites.iter().zip(&taus).enumerate() {
        let mut rng = rngs.stream(Role::Site(k_site), 1);
        let noisy = second_moment(site)?.add(&sym_noise_matrix(d, *tau, &mut rng))?;
        acc += noisy.as_matrix();
        tr.push(1, Role::Site(k_site), Role::Aggregator, PayloadKind::SiteUpload, Payload::Matrix(noisy.into_matrix()));
    }
    let aggregate = SymMatrix::symmetric_part(&(acc / sites.len() as f64))?;
    let pooled = pooled_second_moment(sites)?;
    let result = finish(PcaMethod::Conv, &aggregate, &pooled, k)?;
    Ok(PcaRun {
        result,
        aggregate,
        transcript: tr,
    })
}

/// Private PCA on site `index` alone, calibrated to that site's `N_s`.
/// Energy is still measured against the pooled second moment of `sites`.
pub fn local_pca(
    sites: &[SiteDataset],
    index: usize,
    privacy: &Privacy,
    k: usize,
    rng: &mut RngStream,
) -> Result<PcaResult> {
    let d = check_sites(sites)?;
    check_k(k, d)?;
    let site = sites
        .get(index)
        .ok_or_else(|| Error::InvalidArgument(format!("site index {index} out of range")))?;
    let tau = privacy.std_for(1.0 / site.n_samples() as f64)?;
    let noisy = second_moment(site)?.add(&sym_noise_matrix(d, tau, rng))?;
    finish(PcaMethod::Local, &noisy, &pooled_second_moment(sites)?, k)
}

/// Private PCA on the pooled data with `Δ = 1/N` and one symmetric noise draw.
pub fn pooled_dp_pca(sites: &[SiteDataset], privacy: &Privacy, k: usize, rng: &mut RngStream) -> Result<PcaResult> {
    let d = check_sites(sites)?;
    check_k(k, d)?;
    let n: usize = sites.iter().map(|s| s.n_samples()).sum();
    let tau = privacy.std_for(1.0 / n as f64)?;
    let pooled = pooled_second_moment(sites)?;
    let noisy = pooled.add(&sym_noise_matrix(d, tau, rng))?;
    finish(PcaMethod::PooledDp, &noisy, &pooled, k)
}

pub fn nonprivate_pca(sites: &[SiteDataset], k: usize) -> Result<PcaResult> {
    let d = check_sites(sites)?;
    check_k(k, d)?;
    let pooled = pooled_second_moment(sites)?;
    finish(PcaMethod::NonPrivate, &pooled, &pooled, k)
}

/// `tr(Vᵀ A V)`. Logs a warning when `V` is not orthonormal but still
/// computes the trace.
pub fn captured_energy(v: &Matrix, a: &SymMatrix) -> f64 {
    let defect = orthonormality_defect(v);
    if defect > 1e-8 {
        log::warn!("captured_energy: columns not orthonormal (defect {defect:.3e})");
    }
    (v.transpose() * a.as_matrix() * v).trace()
}

/// Largest principal angle between the column spaces of two `D x K`
/// orthonormal matrices, in `[0, π/2]`.
pub fn principal_angle(v1: &Matrix, v2: &Matrix) -> Result<f64> {
    if v1.shape() != v2.shape() {
        return Err(Error::DimensionMismatch(format!(
            "subspaces {:?} and {:?}",
            v1.shape(),
            v2.shape()
        )));
    }
    let cross = v1.transpose() * v2;
    let resid = v2 - v1 * &cross;
    let cos = SVD::new(cross, false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let sin = SVD::new(resid, false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    Ok(sin.atan2(cos.max(0.0)))
}
