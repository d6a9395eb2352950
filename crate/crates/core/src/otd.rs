//! Orthogonal tensor decomposition of latent-variable moments: moment
//! estimators for the single topic model and spherical Gaussian mixtures,
//! whitening, the tensor power method, recovery of weights and components,
//! and the private variants (centralized Gaussian and vector noise,
//! distributed with correlated noise).

use crate::cape::{cape_plan_per_site, draw_correlated_shares, CapeRngs, ProtocolOptions};
use crate::dp::{
    avn_noise_tensor3, gaussian_std, sensitivity_m2, sensitivity_m3, sym_noise_matrix, sym_noise_tensor3,
    ModelKind, Privacy, PrivacyLedger, PrivacySpec,
};
use crate::error::{Error, Result};
use crate::pca::cape_aggregate_m2_from;
use crate::rng::RngStream;
use crate::tensor::{apply_iuu, apply_uuu, project3, top_k_eigs, Matrix, SymIndex, SymMatrix, SymTensor3, Tensor3};
use crate::transcript::{Payload, PayloadKind, ProtocolTranscript, Role};

/// Planted model: weights `w`, components `A` (`D x K`), and the
/// model-specific noise level (`σ²` for MOG) or document length (STM).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentModel {
    kind: ModelKind,
    weights: Vec<f64>,
    components: Matrix,
    sigma_sq: f64,
    words_per_doc: usize,
}

impl LatentModel {
    pub fn new(
        kind: ModelKind,
        weights: Vec<f64>,
        components: Matrix,
        sigma_sq: f64,
        words_per_doc: usize,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Empty("model has no components".into()));
        }
        if components.ncols() != k {
            return Err(Error::DimensionMismatch(format!(
                "{k} weights but {} component columns",
                components.ncols()
            )));
        }
        if components.nrows() < k {
            return Err(Error::InvalidArgument(format!(
                "K = {k} exceeds D = {}",
                components.nrows()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights must be positive and sum to 1: {weights:?}")));
        }
        match kind {
            ModelKind::Stm => {
                for (i, c) in components.column_iter().enumerate() {
                    if c.iter().any(|x| !(*x >= 0.0)) || (c.sum() - 1.0).abs() > 1e-12 {
                        return Err(Error::InvalidArgument(format!("topic {i} is not a probability vector")));
                    }
                }
                if words_per_doc < 3 {
                    return Err(Error::InvalidArgument("documents need at least 3 words".into()));
                }
            }
            ModelKind::Mog => {
                for (i, c) in components.column_iter().enumerate() {
                    if c.norm() > 1.0 + 1e-12 {
                        return Err(Error::InvalidArgument(format!("component {i} has norm > 1")));
                    }
                }
                if !(sigma_sq >= 0.0 && sigma_sq.is_finite()) {
                    return Err(Error::InvalidArgument(format!("sigma_sq = {sigma_sq} must be >= 0")));
                }
            }
        }
        let sv = components.clone().svd(false, false).singular_values;
        let smax = sv.max();
        if sv.min() <= 1e-10 * smax.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidArgument("components are linearly dependent".into()));
        }
        Ok(LatentModel {
            kind,
            weights,
            components,
            sigma_sq: if kind == ModelKind::Mog { sigma_sq } else { 0.0 },
            words_per_doc,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &Matrix {
        &self.components
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    pub fn words_per_doc(&self) -> usize {
        self.words_per_doc
    }

    /// `M₂ = Σ w_k a_k a_kᵀ`, `M₃ = Σ w_k a_k⊗a_k⊗a_k`. `n_samples` is only
    /// carried along for calibration.
    pub fn exact_moments(&self, n_samples: usize) -> MomentPair {
        let d = self.dim();
        let a = &self.components;
        let m2 = SymMatrix::from_upper(d, |i, j| {
            (0..self.k()).map(|c| self.weights[c] * a[(i, c)] * a[(j, c)]).sum()
        });
        let unique: Vec<f64> = SymIndex::all(d)
            .map(|ix| {
                (0..self.k())
                    .map(|c| self.weights[c] * a[(ix.i, c)] * a[(ix.j, c)] * a[(ix.k, c)])
                    .sum()
            })
            .collect();
        MomentPair {
            m2,
            m3: SymTensor3::from_unique(d, &unique).expect("length matches"),
            n_samples,
            kind: self.kind,
            sigma_sq: self.sigma_sq,
        }
    }
}

/// Second and third moment estimates plus what calibration needs.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentPair {
    pub m2: SymMatrix,
    pub m3: SymTensor3,
    pub n_samples: usize,
    pub kind: ModelKind,
    pub sigma_sq: f64,
}

impl MomentPair {
    pub fn dim(&self) -> usize {
        self.m2.dim()
    }
}

/// Moments of one-hot encoded documents from their first three words,
/// symmetrized.
pub fn stm_moments(docs: &[Vec<usize>], dim: usize) -> Result<MomentPair> {
    if docs.is_empty() {
        return Err(Error::Empty("no documents".into()));
    }
    let mut m2 = Matrix::zeros(dim, dim);
    let mut m3 = Tensor3::zeros(dim);
    for (n, doc) in docs.iter().enumerate() {
        if doc.len() < 3 {
            return Err(Error::InvalidArgument(format!("document {n} has fewer than 3 words")));
        }
        let (a, b, c) = (doc[0], doc[1], doc[2]);
        if a >= dim || b >= dim || c >= dim {
            return Err(Error::InvalidArgument(format!("document {n} has a word index >= {dim}")));
        }
        m2[(a, b)] += 1.0;
        m3.set(a, b, c, m3.get(a, b, c) + 1.0);
    }
    let n = docs.len() as f64;
    Ok(MomentPair {
        m2: SymMatrix::symmetric_part(&(m2 / n))?,
        m3: SymTensor3::symmetrize(&m3.scale(1.0 / n)),
        n_samples: docs.len(),
        kind: ModelKind::Stm,
        sigma_sq: 0.0,
    })
}

/// Mixture-of-Gaussians moments with the `σ²` corrections:
/// `M₂ = E[t tᵀ] − σ² I` and
/// `M₃ = E[t⊗t⊗t] − σ² Σ_d (μ⊗e_d⊗e_d + e_d⊗μ⊗e_d + e_d⊗e_d⊗μ)` with `μ = E[t]`.
pub fn mog_moments(samples: &Matrix, sigma_sq: f64) -> Result<MomentPair> {
    let (d, n) = samples.shape();
    if n == 0 {
        return Err(Error::Empty("no samples".into()));
    }
    if !(sigma_sq >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_sq = {sigma_sq} must be >= 0")));
    }
    let nf = n as f64;
    let mu = samples.column_mean();
    let second = samples * samples.transpose() / nf - Matrix::identity(d, d) * sigma_sq;
    let idx: Vec<SymIndex> = SymIndex::all(d).collect();
    let mut unique = vec![0.0; idx.len()];
    for col in samples.column_iter() {
        for (u, ix) in unique.iter_mut().zip(&idx) {
            *u += col[ix.i] * col[ix.j] * col[ix.k];
        }
    }
    for (u, ix) in unique.iter_mut().zip(&idx) {
        let mut corr = 0.0;
        if ix.j == ix.k {
            corr += mu[ix.i];
        }
        if ix.i == ix.k {
            corr += mu[ix.j];
        }
        if ix.i == ix.j {
            corr += mu[ix.k];
        }
        *u = *u / nf - sigma_sq * corr;
    }
    Ok(MomentPair {
        m2: SymMatrix::symmetric_part(&second)?,
        m3: SymTensor3::from_unique(d, &unique)?,
        n_samples: n,
        kind: ModelKind::Mog,
        sigma_sq,
    })
}

/// `W = U Λ^{-1/2}` from the top `K` eigenpairs, so that `Wᵀ M₂ W = I`.
#[derive(Clone, Debug)]
pub struct Whitening {
    /// `D x K`
    pub w: Matrix,
    pub eigvals: Vec<f64>,
    /// `D x K`
    pub eigvecs: Matrix,
}

impl Whitening {
    /// `U Λ^{1/2}`, the map back from whitened to original coordinates.
    pub fn unwhiten(&self) -> Matrix {
        let mut b = self.eigvecs.clone();
        for (c, l) in self.eigvals.iter().enumerate() {
            b.column_mut(c).scale_mut(l.sqrt());
        }
        b
    }
}

/// Eigenvalues below this fraction of the largest count as missing rank.
pub const WHITEN_FLOOR: f64 = 1e-12;

pub fn whiten(m2: &SymMatrix, k: usize) -> Result<Whitening> {
    let eig = top_k_eigs(m2, k)?;
    let top = eig.values[0];
    let found = if top > 0.0 {
        eig.values.iter().filter(|&&v| v > WHITEN_FLOOR * top).count()
    } else {
        0
    };
    if found < k {
        return Err(Error::RankDeficient { needed: k, found });
    }
    let mut w = eig.vectors.clone();
    for (c, l) in eig.values.iter().enumerate() {
        w.column_mut(c).scale_mut(1.0 / l.sqrt());
    }
    Ok(Whitening {
        w,
        eigvals: eig.values,
        eigvecs: eig.vectors,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            restarts: 20,
            max_iter: 100,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PowerResult {
    /// Descending.
    pub lambdas: Vec<f64>,
    /// `K x K`, column `k` pairs with `lambdas[k]`.
    pub vectors: Matrix,
    /// Every final refinement met the tolerance within `max_iter`.
    pub converged: bool,
    /// `‖T − Σ λ_k v_k⊗³‖` after all deflations.
    pub residual_norm: f64,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Runs power iterations from `u`; returns the final iterate, `T(u,u,u)`
/// and whether successive iterates came within `tol`.
fn power_iterate(t: &Tensor3, mut u: Vec<f64>, cfg: &PowerConfig) -> Result<(Vec<f64>, f64, bool)> {
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let mut next = apply_iuu(t, &u)?;
        if normalize(&mut next) == 0.0 {
            break;
        }
        let step = next.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        u = next;
        if step < cfg.tol {
            converged = true;
            break;
        }
    }
    let lambda = apply_uuu(t, &u)?;
    Ok((u, lambda, converged))
}

/// Robust tensor power method with deflation. For each of `k` components,
/// `cfg.restarts` random starts are iterated, the one with the largest
/// `T(u,u,u)` is refined for another `cfg.max_iter` steps and then removed
/// from the tensor.
pub fn tensor_power_decompose(
    t: &SymTensor3,
    k: usize,
    cfg: &PowerConfig,
    rng: &mut RngStream,
) -> Result<PowerResult> {
    let d = t.dim();
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("K = {k} must be in 1..={d}")));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidArgument("need at least one restart".into()));
    }
    let mut work = t.clone();
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k);
    let mut all_converged = true;
    for _ in 0..k {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..cfg.restarts {
            let mut u0 = rng.normals(d, 1.0);
            if normalize(&mut u0) == 0.0 {
                u0[0] = 1.0;
            }
            let (u, lambda, _) = power_iterate(work.as_tensor(), u0, cfg)?;
            if best.as_ref().is_none_or(|(bl, _)| lambda > *bl) {
                best = Some((lambda, u));
            }
        }
        let (_, start) = best.expect("at least one restart");
        let (mut v, mut lambda, converged) = power_iterate(work.as_tensor(), start, cfg)?;
        all_converged &= converged;
        if lambda < 0.0 {
            lambda = -lambda;
            v.iter_mut().for_each(|x| *x = -*x);
        }
        work.deflate(lambda, &v)?;
        pairs.push((lambda, v));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let lambdas = pairs.iter().map(|p| p.0).collect();
    let vectors = Matrix::from_fn(d, k, |r, c| pairs[c].1[r]);
    Ok(PowerResult {
        lambdas,
        vectors,
        converged: all_converged,
        residual_norm: work.norm(),
    })
}

/// `ŵ_k = 1/λ_k²` and `â_k = λ_k U Λ^{1/2} v_k`.
pub fn recover_components(lambdas: &[f64], v: &Matrix, whitening: &Whitening) -> Result<(Vec<f64>, Matrix)> {
    if v.ncols() != lambdas.len() || v.nrows() != whitening.w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} eigenvalues, {}x{} vectors, whitening rank {}",
            lambdas.len(),
            v.nrows(),
            v.ncols(),
            whitening.w.ncols()
        )));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::InvalidArgument(format!("eigenvalue {bad} must be > 0")));
    }
    let weights = lambdas.iter().map(|l| 1.0 / (l * l)).collect();
    let mut a = whitening.unwhiten() * v;
    for (c, l) in lambdas.iter().enumerate() {
        a.column_mut(c).scale_mut(*l);
    }
    Ok((weights, a))
}

/// A whitened `K x K x K` tensor together with the whitening that produced it.
#[derive(Clone, Debug)]
pub struct WhitenedTensor {
    pub tensor: SymTensor3,
    pub whitening: Whitening,
    /// The (possibly noisy) second moment the whitening came from.
    pub m2_hat: SymMatrix,
}

#[derive(Clone, Debug)]
pub struct OtdResult {
    pub lambdas: Vec<f64>,
    /// `K x K` whitened eigenvectors.
    pub whitened_vectors: Matrix,
    pub weights: Vec<f64>,
    /// `D x K`
    pub components: Matrix,
    pub converged: bool,
}

/// Whitens `m2`, projects `m3` and returns the symmetric `K`-dim tensor.
pub fn whiten_and_project(m2: &SymMatrix, m3: &SymTensor3, k: usize) -> Result<WhitenedTensor> {
    if m2.dim() != m3.dim() {
        return Err(Error::DimensionMismatch(format!("M2 is {}, M3 is {}", m2.dim(), m3.dim())));
    }
    let whitening = whiten(m2, k)?;
    let tensor = SymTensor3::symmetrize(&project3(m3.as_tensor(), &whitening.w)?);
    Ok(WhitenedTensor {
        tensor,
        whitening,
        m2_hat: m2.clone(),
    })
}

/// Power method plus recovery on a whitened tensor.
pub fn decompose(wt: &WhitenedTensor, cfg: &PowerConfig, rng: &mut RngStream) -> Result<OtdResult> {
    let k = wt.tensor.dim();
    let pr = tensor_power_decompose(&wt.tensor, k, cfg, rng)?;
    let (weights, components) = recover_components(&pr.lambdas, &pr.vectors, &wt.whitening)?;
    Ok(OtdResult {
        lambdas: pr.lambdas,
        whitened_vectors: pr.vectors,
        weights,
        components,
        converged: pr.converged,
    })
}

/// Non-private pipeline from moments to recovered components.
pub fn nonprivate_otd(m: &MomentPair, k: usize, cfg: &PowerConfig, rng: &mut RngStream) -> Result<OtdResult> {
    decompose(&whiten_and_project(&m.m2, &m.m3, k)?, cfg, rng)
}

/// Budgets for the two stages: `m2` (whitening) and `m3` (tensor).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StagedPrivacy {
    pub m2: Privacy,
    pub m3: Privacy,
}

impl StagedPrivacy {
    pub fn noiseless() -> Self {
        StagedPrivacy {
            m2: Privacy::Noiseless,
            m3: Privacy::Noiseless,
        }
    }

    /// `(ε/2, δ/2)` per stage.
    pub fn even_split(total: PrivacySpec) -> Self {
        let (a, b) = total.split_half();
        StagedPrivacy {
            m2: Privacy::Dp(a),
            m3: Privacy::Dp(b),
        }
    }

    fn ledger(&self) -> PrivacyLedger {
        let mut l = PrivacyLedger::new();
        if let Privacy::Dp(s) = self.m2 {
            l.record("m2", s);
        }
        if let Privacy::Dp(s) = self.m3 {
            l.record("m3", s);
        }
        l
    }
}

fn noise_scales(m: &MomentPair, privacy: &StagedPrivacy) -> Result<(f64, f64)> {
    if privacy.m2.is_noiseless() && privacy.m3.is_noiseless() {
        return Ok((0.0, 0.0));
    }
    let d2 = sensitivity_m2(m.kind, m.n_samples)?.value;
    let d3 = sensitivity_m3(m.kind, m.n_samples, m.dim(), m.sigma_sq)?.value;
    Ok((privacy.m2.std_for(d2)?, privacy.m3.std_for(d3)?))
}

/// Centralized analyze-Gauss: symmetric Gaussian noise on both moments,
/// whitening from the noisy `M₂`, projection of the noisy `M₃`.
pub fn agn(m: &MomentPair, k: usize, privacy: &StagedPrivacy, rng: &mut RngStream) -> Result<WhitenedTensor> {
    let d = m.dim();
    let (tau1, tau2) = noise_scales(m, privacy)?;
    let m2_hat = m.m2.add(&sym_noise_matrix(d, tau1, rng))?;
    let m3_hat = m.m3.add(&sym_noise_tensor3(d, tau2, rng))?;
    whiten_and_project(&m2_hat, &m3_hat, k)
}

/// Vector-noise variant: `M₃` noise has density `∝ exp(−β‖b‖₂)` over its
/// unique entries with `β = ε₂/Δ₃`; `M₂` noise is Gaussian calibrated with
/// `δ₁ + δ₂`. Returns `β` when the tensor stage is private.
pub fn avn(
    m: &MomentPair,
    k: usize,
    privacy: &StagedPrivacy,
    rng: &mut RngStream,
) -> Result<(WhitenedTensor, Option<f64>)> {
    let d = m.dim();
    let (m2_hat, beta) = match (privacy.m2, privacy.m3) {
        (Privacy::Noiseless, Privacy::Noiseless) => return Ok((whiten_and_project(&m.m2, &m.m3, k)?, None)),
        (Privacy::Dp(s1), Privacy::Dp(s2)) => {
            let combined = PrivacySpec::new(s1.epsilon(), s1.delta() + s2.delta())?;
            let tau1 = gaussian_std(sensitivity_m2(m.kind, m.n_samples)?.value, &combined)?;
            (m.m2.add(&sym_noise_matrix(d, tau1, rng))?, avn_beta(m, &s2)?)
        }
        _ => {
            return Err(Error::InvalidPrivacy(
                "vector noise needs both stages private or both noiseless".into(),
            ))
        }
    };
    let m3_hat = m.m3.add(&avn_noise_tensor3(d, beta, rng)?)?;
    Ok((whiten_and_project(&m2_hat, &m3_hat, k)?, Some(beta)))
}

/// `β = ε₂/Δ₃` for the vector-noise tensor stage.
pub fn avn_beta(m: &MomentPair, spec2: &PrivacySpec) -> Result<f64> {
    Ok(spec2.epsilon() / sensitivity_m3(m.kind, m.n_samples, m.dim(), m.sigma_sq)?.value)
}

/// Output of a two-round distributed tensor run.
#[derive(Clone, Debug)]
pub struct DistributedOtdRun {
    pub whitened: WhitenedTensor,
    pub transcript: ProtocolTranscript,
    pub ledger: PrivacyLedger,
}

fn check_site_moments(sites: &[MomentPair], k: usize) -> Result<usize> {
    let first = sites.first().ok_or_else(|| Error::Empty("no sites".into()))?;
    let d = first.dim();
    if sites.iter().any(|s| s.dim() != d || s.m3.dim() != d) {
        return Err(Error::DimensionMismatch("site moments differ in dimension".into()));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("K = {k} must be in 1..={d}")));
    }
    Ok(d)
}

fn site_scales(sites: &[MomentPair], privacy: &StagedPrivacy) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut t2 = Vec::with_capacity(sites.len());
    let mut t3 = Vec::with_capacity(sites.len());
    for s in sites {
        let (a, b) = noise_scales(s, privacy)?;
        t2.push(a);
        t3.push(b);
    }
    Ok((t2, t3))
}

fn broadcast_w(tr: &mut ProtocolTranscript, w: &Matrix, s: usize) {
    for k in 0..s {
        tr.push(1, Role::Aggregator, Role::Site(k), PayloadKind::Broadcast, Payload::Matrix(w.clone()));
    }
}

/// Distributed analyze-Gauss with correlated noise in both rounds.
///
/// Round 1 aggregates `M₂` as in the PCA protocol and broadcasts `W`. In
/// round 2 each site perturbs `M₃^s` with a zero-sum i.i.d. share, an i.i.d.
/// aggregator share and its own symmetric noise, and uploads only the
/// `K x K x K` projection. The aggregator subtracts `F₃^s(W,W,W)` and
/// averages, which leaves `((1/S) Σ (M₃^s + G₃^s))(W,W,W)`.
pub fn cape_agn(
    sites: &[MomentPair],
    k: usize,
    privacy: &StagedPrivacy,
    rngs: &CapeRngs,
    opts: ProtocolOptions,
) -> Result<DistributedOtdRun> {
    let d = check_site_moments(sites, k)?;
    let s = sites.len();
    let (tau2, tau3) = site_scales(sites, privacy)?;

    let m2s: Vec<SymMatrix> = sites.iter().map(|m| m.m2.clone()).collect();
    let (m2_hat, mut tr) = cape_aggregate_m2_from(&m2s, &tau2, rngs, 1, opts)?;
    let whitening = whiten(&m2_hat, k)?;
    broadcast_w(&mut tr, &whitening.w, s);

    let plan = cape_plan_per_site(&tau3)?;
    let shares = draw_correlated_shares(&plan, d * d * d, rngs, 2, opts)?;
    let e: Vec<Tensor3> = shares.e.into_iter().map(|v| Tensor3::from_vec(d, v)).collect::<Result<_>>()?;
    let f: Vec<Tensor3> = shares.f.into_iter().map(|v| Tensor3::from_vec(d, v)).collect::<Result<_>>()?;
    for (i, t) in e.iter().enumerate() {
        tr.push(2, Role::NoiseGenerator, Role::Site(i), PayloadKind::EShare, Payload::Tensor(t.clone()));
    }
    for (i, t) in f.iter().enumerate() {
        tr.push(2, Role::Aggregator, Role::Site(i), PayloadKind::FShare, Payload::Tensor(t.clone()));
    }
    let mut acc = Tensor3::zeros(k);
    for i in 0..s {
        let mut rng = rngs.stream(Role::Site(i), 2);
        let g = sym_noise_tensor3(d, plan.sites()[i].tau_g_sq.sqrt(), &mut rng).into_tensor();
        let mut noisy = sites[i].m3.as_tensor().add(&e[i])?;
        noisy.axpy(1.0, &f[i])?;
        noisy.axpy(1.0, &g)?;
        let upload = project3(&noisy, &whitening.w)?;
        tr.push(2, Role::Site(i), Role::Site(i), PayloadKind::LocalNoise, Payload::Tensor(g));
        acc.axpy(1.0, &upload)?;
        acc.axpy(-1.0, &project3(&f[i], &whitening.w)?)?;
        tr.push(2, Role::Site(i), Role::Aggregator, PayloadKind::SiteUpload, Payload::Tensor(upload));
    }
    let tensor = SymTensor3::symmetrize(&acc.scale(1.0 / s as f64));
    Ok(DistributedOtdRun {
        whitened: WhitenedTensor {
            tensor,
            whitening,
            m2_hat,
        },
        transcript: tr,
        ledger: privacy.ledger(),
    })
}

/// Distributed baseline without correlated noise: each site perturbs its
/// moments at the full per-site scale in both rounds.
pub fn conv_agn(sites: &[MomentPair], k: usize, privacy: &StagedPrivacy, rngs: &CapeRngs) -> Result<DistributedOtdRun> {
    let d = check_site_moments(sites, k)?;
    let s = sites.len();
    let (tau2, tau3) = site_scales(sites, privacy)?;
    let mut tr = ProtocolTranscript::new();
    let mut acc2 = Matrix::zeros(d, d);
    for (i, m) in sites.iter().enumerate() {
        let mut rng = rngs.stream(Role::Site(i), 1);
        let up = m.m2.add(&sym_noise_matrix(d, tau2[i], &mut rng))?.into_matrix();
        acc2 += &up;
        tr.push(1, Role::Site(i), Role::Aggregator, PayloadKind::SiteUpload, Payload::Matrix(up));
    }
    let m2_hat = SymMatrix::symmetric_part(&(acc2 / s as f64))?;
    let whitening = whiten(&m2_hat, k)?;
    broadcast_w(&mut tr, &whitening.w, s);
    let mut acc3 = Tensor3::zeros(k);
    for (i, m) in sites.iter().enumerate() {
        let mut rng = rngs.stream(Role::Site(i), 2);
        let noisy = m.m3.add(&sym_noise_tensor3(d, tau3[i], &mut rng))?;
        let up = project3(noisy.as_tensor(), &whitening.w)?;
        acc3.axpy(1.0, &up)?;
        tr.push(2, Role::Site(i), Role::Aggregator, PayloadKind::SiteUpload, Payload::Tensor(up));
    }
    Ok(DistributedOtdRun {
        whitened: WhitenedTensor {
            tensor: SymTensor3::symmetrize(&acc3.scale(1.0 / s as f64)),
            whitening,
            m2_hat,
        },
        transcript: tr,
        ledger: privacy.ledger(),
    })
}

fn column_distance(a: &Matrix, i: usize, b: &Matrix, j: usize) -> f64 {
    (a.column(i) - b.column(j)).norm()
}

/// Mean over recovered columns of the distance to the nearest true column.
pub fn q_comp(a_hat: &Matrix, a_true: &Matrix) -> Result<f64> {
    if a_hat.shape() != a_true.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a_hat.shape(),
            a_true.shape()
        )));
    }
    let k = a_hat.ncols();
    if k == 0 {
        return Err(Error::Empty("no components".into()));
    }
    let total: f64 = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| column_distance(a_hat, i, a_true, j))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / k as f64)
}

/// One-to-one assignment of recovered columns to true columns, greedily by
/// smallest distance. `result[i]` is the true column matched to `a_hat[i]`.
pub fn match_components(a_hat: &Matrix, a_true: &Matrix) -> Result<Vec<usize>> {
    if a_hat.shape() != a_true.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a_hat.shape(),
            a_true.shape()
        )));
    }
    let k = a_hat.ncols();
    let mut pairs: Vec<(f64, usize, usize)> = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| (column_distance(a_hat, i, a_true, j), i, j))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assign = vec![usize::MAX; k];
    let mut taken = vec![false; k];
    for (_, i, j) in pairs {
        if assign[i] == usize::MAX && !taken[j] {
            assign[i] = j;
            taken[j] = true;
        }
    }
    Ok(assign)
}

/// Clamps negatives to zero and rescales each column to sum to one. Columns
/// that end up all zero stay zero and are flagged.
pub fn stm_postprocess(a_hat: &Matrix) -> (Matrix, Vec<bool>) {
    let mut out = a_hat.map(|x| x.max(0.0));
    let mut degenerate = Vec::with_capacity(out.ncols());
    for mut col in out.column_iter_mut() {
        let s = col.sum();
        if s > 0.0 {
            col /= s;
            degenerate.push(false);
        } else {
            col.fill(0.0);
            degenerate.push(true);
        }
    }
    (out, degenerate)
}
