//! Seeded synthetic data: Gaussian data with a decaying covariance spectrum
//! for PCA, samples from planted mixture and topic models, and random planted
//! models.
//!
//! All draws come from [`RngStream`]s labelled `datagen/...` under the data seed,
//! so an [`ExperimentDataSpec`] always produces the same data.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::dp::ModelKind;
use crate::error::{Error, Result};
use crate::otd::{mog_moments, stm_moments, LatentModel, MomentPair};
use crate::pca::{preprocess, SiteDataset};
use crate::rng::RngStream;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Pca,
    Mog,
    Stm,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Pca => "pca",
            Family::Mog => "mog",
            Family::Stm => "stm",
        }
    }

    pub fn model_kind(&self) -> Option<ModelKind> {
        match self {
            Family::Pca => None,
            Family::Mog => Some(ModelKind::Mog),
            Family::Stm => Some(ModelKind::Stm),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentDataSpec {
    pub family: Family,
    pub dim: usize,
    pub k: usize,
    pub sites: usize,
    pub n_per_site: usize,
    /// MOG only.
    pub sigma_sq: f64,
    /// STM only.
    pub words_per_doc: usize,
    pub seed: u64,
}

impl ExperimentDataSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.k == 0 || self.k > self.dim {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= K <= D, got K = {}, D = {}",
                self.k, self.dim
            )));
        }
        if self.sites == 0 || self.n_per_site == 0 {
            return Err(Error::InvalidArgument("need at least one site and one sample per site".into()));
        }
        if self.family == Family::Mog && !(self.sigma_sq >= 0.0) {
            return Err(Error::InvalidArgument(format!("sigma_sq = {} must be >= 0", self.sigma_sq)));
        }
        if self.family == Family::Stm && self.words_per_doc < 3 {
            return Err(Error::InvalidArgument("documents need at least 3 words".into()));
        }
        Ok(())
    }

    fn stream(&self, label: &str) -> RngStream {
        RngStream::new(self.seed, format!("datagen/{label}"))
    }
}

/// Covariance eigenvalues: `1, 0.9, 0.9², …` for the top `k`, then `0.01`.
pub fn pca_spectrum(dim: usize, k: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| if i < k { 0.9f64.powi(i as i32) } else { 0.01 })
        .collect()
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix, with `R`'s diagonal made positive.
pub fn random_orthogonal(dim: usize, rng: &mut RngStream) -> Matrix {
    let g = Matrix::from_fn(dim, dim, |_, _| rng.normal(1.0));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..dim {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

/// PCA sites plus the ground truth they were drawn from.
#[derive(Clone, Debug)]
pub struct PcaData {
    pub sites: Vec<SiteDataset>,
    /// Covariance eigenbasis, columns in spectrum order.
    pub basis: Matrix,
    pub spectrum: Vec<f64>,
}

/// Zero-mean Gaussian samples `x = U Λ^{1/2} z`, `n_per_site` per site. The
/// pooled sample is preprocessed (centered, scaled to max norm 1) and split
/// back into sites in order.
pub fn gen_pca_data(spec: &ExperimentDataSpec) -> Result<PcaData> {
    spec.validate()?;
    let d = spec.dim;
    let spectrum = pca_spectrum(d, spec.k);
    let basis = random_orthogonal(d, &mut spec.stream("pca/basis"));
    let mut scaled = basis.clone();
    for (c, l) in spectrum.iter().enumerate() {
        scaled.column_mut(c).scale_mut(l.sqrt());
    }
    let n = spec.n_per_site;
    let mut raw = Matrix::zeros(d, spec.sites * n);
    for s in 0..spec.sites {
        let mut rng = spec.stream(&format!("pca/site-{s}"));
        let z = Matrix::from_fn(d, n, |_, _| rng.normal(1.0));
        raw.columns_mut(s * n, n).copy_from(&(&scaled * z));
    }
    let all = preprocess(&raw);
    let sites = (0..spec.sites)
        .map(|s| SiteDataset::new(s, all.columns(s * n, n).into_owned()))
        .collect::<Result<Vec<_>>>()?;
    Ok(PcaData {
        sites,
        basis,
        spectrum,
    })
}

fn component_sampler(model: &LatentModel) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(model.weights()).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// `n` samples `a_h + z`, `h ~ w`, `z ~ N(0, σ² I)`, with their labels.
pub fn gen_mog(model: &LatentModel, n: usize, rng: &mut RngStream) -> Result<(Matrix, Vec<usize>)> {
    if model.kind() != ModelKind::Mog {
        return Err(Error::InvalidArgument("model is not a Gaussian mixture".into()));
    }
    let d = model.dim();
    let sigma = model.sigma_sq().sqrt();
    let pick = component_sampler(model)?;
    let mut x = Matrix::zeros(d, n);
    let mut labels = Vec::with_capacity(n);
    for c in 0..n {
        let h = pick.sample(rng);
        labels.push(h);
        for r in 0..d {
            x[(r, c)] = model.components()[(r, h)] + rng.normal(sigma);
        }
    }
    Ok((x, labels))
}

/// `n_docs` documents of `L` i.i.d. words from topic `h ~ w`, with their
/// topics.
pub fn gen_stm(model: &LatentModel, n_docs: usize, rng: &mut RngStream) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    if model.kind() != ModelKind::Stm {
        return Err(Error::InvalidArgument("model is not a topic model".into()));
    }
    let pick = component_sampler(model)?;
    let words = (0..model.k())
        .map(|c| {
            let col: Vec<f64> = model.components().column(c).iter().cloned().collect();
            WeightedIndex::new(&col).map_err(|e| Error::InvalidArgument(format!("topic {c}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut docs = Vec::with_capacity(n_docs);
    let mut labels = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        let h = pick.sample(rng);
        labels.push(h);
        docs.push((0..model.words_per_doc()).map(|_| words[h].sample(rng)).collect());
    }
    Ok((docs, labels))
}

/// Population moments of a planted model, tagged with `n_samples = 0`.
pub fn exact_moments(model: &LatentModel) -> MomentPair {
    model.exact_moments(0)
}

/// Mixing weights proportional to `U(1, 2)` draws.
pub fn random_weights(k: usize, rng: &mut RngStream) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..2.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let drift = 1.0 - w.iter().sum::<f64>();
    w[k - 1] += drift;
    w
}

const MIN_ANGLE_DEG: f64 = 5.0;
const MIN_CONDITION: f64 = 1e-3;

/// Gaussian mixture with components uniform on the sphere scaled by
/// `U(0.5, 1]`. Redrawn while any two components are within 5° or the
/// component matrix is close to singular.
pub fn random_mog_model(dim: usize, k: usize, sigma_sq: f64, rng: &mut RngStream) -> Result<LatentModel> {
    if k == 0 || k > dim {
        return Err(Error::InvalidArgument(format!("need 1 <= K <= D, got K = {k}, D = {dim}")));
    }
    let cos_limit = MIN_ANGLE_DEG.to_radians().cos();
    for _ in 0..1000 {
        let mut a = Matrix::from_fn(dim, k, |_, _| rng.normal(1.0));
        for c in 0..k {
            let n = a.column(c).norm();
            let scale = 1.0 - rng.random_range(0.0..0.5);
            a.column_mut(c).scale_mut(scale / n);
        }
        let separated = (0..k).all(|i| {
            (i + 1..k).all(|j| {
                let cos = a.column(i).dot(&a.column(j)) / (a.column(i).norm() * a.column(j).norm());
                cos.abs() < cos_limit
            })
        });
        let sv = a.clone().svd(false, false).singular_values;
        if separated && sv.min() > MIN_CONDITION * sv.max() {
            return LatentModel::new(ModelKind::Mog, random_weights(k, rng), a, sigma_sq, 0);
        }
    }
    Err(Error::InvalidArgument("could not draw well-separated components".into()))
}

/// Topic model with Dirichlet(1) topics, drawn as normalized Exp(1) vectors.
pub fn random_stm_model(dim: usize, k: usize, words_per_doc: usize, rng: &mut RngStream) -> Result<LatentModel> {
    if k == 0 || k > dim {
        return Err(Error::InvalidArgument(format!("need 1 <= K <= D, got K = {k}, D = {dim}")));
    }
    for _ in 0..1000 {
        let mut a = Matrix::from_fn(dim, k, |_, _| Exp1.sample(rng));
        for mut col in a.column_iter_mut() {
            let s = col.sum();
            col /= s;
        }
        let sv = a.clone().svd(false, false).singular_values;
        if sv.min() > MIN_CONDITION * sv.max() {
            return LatentModel::new(ModelKind::Stm, random_weights(k, rng), a, 0.0, words_per_doc);
        }
    }
    Err(Error::InvalidArgument("could not draw independent topics".into()))
}

/// Planted model plus per-site and pooled empirical moments.
#[derive(Clone, Debug)]
pub struct OtdData {
    pub model: LatentModel,
    pub sites: Vec<MomentPair>,
    pub pooled: MomentPair,
}

/// Draws a planted model for the requested family, then `n_per_site` samples
/// (or documents) per site from independent streams.
pub fn gen_otd_data(spec: &ExperimentDataSpec) -> Result<OtdData> {
    spec.validate()?;
    let mut model_rng = spec.stream("model");
    let model = match spec.family {
        Family::Mog => random_mog_model(spec.dim, spec.k, spec.sigma_sq, &mut model_rng)?,
        Family::Stm => random_stm_model(spec.dim, spec.k, spec.words_per_doc, &mut model_rng)?,
        Family::Pca => return Err(Error::InvalidArgument("PCA data has no latent model".into())),
    };
    let mut sites = Vec::with_capacity(spec.sites);
    match spec.family {
        Family::Mog => {
            let mut all = Matrix::zeros(spec.dim, spec.sites * spec.n_per_site);
            for s in 0..spec.sites {
                let (x, _) = gen_mog(&model, spec.n_per_site, &mut spec.stream(&format!("site-{s}")))?;
                all.columns_mut(s * spec.n_per_site, spec.n_per_site).copy_from(&x);
                sites.push(mog_moments(&x, spec.sigma_sq)?);
            }
            let pooled = mog_moments(&all, spec.sigma_sq)?;
            Ok(OtdData { model, sites, pooled })
        }
        _ => {
            let mut all = Vec::with_capacity(spec.sites * spec.n_per_site);
            for s in 0..spec.sites {
                let (docs, _) = gen_stm(&model, spec.n_per_site, &mut spec.stream(&format!("site-{s}")))?;
                sites.push(stm_moments(&docs, spec.dim)?);
                all.extend(docs);
            }
            let pooled = stm_moments(&all, spec.dim)?;
            Ok(OtdData { model, sites, pooled })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pca::{nonprivate_pca, principal_angle};
    use crate::tensor::orthonormality_defect;
    use sha2::{Digest, Sha256};

    fn spec(family: Family) -> ExperimentDataSpec {
        ExperimentDataSpec {
            family,
            dim: 10,
            k: 3,
            sites: 3,
            n_per_site: 200,
            sigma_sq: 0.05,
            words_per_doc: 3,
            seed: 17,
        }
    }

    #[test]
    fn frozen_stream_digest() {
        let mut rng = RngStream::new(42, "digest");
        let mut h = Sha256::new();
        for _ in 0..100 {
            h.update(rng.normal(1.0).to_le_bytes());
        }
        let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, "94e5f96b0e86d98b625d837db6b87b0910d1ac310b1206dc963c99f6121c1a55");
    }

    #[test]
    fn pca_data_shapes_and_separation() {
        let data = gen_pca_data(&spec(Family::Pca)).unwrap();
        assert_eq!(data.sites.len(), 3);
        assert!(data.sites.iter().all(|s| s.n_samples() == 200 && s.dim() == 10));
        assert_ne!(data.sites[0].data(), data.sites[1].data());
        assert!(orthonormality_defect(&data.basis) < 1e-12);
        let again = gen_pca_data(&spec(Family::Pca)).unwrap();
        assert_eq!(again.sites[2].data(), data.sites[2].data());
    }

    #[test]
    fn pca_data_top_subspace_matches_basis() {
        let mut s = spec(Family::Pca);
        s.sites = 10;
        s.n_per_site = 10_000;
        let data = gen_pca_data(&s).unwrap();
        let est = nonprivate_pca(&data.sites, 3).unwrap();
        let truth = data.basis.columns(0, 3).into_owned();
        let angle = principal_angle(&est.subspace, &truth).unwrap();
        assert!(angle < 0.05, "angle {angle}");
    }

    #[test]
    fn mog_zero_noise_single_component() {
        let a = Matrix::from_column_slice(3, 1, &[0.1, 0.2, 0.3]);
        let m = LatentModel::new(ModelKind::Mog, vec![1.0], a.clone(), 0.0, 0).unwrap();
        let (x, labels) = gen_mog(&m, 10, &mut RngStream::new(1, "m")).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
        for c in x.column_iter() {
            assert_eq!(c, a.column(0));
        }
    }

    #[test]
    fn mog_frequencies_and_mean() {
        let mut rng = RngStream::new(2, "mm");
        let model = random_mog_model(6, 3, 0.05, &mut rng).unwrap();
        let n = 100_000;
        let (x, labels) = gen_mog(&model, n, &mut rng).unwrap();
        for (k, &w) in model.weights().iter().enumerate() {
            let freq = labels.iter().filter(|&&l| l == k).count() as f64 / n as f64;
            let se = (w * (1.0 - w) / n as f64).sqrt();
            assert!((freq - w).abs() < 3.0 * se, "component {k}: {freq} vs {w}");
        }
        let mean = x.column_mean();
        let expect = model.components() * nalgebra::DVector::from_column_slice(model.weights());
        assert!((mean - expect).norm() < 0.01);
    }

    #[test]
    fn mog_empirical_third_moment_converges() {
        let mut rng = RngStream::new(3, "m3");
        let model = random_mog_model(10, 5, 0.05, &mut rng).unwrap();
        let (x, _) = gen_mog(&model, 100_000, &mut rng).unwrap();
        let emp = mog_moments(&x, 0.05).unwrap();
        let exact = exact_moments(&model);
        let err = emp.m3.sub(&exact.m3).unwrap().norm();
        assert!(err < 0.05, "m3 error {err}");
    }

    #[test]
    fn stm_deterministic_topic() {
        let a = Matrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let m = LatentModel::new(ModelKind::Stm, vec![1.0], a, 0.0, 5).unwrap();
        let (docs, _) = gen_stm(&m, 20, &mut RngStream::new(4, "s")).unwrap();
        assert!(docs.iter().all(|d| d.len() == 5 && d.iter().all(|&w| w == 1)));
    }

    #[test]
    fn stm_marginal_and_moments() {
        let mut rng = RngStream::new(5, "sm");
        let model = random_stm_model(10, 3, 3, &mut rng).unwrap();
        let n = 100_000;
        let (docs, _) = gen_stm(&model, n, &mut rng).unwrap();
        let marginal = model.components() * nalgebra::DVector::from_column_slice(model.weights());
        for w in 0..10 {
            let p = marginal[w];
            let freq = docs.iter().filter(|d| d[0] == w).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() < 3.0 * se, "word {w}: {freq} vs {p}");
        }
        let emp = stm_moments(&docs, 10).unwrap();
        let err = (emp.m2.as_matrix() - exact_moments(&model).m2.as_matrix()).norm();
        assert!(err < 0.02, "m2 error {err}");
    }

    #[test]
    fn exact_moments_low_rank_psd() {
        let mut rng = RngStream::new(6, "ex");
        let model = random_mog_model(8, 3, 0.0, &mut rng).unwrap();
        let m = exact_moments(&model);
        let eig = m.m2.as_matrix().clone().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        assert!(vals.iter().all(|&v| v > -1e-12));
        assert!(vals[3..].iter().all(|&v| v.abs() < 1e-12));

        let a = Matrix::from_column_slice(2, 1, &[0.6, 0.8]);
        let single = LatentModel::new(ModelKind::Mog, vec![1.0], a, 0.0, 0).unwrap();
        let m = exact_moments(&single);
        assert!((m.m2.get(0, 1) - 0.48).abs() < 1e-15);
        assert!((m.m3.get(1, 1, 1) - 0.512).abs() < 1e-15);
    }

    #[test]
    fn random_models_are_valid() {
        let mut rng = RngStream::new(7, "rm");
        for _ in 0..20 {
            let m = random_mog_model(12, 6, 0.05, &mut rng).unwrap();
            assert!(m.components().column_iter().all(|c| c.norm() <= 1.0 && c.norm() > 0.5 - 1e-12));
            let t = random_stm_model(12, 6, 3, &mut rng).unwrap();
            assert!(t.components().column_iter().all(|c| (c.sum() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn otd_data_is_reproducible() {
        let a = gen_otd_data(&spec(Family::Mog)).unwrap();
        let b = gen_otd_data(&spec(Family::Mog)).unwrap();
        assert_eq!(a.pooled, b.pooled);
        assert_eq!(a.sites.len(), 3);
        let s = gen_otd_data(&spec(Family::Stm)).unwrap();
        assert_eq!(s.pooled.n_samples, 600);
        assert!(gen_otd_data(&spec(Family::Pca)).is_err());
    }
}
