//! Gaussian-mechanism calibration, moment sensitivities and the noise
//! samplers used by the private estimators.

use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{d_sym, Matrix, SymMatrix, SymTensor3, Tensor3};

/// An `(ε, δ)` budget with `ε > 0` and `0 < δ < 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacySpec {
    epsilon: f64,
    delta: f64,
}

impl PrivacySpec {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidPrivacy(format!("epsilon = {epsilon} must be > 0")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidPrivacy(format!("delta = {delta} must be in (0, 1)")));
        }
        Ok(PrivacySpec { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Even split into two stages of `(ε/2, δ/2)`.
    pub fn split_half(&self) -> (PrivacySpec, PrivacySpec) {
        let half = PrivacySpec {
            epsilon: self.epsilon / 2.0,
            delta: self.delta / 2.0,
        };
        (half, half)
    }
}

/// Either a real budget or the explicit no-noise mode used for testing the
/// pipelines against their non-private counterparts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Privacy {
    Noiseless,
    Dp(PrivacySpec),
}

impl Privacy {
    /// Noise standard deviation for this sensitivity; zero when noiseless.
    pub fn std_for(&self, sensitivity: f64) -> Result<f64> {
        match self {
            Privacy::Noiseless => Ok(0.0),
            Privacy::Dp(spec) => gaussian_std(sensitivity, spec),
        }
    }

    pub fn is_noiseless(&self) -> bool {
        matches!(self, Privacy::Noiseless)
    }
}

/// Budgets spent by the stages of a multi-round mechanism; totals compose
/// additively.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrivacyLedger {
    entries: Vec<(String, PrivacySpec)>,
}

impl PrivacyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, stage: impl Into<String>, spec: PrivacySpec) {
        self.entries.push((stage.into(), spec));
    }

    pub fn entries(&self) -> &[(String, PrivacySpec)] {
        &self.entries
    }

    /// `(Σ ε, Σ δ)`
    pub fn total(&self) -> (f64, f64) {
        self.entries
            .iter()
            .fold((0.0, 0.0), |(e, d), (_, s)| (e + s.epsilon, d + s.delta))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Single topic model.
    Stm,
    /// Mixture of Gaussians with shared spherical covariance.
    Mog,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentOrder {
    Second,
    Third,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sensitivity {
    pub value: f64,
    pub model: ModelKind,
    pub order: MomentOrder,
}

/// `(Δ/ε)·√(2 ln(1.25/δ))`
pub fn gaussian_std(sensitivity: f64, spec: &PrivacySpec) -> Result<f64> {
    if !(sensitivity >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sensitivity = {sensitivity} must be >= 0"
        )));
    }
    PrivacySpec::new(spec.epsilon, spec.delta)?;
    Ok(sensitivity / spec.epsilon * (2.0 * (1.25 / spec.delta).ln()).sqrt())
}

pub fn sensitivity_m2(model: ModelKind, n: usize) -> Result<Sensitivity> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let n = n as f64;
    let value = match model {
        ModelKind::Stm => std::f64::consts::SQRT_2 / n,
        ModelKind::Mog => 1.0 / n,
    };
    Ok(Sensitivity {
        value,
        model,
        order: MomentOrder::Second,
    })
}

/// `dim` and `sigma_sq` only enter the MOG bound `2/N + 6Dσ²/N`.
pub fn sensitivity_m3(model: ModelKind, n: usize, dim: usize, sigma_sq: f64) -> Result<Sensitivity> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let n = n as f64;
    let value = match model {
        ModelKind::Stm => std::f64::consts::SQRT_2 / n,
        ModelKind::Mog => {
            if !(sigma_sq >= 0.0) {
                return Err(Error::InvalidArgument(format!("sigma_sq = {sigma_sq} must be >= 0")));
            }
            2.0 / n + 6.0 * dim as f64 * sigma_sq / n
        }
    };
    Ok(Sensitivity {
        value,
        model,
        order: MomentOrder::Third,
    })
}

/// Symmetric Gaussian matrix: entries `i <= j` drawn row by row, then mirrored.
pub fn sym_noise_matrix(dim: usize, tau: f64, rng: &mut RngStream) -> SymMatrix {
    SymMatrix::from_upper(dim, |_, _| rng.normal(tau))
}

/// I.i.d. Gaussian matrix, drawn in row-major order.
pub fn iid_noise_matrix(dim: usize, tau: f64, rng: &mut RngStream) -> Matrix {
    let vals = rng.normals(dim * dim, tau);
    Matrix::from_row_slice(dim, dim, &vals)
}

/// I.i.d. Gaussian cubic tensor.
pub fn iid_noise_tensor(dim: usize, tau: f64, rng: &mut RngStream) -> Tensor3 {
    Tensor3::from_vec(dim, rng.normals(dim * dim * dim, tau)).expect("length matches")
}

/// Symmetric tensor whose unique entries are i.i.d. N(0, tau²).
pub fn sym_noise_tensor3(dim: usize, tau: f64, rng: &mut RngStream) -> SymTensor3 {
    let b = rng.normals(d_sym(dim, 3), tau);
    SymTensor3::from_unique(dim, &b).expect("length matches")
}

/// Vector with density proportional to `exp(−β‖b‖₂)`: a uniform direction
/// scaled by an Erlang(n, β) radius.
pub fn avn_noise_vector(n: usize, beta: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta = {beta} must be > 0")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut dir = rng.normals(n, 1.0);
    let mut norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    while norm == 0.0 {
        dir = rng.normals(n, 1.0);
        norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let exp = Exp::new(beta).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let radius: f64 = (0..n).map(|_| exp.sample(rng)).sum();
    Ok(dir.into_iter().map(|x| radius * x / norm).collect())
}

pub fn avn_noise_tensor3(dim: usize, beta: f64, rng: &mut RngStream) -> Result<SymTensor3> {
    let b = avn_noise_vector(d_sym(dim, 3), beta, rng)?;
    SymTensor3::from_unique(dim, &b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(e: f64, d: f64) -> PrivacySpec {
        PrivacySpec::new(e, d).unwrap()
    }

    #[test]
    fn privacy_spec_validation() {
        assert!(PrivacySpec::new(0.0, 0.01).is_err());
        assert!(PrivacySpec::new(-1.0, 0.01).is_err());
        assert!(PrivacySpec::new(1.0, 0.0).is_err());
        assert!(PrivacySpec::new(1.0, 1.0).is_err());
        assert!(PrivacySpec::new(f64::NAN, 0.5).is_err());
        assert!(PrivacySpec::new(1.0, 0.5).is_ok());
    }

    #[test]
    fn gaussian_std_examples() {
        assert_eq!(gaussian_std(0.0, &spec(1.0, 0.01)).unwrap(), 0.0);
        let delta = 1.25 * (-2.0f64).exp();
        assert!((gaussian_std(1.0, &spec(1.0, delta)).unwrap() - 2.0).abs() < 1e-12);
        let expected = 0.01 / 0.5 * (2.0 * (125.0f64).ln()).sqrt();
        let got = gaussian_std(0.01, &spec(0.5, 0.01)).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.06215).abs() < 1e-5);
        assert!(gaussian_std(-1.0, &spec(1.0, 0.01)).is_err());
    }

    #[test]
    fn ledger_sums_stages() {
        let mut l = PrivacyLedger::new();
        l.record("m2", spec(0.5, 0.005));
        l.record("m3", spec(0.25, 0.001));
        let (e, d) = l.total();
        assert!((e - 0.75).abs() < 1e-15 && (d - 0.006).abs() < 1e-15);
        assert_eq!(PrivacyLedger::new().total(), (0.0, 0.0));
    }

    #[test]
    fn noiseless_has_zero_std() {
        assert_eq!(Privacy::Noiseless.std_for(3.0).unwrap(), 0.0);
    }

    #[test]
    fn sensitivity_examples() {
        let s = sensitivity_m2(ModelKind::Stm, 100).unwrap();
        assert!((s.value - 2f64.sqrt() / 100.0).abs() < 1e-16);
        assert_eq!(sensitivity_m2(ModelKind::Mog, 100).unwrap().value, 0.01);
        assert_eq!(sensitivity_m2(ModelKind::Stm, 1).unwrap().value, 2f64.sqrt());
        assert!(sensitivity_m2(ModelKind::Stm, 0).is_err());

        let s3 = sensitivity_m3(ModelKind::Stm, 100, 7, 3.0).unwrap();
        assert!((s3.value - 2f64.sqrt() / 100.0).abs() < 1e-16);
        assert_eq!(s3.order, MomentOrder::Third);
        let m = sensitivity_m3(ModelKind::Mog, 100, 10, 0.05).unwrap().value;
        assert!((m - 0.05).abs() < 1e-15);
        assert_eq!(sensitivity_m3(ModelKind::Mog, 40, 10, 0.0).unwrap().value, 2.0 / 40.0);
        assert!(sensitivity_m3(ModelKind::Mog, 0, 10, 0.0).is_err());
    }

    #[test]
    fn sym_noise_matrix_is_symmetric_and_zero_at_zero_tau() {
        let mut r = RngStream::new(1, "m");
        let z = sym_noise_matrix(4, 0.0, &mut r);
        assert_eq!(z.frobenius_norm(), 0.0);
        let m = sym_noise_matrix(3, 1.0, &mut r);
        assert_eq!(m.as_matrix(), &m.as_matrix().transpose());
        let mut upper = Vec::new();
        for i in 0..3 {
            for j in i..3 {
                upper.push(m.get(i, j));
            }
        }
        upper.sort_by(f64::total_cmp);
        upper.dedup();
        assert_eq!(upper.len(), 6);
    }

    #[test]
    fn sym_noise_matrix_off_diagonal_variance() {
        let mut r = RngStream::new(2, "var");
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let m = sym_noise_matrix(2, 2.0, &mut r);
            acc += m.get(0, 1).powi(2);
        }
        let var = acc / n as f64;
        assert!((var - 4.0).abs() < 0.2, "variance {var}");
    }

    #[test]
    fn iid_noise_mean_is_zero() {
        let mut r = RngStream::new(3, "iid");
        let n = 100_000;
        let vals: Vec<f64> = (0..n / 8)
            .flat_map(|_| iid_noise_tensor(2, 1.0, &mut r).vectorize())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 3.0 / (vals.len() as f64).sqrt());
        assert_eq!(iid_noise_matrix(3, 0.0, &mut r).norm(), 0.0);
    }

    #[test]
    fn noise_replays_by_stream_label() {
        let a = iid_noise_matrix(3, 1.0, &mut RngStream::new(5, "a"));
        let b = iid_noise_matrix(3, 1.0, &mut RngStream::new(5, "a"));
        let c = iid_noise_matrix(3, 1.0, &mut RngStream::new(5, "b"));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sym_noise_tensor_structure() {
        let mut r = RngStream::new(4, "t");
        assert_eq!(sym_noise_tensor3(3, 0.0, &mut r).norm(), 0.0);
        let t = sym_noise_tensor3(2, 1.0, &mut r);
        assert_eq!(t.as_tensor().asymmetry(), 0.0);
        let mut vals = t.as_tensor().vectorize();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        assert_eq!(vals.len(), 4);
    }

    #[test]
    fn sym_noise_tensor_variance_does_not_depend_on_multiplicity() {
        let mut r = RngStream::new(5, "tv");
        let n = 20_000;
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let t = sym_noise_tensor3(3, 1.5, &mut r);
            acc[0] += t.get(0, 0, 0).powi(2);
            acc[1] += t.get(0, 0, 1).powi(2);
            acc[2] += t.get(0, 1, 2).powi(2);
        }
        for a in acc {
            let var = a / n as f64;
            assert!((var - 2.25).abs() < 0.05 * 2.25, "variance {var}");
        }
    }

    #[test]
    fn avn_radius_mean_and_direction() {
        let mut r = RngStream::new(6, "avn");
        let n = 100_000;
        let mut norm_sum = 0.0;
        let mut dir_sum = [0.0; 10];
        for _ in 0..n {
            let b = avn_noise_vector(10, 2.0, &mut r).unwrap();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            norm_sum += nb;
            for (s, x) in dir_sum.iter_mut().zip(&b) {
                *s += x / nb;
            }
        }
        let mean = norm_sum / n as f64;
        assert!((mean - 5.0).abs() < 0.1, "mean radius {mean}");
        // each direction coordinate has variance 1/10
        let se = (0.1 / n as f64).sqrt();
        for s in dir_sum {
            assert!((s / n as f64).abs() < 3.0 * se + 1e-12);
        }
    }

    #[test]
    fn avn_rejects_nonpositive_beta_and_is_symmetric() {
        let mut r = RngStream::new(7, "avn2");
        assert!(avn_noise_tensor3(3, 0.0, &mut r).is_err());
        assert!(avn_noise_tensor3(3, -1.0, &mut r).is_err());
        let t = avn_noise_tensor3(3, 1.0, &mut r).unwrap();
        assert_eq!(t.as_tensor().asymmetry(), 0.0);
    }
}
