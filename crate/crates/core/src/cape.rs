//! Correlated-noise averaging across sites.
//!
//! Each round a noise generator hands every site a share `e_s` with
//! `Σ μ_s e_s = 0`, the aggregator hands every site a share `f_s`, and each
//! site adds its own `g_s`. Sites upload `f(x_s) + e_s + f_s + g_s`; the
//! aggregator removes the `f_s` it issued and the `e_s` cancel in the weighted
//! sum, leaving only `Σ μ_s g_s` as noise.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::transcript::{Payload, PayloadKind, ProtocolTranscript, Role};

/// Per-site noise variances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiteNoise {
    /// Variance a site would need on its own.
    pub tau_s_sq: f64,
    pub tau_e_sq: f64,
    pub tau_f_sq: f64,
    pub tau_g_sq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisePlan {
    sites: Vec<SiteNoise>,
    weights: Vec<f64>,
}

impl NoisePlan {
    pub fn sites(&self) -> &[SiteNoise] {
        &self.sites
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    /// `Σ μ_s² τ_gs²`, the variance left after cancellation.
    pub fn aggregate_noise_var(&self) -> f64 {
        self.sites
            .iter()
            .zip(&self.weights)
            .map(|(n, m)| m * m * n.tau_g_sq)
            .sum()
    }

    /// Checks both collusion constraints, `τ_e² + τ_g² ≥ τ_s²` and
    /// `τ_f² + τ_g² ≥ τ_s²`, up to an absolute slack of `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (s, n) in self.sites.iter().enumerate() {
            let vals = [n.tau_s_sq, n.tau_e_sq, n.tau_f_sq, n.tau_g_sq];
            if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Infeasible(format!("site {s}: negative or non-finite variance {vals:?}")));
            }
            if n.tau_e_sq + n.tau_g_sq < n.tau_s_sq - tol {
                return Err(Error::Infeasible(format!(
                    "site {s}: e + g variance {} below required {}",
                    n.tau_e_sq + n.tau_g_sq,
                    n.tau_s_sq
                )));
            }
            if n.tau_f_sq + n.tau_g_sq < n.tau_s_sq - tol {
                return Err(Error::Infeasible(format!(
                    "site {s}: f + g variance {} below required {}",
                    n.tau_f_sq + n.tau_g_sq,
                    n.tau_s_sq
                )));
            }
        }
        Ok(())
    }
}

/// Aggregation weights `μ_s ≥ 0` with `Σ μ_s = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteWeight(Vec<f64>);

impl SiteWeight {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::Empty("site weights".into()));
        }
        if mu.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidArgument(format!("weights must be >= 0: {mu:?}")));
        }
        let total: f64 = mu.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(SiteWeight(mu))
    }

    pub fn uniform(s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::Empty("site weights".into()));
        }
        Ok(SiteWeight(vec![1.0 / s as f64; s]))
    }

    /// `μ_s = N_s / N`.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if counts.is_empty() || total == 0 {
            return Err(Error::Empty("site sample counts".into()));
        }
        let mut mu: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let drift: f64 = 1.0 - mu.iter().sum::<f64>();
        let last = mu.len() - 1;
        mu[last] += drift;
        SiteWeight::new(mu)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Equal-weight plan: `τ_e² = τ_f² = (1 − 1/S)τ_s²`, `τ_g² = τ_s²/S`.
pub fn cape_plan(tau_s: f64, s: usize) -> Result<NoisePlan> {
    if !(tau_s >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau_s = {tau_s} must be >= 0")));
    }
    if s == 0 {
        return Err(Error::InvalidArgument("site count must be >= 1".into()));
    }
    cape_plan_per_site(&vec![tau_s; s])
}

/// Weighted zero-sum shares with standard deviations `sd` (of `μ_s e_s`)
/// exist only when no `sd` exceeds the sum of the others.
fn check_polygon(sd: &[f64]) -> Result<()> {
    let sd_max = sd.iter().cloned().fold(0.0, f64::max);
    if sd_max > sd.iter().sum::<f64>() - sd_max + 1e-12 * sd_max {
        return Err(Error::Infeasible(format!(
            "zero-sum shares impossible: a standard deviation of {sd_max} exceeds the others' sum"
        )));
    }
    Ok(())
}

/// Uniform aggregation weights but a site-specific `τ_s` (sites with
/// different sample counts). Each site keeps the equal-weight split of its own
/// variance. [`Error::Infeasible`] when one `τ_s` exceeds the sum of the
/// others, since no zero-sum share vector has those marginals.
pub fn cape_plan_per_site(tau: &[f64]) -> Result<NoisePlan> {
    if tau.is_empty() {
        return Err(Error::InvalidArgument("site count must be >= 1".into()));
    }
    if tau.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument(format!("tau values must be >= 0: {tau:?}")));
    }
    if tau.len() > 1 {
        check_polygon(tau)?;
    }
    let s = tau.len() as f64;
    let sites = tau
        .iter()
        .map(|t| {
            let v = t * t;
            SiteNoise {
                tau_s_sq: v,
                tau_e_sq: (1.0 - 1.0 / s) * v,
                tau_f_sq: (1.0 - 1.0 / s) * v,
                tau_g_sq: v / s,
            }
        })
        .collect();
    Ok(NoisePlan {
        sites,
        weights: vec![1.0 / s; tau.len()],
    })
}

fn check_weighted_inputs(mu: &SiteWeight, tau: &[f64]) -> Result<()> {
    if mu.len() != tau.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} sites",
            mu.len(),
            tau.len()
        )));
    }
    if mu.as_slice().iter().any(|&m| m <= 0.0) {
        return Err(Error::InvalidArgument("weighted plans need every weight > 0".into()));
    }
    if tau.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument(format!("tau values must be > 0: {tau:?}")));
    }
    Ok(())
}

/// Closed-form plan for unequal weights that meets the collusion constraints
/// with equality and `Σ μ_s² τ_gs² = τ_c²`. With `R = τ_c² − Σ_{s<S} μ_s²τ_s²`:
///
/// ```text
/// τ_gS² = τ_S²/2 + R/(2μ_S²)          τ_eS² = τ_fS² = τ_S²/2 − R/(2μ_S²)
/// τ_es² = τ_fs² = (μ_S²τ_S² − R) / (2 μ_s² (S−1))      τ_gs² = τ_s² − τ_es²
/// ```
///
/// Any negative variance means no equality solution exists and is reported as
/// [`Error::Infeasible`]; values within `1e-12·max τ_s²` of zero are read as zero.
pub fn unequal_plan(mu: &SiteWeight, tau: &[f64], tau_c: f64) -> Result<NoisePlan> {
    check_weighted_inputs(mu, tau)?;
    if !(tau_c > 0.0 && tau_c.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau_c = {tau_c} must be > 0")));
    }
    let m = mu.as_slice();
    let s = m.len();
    let last = s - 1;
    let tau_sq: Vec<f64> = tau.iter().map(|t| t * t).collect();
    let tol = 1e-12 * tau_sq.iter().cloned().fold(0.0, f64::max);
    let tau_c_sq = tau_c * tau_c;

    let nonneg = |v: f64, what: &str, site: usize| -> Result<f64> {
        if v < -tol {
            Err(Error::Infeasible(format!("{what} for site {site} would be {v}")))
        } else {
            Ok(v.max(0.0))
        }
    };

    if s == 1 {
        if (tau_c_sq - tau_sq[0]).abs() > tol {
            return Err(Error::Infeasible(format!(
                "a single site needs tau_c^2 = tau^2, got {tau_c_sq} vs {}",
                tau_sq[0]
            )));
        }
        return Ok(NoisePlan {
            sites: vec![SiteNoise {
                tau_s_sq: tau_sq[0],
                tau_e_sq: 0.0,
                tau_f_sq: 0.0,
                tau_g_sq: tau_sq[0],
            }],
            weights: m.to_vec(),
        });
    }

    let a: f64 = (0..last).map(|i| m[i] * m[i] * tau_sq[i]).sum();
    let r = tau_c_sq - a;
    let b = m[last] * m[last] * tau_sq[last];
    let g_last = nonneg(tau_sq[last] / 2.0 + r / (2.0 * m[last] * m[last]), "tau_g^2", last)?;
    let e_last = nonneg(tau_sq[last] / 2.0 - r / (2.0 * m[last] * m[last]), "tau_e^2", last)?;

    let mut sites = Vec::with_capacity(s);
    for i in 0..last {
        let e = nonneg((b - r) / (2.0 * m[i] * m[i] * (s - 1) as f64), "tau_e^2", i)?;
        let g = nonneg(tau_sq[i] - e, "tau_g^2", i)?;
        sites.push(SiteNoise {
            tau_s_sq: tau_sq[i],
            tau_e_sq: e,
            tau_f_sq: e,
            tau_g_sq: g,
        });
    }
    sites.push(SiteNoise {
        tau_s_sq: tau_sq[last],
        tau_e_sq: e_last,
        tau_f_sq: e_last,
        tau_g_sq: g_last,
    });
    Ok(NoisePlan {
        sites,
        weights: m.to_vec(),
    })
}

/// Interval of `τ_c²` values for which [`unequal_plan`] succeeds, or `None`
/// when it is empty.
pub fn feasible_tau_c_sq_range(mu: &SiteWeight, tau: &[f64]) -> Result<Option<(f64, f64)>> {
    check_weighted_inputs(mu, tau)?;
    let m = mu.as_slice();
    let s = m.len();
    if s == 1 {
        return Ok(Some((tau[0] * tau[0], tau[0] * tau[0])));
    }
    let last = s - 1;
    let w: Vec<f64> = m.iter().zip(tau).map(|(m, t)| m * m * t * t).collect();
    let a: f64 = w[..last].iter().sum();
    let b = w[last];
    let min_w = w[..last].iter().cloned().fold(f64::INFINITY, f64::min);
    let lo = (a - b).max(a + b - 2.0 * (s - 1) as f64 * min_w).max(0.0);
    let hi = a + b;
    Ok(if lo < hi { Some((lo, hi)) } else { None })
}

/// Draws `τ_c` uniformly (in `τ_c²`) from the interior of the feasible range.
pub fn random_feasible_tau_c(mu: &SiteWeight, tau: &[f64], rng: &mut RngStream) -> Result<Option<f64>> {
    use rand::Rng;
    Ok(feasible_tau_c_sq_range(mu, tau)?.map(|(lo, hi)| {
        let mut v = lo;
        while v <= lo || v >= hi {
            v = rng.random_range(lo..hi);
        }
        v.sqrt()
    }))
}

/// `G(n) = (N²/S²) Σ 1/N_s²`: how much larger the estimator variance is with
/// per-site calibration than with the pooled sample, when weights are `N_s/N`.
pub fn gain(n: &[usize]) -> Result<f64> {
    if n.is_empty() {
        return Err(Error::Empty("site sizes".into()));
    }
    if n.contains(&0) {
        return Err(Error::InvalidArgument("site sizes must be >= 1".into()));
    }
    let total: f64 = n.iter().map(|&x| x as f64).sum();
    let s = n.len() as f64;
    Ok(n.iter().map(|&x| (total / (s * x as f64)).powi(2)).sum())
}

/// Zero-sum shares with marginal variance `(1 − 1/S)τ_s²`: i.i.d. draws minus
/// their mean.
pub fn zero_sum_shares(s: usize, tau_s: f64, rng: &mut RngStream) -> Vec<f64> {
    let z = rng.normals(s, tau_s);
    let mean = z.iter().sum::<f64>() / s.max(1) as f64;
    z.into_iter().map(|x| x - mean).collect()
}

/// Gaussian shares `e[s]` (each a length-`len` buffer) with
/// `Σ_s μ_s e[s][i] = 0` for every `i` and `Var(e[s][i]) = variances[s]`.
///
/// Works on `u_s = μ_s e_s`, which must sum to zero with variances
/// `w_s = μ_s² v_s`:
/// * all `w_s` equal: i.i.d. draws minus their mean;
/// * one site carries exactly the others' total variance: independent draws
///   for the rest and minus their sum for that site;
/// * otherwise `u = z − p Σ z` with `z_s ~ N(0, c_s)`, `p_s = c_s / C`, where
///   `x_s = c_s/C` solves `x(1 − x) = w_s/C` and `C` is found by bisection so
///   that `Σ x_s = 1`;
/// * when that equation has no root, a two-dimensional construction that
///   only needs each standard deviation to be at most the sum of the others.
pub fn weighted_zero_sum(
    mu: &[f64],
    variances: &[f64],
    len: usize,
    rng: &mut RngStream,
) -> Result<Vec<Vec<f64>>> {
    let s = mu.len();
    if s != variances.len() {
        return Err(Error::DimensionMismatch(format!("{s} weights for {} variances", variances.len())));
    }
    if s == 0 {
        return Err(Error::Empty("sites".into()));
    }
    if mu.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidArgument("zero-sum shares need every weight > 0".into()));
    }
    let w: Vec<f64> = mu.iter().zip(variances).map(|(m, v)| m * m * v).collect();
    let total: f64 = w.iter().sum();
    let w_max = w.iter().cloned().fold(0.0, f64::max);
    let to_e = |u: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        u.into_iter()
            .zip(mu)
            .map(|(row, m)| row.into_iter().map(|x| x / m).collect())
            .collect()
    };

    if total == 0.0 {
        return Ok(vec![vec![0.0; len]; s]);
    }
    if s == 1 {
        return Err(Error::Infeasible("a single zero-sum share must be zero".into()));
    }
    let rel = 1e-9 * total;

    if w.iter().all(|x| (x - w[0]).abs() <= rel) {
        // z_s ~ N(0, w S/(S−1))
        let sd = (w[0] * s as f64 / (s - 1) as f64).sqrt();
        let z: Vec<Vec<f64>> = (0..s).map(|_| rng.normals(len, sd)).collect();
        let u = (0..s)
            .map(|k| {
                (0..len)
                    .map(|i| {
                        let mean = z.iter().map(|row| row[i]).sum::<f64>() / s as f64;
                        z[k][i] - mean
                    })
                    .collect()
            })
            .collect();
        return Ok(to_e(u));
    }

    if let Some(heavy) = (0..s).rev().find(|&k| (2.0 * w[k] - total).abs() <= rel) {
        let mut u: Vec<Vec<f64>> = (0..s)
            .map(|k| if k == heavy { vec![0.0; len] } else { rng.normals(len, w[k].sqrt()) })
            .collect();
        for i in 0..len {
            u[heavy][i] = -(0..s).filter(|&k| k != heavy).map(|k| u[k][i]).sum::<f64>();
        }
        return Ok(to_e(u));
    }

    let sd: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    check_polygon(&sd)?;
    let x_of = |c: f64| -> Vec<f64> {
        w.iter()
            .map(|&wi| (1.0 - (1.0 - 4.0 * wi / c).max(0.0).sqrt()) / 2.0)
            .collect()
    };
    let g = |c: f64| x_of(c).iter().sum::<f64>();
    let (mut lo, mut hi) = (4.0 * w_max, 2.0 * total);
    if w_max >= total / 2.0 || g(lo) < 1.0 {
        return Ok(to_e(triangle_shares(&sd, len, rng)));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c_total = 0.5 * (lo + hi);
    let x = x_of(c_total);
    let x_sum: f64 = x.iter().sum();
    let p: Vec<f64> = x.iter().map(|xi| xi / x_sum).collect();
    let z: Vec<Vec<f64>> = x.iter().map(|xi| rng.normals(len, (xi * c_total).sqrt())).collect();
    let u = (0..s)
        .map(|k| {
            (0..len)
                .map(|i| {
                    let zs: f64 = z.iter().map(|row| row[i]).sum();
                    z[k][i] - p[k] * zs
                })
                .collect()
        })
        .collect();
    Ok(to_e(u))
}

/// Zero-sum draws `u_s = a_s · z` with `z ~ N(0, I₂)` and vectors `a_s` of
/// length `sd[s]` forming a closed polygon. Sites are split into three groups
/// whose members share a direction; the group lengths form a triangle.
fn triangle_shares(sd: &[f64], len: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let s = sd.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| sd[b].total_cmp(&sd[a]).then(a.cmp(&b)));
    let mut group = vec![0usize; s];
    let mut sums = [sd[order[0]], 0.0, 0.0];
    for &k in &order[1..] {
        let g = if sums[1] <= sums[2] { 1 } else { 2 };
        group[k] = g;
        sums[g] += sd[k];
    }
    let [l, b, c] = sums;
    let x = (l * l + c * c - b * b) / (2.0 * l);
    let y = (c * c - x * x).max(0.0).sqrt();
    // vertices (0,0), (l,0), (x,y); each side's unit direction
    let dirs = [
        [1.0, 0.0],
        [(x - l) / b.max(f64::MIN_POSITIVE), y / b.max(f64::MIN_POSITIVE)],
        [-x / c.max(f64::MIN_POSITIVE), -y / c.max(f64::MIN_POSITIVE)],
    ];
    let z0 = rng.normals(len, 1.0);
    let z1 = rng.normals(len, 1.0);
    (0..s)
        .map(|k| {
            let d = dirs[group[k]];
            (0..len)
                .map(|i| sd[k] * (d[0] * z0[i] + d[1] * z1[i]))
                .collect()
        })
        .collect()
}

/// Per-role stream factory. Streams are labelled `"{scope}{role}/r{round}"`.
#[derive(Clone, Debug)]
pub struct CapeRngs {
    seed: u64,
    scope: String,
}

impl CapeRngs {
    pub fn new(seed: u64) -> Self {
        CapeRngs {
            seed,
            scope: String::new(),
        }
    }

    /// Streams under a prefix, e.g. one scope per trial.
    pub fn scoped(seed: u64, scope: &str) -> Self {
        CapeRngs {
            seed,
            scope: format!("{scope}/"),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, role: Role, round: u32) -> RngStream {
        RngStream::new(self.seed, format!("{}{role}/r{round}", self.scope))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ProtocolOptions {
    /// Sites are trusted not to collude with the noise generator; f-shares
    /// are then all zero (still delivered). Needs at least three sites.
    pub trusted_sites: bool,
}

/// The e- and f-shares of one round, each `S` buffers of length `len`.
#[derive(Clone, Debug)]
pub struct CorrelatedShares {
    pub e: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
}

/// Draws the noise generator's and the aggregator's shares for `round`.
pub fn draw_correlated_shares(
    plan: &NoisePlan,
    len: usize,
    rngs: &CapeRngs,
    round: u32,
    opts: ProtocolOptions,
) -> Result<CorrelatedShares> {
    let s = plan.num_sites();
    let variances: Vec<f64> = plan.sites().iter().map(|n| n.tau_e_sq).collect();
    let mut ng = rngs.stream(Role::NoiseGenerator, round);
    let e = weighted_zero_sum(plan.weights(), &variances, len, &mut ng)?;
    let f = if opts.trusted_sites {
        if s <= 2 {
            return Err(Error::InvalidArgument(
                "trusted-site mode needs more than two sites".into(),
            ));
        }
        vec![vec![0.0; len]; s]
    } else {
        let mut agg = rngs.stream(Role::Aggregator, round);
        plan.sites()
            .iter()
            .map(|n| agg.normals(len, n.tau_f_sq.sqrt()))
            .collect()
    };
    Ok(CorrelatedShares { e, f })
}

/// One scalar averaging round with uniform weights `1/S`.
///
/// The estimate equals `mean(values) + (1/S) Σ g_s` up to rounding; every
/// share and upload is recorded in the transcript.
pub fn cape_average(
    values: &[f64],
    plan: &NoisePlan,
    rngs: &CapeRngs,
    round: u32,
    opts: ProtocolOptions,
) -> Result<(f64, ProtocolTranscript)> {
    let s = values.len();
    if s == 0 {
        return Err(Error::Empty("site values".into()));
    }
    if plan.num_sites() != s {
        return Err(Error::DimensionMismatch(format!("plan for {} sites, {s} values", plan.num_sites())));
    }
    let uniform = vec![1.0 / s as f64; s];
    scalar_round(values, plan, &uniform, rngs, round, opts)
}

/// One scalar round aggregated as `Σ μ_s (â_s − f_s)` with the plan's weights.
pub fn weighted_cape_average(
    values: &[f64],
    plan: &NoisePlan,
    rngs: &CapeRngs,
    round: u32,
    opts: ProtocolOptions,
) -> Result<(f64, ProtocolTranscript)> {
    if values.is_empty() {
        return Err(Error::Empty("site values".into()));
    }
    if plan.num_sites() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "plan for {} sites, {} values",
            plan.num_sites(),
            values.len()
        )));
    }
    let weights = plan.weights().to_vec();
    scalar_round(values, plan, &weights, rngs, round, opts)
}

fn scalar_round(
    values: &[f64],
    plan: &NoisePlan,
    weights: &[f64],
    rngs: &CapeRngs,
    round: u32,
    opts: ProtocolOptions,
) -> Result<(f64, ProtocolTranscript)> {
    let s = values.len();
    let shares = draw_correlated_shares(plan, 1, rngs, round, opts)?;
    let mut tr = ProtocolTranscript::new();
    for k in 0..s {
        tr.push(round, Role::NoiseGenerator, Role::Site(k), PayloadKind::EShare, Payload::Scalar(shares.e[k][0]));
    }
    for k in 0..s {
        tr.push(round, Role::Aggregator, Role::Site(k), PayloadKind::FShare, Payload::Scalar(shares.f[k][0]));
    }
    let mut uploads = Vec::with_capacity(s);
    for k in 0..s {
        let mut rng = rngs.stream(Role::Site(k), round);
        let g = rng.normal(plan.sites()[k].tau_g_sq.sqrt());
        tr.push(round, Role::Site(k), Role::Site(k), PayloadKind::LocalNoise, Payload::Scalar(g));
        let up = values[k] + shares.e[k][0] + shares.f[k][0] + g;
        tr.push(round, Role::Site(k), Role::Aggregator, PayloadKind::SiteUpload, Payload::Scalar(up));
        uploads.push(up);
    }
    let estimate = (0..s).map(|k| weights[k] * (uploads[k] - shares.f[k][0])).sum();
    Ok((estimate, tr))
}

/// Baseline without correlated noise: each site adds `N(0, τ_s²)` and the
/// aggregator takes the plain mean.
pub fn conventional_average(
    values: &[f64],
    tau: &[f64],
    rngs: &CapeRngs,
    round: u32,
) -> Result<(f64, ProtocolTranscript)> {
    if values.is_empty() {
        return Err(Error::Empty("site values".into()));
    }
    if tau.len() != values.len() {
        return Err(Error::DimensionMismatch(format!("{} taus for {} sites", tau.len(), values.len())));
    }
    let mut tr = ProtocolTranscript::new();
    let mut acc = 0.0;
    for (k, (&v, &t)) in values.iter().zip(tau).enumerate() {
        let up = v + rngs.stream(Role::Site(k), round).normal(t);
        tr.push(round, Role::Site(k), Role::Aggregator, PayloadKind::SiteUpload, Payload::Scalar(up));
        acc += up;
    }
    Ok((acc / values.len() as f64, tr))
}
