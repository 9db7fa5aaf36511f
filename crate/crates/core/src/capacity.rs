//! Capacity and SINR of the shared cell.
//!
//! Cellular capacity at the BS is `log2 det(K_y) - sum_k log2 Ñ_k` with
//! `K_y = diag(Ñ) + sum_j H_j K_{x_j} H_j^*`. For general codebooks the
//! eigenvalues of `K_y` are bracketed with Weyl's inequality; for diagonal
//! covariances the determinant factorizes per subcarrier. All rates are in
//! bits/s/Hz.

use std::io::Write;

use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::hermitian::{hermitian_eigenvalues, CMatrix};
use crate::structure::{CodebookSkeleton, FactorGraph};

/// Which D2D pair (if any) reuses each subcarrier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occupancy {
    pair_on: Vec<Option<usize>>,
    tone_of: Vec<Option<usize>>,
}

impl Occupancy {
    /// `assignments[l]` is the subcarrier of pair `l`, or `None` when the pair is idle.
    pub fn new(subcarriers: usize, assignments: &[Option<usize>]) -> Result<Self> {
        let mut pair_on = vec![None; subcarriers];
        for (pair, tone) in assignments.iter().enumerate() {
            if let Some(k) = *tone {
                if k >= subcarriers {
                    return Err(Error::Dimension(format!("pair {pair} assigned to subcarrier {k} >= K")));
                }
                if pair_on[k].is_some() {
                    return Err(Error::DuplicateOccupancy { subcarrier: k });
                }
                pair_on[k] = Some(pair);
            }
        }
        Ok(Self { pair_on, tone_of: assignments.to_vec() })
    }

    /// Pair `l` on subcarrier `l`.
    pub fn diagonal(subcarriers: usize, pairs: usize) -> Result<Self> {
        let assignments: Vec<Option<usize>> = (0..pairs).map(Some).collect();
        Self::new(subcarriers, &assignments)
    }

    pub fn pair_on(&self, subcarrier: usize) -> Option<usize> {
        self.pair_on[subcarrier]
    }

    pub fn tone_of(&self, pair: usize) -> Option<usize> {
        self.tone_of.get(pair).copied().flatten()
    }

    pub fn pairs(&self) -> usize {
        self.tone_of.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.pair_on.len()
    }
}

/// Cellular powers `P_jk` (J x K, zero off the factor graph) and D2D powers `P'_l`, in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub cellular: Vec<Vec<f64>>,
    pub d2d: Vec<f64>,
}

impl PowerAllocation {
    pub fn zeros(users: usize, subcarriers: usize, pairs: usize) -> Self {
        Self { cellular: vec![vec![0.0; subcarriers]; users], d2d: vec![0.0; pairs] }
    }

    /// Checks shape, finiteness, non-negativity and the factor-graph support.
    pub fn validate(&self, graph: &FactorGraph) -> Result<()> {
        if self.cellular.len() != graph.users() || self.cellular.iter().any(|r| r.len() != graph.subcarriers()) {
            return Err(Error::Dimension(format!("allocation must be {}x{}", graph.users(), graph.subcarriers())));
        }
        for (j, row) in self.cellular.iter().enumerate() {
            for (k, &p) in row.iter().enumerate() {
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(Error::InvalidArgument(format!("P[{j}][{k}] = {p} is not a finite non-negative power")));
                }
                if p != 0.0 && !graph.entry(k, j) {
                    return Err(Error::OutsideSupport { user: j, subcarrier: k });
                }
            }
        }
        if self.d2d.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("D2D powers must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Thermal noise plus D2D interference seen by the BS on each subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalentNoise {
    pub per_subcarrier: Vec<f64>,
}

pub fn equivalent_noise(ch: &ChannelRealization, alloc: &PowerAllocation, occupancy: &Occupancy) -> EquivalentNoise {
    let per_subcarrier = (0..ch.subcarriers())
        .map(|k| match occupancy.pair_on(k) {
            Some(l) => ch.noise_power_w + ch.d2d_to_bs[l].norm_sqr() * alloc.d2d[l],
            None => ch.noise_power_w,
        })
        .collect();
    EquivalentNoise { per_subcarrier }
}

/// A user's transmit covariance kept as the two split terms whose sum is `K_{x_j}`.
#[derive(Debug, Clone)]
pub struct UserCovariance {
    pub first: CMatrix,
    pub second: CMatrix,
}

impl UserCovariance {
    pub fn total(&self) -> CMatrix {
        self.first.add(&self.second).expect("split terms share a shape")
    }

    /// `diag(P_j1, ..., P_jK)` with an empty second term.
    pub fn diagonal(powers: &[f64]) -> Self {
        let n = powers.len();
        Self { first: CMatrix::from_real_diagonal(powers), second: CMatrix::zeros(n, n) }
    }

    /// `(tau_1, tau_K)`: sums of the smallest and of the largest eigenvalues of the two terms.
    pub fn tau(&self) -> Result<(f64, f64)> {
        let a = hermitian_eigenvalues(&self.first)?;
        let b = hermitian_eigenvalues(&self.second)?;
        let (a0, a1) = (a[0], a[a.len() - 1]);
        let (b0, b1) = (b[0], b[b.len() - 1]);
        Ok((a0 + b0, a1 + b1))
    }
}

pub fn skeleton_covariances(skel: &CodebookSkeleton) -> Result<Vec<UserCovariance>> {
    (0..skel.users())
        .map(|j| skel.split_terms(j).map(|(first, second)| UserCovariance { first, second }))
        .collect()
}

pub fn diagonal_covariances(alloc: &PowerAllocation) -> Vec<UserCovariance> {
    alloc.cellular.iter().map(|row| UserCovariance::diagonal(row)).collect()
}

fn check_dims(ch: &ChannelRealization, covariances: &[UserCovariance], noise: &EquivalentNoise) -> Result<usize> {
    let k = ch.subcarriers();
    if covariances.len() != ch.users() || noise.per_subcarrier.len() != k {
        return Err(Error::Dimension(format!(
            "expected {} user covariances and {k} noise entries, got {} and {}",
            ch.users(),
            covariances.len(),
            noise.per_subcarrier.len()
        )));
    }
    for c in covariances {
        for m in [&c.first, &c.second] {
            if m.rows() != k || m.cols() != k {
                return Err(Error::Dimension(format!("covariances must be {k}x{k}")));
            }
        }
    }
    Ok(k)
}

/// `K_y = diag(Ñ) + sum_j H_j K_{x_j} H_j^*`.
pub fn received_covariance(ch: &ChannelRealization, covariances: &[UserCovariance], noise: &EquivalentNoise) -> Result<CMatrix> {
    check_dims(ch, covariances, noise)?;
    let mut ky = CMatrix::from_real_diagonal(&noise.per_subcarrier);
    for (j, cov) in covariances.iter().enumerate() {
        ky = ky.add(&cov.total().congruence_diag(&ch.cell_to_bs[j])?)?;
    }
    Ok(ky)
}

/// `log2 det(K_y) - sum_k log2 Ñ_k` for arbitrary Hermitian PSD user covariances.
pub fn exact_cellular_capacity_general(ch: &ChannelRealization, covariances: &[UserCovariance], noise: &EquivalentNoise) -> Result<f64> {
    let ky = received_covariance(ch, covariances, noise)?;
    let eig = hermitian_eigenvalues(&ky)?;
    if !(eig[0] > 0.0) {
        return Err(Error::SingularCovariance(eig[0]));
    }
    let logdet: f64 = eig.iter().map(|l| l.log2()).sum();
    let noise_term: f64 = noise.per_subcarrier.iter().map(|n| n.log2()).sum();
    Ok((logdet - noise_term).max(0.0))
}

fn gain_extremes(ch: &ChannelRealization, j: usize) -> (f64, f64) {
    ch.cell_to_bs[j].iter().map(Complex64::norm_sqr).fold((f64::INFINITY, 0.0), |(lo, hi), g| (lo.min(g), hi.max(g)))
}

fn sorted_noise(noise: &EquivalentNoise) -> Vec<f64> {
    let mut n = noise.per_subcarrier.clone();
    n.sort_by(f64::total_cmp);
    n
}

/// Interference ceiling `sum_j tau_{K,j} max_k |h_jk|^2` (upper) or floor
/// `sum_j tau_{1,j} min_k |h_jk|^2` (lower).
fn signal_shift(ch: &ChannelRealization, covariances: &[UserCovariance], upper: bool) -> Result<f64> {
    let mut total = 0.0;
    for (j, cov) in covariances.iter().enumerate() {
        let (tau_min, tau_max) = cov.tau()?;
        let (g_min, g_max) = gain_extremes(ch, j);
        total += if upper { tau_max * g_max } else { tau_min.max(0.0) * g_min };
    }
    Ok(total)
}

/// Upper bound on each eigenvalue of `K_y`, ascending. The noise eigenvalues
/// enter in ascending order, matching the ordering of `λ_k(K_y)`.
pub fn eigenvalue_upper_bounds(ch: &ChannelRealization, covariances: &[UserCovariance], noise: &EquivalentNoise) -> Result<Vec<f64>> {
    check_dims(ch, covariances, noise)?;
    let shift = signal_shift(ch, covariances, true)?;
    Ok(sorted_noise(noise).into_iter().map(|n| n + shift).collect())
}

/// Lower bound on each eigenvalue of `K_y`, ascending.
pub fn eigenvalue_lower_bounds(ch: &ChannelRealization, covariances: &[UserCovariance], noise: &EquivalentNoise) -> Result<Vec<f64>> {
    check_dims(ch, covariances, noise)?;
    let shift = signal_shift(ch, covariances, false)?;
    Ok(sorted_noise(noise).into_iter().map(|n| n + shift).collect())
}

/// `sum_k log2(1 + sum_j tau_{K,j} max_k |h_jk|^2 / Ñ_k)`.
pub fn capacity_upper_bound(ch: &ChannelRealization, covariances: &[UserCovariance], noise: &EquivalentNoise) -> Result<f64> {
    check_dims(ch, covariances, noise)?;
    let shift = signal_shift(ch, covariances, true)?;
    Ok(noise.per_subcarrier.iter().map(|n| (1.0 + shift / n).log2()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenBound {
    pub lambda: f64,
    pub upper: f64,
    pub lower: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityBoundReport {
    pub exact: f64,
    pub upper: f64,
    pub lower: f64,
    pub per_eigenvalue: Vec<EigenBound>,
}

impl CapacityBoundReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "lambda", "lower", "upper"])?;
        for (k, e) in self.per_eigenvalue.iter().enumerate() {
            w.write_record([k.to_string(), e.lambda.to_string(), e.lower.to_string(), e.upper.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn capacity_bound_report(ch: &ChannelRealization, covariances: &[UserCovariance], noise: &EquivalentNoise) -> Result<CapacityBoundReport> {
    let ky = received_covariance(ch, covariances, noise)?;
    let lambdas = hermitian_eigenvalues(&ky)?;
    let upper_eigs = eigenvalue_upper_bounds(ch, covariances, noise)?;
    let lower_eigs = eigenvalue_lower_bounds(ch, covariances, noise)?;
    let noise_term: f64 = noise.per_subcarrier.iter().map(|n| n.log2()).sum();
    let lower = lower_eigs.iter().map(|l| l.log2()).sum::<f64>() - noise_term;
    Ok(CapacityBoundReport {
        exact: exact_cellular_capacity_general(ch, covariances, noise)?,
        upper: capacity_upper_bound(ch, covariances, noise)?,
        lower: lower.max(0.0),
        per_eigenvalue: lambdas
            .iter()
            .zip(upper_eigs.iter().zip(&lower_eigs))
            .map(|(&lambda, (&upper, &lower))| EigenBound { lambda, upper, lower })
            .collect(),
    })
}

/// `sum_k log2(1 + sum_{j in xi_k} |h_jk|^2 P_jk / Ñ_k)`.
pub fn closed_form_cellular_capacity(ch: &ChannelRealization, alloc: &PowerAllocation, noise: &EquivalentNoise, graph: &FactorGraph) -> f64 {
    let sets = graph.incidence_sets();
    sets.xi
        .iter()
        .enumerate()
        .map(|(k, users)| {
            let signal: f64 = users.iter().map(|&j| ch.cell_to_bs[j][k].norm_sqr() * alloc.cellular[j][k]).sum();
            (1.0 + signal / noise.per_subcarrier[k]).log2()
        })
        .sum()
}

pub fn cellular_sinr(
    ch: &ChannelRealization,
    alloc: &PowerAllocation,
    noise: &EquivalentNoise,
    graph: &FactorGraph,
    user: usize,
    subcarrier: usize,
) -> Result<f64> {
    if user >= graph.users() || subcarrier >= graph.subcarriers() || !graph.entry(subcarrier, user) {
        return Err(Error::OutsideSupport { user, subcarrier });
    }
    Ok(ch.cell_to_bs[user][subcarrier].norm_sqr() * alloc.cellular[user][subcarrier] / noise.per_subcarrier[subcarrier])
}

/// Cellular interference plus noise at D2D receiver `pair`.
pub fn d2d_interference(ch: &ChannelRealization, alloc: &PowerAllocation, graph: &FactorGraph, pair: usize, tone: usize) -> f64 {
    let users = (0..graph.users()).filter(|&j| graph.entry(tone, j));
    ch.noise_power_w + users.map(|j| ch.cell_to_d2d[j][pair].norm_sqr() * alloc.cellular[j][tone]).sum::<f64>()
}

pub fn d2d_sinr(ch: &ChannelRealization, alloc: &PowerAllocation, graph: &FactorGraph, pair: usize, occupancy: &Occupancy) -> Result<f64> {
    let tone = occupancy.tone_of(pair).ok_or(Error::UnassignedPair(pair))?;
    Ok(ch.d2d_pair[pair].norm_sqr() * alloc.d2d[pair] / d2d_interference(ch, alloc, graph, pair, tone))
}

/// `sum_l log2(1 + gamma_l)` over the assigned pairs.
pub fn d2d_capacity(ch: &ChannelRealization, alloc: &PowerAllocation, graph: &FactorGraph, occupancy: &Occupancy) -> Result<f64> {
    (0..occupancy.pairs())
        .filter(|&l| occupancy.tone_of(l).is_some())
        .map(|l| d2d_sinr(ch, alloc, graph, l, occupancy).map(|g| (1.0 + g).log2()))
        .sum()
}
