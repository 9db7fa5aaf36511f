//! SCMA factor graph, incidence sets and the codebook skeleton used to build
//! per-user transmit covariances.
//!
//! Indices are zero-based throughout: subcarrier `k` in `0..K`, user `j` in `0..J`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hermitian::CMatrix;

/// K x J binary indicator matrix with regular degrees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorGraph {
    indicator: Vec<Vec<u8>>,
    subcarriers: usize,
    users: usize,
    nonzero_dims: usize,
}

impl FactorGraph {
    /// Builds the graph whose columns are the first `users` `n`-subsets of the
    /// subcarriers in lexicographic order. `(4, 6, 2)` gives the regular 4x6
    /// graph with `d_c = 3`, `d_f = 2`.
    pub fn build(subcarriers: usize, users: usize, n: usize) -> Result<Self> {
        if subcarriers == 0 || users == 0 || n == 0 {
            return Err(Error::Dimension("K, J and N must be positive".into()));
        }
        if n > subcarriers {
            return Err(Error::Dimension(format!("N = {n} exceeds K = {subcarriers}")));
        }
        if !(users * n).is_multiple_of(subcarriers) {
            return Err(Error::Dimension(format!("J*N = {} is not divisible by K = {subcarriers}", users * n)));
        }
        if binomial(subcarriers, n) < users as u128 {
            return Err(Error::Dimension(format!(
                "only {} distinct {n}-subsets of {subcarriers} subcarriers for {users} users",
                binomial(subcarriers, n)
            )));
        }
        let mut indicator = vec![vec![0u8; users]; subcarriers];
        let mut subset: Vec<usize> = (0..n).collect();
        for j in 0..users {
            for &k in &subset {
                indicator[k][j] = 1;
            }
            next_combination(&mut subset, subcarriers);
        }
        Self::from_indicator(indicator)
    }

    /// Validates an explicit indicator matrix (rows = subcarriers).
    pub fn from_indicator(indicator: Vec<Vec<u8>>) -> Result<Self> {
        let subcarriers = indicator.len();
        if subcarriers == 0 {
            return Err(Error::Dimension("indicator matrix has no rows".into()));
        }
        let users = indicator[0].len();
        if users == 0 || indicator.iter().any(|r| r.len() != users) {
            return Err(Error::Dimension("indicator rows must be non-empty and equally long".into()));
        }
        if indicator.iter().flatten().any(|&f| f > 1) {
            return Err(Error::Dimension("indicator entries must be 0 or 1".into()));
        }
        let col_sum = |j: usize| indicator.iter().map(|r| r[j] as usize).sum::<usize>();
        let nonzero_dims = col_sum(0);
        if nonzero_dims == 0 || (0..users).any(|j| col_sum(j) != nonzero_dims) {
            return Err(Error::Dimension("every column must have the same non-zero count N".into()));
        }
        let d_c = users * nonzero_dims / subcarriers;
        if d_c * subcarriers != users * nonzero_dims
            || indicator.iter().any(|r| r.iter().map(|&f| f as usize).sum::<usize>() != d_c)
        {
            return Err(Error::Dimension(format!(
                "row sums are not all equal to J*N/K (lexicographic columns give an irregular graph for K={subcarriers}, J={users}, N={nonzero_dims})"
            )));
        }
        Ok(Self { indicator, subcarriers, users, nonzero_dims })
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn nonzero_dims(&self) -> usize {
        self.nonzero_dims
    }

    /// Users per subcarrier.
    pub fn d_c(&self) -> usize {
        self.users * self.nonzero_dims / self.subcarriers
    }

    /// Subcarriers per user.
    pub fn d_f(&self) -> usize {
        self.nonzero_dims
    }

    pub fn entry(&self, k: usize, j: usize) -> bool {
        self.indicator[k][j] == 1
    }

    pub fn indicator(&self) -> &[Vec<u8>] {
        &self.indicator
    }

    pub fn incidence_sets(&self) -> IncidenceSets {
        let xi = (0..self.subcarriers)
            .map(|k| (0..self.users).filter(|&j| self.entry(k, j)).collect())
            .collect();
        let zeta = (0..self.users)
            .map(|j| (0..self.subcarriers).filter(|&k| self.entry(k, j)).collect())
            .collect();
        IncidenceSets { xi, zeta }
    }

    /// Plain-text matrix: one row per subcarrier, entries separated by spaces.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.indicator {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| match tok {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::Dimension(format!("line {}: entry `{other}` is not 0 or 1", lineno + 1))),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_indicator(rows)
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn next_combination(subset: &mut [usize], n: usize) {
    let m = subset.len();
    let mut i = m;
    while i > 0 {
        i -= 1;
        if subset[i] < n - m + i {
            subset[i] += 1;
            for t in (i + 1)..m {
                subset[t] = subset[t - 1] + 1;
            }
            return;
        }
    }
}

/// `xi[k]`: users on subcarrier `k`; `zeta[j]`: subcarriers of user `j`. Both ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceSets {
    pub xi: Vec<Vec<usize>>,
    pub zeta: Vec<Vec<usize>>,
}

/// Structural part of an SCMA codebook: the sparse mapping `V_j`, the
/// shared `N x 2N` complex rotation `M'`, per-user phases and the diagonal of
/// each user's Gaussian input covariance.
#[derive(Debug, Clone)]
pub struct CodebookSkeleton {
    subcarriers: usize,
    nonzero_dims: usize,
    /// Positions (rows of `V_j`) selected by each user, ascending.
    supports: Vec<Vec<usize>>,
    rotation: CMatrix,
    phases: Vec<f64>,
    qam_covariance: Vec<Vec<f64>>,
}

impl CodebookSkeleton {
    /// Default skeleton: DFT-derived rotation, phases `2 pi j / J` and the
    /// given input covariance diagonal for every user.
    pub fn with_default_rotation(graph: &FactorGraph, qam_diag: &[f64]) -> Result<Self> {
        let n = graph.nonzero_dims();
        let phases = (0..graph.users()).map(|j| 2.0 * PI * j as f64 / graph.users() as f64).collect();
        Self::new(graph, default_rotation(n), phases, vec![qam_diag.to_vec(); graph.users()])
    }

    pub fn new(graph: &FactorGraph, rotation: CMatrix, phases: Vec<f64>, qam_covariance: Vec<Vec<f64>>) -> Result<Self> {
        let n = graph.nonzero_dims();
        if rotation.rows() != n || rotation.cols() != 2 * n {
            return Err(Error::Dimension(format!(
                "rotation must be {n}x{}, got {}x{}",
                2 * n,
                rotation.rows(),
                rotation.cols()
            )));
        }
        if phases.len() != graph.users() || qam_covariance.len() != graph.users() {
            return Err(Error::Dimension(format!("need per-user phase and covariance for {} users", graph.users())));
        }
        for (j, diag) in qam_covariance.iter().enumerate() {
            if diag.len() != 2 * n {
                return Err(Error::Dimension(format!("user {j}: covariance diagonal must have {} entries", 2 * n)));
            }
            if diag.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidArgument(format!("user {j}: covariance entries must be finite and non-negative")));
            }
        }
        Ok(Self {
            subcarriers: graph.subcarriers(),
            nonzero_dims: n,
            supports: graph.incidence_sets().zeta,
            rotation,
            phases,
            qam_covariance,
        })
    }

    /// Random skeleton for bound experiments: complex Gaussian rotation
    /// entries (variance `1/(2N)`), uniform phases and input powers on `(0, power_scale]`.
    pub fn random(graph: &FactorGraph, power_scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let n = graph.nonzero_dims();
        let sd = (1.0 / (4.0 * n as f64)).sqrt();
        let rotation = CMatrix::from_fn(n, 2 * n, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * sd, im * sd)
        });
        let phases = (0..graph.users()).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let qam = (0..graph.users())
            .map(|_| (0..2 * n).map(|_| power_scale * (1.0 - rng.random::<f64>())).collect())
            .collect();
        Self::new(graph, rotation, phases, qam)
    }

    pub fn users(&self) -> usize {
        self.supports.len()
    }

    pub fn rotation(&self) -> &CMatrix {
        &self.rotation
    }

    pub fn phase(&self, user: usize) -> f64 {
        self.phases[user]
    }

    pub fn qam_covariance(&self, user: usize) -> &[f64] {
        &self.qam_covariance[user]
    }

    /// `K x N` selector `V_j`: column `c` has its single one at row `zeta_j[c]`.
    pub fn selector(&self, user: usize) -> CMatrix {
        let support = &self.supports[user];
        CMatrix::from_fn(self.subcarriers, self.nonzero_dims, |k, c| {
            if support[c] == k {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// The two terms `M_j1 A_j1 M_j1^*` and `M_j2 A_j2 M_j2^*` whose sum is `K_{x_j}`.
    pub fn split_terms(&self, user: usize) -> Result<(CMatrix, CMatrix)> {
        if user >= self.users() {
            return Err(Error::Dimension(format!("user {user} out of range (J = {})", self.users())));
        }
        let n = self.nonzero_dims;
        let vm = self.selector(user).matmul(&self.rotation)?;
        let p = &self.qam_covariance[user];
        let half = |offset: usize| -> Result<CMatrix> {
            let m = CMatrix::from_fn(self.subcarriers, n, |k, c| vm[(k, offset + c)]);
            let scaled = CMatrix::from_fn(self.subcarriers, n, |k, c| m[(k, c)] * p[offset + c]);
            scaled.matmul(&m.adjoint())
        };
        Ok((half(0)?, half(n)?))
    }

    /// Transmit covariance `K_{x_j}` of `user`; zero outside `zeta_j x zeta_j`.
    pub fn build_covariance(&self, user: usize) -> Result<CMatrix> {
        let (a, b) = self.split_terms(user)?;
        a.add(&b)
    }
}

/// `(E_r + i E_i) F`, with `F` the unitary `2N`-point DFT and `E_r`, `E_i`
/// selecting its first and last `N` rows.
pub fn default_rotation(n: usize) -> CMatrix {
    let size = 2 * n;
    let norm = 1.0 / (size as f64).sqrt();
    let dft = |r: usize, c: usize| Complex64::from_polar(norm, -2.0 * PI * (r * c) as f64 / size as f64);
    CMatrix::from_fn(n, size, |r, c| dft(r, c) + Complex64::i() * dft(n + r, c))
}
