//! Latent positions, covariances and the samplers built on them.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::RngStream;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;

/// A set of points in R^d stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(Self {
            dim,
            data: Vec::new(),
        })
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Result<Self> {
        let mut points = Self::new(dim)?;
        let len = rows
            .checked_mul(dim)
            .ok_or_else(|| Error::Resource(format!("{rows} x {dim} points overflow")))?;
        points
            .data
            .try_reserve_exact(len)
            .map_err(|e| Error::Resource(format!("cannot allocate {rows} x {dim} points: {e}")))?;
        Ok(points)
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate {bad}")));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("cannot infer dimension from zero rows"))?;
        let dim = first.as_ref().len();
        let mut points = Self::with_capacity(dim, rows.len())?;
        for row in rows {
            points.push(row.as_ref())?;
        }
        Ok(points)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::invalid(format!(
                "row of length {} in a {}-dimensional set",
                row.len(),
                self.dim
            )));
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate {bad}")));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn flat_mut(&mut self) -> &mut Vec<f64> {
        &mut self.data
    }

    pub fn mean(&self) -> Option<Vec<f64>> {
        if self.is_empty() {
            return None;
        }
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let count = self.len() as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        Some(mean)
    }

    /// Copy with `offset` subtracted from every row.
    pub fn shifted(&self, offset: &[f64]) -> Points {
        assert_eq!(offset.len(), self.dim);
        let data = self
            .rows()
            .flat_map(|row| row.iter().zip(offset).map(|(v, o)| v - o))
            .collect();
        Points {
            dim: self.dim,
            data,
        }
    }
}

/// Squared Euclidean distance. Every argmin in the crate goes through this
/// so that different search structures agree bit for bit.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A symmetric positive semi-definite d x d matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    dim: usize,
    data: Vec<f64>,
}

impl Covariance {
    pub fn scalar(variance: f64) -> Result<Self> {
        Self::diagonal(&[variance])
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        let dim = variances.len();
        let mut data = vec![0.0; dim * dim];
        for (i, v) in variances.iter().enumerate() {
            data[i * dim + i] = *v;
        }
        Self::from_row_major(dim, data)
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::from_row_major(dim, vec![0.0; dim * dim])
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::diagonal(&vec![1.0; dim])
    }

    /// Validates symmetry (within 1e-12) and positive semi-definiteness
    /// (smallest eigenvalue no lower than -1e-12 relative to the diagonal scale).
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("covariance dimension must be at least 1"));
        }
        if data.len() != dim * dim {
            return Err(Error::invalid(format!(
                "covariance of dimension {dim} needs {} entries, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariance has non-finite entries"));
        }
        let scale = (0..dim).map(|i| data[i * dim + i].abs()).fold(1.0, f64::max);
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (data[i * dim + j] - data[j * dim + i]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::invalid(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let cov = Self { dim, data };
        let min_eig = cov.eigen().eigenvalues.min();
        if min_eig < -PSD_TOL * scale {
            return Err(Error::invalid(format!(
                "covariance is not positive semi-definite (eigenvalue {min_eig:e})"
            )));
        }
        Ok(cov)
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid("covariance must be square"));
        }
        let dim = m.nrows();
        let data = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        Self::from_row_major(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim)
            .flat_map(|i| (0..self.dim).map(move |j| (i, j)))
            .all(|(i, j)| i == j || self.get(i, j) == 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(Error::invalid(format!("cannot scale a covariance by {factor}")));
        }
        Ok(Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        })
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        SymmetricEigen::new(self.to_matrix())
    }

    /// A matrix `L` with `L Lᵀ = Σ`: Cholesky when positive definite,
    /// otherwise `V sqrt(max(Λ, 0))` from the eigendecomposition.
    pub fn factor(&self) -> NoiseFactor {
        if self.is_zero() {
            return NoiseFactor::Zero;
        }
        if self.is_diagonal() {
            return NoiseFactor::Diagonal(self.diag().iter().map(|v| v.max(0.0).sqrt()).collect());
        }
        let m = self.to_matrix();
        let l = match m.clone().cholesky() {
            Some(chol) => chol.l(),
            None => {
                let eig = SymmetricEigen::new(m);
                let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&roots)
            }
        };
        let dim = self.dim;
        NoiseFactor::Dense {
            dim,
            l: (0..dim)
                .flat_map(|i| (0..dim).map(move |j| (i, j)))
                .map(|(i, j)| l[(i, j)])
                .collect(),
        }
    }
}

/// Factor of a covariance, specialised for the shapes the models produce.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseFactor {
    Zero,
    /// Per-coordinate standard deviations.
    Diagonal(Vec<f64>),
    /// Row-major d x d factor.
    Dense { dim: usize, l: Vec<f64> },
}

/// Draws `center + L ε` with `ε ~ N(0, I)`.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    dim: usize,
    factor: NoiseFactor,
}

impl GaussianNoise {
    pub fn new(cov: &Covariance) -> Self {
        Self {
            dim: cov.dim(),
            factor: cov.factor(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.factor == NoiseFactor::Zero
    }

    /// Scalar standard deviation when `d == 1`.
    pub fn scalar_sd(&self) -> Option<f64> {
        match &self.factor {
            _ if self.dim != 1 => None,
            NoiseFactor::Zero => Some(0.0),
            NoiseFactor::Diagonal(sd) => Some(sd[0]),
            NoiseFactor::Dense { l, .. } => Some(l[0].abs()),
        }
    }

    #[inline]
    pub fn sample_around<R: Rng + ?Sized>(&self, center: &[f64], rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(center.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        match &self.factor {
            NoiseFactor::Zero => out.copy_from_slice(center),
            NoiseFactor::Diagonal(sd) => {
                for ((o, c), s) in out.iter_mut().zip(center).zip(sd) {
                    let eps: f64 = rng.sample(StandardNormal);
                    *o = c + s * eps;
                }
            }
            NoiseFactor::Dense { dim, l } => {
                let mut eps = [0.0f64; 16];
                let mut heap;
                let eps: &mut [f64] = if *dim <= 16 {
                    &mut eps[..*dim]
                } else {
                    heap = vec![0.0; *dim];
                    &mut heap
                };
                for e in eps.iter_mut() {
                    *e = rng.sample(StandardNormal);
                }
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &l[i * dim..(i + 1) * dim];
                    *o = center[i] + row.iter().zip(eps.iter()).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: Vec<f64>,
    pub cov: Covariance,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, cov: Covariance) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::invalid(format!(
                "prior mean has dimension {} but covariance has {}",
                mean.len(),
                cov.dim()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("prior mean has non-finite entries"));
        }
        Ok(Self { mean, cov })
    }

    /// `N(0, σ²)` in one dimension.
    pub fn centered_scalar(variance: f64) -> Result<Self> {
        Self::new(vec![0.0], Covariance::scalar(variance)?)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sampler(&self) -> GaussianNoise {
        GaussianNoise::new(&self.cov)
    }
}

/// Where a population came from.
#[derive(Debug, Clone, PartialEq)]
pub enum PopulationSource {
    SyntheticGaussian {
        users: GaussianPrior,
        items: GaussianPrior,
    },
    Empirical {
        provenance: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub users: Points,
    pub items: Points,
    pub source: PopulationSource,
}

impl Population {
    pub fn new(users: Points, items: Points, source: PopulationSource) -> Result<Self> {
        if users.is_empty() || items.is_empty() {
            return Err(Error::invalid("a population needs at least one user and one item"));
        }
        if users.dim() != items.dim() {
            return Err(Error::invalid(format!(
                "users live in {} dimensions but items in {}",
                users.dim(),
                items.dim()
            )));
        }
        Ok(Self {
            users,
            items,
            source,
        })
    }

    pub fn dim(&self) -> usize {
        self.items.dim()
    }
}

pub fn sample_gaussian(prior: &GaussianPrior, stream: RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    let mut out = vec![0.0; prior.dim()];
    prior.sampler().sample_around(&prior.mean, &mut rng, &mut out);
    out
}

/// `count` independent draws from one stream.
pub fn sample_gaussian_points<R: Rng + ?Sized>(
    prior: &GaussianPrior,
    count: usize,
    rng: &mut R,
) -> Result<Points> {
    let dim = prior.dim();
    let mut points = Points::with_capacity(dim, count)?;
    let sampler = prior.sampler();
    let buf = points.flat_mut();
    buf.resize(count * dim, 0.0);
    for row in buf.chunks_exact_mut(dim) {
        sampler.sample_around(&prior.mean, rng, row);
    }
    Ok(points)
}

/// Bootstrap: `count` rows drawn uniformly with replacement.
pub fn sample_empirical(positions: &Points, count: usize, stream: RngStream) -> Result<Points> {
    if positions.is_empty() {
        return Err(Error::invalid("cannot resample from an empty set"));
    }
    let mut rng = stream.rng();
    let mut out = Points::with_capacity(positions.dim(), count)?;
    for _ in 0..count {
        let i = rng.random_range(0..positions.len());
        out.flat_mut().extend_from_slice(positions.row(i));
    }
    Ok(out)
}

/// Sample mean and covariance with divisor `count - 1`.
pub fn empirical_moments(positions: &Points) -> Result<(Vec<f64>, Covariance)> {
    let count = positions.len();
    if count < 2 {
        return Err(Error::invalid(format!(
            "empirical moments need at least 2 rows, got {count}"
        )));
    }
    let dim = positions.dim();
    let mean = positions.mean().expect("nonempty");
    let mut cov = vec![0.0; dim * dim];
    for row in positions.rows() {
        for i in 0..dim {
            let di = row[i] - mean[i];
            for j in i..dim {
                cov[i * dim + j] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = (count - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = cov[i * dim + j] / denom;
            cov[i * dim + j] = v;
            cov[j * dim + i] = v;
        }
    }
    Ok((mean, Covariance::from_row_major(dim, cov)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Role;

    fn stream() -> RngStream {
        RngStream::new(11, 0, Role::Aux)
    }

    #[test]
    fn zero_variance_sample_is_the_mean() {
        let prior = GaussianPrior::new(vec![1.5, -2.0], Covariance::zeros(2).unwrap()).unwrap();
        assert_eq!(sample_gaussian(&prior, stream()), vec![1.5, -2.0]);
    }

    #[test]
    fn standard_normal_moments() {
        let prior = GaussianPrior::centered_scalar(1.0).unwrap();
        let draws = sample_gaussian_points(&prior, 1_000_000, &mut stream().rng()).unwrap();
        let n = draws.len() as f64;
        let mean = draws.as_flat().iter().sum::<f64>() / n;
        let var = draws.as_flat().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 0.004, "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "var {var}");
    }

    #[test]
    fn correlated_draws_match_covariance() {
        let cov = Covariance::from_row_major(2, vec![2.0, 0.6, 0.6, 0.5]).unwrap();
        let prior = GaussianPrior::new(vec![0.0, 0.0], cov.clone()).unwrap();
        let n = 1_000_000;
        let draws = sample_gaussian_points(&prior, n, &mut stream().rng()).unwrap();
        let (_, est) = empirical_moments(&draws).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                // se of a sample covariance entry: sqrt((s_ii s_jj + s_ij^2) / n)
                let se = ((cov.get(i, i) * cov.get(j, j) + cov.get(i, j).powi(2)) / n as f64).sqrt();
                assert!((est.get(i, j) - cov.get(i, j)).abs() < 3.0 * se, "({i},{j})");
            }
        }
    }

    #[test]
    fn singular_covariance_uses_eigen_factor() {
        // rank one: perfectly correlated coordinates
        let cov = Covariance::from_row_major(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(cov.factor(), NoiseFactor::Dense { .. }));
        let prior = GaussianPrior::new(vec![0.0, 0.0], cov).unwrap();
        let draws = sample_gaussian_points(&prior, 1000, &mut stream().rng()).unwrap();
        for row in draws.rows() {
            assert!((row[0] - row[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        assert!(Covariance::from_row_major(2, vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(Covariance::from_row_major(2, vec![1.0, 0.1, 0.2, 1.0]).is_err());
        assert!(Covariance::scalar(-0.5).is_err());
    }

    #[test]
    fn bootstrap_cases() {
        let one = Points::from_rows(&[[3.0, 4.0]]).unwrap();
        let five = sample_empirical(&one, 5, stream()).unwrap();
        assert_eq!(five.len(), 5);
        assert!(five.rows().all(|r| r == [3.0, 4.0]));
        assert!(sample_empirical(&one, 0, stream()).unwrap().is_empty());
        assert!(sample_empirical(&Points::new(2).unwrap(), 3, stream()).is_err());
    }

    #[test]
    fn bootstrap_rows_come_from_source() {
        let prior = GaussianPrior::new(vec![0.0; 5], Covariance::identity(5).unwrap()).unwrap();
        let source = sample_gaussian_points(&prior, 4297, &mut stream().rng()).unwrap();
        let drawn = sample_empirical(&source, 300, stream().with_index(1)).unwrap();
        assert_eq!(drawn.len(), 300);
        for row in drawn.rows() {
            assert!(source.rows().any(|s| s == row));
        }
    }

    #[test]
    fn moments_examples() {
        let (mean, cov) = empirical_moments(&Points::from_rows(&[[-1.0], [1.0]]).unwrap()).unwrap();
        assert_eq!(mean, vec![0.0]);
        assert_eq!(cov.get(0, 0), 2.0);

        let same = Points::from_rows(&[[0.3, 0.3], [0.3, 0.3], [0.3, 0.3]]).unwrap();
        assert!(empirical_moments(&same).unwrap().1.is_zero());

        let square = Points::from_rows(&[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]]).unwrap();
        let (mean, cov) = empirical_moments(&square).unwrap();
        assert_eq!(mean, vec![1.0, 1.0]);
        assert!((cov.get(0, 0) - 4.0 / 3.0).abs() < 1e-15);
        assert!((cov.get(1, 1) - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(cov.get(0, 1), 0.0);

        assert!(empirical_moments(&Points::from_rows(&[[1.0]]).unwrap()).is_err());
    }

    #[test]
    fn rows_must_agree_on_dimension() {
        let mut p = Points::new(2).unwrap();
        assert!(p.push(&[1.0]).is_err());
        assert!(p.push(&[1.0, f64::NAN]).is_err());
        assert!(Points::new(0).is_err());
    }
}
