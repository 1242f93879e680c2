//! Sparse real-symmetric Hamiltonians, symmetry-block diagonalization and
//! compensated summation.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::continuum::Parity;
use crate::error::{Error, Result};
use crate::parallel::par_map;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = NeumaierSum::new();
    for v in values {
        s.add(v);
    }
    s.value()
}

/// Real symmetric matrix stored as a diagonal plus an adjacency list holding
/// every off-diagonal element in both rows.
#[derive(Debug, Clone)]
pub struct SparseSymmetric {
    diag: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSymmetric {
    pub fn new(dim: usize) -> Self {
        Self { diag: vec![0.0; dim], rows: vec![Vec::new(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn set_diagonal(&mut self, i: usize, value: f64) {
        self.diag[i] = value;
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Adds `value` to both (i, j) and (j, i).
    pub fn add_coupling(&mut self, i: usize, j: usize, value: f64) {
        assert_ne!(i, j, "couplings are off-diagonal");
        if value == 0.0 {
            return;
        }
        self.rows[i].push((j, value));
        self.rows[j].push((i, value));
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn nnz_off_diagonal(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        (0..self.dim())
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                for &(j, h) in &self.rows[i] {
                    y += h * x[j];
                }
                y
            })
            .collect()
    }

    /// Element (i, j), summing repeated entries.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.rows[i].iter().filter(|(c, _)| *c == j).map(|(_, h)| h).sum()
    }

    /// Frobenius-norm bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        let off: f64 = self.rows.iter().flatten().map(|(_, h)| h * h).sum();
        let d: f64 = self.diag.iter().map(|h| h * h).sum();
        (off + d).sqrt()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.dim();
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            for &(j, h) in &self.rows[i] {
                m[(i, j)] += h;
            }
        }
        m
    }
}

/// Isometric embedding of a symmetry block into the full basis. Column c is
/// a sparse, normalized, real combination of basis states.
#[derive(Debug, Clone)]
pub struct Embedding {
    dim: usize,
    columns: Vec<Vec<(usize, f64)>>,
}

impl Embedding {
    pub fn new(dim: usize, columns: Vec<Vec<(usize, f64)>>) -> Self {
        debug_assert!(columns.iter().flatten().all(|&(i, _)| i < dim));
        Self { dim, columns }
    }

    /// Selects a subset of basis states unchanged.
    pub fn subset(dim: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        Self::new(dim, indices.into_iter().map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn full_dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, c: usize) -> &[(usize, f64)] {
        &self.columns[c]
    }

    /// Bᵀ H B as a dense matrix.
    pub fn compress(&self, h: &SparseSymmetric) -> Mat<f64> {
        assert_eq!(h.dim(), self.dim);
        let mut inverse: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.dim];
        for (c, col) in self.columns.iter().enumerate() {
            for &(i, b) in col {
                inverse[i].push((c, b));
            }
        }
        let n = self.len();
        let mut out = Mat::zeros(n, n);
        let mut scratch = vec![0.0; self.dim];
        let mut touched = Vec::new();
        for (c, col) in self.columns.iter().enumerate() {
            for &(i, b) in col {
                let add = |k: usize, v: f64, scratch: &mut Vec<f64>, touched: &mut Vec<usize>| {
                    if scratch[k] == 0.0 {
                        touched.push(k);
                    }
                    scratch[k] += v;
                };
                add(i, h.diag[i] * b, &mut scratch, &mut touched);
                for &(j, hij) in &h.rows[i] {
                    add(j, hij * b, &mut scratch, &mut touched);
                }
            }
            for &k in &touched {
                let y = scratch[k];
                for &(c2, b2) in &inverse[k] {
                    out[(c2, c)] += b2 * y;
                }
                scratch[k] = 0.0;
            }
            touched.clear();
        }
        out
    }

    /// B u.
    pub fn expand(&self, coefficients: impl Iterator<Item = f64>) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (col, u) in self.columns.iter().zip(coefficients) {
            for &(i, b) in col {
                x[i] += b * u;
            }
        }
        x
    }

    /// Bᵀ x.
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|col| col.iter().map(|&(i, b)| b * x[i]).sum())
            .collect()
    }
}

/// Splits a basis into the irreducible sectors of a group generated by
/// commuting involutive permutations. Returns one embedding per character,
/// labelled by the parity under each generator; empty sectors are omitted.
pub fn involution_blocks(
    dim: usize,
    generators: &[&dyn Fn(usize) -> usize],
) -> Vec<(Vec<Parity>, Embedding)> {
    let g = generators.len();
    let n_sectors = 1usize << g;
    let mut columns: Vec<Vec<Vec<(usize, f64)>>> = vec![Vec::new(); n_sectors];
    let mut visited = vec![false; dim];
    for x in 0..dim {
        if visited[x] {
            continue;
        }
        // images of x under every group element, indexed by generator subset
        let images: Vec<usize> = (0..n_sectors)
            .map(|subset| {
                (0..g).filter(|j| subset >> j & 1 == 1).fold(x, |y, j| generators[j](y))
            })
            .collect();
        for &y in &images {
            visited[y] = true;
        }
        for (sector, cols) in columns.iter_mut().enumerate() {
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for (subset, &y) in images.iter().enumerate() {
                let odd_flips = (subset & sector).count_ones();
                let chi = if odd_flips % 2 == 0 { 1.0 } else { -1.0 };
                match acc.iter_mut().find(|(i, _)| *i == y) {
                    Some(entry) => entry.1 += chi,
                    None => acc.push((y, chi)),
                }
            }
            acc.retain(|&(_, c)| c != 0.0);
            if acc.is_empty() {
                continue;
            }
            acc.sort_by_key(|&(i, _)| i);
            let norm = acc.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
            cols.push(acc.into_iter().map(|(i, c)| (i, c / norm)).collect());
        }
    }
    columns
        .into_iter()
        .enumerate()
        .filter(|(_, cols)| !cols.is_empty())
        .map(|(sector, cols)| {
            let parities = (0..g)
                .map(|j| if sector >> j & 1 == 0 { Parity::Even } else { Parity::Odd })
                .collect();
            (parities, Embedding::new(dim, cols))
        })
        .collect()
}

/// Dense symmetric eigendecomposition with ascending eigenvalues.
///
/// Decoupled parts of the matrix are diagonalized separately. Besides
/// saving work this keeps the residuals small when a block holds many
/// exactly degenerate uncoupled states, which the dense solver otherwise
/// resolves only to about 1e-8 relative accuracy.
pub fn symmetric_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = m.nrows();
    let components = coupled_components(m);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    let mut solved = Vec::with_capacity(components.len());
    for (c, idx) in components.iter().enumerate() {
        let (values, vectors) = if idx.len() == 1 {
            (vec![m[(idx[0], idx[0])]], Mat::from_fn(1, 1, |_, _| 1.0))
        } else {
            dense_eigen(&Mat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])]))?
        };
        pairs.extend(values.iter().enumerate().map(|(i, &e)| (e, c, i)));
        solved.push(vectors);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut vectors = Mat::zeros(n, n);
    for (col, &(_, c, i)) in pairs.iter().enumerate() {
        for (r, &row) in components[c].iter().enumerate() {
            vectors[(row, col)] = solved[c][(r, i)];
        }
    }
    Ok((pairs.iter().map(|p| p.0).collect(), vectors))
}

fn dense_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Convergence(format!("symmetric eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let values: Vec<f64> = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

/// Index sets of the connected components of the nonzero pattern, each
/// sorted, in order of their smallest index.
fn coupled_components(m: &Mat<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut component = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        component[start] = id;
        let mut members = vec![start];
        let mut next = 0;
        while next < members.len() {
            let i = members[next];
            next += 1;
            for j in 0..n {
                if component[j] == usize::MAX && m[(j, i)] != 0.0 {
                    component[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Symmetry sector of a block: spatial parity of the relative coordinates
/// and, for three atoms, behaviour under reversing the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sector {
    pub parity: Parity,
    pub reflection: Option<Parity>,
}

/// Identity of a basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisLabel {
    /// Vibrational mode v of the two-atom macrodimer potential.
    Macrodimer { v: usize },
    /// Standing wave j of a two-atom continuum channel.
    Continuum { parity: Parity, index: usize },
    /// Three atoms with `site` Rydberg-excited and relative momenta k1, k2 of
    /// the two links.
    SinglyExcited { site: usize, k1: usize, k2: usize },
    /// Macrodimer ground mode on `link` with the spectator at momentum index
    /// `spectator`.
    LinkMacrodimer { link: usize, spectator: usize },
}

impl BasisLabel {
    pub fn is_macrodimer(&self) -> bool {
        matches!(self, BasisLabel::Macrodimer { .. } | BasisLabel::LinkMacrodimer { .. })
    }
}

#[derive(Debug, Clone)]
pub struct EigenBlock {
    pub sector: Sector,
    pub embedding: Embedding,
    pub energies: Vec<f64>,
    pub vectors: Mat<f64>,
}

/// Eigenstates of a block-diagonal Hamiltonian, indexed in ascending energy
/// across all blocks.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    labels: Vec<BasisLabel>,
    blocks: Vec<EigenBlock>,
    order: Vec<(usize, usize)>,
    energies: Vec<f64>,
}

impl EigenSystem {
    /// Diagonalizes every block of `h` and merges the spectra.
    pub fn solve(
        h: &SparseSymmetric,
        labels: Vec<BasisLabel>,
        blocks: Vec<(Sector, Embedding)>,
    ) -> Result<Self> {
        assert_eq!(labels.len(), h.dim());
        let covered: usize = blocks.iter().map(|(_, e)| e.len()).sum();
        if covered != h.dim() {
            return Err(Error::Config(format!(
                "symmetry blocks span {covered} states of {}",
                h.dim()
            )));
        }
        let solved = par_map(&blocks, |(sector, embedding)| {
            let dense = embedding.compress(h);
            symmetric_eigen(&dense).map(|(energies, vectors)| EigenBlock {
                sector: *sector,
                embedding: embedding.clone(),
                energies,
                vectors,
            })
        });
        let blocks = solved.into_iter().collect::<Result<Vec<_>>>()?;
        let mut order: Vec<(usize, usize)> = blocks
            .iter()
            .enumerate()
            .flat_map(|(b, blk)| (0..blk.energies.len()).map(move |i| (b, i)))
            .collect();
        order.sort_by(|&(b1, i1), &(b2, i2)| {
            blocks[b1].energies[i1].total_cmp(&blocks[b2].energies[i2])
        });
        let energies = order.iter().map(|&(b, i)| blocks[b].energies[i]).collect();
        Ok(Self { labels, blocks, order, energies })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn labels(&self) -> &[BasisLabel] {
        &self.labels
    }

    pub fn blocks(&self) -> &[EigenBlock] {
        &self.blocks
    }

    pub fn sector(&self, n: usize) -> Sector {
        self.blocks[self.order[n].0].sector
    }

    /// Eigenvector n in the full basis.
    pub fn vector(&self, n: usize) -> Vec<f64> {
        let (b, i) = self.order[n];
        let blk = &self.blocks[b];
        blk.embedding.expand(blk.vectors.col(i).iter().copied())
    }

    /// Amplitudes ⟨ψ_n|x⟩ for all n, in energy order.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let per_block: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .map(|blk| {
                let t = blk.embedding.restrict(x);
                (0..blk.energies.len())
                    .map(|i| {
                        let u = blk.vectors.col(i);
                        neumaier_sum(u.iter().zip(&t).map(|(a, b)| a * b))
                    })
                    .collect()
            })
            .collect();
        self.order.iter().map(|&(b, i)| per_block[b][i]).collect()
    }

    /// Summed weight of eigenvector n on basis states selected by `select`.
    pub fn weight(&self, n: usize, select: impl Fn(&BasisLabel) -> bool) -> f64 {
        let v = self.vector(n);
        v.iter()
            .zip(&self.labels)
            .filter(|(_, l)| select(l))
            .map(|(a, _)| a * a)
            .sum()
    }

    /// Weight of eigenvector n on macrodimer states.
    pub fn macrodimer_weight(&self, n: usize) -> f64 {
        self.weight(n, BasisLabel::is_macrodimer)
    }

    /// max_n ‖Hψ_n − E_n ψ_n‖.
    pub fn max_residual(&self, h: &SparseSymmetric) -> f64 {
        (0..self.len())
            .map(|n| {
                let v = self.vector(n);
                let hv = h.matvec(&v);
                hv.iter()
                    .zip(&v)
                    .map(|(a, b)| (a - self.energies[n] * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Returns a convergence error if any residual exceeds
    /// `tolerance · max|E|`.
    pub fn verify(&self, h: &SparseSymmetric, tolerance: f64) -> Result<()> {
        let scale = self.energies.iter().fold(0.0f64, |m, e| m.max(e.abs())).max(1.0);
        let r = self.max_residual(h);
        if r > tolerance * scale {
            return Err(Error::Convergence(format!(
                "eigenvector residual {r:.3e} exceeds {:.3e}",
                tolerance * scale
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_sparse(n: usize, seed: u64) -> SparseSymmetric {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut h = SparseSymmetric::new(n);
        for i in 0..n {
            h.set_diagonal(i, rng.random_range(-3.0..3.0));
            for j in (i + 1)..n {
                if rng.random_bool(0.3) {
                    h.add_coupling(i, j, rng.random_range(-1.0..1.0));
                }
            }
        }
        h
    }

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier_sum(xs), 2.0);
    }

    #[test]
    fn dense_matches_sparse_matvec() {
        let h = random_sparse(12, 1);
        let d = h.to_dense();
        let x: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let y = h.matvec(&x);
        for i in 0..12 {
            let yi: f64 = (0..12).map(|j| d[(i, j)] * x[j]).sum();
            assert!((yi - y[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn single_block_solve_is_accurate() {
        let h = random_sparse(40, 2);
        let labels = (0..40).map(|i| BasisLabel::Continuum { parity: Parity::Even, index: i }).collect();
        let sector = Sector { parity: Parity::Even, reflection: None };
        let sys = EigenSystem::solve(&h, labels, vec![(sector, Embedding::subset(40, 0..40))]).unwrap();
        assert!(sys.max_residual(&h) < 1e-12);
        assert!(sys.energies().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn blocks_must_cover_the_basis() {
        let h = random_sparse(4, 3);
        let labels = vec![BasisLabel::Macrodimer { v: 0 }; 4];
        let sector = Sector { parity: Parity::Even, reflection: None };
        assert!(EigenSystem::solve(&h, labels, vec![(sector, Embedding::subset(4, 0..3))]).is_err());
    }

    #[test]
    fn symmetric_blocks_reproduce_full_spectrum() {
        // Mirror-symmetric chain: symmetric and antisymmetric combinations
        // decouple.
        let n = 6;
        let mut h = SparseSymmetric::new(n);
        for i in 0..n {
            h.set_diagonal(i, [0.3, -1.0, 2.0, 2.0, -1.0, 0.3][i]);
        }
        for i in 0..n - 1 {
            h.add_coupling(i, i + 1, [0.5, 0.2, 0.7, 0.2, 0.5][i]);
        }
        let s = 0.5f64.sqrt();
        let even: Vec<_> = (0..3).map(|i| vec![(i, s), (n - 1 - i, s)]).collect();
        let odd: Vec<_> = (0..3).map(|i| vec![(i, s), (n - 1 - i, -s)]).collect();
        let labels = (0..n).map(|i| BasisLabel::Continuum { parity: Parity::Even, index: i }).collect();
        let sys = EigenSystem::solve(
            &h,
            labels,
            vec![
                (Sector { parity: Parity::Even, reflection: None }, Embedding::new(n, even)),
                (Sector { parity: Parity::Odd, reflection: None }, Embedding::new(n, odd)),
            ],
        )
        .unwrap();
        let (full, _) = symmetric_eigen(&h.to_dense()).unwrap();
        for (a, b) in sys.energies().iter().zip(&full) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(sys.max_residual(&h) < 1e-12);
    }

    #[test]
    fn involution_blocks_are_orthonormal_and_complete() {
        let n = 10;
        let flip = |i: usize| 9 - i;
        let pair = |i: usize| i ^ 1;
        let blocks = involution_blocks(n, &[&flip, &pair]);
        let total: usize = blocks.iter().map(|(_, e)| e.len()).sum();
        assert_eq!(total, n);
        let cols: Vec<Vec<f64>> = blocks
            .iter()
            .flat_map(|(_, e)| (0..e.len()).map(move |c| e.expand((0..e.len()).map(|k| if k == c { 1.0 } else { 0.0 }))))
            .collect();
        for (a, ca) in cols.iter().enumerate() {
            for (b, cb) in cols.iter().enumerate() {
                let d: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn decoupled_parts_solve_separately() {
        // two coupled 2x2 blocks interleaved with degenerate isolated states
        let mut m = Mat::<f64>::zeros(7, 7);
        for i in 0..7 {
            m[(i, i)] = 1.0;
        }
        for (i, j, v) in [(0, 3, 0.5), (2, 5, -2.0)] {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        assert_eq!(coupled_components(&m), vec![vec![0, 3], vec![1], vec![2, 5], vec![4], vec![6]]);
        let (values, vectors) = symmetric_eigen(&m).unwrap();
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
        assert!((values[0] + 1.0).abs() < 1e-14 && (values[6] - 3.0).abs() < 1e-14);
        let residual = &m * &vectors - &vectors * Mat::from_fn(7, 7, |i, j| if i == j { values[i] } else { 0.0 });
        let gram = vectors.transpose() * &vectors - Mat::<f64>::identity(7, 7);
        assert!(residual.norm_max() < 1e-14 && gram.norm_max() < 1e-14);
    }

    proptest! {
        #[test]
        fn projection_preserves_norm(seed in 0u64..200, n in 2usize..25) {
            let h = random_sparse(n, seed);
            let labels = (0..n).map(|i| BasisLabel::Macrodimer { v: i }).collect();
            let sector = Sector { parity: Parity::Even, reflection: None };
            let sys = EigenSystem::solve(&h, labels, vec![(sector, Embedding::subset(n, 0..n))]).unwrap();
            let x: Vec<f64> = (0..n).map(|i| ((i + 1) as f64 * 0.7).cos()).collect();
            let norm: f64 = x.iter().map(|a| a * a).sum();
            let amps = sys.project(&x);
            let total: f64 = amps.iter().map(|a| a * a).sum();
            prop_assert!((total - norm).abs() < 1e-10 * norm);
        }
    }
}
