//! Effective nonlinearity: the quadratic term is *ineffective* when some
//! proper, non-trivial subspace `V` has `phi = 0` on `V` and `c + L x` in `V`
//! for every `x` in `V`. Trajectories starting in such a subspace then follow
//! purely affine dynamics.
//!
//! Any witness contains `c` and is `L`-invariant, so it contains the Krylov
//! space of `(L, c)` when `c != 0`, or some minimal real invariant subspace of
//! `L` (an eigenvector line or a complex-pair plane) when `c = 0`. That gives
//! an exact decision whenever the minimal invariant subspaces can be listed,
//! which holds unless an eigenvalue has geometric multiplicity above one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, null_space, orthonormal_basis, out_of_span, subspace_distance, Matrix, Vector};
use crate::system::QuadraticSystem;

/// Tolerance for the final condition checks, relative to the data scale.
pub const VERIFY_TOL: f64 = 1e-10;
/// Tolerance for discovering candidates.
pub const DISCOVERY_TOL: f64 = 1e-8;
/// Eigenvalues closer than this (relative to `|L|`) share a cluster.
const CLUSTER_TOL: f64 = 1e-6;

/// A proper, non-trivial linear subspace held by orthonormal columns.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: Matrix,
}

impl Subspace {
    /// Span of the columns of `cols`, orthonormalised.
    pub fn new(cols: &Matrix) -> Result<Self> {
        let basis = orthonormal_basis(cols, 1e-10);
        let (n, k) = (cols.nrows(), basis.ncols());
        if k == 0 || k >= n {
            return Err(Error::NotApplicable(format!(
                "subspace of dimension {k} in R^{n} is not proper and non-trivial"
            )));
        }
        Ok(Self { basis })
    }

    pub fn span(vectors: &[Vector]) -> Result<Self> {
        let n = vectors.first().map(|v| v.len()).unwrap_or(0);
        let mut cols = Matrix::zeros(n, vectors.len());
        for (j, v) in vectors.iter().enumerate() {
            cols.set_column(j, v);
        }
        Self::new(&cols)
    }

    /// Span of the standard basis vectors with the given 0-based indices.
    pub fn coordinate(n: usize, indices: &[usize]) -> Result<Self> {
        let mut cols = Matrix::zeros(n, indices.len());
        for (j, &i) in indices.iter().enumerate() {
            cols[(i, j)] = 1.0;
        }
        Self::new(&cols)
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn distance(&self, other: &Subspace) -> f64 {
        subspace_distance(&self.basis, &other.basis)
    }

    /// Indices `i` when the subspace is `span(e_i, ...)`, else `None`.
    pub fn coordinate_indices(&self) -> Option<Vec<usize>> {
        let n = self.ambient();
        let idx: Vec<usize> = (0..n)
            .filter(|&i| self.basis.row(i).norm() > 0.5)
            .collect();
        let exact = idx.len() == self.dim()
            && Subspace::coordinate(n, &idx).is_ok_and(|c| c.distance(self) < 1e-12);
        exact.then_some(idx)
    }
}

impl std::fmt::Display for Subspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(idx) = self.coordinate_indices() {
            let names: Vec<String> = idx.iter().map(|i| format!("e{}", i + 1)).collect();
            return write!(f, "span({})", names.join(", "));
        }
        let cols: Vec<String> = self
            .basis
            .column_iter()
            .map(|c| {
                let v: Vec<String> = c.iter().map(|x| format!("{x:.6}")).collect();
                format!("({})", v.join(", "))
            })
            .collect();
        write!(f, "span{{{}}}", cols.join(", "))
    }
}

fn require_ambient(sys: &QuadraticSystem, v: &Subspace) -> Result<()> {
    if v.ambient() != sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "subspace lives in R^{}, system has dimension {}",
            v.ambient(),
            sys.dim()
        )));
    }
    Ok(())
}

/// Residuals of both conditions for one subspace.
#[derive(Debug, Clone, Copy)]
pub struct ConditionReport {
    /// Largest `|b_p^T Q_i b_q|` over basis pairs, relative to the `Q` scale.
    pub phi_residual: f64,
    /// Largest out-of-span component of `c` and `L b`, relative to the data scale.
    pub affine_residual: f64,
    pub phi_vanishes: bool,
    pub affine_invariant: bool,
}

impl ConditionReport {
    pub fn is_witness(&self) -> bool {
        self.phi_vanishes && self.affine_invariant
    }
}

fn phi_residual(sys: &QuadraticSystem, basis: &Matrix) -> f64 {
    let scale = sys.q_scale().max(1.0);
    let mut worst: f64 = 0.0;
    for qi in sys.q() {
        let restricted = basis.transpose() * qi * basis;
        worst = worst.max(max_abs(&restricted));
    }
    worst / scale
}

fn affine_residual(sys: &QuadraticSystem, basis: &Matrix) -> f64 {
    let scale = max_abs(sys.l()).max(sys.c().amax()).max(1.0);
    let mut worst = out_of_span(basis, sys.c());
    for b in basis.column_iter() {
        worst = worst.max(out_of_span(basis, &(sys.l() * b)));
    }
    worst / scale
}

pub fn condition_report(sys: &QuadraticSystem, v: &Subspace) -> Result<ConditionReport> {
    require_ambient(sys, v)?;
    let phi = phi_residual(sys, &v.basis);
    let affine = affine_residual(sys, &v.basis);
    Ok(ConditionReport {
        phi_residual: phi,
        affine_residual: affine,
        phi_vanishes: phi <= VERIFY_TOL,
        affine_invariant: affine <= VERIFY_TOL,
    })
}

/// `phi(x) = 0` for every `x` in `V`.
pub fn phi_vanishes_on(sys: &QuadraticSystem, v: &Subspace) -> Result<bool> {
    require_ambient(sys, v)?;
    Ok(phi_residual(sys, &v.basis) <= VERIFY_TOL)
}

/// `c + L x` lies in `V` for every `x` in `V`.
pub fn affine_invariant_on(sys: &QuadraticSystem, v: &Subspace) -> Result<bool> {
    require_ambient(sys, v)?;
    Ok(affine_residual(sys, &v.basis) <= VERIFY_TOL)
}

pub fn is_ineffectiveness_witness(sys: &QuadraticSystem, v: &Subspace) -> Result<bool> {
    Ok(condition_report(sys, v)?.is_witness())
}

// ---------------------------------------------------------------------------
// Spectral structure of L

#[derive(Debug, Clone)]
enum Block {
    Real { value: f64, multiplicity: usize },
    Complex { re: f64, im: f64, multiplicity: usize },
}

fn l_scale(l: &Matrix) -> f64 {
    max_abs(l).max(1.0)
}

/// Eigenvalue clusters of `L`; complex pairs are listed once with `im > 0`.
fn spectral_blocks(l: &Matrix) -> Vec<Block> {
    let tol = CLUSTER_TOL * l_scale(l);
    let eig = l.clone().complex_eigenvalues();
    let mut vals: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut clusters: Vec<Vec<(f64, f64)>> = Vec::new();
    for v in vals {
        let hit = clusters
            .iter_mut()
            .find(|c| c.iter().any(|w| (w.0 - v.0).hypot(w.1 - v.1) <= tol));
        match hit {
            Some(c) => c.push(v),
            None => clusters.push(vec![v]),
        }
    }
    let mut blocks = Vec::new();
    for c in clusters {
        let k = c.len() as f64;
        let re = c.iter().map(|v| v.0).sum::<f64>() / k;
        let im = c.iter().map(|v| v.1).sum::<f64>() / k;
        if im.abs() <= tol {
            blocks.push(Block::Real {
                value: re,
                multiplicity: c.len(),
            });
        } else if im > 0.0 {
            blocks.push(Block::Complex {
                re,
                im,
                multiplicity: c.len(),
            });
        }
    }
    blocks
}

fn shifted(l: &Matrix, block: &Block) -> Matrix {
    let n = l.nrows();
    let id = Matrix::identity(n, n);
    match *block {
        Block::Real { value, .. } => l - &id * value,
        Block::Complex { re, im, .. } => {
            let s = l - &id * re;
            &s * &s + &id * (im * im)
        }
    }
}

fn multiplicity(block: &Block) -> usize {
    match *block {
        Block::Real { multiplicity, .. } | Block::Complex { multiplicity, .. } => multiplicity,
    }
}

/// Eigenvectors of a real cluster, or the real span of the eigenvectors of a
/// complex pair.
fn eigen_part(l: &Matrix, block: &Block) -> Matrix {
    null_space(&shifted(l, block), DISCOVERY_TOL)
}

/// Generalised eigenspace of a cluster.
fn generalized_part(l: &Matrix, block: &Block) -> Matrix {
    let base = shifted(l, block);
    let mut p = base.clone();
    for _ in 1..multiplicity(block) {
        p = &p * &base;
    }
    null_space(&p, DISCOVERY_TOL)
}

// ---------------------------------------------------------------------------
// Root finding on the unit sphere

/// Gauss-Newton on `r(v) = 0` with `|v| = 1`, using a forward-difference
/// Jacobian. Returns the polished unit vector and its residual norm.
fn polish(residual: &dyn Fn(&Vector) -> Vector, v0: &Vector, iters: usize) -> (Vector, f64) {
    let n = v0.len();
    let mut v = v0.normalize();
    let mut r = residual(&v);
    for _ in 0..iters {
        let rn = r.norm();
        if rn < 1e-15 {
            break;
        }
        let m = r.len();
        let mut jac = Matrix::zeros(m + 1, n);
        let h = 1e-7;
        for j in 0..n {
            let mut vp = v.clone();
            vp[j] += h;
            let col = (residual(&vp) - &r) / h;
            jac.view_mut((0, j), (m, 1)).copy_from(&col);
            jac[(m, j)] = 2.0 * v[j];
        }
        let mut rhs = Vector::zeros(m + 1);
        rhs.rows_mut(0, m).copy_from(&(-&r));
        rhs[m] = 1.0 - v.norm_squared();
        let Ok(step) = jac.svd(true, true).solve(&rhs, 1e-12) else {
            break;
        };
        let cand = (&v + step).normalize();
        let rc = residual(&cand);
        if rc.norm() >= rn {
            break;
        }
        v = cand;
        r = rc;
    }
    let rn = r.norm();
    (v, rn)
}

#[cfg(test)]
fn phi_of(sys: &QuadraticSystem, v: &Vector) -> Vector {
    Vector::from_iterator(sys.dim(), sys.q().iter().map(|qi| v.dot(&(qi * v))))
}

/// Deterministic quasi-uniform directions on the unit sphere of `R^n`.
fn sphere_samples(n: usize, count: usize, seed: u64) -> Vec<Vector> {
    match n {
        1 => vec![Vector::from_element(1, 1.0)],
        2 => (0..count)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / count as f64;
                Vector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * k as f64;
                    Vector::from_vec(vec![r * th.cos(), r * th.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let v = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                    v.normalize()
                })
                .collect()
        }
    }
}

fn push_unique_direction(dirs: &mut Vec<Vector>, v: Vector) {
    if dirs.iter().all(|w| w.dot(&v).abs() < 1.0 - DISCOVERY_TOL) {
        dirs.push(v);
    }
}

/// Unit directions `y` in `R^k` with `(E y)^T Q_i (E y) = 0` for all `i`,
/// where `E` has orthonormal columns.
fn vanishing_directions_in(sys: &QuadraticSystem, e: &Matrix) -> Vec<Vector> {
    let k = e.ncols();
    if k == 0 {
        return Vec::new();
    }
    let restricted: Vec<Matrix> = sys.q().iter().map(|qi| e.transpose() * qi * e).collect();
    let scale = sys.q_scale().max(1.0);
    let resid = |y: &Vector| Vector::from_iterator(restricted.len(), restricted.iter().map(|r| y.dot(&(r * y)) / scale));
    let samples = sphere_samples(k, 360 * k, 17);
    let vals: Vec<f64> = samples.iter().map(|y| resid(y).norm()).collect();
    // polish only the better half of the grid
    let mut sorted = vals.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[sorted.len() / 2];
    let mut dirs = Vec::new();
    for (y, v) in samples.iter().zip(&vals) {
        if *v > cut {
            continue;
        }
        let (p, rn) = polish(&resid, y, 40);
        if rn <= DISCOVERY_TOL {
            push_unique_direction(&mut dirs, e * p);
        }
    }
    dirs
}

// ---------------------------------------------------------------------------
// Exact analysis via invariant subspaces

/// Subspaces every witness must contain, and whether that list is complete.
#[derive(Debug, Clone)]
pub struct InvariantAnalysis {
    pub candidates: Vec<Subspace>,
    /// The candidates include every minimal subspace a witness could contain.
    pub exhaustive: bool,
    pub note: String,
}

pub fn invariant_analysis(sys: &QuadraticSystem) -> InvariantAnalysis {
    let n = sys.dim();
    let l = sys.l();
    let c = sys.c();
    if c.amax() > 0.0 {
        let mut cols = Matrix::zeros(n, n);
        let mut v = c.clone();
        for j in 0..n {
            cols.set_column(j, &v);
            v = l * v;
        }
        let krylov = orthonormal_basis(&cols, 1e-10);
        let note = format!("c != 0: any witness contains the Krylov space of (L, c), dimension {}", krylov.ncols());
        return InvariantAnalysis {
            candidates: Subspace::new(&krylov).into_iter().collect(),
            exhaustive: true,
            note,
        };
    }
    let mut candidates = Vec::new();
    let mut exhaustive = true;
    let mut notes = Vec::new();
    let mut found_dims = 0;
    for block in spectral_blocks(l) {
        let part = eigen_part(l, &block);
        found_dims += part.ncols();
        match block {
            Block::Real { value, .. } => match part.ncols() {
                0 => {
                    exhaustive = false;
                    notes.push(format!("no eigenvector resolved for eigenvalue {value:.6}"));
                }
                1 => candidates.extend(Subspace::new(&part)),
                g => {
                    // every line in the eigenspace is invariant: search for a vanishing one
                    let dirs = vanishing_directions_in(sys, &part);
                    if dirs.is_empty() {
                        exhaustive = false;
                        notes.push(format!(
                            "eigenvalue {value:.6} has a {g}-dimensional eigenspace; no vanishing line found"
                        ));
                    }
                    candidates.extend(dirs.into_iter().filter_map(|d| Subspace::span(&[d]).ok()));
                }
            },
            Block::Complex { re, im, .. } => match part.ncols() {
                0 | 1 => {
                    exhaustive = false;
                    notes.push(format!("no invariant plane resolved for {re:.6} +/- {im:.6}i"));
                }
                2 => candidates.extend(Subspace::new(&part)),
                d => {
                    // planes span(x, L x) for x in the eigen-part
                    let scale = sys.q_scale().max(1.0);
                    let resid = |y: &Vector| {
                        let x = &part * y;
                        let lx = l * &x;
                        let mut r = Vec::with_capacity(3 * n);
                        for qi in sys.q() {
                            let qx = qi * &x;
                            r.push(x.dot(&qx) / scale);
                            r.push(lx.dot(&qx) / scale);
                            r.push(lx.dot(&(qi * &lx)) / scale);
                        }
                        Vector::from_vec(r)
                    };
                    let mut hit = false;
                    for y in sphere_samples(d, 360 * d, 29) {
                        let (p, rn) = polish(&resid, &y, 40);
                        if rn <= DISCOVERY_TOL {
                            let x = &part * p;
                            let lx = l * &x;
                            if let Ok(s) = Subspace::span(&[x, lx]) {
                                candidates.push(s);
                                hit = true;
                                break;
                            }
                        }
                    }
                    if !hit {
                        exhaustive = false;
                        notes.push(format!(
                            "{re:.6} +/- {im:.6}i has a {d}-dimensional eigen-part; no vanishing plane found"
                        ));
                    }
                }
            },
        }
    }
    if found_dims == 0 {
        exhaustive = false;
    }
    let note = if notes.is_empty() {
        "c = 0: every minimal invariant subspace of L is listed".to_string()
    } else {
        notes.join("; ")
    };
    InvariantAnalysis {
        candidates,
        exhaustive,
        note,
    }
}

// ---------------------------------------------------------------------------
// Candidate sources

/// A generator of candidate subspaces, registered by name.
pub trait CandidateSource: Send + Sync {
    fn name(&self) -> &'static str;
    fn generate(&self, sys: &QuadraticSystem) -> Vec<Subspace>;
}

/// All coordinate subspaces of dimension `1..n`, for `n <= 4`.
pub struct CoordinateSubspaces;

impl CandidateSource for CoordinateSubspaces {
    fn name(&self) -> &'static str {
        "coordinate"
    }

    fn generate(&self, sys: &QuadraticSystem) -> Vec<Subspace> {
        let n = sys.dim();
        if n > 4 {
            return Vec::new();
        }
        let mut subsets: Vec<Vec<usize>> = (1..(1usize << n) - 1)
            .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
            .collect();
        subsets.sort_by(|a: &Vec<usize>, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        subsets
            .iter()
            .filter_map(|idx| Subspace::coordinate(n, idx).ok())
            .collect()
    }
}

/// Eigenvector lines, complex-pair planes, generalised eigenspaces and their
/// proper sums.
pub struct EigenspaceSums;

impl CandidateSource for EigenspaceSums {
    fn name(&self) -> &'static str {
        "eigenspace"
    }

    fn generate(&self, sys: &QuadraticSystem) -> Vec<Subspace> {
        let l = sys.l();
        let blocks = spectral_blocks(l);
        let mut out = Vec::new();
        for b in &blocks {
            let part = eigen_part(l, b);
            if part.ncols() > 0 && part.ncols() <= 2 {
                out.extend(Subspace::new(&part));
            }
        }
        let parts: Vec<Matrix> = blocks.iter().map(|b| generalized_part(l, b)).collect();
        let k = parts.len().min(10);
        for mask in 1..(1usize << k) {
            let chosen: Vec<&Matrix> = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| &parts[i]).collect();
            let total: usize = chosen.iter().map(|m| m.ncols()).sum();
            if total == 0 {
                continue;
            }
            let mut cols = Matrix::zeros(l.nrows(), total);
            let mut at = 0;
            for m in chosen {
                cols.view_mut((0, at), (m.nrows(), m.ncols())).copy_from(m);
                at += m.ncols();
            }
            out.extend(Subspace::new(&cols));
        }
        out
    }
}

/// Lines where `phi` vanishes, from a sphere grid with root polishing, merged
/// greedily into larger subspaces on which `phi` still vanishes.
pub struct VanishingDirections;

impl CandidateSource for VanishingDirections {
    fn name(&self) -> &'static str {
        "vanishing-grid"
    }

    fn generate(&self, sys: &QuadraticSystem) -> Vec<Subspace> {
        let n = sys.dim();
        let dirs = vanishing_directions_in(sys, &Matrix::identity(n, n));
        let mut merged: Vec<Matrix> = Vec::new();
        for d in dirs {
            if merged.iter().any(|w| out_of_span(w, &d) <= DISCOVERY_TOL) {
                continue;
            }
            let mut extended = false;
            for w in merged.iter_mut() {
                if w.ncols() + 1 >= n {
                    continue;
                }
                let mut cols = w.clone().insert_column(w.ncols(), 0.0);
                cols.set_column(w.ncols(), &d);
                let basis = orthonormal_basis(&cols, 1e-10);
                if phi_residual(sys, &basis) <= DISCOVERY_TOL {
                    *w = basis;
                    extended = true;
                }
            }
            if !extended {
                merged.push(Matrix::from_column_slice(n, 1, d.as_slice()));
            }
        }
        merged.iter().filter_map(|m| Subspace::new(m).ok()).collect()
    }
}

/// Common kernel of all `Q_i`.
pub struct CommonNullSpace;

impl CandidateSource for CommonNullSpace {
    fn name(&self) -> &'static str {
        "common-null"
    }

    fn generate(&self, sys: &QuadraticSystem) -> Vec<Subspace> {
        let n = sys.dim();
        let mut stacked = Matrix::zeros(n * n, n);
        for (i, qi) in sys.q().iter().enumerate() {
            stacked.view_mut((i * n, 0), (n, n)).copy_from(qi);
        }
        Subspace::new(&null_space(&stacked, 1e-12)).into_iter().collect()
    }
}

/// Krylov space (`c != 0`) or minimal invariant subspaces (`c = 0`).
pub struct MinimalInvariant;

impl CandidateSource for MinimalInvariant {
    fn name(&self) -> &'static str {
        "minimal-invariant"
    }

    fn generate(&self, sys: &QuadraticSystem) -> Vec<Subspace> {
        invariant_analysis(sys).candidates
    }
}

pub struct CandidateRegistry {
    sources: Vec<Box<dyn CandidateSource>>,
}

impl Default for CandidateRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(CoordinateSubspaces));
        reg.register(Box::new(EigenspaceSums));
        reg.register(Box::new(VanishingDirections));
        reg.register(Box::new(CommonNullSpace));
        reg.register(Box::new(MinimalInvariant));
        reg
    }
}

impl CandidateRegistry {
    pub fn empty() -> Self {
        Self { sources: Vec::new() }
    }

    /// Adds a source, replacing any existing one with the same name.
    pub fn register(&mut self, source: Box<dyn CandidateSource>) {
        self.sources.retain(|s| s.name() != source.name());
        self.sources.push(source);
    }

    pub fn get(&self, name: &str) -> Result<&dyn CandidateSource> {
        self.sources
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "candidate source",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.sources.iter().map(|s| s.name()).collect()
    }

    /// Candidates in source order, each followed by the largest `L`-invariant
    /// subspace inside it when `phi` vanishes there; duplicates dropped.
    pub fn generate(&self, sys: &QuadraticSystem) -> Vec<Candidate> {
        let mut out: Vec<Candidate> = Vec::new();
        let push = |out: &mut Vec<Candidate>, source: &'static str, s: Subspace| {
            if out.iter().all(|c| c.subspace.distance(&s) >= DISCOVERY_TOL) {
                out.push(Candidate { source, subspace: s });
            }
        };
        for src in &self.sources {
            for s in src.generate(sys) {
                let core = (phi_residual(sys, s.basis()) <= DISCOVERY_TOL)
                    .then(|| invariant_core(sys.l(), s.basis()))
                    .flatten();
                push(&mut out, src.name(), s);
                if let Some(core) = core {
                    push(&mut out, "invariant-core", core);
                }
            }
        }
        out
    }
}

/// Largest `L`-invariant subspace of `span(basis)`.
fn invariant_core(l: &Matrix, basis: &Matrix) -> Option<Subspace> {
    let mut w = basis.clone();
    loop {
        if w.ncols() == 0 {
            return None;
        }
        let lw = l * &w;
        let leak = &lw - &w * (w.transpose() * &lw);
        let keep = null_space(&leak, DISCOVERY_TOL);
        if keep.ncols() == w.ncols() {
            return Subspace::new(&w).ok();
        }
        w = orthonormal_basis(&(&w * keep), 1e-10);
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub source: &'static str,
    pub subspace: Subspace,
}

pub fn generate_candidates(sys: &QuadraticSystem) -> Vec<Candidate> {
    CandidateRegistry::default().generate(sys)
}

// ---------------------------------------------------------------------------
// Verdict

#[derive(Debug, Clone)]
pub enum Effectiveness {
    Effective,
    Ineffective(Subspace),
    Unknown,
}

impl Effectiveness {
    pub fn label(&self) -> &'static str {
        match self {
            Effectiveness::Effective => "Effective",
            Effectiveness::Ineffective(_) => "Ineffective",
            Effectiveness::Unknown => "Unknown",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CandidateCheck {
    pub candidate: Candidate,
    pub report: ConditionReport,
}

impl CandidateCheck {
    /// `None` for a witness; otherwise which condition fails first.
    pub fn failure(&self) -> Option<String> {
        if !self.report.phi_vanishes {
            Some(format!("condition 1: phi does not vanish (residual {:.3e})", self.report.phi_residual))
        } else if !self.report.affine_invariant {
            Some(format!("condition 2: c + Lx leaves the subspace (residual {:.3e})", self.report.affine_residual))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone)]
pub struct EffectivenessVerdict {
    pub result: Effectiveness,
    pub candidates_checked: Vec<CandidateCheck>,
    pub exhaustive: bool,
    pub note: String,
}

pub fn check_effective(sys: &QuadraticSystem) -> EffectivenessVerdict {
    check_effective_with(&CandidateRegistry::default(), sys)
}

pub fn check_effective_with(registry: &CandidateRegistry, sys: &QuadraticSystem) -> EffectivenessVerdict {
    let candidates = registry.generate(sys);
    let checks: Vec<CandidateCheck> = candidates
        .into_par_iter()
        .map(|candidate| {
            let report = condition_report(sys, &candidate.subspace).expect("candidate has system dimension");
            CandidateCheck { candidate, report }
        })
        .collect();
    let analysis = invariant_analysis(sys);
    let witness = checks
        .iter()
        .find(|c| c.report.is_witness())
        .map(|c| c.candidate.subspace.clone());
    // an exact candidate too close to call spoils the proof
    let ambiguous = analysis.candidates.iter().any(|s| {
        let phi = phi_residual(sys, s.basis());
        let aff = affine_residual(sys, s.basis());
        let near = |r: f64| r > VERIFY_TOL && r <= DISCOVERY_TOL;
        (near(phi) && aff <= DISCOVERY_TOL) || (near(aff) && phi <= DISCOVERY_TOL)
    });
    let exhaustive = analysis.exhaustive && !ambiguous;
    let mut note = analysis.note;
    if ambiguous {
        note.push_str("; a required subspace is within discovery tolerance of passing");
    }
    let result = match witness {
        Some(w) => Effectiveness::Ineffective(w),
        None if exhaustive => Effectiveness::Effective,
        None => Effectiveness::Unknown,
    };
    EffectivenessVerdict {
        result,
        candidates_checked: checks,
        exhaustive,
        note,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::counterexample_system;
    use crate::canonical2d::q_family;
    use crate::system::random_system;
    use rand::Rng;

    fn sys_from(c: &[f64], l: &[f64], q: Vec<Matrix>) -> QuadraticSystem {
        let n = c.len();
        QuadraticSystem::new(Vector::from_row_slice(c), Matrix::from_row_slice(n, n, l), q).unwrap()
    }

    fn v(i: &[usize]) -> Subspace {
        Subspace::coordinate(3, i).unwrap()
    }

    #[test]
    fn condition_examples() {
        let sys = counterexample_system();
        assert!(phi_vanishes_on(&sys, &v(&[0, 1])).unwrap());
        assert!(!phi_vanishes_on(&sys, &v(&[1, 2])).unwrap());
        assert!(!affine_invariant_on(&sys, &v(&[0])).unwrap());
        assert!(!affine_invariant_on(&sys, &v(&[0, 1])).unwrap());
        assert_eq!(sys.l() * Vector::from_vec(vec![1.0, 0.0, 0.0]), Vector::from_vec(vec![-2.0, -1.0, 0.0]));
        assert_eq!(sys.l() * Vector::from_vec(vec![0.0, 1.0, 0.0]), Vector::from_vec(vec![1.0, 0.5, -3.0]));

        let diag = sys_from(&[0.0; 3], &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0], vec![Matrix::zeros(3, 3); 3]);
        assert!(affine_invariant_on(&diag, &v(&[0])).unwrap());
        assert!(phi_vanishes_on(&diag, &v(&[1, 2])).unwrap());

        let two = Subspace::coordinate(2, &[0]).unwrap();
        assert!(matches!(phi_vanishes_on(&sys, &two), Err(Error::DimensionMismatch(_))));
        assert!(Subspace::coordinate(3, &[0, 1, 2]).is_err());
    }

    #[test]
    fn witness_examples() {
        let sys = sys_from(&[0.0, 0.0], &[-1.0, 0.0, 0.0, -2.0], vec![Matrix::zeros(2, 2); 2]);
        assert!(is_ineffectiveness_witness(&sys, &Subspace::coordinate(2, &[0]).unwrap()).unwrap());
        let cex = counterexample_system();
        for idx in [&[0][..], &[1], &[2], &[0, 1]] {
            assert!(!is_ineffectiveness_witness(&cex, &v(idx)).unwrap());
        }
        for l12 in [0.0, 0.7] {
            let canon = sys_from(&[0.0, 0.0], &[0.3, l12, 0.0, -1.0], q_family([2.0, 0.0]));
            let e2 = Subspace::coordinate(2, &[1]).unwrap();
            assert_eq!(is_ineffectiveness_witness(&canon, &e2).unwrap(), l12 == 0.0);
        }
    }

    #[test]
    fn counterexample_candidates_follow_the_argument() {
        let sys = counterexample_system();
        let cands = generate_candidates(&sys);
        for idx in [&[0][..], &[1], &[2], &[0, 1]] {
            assert!(cands.iter().any(|c| c.subspace.distance(&v(idx)) < 1e-8), "{idx:?}");
        }
        // among coordinate subspaces exactly V1..V4 pass condition 1, and all fail condition 2
        let passing: Vec<Vec<usize>> = CoordinateSubspaces
            .generate(&sys)
            .iter()
            .filter(|s| phi_vanishes_on(&sys, s).unwrap())
            .map(|s| {
                assert!(!affine_invariant_on(&sys, s).unwrap());
                s.coordinate_indices().unwrap()
            })
            .collect();
        assert_eq!(passing, vec![vec![0], vec![1], vec![2], vec![0, 1]]);
        let verdict = check_effective(&sys);
        assert!(matches!(verdict.result, Effectiveness::Effective), "{}", verdict.note);
        assert!(verdict.exhaustive);
    }

    #[test]
    fn trivial_nonlinearity_is_ineffective() {
        let sys = sys_from(&[0.0; 3], &[-1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, -3.0], vec![Matrix::zeros(3, 3); 3]);
        let cands = generate_candidates(&sys);
        assert_eq!(CoordinateSubspaces.generate(&sys).len(), 6);
        for s in CoordinateSubspaces.generate(&sys) {
            assert!(cands.iter().any(|c| c.subspace.distance(&s) < 1e-12));
        }
        match check_effective(&sys).result {
            Effectiveness::Ineffective(w) => assert_eq!(w.coordinate_indices(), Some(vec![0])),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn planar_vanishing_direction_is_found() {
        // phi = (q . x) J x vanishes only on the line q . x = 0
        let q = [0.6, -0.8];
        let sys = sys_from(&[0.0, 0.0], &[0.0, 1.0, -1.0, 0.0], q_family(q));
        let found = VanishingDirections.generate(&sys);
        assert_eq!(found.len(), 1);
        let expect = Subspace::span(&[Vector::from_vec(vec![0.8, 0.6])]).unwrap();
        assert!(found[0].distance(&expect) < 1e-8);
    }

    #[test]
    fn hidden_invariant_line_is_found() {
        // eigenvector (1, 1, 0)/sqrt2 of L on which phi vanishes, in rotated coordinates
        let base = counterexample_system();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = Matrix::from_row_slice(3, 3, &[s, -s, 0.0, s, s, 0.0, 0.0, 0.0, 1.0]);
        let l = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0, -3.0]));
        let sys = QuadraticSystem::new(Vector::zeros(3), l, base.q().to_vec()).unwrap().rotated(&r).unwrap();
        match check_effective(&sys).result {
            Effectiveness::Ineffective(w) => {
                assert!(is_ineffectiveness_witness(&sys, &w).unwrap());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn forcing_outside_vanishing_set_is_effective() {
        // c along e3 and L mixing e3 into the plane: Krylov space is everything
        let cex = counterexample_system();
        let sys = QuadraticSystem::new(Vector::from_vec(vec![0.0, 0.0, 1.0]), cex.l().clone(), cex.q().to_vec()).unwrap();
        let verdict = check_effective(&sys);
        assert!(matches!(verdict.result, Effectiveness::Effective), "{}", verdict.note);
        // forcing inside an invariant vanishing line
        let l = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0, -3.0]));
        let sys = QuadraticSystem::new(Vector::from_vec(vec![0.0, 0.0, 2.0]), l, cex.q().to_vec()).unwrap();
        match check_effective(&sys).result {
            Effectiveness::Ineffective(w) => assert_eq!(w.coordinate_indices(), Some(vec![2])),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn repeated_eigenvalue_search() {
        // L = -I: every subspace is invariant; phi vanishes on span(e3)
        let cex = counterexample_system();
        let sys = QuadraticSystem::new(Vector::zeros(3), -Matrix::identity(3, 3), cex.q().to_vec()).unwrap();
        let a = invariant_analysis(&sys);
        assert!(a.candidates.iter().all(|s| phi_vanishes_on(&sys, s).unwrap()));
        assert!(matches!(check_effective(&sys).result, Effectiveness::Ineffective(_)));
    }

    #[test]
    fn witness_checks_are_basis_independent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let sys = counterexample_system();
        let theta: f64 = rng.gen_range(0.0..6.0);
        let (s, c) = theta.sin_cos();
        let base = v(&[0, 1]);
        let mix = Matrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let mixed = Subspace::new(&(base.basis() * mix)).unwrap();
        let a = condition_report(&sys, &base).unwrap();
        let b = condition_report(&sys, &mixed).unwrap();
        assert_eq!((a.phi_vanishes, a.affine_invariant), (b.phi_vanishes, b.affine_invariant));
    }

    #[test]
    fn vanishing_candidates_vanish_pointwise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for seed in 0..4 {
            let sys = random_system(3, seed, 1.0).unwrap();
            for cand in generate_candidates(&sys) {
                if !phi_vanishes_on(&sys, &cand.subspace).unwrap() {
                    continue;
                }
                for _ in 0..1000 {
                    let y = Vector::from_fn(cand.subspace.dim(), |_, _| rng.gen_range(-10.0..10.0));
                    let x = cand.subspace.basis() * y;
                    assert!(phi_of(&sys, &x).norm() <= 1e-9 * x.norm_squared().max(1.0));
                }
            }
        }
    }

    #[test]
    fn random_dense_systems_are_sound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for seed in 0..5 {
            let sys = random_system(3, 40 + seed, 1.0).unwrap();
            let verdict = check_effective(&sys);
            if let Effectiveness::Ineffective(w) = &verdict.result {
                assert!(is_ineffectiveness_witness(&sys, w).unwrap());
                // a witness needs a vanishing direction, so sampling must be able to find small phi
                let best = (0..10_000)
                    .map(|_| {
                        let x: Vector = Vector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
                        phi_of(&sys, &x.normalize()).norm()
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!(best < 0.1);
            }
        }
    }
}
