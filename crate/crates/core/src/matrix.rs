//! Dense complex matrices for one- and few-qubit operators.
//!
//! Qubit 0 is the most significant bit of a basis index. All structural zero
//! tests use [`TOL`].

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Structural tolerance for zero tests, unitarity and phase snapping.
pub const TOL: f64 = 1e-9;

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NonUnitary(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("wire {wire} out of range for {n} qubits")]
    WireOutOfRange { wire: usize, n: usize },
}

pub type MatrixResult<T> = Result<T, MatrixError>;

/// Row-major dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        CMat { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = CMat::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> MatrixResult<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(MatrixError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(CMat { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> MatrixResult<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(MatrixError::DimensionMismatch("ragged rows".into()));
        }
        CMat::from_vec(r, c, rows.concat())
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = CMat::zeros(entries.len(), entries.len());
        for (i, z) in entries.iter().enumerate() {
            m[(i, i)] = *z;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut m = CMat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                m[(c, r)] = self[(r, c)].conj();
            }
        }
        m
    }

    pub fn scale(&self, z: C64) -> Self {
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * z).collect() }
    }

    pub fn matmul(&self, other: &CMat) -> MatrixResult<CMat> {
        if self.cols != other.rows {
            return Err(MatrixError::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &CMat) -> CMat {
        let mut out = CMat::zeros(self.rows * other.rows, self.cols * other.cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self[(r1, c1)];
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        out[(r1 * other.rows + r2, c1 * other.cols + c2)] = a * other[(r2, c2)];
                    }
                }
            }
        }
        out
    }

    /// Largest entrywise magnitude of `self - other`.
    pub fn max_abs_diff(&self, other: &CMat) -> MatrixResult<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn same_shape(&self, other: &CMat) -> MatrixResult<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(MatrixError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// `‖M†M − I‖_max`.
    pub fn unitarity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let p = self.adjoint().matmul(self).expect("square");
        p.max_abs_diff(&CMat::identity(self.rows)).expect("square")
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    pub fn ensure_unitary(&self) -> MatrixResult<()> {
        let err = self.unitarity_error();
        if err <= TOL {
            Ok(())
        } else {
            Err(MatrixError::NonUnitary(err))
        }
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        (0..self.rows).all(|r| (0..self.cols).all(|c| r == c || self[(r, c)].norm() <= tol))
    }

    /// True for square matrices supported only on the anti-diagonal.
    pub fn is_antidiagonal(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|r| (0..self.cols).all(|c| r + c == self.rows - 1 || self[(r, c)].norm() <= tol))
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> CMat {
        let mut out = CMat::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out[(r, c)] = m[(r, c)];
            }
        }
        out
    }

    /// Nested `[[[re, im], ...], ...]` rows.
    pub fn to_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| [self[(r, c)].re, self[(r, c)].im]).collect())
            .collect()
    }

    pub fn from_pairs(rows: &[Vec<[f64; 2]>]) -> MatrixResult<CMat> {
        let rows: Vec<Vec<C64>> =
            rows.iter().map(|row| row.iter().map(|p| C64::new(p[0], p[1])).collect()).collect();
        CMat::from_rows(&rows)
    }
}

impl Mul for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        self.matmul(rhs).expect("matrix product dimension mismatch")
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        self.same_shape(rhs).expect("matrix sum dimension mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        CMat { rows: self.rows, cols: self.cols, data }
    }
}

impl Serialize for CMat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_pairs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        CMat::from_pairs(&rows).map_err(D::Error::custom)
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

pub mod gates {
    //! Standard gate matrices.
    use super::*;

    pub fn h() -> CMat {
        let s = FRAC_1_SQRT_2;
        CMat::from_vec(2, 2, vec![c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]).unwrap()
    }

    pub fn x() -> CMat {
        CMat::from_vec(2, 2, vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap()
    }

    pub fn z() -> CMat {
        v(PI)
    }

    /// `V(θ) = |0⟩⟨0| + e^{iθ}|1⟩⟨1|`.
    pub fn v(theta: f64) -> CMat {
        CMat::diag(&[c(1.0, 0.0), cis(theta)])
    }

    pub fn rz(theta: f64) -> CMat {
        CMat::diag(&[cis(-theta / 2.0), cis(theta / 2.0)])
    }

    /// Controlled-`V(θ)` on two qubits.
    pub fn cphase(theta: f64) -> CMat {
        CMat::diag(&[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), cis(theta)])
    }

    pub fn cz() -> CMat {
        cphase(PI)
    }

    pub fn cnot() -> CMat {
        controlled(&CMat::identity(2), &x())
    }

    pub fn swap() -> CMat {
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = c(1.0, 0.0);
        m[(1, 2)] = c(1.0, 0.0);
        m[(2, 1)] = c(1.0, 0.0);
        m[(3, 3)] = c(1.0, 0.0);
        m
    }

    /// `|0⟩⟨0| ⊗ u0 + |1⟩⟨1| ⊗ u1`, control on the first (most significant) qubit.
    pub fn controlled(u0: &CMat, u1: &CMat) -> CMat {
        let d = u0.rows();
        let mut m = CMat::zeros(2 * d, 2 * d);
        for r in 0..d {
            for col in 0..d {
                m[(r, col)] = u0[(r, col)];
                m[(d + r, d + col)] = u1[(r, col)];
            }
        }
        m
    }
}

/// Reduce an angle to `[0, 2π)`, snapping to the nearest multiple of π/2
/// when within [`TOL`].
pub fn canonical_phase(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(TAU);
    let k = (t / FRAC_PI_2).round();
    if (t - k * FRAC_PI_2).abs() <= TOL {
        t = k * FRAC_PI_2;
    }
    if t >= TAU - TOL {
        0.0
    } else {
        t
    }
}

/// `θ ≡ 0 (mod π)` up to [`TOL`].
pub fn is_multiple_of_pi(theta: f64) -> bool {
    let r = theta.rem_euclid(PI);
    r <= TOL || PI - r <= TOL
}

/// `θ ≡ π (mod 2π)` up to [`TOL`].
pub fn is_pi(theta: f64) -> bool {
    (theta.rem_euclid(TAU) - PI).abs() <= TOL
}

/// `θ ≡ 0 (mod 2π)` up to [`TOL`].
pub fn is_zero_phase(theta: f64) -> bool {
    let r = theta.rem_euclid(TAU);
    r <= TOL || TAU - r <= TOL
}

/// Structural class of a single-qubit unitary; phases are in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SingleQubitClass {
    Diagonal,
    AntiDiagonal,
    /// `V(γ)·H·V(α)`.
    OneHadamard { alpha: f64, gamma: f64 },
    /// `V(γ)·H·V(β)·H·V(α)`.
    TwoHadamard { alpha: f64, beta: f64, gamma: f64 },
}

impl SingleQubitClass {
    pub fn is_distributable(&self) -> bool {
        matches!(self, SingleQubitClass::Diagonal | SingleQubitClass::AntiDiagonal)
    }

    /// Representative matrix for the Hadamard classes.
    pub fn reconstruct(&self) -> Option<CMat> {
        use gates::{h, v};
        match *self {
            SingleQubitClass::OneHadamard { alpha, gamma } => Some(&(&v(gamma) * &h()) * &v(alpha)),
            SingleQubitClass::TwoHadamard { alpha, beta, gamma } => {
                Some(&(&(&(&v(gamma) * &h()) * &v(beta)) * &h()) * &v(alpha))
            }
            _ => None,
        }
    }
}

fn check_2x2(u: &CMat) -> MatrixResult<()> {
    if u.rows() != 2 || u.cols() != 2 {
        return Err(MatrixError::DimensionMismatch(format!("expected 2x2, got {}x{}", u.rows(), u.cols())));
    }
    u.ensure_unitary()
}

/// Classify a 2×2 unitary, preferring the most specific class.
pub fn classify_single_qubit(u: &CMat) -> MatrixResult<SingleQubitClass> {
    check_2x2(u)?;
    if u.is_diagonal(TOL) {
        return Ok(SingleQubitClass::Diagonal);
    }
    if u.is_antidiagonal(TOL) {
        return Ok(SingleQubitClass::AntiDiagonal);
    }
    let g = u[(0, 0)].arg();
    if u.data().iter().all(|z| (z.norm() - FRAC_1_SQRT_2).abs() <= TOL) {
        let class = SingleQubitClass::OneHadamard {
            alpha: canonical_phase(u[(0, 1)].arg() - g),
            gamma: canonical_phase(u[(1, 0)].arg() - g),
        };
        if matches_class(u, &class) {
            return Ok(class);
        }
    }
    let beta = 2.0 * u[(0, 0)].norm().clamp(0.0, 1.0).acos();
    let class = SingleQubitClass::TwoHadamard {
        alpha: canonical_phase(u[(0, 1)].arg() - g + FRAC_PI_2),
        beta: canonical_phase(beta),
        gamma: canonical_phase(u[(1, 0)].arg() - g + FRAC_PI_2),
    };
    debug_assert!(matches_class(u, &class), "Euler reconstruction failed for {u:?}");
    Ok(class)
}

fn matches_class(u: &CMat, class: &SingleQubitClass) -> bool {
    class
        .reconstruct()
        .and_then(|r| equal_up_to_global_phase(u, &r, TOL).ok())
        .is_some_and(|(eq, _)| eq)
}

/// For a diagonal or anti-diagonal 2×2 unitary, return `(n, α)` with
/// `u ∝ Xⁿ·V(α)`.
pub fn distributable_form(u: &CMat) -> Option<(u8, f64)> {
    if u.rows() != 2 || u.cols() != 2 {
        return None;
    }
    if u.is_diagonal(TOL) {
        Some((0, canonical_phase(u[(1, 1)].arg() - u[(0, 0)].arg())))
    } else if u.is_antidiagonal(TOL) {
        Some((1, canonical_phase(u[(0, 1)].arg() - u[(1, 0)].arg())))
    } else {
        None
    }
}

/// Eigendecomposition `u = e^{iθ0}·W·V(θ1−θ0)·W†` with `θ0 ≤ θ1` in `[0, 2π)`.
pub fn diagonalize_2x2_unitary(u: &CMat) -> MatrixResult<(CMat, f64, f64)> {
    check_2x2(u)?;
    let (a, b, cc, d) = (u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
    let mut pairs: Vec<(f64, [C64; 2])> = if u.is_diagonal(TOL) {
        vec![(canonical_phase(a.arg()), [c(1.0, 0.0), c(0.0, 0.0)]), (canonical_phase(d.arg()), [c(0.0, 0.0), c(1.0, 0.0)])]
    } else {
        let half_tr = (a + d) * 0.5;
        let disc = (half_tr * half_tr - (a * d - b * cc)).sqrt();
        [half_tr + disc, half_tr - disc]
            .iter()
            .map(|&lam| {
                let v1 = [b, lam - a];
                let v2 = [lam - d, cc];
                let n1 = v1[0].norm_sqr() + v1[1].norm_sqr();
                let n2 = v2[0].norm_sqr() + v2[1].norm_sqr();
                let v = if n1 >= n2 { v1 } else { v2 };
                (canonical_phase(lam.arg()), normalize_vec(v))
            })
            .collect()
    };
    pairs.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap()
            .then(x.1[0].re.partial_cmp(&y.1[0].re).unwrap())
            .then(x.1[0].im.partial_cmp(&y.1[0].im).unwrap())
    });
    let (theta0, v0) = pairs[0];
    let theta1 = pairs[1].0;
    // Orthonormal completion keeps W exactly unitary.
    let v1 = normalize_vec([-v0[1].conj(), v0[0].conj()]);
    let w = CMat::from_vec(2, 2, vec![v0[0], v1[0], v0[1], v1[1]]).unwrap();
    let rebuilt = &(&w * &gates::v(theta1 - theta0)).scale(cis(theta0)) * &w.adjoint();
    let err = rebuilt.max_abs_diff(u)?;
    if err > TOL {
        return Err(MatrixError::NonUnitary(err));
    }
    Ok((w, theta0, theta1))
}

/// Scale to unit norm with the first non-negligible component real positive.
fn normalize_vec(v: [C64; 2]) -> [C64; 2] {
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let pivot = if v[0].norm() > TOL { v[0] } else { v[1] };
    let ph = cis(-pivot.arg()) / n;
    [v[0] * ph, v[1] * ph]
}

/// Test `a = e^{iφ}·b` entrywise within `tol`; `φ` is fixed by the
/// largest-magnitude entry of `b`.
pub fn equal_up_to_global_phase(a: &CMat, b: &CMat, tol: f64) -> MatrixResult<(bool, f64)> {
    a.same_shape(b)?;
    let (idx, bmax) = b
        .data()
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
    if bmax <= tol {
        return Ok((a.max_abs() <= tol, 0.0));
    }
    let phi = canonical_phase(a.data()[idx].arg() - b.data()[idx].arg());
    let dev = a.max_abs_diff(&b.scale(cis(phi)))?;
    Ok((dev <= tol, phi))
}

/// Deviation `min_φ`-style distance using the same phase rule as
/// [`equal_up_to_global_phase`].
pub fn phase_deviation(a: &CMat, b: &CMat) -> MatrixResult<(f64, f64)> {
    let (_, phi) = equal_up_to_global_phase(a, b, 0.0)?;
    Ok((a.max_abs_diff(&b.scale(cis(phi)))?, phi))
}

fn check_wires(gate: &CMat, wires: &[usize], n: usize) -> MatrixResult<()> {
    for (i, &w) in wires.iter().enumerate() {
        if w >= n {
            return Err(MatrixError::WireOutOfRange { wire: w, n });
        }
        if wires[..i].contains(&w) {
            return Err(MatrixError::DimensionMismatch(format!("wire {w} repeated")));
        }
    }
    let k = wires.len();
    if !gate.is_square() || gate.rows() != 1 << k {
        return Err(MatrixError::DimensionMismatch(format!(
            "{}x{} gate on {k} wires",
            gate.rows(),
            gate.cols()
        )));
    }
    Ok(())
}

/// Full `2^n × 2^n` operator acting as `gate` on `wires`.
pub fn embed_gate(gate: &CMat, wires: &[usize], n: usize) -> MatrixResult<CMat> {
    let mut out = CMat::identity(1 << n);
    apply_gate(&mut out, gate, wires, n)?;
    Ok(out)
}

/// Left-multiply `state` (rows indexed by `n` qubits) by `gate` on `wires`.
pub fn apply_gate(state: &mut CMat, gate: &CMat, wires: &[usize], n: usize) -> MatrixResult<()> {
    check_wires(gate, wires, n)?;
    if state.rows() != 1 << n {
        return Err(MatrixError::DimensionMismatch(format!("state has {} rows, expected {}", state.rows(), 1usize << n)));
    }
    let k = wires.len();
    let dim = 1usize << k;
    let masks: Vec<usize> = wires.iter().map(|&w| 1usize << (n - 1 - w)).collect();
    let all: usize = masks.iter().sum();
    let offsets: Vec<usize> = (0..dim)
        .map(|s| (0..k).filter(|&i| s & (1 << (k - 1 - i)) != 0).map(|i| masks[i]).sum())
        .collect();
    let cols = state.cols();
    let mut buf = vec![c(0.0, 0.0); dim];
    for base in (0..1usize << n).filter(|i| i & all == 0) {
        for col in 0..cols {
            for (s, off) in offsets.iter().enumerate() {
                buf[s] = state[(base + off, col)];
            }
            for (r, off) in offsets.iter().enumerate() {
                let mut acc = c(0.0, 0.0);
                for (s, z) in buf.iter().enumerate() {
                    acc += gate[(r, s)] * z;
                }
                state[(base + off, col)] = acc;
            }
        }
    }
    Ok(())
}

/// Haar-random `dim × dim` unitary.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMat {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = CMat::from_nalgebra(&q);
    for j in 0..dim {
        let ph = r[(j, j)] / r[(j, j)].norm();
        for i in 0..dim {
            out[(i, j)] *= ph;
        }
    }
    out
}
