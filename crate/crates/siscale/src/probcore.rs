//! Finite-alphabet probability primitives.
//!
//! All information quantities are in bits. Masses below [`ZERO_MASS`] are
//! treated as exact zeros inside entropy sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Masses at or below this value contribute nothing to entropy sums.
pub const ZERO_MASS: f64 = 1e-15;
/// Tolerance on the total mass of a distribution.
pub const SUM_TOL: f64 = 1e-12;

/// Dense row-major matrix of reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::ShapeMismatch("matrix with no rows".into()));
        }
        let c = rows[0].len();
        if c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeMismatch("ragged or empty rows".into()));
        }
        Ok(Matrix { rows: r, cols: c, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (c, v) in self.row(r).iter().enumerate() {
                s[c] += v;
            }
        }
        s
    }

    /// True when every row is a probability vector.
    pub fn is_row_stochastic(&self) -> bool {
        self.data.iter().all(|v| *v >= 0.0 && v.is_finite())
            && self.row_sums().iter().all(|s| (s - 1.0).abs() <= SUM_TOL)
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Probability mass function over a finite alphabet.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution("negative or non-finite mass".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!("masses sum to {s}")));
        }
        Ok(Pmf { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        Ok(Pmf { probs: vec![1.0 / n as f64; n] })
    }

    pub fn point(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(Error::Domain(format!("symbol {k} outside alphabet of size {n}")));
        }
        let mut probs = vec![0.0; n];
        probs[k] = 1.0;
        Ok(Pmf { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

impl<'de> Deserialize<'de> for Pmf {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let probs = Vec::<f64>::deserialize(d)?;
        Pmf::new(probs).map_err(serde::de::Error::custom)
    }
}

/// `-p log2 p` with the zero-mass convention.
#[inline]
pub fn plogp(p: f64) -> f64 {
    if p <= ZERO_MASS {
        0.0
    } else {
        -p * p.log2()
    }
}

/// Entropy of a nonnegative mass vector (not renormalized).
pub fn entropy_of(masses: &[f64]) -> f64 {
    masses.iter().map(|&p| plogp(p)).sum()
}

/// Shannon entropy in bits.
pub fn entropy(p: &Pmf) -> f64 {
    entropy_of(p.probs())
}

fn check_joint(joint: &Matrix) -> Result<()> {
    if joint.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidDistribution("negative or non-finite joint mass".into()));
    }
    let s = joint.sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidDistribution(format!("joint sums to {s}")));
    }
    Ok(())
}

/// `H(row | column)` for a joint matrix indexed `[row][column]`.
pub fn conditional_entropy(joint: &Matrix) -> Result<f64> {
    check_joint(joint)?;
    let h_joint = entropy_of(joint.data());
    let h_col = entropy_of(&joint.col_sums());
    Ok((h_joint - h_col).max(0.0))
}

/// `I(row; column)` for a joint matrix.
pub fn mutual_information(joint: &Matrix) -> Result<f64> {
    check_joint(joint)?;
    let h_row = entropy_of(&joint.row_sums());
    let h_col = entropy_of(&joint.col_sums());
    let h_joint = entropy_of(joint.data());
    Ok((h_row + h_col - h_joint).max(0.0))
}

fn check_unit(name: &str, u: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&u) || u.is_nan() {
        return Err(Error::Domain(format!("{name}={u} outside [0,1]")));
    }
    Ok(())
}

/// Binary entropy `h_b(u)`.
pub fn binary_entropy(u: f64) -> Result<f64> {
    check_unit("u", u)?;
    Ok(hb(u))
}

/// Unchecked binary entropy for callers that already validated the argument.
#[inline]
pub(crate) fn hb(u: f64) -> f64 {
    plogp(u) + plogp(1.0 - u)
}

/// Binary convolution `u(1-v) + v(1-u)`.
pub fn binary_convolve(u: f64, v: f64) -> Result<f64> {
    check_unit("u", u)?;
    check_unit("v", v)?;
    Ok(conv(u, v))
}

#[inline]
pub(crate) fn conv(u: f64, v: f64) -> f64 {
    u * (1.0 - v) + v * (1.0 - u)
}

/// Distortion measure `d(x, x̂)` with its Γ_d membership flag.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionMeasure {
    d: Matrix,
    in_gamma_d: bool,
}

impl DistortionMeasure {
    pub fn new(d: Matrix) -> Result<Self> {
        if d.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("distortion entries must be finite and nonnegative".into()));
        }
        let in_gamma_d = d.rows() == d.cols()
            && (0..d.rows()).all(|x| {
                (0..d.cols()).all(|xh| if x == xh { d.get(x, xh) == 0.0 } else { d.get(x, xh) > 0.0 })
            });
        Ok(DistortionMeasure { d, in_gamma_d })
    }

    pub fn hamming(n: usize) -> Self {
        let mut d = Matrix::zeros(n, n);
        for x in 0..n {
            for xh in 0..n {
                if x != xh {
                    d.set(x, xh, 1.0);
                }
            }
        }
        DistortionMeasure { d, in_gamma_d: true }
    }

    /// Hamming distortion on the image of `q`: `d(x, x̂) = 1[q(x) != q(x̂)]`.
    pub fn hamming_on(q: &[usize]) -> Self {
        let n = q.len();
        let mut d = Matrix::zeros(n, n);
        for x in 0..n {
            for xh in 0..n {
                if q[x] != q[xh] {
                    d.set(x, xh, 1.0);
                }
            }
        }
        DistortionMeasure::new(d).expect("0/1 entries are valid")
    }

    /// Squared error between reconstruction levels.
    pub fn squared_error(levels: &[f64]) -> Self {
        let n = levels.len();
        let mut d = Matrix::zeros(n, n);
        for x in 0..n {
            for xh in 0..n {
                let e = levels[x] - levels[xh];
                d.set(x, xh, e * e);
            }
        }
        DistortionMeasure::new(d).expect("squares are nonnegative")
    }

    pub fn matrix(&self) -> &Matrix {
        &self.d
    }

    pub fn in_gamma_d(&self) -> bool {
        self.in_gamma_d
    }

    #[inline]
    pub fn get(&self, x: usize, xh: usize) -> f64 {
        self.d.get(x, xh)
    }

    pub fn source_size(&self) -> usize {
        self.d.rows()
    }

    pub fn reconstruction_size(&self) -> usize {
        self.d.cols()
    }

    pub fn max_value(&self) -> f64 {
        self.d.data().iter().cloned().fold(0.0, f64::max)
    }
}

impl<'de> Deserialize<'de> for DistortionMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = Matrix::deserialize(d)?;
        DistortionMeasure::new(m).map_err(serde::de::Error::custom)
    }
}

/// `Σ P(x, x̂) d(x, x̂)`.
pub fn expected_distortion(joint_x_xhat: &Matrix, d: &DistortionMeasure) -> Result<f64> {
    if joint_x_xhat.rows() != d.source_size() || joint_x_xhat.cols() != d.reconstruction_size() {
        return Err(Error::ShapeMismatch(format!(
            "joint is {}x{}, distortion is {}x{}",
            joint_x_xhat.rows(),
            joint_x_xhat.cols(),
            d.source_size(),
            d.reconstruction_size()
        )));
    }
    check_joint(joint_x_xhat)?;
    let mut s = 0.0;
    for x in 0..joint_x_xhat.rows() {
        for xh in 0..joint_x_xhat.cols() {
            s += joint_x_xhat.get(x, xh) * d.get(x, xh);
        }
    }
    Ok(s)
}

/// Which decoder's side information to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    First,
    Second,
}

/// Joint source `P(x, y1) P(y2 | y1)`; the Markov chain `X - Y1 - Y2`
/// holds by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct JointSource {
    px_y1: Matrix,
    py2_given_y1: Matrix,
    joint: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JointSourceRepr {
    px_y1: Matrix,
    py2_given_y1: Matrix,
}

impl JointSource {
    pub fn new(px_y1: Matrix, py2_given_y1: Matrix) -> Result<Self> {
        check_joint(&px_y1)?;
        if py2_given_y1.rows() != px_y1.cols() {
            return Err(Error::ShapeMismatch(format!(
                "P(y2|y1) has {} rows but Y1 has {} symbols",
                py2_given_y1.rows(),
                px_y1.cols()
            )));
        }
        if !py2_given_y1.is_row_stochastic() {
            return Err(Error::InvalidDistribution("P(y2|y1) is not row-stochastic".into()));
        }
        let (nx, n1, n2) = (px_y1.rows(), px_y1.cols(), py2_given_y1.cols());
        let mut joint = vec![0.0; nx * n1 * n2];
        for x in 0..nx {
            for y1 in 0..n1 {
                for y2 in 0..n2 {
                    joint[(x * n1 + y1) * n2 + y2] = px_y1.get(x, y1) * py2_given_y1.get(y1, y2);
                }
            }
        }
        Ok(JointSource { px_y1, py2_given_y1, joint })
    }

    /// Doubly symmetric binary source with crossover `p` at decoder one
    /// and no side information at decoder two.
    pub fn dsbs(p: f64) -> Result<Self> {
        check_unit("p", p)?;
        let px_y1 = Matrix::from_rows(&[vec![(1.0 - p) / 2.0, p / 2.0], vec![p / 2.0, (1.0 - p) / 2.0]])?;
        let py2 = Matrix::from_rows(&[vec![1.0], vec![1.0]])?;
        JointSource::new(px_y1, py2)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: JointSourceRepr = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        JointSource::new(repr.px_y1, repr.py2_given_y1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&JointSourceRepr {
            px_y1: self.px_y1.clone(),
            py2_given_y1: self.py2_given_y1.clone(),
        })
        .expect("matrices serialize")
    }

    pub fn nx(&self) -> usize {
        self.px_y1.rows()
    }

    pub fn ny1(&self) -> usize {
        self.px_y1.cols()
    }

    pub fn ny2(&self) -> usize {
        self.py2_given_y1.cols()
    }

    pub fn px_y1(&self) -> &Matrix {
        &self.px_y1
    }

    pub fn py2_given_y1(&self) -> &Matrix {
        &self.py2_given_y1
    }

    /// `P(x, y1, y2)`.
    #[inline]
    pub fn p(&self, x: usize, y1: usize, y2: usize) -> f64 {
        self.joint[(x * self.ny1() + y1) * self.ny2() + y2]
    }

    pub fn px(&self) -> Vec<f64> {
        self.px_y1.row_sums()
    }

    /// `P(x, y2)`.
    pub fn px_y2(&self) -> Matrix {
        self.px_y1.matmul(&self.py2_given_y1).expect("shapes checked at construction")
    }

    /// `P(x, y_j)` for the requested side.
    pub fn px_side(&self, side: Side) -> Matrix {
        match side {
            Side::First => self.px_y1.clone(),
            Side::Second => self.px_y2(),
        }
    }

    /// `P(y1, y2)`.
    pub fn py1_y2(&self) -> Matrix {
        let p1 = self.px_y1.col_sums();
        let mut m = Matrix::zeros(self.ny1(), self.ny2());
        for y1 in 0..self.ny1() {
            for y2 in 0..self.ny2() {
                m.set(y1, y2, p1[y1] * self.py2_given_y1.get(y1, y2));
            }
        }
        m
    }

    /// Same source with the alphabet of `X` relabeled by `perm` (new index of old symbol).
    pub fn relabel_x(&self, perm: &[usize]) -> Result<Self> {
        let mut m = Matrix::zeros(self.nx(), self.ny1());
        for x in 0..self.nx() {
            for y in 0..self.ny1() {
                m.set(perm[x], y, self.px_y1.get(x, y));
            }
        }
        JointSource::new(m, self.py2_given_y1.clone())
    }
}

impl Serialize for JointSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        JointSourceRepr { px_y1: self.px_y1.clone(), py2_given_y1: self.py2_given_y1.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for JointSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = JointSourceRepr::deserialize(d)?;
        JointSource::new(repr.px_y1, repr.py2_given_y1).map_err(serde::de::Error::custom)
    }
}

/// Source plus the two distortion measures, as read from instance JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SourceSpec {
    pub px_y1: Matrix,
    pub py2_given_y1: Matrix,
    pub d1: DistortionMeasure,
    pub d2: DistortionMeasure,
}

impl SourceSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SourceSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let src = self.source()?;
        for (name, d) in [("d1", &self.d1), ("d2", &self.d2)] {
            if d.source_size() != src.nx() {
                return Err(Error::ShapeMismatch(format!(
                    "{name} has {} rows but X has {} symbols",
                    d.source_size(),
                    src.nx()
                )));
            }
        }
        Ok(())
    }

    pub fn source(&self) -> Result<JointSource> {
        JointSource::new(self.px_y1.clone(), self.py2_given_y1.clone())
    }
}

/// Joint pmf over several finite axes, row-major in axis order.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable {
    dims: Vec<usize>,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(dims: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != probs.len() || dims.is_empty() {
            return Err(Error::ShapeMismatch(format!("{} masses for dims {:?}", probs.len(), dims)));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution("negative or non-finite mass".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("table sums to {s}")));
        }
        Ok(JointTable { dims, probs })
    }

    /// Builds a table by evaluating `f` at every index tuple.
    pub fn from_fn<F: FnMut(&[usize]) -> f64>(dims: Vec<usize>, mut f: F) -> Result<Self> {
        let n: usize = dims.iter().product();
        let mut probs = Vec::with_capacity(n);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..n {
            probs.push(f(&idx));
            for a in (0..dims.len()).rev() {
                idx[a] += 1;
                if idx[a] < dims[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        JointTable::new(dims, probs)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Marginal masses over the given axes (in the given order).
    pub fn marginal(&self, axes: &[usize]) -> Vec<f64> {
        let out_dims: Vec<usize> = axes.iter().map(|&a| self.dims[a]).collect();
        let n: usize = out_dims.iter().product();
        let mut out = vec![0.0; n.max(1)];
        let mut idx = vec![0usize; self.dims.len()];
        for &p in &self.probs {
            let mut k = 0;
            for (&a, &d) in axes.iter().zip(&out_dims) {
                k = k * d + idx[a];
            }
            out[k] += p;
            for a in (0..self.dims.len()).rev() {
                idx[a] += 1;
                if idx[a] < self.dims[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    }

    /// Entropy of the marginal over `axes`.
    pub fn entropy(&self, axes: &[usize]) -> f64 {
        if axes.is_empty() {
            return 0.0;
        }
        entropy_of(&self.marginal(axes))
    }

    /// `H(A | C)`.
    pub fn conditional_entropy(&self, a: &[usize], c: &[usize]) -> f64 {
        let ac: Vec<usize> = a.iter().chain(c).cloned().collect();
        self.entropy(&ac) - self.entropy(c)
    }

    /// `I(A; B | C)`.
    pub fn mutual_information(&self, a: &[usize], b: &[usize], c: &[usize]) -> f64 {
        let ac: Vec<usize> = a.iter().chain(c).cloned().collect();
        let bc: Vec<usize> = b.iter().chain(c).cloned().collect();
        let abc: Vec<usize> = a.iter().chain(b).chain(c).cloned().collect();
        self.entropy(&ac) + self.entropy(&bc) - self.entropy(&abc) - self.entropy(c)
    }
}

/// Formats a value with 12 significant digits for CSV output.
///
/// Trailing zeros are trimmed; very large or small magnitudes use
/// scientific notation. Infinities print as `inf` / `-inf`.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-6..15).contains(&mag) {
        return format!("{:.11e}", x);
    }
    let decimals = (11 - mag).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}
