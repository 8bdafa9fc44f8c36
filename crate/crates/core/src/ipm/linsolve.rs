//! Symmetric indefinite factorizations for the interior-point KKT system.
//!
//! Both backends take a fixed lower-triangular pattern at construction and
//! new values on every `factor` call, and report the inertia of the matrix
//! they factored.

use std::fmt;

/// Eigenvalue sign counts of a factored symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    /// Pivots that were exactly or numerically zero.
    pub zero: usize,
}

impl fmt::Display for Inertia {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(+{}, -{}, 0:{})", self.positive, self.negative, self.zero)
    }
}

pub trait SymmetricFactor: Send {
    fn dim(&self) -> usize;
    /// Factor the matrix whose lower-triangle values follow the pattern
    /// given at construction.
    fn factor(&mut self, values: &[f64]) -> Inertia;
    /// Solve in place using the last factorization.
    fn solve(&self, rhs: &mut [f64]);
}

/// Relative threshold below which a pivot counts as zero.
const PIVOT_EPS: f64 = 1e-14;

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Dense LDLᵀ with Bunch-Kaufman diagonal pivoting.
pub struct DenseLdl {
    n: usize,
    pattern: Vec<(usize, usize)>,
    /// Factored matrix: L below the diagonal, D blocks on/next to it.
    a: Vec<f64>,
    perm: Vec<usize>,
    /// Block size (1 or 2) starting at each pivot index, 0 for the second
    /// row of a 2x2 block.
    block: Vec<u8>,
    /// Pivot columns whose D entry was numerically zero; skipped on solve.
    zero_pivot: Vec<bool>,
    /// Symmetric equilibration `D A D` applied before factoring.
    scale: Vec<f64>,
}

impl DenseLdl {
    pub fn new(n: usize, pattern: &[(usize, usize)]) -> Self {
        DenseLdl {
            n,
            pattern: pattern.to_vec(),
            a: vec![0.0; n * n],
            perm: (0..n).collect(),
            block: vec![1; n],
            zero_pivot: vec![false; n],
            scale: vec![1.0; n],
        }
    }

    /// Ruiz equilibration so that every row has max-norm close to 1. The
    /// congruence leaves the inertia unchanged.
    fn equilibrate(&mut self) {
        let n = self.n;
        self.scale = vec![1.0; n];
        for _ in 0..5 {
            let mut d = vec![1.0; n];
            for (i, di) in d.iter_mut().enumerate() {
                let r = max_abs(&self.a[i * n..(i + 1) * n]);
                if r > 0.0 {
                    *di = 1.0 / r.sqrt();
                }
            }
            for i in 0..n {
                for j in 0..n {
                    self.a[i * n + j] *= d[i] * d[j];
                }
                self.scale[i] *= d[i];
            }
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    fn swap_sym(&mut self, p: usize, q: usize) {
        if p == q {
            return;
        }
        let n = self.n;
        for j in 0..n {
            self.a.swap(p * n + j, q * n + j);
        }
        for i in 0..n {
            self.a.swap(i * n + p, i * n + q);
        }
        self.perm.swap(p, q);
    }
}

impl SymmetricFactor for DenseLdl {
    fn dim(&self) -> usize {
        self.n
    }

    fn factor(&mut self, values: &[f64]) -> Inertia {
        let n = self.n;
        self.a.iter_mut().for_each(|v| *v = 0.0);
        for (&(r, c), &v) in self.pattern.iter().zip(values) {
            self.a[r * n + c] += v;
            if r != c {
                self.a[c * n + r] += v;
            }
        }
        self.perm = (0..n).collect();
        self.block = vec![1; n];
        self.zero_pivot = vec![false; n];
        self.equilibrate();
        let tiny = PIVOT_EPS * max_abs(&self.a).max(f64::MIN_POSITIVE);
        let alpha = (1.0 + 17f64.sqrt()) / 8.0;
        let mut inertia = Inertia::default();

        let mut k = 0;
        while k < n {
            let absakk = self.at(k, k).abs();
            let (mut imax, mut colmax) = (k, 0.0);
            for i in k + 1..n {
                let v = self.at(i, k).abs();
                if v > colmax {
                    colmax = v;
                    imax = i;
                }
            }
            if absakk.max(colmax) <= tiny {
                inertia.zero += 1;
                self.zero_pivot[k] = true;
                for i in k + 1..n {
                    self.a[i * n + k] = 0.0;
                }
                k += 1;
                continue;
            }
            let mut two_by_two = false;
            let mut kp = k;
            if absakk < alpha * colmax {
                let mut rowmax = 0.0f64;
                for j in k..n {
                    if j != imax {
                        rowmax = rowmax.max(self.at(imax, j).abs());
                    }
                }
                if absakk * rowmax >= alpha * colmax * colmax {
                    kp = k;
                } else if self.at(imax, imax).abs() >= alpha * rowmax {
                    kp = imax;
                } else {
                    kp = imax;
                    two_by_two = true;
                }
            }

            if !two_by_two {
                self.swap_sym(k, kp);
                let d = self.at(k, k);
                if d.abs() <= tiny {
                    inertia.zero += 1;
                    self.zero_pivot[k] = true;
                    for i in k + 1..n {
                        self.a[i * n + k] = 0.0;
                    }
                    k += 1;
                    continue;
                }
                if d > 0.0 {
                    inertia.positive += 1;
                } else {
                    inertia.negative += 1;
                }
                for i in k + 1..n {
                    let aik = self.at(i, k);
                    if aik == 0.0 {
                        continue;
                    }
                    let lik = aik / d;
                    for j in k + 1..=i {
                        // Row k still holds the unscaled column.
                        let v = self.at(k, j);
                        self.a[i * n + j] -= lik * v;
                    }
                    self.a[i * n + k] = lik;
                }
                // Restore symmetry of the trailing block from the lower half.
                for i in k + 1..n {
                    for j in k + 1..i {
                        self.a[j * n + i] = self.a[i * n + j];
                    }
                }
                k += 1;
            } else {
                self.swap_sym(k + 1, kp);
                let d11 = self.at(k, k);
                let d21 = self.at(k + 1, k);
                let d22 = self.at(k + 1, k + 1);
                let det = d11 * d22 - d21 * d21;
                if det < 0.0 {
                    inertia.positive += 1;
                    inertia.negative += 1;
                } else if d11 + d22 > 0.0 {
                    inertia.positive += 2;
                } else {
                    inertia.negative += 2;
                }
                let (i11, i12, i22) = (d22 / det, -d21 / det, d11 / det);
                let mut l = vec![(0.0, 0.0); n];
                for (i, li) in l.iter_mut().enumerate().skip(k + 2) {
                    let (a0, a1) = (self.at(i, k), self.at(i, k + 1));
                    *li = (a0 * i11 + a1 * i12, a0 * i12 + a1 * i22);
                }
                for i in k + 2..n {
                    let (l0, l1) = l[i];
                    if l0 == 0.0 && l1 == 0.0 {
                        continue;
                    }
                    for j in k + 2..=i {
                        let (a0, a1) = (self.at(j, k), self.at(j, k + 1));
                        self.a[i * n + j] -= l0 * a0 + l1 * a1;
                    }
                }
                for i in k + 2..n {
                    self.a[i * n + k] = l[i].0;
                    self.a[i * n + k + 1] = l[i].1;
                    for j in k + 2..i {
                        self.a[j * n + i] = self.a[i * n + j];
                    }
                }
                self.block[k] = 2;
                self.block[k + 1] = 0;
                k += 2;
            }
        }
        inertia
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| rhs[p] * self.scale[p]).collect();
        // Forward: L z = y (unit diagonal, 2x2 blocks have no coupling in L).
        let mut k = 0;
        while k < n {
            let step = if self.block[k] == 2 { 2 } else { 1 };
            for c in k..k + step {
                let yc = y[c];
                if yc != 0.0 {
                    for i in k + step..n {
                        y[i] -= self.at(i, c) * yc;
                    }
                }
            }
            k += step;
        }
        let mut k = 0;
        while k < n {
            if self.block[k] == 2 {
                let (d11, d21, d22) = (self.at(k, k), self.at(k + 1, k), self.at(k + 1, k + 1));
                let det = d11 * d22 - d21 * d21;
                let (a, b) = (y[k], y[k + 1]);
                y[k] = (d22 * a - d21 * b) / det;
                y[k + 1] = (d11 * b - d21 * a) / det;
                k += 2;
            } else {
                y[k] = if self.zero_pivot[k] { 0.0 } else { y[k] / self.at(k, k) };
                k += 1;
            }
        }
        let mut k = n;
        while k > 0 {
            let (start, step) = if k >= 2 && self.block[k - 1] == 0 { (k - 2, 2) } else { (k - 1, 1) };
            for c in start..start + step {
                let mut s = y[c];
                for i in start + step..n {
                    s -= self.at(i, c) * y[i];
                }
                y[c] = s;
            }
            k = start;
        }
        for (i, &p) in self.perm.iter().enumerate() {
            rhs[p] = y[i] * self.scale[p];
        }
    }
}

/// Sparse LDLᵀ without numerical pivoting (up-looking, elimination tree),
/// on an approximate-minimum-degree ordering.
///
/// Pivots below the zero threshold are replaced by `expected_sign * delta`
/// and counted in `Inertia::zero`, so that a factorization always exists.
pub struct SparseLdl {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    /// Upper CSC of the permuted matrix.
    ap: Vec<usize>,
    ai: Vec<usize>,
    /// Position in the CSC value array of each pattern entry.
    slot: Vec<usize>,
    etree: Vec<Option<usize>>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    /// Expected pivot sign per permuted index, used by dynamic regularization.
    sign: Vec<f64>,
    /// Equilibration factors per permuted index.
    scale: Vec<f64>,
    pub dynamic_delta: f64,
}

impl SparseLdl {
    /// `signs[i]` is +1 for primal rows and -1 for constraint rows.
    pub fn new(n: usize, pattern: &[(usize, usize)], signs: &[f64]) -> Self {
        let perm = amd_order(n, pattern);
        let mut pinv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }
        // Upper-triangular CSC of P A Pᵀ with unique entries, diagonal forced.
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(r, c) in pattern {
            let (a, b) = (pinv[r], pinv[c]);
            cols[a.max(b)].push(a.min(b));
        }
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(j);
            col.sort_unstable();
            col.dedup();
        }
        let mut ap = vec![0; n + 1];
        for j in 0..n {
            ap[j + 1] = ap[j] + cols[j].len();
        }
        let ai: Vec<usize> = cols.iter().flatten().copied().collect();
        let slot = pattern
            .iter()
            .map(|&(r, c)| {
                let (a, b) = (pinv[r], pinv[c]);
                let (row, col) = (a.min(b), a.max(b));
                ap[col] + ai[ap[col]..ap[col + 1]].binary_search(&row).expect("pattern entry")
            })
            .collect();

        // Elimination tree and column counts.
        let mut etree = vec![None; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![usize::MAX; n];
        for k in 0..n {
            work[k] = k;
            for &i0 in &ai[ap[k]..ap[k + 1]] {
                let mut i = i0;
                if i >= k {
                    continue;
                }
                while work[i] != k {
                    if etree[i].is_none() {
                        etree[i] = Some(k);
                    }
                    lnz[i] += 1;
                    work[i] = k;
                    i = etree[i].expect("set above");
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let nnz = lp[n];
        let sign = perm.iter().map(|&old| if signs[old] < 0.0 { -1.0 } else { 1.0 }).collect();
        SparseLdl {
            n,
            perm,
            ap,
            ai,
            slot,
            etree,
            lp,
            li: vec![0; nnz],
            lx: vec![0.0; nnz],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            sign,
            scale: vec![1.0; n],
            dynamic_delta: 1e-8,
        }
    }

    fn d_orig_abs(&self, k: usize, ax: &[f64]) -> f64 {
        let last = self.ap[k + 1] - 1;
        debug_assert_eq!(self.ai[last], k);
        ax[last].abs()
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }
}

fn amd_order(n: usize, pattern: &[(usize, usize)]) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(r, c) in pattern {
        if r != c {
            cols[c].push(r);
            cols[r].push(c);
        }
    }
    // AMD ignores the diagonal, but the crate's debug checks assume nz >= n.
    for (j, col) in cols.iter_mut().enumerate() {
        col.push(j);
    }
    let mut a_p = vec![0usize; n + 1];
    let mut a_i = Vec::new();
    for (j, col) in cols.iter_mut().enumerate() {
        col.sort_unstable();
        col.dedup();
        a_i.extend_from_slice(col);
        a_p[j + 1] = a_i.len();
    }
    let control = amd::Control::default();
    match amd::order::<usize>(n, &a_p, &a_i, &control) {
        Ok((p, _, _)) => p,
        Err(_) => (0..n).collect(),
    }
}

impl SymmetricFactor for SparseLdl {
    fn dim(&self) -> usize {
        self.n
    }

    fn factor(&mut self, values: &[f64]) -> Inertia {
        let n = self.n;
        let mut ax = vec![0.0; self.ai.len()];
        for (&s, &v) in self.slot.iter().zip(values) {
            ax[s] += v;
        }
        self.scale = vec![1.0; n];
        for _ in 0..5 {
            let mut r = vec![0.0f64; n];
            for j in 0..n {
                for p in self.ap[j]..self.ap[j + 1] {
                    let (i, v) = (self.ai[p], ax[p].abs());
                    r[i] = r[i].max(v);
                    r[j] = r[j].max(v);
                }
            }
            let d: Vec<f64> = r.iter().map(|&ri| if ri > 0.0 { 1.0 / ri.sqrt() } else { 1.0 }).collect();
            for j in 0..n {
                for p in self.ap[j]..self.ap[j + 1] {
                    ax[p] *= d[self.ai[p]] * d[j];
                }
                self.scale[j] *= d[j];
            }
        }
        let mut inertia = Inertia::default();
        let mut y = vec![0.0; n];
        let mut marked = vec![false; n];
        let mut pattern_stack = Vec::with_capacity(n);
        let mut reach = Vec::with_capacity(n);
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();

        for k in 0..n {
            reach.clear();
            let mut dk = 0.0;
            let mut scale = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let i = self.ai[p];
                if i == k {
                    dk = ax[p];
                    continue;
                }
                y[i] = ax[p];
                if marked[i] {
                    continue;
                }
                pattern_stack.clear();
                let mut next = Some(i);
                while let Some(j) = next {
                    if j >= k || marked[j] {
                        break;
                    }
                    marked[j] = true;
                    pattern_stack.push(j);
                    next = self.etree[j];
                }
                while let Some(j) = pattern_stack.pop() {
                    reach.push(j);
                }
            }
            for &c in reach.iter().rev() {
                let yc = y[c];
                let end = next_space[c];
                for q in self.lp[c]..end {
                    y[self.li[q]] -= self.lx[q] * yc;
                }
                let lkc = yc * self.dinv[c];
                self.li[end] = k;
                self.lx[end] = lkc;
                dk -= yc * lkc;
                scale += (yc * lkc).abs();
                next_space[c] += 1;
                y[c] = 0.0;
                marked[c] = false;
            }
            // Zero means cancellation relative to the terms that formed the
            // pivot, so small but genuine pivots keep their sign.
            scale += self.d_orig_abs(k, &ax);
            if dk.abs() <= PIVOT_EPS * scale || dk == 0.0 || !dk.is_finite() {
                inertia.zero += 1;
                dk = self.sign[k] * self.dynamic_delta;
            } else if dk > 0.0 {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
            self.d[k] = dk;
            self.dinv[k] = 1.0 / dk;
        }
        inertia
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().zip(&self.scale).map(|(&p, d)| rhs[p] * d).collect();
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for q in self.lp[i]..self.lp[i + 1] {
                    x[self.li[q]] -= self.lx[q] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for q in self.lp[i]..self.lp[i + 1] {
                s -= self.lx[q] * x[self.li[q]];
            }
            x[i] = s;
        }
        for (i, &p) in self.perm.iter().enumerate() {
            rhs[p] = x[i] * self.scale[i];
        }
    }
}

/// `y = A x` for a symmetric matrix stored as a lower-triangular pattern.
pub fn sym_matvec(n: usize, pattern: &[(usize, usize)], values: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for (&(r, c), &v) in pattern.iter().zip(values) {
        y[r] += v * x[c];
        if r != c {
            y[c] += v * x[r];
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lower_pattern(n: usize) -> Vec<(usize, usize)> {
        (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect()
    }

    fn check_solve(f: &mut dyn SymmetricFactor, pat: &[(usize, usize)], vals: &[f64]) -> Inertia {
        let n = f.dim();
        let inertia = f.factor(vals);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).sqrt()).collect();
        let b = sym_matvec(n, pat, vals, &x);
        let mut sol = b.clone();
        f.solve(&mut sol);
        for (a, e) in sol.iter().zip(&x) {
            assert!((a - e).abs() < 1e-8 * (1.0 + e.abs()), "{a} vs {e}");
        }
        inertia
    }

    /// KKT-shaped matrix [H Jᵀ; J 0] with H = diag(h).
    fn kkt(h: &[f64], j: &[Vec<f64>]) -> (usize, Vec<(usize, usize)>, Vec<f64>) {
        let n = h.len();
        let m = j.len();
        let mut pat = Vec::new();
        let mut vals = Vec::new();
        for (i, &v) in h.iter().enumerate() {
            pat.push((i, i));
            vals.push(v);
        }
        for (r, row) in j.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    pat.push((n + r, c));
                    vals.push(v);
                }
            }
            pat.push((n + r, n + r));
            vals.push(0.0);
        }
        (n + m, pat, vals)
    }

    #[test]
    fn dense_indefinite_kkt() {
        let (n, pat, vals) = kkt(&[2.0, 2.0], &[vec![1.0, 1.0]]);
        let mut f = DenseLdl::new(n, &pat);
        let inertia = check_solve(&mut f, &pat, &vals);
        assert_eq!(inertia, Inertia { positive: 2, negative: 1, zero: 0 });
    }

    #[test]
    fn dense_needs_two_by_two_pivot() {
        // Zero diagonal forces a 2x2 block.
        let pat = vec![(0, 0), (1, 0), (1, 1), (2, 2)];
        let vals = vec![0.0, 1.0, 0.0, 3.0];
        let mut f = DenseLdl::new(3, &pat);
        let inertia = check_solve(&mut f, &pat, &vals);
        assert_eq!(inertia, Inertia { positive: 2, negative: 1, zero: 0 });
    }

    #[test]
    fn dense_reports_singularity() {
        let pat = vec![(0, 0), (1, 0), (1, 1)];
        let vals = vec![1.0, 1.0, 1.0];
        let mut f = DenseLdl::new(2, &pat);
        let inertia = f.factor(&vals);
        assert_eq!(inertia.zero, 1);
    }

    #[test]
    fn random_symmetric_both_backends() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &n in &[1usize, 5, 12, 30] {
            let pat = lower_pattern(n);
            let vals: Vec<f64> = pat
                .iter()
                .map(|&(r, c)| if r == c { rng.gen_range(-3.0..3.0) + if r % 2 == 0 { 5.0 } else { -5.0 } } else { rng.gen_range(-1.0..1.0) })
                .collect();
            let mut dense = DenseLdl::new(n, &pat);
            let di = check_solve(&mut dense, &pat, &vals);
            let signs = vec![1.0; n];
            let mut sparse = SparseLdl::new(n, &pat, &signs);
            let si = check_solve(&mut sparse, &pat, &vals);
            assert_eq!(di.positive + di.negative, n);
            assert_eq!(di, si);
        }
    }

    #[test]
    fn sparse_quasidefinite_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let m = 15;
        let h: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..4.0)).collect();
        let j: Vec<Vec<f64>> = (0..m)
            .map(|r| (0..n).map(|c| if (c + 3 * r) % 7 == 0 || c == r { rng.gen_range(-2.0..2.0) } else { 0.0 }).collect())
            .collect();
        let (dim, pat, mut vals) = kkt(&h, &j);
        for (k, &(r, c)) in pat.iter().enumerate() {
            if r == c && r >= n {
                vals[k] = -1e-9;
            }
        }
        let signs: Vec<f64> = (0..dim).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let mut sparse = SparseLdl::new(dim, &pat, &signs);
        let si = check_solve(&mut sparse, &pat, &vals);
        assert_eq!((si.positive, si.negative), (n, m));
        let mut dense = DenseLdl::new(dim, &pat);
        assert_eq!(check_solve(&mut dense, &pat, &vals), si);
    }
}
