//! Sparse row-stochastic interaction matrices.
//!
//! An [`InteractionMatrix`] is stored twice in CSR form: once by rows (for
//! `P z`) and once by columns (for `Pᵀ r`). Both products are evaluated row by
//! row with a fixed summation order, so splitting rows across worker threads
//! never changes a single bit of the output.

use std::collections::{BTreeSet, VecDeque};
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};

/// Rows below this count are processed on the calling thread.
const PAR_MIN_ROWS: usize = 4096;
const ROW_CHUNK: usize = 1024;
const ROW_SUM_TOL: f64 = 1e-12;

/// A weighted edge list over agents `0..n`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedEdgeList {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl WeightedEdgeList {
    pub fn new(n: usize) -> Self {
        Self { n, edges: Vec::new() }
    }

    pub fn push(&mut self, u: usize, v: usize, w: f64) {
        self.n = self.n.max(u + 1).max(v + 1);
        self.edges.push((u, v, w));
    }
}

/// An edge list read from text together with the original node ids.
///
/// `ids[k]` is the original id of agent `k`; ids are assigned in ascending
/// order of the original values.
#[derive(Clone, Debug)]
pub struct ParsedEdgeList {
    pub edges: WeightedEdgeList,
    pub ids: Vec<u64>,
}

/// Parses `u v [w]` lines. Blank lines and lines starting with `#` are skipped.
pub fn parse_edge_list<R: BufRead>(reader: R) -> Result<ParsedEdgeList> {
    let mut raw = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let mut next_id = |what: &str| -> Result<u64> {
            let tok = fields.next().ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("missing {what}"),
            })?;
            tok.parse::<u64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid node id {tok:?}"),
            })
        };
        let u = next_id("source")?;
        let v = next_id("target")?;
        let w = match fields.next() {
            None => 1.0,
            Some(tok) => tok.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid weight {tok:?}"),
            })?,
        };
        if let Some(extra) = fields.next() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("unexpected trailing field {extra:?}"),
            });
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("weight must be positive and finite, got {w}"),
            });
        }
        raw.push((u, v, w));
    }

    let ids: Vec<u64> = raw
        .iter()
        .flat_map(|&(u, v, _)| [u, v])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index = |id: u64| ids.binary_search(&id).expect("id collected above");
    let edges = raw.into_iter().map(|(u, v, w)| (index(u), index(v), w)).collect();
    Ok(ParsedEdgeList {
        edges: WeightedEdgeList { n: ids.len(), edges },
        ids,
    })
}

/// Barabási–Albert style preferential attachment graph with unit weights.
///
/// Starts from a clique on `m + 1` nodes; every later node attaches to `m`
/// distinct earlier nodes chosen proportionally to degree. The result is
/// always connected.
pub fn preferential_attachment(n: usize, m: usize, seed: u64) -> Result<WeightedEdgeList> {
    if m == 0 || n < m + 1 {
        return Err(Error::InvalidConfig(format!(
            "preferential attachment needs m >= 1 and n > m (n={n}, m={m})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list = WeightedEdgeList::new(n);
    // Each endpoint appears once per incident edge.
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * n * m);
    for u in 0..=m {
        for v in (u + 1)..=m {
            list.edges.push((u, v, 1.0));
            endpoints.push(u);
            endpoints.push(v);
        }
    }
    let mut targets: Vec<usize> = Vec::with_capacity(m);
    for u in (m + 1)..n {
        targets.clear();
        while targets.len() < m {
            let v = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&v) {
                targets.push(v);
            }
        }
        for &v in &targets {
            list.edges.push((u, v, 1.0));
            endpoints.push(u);
            endpoints.push(v);
        }
    }
    Ok(list)
}

/// Sparse row-stochastic matrix `P`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    // Column-major copy: entries of column j are (i, P_ij) for ascending i.
    col_ptr: Vec<usize>,
    rows_of_col: Vec<usize>,
    vals_by_col: Vec<f64>,
}

impl InteractionMatrix {
    /// Normalizes a weighted edge list into `P_ij = w_ij / Σ_k w_ik`.
    ///
    /// With `symmetrize`, every edge `{u, v}` contributes to both rows.
    /// Parallel edges are summed; self loops are kept.
    pub fn from_edge_list(edges: &WeightedEdgeList, symmetrize: bool) -> Result<Self> {
        let n = edges.n;
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (index, &(u, v, w)) in edges.edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::InvalidInstance(format!(
                    "edge {index} ({u}, {v}) references an agent outside 0..{n}"
                )));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::NonPositiveWeight { index, u, v, weight: w });
            }
            rows[u].push((v, w));
            if symmetrize && u != v {
                rows[v].push((u, w));
            }
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(agent, mut row)| {
                if row.is_empty() {
                    return Err(Error::EmptyRow { agent });
                }
                // Sorting by (column, weight) makes duplicate summation independent of input order.
                row.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
                for (c, w) in row {
                    match merged.last_mut() {
                        Some(last) if last.0 == c => last.1 += w,
                        _ => merged.push((c, w)),
                    }
                }
                let total: f64 = merged.iter().map(|e| e.1).sum();
                for e in &mut merged {
                    e.1 /= total;
                }
                Ok(merged)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(n, rows)
    }

    /// Builds a matrix from explicit probability rows without renormalizing.
    ///
    /// Every row must be non-empty, have weights in `(0, 1]` and sum to one
    /// within `1e-12`.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut checked = Vec::with_capacity(n);
        for (agent, mut row) in rows.into_iter().enumerate() {
            if row.is_empty() {
                return Err(Error::EmptyRow { agent });
            }
            row.sort_by_key(|e| e.0);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::InvalidInstance(format!(
                        "row {agent} lists column {} twice",
                        w[0].0
                    )));
                }
            }
            for (index, &(c, w)) in row.iter().enumerate() {
                if c >= n {
                    return Err(Error::InvalidInstance(format!(
                        "row {agent} references column {c} outside 0..{n}"
                    )));
                }
                if !(w > 0.0 && w <= 1.0) {
                    return Err(Error::NonPositiveWeight {
                        index,
                        u: agent,
                        v: c,
                        weight: w,
                    });
                }
            }
            let sum: f64 = row.iter().map(|e| e.1).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotStochastic { row: agent, sum });
            }
            checked.push(row);
        }
        Self::assemble(n, checked)
    }

    /// Dense row-major convenience constructor; zero entries are dropped.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let sparse = rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(j, &w)| (j, w))
                    .collect()
            })
            .collect();
        Self::from_rows(sparse)
    }

    fn assemble(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in &rows {
            for &(c, w) in row {
                cols.push(c);
                vals.push(w);
            }
            row_ptr.push(cols.len());
        }

        let mut counts = vec![0usize; n + 1];
        for &c in &cols {
            counts[c + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts.clone();
        let mut fill = counts;
        let mut rows_of_col = vec![0usize; nnz];
        let mut vals_by_col = vec![0.0; nnz];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let c = cols[k];
                rows_of_col[fill[c]] = i;
                vals_by_col[fill[c]] = vals[k];
                fill[c] += 1;
            }
        }

        let m = Self {
            n,
            row_ptr,
            cols,
            vals,
            col_ptr,
            rows_of_col,
            vals_by_col,
        };
        let components = m.support_components();
        if components > 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(m)
    }

    /// Number of connected components of the undirected support graph.
    fn support_components(&self) -> usize {
        let n = self.n;
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        let mut components = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                let out = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
                let inc = &self.rows_of_col[self.col_ptr[i]..self.col_ptr[i + 1]];
                for &j in out.iter().chain(inc) {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        components
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(column, probability)` pairs of row `i` in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    /// All stored entries `(i, j, P_ij)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, w)| (i, j, w)))
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|e| e.1).sum()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.n * self.n];
        for (i, j, w) in self.entries() {
            dense[i * self.n + j] = w;
        }
        dense
    }

    /// `(P x)_i` with the stored summation order.
    #[inline]
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            acc += self.vals[k] * x[self.cols[k]];
        }
        acc
    }

    /// Writes `A s + (I - A) P z` into `out`, where `A = diag(alpha)`.
    pub fn apply_diluted_into(&self, alpha: &[f64], s: &[f64], z: &[f64], out: &mut [f64]) -> Result<()> {
        for len in [alpha.len(), s.len(), z.len(), out.len()] {
            check_len(self.n, len)?;
        }
        let row = |i: usize| {
            let a = alpha[i];
            a * s[i] + (1.0 - a) * self.row_dot(i, z)
        };
        for_each_row(out, row);
        Ok(())
    }

    /// Returns `A s + (I - A) P z`.
    pub fn apply_diluted(&self, alpha: &[f64], s: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.apply_diluted_into(alpha, s, z, &mut out)?;
        Ok(out)
    }

    /// Writes `1 + Pᵀ (I - A) r` into `out`.
    pub fn apply_transpose_diluted_into(&self, alpha: &[f64], r: &[f64], out: &mut [f64]) -> Result<()> {
        for len in [alpha.len(), r.len(), out.len()] {
            check_len(self.n, len)?;
        }
        let row = |j: usize| {
            let mut acc = 0.0;
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.rows_of_col[k];
                acc += self.vals_by_col[k] * ((1.0 - alpha[i]) * r[i]);
            }
            1.0 + acc
        };
        for_each_row(out, row);
        Ok(())
    }

    /// Returns `1 + Pᵀ (I - A) r`.
    pub fn apply_transpose_diluted(&self, alpha: &[f64], r: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.apply_transpose_diluted_into(alpha, r, &mut out)?;
        Ok(out)
    }
}

fn for_each_row<F>(out: &mut [f64], row: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    if out.len() < PAR_MIN_ROWS {
        for (i, o) in out.iter_mut().enumerate() {
            *o = row(i);
        }
    } else {
        out.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(chunk, slice)| {
            let base = chunk * ROW_CHUNK;
            for (k, o) in slice.iter_mut().enumerate() {
                *o = row(base + k);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> InteractionMatrix {
        InteractionMatrix::from_dense(&[vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]]).unwrap()
    }

    #[test]
    fn equal_weights_normalize_evenly() {
        let mut edges = WeightedEdgeList::new(3);
        edges.push(0, 1, 2.0);
        edges.push(0, 2, 2.0);
        let m = InteractionMatrix::from_edge_list(&edges, true).unwrap();
        assert_eq!(m.row(0).collect::<Vec<_>>(), vec![(1, 0.5), (2, 0.5)]);
        assert_eq!(m.row(1).collect::<Vec<_>>(), vec![(0, 1.0)]);
    }

    #[test]
    fn complete_triangle_matches_dense() {
        let mut edges = WeightedEdgeList::new(3);
        edges.push(0, 1, 1.0);
        edges.push(1, 2, 1.0);
        edges.push(0, 2, 1.0);
        let m = InteractionMatrix::from_edge_list(&edges, true).unwrap();
        assert_eq!(m, triangle());
    }

    #[test]
    fn isolated_node_is_rejected() {
        let mut edges = WeightedEdgeList::new(3);
        edges.push(0, 1, 1.0);
        let err = InteractionMatrix::from_edge_list(&edges, true).unwrap_err();
        assert!(matches!(err, Error::EmptyRow { agent: 2 }), "{err}");

        // A self loop gives node 2 a row but it stays disconnected.
        edges.push(2, 2, 1.0);
        let err = InteractionMatrix::from_edge_list(&edges, true).unwrap_err();
        assert!(matches!(err, Error::Disconnected { components: 2 }), "{err}");
    }

    #[test]
    fn non_positive_weight_is_rejected() {
        let mut edges = WeightedEdgeList::new(2);
        edges.push(0, 1, 0.0);
        assert!(matches!(
            InteractionMatrix::from_edge_list(&edges, true),
            Err(Error::NonPositiveWeight { index: 0, .. })
        ));
    }

    #[test]
    fn duplicates_are_summed_and_order_independent() {
        let mut a = WeightedEdgeList::new(3);
        a.push(0, 1, 0.1);
        a.push(0, 2, 0.7);
        a.push(1, 0, 0.2);
        a.push(0, 1, 0.3);
        let mut b = a.clone();
        b.edges.reverse();
        let ma = InteractionMatrix::from_edge_list(&a, true).unwrap();
        let mb = InteractionMatrix::from_edge_list(&b, true).unwrap();
        assert_eq!(ma, mb);
        // Row 0: w01 = 0.1 + 0.2 + 0.3, w02 = 0.7.
        let row0: Vec<_> = ma.row(0).collect();
        assert!((row0[0].1 - 0.6 / 1.3).abs() < 1e-15);
    }

    #[test]
    fn directed_input_keeps_orientation() {
        let mut edges = WeightedEdgeList::new(2);
        edges.push(0, 1, 1.0);
        assert!(matches!(
            InteractionMatrix::from_edge_list(&edges, false),
            Err(Error::EmptyRow { agent: 1 })
        ));
        edges.push(1, 0, 3.0);
        edges.push(1, 1, 1.0);
        let m = InteractionMatrix::from_edge_list(&edges, false).unwrap();
        assert_eq!(m.row(1).collect::<Vec<_>>(), vec![(0, 0.75), (1, 0.25)]);
    }

    #[test]
    fn from_rows_rejects_non_stochastic() {
        let err = InteractionMatrix::from_rows(vec![vec![(1, 0.5)], vec![(0, 1.0)]]).unwrap_err();
        assert!(matches!(err, Error::NotStochastic { row: 0, .. }));
    }

    #[test]
    fn diluted_update_on_triangle() {
        let m = triangle();
        let alpha = [0.1; 3];
        let s = [1.0, 0.5, 0.0];
        let z = m.apply_diluted(&alpha, &s, &s).unwrap();
        let expected = [0.325, 0.5, 0.675];
        for (a, b) in z.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{z:?}");
        }
    }

    #[test]
    fn diluted_update_scalar_case() {
        let m = InteractionMatrix::from_dense(&[vec![1.0]]).unwrap();
        for alpha in [0.01, 0.3, 0.99] {
            let z = m.apply_diluted(&[alpha], &[0.3], &[0.9]).unwrap();
            assert!((z[0] - (0.3 * alpha + 0.9 * (1.0 - alpha))).abs() < 1e-15);
        }
    }

    #[test]
    fn transpose_update_on_triangle() {
        let m = triangle();
        let alpha = [0.1; 3];
        assert_eq!(m.apply_transpose_diluted(&alpha, &[0.0; 3]).unwrap(), vec![1.0; 3]);
        let r = m.apply_transpose_diluted(&alpha, &[1.0; 3]).unwrap();
        for x in r {
            assert!((x - 1.9).abs() < 1e-15);
        }
        // With full resistance the diluted part vanishes.
        let r = m.apply_transpose_diluted(&[1.0; 3], &[5.0, 6.0, 7.0]).unwrap();
        assert_eq!(r, vec![1.0; 3]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = triangle();
        assert!(matches!(
            m.apply_diluted(&[0.5; 2], &[0.0; 3], &[0.0; 3]),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
        assert!(matches!(
            m.apply_transpose_diluted(&[0.5; 3], &[0.0; 4]),
            Err(Error::DimensionMismatch { expected: 3, found: 4 })
        ));
    }

    #[test]
    fn parse_remaps_ids_and_reports_lines() {
        let text = "# comment\n10 20\n20 30 2.5\n\n30 10 0.5\n";
        let parsed = parse_edge_list(text.as_bytes()).unwrap();
        assert_eq!(parsed.ids, vec![10, 20, 30]);
        assert_eq!(parsed.edges.edges, vec![(0, 1, 1.0), (1, 2, 2.5), (2, 0, 0.5)]);

        let err = parse_edge_list("1 2\n3 x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_edge_list("1 2 -1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_edge_list("1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn preferential_attachment_is_connected() {
        let g = preferential_attachment(500, 3, 1).unwrap();
        let m = InteractionMatrix::from_edge_list(&g, true).unwrap();
        assert_eq!(m.n(), 500);
        assert_eq!(g.edges.len(), 6 + 3 * (500 - 4));
        assert_eq!(g, preferential_attachment(500, 3, 1).unwrap());
    }
}
