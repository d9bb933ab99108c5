use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_model::{MultiChannelRecord, SourceSet};

/// Normalized Amari performance index of a global matrix `G = W A`.
///
/// Zero exactly when `G` is a scaled permutation; bounded above by 1.
pub fn amari_index(g: &DMatrix<f64>) -> Result<f64> {
    let n = g.nrows();
    if !g.is_square() || n < 2 {
        return Err(Error::DimensionMismatch(format!(
            "Amari index needs a square matrix of size ≥ 2, got {}×{}",
            g.nrows(),
            g.ncols()
        )));
    }
    let a = g.map(f64::abs);
    let mut total = 0.0;
    for i in 0..n {
        let row = a.row(i);
        let max = row.max();
        if !(max > 0.0) {
            return Err(Error::Degenerate(format!("row {i} of the global matrix is zero")));
        }
        total += row.sum() / max - 1.0;
    }
    for j in 0..n {
        let col = a.column(j);
        let max = col.max();
        if !(max > 0.0) {
            return Err(Error::Degenerate(format!("column {j} of the global matrix is zero")));
        }
        total += col.sum() / max - 1.0;
    }
    Ok(total / (2.0 * n as f64 * (n as f64 - 1.0)))
}

/// One estimated output paired with a reference source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceMatch {
    pub estimated_index: usize,
    pub reference_index: usize,
    /// Signed Pearson correlation.
    pub correlation: f64,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Greedy one-to-one pairing of estimates with references by largest
/// |correlation|. Output is sorted by reference index.
pub fn match_sources(estimated: &MultiChannelRecord, reference: &SourceSet) -> Result<Vec<SourceMatch>> {
    let r = reference.record();
    if estimated.len() != r.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimated length {} differs from reference length {}",
            estimated.len(),
            r.len()
        )));
    }
    let ne = estimated.channel_count();
    let nr = r.channel_count();
    let mut pairs = Vec::with_capacity(ne * nr);
    for i in 0..ne {
        for j in 0..nr {
            pairs.push((i, j, pearson(estimated.samples(i), r.samples(j))));
        }
    }
    pairs.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_e = vec![false; ne];
    let mut used_r = vec![false; nr];
    let mut out = Vec::new();
    for (i, j, c) in pairs {
        if !used_e[i] && !used_r[j] {
            used_e[i] = true;
            used_r[j] = true;
            out.push(SourceMatch {
                estimated_index: i,
                reference_index: j,
                correlation: c,
            });
        }
    }
    out.sort_by_key(|m| m.reference_index);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Literal transcription of the row/column ratio sums.
    fn amari_oracle(g: &[Vec<f64>]) -> f64 {
        let n = g.len();
        let mut s = 0.0;
        for i in 0..n {
            let mut m: f64 = 0.0;
            for k in 0..n {
                m = m.max(g[i][k].abs());
            }
            for j in 0..n {
                s += g[i][j].abs() / m;
            }
            s -= 1.0;
        }
        for j in 0..n {
            let mut m: f64 = 0.0;
            for k in 0..n {
                m = m.max(g[k][j].abs());
            }
            for i in 0..n {
                s += g[i][j].abs() / m;
            }
            s -= 1.0;
        }
        s / (2.0 * n as f64 * (n - 1) as f64)
    }

    #[test]
    fn identity_and_permutation_score_zero() {
        assert_eq!(amari_index(&DMatrix::identity(3, 3)).unwrap(), 0.0);
        let p = DMatrix::from_row_slice(3, 3, &[0.0, -2.0, 0.0, 0.0, 0.0, 5.0, 0.3, 0.0, 0.0]);
        assert_eq!(amari_index(&p).unwrap(), 0.0);
    }

    #[test]
    fn near_identity_value() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]);
        let oracle = amari_oracle(&[vec![1.0, 0.1], vec![0.1, 1.0]]);
        let got = amari_index(&g).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 0.1).abs() < 1e-12);
    }

    #[test]
    fn all_ones_is_maximal() {
        let g = DMatrix::from_element(4, 4, 1.0);
        assert!((amari_index(&g).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(amari_index(&DMatrix::zeros(2, 3)).is_err());
        assert!(amari_index(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err());
    }

    fn matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-3.0f64..3.0, n * n)
            .prop_filter("no zero rows/cols", move |v| v.iter().all(|x| x.abs() > 1e-3))
            .prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
    }

    proptest! {
        #[test]
        fn matches_oracle_and_bounded(g in matrix(3)) {
            let rows: Vec<Vec<f64>> = (0..3).map(|i| g.row(i).iter().copied().collect()).collect();
            let got = amari_index(&g).unwrap();
            prop_assert!((got - amari_oracle(&rows)).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&got));
        }

        #[test]
        fn invariant_to_permutation_and_global_scale(
            g in matrix(3),
            scale in prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
            rp in Just(vec![0usize, 1, 2]).prop_shuffle(),
            cp in Just(vec![0usize, 1, 2]).prop_shuffle(),
        ) {
            let p = DMatrix::from_fn(3, 3, |i, j| if rp[i] == j { 1.0 } else { 0.0 });
            let q = DMatrix::from_fn(3, 3, |i, j| if cp[i] == j { 1.0 } else { 0.0 });
            let base = amari_index(&g).unwrap();
            let moved = amari_index(&(&p * &g * &q * scale)).unwrap();
            prop_assert!((base - moved).abs() < 1e-9);
        }

        #[test]
        fn scaled_permutations_score_zero(
            scales in prop::collection::vec(prop_oneof![0.1f64..10.0, -10.0f64..-0.1], 4),
            perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
        ) {
            let g = DMatrix::from_fn(4, 4, |i, j| if perm[i] == j { scales[i] } else { 0.0 });
            prop_assert_eq!(amari_index(&g).unwrap(), 0.0);
        }
    }

    #[test]
    fn match_pairs_by_correlation() {
        let a: Vec<f64> = (0..200).map(|t| (t as f64 * 0.1).sin()).collect();
        let b: Vec<f64> = (0..200).map(|t| ((t * 7 % 13) as f64) - 6.0).collect();
        let reference = SourceSet(MultiChannelRecord::from_samples(1.0, vec![a.clone(), b.clone()]).unwrap());
        let est = MultiChannelRecord::from_samples(
            1.0,
            vec![
                b.iter().map(|v| 3.0 * v).collect(),
                a.iter().map(|v| -0.5 * v).collect(),
            ],
        )
        .unwrap();
        let m = match_sources(&est, &reference).unwrap();
        assert_eq!(m[0].reference_index, 0);
        assert_eq!(m[0].estimated_index, 1);
        assert!((m[0].correlation + 1.0).abs() < 1e-12);
        assert_eq!(m[1].estimated_index, 0);
        assert!((m[1].correlation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn match_rejects_length_mismatch() {
        let reference = SourceSet(MultiChannelRecord::from_samples(1.0, vec![vec![0.0, 1.0, 2.0]]).unwrap());
        let est = MultiChannelRecord::from_samples(1.0, vec![vec![0.0, 1.0]]).unwrap();
        assert!(match_sources(&est, &reference).is_err());
    }
}
