//! Rank (Spearman) and linear (Pearson) correlation.
//!
//! Both return an error instead of NaN when a series has no spread.

use crate::error::{Error, Result};
use crate::store::ScoreMap;

/// Two equally long series of finite reals, at least two entries each.
#[derive(Debug, Clone, Copy)]
pub struct PairedSeries<'a> {
    a: &'a [f64],
    b: &'a [f64],
}

impl<'a> PairedSeries<'a> {
    pub fn new(a: &'a [f64], b: &'a [f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::invalid(format!(
                "paired series lengths differ: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        if a.len() < 2 {
            return Err(Error::UndefinedCorrelation("fewer than two observations"));
        }
        if a.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(Error::invalid("paired series contains a non-finite value"));
        }
        Ok(Self { a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn srcc(&self) -> Result<f64> {
        pearson(&midranks(self.a), &midranks(self.b))
    }

    pub fn plcc(&self) -> Result<f64> {
        pearson(self.a, self.b)
    }
}

pub fn srcc(a: &[f64], b: &[f64]) -> Result<f64> {
    PairedSeries::new(a, b)?.srcc()
}

pub fn plcc(a: &[f64], b: &[f64]) -> Result<f64> {
    PairedSeries::new(a, b)?.plcc()
}

/// Correlations between two score maps over the given ids (in that order).
pub fn correlations_on<S: AsRef<str>>(
    ids: &[S],
    pred: &ScoreMap,
    truth: &ScoreMap,
) -> Result<(f64, f64)> {
    let mut a = Vec::with_capacity(ids.len());
    let mut b = Vec::with_capacity(ids.len());
    for id in ids {
        let id = id.as_ref();
        a.push(
            *pred
                .get(id)
                .ok_or_else(|| Error::UnknownId(id.to_owned()))?,
        );
        b.push(
            *truth
                .get(id)
                .ok_or_else(|| Error::UnknownId(id.to_owned()))?,
        );
    }
    let s = PairedSeries::new(&a, &b)?;
    Ok((s.srcc()?, s.plcc()?))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("series has zero variance"));
    }
    // sqrt(s * s) == s exactly, so identical series give exactly 1
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn srcc_examples() {
        assert_abs_diff_eq!(
            srcc(&[1., 2., 3.], &[10., 20., 30.]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            srcc(&[1., 2., 3.], &[3., 2., 1.]).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        // 1 - 6 * (0 + 1 + 1 + 0) / (4 * 15)
        assert_abs_diff_eq!(
            srcc(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap(),
            0.8,
            epsilon = 1e-12
        );
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[10., 20., 20., 5.]), vec![2.0, 3.5, 3.5, 1.0]);
        assert_eq!(midranks(&[1., 1., 1.]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn plcc_examples() {
        let a = [0.3, -1.0, 2.5, 4.0, 0.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_abs_diff_eq!(plcc(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(plcc(&a, &neg).unwrap(), -1.0, epsilon = 1e-12);

        // textbook formula: cov / (sd_a * sd_b) with n-1 normalization
        let a = [0.0, 1.0, 2.0, 3.0];
        let b = [0.0, 1.0, 2.0, 9.0];
        let n = 4.0;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (n - 1.0);
        let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert_abs_diff_eq!(plcc(&a, &b).unwrap(), cov / (sa * sb), epsilon = 1e-12);
    }

    #[test]
    fn constant_series_is_an_error() {
        assert!(matches!(
            srcc(&[1., 1., 1.], &[1., 2., 3.]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            plcc(&[1., 2., 3.], &[4., 4., 4.]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(srcc(&[1.], &[2.]).is_err());
        assert!(plcc(&[1., 2.], &[2.]).is_err());
    }

    fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-100.0f64..100.0, n),
                prop::collection::vec(-100.0f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded((a, b) in series()) {
            if let (Ok(s1), Ok(s2)) = (srcc(&a, &b), srcc(&b, &a)) {
                prop_assert!((s1 - s2).abs() <= 1e-12);
                prop_assert!(s1.abs() <= 1.0 + 1e-12);
            }
            if let (Ok(p1), Ok(p2)) = (plcc(&a, &b), plcc(&b, &a)) {
                prop_assert!((p1 - p2).abs() <= 1e-12);
                prop_assert!(p1.abs() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn srcc_invariant_under_monotone_maps((a, b) in series()) {
            if let Ok(s) = srcc(&a, &b) {
                let ta: Vec<f64> = a.iter().map(|v| (v / 50.0).exp()).collect();
                let tb: Vec<f64> = b.iter().map(|v| v * v * v + 3.0).collect();
                let t = srcc(&ta, &tb).unwrap();
                prop_assert!((s - t).abs() <= 1e-12);
            }
        }

        #[test]
        fn plcc_invariant_under_positive_affine((a, b) in series(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            if let Ok(p) = plcc(&a, &b) {
                let ta: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
                let q = plcc(&ta, &b).unwrap();
                prop_assert!((p - q).abs() <= 1e-9);
            }
        }
    }
}
