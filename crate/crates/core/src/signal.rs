//! Local maxima and topographic prominence of sampled 1-D signals.

/// Indices of strict local maxima. A flat run of equal samples counts as one
/// maximum when both neighbours of the run are lower; its index is the run
/// midpoint, rounded down. The first and last sample are never maxima.
pub fn local_maxima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    let last = n - 1;
    let mut i = 1;
    while i < last {
        if y[i - 1] < y[i] {
            let mut ahead = i + 1;
            while ahead < last && y[ahead] == y[i] {
                ahead += 1;
            }
            if y[ahead] < y[i] {
                out.push((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        i += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prominence {
    pub prominence: f64,
    pub left_base: usize,
    pub right_base: usize,
}

/// Prominence of the sample at `peak`: its height above the higher of the two
/// lowest points reached before meeting a strictly higher sample (or the
/// signal edge) on either side.
pub fn prominence(y: &[f64], peak: usize) -> Prominence {
    let h = y[peak];

    let mut left_min = h;
    let mut left_base = peak;
    let mut i = peak;
    loop {
        if y[i] > h {
            break;
        }
        if y[i] < left_min {
            left_min = y[i];
            left_base = i;
        }
        if i == 0 {
            break;
        }
        i -= 1;
    }

    let mut right_min = h;
    let mut right_base = peak;
    for (j, &v) in y.iter().enumerate().skip(peak) {
        if v > h {
            break;
        }
        if v < right_min {
            right_min = v;
            right_base = j;
        }
    }

    Prominence {
        prominence: h - left_min.max(right_min),
        left_base,
        right_base,
    }
}

/// Centered moving average; the window is truncated at the edges.
pub fn moving_average(y: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = y.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    median_in_place(&mut v)
}

/// Median; reorders `v`. Mean of the middle pair for even lengths.
pub fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    assert!(n > 0, "median of empty slice");
    let mid = n / 2;
    let (_, &mut upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxima_and_plateaus() {
        assert_eq!(local_maxima(&[0.0, 1.0, 0.0]), vec![1]);
        assert_eq!(local_maxima(&[0.0, 1.0, 1.0, 0.0]), vec![1]);
        assert_eq!(local_maxima(&[0.0, 1.0, 1.0, 1.0, 0.0]), vec![2]);
        // plateau running into the edge is not a peak
        assert!(local_maxima(&[0.0, 1.0, 1.0]).is_empty());
        assert!(local_maxima(&[1.0, 2.0, 3.0, 4.0]).is_empty());
        assert_eq!(local_maxima(&[0.0, 2.0, 1.0, 3.0, 0.0]), vec![1, 3]);
    }

    #[test]
    fn prominence_basic() {
        let y = [0.0, 2.0, 1.0, 3.0, 0.5];
        assert_eq!(prominence(&y, 1).prominence, 1.0);
        assert_eq!(prominence(&y, 3).prominence, 2.5);
        let tri = [0.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0];
        let p = prominence(&tri, 3);
        assert_eq!((p.prominence, p.left_base, p.right_base), (3.0, 0, 6));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn moving_average_edges() {
        let m = moving_average(&[0.0, 0.0, 5.0, 0.0, 0.0], 5);
        assert_eq!(m, vec![5.0 / 3.0, 1.25, 1.0, 1.25, 5.0 / 3.0]);
    }
}
