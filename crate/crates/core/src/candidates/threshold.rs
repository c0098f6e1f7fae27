//! Adaptive threshold that caps the number of connected components.

use super::ScoreMap;
use crate::morphology::neighbours8;

/// Which branch of the selection rule produced the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdBranch {
    /// Every scanned threshold left fewer than `K` components.
    Lower,
    /// First scanned threshold leaving at most `K` components.
    Scanned,
    /// Every scanned threshold left more than `K` components.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub value: f64,
    pub branch: ThresholdBranch,
    /// Components of `score > value` (counted on the quantized map).
    pub components: usize,
}

/// Scores rounded to the nearest multiple of `step`, as integer levels.
pub(crate) fn quantize(score: &ScoreMap, step: f64) -> Vec<i64> {
    score.data().iter().map(|&s| (s / step).round() as i64).collect()
}

/// Component counts of `{q > k}` for every level `k` in `lo..=hi`.
///
/// Pixels are added in decreasing level order to a union-find forest, so
/// all counts come out of one pass.
pub(crate) fn components_per_level(levels: &[i64], width: usize, height: usize) -> (i64, Vec<usize>) {
    let Some(&lo) = levels.iter().min() else {
        return (0, vec![0]);
    };
    let hi = *levels.iter().max().expect("nonempty");
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_unstable_by(|&a, &b| levels[b].cmp(&levels[a]).then(a.cmp(&b)));

    let mut parent: Vec<u32> = (0..levels.len() as u32).collect();
    let mut active = vec![false; levels.len()];
    fn find(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            let p = parent[i as usize];
            parent[i as usize] = parent[p as usize];
            i = p;
        }
        i
    }

    let n_levels = (hi - lo + 1) as usize;
    let mut counts = vec![0usize; n_levels];
    let mut comps = 0usize;
    let mut next = 0usize;
    // counts[k - lo] = components of {q > k}; at k = hi nothing is above.
    for k in (lo..hi).rev() {
        while next < order.len() && levels[order[next]] > k {
            let i = order[next];
            next += 1;
            active[i] = true;
            comps += 1;
            for n in neighbours8(i, width, height) {
                if active[n] {
                    let a = find(&mut parent, i as u32);
                    let b = find(&mut parent, n as u32);
                    if a != b {
                        parent[a.max(b) as usize] = a.min(b);
                        comps -= 1;
                    }
                }
            }
        }
        counts[(k - lo) as usize] = comps;
    }
    (lo, counts)
}

/// Picks the threshold for one score map.
///
/// Thresholds `t_s` are scanned upward from the minimum to the maximum of
/// the map in increments of `step`, counting the 8-connected components of
/// `score > t_s`:
///
/// * if every `t_s` leaves fewer than `max_components`, `lower` is returned;
/// * if every `t_s` leaves more than `max_components`, `upper` is returned;
/// * otherwise the first `t_s` leaving at most `max_components`.
///
/// Scores are quantized to the `step` grid first, so the scan is exact.
/// `lower` defaults to `min + step` and `upper` to `max`.
pub fn select_threshold(
    score: &ScoreMap,
    max_components: usize,
    step: f64,
    lower: Option<f64>,
    upper: Option<f64>,
) -> ThresholdChoice {
    let levels = quantize(score, step);
    let (lo, counts) = components_per_level(&levels, score.width(), score.height());
    let hi = lo + counts.len() as i64 - 1;
    let level_value = |k: i64| k as f64 * step;

    let (value, branch) = if counts.iter().all(|&c| c < max_components) {
        (lower.unwrap_or(level_value(lo + 1)), ThresholdBranch::Lower)
    } else if counts.iter().all(|&c| c > max_components) {
        (upper.unwrap_or(level_value(hi)), ThresholdBranch::Upper)
    } else {
        let k = counts
            .iter()
            .position(|&c| c <= max_components)
            .expect("some level qualifies");
        (level_value(lo + k as i64), ThresholdBranch::Scanned)
    };
    let components = count_above(&levels, step, value, score.width(), score.height());
    ThresholdChoice {
        value,
        branch,
        components,
    }
}

fn count_above(levels: &[i64], step: f64, t: f64, w: usize, h: usize) -> usize {
    let mask = crate::image::BinaryMask::new(w, h, levels.iter().map(|&q| q as f64 * step > t).collect())
        .expect("same size");
    crate::morphology::count_components(&mask)
}

/// Binary map `score > t` on the quantized scores.
pub fn threshold_map(score: &ScoreMap, step: f64, t: f64) -> crate::image::BinaryMask {
    let levels = quantize(score, step);
    crate::image::BinaryMask::new(
        score.width(),
        score.height(),
        levels.iter().map(|&q| q as f64 * step > t).collect(),
    )
    .expect("same size")
}
