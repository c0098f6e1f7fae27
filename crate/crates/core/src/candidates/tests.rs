use super::*;
use crate::image::BinaryMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Flood-fill component count, written independently of `morphology`.
fn brute_cc(on: &[bool], w: usize, h: usize) -> usize {
    let mut seen = vec![false; on.len()];
    let mut n = 0;
    for s in 0..on.len() {
        if !on[s] || seen[s] {
            continue;
        }
        n += 1;
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if on[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    n
}

/// Exhaustive scan over the quantized grid.
fn scan_oracle(score: &ScoreMap, k: usize, step: f64) -> (f64, ThresholdBranch) {
    let q: Vec<i64> = score.data().iter().map(|&s| (s / step).round() as i64).collect();
    let lo = *q.iter().min().unwrap();
    let hi = *q.iter().max().unwrap();
    let counts: Vec<(i64, usize)> = (lo..=hi)
        .map(|t| {
            let on: Vec<bool> = q.iter().map(|&v| v > t).collect();
            (t, brute_cc(&on, score.width(), score.height()))
        })
        .collect();
    if counts.iter().all(|&(_, c)| c < k) {
        ((lo + 1) as f64 * step, ThresholdBranch::Lower)
    } else if counts.iter().all(|&(_, c)| c > k) {
        (hi as f64 * step, ThresholdBranch::Upper)
    } else {
        let t = counts.iter().find(|&&(_, c)| c <= k).unwrap().0;
        (t as f64 * step, ThresholdBranch::Scanned)
    }
}

fn score_from(w: usize, h: usize, data: Vec<f64>) -> ScoreMap {
    ScoreMap::new(GrayImage::new(w, h, data).unwrap()).unwrap()
}

fn blob_map(w: usize, h: usize, centres: &[(usize, usize, f64)]) -> ScoreMap {
    let mut data = vec![0.0; w * h];
    for &(cx, cy, v) in centres {
        for y in cy - 1..=cy + 1 {
            for x in cx - 1..=cx + 1 {
                data[y * w + x] = v;
            }
        }
    }
    score_from(w, h, data)
}

#[test]
fn zero_map_takes_lower_bound() {
    let s = score_from(20, 20, vec![0.0; 400]);
    let c = select_threshold(&s, 120, 0.002, None, None);
    assert_eq!(c.branch, ThresholdBranch::Lower);
    assert!((c.value - 0.002).abs() < 1e-15);
    assert_eq!(c.components, 0);
}

#[test]
fn five_blobs_are_all_kept() {
    let centres: Vec<_> = (0..5).map(|i| (3 + 6 * i, 5, 1.0)).collect();
    let s = blob_map(32, 12, &centres);
    let c = select_threshold(&s, 120, 0.002, None, None);
    let oracle = scan_oracle(&s, 120, 0.002);
    assert_eq!((c.value, c.branch), oracle);
    // Fewer than K at every level, so the lower bound applies; it selects
    // the same pixels as the first scanned level.
    assert_eq!(c.branch, ThresholdBranch::Lower);
    assert_eq!(threshold_map(&s, 0.002, c.value), threshold_map(&s, 0.002, 0.0));
    assert_eq!(c.components, 5);
}

#[test]
fn two_hundred_blobs_keep_the_highest() {
    let mut centres = Vec::new();
    for i in 0..200usize {
        let (gx, gy) = (i % 20, i / 20);
        // distinct heights on the 0.002 grid
        centres.push((2 + 4 * gx, 2 + 4 * gy, 0.01 + 0.004 * i as f64));
    }
    let s = blob_map(82, 42, &centres);
    let c = select_threshold(&s, 120, 0.002, None, None);
    assert_eq!((c.value, c.branch), scan_oracle(&s, 120, 0.002));
    assert_eq!(c.branch, ThresholdBranch::Scanned);
    assert_eq!(c.components, 120);
}

#[test]
fn threshold_matches_scan_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..25 {
        let (w, h) = (32, 32);
        let amp = [0.05, 0.2, 1.0][trial % 3];
        let raw = GrayImage::from_fn(w, h, |_, _| rng.random::<f64>() * amp);
        let smooth = crate::image::gaussian_blur(&raw, 0.5 + (trial % 4) as f64 * 0.5).unwrap();
        let s = ScoreMap::new(smooth).unwrap();
        for k in [1, 5, 30] {
            let c = select_threshold(&s, k, 0.002, None, None);
            assert_eq!((c.value, c.branch), scan_oracle(&s, k, 0.002), "trial {trial} k {k}");
        }
    }
}

#[test]
fn explicit_bounds_are_used() {
    let s = score_from(8, 8, vec![0.0; 64]);
    let c = select_threshold(&s, 3, 0.002, Some(0.25), Some(0.5));
    assert_eq!(c.value, 0.25);
    // The top grid level always leaves zero components, so the scan stops
    // there at the latest and the upper bound is not reached.
    let data: Vec<f64> = (0..64).map(|i| if (i % 8) % 2 == 0 && (i / 8) % 2 == 0 { 0.5 } else { 0.0 }).collect();
    let s = score_from(8, 8, data);
    let c = select_threshold(&s, 3, 0.002, Some(0.25), Some(0.75));
    assert_eq!(c.branch, ThresholdBranch::Scanned);
    assert_eq!(c.value, 0.5);
    assert_eq!(c.components, 0);
}

fn naive_closing(img: &GrayImage, se: &[(isize, isize)]) -> GrayImage {
    let (w, h) = img.dims();
    let rank = |src: &GrayImage, max: bool| {
        GrayImage::from_fn(w, h, |x, y| {
            let mut acc = if max { f64::NEG_INFINITY } else { f64::INFINITY };
            for &(dx, dy) in se {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    let v = src.get(nx as usize, ny as usize);
                    acc = if max { acc.max(v) } else { acc.min(v) };
                }
            }
            acc
        })
    };
    rank(&rank(img, true), false)
}

fn disk_image(w: usize, h: usize, bg: f64, spots: &[(f64, f64, f64, f64)]) -> GrayImage {
    GrayImage::from_fn(w, h, |x, y| {
        let mut v = bg;
        for &(cx, cy, r, val) in spots {
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                v = val;
            }
        }
        v
    })
}

#[test]
fn closing_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = GrayImage::from_fn(23, 19, |_, _| rng.random());
    for l in [1, 4, 9] {
        let mut expect: Option<GrayImage> = None;
        for &a in &DEFAULT_ANGLES {
            let c = naive_closing(&img, &line_offsets(l, a));
            assert_eq!(directional_closing(&img, l, a), c);
            expect = Some(match expect {
                None => c,
                Some(e) => e.zip_map(&c, f64::min).unwrap(),
            });
        }
        assert_eq!(min_directional_closing(&img, l, &DEFAULT_ANGLES), expect.unwrap());
    }
}

#[test]
fn small_dot_is_filled() {
    let img = disk_image(31, 31, 0.8, &[(15.0, 15.0, 1.0, 0.2)]);
    let closed = min_directional_closing(&img, 9, &DEFAULT_ANGLES);
    assert!(closed.get(15, 15) > img.get(15, 15));
    assert!((closed.get(15, 15) - 0.8).abs() < 1e-12);
}

#[test]
fn long_line_survives() {
    let img = GrayImage::from_fn(41, 21, |x, y| if y == 10 && (5..36).contains(&x) { 0.1 } else { 0.9 });
    let closed = min_directional_closing(&img, 9, &DEFAULT_ANGLES);
    for x in 5..36 {
        assert_eq!(closed.get(x, 10), img.get(x, 10));
    }
}

#[test]
fn scores_of_identity_and_bright_blobs() {
    let fov = FovMask::full(31, 31);
    let img = disk_image(31, 31, 0.5, &[(15.0, 15.0, 2.0, 0.1)]);
    let s = candidate_score(&img, &img, &fov).unwrap();
    assert!(s.data().iter().all(|&v| v == 0.0));

    let closed = min_directional_closing(&img, 9, &DEFAULT_ANGLES);
    let s = candidate_score(&closed, &img, &fov).unwrap();
    assert!(s.get(15, 15) > 0.3);

    let bright = disk_image(31, 31, 0.5, &[(15.0, 15.0, 2.0, 0.9)]);
    let closed = min_directional_closing(&bright, 9, &DEFAULT_ANGLES);
    let s = candidate_score(&closed, &bright, &fov).unwrap();
    assert!(s.data().iter().all(|&v| v < 1e-9));
}

#[test]
fn score_is_zero_outside_fov_and_checks_dims() {
    let mask = BinaryMask::from_fn(10, 10, |x, _| x < 5);
    let fov = FovMask::new(mask).unwrap();
    let a = GrayImage::filled(10, 10, 0.7);
    let b = GrayImage::filled(10, 10, 0.2);
    let s = candidate_score(&a, &b, &fov).unwrap();
    assert!((s.get(2, 2) - 0.5).abs() < 1e-12);
    assert_eq!(s.get(7, 2), 0.0);
    assert!(candidate_score(&a, &GrayImage::filled(9, 10, 0.0), &fov).is_err());
}

#[test]
fn closing_is_extensive_and_monotone_in_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let axes = [0.0, 45.0, 90.0, 135.0];
    for _ in 0..5 {
        let raw = GrayImage::from_fn(40, 40, |_, _| rng.random());
        let img = crate::image::gaussian_blur(&raw, 1.0).unwrap();
        let mut prev = img.clone();
        for l in [3, 5, 9, 15, 21] {
            let all = min_directional_closing(&img, l, &DEFAULT_ANGLES);
            assert!(all.data().iter().zip(img.data()).all(|(c, v)| c >= v));
            let c = min_directional_closing(&img, l, &axes);
            assert!(c.data().iter().zip(prev.data()).all(|(a, b)| a >= b));
            prev = c;
        }
    }
}

#[test]
fn params_scale_with_resolution() {
    let p = CandidateParams::default();
    assert_eq!(p.scales.len(), 20);
    assert_eq!(p.scaled_to(1425).scales, p.scales);
    let small = p.scaled_to(236);
    assert_eq!(small.scales, (3..=10).collect::<Vec<_>>());
    assert!((small.blur_sigma - 5.0 * 236.0 / 1425.0).abs() < 1e-12);
    let mut bad = p.clone();
    bad.scales = vec![6, 3];
    assert!(bad.validate().is_err());
}

#[test]
fn label_map_round_trip() {
    let a = Candidate::from_pixels(1, vec![(1, 1), (2, 1)], vec![3]).unwrap();
    let b = Candidate::from_pixels(2, vec![(5, 4)], vec![]).unwrap();
    let set = CandidateSet {
        width: 8,
        height: 6,
        candidates: vec![a, b],
        scales: vec![],
    };
    let labels = set.label_map().unwrap();
    assert_eq!(labels[9], 1);
    assert_eq!(labels[4 * 8 + 5], 2);
    let back = CandidateSet::from_label_map(8, 6, &labels).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back.candidates[0].pixels, set.candidates[0].pixels);
    assert_eq!(back.candidates[1].centroid, (5.0, 4.0));
}
