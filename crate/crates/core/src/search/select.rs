//! Exact top-L selection over small integer distances.

/// Picks the `pool` entries with the smallest distance, ties broken by
/// position, using a counting pass over the distance histogram.
///
/// `dists[i]` is the distance of candidate `ids(i)`; candidates must be given
/// in ascending id order so that position order equals id order. The result
/// is ordered by `(distance, id)`. Runs in `O(len + max_dist + pool)`.
pub(crate) fn select_smallest(
    dists: &[u16],
    max_dist: usize,
    pool: usize,
    counts: &mut Vec<u32>,
    ids: impl Fn(usize) -> u32,
) -> Vec<u32> {
    let take = pool.min(dists.len());
    if take == 0 {
        return Vec::new();
    }
    counts.clear();
    counts.resize(max_dist + 1, 0);
    for &d in dists {
        counts[d as usize] += 1;
    }

    // Threshold distance and how many entries at exactly that distance fit.
    let mut below = 0usize;
    let mut threshold = max_dist;
    for (d, &c) in counts.iter().enumerate() {
        if below + c as usize >= take {
            threshold = d;
            break;
        }
        below += c as usize;
    }
    let mut quota = take - below;

    // Turn counts into write cursors for distances up to the threshold.
    let mut cursor = 0u32;
    for c in counts.iter_mut().take(threshold + 1) {
        let here = *c;
        *c = cursor;
        cursor += here;
    }

    let mut out = vec![0u32; take];
    let threshold = threshold as u16;
    for (i, &d) in dists.iter().enumerate() {
        if d < threshold {
            out[counts[d as usize] as usize] = ids(i);
            counts[d as usize] += 1;
        } else if d == threshold && quota > 0 {
            out[counts[d as usize] as usize] = ids(i);
            counts[d as usize] += 1;
            quota -= 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_full_sort(dists in proptest::collection::vec(0u16..20, 0..200), pool in 0usize..250) {
            let mut counts = Vec::new();
            let got = select_smallest(&dists, 19, pool, &mut counts, |i| i as u32);
            let mut all: Vec<(u16, u32)> = dists.iter().enumerate().map(|(i, &d)| (d, i as u32)).collect();
            all.sort();
            let expected: Vec<u32> = all.iter().take(pool).map(|e| e.1).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
