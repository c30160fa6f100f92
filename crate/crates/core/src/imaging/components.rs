//! 8-connected component extraction for binary crack masks.

use super::BinaryMask;

/// One connected crack region.
///
/// Pixels are stored as `(row, col)` pairs sorted row-major, which makes
/// set intersection between two components a linear merge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrackComponent {
    /// Position in the sorted component list (largest area first).
    pub id: usize,
    pub pixels: Vec<(u32, u32)>,
    pub area: usize,
    /// `(min_row, min_col, max_row, max_col)`.
    pub bounding_box: (u32, u32, u32, u32),
}

impl CrackComponent {
    /// Number of pixels shared with another component.
    pub fn overlap_pixels(&self, other: &CrackComponent) -> usize {
        let (a, b) = (&self.pixels, &other.pixels);
        // Cheap reject on disjoint bounding boxes.
        let (ar0, ac0, ar1, ac1) = self.bounding_box;
        let (br0, bc0, br1, bc1) = other.bounding_box;
        if ar1 < br0 || br1 < ar0 || ac1 < bc0 || bc1 < ac0 {
            return 0;
        }
        let mut count = 0;
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    count += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        count
    }
}

/// Extract 8-connected components of the set pixels.
///
/// Components are returned in descending area order, ties broken by smaller
/// `(min_row, min_col)`, and `id` is the index in that order. Diagonal
/// neighbors join, so thin diagonal cracks stay in one piece.
pub fn connected_components(mask: &BinaryMask) -> Vec<CrackComponent> {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut visited = vec![false; w * h];
    let mut comps: Vec<CrackComponent> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();

    for start in 0..w * h {
        if !bits[start] || visited[start] {
            continue;
        }
        let mut pixels: Vec<(u32, u32)> = Vec::new();
        let (mut min_r, mut min_c, mut max_r, mut max_c) =
            (u32::MAX, u32::MAX, 0u32, 0u32);
        visited[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let r = idx / w;
            let c = idx % w;
            pixels.push((r as u32, c as u32));
            min_r = min_r.min(r as u32);
            min_c = min_c.min(c as u32);
            max_r = max_r.max(r as u32);
            max_c = max_c.max(c as u32);
            let r_lo = r.saturating_sub(1);
            let r_hi = (r + 1).min(h - 1);
            let c_lo = c.saturating_sub(1);
            let c_hi = (c + 1).min(w - 1);
            for nr in r_lo..=r_hi {
                for nc in c_lo..=c_hi {
                    let nidx = nr * w + nc;
                    if bits[nidx] && !visited[nidx] {
                        visited[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        pixels.sort_unstable();
        comps.push(CrackComponent {
            id: 0,
            area: pixels.len(),
            pixels,
            bounding_box: (min_r, min_c, max_r, max_c),
        });
    }

    comps.sort_by(|a, b| {
        b.area
            .cmp(&a.area)
            .then((a.bounding_box.0, a.bounding_box.1).cmp(&(b.bounding_box.0, b.bounding_box.1)))
    });
    for (i, comp) in comps.iter_mut().enumerate() {
        comp.id = i;
    }
    comps
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from_rows(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        let bits = rows
            .iter()
            .flat_map(|r| r.chars().map(|ch| ch == '#'))
            .collect();
        BinaryMask::new(w, h, bits).unwrap()
    }

    #[test]
    fn empty_mask_yields_no_components() {
        assert!(connected_components(&BinaryMask::zeros(8, 8)).is_empty());
    }

    #[test]
    fn diagonal_pixels_join_under_8_connectivity() {
        let mask = mask_from_rows(&["#...", ".#..", "....", "...."]);
        let comps = connected_components(&mask);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].area, 2);
    }

    #[test]
    fn components_sorted_by_descending_area() {
        // 7-pixel blob and a 3-pixel blob in a 10x10 mask.
        let mut mask = BinaryMask::zeros(10, 10);
        for c in 0..7 {
            mask.set(8, c, true);
        }
        for c in 0..3 {
            mask.set(0, c, true);
        }
        let comps = connected_components(&mask);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].area, 7);
        assert_eq!(comps[1].area, 3);
        assert_eq!(comps[0].id, 0);
        assert_eq!(comps[1].id, 1);
    }

    #[test]
    fn equal_area_ties_break_on_position() {
        let mask = mask_from_rows(&["..##", "....", "##.."]);
        let comps = connected_components(&mask);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].bounding_box, (0, 2, 0, 3));
        assert_eq!(comps[1].bounding_box, (2, 0, 2, 1));
    }

    #[test]
    fn overlap_counts_shared_pixels() {
        let a = connected_components(&mask_from_rows(&["###.", "...."]))
            .pop()
            .unwrap();
        let b = connected_components(&mask_from_rows(&[".###", "...."]))
            .pop()
            .unwrap();
        assert_eq!(a.overlap_pixels(&b), 2);
    }

    /// Independent oracle: recursive flood fill, label map comparison.
    fn flood_fill_labels(mask: &BinaryMask) -> Vec<usize> {
        fn fill(
            mask: &BinaryMask,
            labels: &mut [usize],
            r: usize,
            c: usize,
            label: usize,
        ) {
            let w = mask.width();
            if labels[r * w + c] != 0 || !mask.get(r, c) {
                return;
            }
            labels[r * w + c] = label;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr >= 0
                        && nc >= 0
                        && (nr as usize) < mask.height()
                        && (nc as usize) < mask.width()
                    {
                        fill(mask, labels, nr as usize, nc as usize, label);
                    }
                }
            }
        }
        let mut labels = vec![0usize; mask.width() * mask.height()];
        let mut next = 1;
        for r in 0..mask.height() {
            for c in 0..mask.width() {
                if mask.get(r, c) && labels[r * mask.width() + c] == 0 {
                    fill(mask, &mut labels, r, c, next);
                    next += 1;
                }
            }
        }
        labels
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn matches_flood_fill_oracle(bits in prop::collection::vec(prop::bool::weighted(0.35), 32 * 32)) {
            let mask = BinaryMask::new(32, 32, bits).unwrap();
            let comps = connected_components(&mask);
            let oracle = flood_fill_labels(&mask);

            // Partition: total area equals popcount, components disjoint.
            let total: usize = comps.iter().map(|c| c.area).sum();
            prop_assert_eq!(total, mask.count_ones());
            let n_oracle = oracle.iter().copied().max().unwrap_or(0);
            prop_assert_eq!(comps.len(), n_oracle);

            // Every component maps onto exactly one oracle label.
            let mut seen = std::collections::HashSet::new();
            for comp in &comps {
                prop_assert_eq!(comp.area, comp.pixels.len());
                let label = oracle[comp.pixels[0].0 as usize * 32 + comp.pixels[0].1 as usize];
                prop_assert!(label != 0);
                prop_assert!(seen.insert(label));
                for &(r, c) in &comp.pixels {
                    prop_assert_eq!(oracle[r as usize * 32 + c as usize], label);
                }
            }
        }
    }
}
