//! Patch-level and image-level detection metrics.
//!
//! Patch level: accuracy and the Matthews correlation coefficient over a
//! 2x2 confusion tabulation. Image level: crack presence accuracy, greedy
//! overlap-based association of ground-truth crack components to detected
//! ones, per-tile recall/precision/F1 over matched counts, and the crack
//! count F1 score weighted by `n_truth + 1` per tile.

mod report;

pub use report::{MetricRow, SuiteReport};

use thiserror::Error;

use crate::imaging::{connected_components, BinaryMask, CrackComponent};
use crate::par;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction and truth lengths differ ({predicted} vs {truth})")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("empty label set")]
    EmptyLabels,
    #[error("confusion counts are all zero")]
    ZeroCounts,
    #[error("empty tile evaluation list")]
    EmptyTiles,
    #[error("matched count {matched} exceeds min(n_truth {n_truth}, n_detected {n_detected})")]
    MatchCountExceedsBound {
        matched: usize,
        n_truth: usize,
        n_detected: usize,
    },
    #[error("misaligned tiles: {0}")]
    MisalignedTiles(String),
    #[error("empty fold list")]
    EmptyFolds,
}

/// 2x2 confusion tabulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Tabulate predicted against truth labels.
pub fn confusion(predicted: &[bool], truth: &[bool]) -> Result<ConfusionCounts, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::EmptyLabels);
    }
    let mut counts = ConfusionCounts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, false) => counts.tn += 1,
            (false, true) => counts.fn_ += 1,
        }
    }
    Ok(counts)
}

/// `(tp + tn) / (tp + fp + fn + tn)`.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    let total = c.total();
    if total == 0 {
        return Err(MetricsError::ZeroCounts);
    }
    Ok((c.tp + c.tn) as f64 / total as f64)
}

/// Matthews correlation coefficient.
///
/// The numerator is computed in widened integers. The denominator uses one
/// square root of the exact u128 factor product when it fits (counts up to
/// 1e9 do comfortably), which keeps perfect confusion matrices at exactly
/// 1.0; on overflow it falls back to per-factor square roots. Any zero
/// denominator factor yields 0.
pub fn mcc(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    if c.total() == 0 {
        return Err(MetricsError::ZeroCounts);
    }
    let factors = [c.tp + c.fp, c.tp + c.fn_, c.tn + c.fp, c.tn + c.fn_];
    if factors.contains(&0) {
        return Ok(0.0);
    }
    let num = i128::from(c.tp) * i128::from(c.tn) - i128::from(c.fp) * i128::from(c.fn_);
    let product = factors
        .iter()
        .try_fold(1u128, |acc, &f| acc.checked_mul(u128::from(f)));
    let denom = match product {
        Some(p) => (p as f64).sqrt(),
        None => factors.iter().map(|&f| (f as f64).sqrt()).product(),
    };
    Ok((num as f64 / denom).clamp(-1.0, 1.0))
}

/// Crack presence match: 1 when truth and detection agree on whether any
/// crack exists, else 0.
pub fn crack_presence(n_truth: usize, n_detected: usize) -> u8 {
    u8::from((n_truth > 0) == (n_detected > 0))
}

/// Overlap objective for association.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapMetric {
    /// Pixel-set intersection count.
    #[default]
    Intersection,
    /// Intersection over union; selection-only sensitivity flag, recorded
    /// overlaps stay in pixels.
    Iou,
}

/// One matched pair of component ids with their pixel overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssociationPair {
    pub truth_id: usize,
    pub detected_id: usize,
    pub overlap: usize,
}

/// Result of greedy crack association.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Association {
    pub pairs: Vec<AssociationPair>,
    pub unmatched_truth: Vec<usize>,
    pub unmatched_detected: Vec<usize>,
}

impl Association {
    pub fn matched(&self) -> usize {
        self.pairs.len()
    }
}

fn sort_order(components: &[CrackComponent]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&components[a], &components[b]);
        cb.area.cmp(&ca.area).then(
            (ca.bounding_box.0, ca.bounding_box.1).cmp(&(cb.bounding_box.0, cb.bounding_box.1)),
        )
    });
    order
}

/// Greedy association with pixel-intersection overlap.
pub fn associate(truth: &[CrackComponent], detected: &[CrackComponent]) -> Association {
    associate_with(truth, detected, OverlapMetric::Intersection)
}

/// Greedy association: both sides sorted by descending area (positional
/// tiebreak), truth components take the unconsumed detection with the
/// largest overlap, consuming it. Ties on the objective fall to the
/// detection earlier in sorted order, which is the larger one.
pub fn associate_with(
    truth: &[CrackComponent],
    detected: &[CrackComponent],
    metric: OverlapMetric,
) -> Association {
    let truth_order = sort_order(truth);
    let detected_order = sort_order(detected);
    let mut consumed = vec![false; detected.len()];
    let mut result = Association::default();

    for &ti in &truth_order {
        let g = &truth[ti];
        let mut best: Option<(f64, usize, usize)> = None; // (objective, det index, pixel overlap)
        for &di in &detected_order {
            if consumed[di] {
                continue;
            }
            let overlap = g.overlap_pixels(&detected[di]);
            if overlap == 0 {
                continue;
            }
            let objective = match metric {
                OverlapMetric::Intersection => overlap as f64,
                OverlapMetric::Iou => {
                    let union = g.area + detected[di].area - overlap;
                    overlap as f64 / union as f64
                }
            };
            if best.map(|(b, _, _)| objective > b).unwrap_or(true) {
                best = Some((objective, di, overlap));
            }
        }
        match best {
            Some((_, di, overlap)) => {
                consumed[di] = true;
                result.pairs.push(AssociationPair {
                    truth_id: truth[ti].id,
                    detected_id: detected[di].id,
                    overlap,
                });
            }
            None => result.unmatched_truth.push(truth[ti].id),
        }
    }
    for &di in &detected_order {
        if !consumed[di] {
            result.unmatched_detected.push(detected[di].id);
        }
    }
    result
}

/// Per-tile recall, precision, and F1 over matched crack counts.
///
/// Recall is 1 when no truth cracks exist, precision is 1 when nothing was
/// detected, and F1 is 0 at the 0/0 limit.
pub fn tile_prf(
    n_truth: usize,
    n_detected: usize,
    n_matched: usize,
) -> Result<(f64, f64, f64), MetricsError> {
    if n_matched > n_truth.min(n_detected) {
        return Err(MetricsError::MatchCountExceedsBound {
            matched: n_matched,
            n_truth,
            n_detected,
        });
    }
    let recall = if n_truth > 0 {
        n_matched as f64 / n_truth as f64
    } else {
        1.0
    };
    let precision = if n_detected > 0 {
        n_matched as f64 / n_detected as f64
    } else {
        1.0
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((recall, precision, f1))
}

/// Detection outcome for one tile.
#[derive(Debug, Clone)]
pub struct TileEvaluation {
    pub tile_id: String,
    pub n_truth: usize,
    pub n_detected: usize,
    pub association: Association,
    /// Crack presence match, 0 or 1.
    pub presence: u8,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// Crack-count weight `n_truth + 1`.
    pub weight: u64,
}

/// Evaluate one tile from its truth and detected components.
pub fn evaluate_tile(
    tile_id: &str,
    truth: &[CrackComponent],
    detected: &[CrackComponent],
) -> TileEvaluation {
    let association = associate(truth, detected);
    let n_truth = truth.len();
    let n_detected = detected.len();
    let (recall, precision, f1) = tile_prf(n_truth, n_detected, association.matched())
        .expect("association never matches more than min(n_truth, n_detected)");
    TileEvaluation {
        tile_id: tile_id.to_string(),
        n_truth,
        n_detected,
        association,
        presence: crack_presence(n_truth, n_detected),
        recall,
        precision,
        f1,
        weight: n_truth as u64 + 1,
    }
}

/// Sum with addends in a canonical order (by value bits), so the result is
/// independent of input permutation and tile relabeling.
fn stable_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| a.total_cmp(b));
    terms.iter().sum()
}

/// Crack presence accuracy: mean presence match over tiles.
pub fn cpa(evals: &[TileEvaluation]) -> Result<f64, MetricsError> {
    if evals.is_empty() {
        return Err(MetricsError::EmptyTiles);
    }
    let sum: u64 = evals.iter().map(|e| u64::from(e.presence)).sum();
    Ok(sum as f64 / evals.len() as f64)
}

/// Crack count F1: weighted mean of per-tile F1 with weights `n_truth + 1`.
pub fn ccf1(evals: &[TileEvaluation]) -> Result<f64, MetricsError> {
    if evals.is_empty() {
        return Err(MetricsError::EmptyTiles);
    }
    let weight_sum: u64 = evals.iter().map(|e| e.weight).sum();
    let weighted: Vec<f64> = evals.iter().map(|e| e.f1 * e.weight as f64).collect();
    Ok(stable_sum(weighted) / weight_sum as f64)
}

/// Truth/detection mask pair for one tile.
pub struct TileDetection<'a> {
    pub tile_id: &'a str,
    pub truth: &'a BinaryMask,
    pub detected: &'a BinaryMask,
}

/// One fold's evaluation inputs: per-tile masks plus patch-level
/// `(predicted, truth)` label pairs.
pub struct FoldInput<'a> {
    pub fold: usize,
    pub tiles: Vec<TileDetection<'a>>,
    pub patch_pairs: Vec<(bool, bool)>,
}

/// Per-fold metric values.
#[derive(Debug, Clone)]
pub struct FoldMetrics {
    pub fold: usize,
    pub confusion: ConfusionCounts,
    pub accuracy: f64,
    pub mcc: f64,
    pub cpa: f64,
    pub ccf1: f64,
    pub tiles: Vec<TileEvaluation>,
}

/// Fold metrics plus their unweighted means.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub folds: Vec<FoldMetrics>,
    pub mean_accuracy: f64,
    pub mean_mcc: f64,
    pub mean_cpa: f64,
    pub mean_ccf1: f64,
}

/// Evaluate a full run: per fold, patch metrics from the label pairs and
/// image metrics from connected components of the masks; then average the
/// fold values.
pub fn evaluate_run(folds: &[FoldInput]) -> Result<RunSummary, MetricsError> {
    if folds.is_empty() {
        return Err(MetricsError::EmptyFolds);
    }
    let mut fold_metrics = Vec::with_capacity(folds.len());
    for input in folds {
        if input.tiles.is_empty() {
            return Err(MetricsError::EmptyTiles);
        }
        for tile in &input.tiles {
            if tile.truth.width() != tile.detected.width()
                || tile.truth.height() != tile.detected.height()
            {
                return Err(MetricsError::MisalignedTiles(format!(
                    "tile '{}': truth {}x{} vs detection {}x{}",
                    tile.tile_id,
                    tile.truth.width(),
                    tile.truth.height(),
                    tile.detected.width(),
                    tile.detected.height()
                )));
            }
        }
        let tiles: Vec<TileEvaluation> = par::map_slice(&input.tiles, |tile| {
            let truth = connected_components(tile.truth);
            let detected = connected_components(tile.detected);
            evaluate_tile(tile.tile_id, &truth, &detected)
        });
        let (predicted, truth): (Vec<bool>, Vec<bool>) =
            input.patch_pairs.iter().copied().unzip();
        let counts = confusion(&predicted, &truth)?;
        fold_metrics.push(FoldMetrics {
            fold: input.fold,
            confusion: counts,
            accuracy: accuracy(&counts)?,
            mcc: mcc(&counts)?,
            cpa: cpa(&tiles)?,
            ccf1: ccf1(&tiles)?,
            tiles,
        });
    }
    let n = fold_metrics.len() as f64;
    let mean = |f: fn(&FoldMetrics) -> f64| fold_metrics.iter().map(f).sum::<f64>() / n;
    Ok(RunSummary {
        mean_accuracy: mean(|m| m.accuracy),
        mean_mcc: mean(|m| m.mcc),
        mean_cpa: mean(|m| m.cpa),
        mean_ccf1: mean(|m| m.ccf1),
        folds: fold_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::BinaryMask;
    use proptest::prelude::*;

    fn counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    #[test]
    fn confusion_basic_tabulations() {
        let all_pos = vec![true; 5];
        let c = confusion(&all_pos, &all_pos).unwrap();
        assert_eq!(c, counts(5, 0, 0, 0));

        let truth = [true, true, false, false];
        let inverted: Vec<bool> = truth.iter().map(|t| !t).collect();
        let c = confusion(&inverted, &truth).unwrap();
        assert_eq!(c.tp, 0);
        assert_eq!(c.tn, 0);
        assert_eq!(c.fp + c.fn_, 4);

        assert!(matches!(
            confusion(&[true], &[true, false]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(confusion(&[], &[]), Err(MetricsError::EmptyLabels)));
    }

    #[test]
    fn accuracy_values() {
        assert_eq!(accuracy(&counts(10, 0, 10, 0)).unwrap(), 1.0);
        assert_eq!(accuracy(&counts(8, 2, 9, 1)).unwrap(), 0.85);
        assert_eq!(accuracy(&counts(0, 5, 0, 5)).unwrap(), 0.0);
        assert!(matches!(
            accuracy(&counts(0, 0, 0, 0)),
            Err(MetricsError::ZeroCounts)
        ));
    }

    #[test]
    fn mcc_values() {
        assert_eq!(mcc(&counts(3, 0, 4, 0)).unwrap(), 1.0);
        let v = mcc(&counts(8, 2, 9, 1)).unwrap();
        let expected = 70.0 / (9900.0f64).sqrt();
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        // Degenerate denominator factor.
        assert_eq!(mcc(&counts(5, 0, 0, 5)).unwrap(), 0.0);
        assert_eq!(mcc(&counts(0, 0, 5, 5)).unwrap(), 0.0);
    }

    #[test]
    fn presence_match_table() {
        assert_eq!(crack_presence(3, 1), 1);
        assert_eq!(crack_presence(0, 0), 1);
        assert_eq!(crack_presence(0, 2), 0);
        assert_eq!(crack_presence(2, 0), 0);
    }

    #[test]
    fn prf_guards() {
        assert_eq!(tile_prf(0, 0, 0).unwrap(), (1.0, 1.0, 1.0));
        assert_eq!(tile_prf(2, 0, 0).unwrap(), (0.0, 1.0, 0.0));
        assert_eq!(tile_prf(0, 3, 0).unwrap(), (1.0, 0.0, 0.0));
        let (r, p, f1) = tile_prf(4, 5, 3).unwrap();
        assert_eq!(r, 0.75);
        assert_eq!(p, 0.6);
        assert!((f1 - 2.0 * 0.45 / 1.35).abs() < 1e-15);
        assert!(matches!(
            tile_prf(2, 2, 3),
            Err(MetricsError::MatchCountExceedsBound { .. })
        ));
    }

    fn comps_of(rows: &[&str]) -> Vec<CrackComponent> {
        let h = rows.len();
        let w = rows[0].len();
        let bits = rows
            .iter()
            .flat_map(|r| r.chars().map(|ch| ch == '#'))
            .collect();
        connected_components(&BinaryMask::new(w, h, bits).unwrap())
    }

    #[test]
    fn identical_components_match_fully() {
        let g = comps_of(&["##....", "......", "....##"]);
        let assoc = associate(&g, &g);
        assert_eq!(assoc.matched(), 2);
        assert!(assoc.unmatched_truth.is_empty());
        assert!(assoc.unmatched_detected.is_empty());
        for pair in &assoc.pairs {
            assert_eq!(pair.truth_id, pair.detected_id);
            assert_eq!(pair.overlap, g[pair.truth_id].area);
        }
    }

    #[test]
    fn larger_truth_component_takes_contested_detection() {
        // Truth: A (3x3 block, area 9) and B (2x2 block, area 4).
        // Detection: one component X overlapping A by 3 and B by 4.
        // A is processed first and takes X; B stays unmatched.
        let truth = comps_of(&[
            "###.......",
            "###.......",
            "###.......",
            "..........",
            "......##..",
            "......##..",
            "..........",
            "..........",
            "..........",
            "..........",
        ]);
        assert_eq!(truth.len(), 2);
        assert_eq!(truth[0].area, 9);
        let detected = comps_of(&[
            "..........",
            "..........",
            "####......",
            "...#......",
            "...#####..",
            "......##..",
            "..........",
            "..........",
            "..........",
            "..........",
        ]);
        assert_eq!(detected.len(), 1);
        let a_overlap = truth[0].overlap_pixels(&detected[0]);
        let b_overlap = truth[1].overlap_pixels(&detected[0]);
        assert_eq!((a_overlap, b_overlap), (3, 4));

        let assoc = associate(&truth, &detected);
        assert_eq!(assoc.matched(), 1);
        assert_eq!(assoc.pairs[0].truth_id, truth[0].id);
        assert_eq!(assoc.pairs[0].overlap, 3);
        assert_eq!(assoc.unmatched_truth, vec![truth[1].id]);
    }

    #[test]
    fn empty_detection_leaves_all_truth_unmatched() {
        let g = comps_of(&["##", ".."]);
        let assoc = associate(&g, &[]);
        assert!(assoc.pairs.is_empty());
        assert_eq!(assoc.unmatched_truth.len(), 1);
    }

    #[test]
    fn iou_flag_can_flip_the_selection() {
        // Truth: one 2x10 block (area 20) across rows 0-1.
        let truth = comps_of(&[
            "##########",
            "##########",
            "..........",
            "..........",
            "..........",
            "..........",
        ]);
        // Detection X sprawls (area 25, overlap 5, IoU 5/40); detection Y is
        // tight (area 4, overlap 4, IoU 4/20). Raw intersection picks X,
        // IoU picks Y.
        let detected = comps_of(&[
            ".......##.",
            "#####..##.",
            "#####.....",
            "#####.....",
            "#####.....",
            "#####.....",
        ]);
        assert_eq!(detected.len(), 2);
        let inter = associate_with(&truth, &detected, OverlapMetric::Intersection);
        let iou = associate_with(&truth, &detected, OverlapMetric::Iou);
        assert_eq!(inter.pairs[0].overlap, 5);
        assert_eq!(iou.pairs[0].overlap, 4);
        assert_ne!(inter.pairs[0].detected_id, iou.pairs[0].detected_id);
    }

    #[test]
    fn cpa_and_ccf1_values() {
        let mk = |f1: f64, n_truth: usize, presence: u8| TileEvaluation {
            tile_id: "t".into(),
            n_truth,
            n_detected: 0,
            association: Association::default(),
            presence,
            recall: 0.0,
            precision: 0.0,
            f1,
            weight: n_truth as u64 + 1,
        };
        let evals = vec![mk(1.0, 0, 1), mk(0.0, 3, 0)];
        assert_eq!(cpa(&evals).unwrap(), 0.5);
        assert_eq!(ccf1(&evals).unwrap(), 0.2);
        assert_eq!(cpa(&[mk(1.0, 1, 1)]).unwrap(), 1.0);
        assert_eq!(ccf1(&[mk(0.0, 5, 0)]).unwrap(), 0.0);
        assert!(matches!(cpa(&[]), Err(MetricsError::EmptyTiles)));
        // Single tile: ccf1 equals that tile's F1 regardless of weight.
        assert_eq!(ccf1(&[mk(0.625, 7, 1)]).unwrap(), 0.625);
    }

    #[test]
    fn evaluate_tile_composes_pieces() {
        let truth = comps_of(&["##..", "....", "..##"]);
        let detected = comps_of(&["##..", "....", "...."]);
        let eval = evaluate_tile("tile", &truth, &detected);
        assert_eq!(eval.n_truth, 2);
        assert_eq!(eval.n_detected, 1);
        assert_eq!(eval.presence, 1);
        assert_eq!(eval.recall, 0.5);
        assert_eq!(eval.precision, 1.0);
        assert_eq!(eval.weight, 3);
    }

    /// Independent re-implementation of the greedy procedure using hash sets
    /// and explicit max scans.
    fn associate_oracle(truth: &[CrackComponent], detected: &[CrackComponent]) -> Association {
        use std::collections::HashSet;
        let pix: Vec<HashSet<(u32, u32)>> = detected
            .iter()
            .map(|d| d.pixels.iter().copied().collect())
            .collect();
        let key = |c: &CrackComponent| {
            (
                std::cmp::Reverse(c.area),
                c.bounding_box.0,
                c.bounding_box.1,
            )
        };
        let mut t_sorted: Vec<&CrackComponent> = truth.iter().collect();
        t_sorted.sort_by_key(|c| key(c));
        let mut d_sorted: Vec<usize> = (0..detected.len()).collect();
        d_sorted.sort_by_key(|&i| key(&detected[i]));

        let mut consumed = HashSet::new();
        let mut out = Association::default();
        for g in t_sorted {
            let mut best: Option<(usize, usize)> = None; // (overlap, det idx)
            for &di in &d_sorted {
                if consumed.contains(&di) {
                    continue;
                }
                let overlap = g
                    .pixels
                    .iter()
                    .filter(|p| pix[di].contains(p))
                    .count();
                if overlap > 0 && best.map(|(b, _)| overlap > b).unwrap_or(true) {
                    best = Some((overlap, di));
                }
            }
            match best {
                Some((overlap, di)) => {
                    consumed.insert(di);
                    out.pairs.push(AssociationPair {
                        truth_id: g.id,
                        detected_id: detected[di].id,
                        overlap,
                    });
                }
                None => out.unmatched_truth.push(g.id),
            }
        }
        for &di in &d_sorted {
            if !consumed.contains(&di) {
                out.unmatched_detected.push(detected[di].id);
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn association_matches_oracle_and_invariants(
            truth_bits in prop::collection::vec(prop::bool::weighted(0.3), 16 * 16),
            det_bits in prop::collection::vec(prop::bool::weighted(0.3), 16 * 16),
        ) {
            let truth = connected_components(&BinaryMask::new(16, 16, truth_bits).unwrap());
            let detected = connected_components(&BinaryMask::new(16, 16, det_bits).unwrap());
            let assoc = associate(&truth, &detected);
            let oracle = associate_oracle(&truth, &detected);
            prop_assert_eq!(&assoc, &oracle);

            prop_assert!(assoc.matched() <= truth.len().min(detected.len()));
            let mut seen_d = std::collections::HashSet::new();
            let mut seen_t = std::collections::HashSet::new();
            for pair in &assoc.pairs {
                prop_assert!(pair.overlap > 0);
                prop_assert!(seen_d.insert(pair.detected_id));
                prop_assert!(seen_t.insert(pair.truth_id));
            }
            prop_assert_eq!(assoc.matched() + assoc.unmatched_truth.len(), truth.len());
            prop_assert_eq!(assoc.matched() + assoc.unmatched_detected.len(), detected.len());
        }

        #[test]
        fn metric_ranges(tp in 0u64..1000, fp in 0u64..1000, tn in 0u64..1000, fn_ in 0u64..1000) {
            prop_assume!(tp + fp + tn + fn_ > 0);
            let c = counts(tp, fp, tn, fn_);
            let a = accuracy(&c).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            let m = mcc(&c).unwrap();
            prop_assert!((-1.0..=1.0).contains(&m));
        }

        /// Permuting tiles or relabeling ids leaves aggregates unchanged.
        #[test]
        fn aggregate_permutation_invariance(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = crate::seeding::rng(seed);
            use rand::Rng;
            let mut evals: Vec<TileEvaluation> = (0..n)
                .map(|i| {
                    let n_truth = rng.random_range(0..4usize);
                    let n_detected = rng.random_range(0..4usize);
                    let matched = rng.random_range(0..=n_truth.min(n_detected));
                    let (recall, precision, f1) = tile_prf(n_truth, n_detected, matched).unwrap();
                    TileEvaluation {
                        tile_id: format!("tile_{i}"),
                        n_truth,
                        n_detected,
                        association: Association::default(),
                        presence: crack_presence(n_truth, n_detected),
                        recall,
                        precision,
                        f1,
                        weight: n_truth as u64 + 1,
                    }
                })
                .collect();
            let base_cpa = cpa(&evals).unwrap();
            let base_ccf1 = ccf1(&evals).unwrap();
            // Permute and relabel.
            evals.reverse();
            for (i, e) in evals.iter_mut().enumerate() {
                e.tile_id = format!("renamed_{i}");
            }
            prop_assert_eq!(cpa(&evals).unwrap(), base_cpa);
            prop_assert_eq!(ccf1(&evals).unwrap(), base_ccf1);
        }
    }

    #[test]
    fn evaluate_run_oracle_detections_are_perfect() {
        let mut truth = BinaryMask::zeros(8, 8);
        truth.set(2, 2, true);
        truth.set(2, 3, true);
        let fold = FoldInput {
            fold: 0,
            tiles: vec![TileDetection {
                tile_id: "t0",
                truth: &truth,
                detected: &truth,
            }],
            patch_pairs: vec![(true, true), (false, false), (true, true)],
        };
        let summary = evaluate_run(&[fold]).unwrap();
        assert_eq!(summary.mean_accuracy, 1.0);
        assert_eq!(summary.mean_mcc, 1.0);
        assert_eq!(summary.mean_cpa, 1.0);
        assert_eq!(summary.mean_ccf1, 1.0);
    }

    #[test]
    fn evaluate_run_empty_detections_zero_image_metrics() {
        let mut truth_a = BinaryMask::zeros(8, 8);
        truth_a.set(1, 1, true);
        let mut truth_b = BinaryMask::zeros(8, 8);
        truth_b.set(5, 5, true);
        truth_b.set(5, 6, true);
        let empty = BinaryMask::zeros(8, 8);
        let fold = FoldInput {
            fold: 0,
            tiles: vec![
                TileDetection {
                    tile_id: "a",
                    truth: &truth_a,
                    detected: &empty,
                },
                TileDetection {
                    tile_id: "b",
                    truth: &truth_b,
                    detected: &empty,
                },
            ],
            patch_pairs: vec![(false, true), (false, false)],
        };
        let summary = evaluate_run(&[fold]).unwrap();
        assert_eq!(summary.mean_cpa, 0.0);
        assert_eq!(summary.mean_ccf1, 0.0);
    }

    #[test]
    fn evaluate_run_rejects_misaligned_tiles() {
        let truth = BinaryMask::zeros(8, 8);
        let detected = BinaryMask::zeros(4, 4);
        let fold = FoldInput {
            fold: 0,
            tiles: vec![TileDetection {
                tile_id: "t0",
                truth: &truth,
                detected: &detected,
            }],
            patch_pairs: vec![(true, true)],
        };
        assert!(matches!(
            evaluate_run(&[fold]),
            Err(MetricsError::MisalignedTiles(_))
        ));
    }

    /// Two-fold toy suite checked against hand-computed values.
    #[test]
    fn evaluate_run_matches_hand_computation() {
        // Fold 0, tile A: truth blob rows 1-2 cols 1-2; detection blob rows
        // 2-3 cols 2-3; overlap 1 pixel, one matched pair.
        let mut truth_a = BinaryMask::zeros(8, 8);
        let mut det_a = BinaryMask::zeros(8, 8);
        for (r, c) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            truth_a.set(r, c, true);
        }
        for (r, c) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            det_a.set(r, c, true);
        }
        // Fold 0, tile B: two truth blobs, empty detection.
        let mut truth_b = BinaryMask::zeros(8, 8);
        for (r, c) in [(0, 0), (0, 1), (0, 2), (5, 5), (5, 6)] {
            truth_b.set(r, c, true);
        }
        let det_b = BinaryMask::zeros(8, 8);
        // Fold 0 patches: tp=3, fp=1, tn=5, fn=1.
        let fold0_pairs = vec![
            (true, true),
            (true, true),
            (true, true),
            (true, false),
            (false, false),
            (false, false),
            (false, false),
            (false, false),
            (false, false),
            (false, true),
        ];

        // Fold 1, tile C: both empty.
        let truth_c = BinaryMask::zeros(8, 8);
        let det_c = BinaryMask::zeros(8, 8);
        // Fold 1, tile D: one truth blob; detection splits into two blobs,
        // the larger overlapping the truth.
        let mut truth_d = BinaryMask::zeros(8, 8);
        for (r, c) in [(4, 4), (4, 5), (5, 4), (5, 5)] {
            truth_d.set(r, c, true);
        }
        let mut det_d = BinaryMask::zeros(8, 8);
        for (r, c) in [(4, 4), (4, 5), (5, 4)] {
            det_d.set(r, c, true);
        }
        det_d.set(0, 7, true);
        // Fold 1 patches: tp=2, fp=2, tn=4, fn=2.
        let fold1_pairs = vec![
            (true, true),
            (true, true),
            (true, false),
            (true, false),
            (false, false),
            (false, false),
            (false, false),
            (false, false),
            (false, true),
            (false, true),
        ];

        let folds = vec![
            FoldInput {
                fold: 0,
                tiles: vec![
                    TileDetection {
                        tile_id: "A",
                        truth: &truth_a,
                        detected: &det_a,
                    },
                    TileDetection {
                        tile_id: "B",
                        truth: &truth_b,
                        detected: &det_b,
                    },
                ],
                patch_pairs: fold0_pairs,
            },
            FoldInput {
                fold: 1,
                tiles: vec![
                    TileDetection {
                        tile_id: "C",
                        truth: &truth_c,
                        detected: &det_c,
                    },
                    TileDetection {
                        tile_id: "D",
                        truth: &truth_d,
                        detected: &det_d,
                    },
                ],
                patch_pairs: fold1_pairs,
            },
        ];

        let summary = evaluate_run(&folds).unwrap();
        let tol = 1e-12;

        // Hand computation, fold 0:
        //   accuracy = 8/10; mcc = 14/24; CPA = (1+0)/2; CCF1 = (1*2+0*3)/5.
        let f0 = &summary.folds[0];
        assert!((f0.accuracy - 0.8).abs() < tol);
        assert!((f0.mcc - 14.0 / 24.0).abs() < tol);
        assert!((f0.cpa - 0.5).abs() < tol);
        assert!((f0.ccf1 - 0.4).abs() < tol);

        // Fold 1:
        //   accuracy = 6/10; mcc = 4/24; CPA = 1;
        //   tile C: F1 = 1, weight 1. tile D: R=1, P=1/2, F1=2/3, weight 2.
        //   CCF1 = (1 + 4/3)/3 = 7/9.
        let f1 = &summary.folds[1];
        assert!((f1.accuracy - 0.6).abs() < tol);
        assert!((f1.mcc - 4.0 / 24.0).abs() < tol);
        assert!((f1.cpa - 1.0).abs() < tol);
        assert!((f1.ccf1 - 7.0 / 9.0).abs() < tol);

        // Means over folds.
        assert!((summary.mean_accuracy - 0.7).abs() < tol);
        assert!((summary.mean_mcc - 0.375).abs() < tol);
        assert!((summary.mean_cpa - 0.75).abs() < tol);
        assert!((summary.mean_ccf1 - 53.0 / 90.0).abs() < tol);
    }
}
