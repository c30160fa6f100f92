//! Cross-module checks: rendered stacks flowing through extraction,
//! inference, and evaluation.

use crackscan_core::classify::{sliding_inference, ClassifyError, PatchScorer, PatchView};
use crackscan_core::evalmetrics::{associate, evaluate_tile};
use crackscan_core::illumsim::{render_stack, LightingConfig, RigGeometry, TileSpec};
use crackscan_core::imaging::connected_components;
use crackscan_core::patchset::{build_phase_sets, crack_proportion, make_folds, LabelThresholds, PatchGeometry, PatchLabel};

fn one_crack_spec(seed: u64) -> TileSpec {
    TileSpec {
        rng_seed: seed,
        width: 128,
        height: 96,
        crack_count: 1,
        crack_length_px: (50.0, 80.0),
        crack_width_px: (5.0, 8.0),
        noise_sigma: 0.0,
        ..TileSpec::default()
    }
}

/// Scorer that returns the patch's true crack proportion, looked up from
/// the ground-truth mask.
struct TrueProportionScorer<'a> {
    mask: &'a crackscan_core::imaging::BinaryMask,
    patch_size: usize,
}

impl PatchScorer for TrueProportionScorer<'_> {
    fn score(&self, patch: &PatchView<'_>) -> Result<f64, ClassifyError> {
        let (row, col) = patch.origin;
        Ok(crack_proportion(
            self.mask,
            row as usize,
            col as usize,
            self.patch_size,
            self.patch_size,
        )
        .expect("grid origins stay in bounds"))
    }
}

/// A ground-truth-proportion classifier at a 0.2 threshold must produce a
/// detection whose component overlaps the true crack.
#[test]
fn true_proportion_scorer_detects_the_crack() {
    let geom = RigGeometry::default();
    let stack = render_stack("t", &one_crack_spec(3), &geom).unwrap();
    assert_eq!(stack.truth_components.len(), 1);

    let g = PatchGeometry::new(16, 8).unwrap();
    let scorer = TrueProportionScorer {
        mask: &stack.truth_mask,
        patch_size: g.patch_size,
    };
    let img = stack.image(LightingConfig::AllLights);
    let (_, detection) = sliding_inference("t", img, &scorer, &g, 0.2).unwrap();

    let detected = connected_components(&detection);
    assert!(!detected.is_empty(), "something must be detected");
    let assoc = associate(&stack.truth_components, &detected);
    assert_eq!(assoc.matched(), 1, "true crack must be associated");
    assert!(assoc.pairs[0].overlap > 0);

    let eval = evaluate_tile("t", &stack.truth_components, &detected);
    assert_eq!(eval.presence, 1);
    assert_eq!(eval.recall, 1.0);
}

/// Downsampled stacks keep mask/image dimension agreement and component
/// structure suitable for phase-set construction.
#[test]
fn downsampled_stacks_feed_phase_sets() {
    let geom = RigGeometry::default();
    let stacks: Vec<_> = (0..4)
        .map(|i| {
            render_stack(&format!("tile_{i}"), &one_crack_spec(40 + i), &geom)
                .unwrap()
                .downsampled(0.5)
                .unwrap()
        })
        .collect();
    for stack in &stacks {
        assert_eq!(stack.width(), 64);
        assert_eq!(stack.height(), 48);
        assert_eq!(
            stack.truth_components,
            connected_components(&stack.truth_mask)
        );
        assert!(!stack.truth_components.is_empty(), "pooling keeps the crack");
    }

    let ids: Vec<String> = stacks.iter().map(|s| s.tile_id.clone()).collect();
    let plan = make_folds(&ids, 2, 11).unwrap();
    let g = PatchGeometry::new(16, 8).unwrap();
    let sets = build_phase_sets(
        &stacks,
        &plan,
        0,
        LightingConfig::OnlyLevel4,
        &g,
        &LabelThresholds::default(),
        13,
    )
    .unwrap();
    assert!(!sets.test.is_empty());
    assert!(sets
        .test
        .iter()
        .all(|p| p.label != PatchLabel::Ambiguous));
    let train_pos = sets.train.iter().filter(|p| p.label == PatchLabel::Positive).count();
    let train_neg = sets.train.len() - train_pos;
    assert_eq!(train_pos, train_neg, "train set is balanced");
}
