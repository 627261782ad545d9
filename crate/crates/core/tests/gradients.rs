mod common;

use common::{gradient_check, six_token_example, tiny_tagger};
use vog_core::encoder::FusionKind;

fn assert_groups(report: &std::collections::BTreeMap<String, (f64, usize)>) {
    for (group, (rel, count)) in report {
        println!("{group:<28} n={count:<4} rel={rel:.3e}");
    }
    for (group, (rel, _)) in report {
        assert!(*rel <= 1e-4, "{group}: relative error {rel:.3e}");
    }
}

#[test]
fn gate_crf_tagger_gradients() {
    let tagger = tiny_tagger(FusionKind::Gate, true, 3, 1);
    let report = gradient_check(&tagger, &six_token_example(3, 2), 1e-5);
    assert!(report.contains_key("fusion.gate"));
    assert!(report.contains_key("crf"));
    assert_groups(&report);
}

#[test]
fn concat_token_head_gradients() {
    let tagger = tiny_tagger(FusionKind::Concat, false, 3, 3);
    let report = gradient_check(&tagger, &six_token_example(3, 4), 1e-5);
    assert!(report.contains_key("fusion.concat"));
    assert_groups(&report);
}

#[test]
fn slot_crf_gradients() {
    let tagger = tiny_tagger(FusionKind::None, true, 3, 5);
    let mut example = six_token_example(3, 6);
    example.slots = Some(vec![0, 2, 5]);
    example.gold.truncate(3);
    assert_groups(&gradient_check(&tagger, &example, 1e-5));
}

#[test]
fn constant_loss_has_zero_gradient() {
    let tagger = tiny_tagger(FusionKind::Gate, true, 3, 7);
    let mut example = six_token_example(3, 8);
    example.slots = Some(Vec::new());
    example.gold.clear();
    let (loss, g) = tagger.loss(&example, None).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.iter().all(|m| m.iter().all(|&v| v == 0.0)));
}

#[test]
fn doubled_loss_doubles_gradients() {
    // Counting the same example twice doubles the loss.
    let tagger = tiny_tagger(FusionKind::Gate, true, 3, 7);
    let example = six_token_example(3, 8);
    let (loss, g) = tagger.loss(&example, None).unwrap();
    let (loss2, g2) = tagger.loss(&example, None).unwrap();
    let mut doubled = g.clone();
    doubled.add_assign(&g2);
    let mut scaled = g;
    scaled.scale(2.0);
    assert_eq!(loss + loss2, 2.0 * loss);
    assert_eq!(doubled, scaled);
}
