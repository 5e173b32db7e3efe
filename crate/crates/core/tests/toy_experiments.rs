use negsuite_core::catalog::TemplateCatalog;
use negsuite_core::diagnostics::{build_template_battery, diagnose_battery, BatteryFamily, BatteryInput};
use negsuite_core::toyworld::{featurize_text, run_experiment, Condition, TextMode, ToyConfig, ToyVocabulary};
use negsuite_core::types::TemplateKind;

#[test]
fn negfull_training_separates_hard_negative_pairs_and_negated_objects() {
    let cfg = ToyConfig { condition: Condition::Negfull, alpha: 0.99, ..ToyConfig::default() };
    let (model, log, metrics) = run_experiment(&cfg).unwrap();
    assert!(metrics.hardneg_discrimination >= 0.9, "{}", metrics.hardneg_discrimination);
    assert!(log.last().unwrap().loss < log[0].loss);
    assert_eq!(log.len(), 31);

    let vocab = ToyVocabulary::default();
    let inputs: Vec<BatteryInput> = vocab.objects().iter().map(|o| BatteryInput::Object(o.clone())).collect();
    let battery = build_template_battery(&TemplateCatalog::builtin(), &inputs);
    let emb: Vec<Vec<f64>> = battery
        .iter()
        .map(|b| model.embed_text(&featurize_text(&b.text, &vocab, TextMode::Scoped).unwrap()))
        .collect();
    let report = diagnose_battery(&battery, &emb).unwrap();
    let collapse = report.negation_object_collapse.unwrap();
    assert!(collapse < 0.9, "{collapse}");
    assert!(report.negation_separation < 1.0 - 1e-6);
    assert_eq!(report.scatter.iter().filter(|p| p.family == BatteryFamily::NegSingle).count(), 24 * 40);
}

#[test]
fn bag_mode_model_fails_negated_questions() {
    let cfg = ToyConfig { condition: Condition::Negfull, mode: TextMode::Bag, ..ToyConfig::default() };
    let (_, _, metrics) = run_experiment(&cfg).unwrap();
    let neg = metrics.mcq.per_template[&TemplateKind::Negation].value;
    assert!(neg < 0.25, "{neg}");
}

#[test]
fn experiments_are_reproducible() {
    let cfg = ToyConfig { pairs: 300, steps: 200, condition: Condition::Negcap, ..ToyConfig::default() };
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}
