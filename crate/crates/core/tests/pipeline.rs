use relmem::bank::RepresentationBank;
use relmem::pipeline::{
    prepare_data, run_bank, run_comparator, run_evaluation, run_primary, DataBundle, ExperimentConfig,
};
use relmem::primary::PrimaryModel;

fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        "[dataset]\nn_train = 240\nn_val = 40\nn_test = 40\nn_novel = 20\n\
         [primary]\nkind = \"dnn\"\n[primary.sgd]\nepochs = 2\n\
         [bank]\nm = 20\n[comparator.sgd]\nepochs = 3\n",
    )
    .unwrap()
}

#[test]
fn stages_resume_from_saved_artifacts() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let data = prepare_data(&cfg).unwrap();
    data.save(&dir.path().join("data")).unwrap();
    let (model, _) = run_primary(&cfg, &data).unwrap();
    model.save(dir.path().join("primary.rlnn")).unwrap();
    let bank = run_bank(&cfg, &model, &data.train, cfg.bank.m).unwrap();
    bank.save(dir.path().join("bank.rbnk")).unwrap();
    let (cmp, _) = run_comparator(&cfg, &bank).unwrap();
    let summary = run_evaluation(&cfg, &model, &cmp, &bank, &data).unwrap();

    // a second process would only see the files
    let data2 = DataBundle::load(&dir.path().join("data")).unwrap();
    let model2 = PrimaryModel::load(dir.path().join("primary.rlnn")).unwrap();
    let bank2 = run_bank(&cfg, &model2, &data2.train, cfg.bank.m).unwrap();
    assert_eq!(bank2.fingerprint(), bank.fingerprint());
    assert_eq!(RepresentationBank::load(dir.path().join("bank.rbnk")).unwrap(), bank);
    let (cmp2, _) = run_comparator(&cfg, &bank2).unwrap();
    assert_eq!(run_evaluation(&cfg, &model2, &cmp2, &bank2, &data2).unwrap(), summary);
}

#[test]
fn summary_rates_are_probabilities() {
    let cfg = tiny();
    let data = prepare_data(&cfg).unwrap();
    let (model, _) = run_primary(&cfg, &data).unwrap();
    let bank = run_bank(&cfg, &model, &data.train, cfg.bank.m).unwrap();
    let (cmp, _) = run_comparator(&cfg, &bank).unwrap();
    let s = run_evaluation(&cfg, &model, &cmp, &bank, &data).unwrap();
    assert_eq!(s.gamma_sweep.rows.len(), cfg.evaluation.gammas.len());
    for r in &s.gamma_sweep.rows {
        for v in [r.novelty_detection_rate, r.false_positive_rate, r.characterization_accuracy] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!((r.n_known, r.n_novel), (40, 20));
    }
}
