use std::path::{Path, PathBuf};

use lgpnmt_core::app::{run, Command, RunConfig};
use lgpnmt_core::corpus::read_lines;
use lgpnmt_core::trainer::Checkpoint;

fn config(dir: &Path, extra: &[(&str, String)]) -> RunConfig {
    let mut pairs = vec![
        ("train_source".to_string(), dir.join("data/train.src").display().to_string()),
        ("train_target".to_string(), dir.join("data/train.tgt").display().to_string()),
        ("treebank".to_string(), dir.join("data/treebank.conll").display().to_string()),
        ("vocab_dir".to_string(), dir.join("vocab").display().to_string()),
    ];
    for s in ["d1=16", "d2=8", "d3=32", "batch_size=8", "dropout=0", "epochs=2", "pretrain_epochs=2"] {
        let (k, v) = s.split_once('=').unwrap();
        pairs.push((k.into(), v.into()));
    }
    pairs.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    RunConfig::resolve(None, None, &pairs).unwrap()
}

fn p(path: PathBuf) -> String {
    path.display().to_string()
}

#[test]
fn generate_train_average_translate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = RunConfig::resolve(None, None, &[("output_dir".into(), p(dir.join("data")))]).unwrap();
    run(Command::GenerateToy, &data).unwrap();

    run(Command::BuildVocab, &config(dir, &[])).unwrap();
    let report = run(Command::Train, &config(dir, &[("output_dir", p(dir.join("run")))])).unwrap();
    assert_eq!(report.metrics["epochs"], 2.0);

    let ckpts = format!("{},{}", p(dir.join("run/ckpt-001-2.bin")), p(dir.join("run/ckpt-002-2.bin")));
    let avg = dir.join("avg.bin");
    run(Command::Average, &config(dir, &[("checkpoints", ckpts.clone()), ("output", p(avg.clone()))])).unwrap();
    assert!(Checkpoint::load(&avg).is_ok());

    let out = dir.join("out.txt");
    let cfg = config(
        dir,
        &[("checkpoints", ckpts), ("input", p(dir.join("data/dev.src"))), ("output", p(out.clone())), ("beam", "3".into())],
    );
    run(Command::EnsembleTranslate, &cfg).unwrap();
    assert_eq!(read_lines(&out).unwrap().len(), read_lines(&dir.join("data/dev.src")).unwrap().len());
}

#[test]
fn mismatched_vocabulary_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = RunConfig::resolve(None, None, &[("output_dir".into(), p(dir.join("data")))]).unwrap();
    run(Command::GenerateToy, &data).unwrap();
    run(Command::BuildVocab, &config(dir, &[])).unwrap();
    run(Command::Train, &config(dir, &[("output_dir", p(dir.join("run"))), ("epochs", "1".into())])).unwrap();

    let other = config(dir, &[("vocab_dir", p(dir.join("vocab2"))), ("train_source", p(dir.join("data/dev.src")))]);
    run(Command::BuildVocab, &other).unwrap();
    let mut cfg = other;
    for (k, v) in [("checkpoint", p(dir.join("run/ckpt-001-2.bin"))), ("input", p(dir.join("data/dev.src"))), ("output", p(dir.join("o.txt")))] {
        cfg.set(k, &v, Path::new("")).unwrap();
    }
    let err = run(Command::Translate, &cfg).unwrap_err();
    assert!(err.to_string().contains("vocab") || err.to_string().contains("hash"), "{err}");
}
