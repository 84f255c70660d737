// Temporary calibration probe; not part of the deliverable.
use std::time::Instant;

use calltag::corpus::{
    default_gazetteers, default_templates, generate_corpus, NoiseConfig, Vocabulary,
};
use calltag::eval::score_model;
use calltag::tagger::{train, TaggerConfig, TaggerModel, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(5e-5);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3);

    let gaz = default_gazetteers();
    let templates = default_templates();
    let noise = NoiseConfig { rng_seed: 7, ..NoiseConfig::default() };

    let t0 = Instant::now();
    let split = generate_corpus(&gaz, &templates, 1421, &noise, 42).unwrap();
    println!(
        "corpus: train {} dev {} test {} in {:?}",
        split.train.len(),
        split.dev.len(),
        split.test.len(),
        t0.elapsed()
    );
    let vocab = Vocabulary::build(&split.train);
    println!("vocab size {}", vocab.size());

    let max_len = 48;
    let cfg = TaggerConfig::teacher(vocab.size(), max_len, 1);
    let model = TaggerModel::init(cfg, vocab.clone()).unwrap();
    println!("teacher params {}", model.param_count());

    let tc = TrainConfig { learning_rate: lr, epochs, ..TrainConfig::teacher(11) };
    let t1 = Instant::now();
    let (teacher, log) = train(model, &split.train, &tc).unwrap();
    println!("teacher train {:?}; losses {:?}", t1.elapsed(), log.epoch_mean_loss);

    let t2 = Instant::now();
    let dev = score_model(&teacher, &split.dev).unwrap();
    println!(
        "teacher dev: f1 {:.4} p {:.4} r {:.4} tokacc {:.4} ({:?})",
        dev.micro_f1, dev.micro_precision, dev.micro_recall, dev.token_accuracy, t2.elapsed()
    );
    let test = score_model(&teacher, &split.test).unwrap();
    println!("teacher test: f1 {:.4} tokacc {:.4}", test.micro_f1, test.token_accuracy);

    // Student fine-tune-only baseline.
    let scfg = TaggerConfig::student(vocab.size(), max_len, 2);
    let smodel = TaggerModel::init(scfg, vocab.clone()).unwrap();
    println!("student params {}", smodel.param_count());
    let stc = TrainConfig { learning_rate: lr, ..TrainConfig::student(13) };
    let t3 = Instant::now();
    let (student, slog) = train(smodel, &split.train, &stc).unwrap();
    println!("student-ft train {:?}; losses {:?}", t3.elapsed(), slog.epoch_mean_loss);
    let sdev = score_model(&student, &split.dev).unwrap();
    println!("student-ft dev: f1 {:.4} tokacc {:.4}", sdev.micro_f1, sdev.token_accuracy);
}
