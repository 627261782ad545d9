use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use vog_core::corpus::{generate_synthetic_corpus, SynthConfig};
use vog_core::crf::{log_partition, nll_loss, viterbi, Constraints, CrfParams};
use vog_core::encoder::EncoderConfig;
use vog_core::eval::rouge_l;
use vog_core::extraction::{Extractor, ModelVariant};
use vog_core::vocab::Vocab;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-2.0..2.0))
}

fn crf(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = CrfParams::zeros(3);
    params.transitions = random_matrix(&mut rng, 3, 3);
    let mut group = c.benchmark_group("crf");
    for n in [128, 512] {
        let emissions = random_matrix(&mut rng, n, 3);
        let gold: Vec<usize> = (0..n).map(|k| k % 3).collect();
        group.bench_with_input(BenchmarkId::new("log_partition", n), &n, |b, _| {
            b.iter(|| log_partition(black_box(emissions.view()), &params))
        });
        group.bench_with_input(BenchmarkId::new("nll_loss", n), &n, |b, _| {
            b.iter(|| nll_loss(black_box(emissions.view()), &params, &gold))
        });
        group.bench_with_input(BenchmarkId::new("viterbi_bio", n), &n, |b, _| {
            b.iter(|| viterbi(black_box(emissions.view()), &params, Constraints::Bio))
        });
    }
    group.finish();
}

fn extractor(c: &mut Criterion) {
    let config = SynthConfig {
        videos: 4,
        ..SynthConfig::default()
    };
    let videos = generate_synthetic_corpus(&config, 0).unwrap();
    let vocab = Vocab::build(
        videos
            .iter()
            .flat_map(|v| v.document.boxes.iter().flat_map(|b| b.text.chars()))
            .chain([',']),
    );
    let model = Extractor::new(ModelVariant::vsenet(), vocab.clone(), EncoderConfig::desk(vocab.len()), 0).unwrap();
    let seq = model.sequence(&videos[0].document);
    let example = model.example(&seq, &videos[0].annotations).unwrap();
    let mut group = c.benchmark_group("extractor");
    group.bench_function(BenchmarkId::new("predict", seq.len()), |b| {
        b.iter(|| model.extract(black_box(&seq)).unwrap())
    });
    group.bench_function(BenchmarkId::new("loss_and_gradient", seq.len()), |b| {
        b.iter(|| model.tagger.loss(black_box(&example), None).unwrap())
    });
    group.finish();
}

fn rouge(c: &mut Criterion) {
    let a: String = "今天我们来讲一下视频大纲生成的方法".repeat(2);
    let b: String = "我们讲视频大纲生成方法".repeat(2);
    c.bench_function("rouge_l", |bench| bench.iter(|| rouge_l(black_box(&a), black_box(&b))));
}

criterion_group!(benches, crf, extractor, rouge);
criterion_main!(benches);
