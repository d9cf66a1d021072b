use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use stockcast::neural::{Mode, NetworkConfig, NetworkParams};
use stockcast::sentiment::Lexicon;
use stockcast::synthetic::synthetic_market;
use stockcast::{bollinger, parse_price_csv, sma};

fn network(c: &mut Criterion) {
    let config = NetworkConfig {
        price_features: 9,
        tweet_features: 1,
        hidden: 32,
        dense: 32,
        dropout_p: 0.2,
    };
    let params = NetworkParams::init(config, 1).unwrap();
    let xp: Vec<Vec<f64>> = (0..7).map(|t| (0..9).map(|k| ((t * 9 + k) as f64).sin()).collect()).collect();
    let xt: Vec<Vec<f64>> = (0..7).map(|t| vec![(t as f64).cos()]).collect();

    c.bench_function("lstm forward h32 w7", |b| {
        b.iter(|| params.forward(black_box(&xp), black_box(&xt), Mode::Eval, 0).unwrap())
    });
    c.bench_function("lstm forward+backward h32 w7", |b| {
        b.iter(|| {
            let (pred, tape) = params.forward(black_box(&xp), black_box(&xt), Mode::Train, 3).unwrap();
            params.backward(&tape, 2.0 * (pred - 0.5)).unwrap()
        })
    });
}

fn indicators(c: &mut Criterion) {
    let prices = parse_price_csv(&synthetic_market(1000, 1.0, 1).prices_csv).unwrap();
    c.bench_function("sma20 1000 days", |b| b.iter(|| sma(black_box(&prices), 20).unwrap()));
    c.bench_function("bollinger20 1000 days", |b| {
        b.iter(|| bollinger(black_box(&prices), 20, 2.0).unwrap())
    });
}

fn sentiment(c: &mut Criterion) {
    let lexicon = Lexicon::bundled();
    let texts: Vec<String> = synthetic_market(50, 1.0, 2).tweets.into_iter().map(|t| t.text).collect();
    c.bench_function(&format!("score {} posts", texts.len()), |b| {
        b.iter(|| {
            texts
                .iter()
                .map(|t| lexicon.score(black_box(t)).unwrap().compound)
                .sum::<f64>()
        })
    });
}

criterion_group!(benches, network, indicators, sentiment);
criterion_main!(benches);
