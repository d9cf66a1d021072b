//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Run with `cargo test -p stockcast-core --test acceptance`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::rc::Rc;
use std::time::{Duration, Instant};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stockcast::collector::{
    Backoff, Collector, CollectorError, CollectorState, MemoryStateStore, MockScript, MockTransport,
    RateBudget, SearchPage, SimClock, StateStore, Transport, TransportError,
};
use stockcast::features::{
    make_windows, split, window_count, Branch, FeatureColumn, FeatureTable, DEFAULT_SPLIT,
};
use stockcast::neural::{Mode, NetworkConfig, NetworkParams};
use stockcast::pipeline::{self, build_features, RunConfig, RunDir};
use stockcast::sentiment::Lexicon;
use stockcast::synthetic::synthetic_market;
use stockcast::trainer::{evaluate, train};
use stockcast::tweet_store::{dedup_exact, parse_tweet_jsonl, TweetRecord};
use stockcast::{bollinger, sma, PriceBar, PriceSeries};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

fn grad_check_error(seed: u64) -> f64 {
    let c = NetworkConfig {
        price_features: 3,
        tweet_features: 3,
        hidden: 4,
        dense: 4,
        dropout_p: 0.2,
    };
    let params = NetworkParams::init(c, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let mut window = || -> Vec<Vec<f64>> {
        (0..3)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    };
    let (xp, xt) = (window(), window());
    let y = 0.25;
    // Train mode with a fixed seed: the dropout masks are identical in
    // every evaluation, so the loss is a smooth function of the weights.
    let loss = |p: &NetworkParams| {
        let (pred, _) = p.forward(&xp, &xt, Mode::Train, seed).unwrap();
        0.5 * (pred - y) * (pred - y)
    };
    let (pred, tape) = params.forward(&xp, &xt, Mode::Train, seed).unwrap();
    let grad = params.backward(&tape, pred - y).unwrap();
    let eps = 1e-5;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for t in 0..grad.tensors().len() {
        for k in 0..grad.tensors()[t].len() {
            let orig = probe.tensors()[t][k];
            probe.tensors_mut()[t][k] = orig + eps;
            let up = loss(&probe);
            probe.tensors_mut()[t][k] = orig - eps;
            let down = loss(&probe);
            probe.tensors_mut()[t][k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grad.tensors()[t][k];
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

fn gradient_correctness() -> Outcome {
    let worst = (0..20).map(grad_check_error).fold(0.0, f64::max);
    outcome(worst <= 1e-4, format!("max relative error {worst:.3e} over 20 seeds"))
}

// ---------------------------------------------------------------- 2

fn random_series(seed: u64, days: usize) -> PriceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
    let mut close = 100.0;
    let bars = (0..days)
        .map(|d| {
            let open: f64 = close * (1.0 + rng.random_range(-0.03..0.03));
            close = open * (1.0 + rng.random_range(-0.05..0.05));
            let high = open.max(close) * (1.0 + rng.random_range(0.0..0.02));
            let low = open.min(close) * (1.0 - rng.random_range(0.0..0.02));
            PriceBar {
                date: start + Days::new(d as u64),
                open,
                high,
                low,
                close,
                adj_close: close,
                volume: rng.random_range(0..10_000_000),
            }
        })
        .collect();
    PriceSeries::new(bars).unwrap()
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(f64::MIN_POSITIVE)
}

fn indicator_oracle() -> Outcome {
    let mut checked = 0usize;
    let mut bad = Vec::new();
    for seed in 0..5u64 {
        let s = random_series(seed, 300);
        let closes = s.closes();
        let tp: Vec<f64> = s.bars().iter().map(|b| (b.high + b.low + b.close) / 3.0).collect();
        for n in [5usize, 20, 30] {
            let m = 2.0;
            let sm = sma(&s, n).unwrap();
            let bb = bollinger(&s, n, m).unwrap();
            for t in 0..300 {
                if t + 1 < n {
                    if sm.get(t).is_some() || bb.upper.get(t).is_some() {
                        bad.push(format!("seed {seed} n {n} t {t}: value inside warmup"));
                    }
                    continue;
                }
                let w = t + 1 - n..=t;
                let mean_c = closes[w.clone()].iter().sum::<f64>() / n as f64;
                let mean_tp = tp[w.clone()].iter().sum::<f64>() / n as f64;
                let var = tp[w].iter().map(|x| (x - mean_tp).powi(2)).sum::<f64>() / n as f64;
                let sd = var.sqrt();
                let pairs = [
                    (sm.get(t), mean_c),
                    (bb.mid.get(t), mean_c),
                    (bb.upper.get(t), mean_tp + m * sd),
                    (bb.lower.get(t), mean_tp - m * sd),
                ];
                for (got, want) in pairs {
                    checked += 1;
                    if !got.is_some_and(|g| rel_close(g, want)) {
                        bad.push(format!("seed {seed} n {n} t {t}: {got:?} vs {want}"));
                    }
                }
            }
        }
    }
    let detail = match bad.first() {
        Some(b) => format!("{} of {checked} values off, first: {b}", bad.len()),
        None => format!("{checked} values within 1e-9 relative"),
    };
    outcome(bad.is_empty(), detail)
}

// ---------------------------------------------------------------- 3

fn sentiment_oracle() -> Outcome {
    let text = include_str!("fixtures/sentiment_reference.tsv");
    let lex = Lexicon::bundled();
    let mut rows = 0;
    let mut worst = 0.0f64;
    let mut non_neutral = 0;
    let mut sign_ok = 0;
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        let reference: f64 = fields[1].parse().unwrap();
        let got = lex.score(fields[0]).unwrap().compound;
        rows += 1;
        worst = worst.max((got - reference).abs());
        if reference.abs() >= 0.05 {
            non_neutral += 1;
            if got.signum() == reference.signum() && got != 0.0 {
                sign_ok += 1;
            }
        }
    }
    outcome(
        rows == 20 && worst <= 0.05 && sign_ok == non_neutral,
        format!("{rows} sentences, max |diff| {worst:.4}, sign {sign_ok}/{non_neutral}"),
    )
}

// ---------------------------------------------------------------- 4

fn table(rows: usize) -> FeatureTable {
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let col = |name: &str, branch| FeatureColumn {
        name: name.into(),
        branch,
        values: (0..rows).map(|r| r as f64).collect(),
    };
    FeatureTable {
        dates: (0..rows).map(|r| start + Days::new(r as u64)).collect(),
        columns: vec![col("close", Branch::Price), col("mean_compound", Branch::Tweet)],
        target: (0..rows).map(|r| r as f64 + 1.0).collect(),
    }
}

fn windowing_arithmetic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = Vec::new();
    for _ in 0..200 {
        let rows = rng.random_range(1..400usize);
        let w = rng.random_range(1..=rows.min(40));
        let stride = rng.random_range(1..10usize);
        let expected = (rows - w) / stride + 1;
        let got = make_windows(&table(rows), w, stride).unwrap().len();
        if got != expected || window_count(rows, w, stride) != expected {
            bad.push(format!("rows {rows} W {w} stride {stride}: {got} != {expected}"));
        }
    }
    let examples = make_windows(&table(106), 7, 1).unwrap();
    let s = split(examples, DEFAULT_SPLIT, Some(1)).unwrap();
    let sizes = (s.train.len(), s.val.len(), s.test.len());
    let train_max = s.train.iter().map(|e| e.date).max().unwrap();
    let test_min = s.test.iter().map(|e| e.date).min().unwrap();
    let ok = bad.is_empty() && sizes == (63, 7, 30) && train_max < test_min;
    outcome(
        ok,
        format!(
            "200 triples, {} mismatched; split {}/{}/{}; train max {train_max} < test min {test_min}",
            bad.len(),
            sizes.0,
            sizes.1,
            sizes.2
        ),
    )
}

// ---------------------------------------------------------------- 5

fn write_market(dir: &Path, days: usize, noise: f64, seed: u64) -> RunConfig {
    let m = synthetic_market(days, noise, seed);
    let prices = dir.join("prices.csv");
    let tweets = dir.join("posts.jsonl");
    fs::write(&prices, &m.prices_csv).unwrap();
    fs::write(&tweets, m.tweets_jsonl()).unwrap();
    RunConfig {
        price_csv: Some(prices),
        tweets_jsonl: Some(tweets),
        output_dir: dir.join("runs"),
        ..RunConfig::default()
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    (xs[(n - 1) / 2] + xs[n / 2]) / 2.0
}

fn synthetic_signal() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let base = RunConfig {
        include_attribute_features: false,
        hidden: 16,
        dense: 16,
        epochs: 60,
        ..write_market(dir.path(), 300, 1.0, 7)
    };
    let mut with = Vec::new();
    let mut without = Vec::new();
    for seed in 0..10u64 {
        for (tweets, out) in [(true, &mut with), (false, &mut without)] {
            let cfg = RunConfig {
                include_tweet_features: tweets,
                seed,
                ..base.clone()
            };
            let fs = build_features(&cfg).unwrap();
            let scaled = fs.scaler.transform(&fs.table).unwrap();
            let examples = make_windows(&scaled, cfg.window, cfg.stride).unwrap();
            let s = split(examples, cfg.split_fractions(), Some(seed)).unwrap();
            let tc = cfg.train_config();
            let init = tc.init_network(&s.train[0]).unwrap();
            let trained = train(&tc, init, &s.train, &s.val).unwrap();
            out.push(evaluate(&trained.params, &s.test, None).unwrap().mse);
        }
    }
    let (on, off) = (median(with), median(without));
    let margin = (off - on) / off;
    outcome(
        margin >= 0.05,
        format!("median test MSE {on:.5} with posts, {off:.5} without, margin {:.1}%", margin * 100.0),
    )
}

// ---------------------------------------------------------------- 6

fn overfit_sanity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let base = RunConfig {
        hidden: 16,
        dense: 16,
        epochs: 200,
        learning_rate: 0.1,
        decay: 1.0,
        dropout: 0.0,
        ..write_market(dir.path(), 300, 1.0, 11)
    };
    let fs = build_features(&base).unwrap();
    let scaled = fs.scaler.transform(&fs.table).unwrap();
    let examples = make_windows(&scaled, base.window, base.stride).unwrap();
    let s = split(examples, base.split_fractions(), None).unwrap();
    // Ten windows spread across the training block.
    let step = s.train.len() / 10;
    let subset: Vec<_> = s.train.iter().step_by(step).take(10).cloned().collect();
    let mut finals = Vec::new();
    for seed in 0..10u64 {
        let tc = RunConfig { seed, ..base.clone() }.train_config();
        let trained = train(&tc, tc.init_network(&subset[0]).unwrap(), &subset, &subset).unwrap();
        finals.push(trained.records.last().unwrap().train_mse);
    }
    let below = finals.iter().filter(|m| **m < 1e-3).count();
    let worst = finals.iter().copied().fold(0.0, f64::max);
    outcome(below >= 9, format!("{below}/10 seeds below 1e-3, worst {worst:.2e}"))
}

// ---------------------------------------------------------------- 7

/// Records the simulated time of every request and spends a random
/// latency on each.
struct TimedTransport {
    inner: MockTransport,
    clock: SimClock,
    rng: ChaCha8Rng,
    log: Rc<RefCell<Vec<Duration>>>,
}

impl Transport for TimedTransport {
    fn search(&mut self, query: &str, cursor: Option<&str>) -> Result<SearchPage, TransportError> {
        self.log.borrow_mut().push(stockcast::collector::Clock::now(&self.clock));
        self.clock.advance(Duration::from_millis(self.rng.random_range(0..3000)));
        self.inner.search(query, cursor)
    }
}

/// Fails the listed save attempts, standing in for a process killed
/// between a page write and the state write.
struct CrashingStore {
    inner: MemoryStateStore,
    attempts: usize,
    crash_on: Vec<usize>,
}

impl StateStore for CrashingStore {
    fn save(&mut self, state: &CollectorState) -> Result<(), CollectorError> {
        self.attempts += 1;
        if self.crash_on.contains(&self.attempts) {
            return Err(CollectorError::State("killed".into()));
        }
        self.inner.save(state)
    }

    fn load(&mut self) -> Result<Option<CollectorState>, CollectorError> {
        self.inner.load()
    }
}

fn max_in_any_window(times: &[Duration], window: Duration) -> usize {
    // A busiest window can always be slid to start at some request.
    times
        .iter()
        .map(|&start| times.iter().filter(|&&t| t >= start && t < start + window).count())
        .max()
        .unwrap_or(0)
}

struct Schedule {
    script: MockScript,
    page_size: usize,
}

fn schedule(seed: u64) -> Schedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pages = rng.random_range(250..500usize);
    let page_size = rng.random_range(1..6usize);
    let mut failures: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for _ in 0..rng.random_range(0..6) {
        failures
            .entry(rng.random_range(0..pages))
            .or_default()
            .push("transient".into());
    }
    Schedule {
        script: MockScript {
            pages: vec![page_size; pages],
            failures,
        },
        page_size,
    }
}

fn rate_limit_safety() -> Outcome {
    let mut worst = 0;
    let mut problems = Vec::new();
    let mut fetches = 0;
    for seed in 0..10u64 {
        let Schedule { script, page_size } = schedule(seed);
        let pages = script.pages.len();
        let clock = SimClock::new();
        let log = Rc::new(RefCell::new(Vec::new()));
        let mut transport = TimedTransport {
            inner: MockTransport::new(script, "tsla"),
            clock: clock.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed + 1000),
            log: log.clone(),
        };
        let truth = transport.inner.ground_truth();
        let crash_at = ChaCha8Rng::seed_from_u64(seed + 2000).random_range(1..pages);
        let mut store = CrashingStore {
            inner: MemoryStateStore::default(),
            attempts: 0,
            crash_on: vec![crash_at],
        };
        let mut sink: Vec<TweetRecord> = Vec::new();
        let mut budget = RateBudget::default();
        let mut sim = clock.clone();
        let mut crashes = 0;
        let result = loop {
            let r = Collector {
                transport: &mut transport,
                sink: &mut sink,
                store: &mut store,
                budget: &mut budget,
                clock: &mut sim,
            }
            .supervise("tsla", 10, Backoff::default());
            match r {
                Err(CollectorError::State(_)) if crashes < 3 => crashes += 1,
                other => break other,
            }
        };
        let times = log.borrow().clone();
        fetches += times.len();
        let peak = max_in_any_window(&times, Duration::from_secs(15 * 60));
        worst = worst.max(peak);
        if peak > 180 {
            problems.push(format!("schedule {seed}: {peak} fetches in one window"));
        }
        match result {
            Ok(state) if state.complete => {}
            other => problems.push(format!("schedule {seed}: did not complete: {other:?}")),
        }
        let deduped = dedup_exact(sink.clone());
        if deduped != truth {
            problems.push(format!("schedule {seed}: {} of {} records kept", deduped.len(), truth.len()));
        }
        let duplicates = sink.len() - deduped.len();
        if duplicates > page_size * crashes {
            problems.push(format!("schedule {seed}: {duplicates} duplicates after {crashes} crash"));
        }
        if crashes != 1 {
            problems.push(format!("schedule {seed}: expected one crash, saw {crashes}"));
        }
    }
    let detail = match problems.first() {
        Some(p) => format!("{} problems, first: {p}", problems.len()),
        None => format!("10 schedules, {fetches} fetches, peak {worst} per 15 min; crash replay exact"),
    };
    outcome(problems.is_empty(), detail)
}

// ---------------------------------------------------------------- 8

fn full_run(config: &RunConfig, dir: &Path) -> RunDir {
    let run = RunDir::create(&config.output_dir, Some(dir)).unwrap();
    pipeline::featurize(config, &run).unwrap();
    pipeline::train(&run, &[]).unwrap();
    pipeline::evaluate(&run).unwrap();
    run
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        hidden: 32,
        dense: 32,
        epochs: 20,
        seed: 3,
        ..write_market(dir.path(), 300, 1.0, 21)
    };
    let a = full_run(&config, &dir.path().join("a"));
    let b = full_run(&config, &dir.path().join("b"));
    let files = [pipeline::CURVE_FILE, pipeline::PREDICTIONS_FILE, pipeline::CHECKPOINT_FILE];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| fs::read(a.file(f)).unwrap() != fs::read(b.file(f)).unwrap())
        .collect();
    let detail = if differing.is_empty() {
        format!("{} identical across two runs", files.join(", "))
    } else {
        format!("differ: {}", differing.join(", "))
    };
    outcome(differing.is_empty(), detail)
}

// ---------------------------------------------------------------- 9

fn scaler_params(config: &RunConfig, dir: &Path) -> Vec<u8> {
    let run = RunDir::create(&config.output_dir, Some(dir)).unwrap();
    pipeline::featurize(config, &run).unwrap();
    fs::read(run.file(pipeline::SCALER_FILE)).unwrap()
}

fn mutate_prices(csv: &str, from: NaiveDate, only: Option<NaiveDate>) -> String {
    let mut lines = csv.lines();
    let mut out = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let date = NaiveDate::parse_from_str(f[0], "%Y-%m-%d").unwrap();
        if date >= from && only.is_none_or(|d| d == date) {
            let p: Vec<f64> = f[1..6].iter().map(|x| x.parse::<f64>().unwrap() * 1.37).collect();
            let v: u64 = f[6].parse().unwrap();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                f[0],
                p[0],
                p[1],
                p[2],
                p[3],
                p[4],
                v * 2 + 1
            ));
        } else {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

fn mutate_posts(jsonl: &str, from: NaiveDate) -> String {
    let mut records = parse_tweet_jsonl(jsonl).unwrap();
    for r in &mut records {
        if r.date() >= from {
            r.text = "catastrophic collapse, horrible and awful".into();
            r.follower_count = r.follower_count * 50 + 7;
            r.favorite_count += 1000;
            r.retweet_count += 300;
            r.verified = !r.verified;
        }
    }
    let extra_date = from + Days::new(3);
    let mut extra = records[records.len() - 1].clone();
    extra.created_at = extra_date.and_hms_opt(12, 0, 0).unwrap().and_utc();
    extra.text = "wonderful".into();
    records.push(extra);
    records.iter().map(|r| r.to_json_line() + "\n").collect()
}

fn scaler_no_leakage() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = write_market(dir.path(), 300, 1.0, 31);
    let prices_path = config.price_csv.clone().unwrap();
    let posts_path = config.tweets_jsonl.clone().unwrap();
    let prices = fs::read_to_string(&prices_path).unwrap();
    let posts = fs::read_to_string(&posts_path).unwrap();
    let baseline = scaler_params(&config, &dir.path().join("base"));

    let fs0 = build_features(&config).unwrap();
    let examples = make_windows(&fs0.table, config.window, config.stride).unwrap();
    let s = split(examples, config.split_fractions(), None).unwrap();
    // Every row any test window reads, from the first one onwards.
    let test_start = fs0.table.dates[s.test[0].end_row + 1 - config.window];

    let mut mutations: Vec<(String, String, String)> = vec![
        ("all test prices".into(), mutate_prices(&prices, test_start, None), posts.clone()),
        ("all test posts".into(), prices.clone(), mutate_posts(&posts, test_start)),
    ];
    let test_days: Vec<NaiveDate> = fs0.table.dates.iter().copied().filter(|d| *d >= test_start).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let d = test_days[rng.random_range(0..test_days.len())];
        mutations.push((format!("price row {d}"), mutate_prices(&prices, test_start, Some(d)), posts.clone()));
    }

    let mut changed = Vec::new();
    for (k, (name, p, t)) in mutations.iter().enumerate() {
        fs::write(&prices_path, p).unwrap();
        fs::write(&posts_path, t).unwrap();
        if scaler_params(&config, &dir.path().join(format!("m{k}"))) != baseline {
            changed.push(name.clone());
        }
    }
    // Sentinel for the sentinel: a training-region change must show up.
    let train_day = fs0.table.dates[0];
    fs::write(&prices_path, mutate_prices(&prices, train_day, Some(train_day))).unwrap();
    fs::write(&posts_path, &posts).unwrap();
    let sensitive = scaler_params(&config, &dir.path().join("train")) != baseline;

    let n = mutations.len();
    let detail = if changed.is_empty() && sensitive {
        format!("{n} test-region mutations from {test_start} left scaler.params unchanged")
    } else if !sensitive {
        "a training-region change did not alter scaler.params".to_string()
    } else {
        format!("scaler.params changed after: {}", changed.join(", "))
    };
    outcome(changed.is_empty() && sensitive, detail)
}

// ----------------------------------------------------------------

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 gradient correctness", Duration::from_secs(10), gradient_correctness),
        ("2 indicator oracle", Duration::from_secs(1), indicator_oracle),
        ("3 sentiment oracle", Duration::from_secs(1), sentiment_oracle),
        ("4 windowing and split", Duration::from_secs(1), windowing_arithmetic),
        ("5 synthetic signal", Duration::from_secs(300), synthetic_signal),
        ("6 overfit sanity", Duration::from_secs(120), overfit_sanity),
        ("7 rate-limit safety", Duration::from_secs(5), rate_limit_safety),
        ("8 determinism", Duration::from_secs(120), determinism),
        ("9 scaler no-leakage", Duration::from_secs(1), scaler_no_leakage),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} ({:.2}s of {}s{})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
