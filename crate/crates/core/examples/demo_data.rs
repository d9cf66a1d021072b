//! Writes a synthetic `prices.csv` and `posts.jsonl` into the given
//! directory: `cargo run -p stockcast-core --example demo_data -- DIR [DAYS] [SEED]`.

use std::path::PathBuf;

use stockcast::synthetic::synthetic_market;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "demo".into()));
    let days = args.next().map_or(300, |s| s.parse().expect("DAYS is a number"));
    let seed = args.next().map_or(7, |s| s.parse().expect("SEED is a number"));
    let market = synthetic_market(days, 1.0, seed);
    std::fs::create_dir_all(&dir).expect("create output directory");
    std::fs::write(dir.join("prices.csv"), &market.prices_csv).expect("write prices.csv");
    std::fs::write(dir.join("posts.jsonl"), market.tweets_jsonl()).expect("write posts.jsonl");
    println!("{} trading days, {} posts in {}", days, market.tweets.len(), dir.display());
}
