//! Writes a synthetic corpus with planted frames and rulers.
//!
//! `cargo run -p gebi-core --example make_corpus -- <out-dir> [n] [seed]`

use gebi_core::synth::{generate_corpus, write_corpus, CorpusSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(out) = args.next() else {
        eprintln!("usage: make_corpus <out-dir> [n] [seed]");
        std::process::exit(2);
    };
    let mut spec = CorpusSpec {
        ruler_fraction: 0.25,
        ..Default::default()
    };
    if let Some(n) = args.next() {
        spec.n = n.parse().expect("n must be an integer");
    }
    if let Some(seed) = args.next() {
        spec.seed = seed.parse().expect("seed must be an integer");
    }
    match write_corpus(&generate_corpus(&spec), out.as_ref()) {
        Ok(path) => println!("{}", path.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
