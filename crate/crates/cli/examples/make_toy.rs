//! Lay down the synthetic two-topic fixture so the pipeline can be tried
//! end to end without a real corpus:
//!
//! ```text
//! cargo run -p incongruity-cli --example make_toy -- /tmp/toy
//! cargo run -p incongruity-cli -- pipeline --config /tmp/toy/run.toml
//! ```

use std::fs;
use std::path::PathBuf;

use incongruity::toy::{toy_corpus, write_toy_corpus, write_toy_embeddings, ToyConfig};

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .expect("usage: make_toy <directory>");
    fs::create_dir_all(&dir).expect("create target directory");

    let toy = ToyConfig::default();
    let corpus = dir.join("corpus.jsonl");
    let embeddings = dir.join("embeddings.txt");
    write_toy_corpus(&corpus, &toy_corpus(&toy)).expect("write corpus");
    write_toy_embeddings(&embeddings, &toy, 300).expect("write embeddings");

    let config = format!(
        r#"corpus = "{}"
embeddings = "{}"
output_dir = "{}"
seed = 42

[data]
min_count = 1
gen_types = ["III", "IV"]

[data.segment]
small_paragraph = 4

[training]
seed = 42
"#,
        corpus.display(),
        embeddings.display(),
        dir.join("out").display()
    );
    let run = dir.join("run.toml");
    fs::write(&run, config).expect("write run config");
    println!("wrote {}, {} and {}", corpus.display(), embeddings.display(), run.display());
}
