//! Prints the built-in toy preset as TOML (the source of `configs/toy.toml`).

fn main() {
    print!("{}", rangeloc::config::ExperimentConfig::toy().to_toml());
}
