//! Bundled sample text.

const PREAMBLE: &str = include_str!("../fixtures/preamble.txt");

/// The second paragraph of the US Declaration of Independence, single-spaced.
pub fn preamble() -> &'static str {
    PREAMBLE.trim_end()
}
