/// Counts tokens for usage accounting.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// `ceil(utf8_bytes / 4)`. Deterministic for any script; live backends
/// report their own usage instead.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuarterByteCounter;

impl TokenCounter for QuarterByteCounter {
    fn count(&self, text: &str) -> usize {
        text.len().div_ceil(4)
    }
}

/// Token count under the default counter.
pub fn count_tokens(text: &str) -> usize {
    QuarterByteCounter.count(text)
}
