//! Number formatting shared by every CSV writer.

/// Shortest representation that parses back to the identical `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
