/// Shortest decimal text that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
