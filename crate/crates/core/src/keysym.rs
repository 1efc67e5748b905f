//! X11 keysym constants carried in KeyEvent messages.

pub const LEFT: u32 = 0xFF51;
pub const UP: u32 = 0xFF52;
pub const RIGHT: u32 = 0xFF53;
pub const DOWN: u32 = 0xFF54;
pub const SPACE: u32 = 0x0020;
pub const RETURN: u32 = 0xFF0D;
pub const ESCAPE: u32 = 0xFF1B;

/// Keysym for a printable ASCII character (Latin-1 keysyms equal their codepoint).
pub fn from_ascii(c: char) -> Option<u32> {
    (c.is_ascii_graphic() || c == ' ').then_some(c as u32)
}

/// Parses a symbolic name (`left`, `space`, ...), a single character, or a
/// hex/decimal code such as `0xFF51`.
pub fn parse(name: &str) -> Option<u32> {
    let lower = name.trim().to_ascii_lowercase();
    let named = match lower.as_str() {
        "left" => Some(LEFT),
        "up" => Some(UP),
        "right" => Some(RIGHT),
        "down" => Some(DOWN),
        "space" => Some(SPACE),
        "return" | "enter" => Some(RETURN),
        "escape" | "esc" => Some(ESCAPE),
        _ => None,
    };
    if named.is_some() {
        return named;
    }
    if let Some(hex) = lower.strip_prefix("0x") {
        return u32::from_str_radix(hex, 16).ok();
    }
    let mut chars = name.trim().chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if !c.is_ascii_digit() => from_ascii(c),
        _ => lower.parse().ok(),
    }
}
