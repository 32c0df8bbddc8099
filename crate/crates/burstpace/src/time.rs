//! Integer nanosecond time base and exact decimal-second formatting.
//!
//! All simulation and planning arithmetic runs on `u64` nanoseconds so that
//! event ordering never depends on floating point rounding. Seconds only
//! appear at the text boundary (CLI flags, file fields, printed output) and
//! are converted with exact decimal parsing/formatting.

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

/// Parses a non-negative decimal seconds literal (e.g. `0.002`, `1.5e-3` is
/// not accepted, plain decimal only) into nanoseconds, exactly.
///
/// At most nine fractional digits are allowed; anything finer than a
/// nanosecond is rejected rather than silently rounded.
pub fn parse_secs(text: &str) -> Result<u64, String> {
    let s = text.trim();
    if s.is_empty() {
        return Err("empty duration".into());
    }
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int_part.chars().any(|c| !c.is_ascii_digit()) && !(int_part.is_empty() && !frac_part.is_empty()) {
        return Err(format!("invalid duration `{s}`"));
    }
    if frac_part.len() > 9 || frac_part.chars().any(|c| !c.is_ascii_digit()) {
        return Err(format!("invalid duration `{s}` (up to 9 fractional digits)"));
    }
    let whole: u64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| format!("invalid duration `{s}`"))?
    };
    let mut frac: u64 = 0;
    if !frac_part.is_empty() {
        frac = frac_part.parse().map_err(|_| format!("invalid duration `{s}`"))?;
        frac *= 10u64.pow(9 - frac_part.len() as u32);
    }
    whole
        .checked_mul(NANOS_PER_SEC)
        .and_then(|w| w.checked_add(frac))
        .ok_or_else(|| format!("duration `{s}` out of range"))
}

/// Formats nanoseconds as decimal seconds with no trailing zeros.
pub fn format_secs(ns: u64) -> String {
    let whole = ns / NANOS_PER_SEC;
    let frac = ns % NANOS_PER_SEC;
    if frac == 0 {
        return format!("{whole}");
    }
    let mut f = format!("{frac:09}");
    while f.ends_with('0') {
        f.pop();
    }
    format!("{whole}.{f}")
}

/// Seconds as `f64`, for tolerance comparisons only.
pub fn secs_f64(ns: u64) -> f64 {
    ns as f64 / NANOS_PER_SEC as f64
}

/// Transmission time of `bytes` over a `bandwidth_bps` link, rounded up to
/// the next nanosecond.
pub fn serialization_ns(bytes: u64, bandwidth_bps: u64) -> u64 {
    assert!(bandwidth_bps > 0, "zero bandwidth");
    let bits = (bytes as u128) * 8 * NANOS_PER_SEC as u128;
    bits.div_ceil(bandwidth_bps as u128) as u64
}

/// Rounds `ns` up to the next multiple of `step` (`step > 0`).
pub fn round_up_to(ns: u64, step: u64) -> u64 {
    assert!(step > 0);
    ns.div_ceil(step) * step
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        assert_eq!(parse_secs("0.002").unwrap(), 2_000_000);
        assert_eq!(parse_secs("0.001953125").unwrap(), 1_953_125);
        assert_eq!(parse_secs("3").unwrap(), 3 * NANOS_PER_SEC);
        assert_eq!(parse_secs(".5").unwrap(), 500_000_000);
        assert_eq!(format_secs(158_000_000), "0.158");
        assert_eq!(format_secs(1_953_125), "0.001953125");
        assert_eq!(format_secs(0), "0");
        assert_eq!(format_secs(3_246_000_000), "3.246");
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_secs("").is_err());
        assert!(parse_secs("abc").is_err());
        assert!(parse_secs("1.0000000001").is_err());
        assert!(parse_secs("-1").is_err());
    }

    #[test]
    fn serialization_is_exact_for_the_reference_link() {
        // 128 bytes over 524288 bit/s is exactly 1/512 s.
        assert_eq!(serialization_ns(128, 524288), 1_953_125);
        assert_eq!(serialization_ns(256, 524288), 3_906_250);
        // 128 bytes over 512000 bit/s is exactly 2 ms.
        assert_eq!(serialization_ns(128, 512000), 2_000_000);
    }
}
