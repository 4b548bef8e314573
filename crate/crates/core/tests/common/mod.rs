/// Rounds `x` to `t` significant bits (ties to even) by integer manipulation
/// of its significand. Independent of the library's scaling approach.
pub fn chop_oracle(x: f64, t: u32) -> f64 {
    if !x.is_finite() || x == 0.0 || t >= 53 {
        return x;
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1.0 } else { 1.0 };
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    // x = m * 2^e with m an integer
    let (m, e) = if biased == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), biased - 1075)
    };
    let len = 64 - m.leading_zeros();
    if len <= t {
        return x;
    }
    let shift = len - t;
    let q = m >> shift;
    let rem = m & ((1u64 << shift) - 1);
    let half = 1u64 << (shift - 1);
    let q = if rem > half || (rem == half && q & 1 == 1) {
        q + 1
    } else {
        q
    };
    sign * q as f64 * pow2(e + shift as i32)
}

fn pow2(k: i32) -> f64 {
    if k >= -1022 {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (k + 1074))
    }
}

#[allow(dead_code)]
pub fn random_double(rng: &mut impl rand::Rng) -> f64 {
    loop {
        let x = f64::from_bits(rng.gen::<u64>());
        if x.is_finite() {
            return x;
        }
    }
}

/// Smallest magnitude that rounds past `f64::MAX` at `t < 53` bits, `2^1024 - 2^(1023-t)`.
/// The tie itself rounds up, since `2^1024` has the even significand.
#[allow(dead_code)]
pub fn overflow_threshold(t: u32) -> f64 {
    let top = 2f64.powi(1023);
    top + (top - 2f64.powi(1023 - t as i32))
}
