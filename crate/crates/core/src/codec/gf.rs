//! GF(2^8) arithmetic with field polynomial x^8 + x^4 + x^3 + x^2 + 1
//! (0x11D) and generator element α = 2. Log/antilog tables are built at
//! compile time.

const PRIMITIVE_POLY: u16 = 0x11D;

static TABLES: Tables = build_tables();

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

const fn build_tables() -> Tables {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= PRIMITIVE_POLY;
        }
        i += 1;
    }
    // Duplicate so products of two logs index without a modulo.
    let mut j = 255;
    while j < 512 {
        exp[j] = exp[j - 255];
        j += 1;
    }
    Tables { exp, log }
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        0
    } else {
        TABLES.exp[TABLES.log[a as usize] as usize + TABLES.log[b as usize] as usize]
    }
}

#[inline]
pub fn div(a: u8, b: u8) -> u8 {
    debug_assert!(b != 0, "division by zero in GF(256)");
    if a == 0 {
        0
    } else {
        let idx = TABLES.log[a as usize] as usize + 255 - TABLES.log[b as usize] as usize;
        TABLES.exp[idx]
    }
}

/// α^power for any integer power (taken mod 255).
#[inline]
pub fn alpha_pow(power: i32) -> u8 {
    let mut p = power % 255;
    if p < 0 {
        p += 255;
    }
    TABLES.exp[p as usize]
}

/// Discrete log base α. Panics on zero.
#[inline]
pub fn log(a: u8) -> u8 {
    debug_assert!(a != 0, "log of zero in GF(256)");
    TABLES.log[a as usize]
}
