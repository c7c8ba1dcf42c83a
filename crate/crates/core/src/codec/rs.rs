//! RS(20,16) over GF(2^8): 16 payload bytes, 4 parity bytes, corrects up
//! to 2 byte errors per unit. Generator polynomial has roots α^0..α^3.
//!
//! The decoder is a direct Peterson–Gorenstein–Zierler solver for ν ≤ 2,
//! followed by full re-syndrome verification so that uncorrectable
//! patterns are reported rather than silently miscorrected.

use super::gf;

pub const PAYLOAD_LEN: usize = 16;
pub const PARITY_LEN: usize = 4;
pub const UNIT_LEN: usize = PAYLOAD_LEN + PARITY_LEN;

/// Generator polynomial Π_{i=0..3} (x + α^i), coefficients in descending
/// degree. The leading coefficient is 1.
const GENERATOR: [u8; PARITY_LEN + 1] = [1, 15, 54, 120, 64];

/// Append 4 parity bytes to a 16-byte payload (systematic encoding).
pub fn encode(payload: &[u8; PAYLOAD_LEN]) -> [u8; UNIT_LEN] {
    let mut unit = [0u8; UNIT_LEN];
    unit[..PAYLOAD_LEN].copy_from_slice(payload);
    // Long division of payload(x) · x^4 by the generator; the remainder
    // accumulates in the parity positions.
    let mut rem = [0u8; PARITY_LEN];
    for &byte in payload {
        let feedback = byte ^ rem[0];
        rem.rotate_left(1);
        rem[PARITY_LEN - 1] = 0;
        if feedback != 0 {
            for (r, &g) in rem.iter_mut().zip(&GENERATOR[1..]) {
                *r ^= gf::mul(g, feedback);
            }
        }
    }
    unit[PAYLOAD_LEN..].copy_from_slice(&rem);
    unit
}

/// Correct up to 2 byte errors and return the payload, or `None` when the
/// unit is uncorrectable.
pub fn decode(unit: &[u8; UNIT_LEN]) -> Option<[u8; PAYLOAD_LEN]> {
    let syndromes = compute_syndromes(unit);
    if syndromes == [0; PARITY_LEN] {
        let mut payload = [0u8; PAYLOAD_LEN];
        payload.copy_from_slice(&unit[..PAYLOAD_LEN]);
        return Some(payload);
    }

    let mut corrected = *unit;
    if !try_correct(&mut corrected, &syndromes) {
        return None;
    }
    // Accept only if the corrected word is a true codeword.
    if compute_syndromes(&corrected) != [0; PARITY_LEN] {
        return None;
    }
    let mut payload = [0u8; PAYLOAD_LEN];
    payload.copy_from_slice(&corrected[..PAYLOAD_LEN]);
    Some(payload)
}

/// S_j = r(α^j) for j = 0..3, with byte i holding the coefficient of
/// x^(19−i).
fn compute_syndromes(unit: &[u8; UNIT_LEN]) -> [u8; PARITY_LEN] {
    let mut syndromes = [0u8; PARITY_LEN];
    for (j, s) in syndromes.iter_mut().enumerate() {
        let x = gf::alpha_pow(j as i32);
        let mut acc = 0u8;
        for &byte in unit {
            acc = gf::mul(acc, x) ^ byte;
        }
        *s = acc;
    }
    syndromes
}

fn try_correct(unit: &mut [u8; UNIT_LEN], s: &[u8; PARITY_LEN]) -> bool {
    // Two-error attempt first: solve for Λ(x) = 1 + λ1·x + λ2·x² from
    //   [S0 S1] [λ2]   [S2]
    //   [S1 S2] [λ1] = [S3]
    let det = gf::mul(s[0], s[2]) ^ gf::mul(s[1], s[1]);
    if det != 0 {
        let l2 = gf::div(gf::mul(s[1], s[3]) ^ gf::mul(s[2], s[2]), det);
        let l1 = gf::div(gf::mul(s[0], s[3]) ^ gf::mul(s[1], s[2]), det);
        return correct_two(unit, s, l1, l2);
    }
    // Single error: S_j = e · α^(j·p), so p = log(S1/S0) and e = S0.
    if s[0] != 0 && s[1] != 0 {
        let ratio = gf::div(s[1], s[0]);
        let pos_exp = gf::log(ratio) as usize;
        if pos_exp < UNIT_LEN {
            let idx = UNIT_LEN - 1 - pos_exp;
            unit[idx] ^= s[0];
            return true;
        }
    }
    false
}

fn correct_two(unit: &mut [u8; UNIT_LEN], s: &[u8; PARITY_LEN], l1: u8, l2: u8) -> bool {
    // Chien search over the 20 codeword positions for roots of Λ(1/X).
    let mut found = [0usize; 2];
    let mut count = 0;
    for pos_exp in 0..UNIT_LEN {
        let x_inv = gf::alpha_pow(-(pos_exp as i32));
        let val = 1 ^ gf::mul(l1, x_inv) ^ gf::mul(l2, gf::mul(x_inv, x_inv));
        if val == 0 {
            if count == 2 {
                return false;
            }
            found[count] = pos_exp;
            count += 1;
        }
    }
    if count != 2 {
        return false;
    }
    // Magnitudes from S0 = e1 + e2 and S1 = e1·X1 + e2·X2.
    let x1 = gf::alpha_pow(found[0] as i32);
    let x2 = gf::alpha_pow(found[1] as i32);
    let denom = x1 ^ x2;
    if denom == 0 {
        return false;
    }
    let e1 = gf::div(s[1] ^ gf::mul(s[0], x2), denom);
    let e2 = s[0] ^ e1;
    unit[UNIT_LEN - 1 - found[0]] ^= e1;
    unit[UNIT_LEN - 1 - found[1]] ^= e2;
    true
}
