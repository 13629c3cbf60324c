//! Reference AES-256 and HMAC-SHA-256 written from the textbook definitions.
//! Slow and table-free on purpose; only used to cross-check the library.
#![allow(dead_code)]

use sha2::{Digest, Sha256};

fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        let hi = a & 0x80;
        a <<= 1;
        if hi != 0 {
            a ^= 0x1b;
        }
        b >>= 1;
    }
    p
}

fn ginv(a: u8) -> u8 {
    if a == 0 {
        return 0;
    }
    // a^254 = a^-1 in GF(2^8)
    let mut result = 1u8;
    let mut base = a;
    let mut e = 254u32;
    while e > 0 {
        if e & 1 == 1 {
            result = gmul(result, base);
        }
        base = gmul(base, base);
        e >>= 1;
    }
    result
}

fn sbox(a: u8) -> u8 {
    let b = ginv(a);
    b ^ b.rotate_left(1) ^ b.rotate_left(2) ^ b.rotate_left(3) ^ b.rotate_left(4) ^ 0x63
}

fn sbox_table() -> [u8; 256] {
    let mut t = [0u8; 256];
    for (i, v) in t.iter_mut().enumerate() {
        *v = sbox(i as u8);
    }
    t
}

fn inv_sbox_table() -> [u8; 256] {
    let s = sbox_table();
    let mut t = [0u8; 256];
    for (i, &v) in s.iter().enumerate() {
        t[v as usize] = i as u8;
    }
    t
}

fn expand_key(key: &[u8; 32]) -> [[u8; 16]; 15] {
    let s = sbox_table();
    let mut w = [[0u8; 4]; 60];
    for i in 0..8 {
        w[i].copy_from_slice(&key[4 * i..4 * i + 4]);
    }
    let mut rcon = 1u8;
    for i in 8..60 {
        let mut temp = w[i - 1];
        if i % 8 == 0 {
            temp = [s[temp[1] as usize], s[temp[2] as usize], s[temp[3] as usize], s[temp[0] as usize]];
            temp[0] ^= rcon;
            rcon = gmul(rcon, 2);
        } else if i % 8 == 4 {
            for b in temp.iter_mut() {
                *b = s[*b as usize];
            }
        }
        for j in 0..4 {
            w[i][j] = w[i - 8][j] ^ temp[j];
        }
    }
    let mut rk = [[0u8; 16]; 15];
    for r in 0..15 {
        for c in 0..4 {
            rk[r][4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
        }
    }
    rk
}

fn add_round_key(state: &mut [u8; 16], rk: &[u8; 16]) {
    for (s, k) in state.iter_mut().zip(rk) {
        *s ^= k;
    }
}

// state[r + 4c]
fn shift_rows(state: &mut [u8; 16], inverse: bool) {
    let old = *state;
    for r in 1..4 {
        for c in 0..4 {
            let src = if inverse { (c + 4 - r) % 4 } else { (c + r) % 4 };
            state[r + 4 * c] = old[r + 4 * src];
        }
    }
}

fn mix_columns(state: &mut [u8; 16], m: [u8; 4]) {
    for c in 0..4 {
        let col = [state[4 * c], state[4 * c + 1], state[4 * c + 2], state[4 * c + 3]];
        for r in 0..4 {
            state[4 * c + r] = gmul(m[0], col[r])
                ^ gmul(m[1], col[(r + 1) % 4])
                ^ gmul(m[2], col[(r + 2) % 4])
                ^ gmul(m[3], col[(r + 3) % 4]);
        }
    }
}

pub fn aes256_encrypt(key: &[u8; 32], block: &[u8; 16]) -> [u8; 16] {
    let s = sbox_table();
    let rk = expand_key(key);
    let mut st = *block;
    add_round_key(&mut st, &rk[0]);
    for round in 1..15 {
        for b in st.iter_mut() {
            *b = s[*b as usize];
        }
        shift_rows(&mut st, false);
        if round != 14 {
            mix_columns(&mut st, [2, 3, 1, 1]);
        }
        add_round_key(&mut st, &rk[round]);
    }
    st
}

pub fn aes256_decrypt(key: &[u8; 32], block: &[u8; 16]) -> [u8; 16] {
    let inv = inv_sbox_table();
    let rk = expand_key(key);
    let mut st = *block;
    add_round_key(&mut st, &rk[14]);
    for round in (0..14).rev() {
        shift_rows(&mut st, true);
        for b in st.iter_mut() {
            *b = inv[*b as usize];
        }
        add_round_key(&mut st, &rk[round]);
        if round != 0 {
            mix_columns(&mut st, [14, 11, 13, 9]);
        }
    }
    st
}

pub fn hmac_sha256(key: &[u8], data: &[u8]) -> [u8; 32] {
    let mut k = [0u8; 64];
    if key.len() > 64 {
        k[..32].copy_from_slice(&Sha256::digest(key));
    } else {
        k[..key.len()].copy_from_slice(key);
    }
    let mut inner = Sha256::new();
    inner.update(k.map(|b| b ^ 0x36));
    inner.update(data);
    let ih = inner.finalize();
    let mut outer = Sha256::new();
    outer.update(k.map(|b| b ^ 0x5c));
    outer.update(ih);
    outer.finalize().into()
}

pub fn xor16(a: &[u8; 16], b: &[u8; 16]) -> [u8; 16] {
    let mut o = [0u8; 16];
    for i in 0..16 {
        o[i] = a[i] ^ b[i];
    }
    o
}
