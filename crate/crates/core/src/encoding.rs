//! Canonical binary encoding of channels.
//!
//! Format (version 1): the magic bytes `FSCV` and a version byte, then
//! big-endian `u32` fields — state count, the update table in row-major
//! `(s, x, y)` order, the kernel table as lowest-terms numerator/denominator
//! pairs in the same order, and the initial distribution. Integers inside
//! rationals are length-prefixed big-endian magnitudes with no leading zero
//! bytes (zero encodes as length 0).
//!
//! Decoding is strict: every byte is accounted for, non-minimal integers and
//! non-reduced fractions are rejected, so `encode(decode(e)) == e` holds on
//! the full image of `encode` and nowhere else.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use sha2::{Digest, Sha256};

use crate::channel::{RawChannel, UnifilarChannel, ValidationReport};
use crate::rat::Rat;

const MAGIC: &[u8; 4] = b"FSCV";
const VERSION: u8 = 1;

/// A canonical binary channel encoding.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct ChannelEncoding(Vec<u8>);

impl ChannelEncoding {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        ChannelEncoding(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() % 2 != 0 {
            return None;
        }
        let bytes = (0..s.len() / 2)
            .map(|i| u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok())
            .collect::<Option<Vec<u8>>>()?;
        Some(ChannelEncoding(bytes))
    }

    /// Hex SHA-256 of the encoded bytes; certificates bind to this.
    pub fn sha256_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update(&self.0);
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("malformed encoding at byte {position}: {reason}")]
    Malformed { position: usize, reason: String },
    #[error("encoding decodes to an invalid channel: {0}")]
    InvalidChannel(ValidationReport),
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn push_uint(out: &mut Vec<u8>, v: &BigUint) {
    if v.is_zero() {
        push_u32(out, 0);
        return;
    }
    let bytes = v.to_bytes_be();
    push_u32(out, bytes.len() as u32);
    out.extend_from_slice(&bytes);
}

fn push_rat(out: &mut Vec<u8>, r: &Rat) {
    debug_assert!(!r.is_negative(), "encoded probabilities are nonnegative");
    push_uint(out, r.numer().magnitude());
    push_uint(out, r.denom().magnitude());
}

/// Serializes a valid channel to its canonical byte string. Deterministic and
/// injective on structurally distinct channels.
pub fn encode_channel(channel: &UnifilarChannel) -> ChannelEncoding {
    let k = channel.num_states();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    push_u32(&mut out, k as u32);
    for s in 0..k {
        for x in 0..2 {
            for y in 0..2 {
                push_u32(&mut out, channel.next_state(s, x, y) as u32);
            }
        }
    }
    for s in 0..k {
        for x in 0..2 {
            for y in 0..2 {
                push_rat(&mut out, channel.prob(s, x, y));
            }
        }
    }
    for p in channel.initial() {
        push_rat(&mut out, p);
    }
    ChannelEncoding(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, reason: impl Into<String>) -> Result<T, DecodeError> {
        Err(DecodeError::Malformed { position: self.pos, reason: reason.into() })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.bytes.len() {
            return self.err(format!("expected {n} more bytes"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn uint(&mut self) -> Result<BigUint, DecodeError> {
        let len = self.u32()? as usize;
        if len == 0 {
            return Ok(BigUint::zero());
        }
        let start = self.pos;
        let bytes = self.take(len)?;
        if bytes[0] == 0 {
            self.pos = start;
            return self.err("non-minimal integer (leading zero byte)");
        }
        Ok(BigUint::from_bytes_be(bytes))
    }

    fn rat(&mut self) -> Result<Rat, DecodeError> {
        let start = self.pos;
        let num = self.uint()?;
        let den = self.uint()?;
        if den.is_zero() {
            self.pos = start;
            return self.err("zero denominator");
        }
        if num.gcd(&den) != BigUint::one() {
            self.pos = start;
            return self.err("fraction not in lowest terms");
        }
        let r = Rat::from_bigints(
            BigInt::from_biguint(Sign::Plus, num),
            BigInt::from_biguint(Sign::Plus, den),
        )
        .expect("nonzero denominator");
        Ok(r)
    }
}

/// Strict inverse of [`encode_channel`]; validates the decoded channel.
pub fn decode_channel(encoding: &ChannelEncoding) -> Result<UnifilarChannel, DecodeError> {
    let mut r = Reader { bytes: encoding.as_bytes(), pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        r.pos = 0;
        return r.err("bad magic bytes");
    }
    let version = r.take(1)?[0];
    if version != VERSION {
        r.pos = 4;
        return r.err(format!("unsupported version {version}"));
    }
    let k = r.u32()? as usize;
    if k == 0 {
        r.pos = 5;
        return r.err("state count is zero");
    }

    let mut update = Vec::with_capacity(k * 4);
    for s in 0..k {
        for x in 0..2 {
            for y in 0..2 {
                let s2 = r.u32()? as usize;
                if s2 >= k {
                    r.pos -= 4;
                    return r.err(format!("update target {s2} out of range"));
                }
                update.push(((s, x, y), s2));
            }
        }
    }

    let mut kernel = Vec::with_capacity(k * 4);
    for s in 0..k {
        for x in 0..2 {
            for y in 0..2 {
                kernel.push(((s, x, y), r.rat()?));
            }
        }
    }

    let mut initial = Vec::with_capacity(k);
    for _ in 0..k {
        initial.push(r.rat()?);
    }

    if r.pos != r.bytes.len() {
        return r.err("trailing bytes after channel");
    }

    RawChannel { num_states: k, initial, kernel, update }
        .validate()
        .map_err(DecodeError::InvalidChannel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{DelayedActivationSpec, FamilyVariant};

    fn family(delay: u32, variant: FamilyVariant) -> UnifilarChannel {
        DelayedActivationSpec::new(delay, variant).unwrap().channel()
    }

    #[test]
    fn round_trip_family() {
        for variant in [FamilyVariant::Good, FamilyVariant::Bad] {
            for delay in 1..=3 {
                let c = family(delay, variant);
                let e = encode_channel(&c);
                let back = decode_channel(&e).unwrap();
                assert!(back == c);
                assert_eq!(encode_channel(&back), e);
            }
        }
    }

    #[test]
    fn good_and_bad_distinct() {
        let g = encode_channel(&family(1, FamilyVariant::Good));
        let b = encode_channel(&family(1, FamilyVariant::Bad));
        assert_ne!(g, b);
    }

    #[test]
    fn empty_and_garbage_rejected() {
        assert!(matches!(
            decode_channel(&ChannelEncoding::from_bytes(Vec::new())),
            Err(DecodeError::Malformed { position: 0, .. })
        ));
        assert!(decode_channel(&ChannelEncoding::from_bytes(vec![1, 2, 3, 4, 5, 6])).is_err());
    }

    #[test]
    fn truncation_rejected_with_position() {
        let e = encode_channel(&family(2, FamilyVariant::Good));
        let mut bytes = e.as_bytes().to_vec();
        bytes.truncate(bytes.len() - 3);
        match decode_channel(&ChannelEncoding::from_bytes(bytes)) {
            Err(DecodeError::Malformed { position, .. }) => assert!(position > 0),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn non_canonical_fraction_rejected() {
        // Hand-build an encoding with 2/4 instead of 1/2 and check rejection.
        let c = UnifilarChannel::binary_symmetric(&Rat::new(1, 2));
        let e = encode_channel(&c);
        let bytes = e.as_bytes().to_vec();
        // 1/2 encodes as [0,0,0,1, 1, 0,0,0,1, 2]; 2/4 as [0,0,0,1, 2, 0,0,0,1, 4].
        let pat: &[u8] = &[0, 0, 0, 1, 1, 0, 0, 0, 1, 2];
        let idx = bytes.windows(pat.len()).position(|w| w == pat).unwrap();
        let mut tampered = bytes.clone();
        tampered[idx + 4] = 2;
        tampered[idx + 9] = 4;
        assert!(matches!(
            decode_channel(&ChannelEncoding::from_bytes(tampered)),
            Err(DecodeError::Malformed { .. })
        ));
    }

    #[test]
    fn hex_round_trip() {
        let e = encode_channel(&family(1, FamilyVariant::Good));
        let h = e.to_hex();
        assert_eq!(ChannelEncoding::from_hex(&h).unwrap(), e);
    }
}
