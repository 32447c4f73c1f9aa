//! Commitments, ideal 1-out-of-2 oblivious transfer and coin tossing.
//!
//! Canonical encoding: a message is a sequence of fields, each written as an
//! 8-byte little-endian length followed by its bytes, in a fixed order. A
//! commitment is `SHA-256(a || len(y) || y)` with a 32-byte nonce `a`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Digest used by commitments. Only one is provided.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DigestAlgorithm {
    #[default]
    Sha256,
}

pub type Nonce = [u8; 32];

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Commitment(pub [u8; 32]);

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Commitment({})", hex::encode(self.0))
    }
}

impl fmt::Display for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for Commitment {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Commitment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| serde::de::Error::custom("digest must be 32 bytes"))?;
        Ok(Commitment(arr))
    }
}

/// Opening information and message.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opening {
    #[serde(with = "hex_nonce")]
    pub a: Nonce,
    #[serde(with = "hex_bytes")]
    pub y: Vec<u8>,
}

mod hex_nonce {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(a))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let bytes = hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)?;
        bytes.try_into().map_err(|_| serde::de::Error::custom("nonce must be 32 bytes"))
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(y: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(y))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Length-prefixed concatenation of fields.
pub fn canonical(fields: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(fields.iter().map(|f| f.len() + 8).sum());
    for f in fields {
        out.extend_from_slice(&(f.len() as u64).to_le_bytes());
        out.extend_from_slice(f);
    }
    out
}

pub fn commit_with(alg: DigestAlgorithm, a: &Nonce, y: &[u8]) -> Commitment {
    match alg {
        DigestAlgorithm::Sha256 => {
            let mut h = Sha256::new();
            h.update(a);
            h.update((y.len() as u64).to_le_bytes());
            h.update(y);
            Commitment(h.finalize().into())
        }
    }
}

pub fn commit(a: &Nonce, y: &[u8]) -> Commitment {
    commit_with(DigestAlgorithm::default(), a, y)
}

pub fn verify(c: &Commitment, a: &Nonce, y: &[u8]) -> bool {
    commit(a, y) == *c
}

/// Commits to `y` under a fresh nonce.
pub fn commit_fresh<R: Rng + ?Sized>(rng: &mut R, y: Vec<u8>) -> (Commitment, Opening) {
    let mut a = [0u8; 32];
    rng.fill(&mut a);
    (commit(&a, &y), Opening { a, y })
}

impl Opening {
    pub fn opens(&self, c: &Commitment) -> bool {
        verify(c, &self.a, &self.y)
    }
}

/// One OT query: the sender's two strings and the receiver's choice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OtQuery {
    pub x0: Vec<u8>,
    pub x1: Vec<u8>,
    pub b: u8,
}

/// Pluggable 1-out-of-2 OT.
pub trait ObliviousTransfer {
    fn transfer(&mut self, q: &OtQuery) -> Vec<u8>;
}

/// Ideal OT functionality. It records each choice bit so a simulator can
/// read the receiver's input; `x_{1-b}` is never returned or stored.
#[derive(Clone, Debug, Default)]
pub struct IdealOt {
    pub choices: Vec<u8>,
}

impl ObliviousTransfer for IdealOt {
    fn transfer(&mut self, q: &OtQuery) -> Vec<u8> {
        self.choices.push(q.b & 1);
        ideal_ot(q)
    }
}

pub fn ideal_ot(q: &OtQuery) -> Vec<u8> {
    if q.b & 1 == 0 {
        q.x0.clone()
    } else {
        q.x1.clone()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoinTossError {
    #[error("coin-toss opening does not match the commitment")]
    InvalidOpening,
    #[error("share {0} out of range for s = {1}")]
    OutOfRange(u64, u64),
    #[error("s = {0} is not a power of two")]
    BadModulus(u64),
}

/// First mover: commits to `alpha1`, later opens it.
pub trait CoinCommitter {
    fn commit(&mut self, s: u64) -> Commitment;
    fn open(&mut self, alpha2: u64) -> Opening;
}

/// Second mover: answers the commitment with `alpha2`.
pub trait CoinResponder {
    fn respond(&mut self, c: &Commitment, s: u64) -> u64;
}

pub fn encode_share(alpha: u64) -> Vec<u8> {
    canonical(&[&alpha.to_le_bytes()])
}

pub fn decode_share(y: &[u8]) -> Option<u64> {
    if y.len() != 16 || y[..8] != 8u64.to_le_bytes() {
        return None;
    }
    Some(u64::from_le_bytes(y[8..].try_into().ok()?))
}

/// Honest first mover.
pub struct HonestCommitter<R> {
    pub rng: R,
    opening: Option<Opening>,
}

impl<R: Rng> HonestCommitter<R> {
    pub fn new(rng: R) -> Self {
        HonestCommitter { rng, opening: None }
    }
}

impl<R: Rng> CoinCommitter for HonestCommitter<R> {
    fn commit(&mut self, s: u64) -> Commitment {
        let alpha1 = self.rng.gen_range(0..s);
        let (c, o) = commit_fresh(&mut self.rng, encode_share(alpha1));
        self.opening = Some(o);
        c
    }

    fn open(&mut self, _alpha2: u64) -> Opening {
        self.opening.clone().expect("commit precedes open")
    }
}

/// Honest second mover.
pub struct HonestResponder<R> {
    pub rng: R,
}

impl<R: Rng> CoinResponder for HonestResponder<R> {
    fn respond(&mut self, _c: &Commitment, s: u64) -> u64 {
        self.rng.gen_range(0..s)
    }
}

/// Transcript of one coin toss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoinToss {
    pub commitment: Commitment,
    pub alpha2: u64,
    pub opening: Opening,
    pub alpha1: u64,
    pub alpha: u64,
}

/// Commit to `alpha1`, receive `alpha2`, open; `alpha = alpha1 XOR alpha2`.
pub fn coin_toss(p1: &mut dyn CoinCommitter, p2: &mut dyn CoinResponder, s: u64) -> Result<CoinToss, CoinTossError> {
    if !s.is_power_of_two() {
        return Err(CoinTossError::BadModulus(s));
    }
    let commitment = p1.commit(s);
    let alpha2 = p2.respond(&commitment, s);
    if alpha2 >= s {
        return Err(CoinTossError::OutOfRange(alpha2, s));
    }
    let opening = p1.open(alpha2);
    if !opening.opens(&commitment) {
        return Err(CoinTossError::InvalidOpening);
    }
    let alpha1 = decode_share(&opening.y).ok_or(CoinTossError::InvalidOpening)?;
    if alpha1 >= s {
        return Err(CoinTossError::OutOfRange(alpha1, s));
    }
    Ok(CoinToss { commitment, alpha2, opening, alpha1, alpha: alpha1 ^ alpha2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeSet;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn commit_roundtrip_and_binding() {
        let mut r = rng(1);
        let (c, o) = commit_fresh(&mut r, b"hello".to_vec());
        assert!(verify(&c, &o.a, &o.y));
        assert!(!verify(&c, &o.a, b"hellp"));
        let mut a2 = o.a;
        a2[0] ^= 1;
        assert!(!verify(&c, &a2, &o.y));
    }

    #[test]
    fn canonical_encoding_is_injective_on_field_splits() {
        assert_ne!(canonical(&[b"ab", b"c"]), canonical(&[b"a", b"bc"]));
        assert_ne!(canonical(&[b""]), canonical(&[]));
    }

    #[test]
    fn no_collisions_in_random_search() {
        let mut r = rng(2);
        let mut seen = BTreeSet::new();
        for i in 0..100_000u64 {
            let (c, _) = commit_fresh(&mut r, i.to_le_bytes().to_vec());
            assert!(seen.insert(c.0));
        }
    }

    #[test]
    fn commitment_serialises_as_hex() {
        let c = commit(&[7; 32], b"x");
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s.len(), 66);
        assert_eq!(serde_json::from_str::<Commitment>(&s).unwrap(), c);
        let o = Opening { a: [1; 32], y: vec![1, 2] };
        assert_eq!(serde_json::from_str::<Opening>(&serde_json::to_string(&o).unwrap()).unwrap(), o);
    }

    #[test]
    fn ideal_ot_returns_chosen_string_and_logs_choice() {
        let mut ot = IdealOt::default();
        assert_eq!(ot.transfer(&OtQuery { x0: b"A".to_vec(), x1: b"B".to_vec(), b: 0 }), b"A");
        assert_eq!(ot.transfer(&OtQuery { x0: b"A".to_vec(), x1: b"B".to_vec(), b: 1 }), b"B");
        assert_eq!(ot.choices, vec![0, 1]);
    }

    struct Fixed(u64, Option<Opening>);

    impl CoinCommitter for Fixed {
        fn commit(&mut self, _s: u64) -> Commitment {
            let (c, o) = commit_fresh(&mut rng(self.0), encode_share(self.0));
            self.1 = Some(o);
            c
        }
        fn open(&mut self, _a: u64) -> Opening {
            self.1.clone().unwrap()
        }
    }

    impl CoinResponder for Fixed {
        fn respond(&mut self, _c: &Commitment, _s: u64) -> u64 {
            self.0
        }
    }

    #[test]
    fn xor_of_shares() {
        let t = coin_toss(&mut Fixed(5, None), &mut Fixed(6, None), 8).unwrap();
        assert_eq!(t.alpha, 3);
        assert!(matches!(coin_toss(&mut Fixed(5, None), &mut Fixed(6, None), 6), Err(CoinTossError::BadModulus(6))));
    }

    struct Equivocator;

    impl CoinCommitter for Equivocator {
        fn commit(&mut self, _s: u64) -> Commitment {
            commit(&[0; 32], &encode_share(1))
        }
        fn open(&mut self, alpha2: u64) -> Opening {
            // Tries to steer alpha to 0.
            Opening { a: [0; 32], y: encode_share(alpha2) }
        }
    }

    #[test]
    fn equivocation_is_rejected() {
        assert_eq!(coin_toss(&mut Equivocator, &mut Fixed(3, None), 8), Err(CoinTossError::InvalidOpening));
        assert!(coin_toss(&mut Equivocator, &mut Fixed(1, None), 8).is_ok());
    }

    fn uniform_within_4_sigma(counts: &[u64], trials: u64) {
        let p = 1.0 / counts.len() as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for &k in counts {
            assert!((k as f64 - trials as f64 * p).abs() <= 4.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn honest_coin_is_uniform() {
        let trials = 8000;
        let mut counts = [0u64; 8];
        let mut p1 = HonestCommitter::new(rng(10));
        let mut p2 = HonestResponder { rng: rng(11) };
        for _ in 0..trials {
            counts[coin_toss(&mut p1, &mut p2, 8).unwrap().alpha as usize] += 1;
        }
        uniform_within_4_sigma(&counts, trials);
    }

    #[test]
    fn fixed_responder_cannot_bias() {
        let trials = 8000;
        let mut counts = [0u64; 8];
        let mut p1 = HonestCommitter::new(rng(12));
        for _ in 0..trials {
            counts[coin_toss(&mut p1, &mut Fixed(7, None), 8).unwrap().alpha as usize] += 1;
        }
        uniform_within_4_sigma(&counts, trials);
    }

    #[test]
    fn digests_do_not_reveal_a_chosen_bit() {
        // Guess the committed bit from the low bit of the digest.
        let mut r = rng(13);
        let trials = 10_000u64;
        let mut right = 0u64;
        for _ in 0..trials {
            let bit: u8 = r.gen_range(0..2);
            let (c, _) = commit_fresh(&mut r, vec![bit]);
            if c.0[0] & 1 == bit {
                right += 1;
            }
        }
        let sigma = (trials as f64 * 0.25).sqrt();
        assert!((right as f64 - trials as f64 / 2.0).abs() <= 4.0 * sigma);
    }
}
