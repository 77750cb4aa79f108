//! ElGamal over the petition group, and a hybrid mode for byte payloads.
//!
//! Plain ElGamal maps group elements to pairs `(g^y, m·p^y)`. Chain payloads
//! (identity shares, testimony) are bytes, so they use the hybrid mode: the
//! ElGamal mask `p^y` is hashed into a ChaCha20-Poly1305 key and `g^y` is sent
//! alongside the authenticated ciphertext.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::group::{decode_hex, Group, GroupEncoding, ScalarField};

/// Algorithm identifier byte leading every serialized hybrid ciphertext.
pub const HYBRID_ALG_ID: u8 = 1;
/// Human-readable name of [`HYBRID_ALG_ID`], recorded in petition headers.
pub const HYBRID_ALG_NAME: &str = "elgamal-kem+sha256+chacha20poly1305";

const NONCE_LEN: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ElGamalCiphertext<G: Group> {
    /// `g^y`
    pub c1: G::Element,
    /// `m · p^y`
    pub c2: G::Element,
}

pub fn encrypt<G: Group, R: RngCore + ?Sized>(
    pk: &G::Element,
    m: &G::Element,
    rng: &mut R,
) -> Result<ElGamalCiphertext<G>> {
    encrypt_with_randomness(pk, m, &G::Scalar::random_nonzero(rng))
}

/// Encryption with caller-chosen `y`. Reusing `y` across messages leaks their quotient.
pub fn encrypt_with_randomness<G: Group>(
    pk: &G::Element,
    m: &G::Element,
    y: &G::Scalar,
) -> Result<ElGamalCiphertext<G>> {
    if G::is_identity(pk) {
        return Err(Error::DegenerateKey);
    }
    Ok(ElGamalCiphertext {
        c1: G::exp_g(y),
        c2: G::mul(m, &G::exp(pk, y)),
    })
}

/// `c2 · c1^(-s)`. A wrong key silently yields a wrong element.
pub fn decrypt<G: Group>(s: &G::Scalar, ct: &ElGamalCiphertext<G>) -> G::Element {
    G::mul(&ct.c2, &G::exp(&ct.c1, &(-*s)))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HybridCiphertext<G: Group> {
    pub kem: G::Element,
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
}

impl<G: Group> HybridCiphertext<G> {
    /// `alg_id ‖ len ‖ kem ‖ len ‖ nonce ‖ len ‖ body`, lengths as u32 big-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let kem = self.kem.to_bytes();
        let mut out = Vec::with_capacity(1 + 12 + kem.len() + NONCE_LEN + self.body.len());
        out.push(HYBRID_ALG_ID);
        for field in [&kem[..], &self.nonce[..], &self.body[..]] {
            out.extend_from_slice(&(field.len() as u32).to_be_bytes());
            out.extend_from_slice(field);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (&alg, mut rest) = bytes
            .split_first()
            .ok_or_else(|| Error::Decode("empty hybrid ciphertext".into()))?;
        if alg != HYBRID_ALG_ID {
            return Err(Error::Decode(format!("unknown hybrid algorithm {alg}")));
        }
        let mut fields = Vec::with_capacity(3);
        for _ in 0..3 {
            if rest.len() < 4 {
                return Err(Error::Decode("truncated hybrid ciphertext".into()));
            }
            let (len, tail) = rest.split_at(4);
            let len = u32::from_be_bytes(len.try_into().unwrap()) as usize;
            if tail.len() < len {
                return Err(Error::Decode("truncated hybrid ciphertext".into()));
            }
            let (field, tail) = tail.split_at(len);
            fields.push(field);
            rest = tail;
        }
        if !rest.is_empty() {
            return Err(Error::Decode("trailing bytes after hybrid ciphertext".into()));
        }
        Ok(Self {
            kem: G::Element::from_bytes(fields[0])?,
            nonce: fields[1]
                .try_into()
                .map_err(|_| Error::Decode("bad nonce length".into()))?,
            body: fields[2].to_vec(),
        })
    }
}

impl<G: Group> Serialize for HybridCiphertext<G> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de, G: Group> Deserialize<'de> for HybridCiphertext<G> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let s = String::deserialize(d)?;
        let bytes = decode_hex(&s).map_err(D::Error::custom)?;
        Self::from_bytes(&bytes).map_err(D::Error::custom)
    }
}

fn derive_key<G: Group>(kem: &G::Element, shared: &G::Element) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"threshold-petition/v1/hybrid-kdf");
    h.update([HYBRID_ALG_ID]);
    h.update(G::ID.as_bytes());
    h.update(kem.to_bytes());
    h.update(shared.to_bytes());
    h.finalize().into()
}

fn aad<G: Group>(kem: &G::Element) -> Vec<u8> {
    let mut aad = vec![HYBRID_ALG_ID];
    aad.extend(kem.to_bytes());
    aad
}

pub fn hybrid_encrypt<G: Group, R: RngCore + ?Sized>(
    pk: &G::Element,
    payload: &[u8],
    rng: &mut R,
) -> Result<HybridCiphertext<G>> {
    if G::is_identity(pk) {
        return Err(Error::DegenerateKey);
    }
    let y = G::Scalar::random_nonzero(rng);
    let kem = G::exp_g(&y);
    let key = derive_key::<G>(&kem, &G::exp(pk, &y));
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let body = ChaCha20Poly1305::new(Key::from_slice(&key))
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: payload,
                aad: &aad::<G>(&kem),
            },
        )
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    Ok(HybridCiphertext { kem, nonce, body })
}

pub fn hybrid_decrypt<G: Group>(s: &G::Scalar, ct: &HybridCiphertext<G>) -> Result<Vec<u8>> {
    let key = derive_key::<G>(&ct.kem, &G::exp(&ct.kem, s));
    ChaCha20Poly1305::new(Key::from_slice(&key))
        .decrypt(
            Nonce::from_slice(&ct.nonce),
            Payload {
                msg: &ct.body,
                aad: &aad::<G>(&ct.kem),
            },
        )
        .map_err(|_| Error::AuthenticationFailure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Ristretto255, ToyElement, ToyGroup, ToyScalar};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy(v: u64) -> ToyElement {
        ToyElement::from_u64(v).unwrap()
    }

    #[test]
    fn toy_encrypt_with_fixed_randomness() {
        // Oracle: 2^6 mod 23 = 18, 2^3 mod 23 = 8, 4 · 18^3 mod 23 = 6.
        let pk = ToyGroup::exp_g(&ToyScalar::new(6));
        assert_eq!(pk.value(), 18);
        let m = toy(4);
        let ct = encrypt_with_randomness::<ToyGroup>(&pk, &m, &ToyScalar::new(3)).unwrap();
        assert_eq!(ct.c1.value(), 8);
        assert_eq!(ct.c2.value(), 4 * (18u64.pow(3) % 23) % 23);
        assert_eq!(ct.c2.value(), 6);
        assert_eq!(decrypt::<ToyGroup>(&ToyScalar::new(6), &ct), m);
    }

    #[test]
    fn toy_decrypt_known_ciphertext() {
        // 8^7 mod 23 = 12 and 2 · 12^-1 mod 23 = 4.
        assert_eq!(8u64.pow(7) % 23, 12);
        assert_eq!((12 * 2) % 23, 1);
        let ct = ElGamalCiphertext::<ToyGroup> { c1: toy(8), c2: toy(2) };
        assert_eq!(decrypt::<ToyGroup>(&ToyScalar::new(7), &ct), toy(4));
    }

    #[test]
    fn zero_randomness_is_visible() {
        let pk = ToyGroup::exp_g(&ToyScalar::new(5));
        let ct = encrypt_with_randomness::<ToyGroup>(&pk, &toy(9), &ToyScalar::new(0)).unwrap();
        assert_eq!(ct.c1, ToyGroup::identity());
        assert_eq!(ct.c2, toy(9));
        // The rng path never produces y = 0.
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for _ in 0..200 {
            assert_ne!(encrypt::<ToyGroup, _>(&pk, &toy(9), &mut rng).unwrap().c1, ToyGroup::identity());
        }
        assert_eq!(decrypt::<ToyGroup>(&ToyScalar::new(3), &ElGamalCiphertext { c1: ToyGroup::identity(), c2: toy(9) }), toy(9));
    }

    #[test]
    fn identity_key_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let id = ToyGroup::identity();
        assert_eq!(encrypt::<ToyGroup, _>(&id, &toy(2), &mut rng), Err(Error::DegenerateKey));
        assert_eq!(hybrid_encrypt::<ToyGroup, _>(&id, b"x", &mut rng), Err(Error::DegenerateKey));
        assert_eq!(Error::DegenerateKey.to_string(), "degenerate key");
    }

    fn roundtrip<G: Group>() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let s = G::Scalar::random_nonzero(&mut rng);
        let pk = G::exp_g(&s);
        for _ in 0..1000 {
            let m = G::exp_g(&G::Scalar::random(&mut rng));
            let ct = encrypt::<G, _>(&pk, &m, &mut rng).unwrap();
            assert_eq!(decrypt::<G>(&s, &ct), m);
        }
    }

    #[test]
    fn roundtrip_both_backends() {
        roundtrip::<ToyGroup>();
        roundtrip::<Ristretto255>();
    }

    #[test]
    fn wrong_key_gives_wrong_plaintext() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..100 {
            let s = <Ristretto255 as Group>::Scalar::random(&mut rng);
            let other = <Ristretto255 as Group>::Scalar::random(&mut rng);
            let pk = Ristretto255::exp_g(&s);
            let m = Ristretto255::hash_to_group(b"m", &[1]);
            let ct = encrypt::<Ristretto255, _>(&pk, &m, &mut rng).unwrap();
            assert_ne!(decrypt::<Ristretto255>(&other, &ct), m);
        }
    }

    #[test]
    fn composed_key_decrypts_under_summed_secret() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let parts: Vec<_> = (0..6).map(|_| <Ristretto255 as Group>::Scalar::random(&mut rng)).collect();
        let pk = Ristretto255::product(parts.iter().map(Ristretto255::exp_g).collect::<Vec<_>>().iter());
        let s = parts.iter().fold(ScalarField::zero(), |a, b| a + *b);
        let m = Ristretto255::hash_to_group(b"m", b"composed");
        let ct = encrypt::<Ristretto255, _>(&pk, &m, &mut rng).unwrap();
        assert_eq!(decrypt::<Ristretto255>(&s, &ct), m);
    }

    fn hybrid_cases<G: Group>() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let s = G::Scalar::random_nonzero(&mut rng);
        let pk = G::exp_g(&s);

        let empty = hybrid_encrypt::<G, _>(&pk, b"", &mut rng).unwrap();
        assert_eq!(hybrid_decrypt::<G>(&s, &empty).unwrap(), Vec::<u8>::new());

        let mut big = vec![0u8; 1 << 20];
        rng.fill_bytes(&mut big);
        let ct = hybrid_encrypt::<G, _>(&pk, &big, &mut rng).unwrap();
        assert_eq!(hybrid_decrypt::<G>(&s, &ct).unwrap(), big);

        let ct = hybrid_encrypt::<G, _>(&pk, b"testimony", &mut rng).unwrap();
        let wrong = s + G::Scalar::one();
        assert_eq!(hybrid_decrypt::<G>(&wrong, &ct), Err(Error::AuthenticationFailure));

        let mut flipped = ct.clone();
        flipped.body[3] ^= 0x10;
        assert_eq!(hybrid_decrypt::<G>(&s, &flipped), Err(Error::AuthenticationFailure));

        let mut renonced = ct.clone();
        renonced.nonce[0] ^= 1;
        assert_eq!(hybrid_decrypt::<G>(&s, &renonced), Err(Error::AuthenticationFailure));

        let mut rekem = ct.clone();
        rekem.kem = G::mul(&ct.kem, &G::generator());
        assert_eq!(hybrid_decrypt::<G>(&s, &rekem), Err(Error::AuthenticationFailure));

        let decoded = HybridCiphertext::<G>::from_bytes(&ct.to_bytes()).unwrap();
        assert_eq!(decoded, ct);
    }

    #[test]
    fn hybrid_both_backends() {
        hybrid_cases::<ToyGroup>();
        hybrid_cases::<Ristretto255>();
    }

    #[test]
    fn hybrid_every_bit_flip_in_serialized_form_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let s = <Ristretto255 as Group>::Scalar::random_nonzero(&mut rng);
        let pk = Ristretto255::exp_g(&s);
        let ct = hybrid_encrypt::<Ristretto255, _>(&pk, b"abc", &mut rng).unwrap();
        let bytes = ct.to_bytes();
        for i in 0..bytes.len() {
            for bit in 0..8 {
                let mut b = bytes.clone();
                b[i] ^= 1 << bit;
                let ok = HybridCiphertext::<Ristretto255>::from_bytes(&b)
                    .and_then(|c| hybrid_decrypt::<Ristretto255>(&s, &c));
                assert!(ok.is_err(), "byte {i} bit {bit}");
            }
        }
    }

    #[test]
    fn random_forgeries_fail() {
        let mut rng = ChaCha20Rng::seed_from_u64(16);
        let s = <Ristretto255 as Group>::Scalar::random_nonzero(&mut rng);
        for _ in 0..1000 {
            let mut body = vec![0u8; 40];
            rng.fill_bytes(&mut body);
            let mut nonce = [0u8; 12];
            rng.fill_bytes(&mut nonce);
            let forged = HybridCiphertext::<Ristretto255> {
                kem: Ristretto255::exp_g(&ScalarField::random(&mut rng)),
                nonce,
                body,
            };
            assert_eq!(hybrid_decrypt::<Ristretto255>(&s, &forged), Err(Error::AuthenticationFailure));
        }
    }
}
