//! Hashing, packed encoding, keys, addresses and signatures.
//!
//! The hash is keccak-256 with the original `0x01` multi-rate padding (not the
//! FIPS-202 `0x06` domain byte). Keys are secp256k1; an address is the last
//! 20 bytes of the keccak-256 of the uncompressed public key without its
//! `0x04` tag. Signatures are deterministic (RFC 6979) and recoverable.

use std::fmt;
use std::str::FromStr;

use k256::ecdsa::{RecoveryId, Signature as EcdsaSignature, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("malformed hex: {0}")]
    MalformedHex(String),
    #[error("expected {expected} bytes, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("malformed key")]
    MalformedKey,
}

// ---------------------------------------------------------------------------
// keccak-256
// ---------------------------------------------------------------------------

const ROUND_CONSTANTS: [u64; 24] = [
    0x0000000000000001,
    0x0000000000008082,
    0x800000000000808a,
    0x8000000080008000,
    0x000000000000808b,
    0x0000000080000001,
    0x8000000080008081,
    0x8000000000008009,
    0x000000000000008a,
    0x0000000000000088,
    0x0000000080008009,
    0x000000008000000a,
    0x000000008000808b,
    0x800000000000008b,
    0x8000000000008089,
    0x8000000000008003,
    0x8000000000008002,
    0x8000000000000080,
    0x000000000000800a,
    0x800000008000000a,
    0x8000000080008081,
    0x8000000000008080,
    0x0000000080000001,
    0x8000000080008008,
];

// Rotation offsets and lane permutation for the combined rho/pi step,
// walking the pi cycle starting from lane 1.
const RHO: [u32; 24] = [
    1, 3, 6, 10, 15, 21, 28, 36, 45, 55, 2, 14, 27, 41, 56, 8, 25, 43, 62, 18, 39, 61, 20, 44,
];
const PI: [usize; 24] = [
    10, 7, 11, 17, 18, 3, 5, 16, 8, 21, 24, 4, 15, 23, 19, 13, 12, 2, 20, 14, 22, 9, 6, 1,
];

/// Keccak-f[1600] permutation over 25 little-endian lanes.
pub fn keccak_f1600(state: &mut [u64; 25]) {
    for rc in ROUND_CONSTANTS {
        // theta
        let mut c = [0u64; 5];
        for x in 0..5 {
            c[x] = state[x] ^ state[x + 5] ^ state[x + 10] ^ state[x + 15] ^ state[x + 20];
        }
        for x in 0..5 {
            let d = c[(x + 4) % 5] ^ c[(x + 1) % 5].rotate_left(1);
            for y in 0..5 {
                state[x + 5 * y] ^= d;
            }
        }
        // rho + pi
        let mut carry = state[1];
        for i in 0..24 {
            let j = PI[i];
            let tmp = state[j];
            state[j] = carry.rotate_left(RHO[i]);
            carry = tmp;
        }
        // chi
        for y in 0..5 {
            let row = [
                state[5 * y],
                state[5 * y + 1],
                state[5 * y + 2],
                state[5 * y + 3],
                state[5 * y + 4],
            ];
            for x in 0..5 {
                state[5 * y + x] = row[x] ^ (!row[(x + 1) % 5] & row[(x + 2) % 5]);
            }
        }
        // iota
        state[0] ^= rc;
    }
}

const KECCAK256_RATE: usize = 136;

fn absorb_block(state: &mut [u64; 25], block: &[u8]) {
    for (lane, chunk) in state.iter_mut().zip(block.chunks_exact(8)) {
        let mut word = [0u8; 8];
        word.copy_from_slice(chunk);
        *lane ^= u64::from_le_bytes(word);
    }
    keccak_f1600(state);
}

/// keccak-256 digest of `data`.
pub fn keccak256(data: &[u8]) -> Digest32 {
    let mut state = [0u64; 25];
    let mut blocks = data.chunks_exact(KECCAK256_RATE);
    for block in blocks.by_ref() {
        absorb_block(&mut state, block);
    }
    let rest = blocks.remainder();
    let mut last = [0u8; KECCAK256_RATE];
    last[..rest.len()].copy_from_slice(rest);
    last[rest.len()] ^= 0x01;
    last[KECCAK256_RATE - 1] ^= 0x80;
    absorb_block(&mut state, &last);

    let mut out = [0u8; 32];
    for (chunk, lane) in out.chunks_exact_mut(8).zip(state.iter()) {
        chunk.copy_from_slice(&lane.to_le_bytes());
    }
    Digest32(out)
}

/// Number of 32-byte words covered by `len` bytes, as charged by the gas meter.
pub fn word_count(len: usize) -> u64 {
    len.div_ceil(32) as u64
}

// ---------------------------------------------------------------------------
// Fixed-width byte newtypes
// ---------------------------------------------------------------------------

fn decode_hex_fixed<const N: usize>(s: &str) -> Result<[u8; N], CryptoError> {
    let body = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .ok_or_else(|| CryptoError::MalformedHex(s.to_string()))?;
    let bytes = hex::decode(body).map_err(|_| CryptoError::MalformedHex(s.to_string()))?;
    let actual = bytes.len();
    bytes.try_into().map_err(|_| CryptoError::BadLength {
        expected: N,
        actual,
    })
}

macro_rules! hex_newtype {
    ($name:ident, $len:expr) => {
        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                format!("0x{}", hex::encode(self.0))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl FromStr for $name {
            type Err = CryptoError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                decode_hex_fixed::<$len>(s).map($name)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

/// A 32-byte keccak-256 digest; also the token id type.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest32(pub [u8; 32]);
hex_newtype!(Digest32, 32);

impl Digest32 {
    pub const ZERO: Digest32 = Digest32([0; 32]);
}

/// A 20-byte externally-owned-account identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);
hex_newtype!(Address, 20);

impl Address {
    pub const ZERO: Address = Address([0; 20]);

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 20]
    }
}

/// Uncompressed SEC1 secp256k1 public key (`0x04 || X || Y`).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(pub [u8; 65]);
hex_newtype!(PublicKey, 65);

impl PublicKey {
    fn verifying_key(&self) -> Result<VerifyingKey, CryptoError> {
        VerifyingKey::from_sec1_bytes(&self.0).map_err(|_| CryptoError::MalformedKey)
    }
}

// ---------------------------------------------------------------------------
// Packed encoding
// ---------------------------------------------------------------------------

/// Tightly packed encoding: each address's 20 raw bytes in order, then the
/// timestamp as a 32-byte big-endian integer.
pub fn encode_packed(addresses: &[Address], timestamp: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(addresses.len() * Address::LEN + 32);
    for address in addresses {
        out.extend_from_slice(&address.0);
    }
    out.extend_from_slice(&uint256_be(timestamp));
    out
}

/// `value` widened to a 32-byte big-endian word.
pub fn uint256_be(value: u64) -> [u8; 32] {
    let mut word = [0u8; 32];
    word[24..].copy_from_slice(&value.to_be_bytes());
    word
}

// ---------------------------------------------------------------------------
// Keys, addresses, signatures
// ---------------------------------------------------------------------------

/// Address of a public key: last 20 bytes of keccak-256 over the key with
/// its leading SEC1 tag removed.
pub fn derive_address(public_key: &PublicKey) -> Result<Address, CryptoError> {
    if public_key.0[0] != 0x04 {
        return Err(CryptoError::MalformedKey);
    }
    public_key.verifying_key()?;
    let digest = keccak256(&public_key.0[1..]);
    let mut out = [0u8; 20];
    out.copy_from_slice(&digest.0[12..]);
    Ok(Address(out))
}

#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public_key: PublicKey,
    address: Address,
}

impl KeyPair {
    pub fn from_private_key(private_key: [u8; 32]) -> Result<Self, CryptoError> {
        let signing =
            SigningKey::from_bytes(&private_key.into()).map_err(|_| CryptoError::MalformedKey)?;
        let encoded = signing.verifying_key().to_encoded_point(false);
        let mut bytes = [0u8; 65];
        bytes.copy_from_slice(encoded.as_bytes());
        let public_key = PublicKey(bytes);
        let address = derive_address(&public_key)?;
        Ok(Self {
            signing,
            public_key,
            address,
        })
    }

    /// Deterministic key for a symbolic `name` under `seed`. The scalar is
    /// `keccak256(seed_be || name || counter)`, bumping the counter until it
    /// lands inside the curve order.
    pub fn from_seed(seed: u64, name: &str) -> Self {
        let mut counter: u32 = 0;
        loop {
            let mut material = Vec::with_capacity(8 + name.len() + 4);
            material.extend_from_slice(&seed.to_be_bytes());
            material.extend_from_slice(name.as_bytes());
            material.extend_from_slice(&counter.to_be_bytes());
            if let Ok(pair) = Self::from_private_key(keccak256(&material).0) {
                return pair;
            }
            counter += 1;
        }
    }

    pub fn private_key(&self) -> [u8; 32] {
        self.signing.to_bytes().into()
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public_key
    }

    pub fn address(&self) -> Address {
        self.address
    }

    /// Signs `keccak256(message)`.
    pub fn sign(&self, message: &[u8]) -> Signature {
        let prehash = keccak256(message);
        let (sig, recovery) = self
            .signing
            .sign_prehash_recoverable(&prehash.0)
            .expect("32-byte prehash is always signable");
        let mut bytes = [0u8; 65];
        bytes[..64].copy_from_slice(&sig.to_bytes());
        bytes[64] = recovery.to_byte();
        Signature {
            bytes: SignatureBytes(bytes),
            signer: self.address,
        }
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("address", &self.address)
            .finish_non_exhaustive()
    }
}

/// `r || s || recovery_id`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignatureBytes(pub [u8; 65]);
hex_newtype!(SignatureBytes, 65);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub bytes: SignatureBytes,
    pub signer: Address,
}

impl Signature {
    fn parts(&self) -> Option<(EcdsaSignature, RecoveryId)> {
        let sig = EcdsaSignature::from_slice(&self.bytes.0[..64]).ok()?;
        let recovery = RecoveryId::from_byte(self.bytes.0[64])?;
        Some((sig, recovery))
    }

    /// Public key that produced this signature over `message`, if it also
    /// matches the claimed signer address.
    pub fn recover(&self, message: &[u8]) -> Option<PublicKey> {
        let (sig, recovery) = self.parts()?;
        let prehash = keccak256(message);
        let key = VerifyingKey::recover_from_prehash(&prehash.0, &sig, recovery).ok()?;
        let mut bytes = [0u8; 65];
        bytes.copy_from_slice(key.to_encoded_point(false).as_bytes());
        let public_key = PublicKey(bytes);
        (derive_address(&public_key).ok()? == self.signer).then_some(public_key)
    }
}

/// True iff `signature` is a valid signature of `message` by `public_key` and
/// the signature's claimed signer is that key's address.
pub fn verify(public_key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    use k256::ecdsa::signature::hazmat::PrehashVerifier;

    let Ok(key) = public_key.verifying_key() else {
        return false;
    };
    if derive_address(public_key).ok() != Some(signature.signer) {
        return false;
    }
    let Some((sig, _)) = signature.parts() else {
        return false;
    };
    key.verify_prehash(&keccak256(message).0, &sig).is_ok()
}
