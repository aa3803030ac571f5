//! Signed gradient uploads.
//!
//! The signature scheme is pluggable through [`SignatureScheme`]; the default
//! is Ed25519, which is deterministic and needs no randomness at signing time.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};

use super::codec::upload_payload;
use super::LedgerError;
use crate::model::{ClientId, GradientVector};
use crate::rng::{self, Stream};

#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub secret: Vec<u8>,
    pub public: Vec<u8>,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &hex::encode(&self.public))
            .finish_non_exhaustive()
    }
}

pub trait SignatureScheme: Send + Sync + fmt::Debug {
    fn keypair_from_seed(&self, seed: [u8; 32]) -> KeyPair;
    fn sign(&self, secret: &[u8], msg: &[u8]) -> Vec<u8>;
    fn verify(&self, public: &[u8], msg: &[u8], signature: &[u8]) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Ed25519Scheme;

impl SignatureScheme for Ed25519Scheme {
    fn keypair_from_seed(&self, seed: [u8; 32]) -> KeyPair {
        let sk = SigningKey::from_bytes(&seed);
        KeyPair {
            secret: seed.to_vec(),
            public: sk.verifying_key().to_bytes().to_vec(),
        }
    }

    fn sign(&self, secret: &[u8], msg: &[u8]) -> Vec<u8> {
        let seed: [u8; 32] = secret.try_into().expect("ed25519 secret is 32 bytes");
        SigningKey::from_bytes(&seed).sign(msg).to_bytes().to_vec()
    }

    fn verify(&self, public: &[u8], msg: &[u8], signature: &[u8]) -> bool {
        let Ok(pk) = <[u8; 32]>::try_from(public) else {
            return false;
        };
        let Ok(vk) = VerifyingKey::from_bytes(&pk) else {
            return false;
        };
        let Ok(sig) = Signature::from_slice(signature) else {
            return false;
        };
        vk.verify(msg, &sig).is_ok()
    }
}

/// Private keys, one per client; held by the clients.
#[derive(Debug, Clone)]
pub struct ClientKeys {
    scheme: Arc<dyn SignatureScheme>,
    keys: BTreeMap<ClientId, KeyPair>,
}

/// Public keys; held by every miner.
#[derive(Debug, Clone)]
pub struct KeyRegistry {
    scheme: Arc<dyn SignatureScheme>,
    public: BTreeMap<ClientId, Vec<u8>>,
}

impl ClientKeys {
    /// Derives a keypair for clients `0..n_clients` from `seed`.
    pub fn generate(scheme: Arc<dyn SignatureScheme>, n_clients: usize, seed: u64) -> Self {
        let keys = (0..n_clients as u32)
            .map(|c| {
                let mut material = [0u8; 32];
                for (i, chunk) in material.chunks_mut(8).enumerate() {
                    let word = rng::derive(seed, Stream::Keys, &[u64::from(c), i as u64]);
                    chunk.copy_from_slice(&word.to_le_bytes());
                }
                (ClientId(c), scheme.keypair_from_seed(material))
            })
            .collect();
        ClientKeys { scheme, keys }
    }

    pub fn registry(&self) -> KeyRegistry {
        KeyRegistry {
            scheme: Arc::clone(&self.scheme),
            public: self.keys.iter().map(|(c, k)| (*c, k.public.clone())).collect(),
        }
    }

    pub fn get(&self, client: ClientId) -> Option<&KeyPair> {
        self.keys.get(&client)
    }

    pub fn scheme(&self) -> &dyn SignatureScheme {
        self.scheme.as_ref()
    }
}

impl KeyRegistry {
    pub fn public_key(&self, client: ClientId) -> Option<&[u8]> {
        self.public.get(&client).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.public.len()
    }

    pub fn is_empty(&self) -> bool {
        self.public.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedUpload {
    pub gradient: GradientVector,
    pub signer: ClientId,
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UploadRejection {
    UnknownSigner,
    /// The gradient claims a different owner than the signer.
    SignerMismatch,
    BadSignature,
    NonFiniteGradient,
}

pub fn sign_upload(keys: &ClientKeys, gradient: GradientVector) -> Result<SignedUpload, LedgerError> {
    let client = gradient
        .client
        .ok_or(LedgerError::UnknownIdentity(ClientId(u32::MAX)))?;
    let pair = keys.get(client).ok_or(LedgerError::UnknownIdentity(client))?;
    let signature = keys.scheme.sign(&pair.secret, &upload_payload(client, &gradient));
    Ok(SignedUpload {
        gradient,
        signer: client,
        signature,
    })
}

pub fn check_upload(registry: &KeyRegistry, upload: &SignedUpload) -> Result<(), UploadRejection> {
    let public = registry
        .public_key(upload.signer)
        .ok_or(UploadRejection::UnknownSigner)?;
    if upload.gradient.client != Some(upload.signer) {
        return Err(UploadRejection::SignerMismatch);
    }
    if !upload.gradient.is_finite() {
        return Err(UploadRejection::NonFiniteGradient);
    }
    let payload = upload_payload(upload.signer, &upload.gradient);
    if registry.scheme.verify(public, &payload, &upload.signature) {
        Ok(())
    } else {
        Err(UploadRejection::BadSignature)
    }
}

pub fn verify_upload(registry: &KeyRegistry, upload: &SignedUpload) -> bool {
    check_upload(registry, upload).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys() -> ClientKeys {
        ClientKeys::generate(Arc::new(Ed25519Scheme), 4, 11)
    }

    #[test]
    fn round_trip_and_tamper() {
        let keys = keys();
        let reg = keys.registry();
        let g = GradientVector::local(ClientId(2), 3, vec![0.5, -1.0, 2.0]);
        let up = sign_upload(&keys, g).unwrap();
        assert!(verify_upload(&reg, &up));

        let mut flipped = up.clone();
        let bits = flipped.gradient.values[1].to_bits() ^ 1;
        flipped.gradient.values[1] = f64::from_bits(bits);
        assert_eq!(check_upload(&reg, &flipped), Err(UploadRejection::BadSignature));

        let mut replayed = up.clone();
        replayed.gradient.round = 4;
        assert!(!verify_upload(&reg, &replayed));
    }

    #[test]
    fn other_clients_key_rejects() {
        let keys = keys();
        let reg = keys.registry();
        let up = sign_upload(&keys, GradientVector::local(ClientId(1), 1, vec![1.0])).unwrap();
        // claim the upload came from client 0: its public key must reject
        let mut forged = up.clone();
        forged.signer = ClientId(0);
        forged.gradient.client = Some(ClientId(0));
        assert_eq!(check_upload(&reg, &forged), Err(UploadRejection::BadSignature));
        let mut stranger = up;
        stranger.signer = ClientId(40);
        assert_eq!(check_upload(&reg, &stranger), Err(UploadRejection::UnknownSigner));
    }

    #[test]
    fn unknown_client_cannot_sign() {
        let keys = keys();
        let g = GradientVector::local(ClientId(9), 1, vec![1.0]);
        assert_eq!(sign_upload(&keys, g), Err(LedgerError::UnknownIdentity(ClientId(9))));
    }

    #[test]
    fn key_derivation_is_deterministic() {
        let a = keys();
        let b = keys();
        assert_eq!(a.get(ClientId(3)), b.get(ClientId(3)));
        assert_ne!(a.get(ClientId(3)), a.get(ClientId(2)));
    }
}
