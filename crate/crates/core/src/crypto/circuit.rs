//! Prepare/unlock constraint systems and the pluggable proof backend.
//!
//! Each [`CircuitKind`] has a frozen schema (registry version [`SCHEMA_VERSION`])
//! that splits its inputs into public statement fields and private witness
//! fields. Statements serialize to canonical key-sorted JSON.
//!
//! [`TransparentBackend`] is a reference backend: its proofs carry the full
//! witness and verification re-evaluates every constraint. It is sound but
//! provides **no zero-knowledge**; a SNARK backend can be slotted in behind
//! [`ProofBackend`] without touching callers.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::hash::{amount_digest, sha256, HashLock};
use super::secret::Secret256;
use super::secret_chain::SecretChain;
use super::sig::{verify_sig, PublicKey, Signature};
use crate::error::ProofError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitKind {
    /// Endpoint view of a hop: every secret and offset private.
    PrepareEndpoint,
    /// Intermediary view of a hop: the offset is public.
    PrepareIntermediary,
    /// Unlock on the terminal chain: preimage, amount and counter-signature public.
    UnlockTerminal,
    /// Unlock on an upstream chain: the preimage is derived from the downstream one.
    UnlockIntermediary,
}

impl CircuitKind {
    pub const ALL: [CircuitKind; 4] = [
        CircuitKind::PrepareEndpoint,
        CircuitKind::PrepareIntermediary,
        CircuitKind::UnlockTerminal,
        CircuitKind::UnlockIntermediary,
    ];

    pub fn schema(self) -> &'static Schema {
        match self {
            CircuitKind::PrepareEndpoint => &PREPARE_ENDPOINT,
            CircuitKind::PrepareIntermediary => &PREPARE_INTERMEDIARY,
            CircuitKind::UnlockTerminal => &UNLOCK_TERMINAL,
            CircuitKind::UnlockIntermediary => &UNLOCK_INTERMEDIARY,
        }
    }

    fn constraints(self) -> &'static [Constraint] {
        use Constraint::*;
        match self {
            CircuitKind::PrepareEndpoint | CircuitKind::PrepareIntermediary => {
                &[Xor, And, HashPrimary, HashSecondary, HashNext]
            }
            CircuitKind::UnlockTerminal => &[HashPrimary, AmountSignature],
            CircuitKind::UnlockIntermediary => &[Xor, HashPrimary, AmountSignature],
        }
    }
}

impl fmt::Display for CircuitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CircuitKind::PrepareEndpoint => "prepare_endpoint",
            CircuitKind::PrepareIntermediary => "prepare_intermediary",
            CircuitKind::UnlockTerminal => "unlock_terminal",
            CircuitKind::UnlockIntermediary => "unlock_intermediary",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldType {
    Digest,
    Secret,
    Amount,
    Signature,
    PublicKey,
}

/// Field layout of one circuit kind.
#[derive(Debug)]
pub struct Schema {
    pub public: &'static [(&'static str, FieldType)],
    pub private: &'static [(&'static str, FieldType)],
}

const PREPARE_ENDPOINT: Schema = Schema {
    public: &[
        ("lock", FieldType::Digest),
        ("lock_next", FieldType::Digest),
        ("lock_secondary", FieldType::Digest),
    ],
    private: &[
        ("offset", FieldType::Secret),
        ("secret", FieldType::Secret),
        ("secret_and", FieldType::Secret),
        ("secret_next", FieldType::Secret),
    ],
};

const PREPARE_INTERMEDIARY: Schema = Schema {
    public: &[
        ("lock", FieldType::Digest),
        ("lock_next", FieldType::Digest),
        ("lock_secondary", FieldType::Digest),
        ("offset", FieldType::Secret),
    ],
    private: &[
        ("secret", FieldType::Secret),
        ("secret_and", FieldType::Secret),
        ("secret_next", FieldType::Secret),
    ],
};

const UNLOCK_TERMINAL: Schema = Schema {
    public: &[
        ("amount", FieldType::Amount),
        ("lock", FieldType::Digest),
        ("secret", FieldType::Secret),
        ("signature", FieldType::Signature),
        ("signer", FieldType::PublicKey),
    ],
    private: &[],
};

const UNLOCK_INTERMEDIARY: Schema = Schema {
    public: &[
        ("amount", FieldType::Amount),
        ("lock", FieldType::Digest),
        ("secret", FieldType::Secret),
        ("signature", FieldType::Signature),
        ("signer", FieldType::PublicKey),
    ],
    private: &[("offset", FieldType::Secret), ("secret_next", FieldType::Secret)],
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Constraint {
    /// secret = secret_next ^ offset
    Xor,
    /// secret_and = secret & secret_next
    And,
    /// lock = SHA-256(secret)
    HashPrimary,
    /// lock_secondary = SHA-256(secret_and || offset)
    HashSecondary,
    /// lock_next = SHA-256(secret_next)
    HashNext,
    /// VSIG(signature, signer, h(lock, amount))
    AmountSignature,
}

impl Constraint {
    fn name(self) -> &'static str {
        match self {
            Constraint::Xor => "xor",
            Constraint::And => "and",
            Constraint::HashPrimary => "hash_primary",
            Constraint::HashSecondary => "hash_secondary",
            Constraint::HashNext => "hash_next",
            Constraint::AmountSignature => "vsig",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Value {
    Digest(HashLock),
    Secret(Secret256),
    Amount(u64),
    Signature(Signature),
    PublicKey(PublicKey),
}

impl Value {
    fn field_type(&self) -> FieldType {
        match self {
            Value::Digest(_) => FieldType::Digest,
            Value::Secret(_) => FieldType::Secret,
            Value::Amount(_) => FieldType::Amount,
            Value::Signature(_) => FieldType::Signature,
            Value::PublicKey(_) => FieldType::PublicKey,
        }
    }
}

/// Public inputs of one circuit instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub kind: CircuitKind,
    pub version: u32,
    pub fields: BTreeMap<String, Value>,
}

/// Private inputs of one circuit instance.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub fields: BTreeMap<String, Value>,
}

impl Statement {
    pub fn new(kind: CircuitKind) -> Self {
        Statement {
            kind,
            version: SCHEMA_VERSION,
            fields: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.fields.insert(name.to_string(), value);
        self
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("statement serializes")
    }

    pub fn canonical_digest(&self) -> [u8; 32] {
        sha256(&self.canonical_bytes())
    }

    pub fn digest(&self, name: &str) -> Option<HashLock> {
        match self.fields.get(name) {
            Some(Value::Digest(d)) => Some(*d),
            _ => None,
        }
    }

    pub fn secret(&self, name: &str) -> Option<Secret256> {
        match self.fields.get(name) {
            Some(Value::Secret(s)) => Some(*s),
            _ => None,
        }
    }

    pub fn amount(&self) -> Option<u64> {
        match self.fields.get("amount") {
            Some(Value::Amount(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn signer(&self) -> Option<PublicKey> {
        match self.fields.get("signer") {
            Some(Value::PublicKey(pk)) => Some(*pk),
            _ => None,
        }
    }

    pub fn signature(&self) -> Option<&Signature> {
        match self.fields.get("signature") {
            Some(Value::Signature(s)) => Some(s),
            _ => None,
        }
    }
}

impl Witness {
    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.fields.insert(name.to_string(), value);
        self
    }
}

fn check_fields(
    map: &BTreeMap<String, Value>,
    layout: &[(&'static str, FieldType)],
    side: &str,
) -> Result<(), ProofError> {
    if map.len() != layout.len() {
        return Err(ProofError::MalformedStatement(format!(
            "{side}: expected {} fields, got {}",
            layout.len(),
            map.len()
        )));
    }
    for (name, ty) in layout {
        match map.get(*name) {
            Some(v) if v.field_type() == *ty => {}
            Some(_) => {
                return Err(ProofError::MalformedStatement(format!(
                    "{side}: field {name} has wrong type"
                )))
            }
            None => {
                return Err(ProofError::MalformedStatement(format!(
                    "{side}: missing field {name}"
                )))
            }
        }
    }
    Ok(())
}

/// Validates statement and witness layouts against the registry.
pub fn check_schema(kind: CircuitKind, st: &Statement, w: &Witness) -> Result<(), ProofError> {
    if st.kind != kind {
        return Err(ProofError::MalformedStatement(format!(
            "statement is {}, expected {kind}",
            st.kind
        )));
    }
    if st.version != SCHEMA_VERSION {
        return Err(ProofError::MalformedStatement(format!(
            "unknown schema version {}",
            st.version
        )));
    }
    let schema = kind.schema();
    check_fields(&st.fields, schema.public, "statement")?;
    check_fields(&w.fields, schema.private, "witness")
}

struct Assignment<'a> {
    st: &'a Statement,
    w: &'a Witness,
}

impl Assignment<'_> {
    fn get(&self, name: &str) -> &Value {
        self.st
            .fields
            .get(name)
            .or_else(|| self.w.fields.get(name))
            .expect("schema checked")
    }

    fn secret(&self, name: &str) -> Secret256 {
        match self.get(name) {
            Value::Secret(s) => *s,
            _ => unreachable!("schema checked"),
        }
    }

    fn digest(&self, name: &str) -> HashLock {
        match self.get(name) {
            Value::Digest(d) => *d,
            _ => unreachable!("schema checked"),
        }
    }

    fn holds(&self, c: Constraint) -> bool {
        match c {
            Constraint::Xor => {
                self.secret("secret") == self.secret("secret_next") ^ self.secret("offset")
            }
            Constraint::And => {
                self.secret("secret_and") == self.secret("secret") & self.secret("secret_next")
            }
            Constraint::HashPrimary => {
                HashLock::of_secret(&self.secret("secret")) == self.digest("lock")
            }
            Constraint::HashSecondary => {
                HashLock::of_pair(&self.secret("secret_and"), &self.secret("offset"))
                    == self.digest("lock_secondary")
            }
            Constraint::HashNext => {
                HashLock::of_secret(&self.secret("secret_next")) == self.digest("lock_next")
            }
            Constraint::AmountSignature => {
                let (Value::Amount(amount), Value::Signature(sig), Value::PublicKey(pk)) =
                    (self.get("amount"), self.get("signature"), self.get("signer"))
                else {
                    unreachable!("schema checked")
                };
                verify_sig(pk, &amount_digest(&self.digest("lock"), *amount), sig)
            }
        }
    }
}

/// Evaluates every constraint of `kind`; reports the first one that fails.
pub fn check_constraints(kind: CircuitKind, st: &Statement, w: &Witness) -> Result<(), ProofError> {
    check_schema(kind, st, w)?;
    let a = Assignment { st, w };
    for c in kind.constraints() {
        if !a.holds(*c) {
            return Err(ProofError::UnsatisfiedConstraint {
                kind,
                constraint: c.name(),
            });
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvingKey {
    pub kind: CircuitKind,
    pub version: u32,
    pub backend: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyingKey {
    pub kind: CircuitKind,
    pub version: u32,
    pub backend: String,
}

/// Backend-opaque attestation.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proof {
    pub kind: CircuitKind,
    pub backend: String,
    #[serde(with = "hex_bytes")]
    pub bytes: Vec<u8>,
}

impl Proof {
    pub fn digest(&self) -> [u8; 32] {
        sha256(&self.bytes)
    }
}

impl fmt::Debug for Proof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Proof({}, {}, {})",
            self.kind,
            self.backend,
            hex::encode(self.digest())
        )
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// The setup / prove / verify triple.
pub trait ProofBackend: Send + Sync {
    fn id(&self) -> &'static str;
    fn setup(&self, kind: CircuitKind) -> (ProvingKey, VerifyingKey);
    fn prove(&self, pk: &ProvingKey, st: &Statement, w: &Witness) -> Result<Proof, ProofError>;
    fn verify(&self, vk: &VerifyingKey, st: &Statement, proof: &Proof) -> bool;
}

/// Reference backend. Sound, complete, NOT zero-knowledge: the proof embeds the witness.
#[derive(Clone, Copy, Debug, Default)]
pub struct TransparentBackend;

#[derive(Serialize, Deserialize)]
struct TransparentProof {
    statement: String,
    witness: Witness,
}

impl ProofBackend for TransparentBackend {
    fn id(&self) -> &'static str {
        "transparent-v1"
    }

    fn setup(&self, kind: CircuitKind) -> (ProvingKey, VerifyingKey) {
        let backend = self.id().to_string();
        (
            ProvingKey {
                kind,
                version: SCHEMA_VERSION,
                backend: backend.clone(),
            },
            VerifyingKey {
                kind,
                version: SCHEMA_VERSION,
                backend,
            },
        )
    }

    fn prove(&self, pk: &ProvingKey, st: &Statement, w: &Witness) -> Result<Proof, ProofError> {
        if pk.backend != self.id() || pk.version != SCHEMA_VERSION {
            return Err(ProofError::KeyMismatch);
        }
        check_constraints(pk.kind, st, w)?;
        let body = TransparentProof {
            statement: hex::encode(st.canonical_digest()),
            witness: w.clone(),
        };
        Ok(Proof {
            kind: pk.kind,
            backend: self.id().to_string(),
            bytes: serde_json::to_vec(&body).expect("proof serializes"),
        })
    }

    fn verify(&self, vk: &VerifyingKey, st: &Statement, proof: &Proof) -> bool {
        if vk.backend != self.id() || proof.backend != self.id() || proof.kind != vk.kind {
            return false;
        }
        let Ok(body) = serde_json::from_slice::<TransparentProof>(&proof.bytes) else {
            return false;
        };
        body.statement == hex::encode(st.canonical_digest())
            && check_constraints(vk.kind, st, &body.witness).is_ok()
    }
}

/// Proves with the reference backend.
pub fn prove(kind: CircuitKind, st: &Statement, w: &Witness) -> Result<Proof, ProofError> {
    let backend = TransparentBackend;
    let (pk, _) = backend.setup(kind);
    backend.prove(&pk, st, w)
}

/// Verifies with the reference backend.
pub fn verify_proof(kind: CircuitKind, st: &Statement, proof: &Proof) -> bool {
    let backend = TransparentBackend;
    let (_, vk) = backend.setup(kind);
    backend.verify(&vk, st, proof)
}

/// Statement and witness of the prepare circuit for `hop`, in the endpoint or intermediary view.
pub fn prepare_instance(
    chain: &SecretChain,
    hop: usize,
    intermediary: bool,
) -> (Statement, Witness) {
    let secret = chain.primary(hop);
    let next = chain.primary(hop + 1);
    let and = chain.secondary(hop);
    let offset = chain.offset(hop);
    let kind = if intermediary {
        CircuitKind::PrepareIntermediary
    } else {
        CircuitKind::PrepareEndpoint
    };
    let mut st = Statement::new(kind)
        .with("lock", Value::Digest(HashLock::of_secret(&secret)))
        .with("lock_next", Value::Digest(HashLock::of_secret(&next)))
        .with("lock_secondary", Value::Digest(HashLock::of_pair(&and, &offset)));
    let mut w = Witness::default()
        .with("secret", Value::Secret(secret))
        .with("secret_next", Value::Secret(next))
        .with("secret_and", Value::Secret(and));
    if intermediary {
        st = st.with("offset", Value::Secret(offset));
    } else {
        w = w.with("offset", Value::Secret(offset));
    }
    (st, w)
}

pub fn unlock_terminal_instance(
    lock: HashLock,
    secret: Secret256,
    amount: u64,
    signature: Signature,
    signer: PublicKey,
) -> (Statement, Witness) {
    let st = Statement::new(CircuitKind::UnlockTerminal)
        .with("lock", Value::Digest(lock))
        .with("secret", Value::Secret(secret))
        .with("amount", Value::Amount(amount))
        .with("signature", Value::Signature(signature))
        .with("signer", Value::PublicKey(signer));
    (st, Witness::default())
}

#[allow(clippy::too_many_arguments)]
pub fn unlock_intermediary_instance(
    lock: HashLock,
    secret: Secret256,
    amount: u64,
    signature: Signature,
    signer: PublicKey,
    secret_next: Secret256,
    offset: Secret256,
) -> (Statement, Witness) {
    let st = Statement::new(CircuitKind::UnlockIntermediary)
        .with("lock", Value::Digest(lock))
        .with("secret", Value::Secret(secret))
        .with("amount", Value::Amount(amount))
        .with("signature", Value::Signature(signature))
        .with("signer", Value::PublicKey(signer));
    let w = Witness::default()
        .with("secret_next", Value::Secret(secret_next))
        .with("offset", Value::Secret(offset));
    (st, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::sig::KeyPair;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn chain(n: usize, seed: u64) -> SecretChain {
        SecretChain::derive(n, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn honest_prepare_intermediary_verifies() {
        let c = chain(1, 11);
        let (st, w) = prepare_instance(&c, 0, true);
        assert_eq!(st.secret("offset"), Some(c.offset(0)));
        let proof = prove(CircuitKind::PrepareIntermediary, &st, &w).unwrap();
        assert!(verify_proof(CircuitKind::PrepareIntermediary, &st, &proof));
    }

    #[test]
    fn endpoint_keeps_offset_private() {
        let c = chain(1, 12);
        let (st, w) = prepare_instance(&c, 0, false);
        assert!(st.secret("offset").is_none());
        assert!(w.fields.contains_key("offset"));
        let proof = prove(CircuitKind::PrepareEndpoint, &st, &w).unwrap();
        assert!(verify_proof(CircuitKind::PrepareEndpoint, &st, &proof));
    }

    #[test]
    fn wrong_and_value_fails_on_and_constraint() {
        let c = chain(1, 13);
        let (st, mut w) = prepare_instance(&c, 0, true);
        w.fields.insert(
            "secret_and".into(),
            Value::Secret(c.secondary(0).flip_bit(200)),
        );
        assert_eq!(
            prove(CircuitKind::PrepareIntermediary, &st, &w).unwrap_err(),
            ProofError::UnsatisfiedConstraint {
                kind: CircuitKind::PrepareIntermediary,
                constraint: "and"
            }
        );
    }

    #[test]
    fn signature_over_wrong_amount_fails_vsig() {
        let c = chain(1, 14);
        let bob = KeyPair::from_seed([4u8; 32]);
        let lock = HashLock::of_secret(&c.primary(1));
        let sig = bob.sign(&amount_digest(&lock, 53));
        let (st, w) = unlock_terminal_instance(lock, c.primary(1), 54, sig, bob.public());
        assert_eq!(
            prove(CircuitKind::UnlockTerminal, &st, &w).unwrap_err(),
            ProofError::UnsatisfiedConstraint {
                kind: CircuitKind::UnlockTerminal,
                constraint: "vsig"
            }
        );
    }

    #[test]
    fn proof_does_not_transfer_to_other_statement() {
        let c = chain(1, 15);
        let alice = KeyPair::from_seed([5u8; 32]);
        let lock = HashLock::of_secret(&c.primary(0));
        let sig = alice.sign(&amount_digest(&lock, 27));
        let (st, w) = unlock_intermediary_instance(
            lock,
            c.primary(0),
            27,
            sig.clone(),
            alice.public(),
            c.primary(1),
            c.offset(0),
        );
        let proof = prove(CircuitKind::UnlockIntermediary, &st, &w).unwrap();
        assert!(verify_proof(CircuitKind::UnlockIntermediary, &st, &proof));
        let other = st.clone().with("amount", Value::Amount(26));
        assert!(!verify_proof(CircuitKind::UnlockIntermediary, &other, &proof));
        assert!(!verify_proof(CircuitKind::UnlockTerminal, &st, &proof));
    }

    #[test]
    fn schema_mismatch_is_malformed() {
        let c = chain(1, 16);
        let (st, w) = prepare_instance(&c, 0, true);
        let st = st.with("extra", Value::Amount(1));
        assert!(matches!(
            prove(CircuitKind::PrepareIntermediary, &st, &w),
            Err(ProofError::MalformedStatement(_))
        ));
        let (st, w) = prepare_instance(&c, 0, true);
        assert!(matches!(
            prove(CircuitKind::PrepareEndpoint, &st, &w),
            Err(ProofError::MalformedStatement(_))
        ));
    }

    #[test]
    fn statement_json_is_key_sorted() {
        let c = chain(1, 17);
        let (st, _) = prepare_instance(&c, 0, true);
        let json = String::from_utf8(st.canonical_bytes()).unwrap();
        let lock = json.find("\"lock\"").unwrap();
        let next = json.find("\"lock_next\"").unwrap();
        let offset = json.find("\"offset\"").unwrap();
        assert!(lock < next && next < offset);
    }
}
