//! Message log of a simulated protocol run.
//!
//! Payloads carry the full values (the simulation is white-box). Use
//! [`ProtocolTranscript::view_for`] to get what a single role would observe.

use std::fmt;

use crate::tensor::{Matrix, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    NoiseGenerator,
    Aggregator,
    Site(usize),
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::NoiseGenerator => write!(f, "noise-generator"),
            Role::Aggregator => write!(f, "aggregator"),
            Role::Site(s) => write!(f, "site-{s}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PayloadKind {
    /// Zero-sum share from the noise generator.
    EShare,
    /// Share from the aggregator, subtracted again after upload.
    FShare,
    /// A site's own noise; sender and receiver are the same site.
    LocalNoise,
    SiteUpload,
    Broadcast,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Scalar(f64),
    Matrix(Matrix),
    Tensor(Tensor3),
}

impl Payload {
    /// Size in floats.
    pub fn len(&self) -> usize {
        match self {
            Payload::Scalar(_) => 1,
            Payload::Matrix(m) => m.len(),
            Payload::Tensor(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Payload::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&Matrix> {
        match self {
            Payload::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_tensor(&self) -> Option<&Tensor3> {
        match self {
            Payload::Tensor(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub round: u32,
    pub sender: Role,
    pub receiver: Role,
    pub kind: PayloadKind,
    pub payload: Payload,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProtocolTranscript {
    messages: Vec<Message>,
}

impl ProtocolTranscript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, round: u32, sender: Role, receiver: Role, kind: PayloadKind, payload: Payload) {
        self.messages.push(Message {
            round,
            sender,
            receiver,
            kind,
            payload,
        });
    }

    pub fn extend(&mut self, other: ProtocolTranscript) {
        self.messages.extend(other.messages);
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn filter(&self, round: u32, kind: PayloadKind) -> impl Iterator<Item = &Message> {
        self.messages
            .iter()
            .filter(move |m| m.round == round && m.kind == kind)
    }

    /// The message of `kind` in `round` that involves site `s`, as sender for
    /// uploads and local noise, as receiver for shares.
    pub fn for_site(&self, round: u32, kind: PayloadKind, s: usize) -> Option<&Message> {
        self.filter(round, kind).find(|m| match kind {
            PayloadKind::SiteUpload | PayloadKind::LocalNoise => m.sender == Role::Site(s),
            _ => m.receiver == Role::Site(s),
        })
    }

    /// Messages `role` sent or received.
    pub fn view_for(&self, role: Role) -> ProtocolTranscript {
        ProtocolTranscript {
            messages: self
                .messages
                .iter()
                .filter(|m| m.sender == role || m.receiver == role)
                .cloned()
                .collect(),
        }
    }

    /// Total floats sent by sites to the aggregator in `round`.
    pub fn upload_floats(&self, round: u32) -> usize {
        self.filter(round, PayloadKind::SiteUpload)
            .map(|m| m.payload.len())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ProtocolTranscript {
        let mut t = ProtocolTranscript::new();
        t.push(1, Role::NoiseGenerator, Role::Site(0), PayloadKind::EShare, Payload::Scalar(0.5));
        t.push(1, Role::Aggregator, Role::Site(0), PayloadKind::FShare, Payload::Scalar(0.1));
        t.push(1, Role::Site(0), Role::Site(0), PayloadKind::LocalNoise, Payload::Scalar(0.2));
        t.push(1, Role::Site(0), Role::Aggregator, PayloadKind::SiteUpload, Payload::Scalar(1.0));
        t.push(1, Role::NoiseGenerator, Role::Site(1), PayloadKind::EShare, Payload::Scalar(-0.5));
        t
    }

    #[test]
    fn redacted_views() {
        let t = sample();
        let agg = t.view_for(Role::Aggregator);
        assert_eq!(agg.len(), 2);
        assert!(agg.messages().iter().all(|m| m.kind != PayloadKind::EShare));
        assert!(agg.messages().iter().all(|m| m.kind != PayloadKind::LocalNoise));
        assert_eq!(t.view_for(Role::Site(0)).len(), 4);
        assert_eq!(t.view_for(Role::NoiseGenerator).len(), 2);
    }

    #[test]
    fn lookup_and_sizes() {
        let t = sample();
        let e = t.for_site(1, PayloadKind::EShare, 1).unwrap();
        assert_eq!(e.payload.as_scalar(), Some(-0.5));
        assert_eq!(t.for_site(1, PayloadKind::SiteUpload, 0).unwrap().payload.as_scalar(), Some(1.0));
        assert!(t.for_site(2, PayloadKind::EShare, 0).is_none());
        assert_eq!(t.upload_floats(1), 1);
        assert_eq!(Payload::Matrix(Matrix::zeros(3, 3)).len(), 9);
        assert_eq!(Role::Site(4).to_string(), "site-4");
    }
}
