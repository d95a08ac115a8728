//! Coded transaction broadcast.
//!
//! Nodes never forward individual transactions. They send each peer a paced
//! stream of codewords, each the XOR of a few transactions drawn from a
//! sliding window, and recover transactions with a peeling decoder that
//! validates every degree-one result against a keyed short hash.

pub mod codeword;
pub mod decoder;
pub mod degree;
pub mod error;
pub mod fragment;
pub mod node;
pub mod params;
pub mod rate;
pub mod tx;
pub mod txid;
pub mod window;

pub use codeword::{encode, Codeword};
pub use decoder::{DecoderConfig, DecoderState, DecoderStats, LinkId, LossEvent};
pub use degree::DegreeDistribution;
pub use error::{Error, Result};
pub use fragment::{fragment, optimal_fragment_size, Fragment, FragmentStore};
pub use node::{Behavior, Message, NodeState, PeerSession, Received};
pub use params::ProtocolParams;
pub use rate::{RateController, RateParams};
pub use tx::{Digest, PayloadPool, Transaction};
pub use txid::{txid, HashKey, IdWidth, TransactionId};
pub use window::CodingWindow;
