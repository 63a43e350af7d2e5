//! Learned binary hashing with a tangent-matching auto-encoder.
//!
//! A three-layer tanh auto-encoder is trained so that its reconstruction,
//! its Jacobian (matched to local tangent-space projectors), and the
//! near-binary spread of its hidden layer are all good. Codes are the signs
//! of the hidden pre-activations and are searched by Hamming distance.
//!
//! The main pieces:
//!
//! * [`vecs`] and [`data`]: reading vectors and scaling them into the unit ball.
//! * [`tangent`]: local PCA tangent estimates.
//! * [`net`] and [`objective`]: the network, its cost, and analytic gradients.
//! * [`variants`]: the comparison models (no Jacobian term, denoising, contractive, LSH).
//! * [`train`]: PCA initialization and mini-batch descent with a Wolfe line search.
//! * [`codes`], [`retrieval`], [`metrics`]: encoding, search, and recall curves.

pub mod codes;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod linesearch;
pub mod metrics;
pub mod net;
pub mod objective;
pub mod oracle;
pub mod retrieval;
pub mod synth;
pub mod tangent;
pub mod train;
pub mod variants;
pub mod vecs;

mod binio;

pub use codes::{encode, hamming_topk, BinaryCodes};
pub use data::{DataMatrix, Normalizer};
pub use error::{Error, Result};
pub use metrics::{m_recall, recall_at, recall_curve, RecallCurve};
pub use net::{forward, jacobian, NetworkParams};
pub use objective::{Cost, ObjectiveConfig};
pub use retrieval::{euclid_topk, rerank, GroundTruth};
pub use tangent::{estimate_all, estimate_tangent, Projector, TangentBasis};
pub use train::{init_params, train, TrainConfig, TrainReport};
pub use variants::Method;
