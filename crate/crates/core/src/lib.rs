//! Exact subgraph matching with a learned candidate-ordering policy.
//!
//! The crate is split into:
//!
//! * [`graph`]: labeled graphs, the `t`/`v`/`e` file format, initial node
//!   encodings, and random-walk query sampling with ground truth.
//! * [`search`]: filtering, query ordering, local candidates, and the
//!   backtracking engine with promise-based restarts, plus an exhaustive
//!   oracle and a match verifier.
//! * [`tensor`]: a small dense reverse-mode autodiff tape.
//! * [`model`]: the query-conditioned matching network used as a search policy.
//! * [`train`]: self-supervised training from search trees.
//! * [`bench`]: evaluation harness, solve-time curves, config files, and CLI.

pub mod graph;
pub mod search;
pub mod model;
pub mod tensor;
pub mod train;
pub mod bench;
