//! Mining and auditing of matching-based shortcuts in labeled text
//! classification datasets.
//!
//! The pipeline: load a pre-annotated [`corpus::Dataset`], [`miner::mine`]
//! one- and two-slot POS [`template::Template`]s with their coverage and
//! productivity, optionally merge semantically similar siblings with
//! [`aggregate::aggregate`], then inspect groups of shortcuts with the
//! [`whatif`] engine and lay them out with [`projection`].

pub mod aggregate;
pub mod artifact;
pub mod corpus;
pub mod miner;
pub mod projection;
pub mod stats;
pub mod template;
pub mod whatif;

pub use artifact::{MinedArtifact, ShortcutNode, ROOT_ID};
pub use corpus::{Dataset, Instance, Token};
pub use miner::{mine, MiningConfig};
pub use stats::{NodeStats, Quotient, ShortcutStats};
pub use template::{Slot, SlotWord, Template, WordSet};
