//! Black-box and blind adversary models: the oracle boundary, substitute
//! training, transfer-set generation, and the oracle wire protocol.

mod oracle;
mod substitute;
pub mod wire;

pub use oracle::{InProcessOracle, Oracle};
pub use substitute::{
    augment_spec, generate_transfer_set, train_substitute_blackbox, train_substitute_blind,
    AdversaryDataset, AttackKind, BlackBoxSession, NullHandling, RoundStats,
    SubstituteSchedule, TransferExample, TransferSet,
};
pub use wire::{OracleServer, RemoteOracle, ShutdownHandle, WireRequest, WireResponse};
