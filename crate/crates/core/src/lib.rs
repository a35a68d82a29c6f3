//! Day-ahead economic dispatch with uncertain demand response.
//!
//! Network data and PTDFs live in [`netmodel`], DR-ratio laws and scenario
//! sets in [`uncertainty`], provider offers in [`market`]. The four dispatch
//! models are assembled in [`dispatch`] and solved by [`qpcore`]. Scenario
//! removal, the violation-probability certificate and out-of-sample
//! evaluation are in [`removal`], [`riskcert`] and [`evaluate`]; [`expcli`]
//! drives the experiments.

pub mod market;
pub mod dispatch;
pub mod evaluate;
pub mod expcli;
pub mod netmodel;
pub mod qpcore;
pub mod removal;
pub mod riskcert;
pub mod uncertainty;
