//! Multi-tenant service-network customization: feature models, change
//! events, the shared data plane, the collaboration control plane, the
//! adaptation policy language and the management service.

pub mod assets;
pub mod control;
pub mod events;
pub mod feature_model;
pub mod management;
pub mod network;
pub mod policy;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod value;

pub use value::Value;
