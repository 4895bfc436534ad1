//! Independent checks of the derivative assembly and its structure.

pub mod audit;
pub mod circle;
pub mod fd;
pub mod flow;

pub use audit::{area_tangential_nullity, audit, AuditReport};
pub use circle::{
    circle_derivative_assembled, circle_derivative_closed_form, CircleOracle, Pairing,
};
pub use fd::{fd_check, fd_check_covector, FdReport};
pub use flow::{minimal_surface_flow, FlowReport};
