//! Node-distribution optimization of simplicial meshes by tracking a
//! target density with pre-shape derivatives.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expr;
pub mod fields;
pub mod linalg;
pub mod mesh;
pub mod metric;
pub mod optimizer;
pub mod preshape;
pub mod verify;

pub use error::{Error, Result};
pub use expr::Expr;
pub use fields::{build_target, current_density, estimate_gm, CellField, NodalField, TargetSpec};
pub use mesh::{CellGeometry, Frame, Point, SimplicialMesh};
pub use preshape::{assemble_derivative, objective, Component, DerivativeCovector, PreShapeState};
