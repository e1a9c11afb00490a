//! A sandboxed laboratory for two-stage SQL/script quine worms.
//!
//! Every component is a purpose-built miniature: [`minisql`] runs the
//! server-stage batches, [`pagescript`] runs the client-stage script,
//! [`quineforge`] builds the self-reproducing egg, [`websim`] wires both
//! stages into a discrete-event model of a few web sites, and [`sentinel`]
//! implements the countermeasures. [`scenario`] loads worlds from TOML.
//! Nothing here touches a real database, browser or network.

pub mod minisql;
pub mod pagescript;
pub mod quineforge;
pub mod scenario;
pub mod sentinel;
pub mod websim;
