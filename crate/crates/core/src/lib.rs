//! Control-flow graph morphing for a small register/stack ISA.
//!
//! A program's restricted CFG is embedded into a random target graph; the
//! rewritten program executes every target node, with the nodes that are
//! not on the original path running passivated so that their effects land
//! in a trash region. The crate also contains the interpreter used for
//! equivalence checking and an analysis suite (security-game closed forms
//! and a dynamic active-node recovery attack).

pub mod analysis;
pub mod cfg;
pub mod cli;
pub mod corpus;
pub mod embed;
pub mod graphgen;
pub mod isa;
pub mod layout;
pub mod transform;
pub mod vm;

pub use cfg::{extract_cfg, is_isomorphic, BasicBlock, BlockKind, Cfg, Digraph};
pub use graphgen::{generate_target, linearize, TargetGraph};
pub use transform::{obfuscate, ObfuscateParams, ObfuscatedProgram, Sidecar, TransformError};
pub use isa::{parse_program, serialize_program, Instruction, Opcode, Operand, Program, Reg};
pub use vm::{run, run_until, Limits, Machine, VmError};
