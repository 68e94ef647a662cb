//! Mixing G-code emission.

mod emit;
pub mod machine;
mod program;
mod shield;

pub use emit::{compute_feedrate, emit_strata};
pub use machine::{MachineConfig, DEFAULT_RATIO_LETTERS};
pub use program::{
    estimate_print_time, quantize_ratios, GcodeLine, GcodeProgram, LineDisplay, Move, MoveKind,
    RATIO_DECIMALS, XY_DECIMALS, ZE_DECIMALS,
};
pub use shield::{build_ooze_shield, OozeShield};
