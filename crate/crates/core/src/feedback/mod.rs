//! Unresolved-failure working set, prompt encodings, and the two retry modes.

mod anchor;
mod ladder;
mod patch;
mod state;

pub use anchor::{anchor_for, byte_offset, enclosing_function, normalize_message, DiagnosticAnchor, TOP_LEVEL};
pub use ladder::{LadderCursor, LadderError, RetryLadder, RetryMode, RetryRung};
pub use patch::{build_patch_turn, validate_and_apply_patch, LineWindow, PatchRejection, PATCH_FORMAT_VERSION};
pub use state::{
    augment_context, encode_feedback, render_inline_comment, update_feedback, FailureEntry, FeedbackInput,
    FeedbackState, FEEDBACK_HEADER, MAX_ENTRIES,
};
