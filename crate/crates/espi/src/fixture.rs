//! Bundled shorten.c commit fixture used by tests, docs and the CLI demo.

use crate::diff::{parse_unified_diff, Commit};

pub const SHORTEN_DIFF: &str = include_str!("../fixtures/shorten.diff");
pub const SHORTEN_PRE_SOURCE: &str = include_str!("../fixtures/shorten_pre.c");
pub const SHORTEN_POST_SOURCE: &str = include_str!("../fixtures/shorten_post.c");
pub const SHORTEN_MESSAGE: &str =
    "shorten: fix out of array access. the wrap offset pushed the write index past the end of the buffer.";

/// The security-patch commit from the shorten.c example, with both sources
/// attached so the full pipeline can run on it.
pub fn shorten_commit() -> Commit {
    let mut files = parse_unified_diff(SHORTEN_DIFF).expect("fixture diff parses");
    for f in &mut files {
        f.pre_source = Some(SHORTEN_PRE_SOURCE.to_string());
        f.post_source = Some(SHORTEN_POST_SOURCE.to_string());
    }
    Commit {
        id: "f42b319".to_string(),
        message: SHORTEN_MESSAGE.to_string(),
        files,
        label: Some(1),
        project: Some("ffmpeg".to_string()),
    }
}
