//! Seeded synthetic corpus of labeled commits for experiments and smoke
//! tests. Security patches add a bounds check to a templated C function and
//! carry security wording; non-security commits make benign edits with
//! neutral messages. The signal is deliberately separable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::CommitRecord;
use crate::diff::{serialize_file_diffs, Chunk, DiffLine, FileDiff, LineKind};

pub const PROJECTS: [&str; 4] = ["alpha", "beta", "gamma", "delta"];

const SECURITY_MESSAGES: [&str; 6] = [
    "fix heap buffer overflow in {fn}",
    "prevent out of bounds write in {fn}",
    "avoid integer overflow when indexing the block buffer",
    "fix null pointer dereference in {fn}. reject invalid input early.",
    "security: bound the write index in {fn} before use",
    "fix out of array access reported by the fuzzer in {fn}",
];

const NEUTRAL_MESSAGES: [&str; 6] = [
    "refactor {fn} for clarity",
    "rename internal accumulator in {fn}",
    "simplify loop structure in {fn}. no functional change.",
    "tidy formatting and whitespace in {fn}",
    "adjust default constant used by {fn}",
    "docs: describe the behavior of {fn}",
];

const BUF_NAMES: [&str; 4] = ["buf", "data", "samples", "frame"];
const LEN_NAMES: [&str; 4] = ["len", "count", "size", "nitems"];
const IDX_NAMES: [&str; 4] = ["idx", "pos", "offset", "slot"];

fn template_function(fn_name: &str, buf: &str, len: &str, idx: &str, init: i32) -> String {
    format!(
        "static int {fn_name}(int *{buf}, int {len}, int {idx})\n\
         {{\n\
         \x20   int total = {init};\n\
         \x20   int i;\n\
         \x20   for (i = 0; i < {len}; i++) {{\n\
         \x20       total = total + {buf}[i];\n\
         \x20   }}\n\
         \x20   {buf}[{idx}] = total;\n\
         \x20   return total;\n\
         }}\n"
    )
}

/// Single-chunk diff from a naive common-prefix/common-suffix alignment.
pub fn naive_diff(path: &str, pre: &str, post: &str) -> String {
    let pre_lines: Vec<&str> = pre.lines().collect();
    let post_lines: Vec<&str> = post.lines().collect();
    let mut p = 0;
    while p < pre_lines.len() && p < post_lines.len() && pre_lines[p] == post_lines[p] {
        p += 1;
    }
    let mut s = 0;
    while s < pre_lines.len() - p
        && s < post_lines.len() - p
        && pre_lines[pre_lines.len() - 1 - s] == post_lines[post_lines.len() - 1 - s]
    {
        s += 1;
    }
    let mut lines = Vec::new();
    for l in &pre_lines[p..pre_lines.len() - s] {
        lines.push(DiffLine { kind: LineKind::Subtractive, text: (*l).to_string() });
    }
    for l in &post_lines[p..post_lines.len() - s] {
        lines.push(DiffLine { kind: LineKind::Additive, text: (*l).to_string() });
    }
    let pre_len = pre_lines.len() - s - p;
    let post_len = post_lines.len() - s - p;
    let file = FileDiff {
        path: path.to_string(),
        chunks: vec![Chunk {
            pre_start_line: p + 1,
            post_start_line: p + 1,
            pre_len,
            post_len,
            lines,
        }],
        pre_source: None,
        post_source: None,
    };
    serialize_file_diffs(&[file])
}

/// Deterministic labeled corpus of `n` commits, roughly half security.
pub fn generate_corpus(n: usize, seed: u64) -> Vec<CommitRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let security = i % 2 == 0;
            let project = PROJECTS[rng.gen_range(0..PROJECTS.len())];
            let fn_name = format!("process_block_{}", rng.gen_range(0..10_000u32));
            let buf = BUF_NAMES[rng.gen_range(0..BUF_NAMES.len())];
            let len = LEN_NAMES[rng.gen_range(0..LEN_NAMES.len())];
            let idx = IDX_NAMES[rng.gen_range(0..IDX_NAMES.len())];
            let init = rng.gen_range(0..4);
            let pre = template_function(&fn_name, buf, len, idx, init);
            let (post, message) = if security {
                let unguarded = format!("    {buf}[{idx}] = total;");
                let guarded = format!(
                    "    if ({idx} < 0 || {idx} >= {len}) {{\n\
                     \x20       return 0;\n\
                     \x20   }}\n\
                     \x20   {buf}[{idx}] = total;"
                );
                let post = pre.replacen(&unguarded, &guarded, 1);
                let msg = SECURITY_MESSAGES[rng.gen_range(0..SECURITY_MESSAGES.len())];
                (post, msg.replace("{fn}", &fn_name))
            } else {
                let post = match rng.gen_range(0..3) {
                    0 => pre.replacen("int total =", "int acc_total =", 1).replacen(
                        "total",
                        "acc_total",
                        usize::MAX,
                    ),
                    1 => pre.replacen(
                        &format!("int total = {init};"),
                        &format!("int total = {};", init + 10),
                        1,
                    ),
                    _ => pre.replacen(
                        &format!("total = total + {buf}[i];"),
                        &format!("total = total + {buf}[i] * 1;"),
                        1,
                    ),
                };
                let msg = NEUTRAL_MESSAGES[rng.gen_range(0..NEUTRAL_MESSAGES.len())];
                (post, msg.replace("{fn}", &fn_name))
            };
            let path = format!("src/{project}/block_{i}.c");
            let diff = naive_diff(&path, &pre, &post);
            CommitRecord {
                id: format!("synth-{seed}-{i:05}"),
                label: Some(u8::from(security)),
                message,
                diff,
                project: Some(project.to_string()),
                pre_sources: [(path.clone(), pre)].into_iter().collect(),
                post_sources: [(path, post)].into_iter().collect(),
            }
        })
        .collect()
}
