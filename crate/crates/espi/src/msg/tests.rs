use proptest::prelude::*;

use super::*;

// ---- sanitize ---------------------------------------------------------

#[test]
fn strips_url_and_keeps_sentence() {
    let clean = sanitize_message("Fix memory leak. See https://host/x");
    assert_eq!(clean.sentences[0], vec!["Fix", "memory", "leak", "."]);
    assert_eq!(clean.removed_spans, vec![(RemovedKind::Url, "https://host/x".to_string())]);
}

#[test]
fn plain_security_wording_is_unchanged() {
    let clean = sanitize_message("avoid integer overflow");
    assert_eq!(clean.sentences, vec![vec!["avoid", "integer", "overflow"]]);
    assert!(clean.removed_spans.is_empty());
}

#[test]
fn strips_signoff_trailer_and_email() {
    let clean = sanitize_message(
        "shorten: fix out of array access\n\nSigned-off-by: Dev Name <dev@example.org>\nReported-by: fuzzer\nContact dev@example.org please",
    );
    let kinds: Vec<RemovedKind> = clean.removed_spans.iter().map(|(k, _)| *k).collect();
    assert_eq!(
        kinds,
        vec![RemovedKind::Signature, RemovedKind::Signature, RemovedKind::Email]
    );
    let all: Vec<&String> = clean.sentences.iter().flatten().collect();
    assert!(all.iter().all(|t| !t.contains('@')));
    assert!(all.iter().all(|t| *t != "Signed"));
    assert!(all.iter().any(|t| *t == "shorten"));
}

#[test]
fn splits_on_terminators_and_blank_lines() {
    let clean = sanitize_message("Fix crash!\n\nAdd a test. Tidy code");
    assert_eq!(clean.sentences.len(), 3);
    assert_eq!(clean.sentences[0].last().unwrap(), "!");
    assert_eq!(clean.sentences[1].last().unwrap(), ".");
    assert_eq!(clean.sentences[2], vec!["Tidy", "code"]);
}

#[test]
fn fully_removed_message_is_empty() {
    let clean = sanitize_message("https://only.a/link");
    assert!(clean.is_empty());
    assert_eq!(clean.removed_spans.len(), 1);
}

#[test]
fn sanitize_is_idempotent_on_rendering() {
    for raw in [
        "Fix memory leak. See https://host/x",
        "one. two! three?",
        "CVE-2014-1234: heap overflow in decoder\n\nSigned-off-by: A <a@b.cd>",
    ] {
        let once = sanitize_message(raw);
        let twice = sanitize_message(&once.render());
        assert_eq!(once.sentences, twice.sentences);
        assert!(twice.removed_spans.is_empty());
    }
}

proptest! {
    #[test]
    fn sanitized_output_never_matches_removal_patterns(raw in "[a-zA-Z0-9@:/. \n-]{0,80}") {
        let clean = sanitize_message(&raw);
        let rendered = clean.render();
        prop_assert!(!rendered.contains("http://"));
        prop_assert!(!rendered.contains("https://"));
        // Independent re-scan for addresses that survived.
        let email = regex::Regex::new(r"[A-Za-z0-9]+@[A-Za-z0-9]+\.[A-Za-z]{2,}").unwrap();
        prop_assert!(!email.is_match(&rendered));
    }

    #[test]
    fn sanitize_idempotence_fuzz(raw in "[a-zA-Z!?. \n]{0,60}") {
        let once = sanitize_message(&raw);
        let twice = sanitize_message(&once.render());
        prop_assert_eq!(once.sentences, twice.sentences);
    }
}

// ---- conllu -----------------------------------------------------------

#[test]
fn minimal_two_token_sentence() {
    let text = "1\tmemory\t_\t_\t_\t_\t2\tamod\t_\t_\n2\tleak\t_\t_\t_\t_\t0\troot\t_\t_\n";
    let parses = ingest_conllu(text).unwrap();
    assert_eq!(parses.len(), 1);
    let p = &parses[0];
    assert_eq!(p.tokens, vec!["memory", "leak"]);
    assert_eq!(p.heads, vec![2, 0]);
    assert_eq!(p.relations, vec!["amod", "root"]);
}

#[test]
fn column_count_error_reports_row() {
    let text = "1\tmemory\t_\t_\t_\t_\t2\tamod\t_\t_\n2\tleak\t_\n";
    match ingest_conllu(text) {
        Err(ConlluError::ColumnCount { row, found }) => {
            assert_eq!(row, 2);
            assert_eq!(found, 3);
        }
        other => panic!("expected ColumnCount, got {other:?}"),
    }
}

#[test]
fn non_integer_head_is_rejected() {
    let text = "1\tx\t_\t_\t_\t_\tzero\troot\t_\t_\n";
    assert!(matches!(ingest_conllu(text), Err(ConlluError::BadHead { row: 1, .. })));
}

#[test]
fn head_out_of_range_is_rejected() {
    let text = "1\tx\t_\t_\t_\t_\t5\tdep\t_\t_\n";
    assert!(matches!(
        ingest_conllu(text),
        Err(ConlluError::HeadOutOfRange { row: 1, head: 5, len: 1 })
    ));
}

#[test]
fn conllu_round_trips() {
    let parses = vec![
        fallback_parse(&["fix".into(), "the".into(), "leak".into()]),
        fallback_parse(&["done".into()]),
    ];
    let text = serialize_conllu(&parses);
    assert_eq!(ingest_conllu(&text).unwrap(), parses);
}

proptest! {
    #[test]
    fn conllu_round_trip_fuzz(sentences in prop::collection::vec(
        prop::collection::vec("[a-z]{1,6}", 1..6), 1..4)) {
        let parses: Vec<SentenceParse> = sentences
            .iter()
            .map(|s| {
                let toks: Vec<String> = s.clone();
                fallback_parse(&toks)
            })
            .collect();
        let text = serialize_conllu(&parses);
        prop_assert_eq!(ingest_conllu(&text).unwrap(), parses);
    }
}

// ---- fallback parse ---------------------------------------------------

#[test]
fn two_token_chain_heads_forward() {
    let p = fallback_parse(&["fix".into(), "leak".into()]);
    // "fix" is headed by "leak"; "leak" is the root.
    assert_eq!(p.heads, vec![2, 0]);
    assert_eq!(p.relations, vec!["next", "root"]);
}

#[test]
fn single_token_is_root_only() {
    let p = fallback_parse(&["done".into()]);
    assert_eq!(p.heads, vec![0]);
    assert_eq!(p.relations, vec!["root"]);
}

proptest! {
    #[test]
    fn chain_has_n_minus_one_edges(n in 1..30usize) {
        let tokens: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let p = fallback_parse(&tokens);
        let non_root = p.heads.iter().filter(|h| **h != 0).count();
        prop_assert_eq!(non_root, n - 1);
        prop_assert_eq!(p.heads.iter().filter(|h| **h == 0).count(), 1);
    }
}

// ---- graph ------------------------------------------------------------

#[test]
fn neigh_bridges_sentence_boundary() {
    let msg = "shorten: fix out of array access. the wrap offset pushed the write index past the end.";
    let clean = sanitize_message(msg);
    assert_eq!(clean.sentences.len(), 2);
    let parses: Vec<SentenceParse> =
        clean.sentences.iter().map(|s| fallback_parse(s)).collect();
    let g = build_message_graph(&parses);
    let neigh: Vec<&(usize, usize, String)> =
        g.edges.iter().filter(|(_, _, t)| t == NEIGH_EDGE).collect();
    assert_eq!(neigh.len(), 1);
    let (src, dst, _) = neigh[0];
    assert_eq!(g.tokens[*src], ".");
    assert_eq!(g.tokens[*dst], "the");
    assert_eq!(*src + 1, parses[0].tokens.len());
    assert_eq!(*dst, parses[0].tokens.len());
}

#[test]
fn single_sentence_has_no_neigh_edges() {
    let g = graph_for_message("avoid integer overflow");
    assert!(g.edges.iter().all(|(_, _, t)| t != NEIGH_EDGE));
}

#[test]
fn empty_message_gets_synthetic_node() {
    let g = graph_for_message("   ");
    assert_eq!(g.tokens, vec![EMPTY_MESSAGE_TOKEN]);
    assert!(g.edges.is_empty());
}

#[test]
fn dependency_edges_point_head_to_dependent() {
    let p = SentenceParse {
        tokens: vec!["fix".into(), "null".into(), "deref".into()],
        heads: vec![3, 3, 0],
        relations: vec!["dep".into(), "amod".into(), "root".into()],
    };
    let g = build_message_graph(&[p]);
    assert!(g.edges.contains(&(2, 0, "dep".to_string())));
    assert!(g.edges.contains(&(2, 1, "amod".to_string())));
    assert_eq!(g.edges.len(), 2);
}

fn edge_count_oracle(parses: &[SentenceParse]) -> usize {
    let dep: usize = parses
        .iter()
        .map(|p| p.heads.iter().filter(|h| **h != 0).count())
        .sum();
    dep + parses.len().saturating_sub(1)
}

proptest! {
    #[test]
    fn edge_count_matches_oracle(sentences in prop::collection::vec(
        prop::collection::vec("[a-z]{1,5}", 1..7), 1..5)) {
        let parses: Vec<SentenceParse> = sentences
            .iter()
            .map(|s| fallback_parse(&s.clone()))
            .collect();
        let g = build_message_graph(&parses);
        prop_assert_eq!(g.edges.len(), edge_count_oracle(&parses));
        let total: usize = sentences.iter().map(|s| s.len()).sum();
        prop_assert_eq!(g.tokens.len(), total);
        for (s, d, ty) in &g.edges {
            prop_assert!(*s < total && *d < total);
            // Non-neigh edges stay within one sentence's index range.
            if ty != NEIGH_EDGE {
                let mut off = 0;
                let mut same = false;
                for sent in &sentences {
                    let end = off + sent.len();
                    if *s >= off && *s < end {
                        same = *d >= off && *d < end;
                        break;
                    }
                    off = end;
                }
                prop_assert!(same);
            }
        }
    }

    #[test]
    fn fallback_graph_is_weakly_connected(sentences in prop::collection::vec(
        prop::collection::vec("[a-z]{1,5}", 1..6), 1..4)) {
        let parses: Vec<SentenceParse> = sentences
            .iter()
            .map(|s| fallback_parse(&s.clone()))
            .collect();
        let g = build_message_graph(&parses);
        let n = g.tokens.len();
        let mut adj = vec![Vec::new(); n];
        for (s, d, _) in &g.edges {
            adj[*s].push(*d);
            adj[*d].push(*s);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        prop_assert!(seen.iter().all(|s| *s));
    }
}

// ---- edge vocab -------------------------------------------------------

#[test]
fn edge_vocab_maps_unknown_to_bucket_zero() {
    let g = graph_for_message("fix the leak. add a test.");
    let vocab = EdgeVocab::build([&g]);
    assert!(vocab.lookup(NEIGH_EDGE) > 0);
    assert!(vocab.lookup("next") > 0);
    assert_eq!(vocab.lookup("nonexistent-relation"), 0);
}

#[test]
fn edge_vocab_is_capped() {
    let edges: Vec<(usize, usize, String)> =
        (0..200).map(|i| (0, 1, format!("rel{i}"))).collect();
    let g = MessageGraph { tokens: vec!["a".into(), "b".into()], edges };
    let vocab = EdgeVocab::build([&g]);
    assert!(vocab.len() <= EDGE_VOCAB_CAP);
    assert_eq!(vocab.lookup("rel199"), 0);
}
