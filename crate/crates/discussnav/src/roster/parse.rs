//! Parsers for every expert reply grammar, plus the canonical emitters that
//! table-driven and ground-truth backends use to speak those grammars.
//!
//! All parsers are total over arbitrary input: they either return a value
//! or a typed [`MalformedResponse`], never panic.

use super::{ExecutionState, Landmark, LandmarkKind, MalformedResponse, Prediction, ThoughtPrediction};
use crate::env::Sector;

/// Canonical matching form of a phrase: lowercase, punctuation dropped,
/// whitespace collapsed.
pub fn normalize_phrase(s: &str) -> String {
    let mapped: String = s
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// ASCII-only lowercasing. Unlike `str::to_lowercase` this preserves byte
/// offsets, so label positions found in the folded text can index the
/// original without risking a char-boundary panic on non-ASCII replies.
fn ascii_lower(s: &str) -> String {
    s.chars().map(|c| c.to_ascii_lowercase()).collect()
}

/// Strips a leading list marker (`1.`, `2)`, `-`, `*`, `•`). Returns the
/// remainder when a marker was present.
fn strip_marker(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for bullet in ['-', '*', '•'] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return Some(rest.trim_start());
        }
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &t[digits..];
        for punct in ['.', ')', ':'] {
            if let Some(rest) = rest.strip_prefix(punct) {
                return Some(rest.trim_start());
            }
        }
    }
    None
}

fn is_header(line: &str) -> bool {
    line.ends_with(':') && strip_marker(line).is_none()
}

/// Parses a decomposed action list.
///
/// Accepts numbered or bulleted lines, tolerates prose preamble and header
/// lines, and normalizes whitespace inside each action. An empty result is
/// an error: a navigation instruction always contains at least a stop.
pub fn parse_action_decomposition(raw: &str) -> Result<Vec<String>, MalformedResponse> {
    let mut marked = Vec::new();
    let mut plain = Vec::new();
    for line in raw.lines() {
        let t = line.trim();
        if t.is_empty() || is_header(t) {
            continue;
        }
        if let Some(item) = strip_marker(t) {
            let item = collapse_ws(item);
            if !normalize_phrase(&item).is_empty() {
                marked.push(item);
            }
        } else {
            let item = collapse_ws(t);
            if !normalize_phrase(&item).is_empty() {
                plain.push(item);
            }
        }
    }
    // A reply that uses list markers anywhere is a list; everything else in
    // it is preamble. Only marker-free replies are read line-per-action.
    let actions = if marked.is_empty() { plain } else { marked };
    if actions.is_empty() {
        Err(MalformedResponse::new("reply contains no actions"))
    } else {
        Ok(actions)
    }
}

fn parse_kind(label: &str) -> LandmarkKind {
    let k = normalize_phrase(label);
    match k.as_str() {
        "room" => LandmarkKind::Room,
        "object" => LandmarkKind::Object,
        "color qualified" => LandmarkKind::ColorQualified,
        "infrastructure" => LandmarkKind::Infrastructure,
        "other" => LandmarkKind::Other,
        _ => {
            if k.contains("color") || k.contains("colour") {
                LandmarkKind::ColorQualified
            } else if k.contains("room") {
                LandmarkKind::Room
            } else if k.contains("infra") {
                LandmarkKind::Infrastructure
            } else if k.contains("object") || k.contains("furniture") {
                LandmarkKind::Object
            } else {
                LandmarkKind::Other
            }
        }
    }
}

fn is_none_marker(s: &str) -> bool {
    matches!(normalize_phrase(s).as_str(), "none" | "nothing" | "n a" | "")
}

/// Parses a landmark-extraction reply.
///
/// Returns the landmarks and, when the reply opened with a
/// `Corrected actions:` section that actually differs from `prior_actions`,
/// the corrected action list.
#[allow(clippy::type_complexity)]
pub fn parse_landmark_extraction(
    raw: &str,
    prior_actions: &[String],
) -> Result<(Vec<Landmark>, Option<Vec<String>>), MalformedResponse> {
    if raw.trim().is_empty() {
        return Err(MalformedResponse::new("empty reply"));
    }

    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        Preamble,
        Corrected,
        Landmarks,
    }
    let mut section = Section::Preamble;
    let mut corrected_lines: Vec<String> = Vec::new();
    let mut entry_lines: Vec<String> = Vec::new();
    let mut preamble_lines: Vec<String> = Vec::new();
    let mut saw_landmark_header = false;

    for line in raw.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let lower = t.to_lowercase();
        if lower.starts_with("corrected action") {
            section = Section::Corrected;
            if let Some((_, tail)) = t.split_once(':') {
                if !tail.trim().is_empty() {
                    corrected_lines.push(tail.trim().to_string());
                }
            }
            continue;
        }
        if lower.starts_with("landmark") && (t.ends_with(':') || lower == "landmarks") {
            section = Section::Landmarks;
            saw_landmark_header = true;
            if let Some((_, tail)) = t.split_once(':') {
                if !tail.trim().is_empty() {
                    entry_lines.push(tail.trim().to_string());
                }
            }
            continue;
        }
        match section {
            Section::Preamble => preamble_lines.push(t.to_string()),
            Section::Corrected => corrected_lines.push(t.to_string()),
            Section::Landmarks => entry_lines.push(t.to_string()),
        }
    }

    let corrected = {
        let list: Vec<String> = corrected_lines
            .iter()
            .filter(|l| !is_header(l))
            .filter_map(|l| strip_marker(l).map(collapse_ws).or_else(|| Some(collapse_ws(l))))
            .filter(|l| !is_none_marker(l))
            .collect();
        if list.is_empty() {
            None
        } else {
            let same = list.len() == prior_actions.len()
                && list
                    .iter()
                    .zip(prior_actions)
                    .all(|(a, b)| normalize_phrase(a) == normalize_phrase(b));
            if same {
                None
            } else {
                Some(list)
            }
        }
    };

    // Without a Landmarks header only marker-led lines count as entries, so
    // free prose around the list never turns into phantom landmarks.
    let sources: Vec<&String> = if saw_landmark_header {
        entry_lines.iter().collect()
    } else {
        preamble_lines
            .iter()
            .filter(|l| strip_marker(l).is_some())
            .collect()
    };

    let mut landmarks = Vec::new();
    for line in sources {
        let body = strip_marker(line).unwrap_or(line.as_str()).trim();
        if body.is_empty() || is_header(body) || is_none_marker(body) {
            continue;
        }
        let (phrase, kind) = match body.rfind('(') {
            Some(open) if body.ends_with(')') => {
                let kind = parse_kind(&body[open + 1..body.len() - 1]);
                (body[..open].trim_end(), kind)
            }
            _ => (body, LandmarkKind::Other),
        };
        let phrase = collapse_ws(phrase.trim_end_matches(['.', ',']));
        if !normalize_phrase(&phrase).is_empty() {
            landmarks.push(Landmark { phrase, kind });
        }
    }
    Ok((landmarks, corrected))
}

fn find_label(lower: &str, variants: &[&str]) -> Option<(usize, usize)> {
    variants
        .iter()
        .filter_map(|v| lower.find(v).map(|pos| (pos, v.len())))
        .min_by_key(|&(pos, _)| pos)
}

/// Parses the execution-state partition out of a completion-estimation
/// reply.
///
/// The three labeled lists are matched against `actions` by normalized
/// string equality; together they must form an exact partition of the
/// decomposed action list.
pub fn parse_execution_state(
    raw: &str,
    actions: &[String],
) -> Result<ExecutionState, MalformedResponse> {
    if raw.trim().is_empty() {
        return Err(MalformedResponse::new("empty reply"));
    }
    let lower_all = ascii_lower(raw);
    // The lists live in the Prediction field when one is present.
    let scope_start = lower_all.rfind("prediction").map(|i| i + "prediction".len());
    let (scope, lower) = match scope_start {
        Some(start) if has_all_labels(&lower_all[start..]) => {
            (&raw[start..], lower_all[start..].to_string())
        }
        _ => (raw, lower_all),
    };

    let executed = find_label(&lower, &["executed actions"]);
    let in_progress = find_label(&lower, &["in-progress actions", "in progress actions"]);
    let waiting = find_label(
        &lower,
        &["actions waiting to be executed", "waiting actions"],
    );
    let (Some(executed), Some(in_progress), Some(waiting)) = (executed, in_progress, waiting)
    else {
        return Err(MalformedResponse::new(
            "reply is missing one of the three execution-state labels",
        ));
    };

    let mut spans = [
        (executed, 0usize),
        (in_progress, 1usize),
        (waiting, 2usize),
    ];
    spans.sort_by_key(|&((pos, _), _)| pos);

    let normalized_actions: Vec<String> = actions.iter().map(|a| normalize_phrase(a)).collect();
    // section index per action: 0 executed, 1 in-progress, 2 waiting
    let mut assigned: Vec<Option<usize>> = vec![None; actions.len()];

    for (i, &((pos, len), which)) in spans.iter().enumerate() {
        let end = spans.get(i + 1).map_or(scope.len(), |&((p, _), _)| p);
        let content = scope[pos + len..end].trim_start_matches([':', ' ', '\t']);
        assign_entries(content, &normalized_actions, actions, which, &mut assigned)?;
    }

    let mut state = ExecutionState {
        executed: Vec::new(),
        in_progress: Vec::new(),
        waiting: Vec::new(),
    };
    for (action, slot) in actions.iter().zip(&assigned) {
        match slot {
            Some(0) => state.executed.push(action.clone()),
            Some(1) => state.in_progress.push(action.clone()),
            Some(2) => state.waiting.push(action.clone()),
            Some(_) => unreachable!("only three sections exist"),
            None => {
                return Err(MalformedResponse::new(format!(
                    "action `{action}` appears in none of the three lists"
                )))
            }
        }
    }
    Ok(state)
}

fn has_all_labels(lower: &str) -> bool {
    find_label(lower, &["executed actions"]).is_some()
        && find_label(lower, &["in-progress actions", "in progress actions"]).is_some()
        && find_label(lower, &["actions waiting to be executed", "waiting actions"]).is_some()
}

fn assign_entries(
    content: &str,
    normalized_actions: &[String],
    actions: &[String],
    which: usize,
    assigned: &mut [Option<usize>],
) -> Result<(), MalformedResponse> {
    let mut place = |entry: &str| -> Result<(), MalformedResponse> {
        let entry = strip_marker(entry).unwrap_or(entry).trim();
        if is_none_marker(entry) {
            return Ok(());
        }
        let norm = normalize_phrase(entry);
        let Some(idx) = normalized_actions.iter().position(|a| *a == norm) else {
            return Err(MalformedResponse::new(format!(
                "entry `{entry}` matches no decomposed action"
            )));
        };
        if let Some(previous) = assigned[idx] {
            if previous != which {
                return Err(MalformedResponse::new(format!(
                    "action `{}` is listed in two sections",
                    actions[idx]
                )));
            }
            return Ok(()); // harmless repeat within the same list
        }
        assigned[idx] = Some(which);
        Ok(())
    };

    for line in content.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let body = strip_marker(t).unwrap_or(t);
        if is_none_marker(body) {
            continue;
        }
        // A line may be a single action or a comma-joined list of them.
        if normalized_actions.contains(&normalize_phrase(body)) {
            place(body)?;
        } else if body.contains(',') {
            for piece in body.split(',') {
                if !piece.trim().is_empty() {
                    place(piece)?;
                }
            }
        } else {
            place(body)?;
        }
    }
    Ok(())
}

/// Splits a decision reply into the thought and the predicted movement.
///
/// The text before the final `Prediction` label is the thought; after it
/// the grammar accepts `7`, `direction 7`, `Direction: 7` or `stop` in any
/// letter case. Direction ids outside 0..=11 are rejected.
pub fn parse_prediction(raw: &str) -> Result<ThoughtPrediction, MalformedResponse> {
    if raw.trim().is_empty() {
        return Err(MalformedResponse::new("empty reply"));
    }
    let lower = ascii_lower(raw);
    let Some(idx) = lower.rfind("prediction") else {
        return Err(MalformedResponse::new("reply has no \"Prediction\" label"));
    };
    let thought = raw[..idx]
        .trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '#' | ':' | '-' | '='))
        .trim_start()
        .to_string();

    fn skip(s: &str) -> &str {
        s.trim_start_matches(|c: char| {
            c.is_whitespace() || matches!(c, ':' | '*' | '-' | '=' | '"' | '\'' | '.')
        })
    }
    let mut rest = skip(&raw[idx + "prediction".len()..]);
    if let Some(prefix) = rest.get(..9) {
        if prefix.eq_ignore_ascii_case("direction") {
            rest = skip(&rest[9..]);
        }
    }

    let first = rest.chars().next();
    let prediction = match first {
        Some(c) if c.is_ascii_digit() => {
            let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
            let value: u64 = digits
                .parse()
                .map_err(|_| MalformedResponse::new("unreadable direction id"))?;
            let id = u8::try_from(value)
                .ok()
                .and_then(|v| Sector::new(v).ok())
                .ok_or_else(|| {
                    MalformedResponse::new(format!("direction id {value} outside 0..=11"))
                })?;
            Prediction::Move(id)
        }
        Some(c) if c.is_alphabetic() => {
            let word: String = rest.chars().take_while(|c| c.is_alphabetic()).collect();
            if word.eq_ignore_ascii_case("stop") {
                Prediction::Stop
            } else {
                return Err(MalformedResponse::new(format!(
                    "unrecognized prediction token `{word}`"
                )));
            }
        }
        _ => {
            return Err(MalformedResponse::new(
                "no prediction value after the label",
            ))
        }
    };
    Ok(ThoughtPrediction {
        thought,
        prediction,
    })
}

/// Validates a trajectory summary: it must be non-empty and, when there is
/// history to summarize, keep the `[Step t]` block structure.
pub fn parse_trajectory_summary(raw: &str, steps: usize) -> Result<String, MalformedResponse> {
    let t = raw.trim();
    if t.is_empty() {
        return Err(MalformedResponse::new("empty summary"));
    }
    if steps >= 1 && !t.contains("[Step") {
        return Err(MalformedResponse::new(
            "summary lost the [Step t] block structure",
        ));
    }
    Ok(t.to_string())
}

/// Parses the tester's verdict and checks it selects one of the candidates.
pub fn parse_decision_test(
    raw: &str,
    candidates: &[Prediction],
) -> Result<Prediction, MalformedResponse> {
    let verdict = parse_prediction(raw)?;
    if candidates.contains(&verdict.prediction) {
        Ok(verdict.prediction)
    } else {
        Err(MalformedResponse::new(format!(
            "selected prediction `{}` is not among the candidates",
            verdict.prediction
        )))
    }
}

/// Parses a comma-separated object tag list; "nothing" means no objects.
pub fn parse_object_tags(raw: &str) -> Result<Vec<String>, MalformedResponse> {
    let t = raw.trim();
    if t.is_empty() {
        return Err(MalformedResponse::new("empty reply"));
    }
    if normalize_phrase(t).starts_with("nothing") {
        return Ok(Vec::new());
    }
    let mut tags = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for piece in t.split(['\n', ',', ';']) {
        let tag = strip_marker(piece.trim()).unwrap_or(piece.trim());
        let tag = collapse_ws(tag.trim_end_matches('.'));
        let norm = normalize_phrase(&tag);
        if !norm.is_empty() && seen.insert(norm) {
            tags.push(tag);
        }
    }
    Ok(tags)
}

/// A scene answer is any non-empty sentence.
pub fn parse_scene_answer(raw: &str) -> Result<String, MalformedResponse> {
    let t = raw.trim();
    if t.is_empty() {
        Err(MalformedResponse::new("empty reply"))
    } else {
        Ok(t.to_string())
    }
}

/// A fused thought is any non-empty text.
pub fn parse_fused_thought(raw: &str) -> Result<String, MalformedResponse> {
    let t = raw.trim();
    if t.is_empty() {
        Err(MalformedResponse::new("empty reply"))
    } else {
        Ok(t.to_string())
    }
}

// ---- canonical emitters ----------------------------------------------------

/// Numbered action list, the inverse of [`parse_action_decomposition`].
pub fn render_action_list(actions: &[String]) -> String {
    actions
        .iter()
        .enumerate()
        .map(|(i, action)| format!("{}. {}", i + 1, action))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Landmark section, optionally preceded by a corrected action list; the
/// inverse of [`parse_landmark_extraction`].
pub fn render_extraction_reply(landmarks: &[Landmark], corrected: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(actions) = corrected {
        out.push_str("Corrected actions:\n");
        out.push_str(&render_action_list(actions));
        out.push('\n');
    }
    out.push_str("Landmarks:\n");
    if landmarks.is_empty() {
        out.push_str("none");
    } else {
        let lines: Vec<String> = landmarks
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{}. {} ({})", i + 1, l.phrase, l.kind))
            .collect();
        out.push_str(&lines.join("\n"));
    }
    out
}

/// Landmark section without corrections.
pub fn render_landmark_list(landmarks: &[Landmark]) -> String {
    render_extraction_reply(landmarks, None)
}

/// Prediction field carrying the three comma-joined lists; the inverse of
/// [`parse_execution_state`] for actions that contain no comma.
pub fn render_execution_state_reply(state: &ExecutionState) -> String {
    let join = |list: &[String]| -> String {
        if list.is_empty() {
            "none".to_string()
        } else {
            list.join(", ")
        }
    };
    format!(
        "Prediction:\nExecuted Actions: {}\nIn-progress Actions: {}\nActions Waiting to be Executed: {}",
        join(&state.executed),
        join(&state.in_progress),
        join(&state.waiting)
    )
}

/// Thought followed by the `Prediction:` line; the inverse of
/// [`parse_prediction`] for thoughts that never mention the label.
pub fn render_prediction_reply(thought: &str, prediction: Prediction) -> String {
    if thought.trim().is_empty() {
        format!("Prediction: {prediction}")
    } else {
        format!("{}\nPrediction: {prediction}", thought.trim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acts(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn decomposition_strips_numbering_and_preamble() {
        let raw = "Sure, here are the actions:\n1. walk past\n2. stop\n";
        assert_eq!(parse_action_decomposition(raw).unwrap(), acts(&["walk past", "stop"]));
    }

    #[test]
    fn decomposition_accepts_plain_lines() {
        let raw = "walk  down the   hallway\nstop";
        assert_eq!(
            parse_action_decomposition(raw).unwrap(),
            acts(&["walk down the hallway", "stop"])
        );
    }

    #[test]
    fn decomposition_rejects_empty() {
        assert!(parse_action_decomposition("").is_err());
        assert!(parse_action_decomposition("Actions:\n\n").is_err());
    }

    #[test]
    fn extraction_reads_landmarks_and_kinds() {
        let raw = "Landmarks:\n1. the eye exam chart on the wall (object)\n2. the kitchen (room)";
        let (landmarks, corrected) = parse_landmark_extraction(raw, &acts(&["stop"])).unwrap();
        assert!(corrected.is_none());
        assert_eq!(landmarks.len(), 2);
        assert_eq!(landmarks[0].phrase, "the eye exam chart on the wall");
        assert_eq!(landmarks[0].kind, LandmarkKind::Object);
        assert_eq!(landmarks[1].kind, LandmarkKind::Room);
    }

    #[test]
    fn extraction_reports_reordered_actions() {
        let prior = acts(&["stop", "walk past the chart"]);
        let raw = "Corrected actions:\n1. walk past the chart\n2. stop\nLandmarks:\nnone";
        let (landmarks, corrected) = parse_landmark_extraction(raw, &prior).unwrap();
        assert!(landmarks.is_empty());
        assert_eq!(corrected.unwrap(), acts(&["walk past the chart", "stop"]));
    }

    #[test]
    fn extraction_ignores_echoed_identical_corrections() {
        let prior = acts(&["walk past", "stop"]);
        let raw = "Corrected actions:\n1. walk past\n2. stop\nLandmarks:\nnone";
        let (_, corrected) = parse_landmark_extraction(raw, &prior).unwrap();
        assert!(corrected.is_none());
    }

    #[test]
    fn extraction_without_parens_defaults_to_other() {
        let raw = "Landmarks:\n1. the thing by the door";
        let (landmarks, _) = parse_landmark_extraction(raw, &[]).unwrap();
        assert_eq!(landmarks[0].kind, LandmarkKind::Other);
    }

    #[test]
    fn execution_state_partitions_actions() {
        let actions = acts(&["walk to the kitchen", "go to the sofa", "stop"]);
        let raw = "Reasoning...\nPrediction:\nExecuted Actions: walk to the kitchen\n\
                   In-progress Actions: go to the sofa\nActions Waiting to be Executed: stop";
        let state = parse_execution_state(raw, &actions).unwrap();
        assert_eq!(state.executed, acts(&["walk to the kitchen"]));
        assert_eq!(state.in_progress, acts(&["go to the sofa"]));
        assert_eq!(state.waiting, acts(&["stop"]));
    }

    #[test]
    fn execution_state_accepts_comma_joined_lists_and_none() {
        let actions = acts(&["a b", "c d", "stop"]);
        let raw = "Prediction:\nExecuted Actions: a b, c d\nIn-progress Actions: none\n\
                   Actions Waiting to be Executed: stop";
        let state = parse_execution_state(raw, &actions).unwrap();
        assert_eq!(state.executed, acts(&["a b", "c d"]));
        assert!(state.in_progress.is_empty());
        assert_eq!(state.waiting, acts(&["stop"]));
    }

    #[test]
    fn execution_state_rejects_unknown_entry() {
        let actions = acts(&["walk", "stop"]);
        let raw = "Prediction:\nExecuted Actions: fly away\nIn-progress Actions: walk\n\
                   Actions Waiting to be Executed: stop";
        assert!(parse_execution_state(raw, &actions).is_err());
    }

    #[test]
    fn execution_state_rejects_double_assignment() {
        let actions = acts(&["walk", "stop"]);
        let raw = "Prediction:\nExecuted Actions: walk\nIn-progress Actions: walk\n\
                   Actions Waiting to be Executed: stop";
        assert!(parse_execution_state(raw, &actions).is_err());
    }

    #[test]
    fn execution_state_rejects_missing_action() {
        let actions = acts(&["walk", "stop"]);
        let raw = "Prediction:\nExecuted Actions: none\nIn-progress Actions: none\n\
                   Actions Waiting to be Executed: walk";
        assert!(parse_execution_state(raw, &actions).is_err());
    }

    #[test]
    fn prediction_takes_the_last_label() {
        let raw = "My first Prediction was 3, but on reflection...\nPrediction: 7";
        let tp = parse_prediction(raw).unwrap();
        assert_eq!(tp.prediction, Prediction::Move(Sector::new(7).unwrap()));
        assert!(tp.thought.contains("on reflection"));
    }

    #[test]
    fn prediction_grammar_variants() {
        for raw in [
            "Prediction: 5",
            "prediction 5",
            "Prediction: direction 5",
            "Prediction: Direction: 5",
            "**Prediction:** 5",
        ] {
            assert_eq!(
                parse_prediction(raw).unwrap().prediction,
                Prediction::Move(Sector::new(5).unwrap()),
                "failed on {raw:?}"
            );
        }
        for raw in ["Prediction: stop", "Prediction: STOP.", "prediction stop"] {
            assert_eq!(parse_prediction(raw).unwrap().prediction, Prediction::Stop);
        }
    }

    #[test]
    fn prediction_rejects_out_of_range_and_garbage() {
        assert!(parse_prediction("Prediction: 12").is_err());
        assert!(parse_prediction("Prediction: 99").is_err());
        assert!(parse_prediction("Prediction: sideways").is_err());
        assert!(parse_prediction("no label here").is_err());
        assert!(parse_prediction("Prediction:").is_err());
    }

    #[test]
    fn decision_test_enforces_candidate_membership() {
        let candidates = vec![
            Prediction::Move(Sector::new(2).unwrap()),
            Prediction::Stop,
        ];
        assert_eq!(
            parse_decision_test("Prediction: 2", &candidates).unwrap(),
            candidates[0]
        );
        assert!(parse_decision_test("Prediction: 4", &candidates).is_err());
    }

    #[test]
    fn summary_keeps_step_blocks() {
        assert!(parse_trajectory_summary("[Step 1] Observation: x Thought: y", 1).is_ok());
        assert!(parse_trajectory_summary("all good", 1).is_err());
        assert!(parse_trajectory_summary("", 0).is_err());
    }

    #[test]
    fn object_tags_split_and_dedupe() {
        assert_eq!(
            parse_object_tags("sofa, red carpet, sofa,").unwrap(),
            acts(&["sofa", "red carpet"])
        );
        assert!(parse_object_tags("nothing").unwrap().is_empty());
        assert!(parse_object_tags("  ").is_err());
    }

    #[test]
    fn emitters_round_trip() {
        let actions = acts(&["walk to the kitchen", "go to the red carpet", "stop"]);
        assert_eq!(
            parse_action_decomposition(&render_action_list(&actions)).unwrap(),
            actions
        );

        let landmarks = vec![
            Landmark {
                phrase: "the kitchen".into(),
                kind: LandmarkKind::Room,
            },
            Landmark {
                phrase: "the red carpet".into(),
                kind: LandmarkKind::ColorQualified,
            },
        ];
        let (parsed, corrected) =
            parse_landmark_extraction(&render_landmark_list(&landmarks), &actions).unwrap();
        assert_eq!(parsed, landmarks);
        assert!(corrected.is_none());

        let state = ExecutionState {
            executed: acts(&["walk to the kitchen"]),
            in_progress: acts(&["go to the red carpet"]),
            waiting: acts(&["stop"]),
        };
        assert_eq!(
            parse_execution_state(&render_execution_state_reply(&state), &actions).unwrap(),
            state
        );

        let reply = render_prediction_reply("The carpet is to the left.", Prediction::Stop);
        let tp = parse_prediction(&reply).unwrap();
        assert_eq!(tp.thought, "The carpet is to the left.");
        assert_eq!(tp.prediction, Prediction::Stop);
    }
}
