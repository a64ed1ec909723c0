use super::{RoundRecord, Trace};

fn records(tr: &Trace) -> impl Iterator<Item = &RoundRecord> {
    tr.rounds.iter().flatten()
}

/// One JSON object per round per agent:
/// `{agent, round, input, in: [...], out: [...], decision}`.
pub fn trace_to_jsonl(tr: &Trace) -> String {
    let mut out = String::new();
    for rec in records(tr) {
        out.push_str(&serde_json::to_string(rec).expect("round records serialize"));
        out.push('\n');
    }
    out
}

/// Like [`trace_to_jsonl`] for many traces, with a leading `run` index on
/// every line.
pub fn traces_to_jsonl<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> String {
    let mut out = String::new();
    for (k, tr) in traces.into_iter().enumerate() {
        for rec in records(tr) {
            let body = serde_json::to_string(rec).expect("round records serialize");
            out.push_str(&format!("{{\"run\":{k},{}\n", &body[1..]));
        }
    }
    out
}
