//! Markdown summary tables for benchmark CSVs.

use std::fmt::Write as _;

use crowdrl_core::sim::{summarize, BenchRow};

/// One table per input, rows in group-size order with methods in the order
/// they first appear. `vs_greedy` is each method's mean QoS over greedy's
/// at the same group size.
pub fn render(title: &str, rows: &[BenchRow]) -> String {
    let summary = summarize(rows);
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut sizes: Vec<u32> = summary.iter().map(|s| s.group_size).collect();
    sizes.sort_unstable();
    sizes.dedup();

    let mut out = String::new();
    let _ = writeln!(out, "## {title}\n");
    let _ = writeln!(
        out,
        "| group_size | method | reps | mean_qos | std_qos | vs_greedy | mean_wall_ms |"
    );
    let _ = writeln!(out, "|---:|:---|---:|---:|---:|---:|---:|");
    for size in sizes {
        let greedy = summary
            .iter()
            .find(|s| s.group_size == size && s.method == "greedy")
            .map(|s| s.mean_qos);
        for m in &methods {
            let Some(s) = summary
                .iter()
                .find(|s| s.group_size == size && s.method == *m)
            else {
                continue;
            };
            let ratio = match greedy {
                Some(g) if g > 0.0 => format!("{:.3}", s.mean_qos / g),
                _ => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.5} | {:.5} | {} | {:.4} |",
                s.group_size, s.method, s.repetitions, s.mean_qos, s.std_qos, ratio, s.mean_wall_ms
            );
        }
    }
    out
}
