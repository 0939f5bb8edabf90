//! Rule reports: the line format shared by `discover` and the data cache,
//! and the human-readable text/HTML reports.
//!
//! One rule per line:
//!
//! ```text
//! support_count, support_fraction, error_rate, p_value, ci_low, ci_high, condition, ...
//! 200, 0.1, 0.6, 1.2e-40, 0.53, 0.665, contains "island"
//! ```
//!
//! Numbers use the shortest representation that parses back to the same
//! value, in exponent form when very small or large. Conditions are written as `contains "<tokens>"`, `concept #<id>`
//! or `<feature> = <bucket>`; token strings and unusual feature names are
//! JSON-quoted. Lines starting with `#` are comments.

use std::fmt::Write as _;

use slicelens_core::analysis::OverviewReport;
use slicelens_core::text::Ngram;
use slicelens_core::{Bucket, Condition, Rule, RuleMetrics, RuleSet};

pub const HEADER: &str = "# support_count, support_fraction, error_rate, p_value, ci_low, ci_high, conditions...";

fn plain_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

pub fn condition_text(c: &Condition) -> String {
    match c {
        Condition::Token { tokens } => format!("contains {}", quote(&tokens.to_string())),
        Condition::Concept { id } => format!("concept #{id}"),
        Condition::HighLevel { feature, bucket } if plain_name(feature) => format!("{feature} = {bucket}"),
        Condition::HighLevel { feature, bucket } => format!("{} = {bucket}", quote(feature)),
    }
}

pub fn rule_line(rule: &Rule) -> String {
    let m = &rule.metrics;
    let mut line = format!(
        "{}, {:?}, {:?}, {:?}, {:?}, {:?}",
        m.support_count, m.support_fraction, m.error_rate, m.p_value, m.ci_low, m.ci_high
    );
    for c in &rule.conditions {
        line.push_str(", ");
        line.push_str(&condition_text(c));
    }
    line
}

/// Header plus one line per rule, in rule-set order.
pub fn rules_report(rules: &RuleSet) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in &rules.rules {
        out.push_str(&rule_line(r));
        out.push('\n');
    }
    out
}

/// Splits on `", "` outside JSON string literals.
fn split_fields(line: &str) -> Result<Vec<&str>, String> {
    let bytes = line.as_bytes();
    let mut fields = Vec::new();
    let mut start = 0;
    let mut in_str = false;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' if in_str => i += 1,
            b'"' => in_str = !in_str,
            b',' if !in_str => {
                fields.push(line[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    if in_str {
        return Err("unterminated string".into());
    }
    fields.push(line[start..].trim());
    Ok(fields)
}

fn unquote(s: &str) -> Result<String, String> {
    serde_json::from_str::<String>(s).map_err(|e| format!("bad string {s}: {e}"))
}

pub fn parse_condition(text: &str) -> Result<Condition, String> {
    if let Some(rest) = text.strip_prefix("contains ") {
        let tokens = Ngram::parse(&unquote(rest.trim())?);
        return Ok(Condition::Token { tokens });
    }
    if let Some(rest) = text.strip_prefix("concept #") {
        let id = rest.trim().parse().map_err(|_| format!("bad concept id in {text:?}"))?;
        return Ok(Condition::Concept { id });
    }
    let (name, bucket) = text.rsplit_once(" = ").ok_or_else(|| format!("unrecognized condition {text:?}"))?;
    let name = name.trim();
    let feature = if name.starts_with('"') { unquote(name)? } else { name.to_string() };
    let bucket = Bucket::parse(bucket.trim()).ok_or_else(|| format!("unknown bucket in {text:?}"))?;
    Ok(Condition::HighLevel { feature, bucket })
}

pub fn parse_rule_line(line: &str) -> Result<Rule, String> {
    let fields = split_fields(line)?;
    if fields.len() < 7 {
        return Err(format!("expected at least 7 fields, found {}", fields.len()));
    }
    let num = |i: usize| -> Result<f64, String> {
        fields[i].parse::<f64>().map_err(|_| format!("field {}: not a number: {:?}", i + 1, fields[i]))
    };
    let support_count: usize = fields[0].parse().map_err(|_| format!("field 1: not a count: {:?}", fields[0]))?;
    let error_rate = num(2)?;
    let metrics = RuleMetrics {
        support_count,
        support_fraction: num(1)?,
        error_count: (error_rate * support_count as f64).round() as usize,
        error_rate,
        p_value: num(3)?,
        ci_low: num(4)?,
        ci_high: num(5)?,
    };
    let conditions = fields[6..].iter().map(|f| parse_condition(f)).collect::<Result<Vec<_>, _>>()?;
    Ok(Rule { conditions, metrics })
}

/// Parses a whole report, skipping blank and comment lines. Errors carry the
/// 1-based line number.
pub fn parse_rules_report(text: &str) -> Result<Vec<Rule>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| parse_rule_line(l).map_err(|e| (i + 1, e)))
        .collect()
}

fn rule_text(rule: &Rule) -> String {
    rule.conditions.iter().map(condition_text).collect::<Vec<_>>().join(" AND ")
}

fn percent(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

/// Plain-text summary: overall performance, top tokens and high-level
/// features, then the first `limit` rules.
pub fn text_report(overview: &OverviewReport, rules: &RuleSet, limit: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Test documents:      {}", overview.n_test);
    let _ = writeln!(s, "Training documents:  {}", overview.n_train);
    let _ = writeln!(s, "Errors:              {}", overview.error_count);
    let _ = writeln!(s, "Accuracy:            {}", percent(overview.accuracy));
    let _ = writeln!(s, "Baseline error rate: {}", percent(overview.baseline_error_rate));
    let mut section = |title: &str, list: &[Rule]| {
        let _ = writeln!(s, "\n{title}");
        if list.is_empty() {
            let _ = writeln!(s, "  (none)");
        }
        for r in list {
            let _ = writeln!(
                s,
                "  {:<40} error {:>6}  support {:>5}",
                rule_text(r),
                percent(r.metrics.error_rate),
                r.metrics.support_count
            );
        }
    };
    section("Top tokens/phrases", &overview.top_tokens);
    section("Top high-level features", &overview.top_high_level);
    let shown = &rules.rules[..rules.rules.len().min(limit)];
    let _ = writeln!(s, "\nRules ({} of {})", shown.len(), rules.rules.len());
    for r in shown {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "  {}\n    error {} ({}/{}), support {}, p = {:.3e}, 95% CI [{:.3}, {:.3}]",
            rule_text(r),
            percent(m.error_rate),
            m.error_count,
            m.support_count,
            percent(m.support_fraction),
            m.p_value,
            m.ci_low,
            m.ci_high
        );
    }
    s
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn html_table(s: &mut String, rules: &[Rule]) {
    s.push_str("<table>\n<tr><th>Rule</th><th>Error rate</th><th>Errors</th><th>Support</th><th>p-value</th><th>95% CI</th></tr>\n");
    for r in rules {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{} ({})</td><td>{:.3e}</td><td>[{:.3}, {:.3}]</td></tr>",
            escape(&rule_text(r)),
            percent(m.error_rate),
            m.error_count,
            m.support_count,
            percent(m.support_fraction),
            m.p_value,
            m.ci_low,
            m.ci_high
        );
    }
    s.push_str("</table>\n");
}

/// Standalone HTML page with the same content as [`text_report`].
pub fn html_report(overview: &OverviewReport, rules: &RuleSet, limit: usize) -> String {
    let mut s = String::from(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Error rules</title>\n\
         <style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}\
         td,th{border:1px solid #ccc;padding:4px 8px;text-align:left}</style>\n</head>\n<body>\n",
    );
    s.push_str("<h1>Error rules</h1>\n<ul>\n");
    let _ = writeln!(s, "<li>Test documents: {}</li>", overview.n_test);
    let _ = writeln!(s, "<li>Training documents: {}</li>", overview.n_train);
    let _ = writeln!(s, "<li>Errors: {}</li>", overview.error_count);
    let _ = writeln!(s, "<li>Accuracy: {}</li>", percent(overview.accuracy));
    let _ = writeln!(s, "<li>Baseline error rate: {}</li>", percent(overview.baseline_error_rate));
    s.push_str("</ul>\n<h2>Top tokens/phrases</h2>\n");
    html_table(&mut s, &overview.top_tokens);
    s.push_str("<h2>Top high-level features</h2>\n");
    html_table(&mut s, &overview.top_high_level);
    let shown = &rules.rules[..rules.rules.len().min(limit)];
    let _ = writeln!(s, "<h2>Rules ({} of {})</h2>", shown.len(), rules.rules.len());
    html_table(&mut s, shown);
    s.push_str("</body>\n</html>\n");
    s
}
