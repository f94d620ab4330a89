//! Plain-text evaluation report (`key = value` lines) and per-user CSV.

use std::fmt::Write as _;

use motionid_core::eval::EvalReport;
use motionid_core::features::Variant;

use crate::error::{Error, Result};

pub fn render(r: &EvalReport, variant: Variant) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("variant", variant.name().to_string());
    kv("users_evaluated", r.users_evaluated.to_string());
    kv("users_excluded", r.users_excluded.to_string());
    kv("samples_evaluated", r.samples_evaluated.to_string());
    kv("per_sample_accuracy", format!("{:.6}", r.per_sample_accuracy));
    kv("per_user_accuracy", format!("{:.6}", r.per_user_accuracy));
    for (k, a) in &r.top_k_accuracies {
        kv(&format!("top{k}_accuracy"), format!("{a:.6}"));
    }
    for (n, a) in &r.accuracy_by_sample_count {
        kv(&format!("accuracy_at_{n}_samples"), format!("{a:.6}"));
    }
    for (t, f) in &r.importance_by_type {
        kv(&format!("importance.{}", t.as_str()), format!("{f:.6}"));
    }
    for ((factor, value), b) in &r.group_accuracies {
        kv(
            &format!("impact.{factor}.{value}"),
            format!("{:.6} ({}/{})", b.accuracy(), b.correct, b.total),
        );
    }
    s
}

pub fn per_user_csv(r: &EvalReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["user_id", "samples", "predicted", "rank", "correct_samples"])?;
    for u in &r.per_user {
        w.write_record([
            u.user.as_str(),
            &u.samples.to_string(),
            u.predicted.as_str(),
            &u.rank.to_string(),
            &u.correct_samples.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Workspace(e.to_string()))
}
