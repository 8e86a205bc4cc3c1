//! Per-model metric aggregation and the comparison table.

use std::fmt::Write;

use super::quality::{gmsd, psnr, ssim, Psnr};
use crate::error::Result;
use crate::image::Image;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageMetrics {
    pub name: String,
    pub psnr: Psnr,
    pub ssim: f64,
    pub gmsd: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub model: String,
    pub images: Vec<ImageMetrics>,
}

impl MetricsReport {
    pub fn count(&self) -> usize {
        self.images.len()
    }

    /// Images whose PSNR is infinite (identical to the reference).
    pub fn infinite_count(&self) -> usize {
        self.images.iter().filter(|m| m.psnr.infinite).count()
    }

    /// Mean PSNR over finite entries.
    pub fn mean_psnr(&self) -> Option<f64> {
        mean(
            self.images
                .iter()
                .filter(|m| !m.psnr.infinite)
                .map(|m| m.psnr.db),
        )
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        mean(self.images.iter().map(|m| m.ssim))
    }

    pub fn mean_gmsd(&self) -> Option<f64> {
        mean(self.images.iter().map(|m| m.gmsd))
    }

    pub fn row(&self) -> ReportRow {
        ReportRow {
            model: self.model.clone(),
            psnr: self.mean_psnr(),
            ssim: self.mean_ssim(),
            gmsd: self.mean_gmsd(),
            gmacs: None,
            minutes_per_scan: None,
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut total, mut n) = (0.0, 0usize);
    for v in values {
        total += v;
        n += 1;
    }
    (n > 0).then(|| total / n as f64)
}

/// Scores `(name, reference, test)` triples.
pub fn evaluate_pairs<T: Scalar>(
    model: &str,
    pairs: &[(String, Image<T>, Image<T>)],
    peak: f64,
) -> Result<MetricsReport> {
    use rayon::prelude::*;
    let images = pairs
        .par_iter()
        .map(|(name, r, t)| {
            Ok(ImageMetrics {
                name: name.clone(),
                psnr: psnr(r, t, peak)?,
                ssim: ssim(r, t, peak)?,
                gmsd: gmsd(r, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport {
        model: model.to_string(),
        images,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub gmsd: Option<f64>,
    pub gmacs: Option<f64>,
    pub minutes_per_scan: Option<f64>,
}

fn cell(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.decimals$}"))
}

/// Fixed-width table sorted by PSNR, best first; rows without PSNR go last.
pub fn render_report(rows: &[ReportRow]) -> String {
    let mut sorted: Vec<&ReportRow> = rows.iter().collect();
    sorted.sort_by(|a, b| match (a.psnr, b.psnr) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let header = ["Model", "PSNR", "SSIM", "GMSD", "GMACs/patch", "time/scan"];
    let body: Vec<[String; 6]> = sorted
        .iter()
        .map(|r| {
            [
                r.model.clone(),
                cell(r.psnr, 2),
                cell(r.ssim, 4),
                cell(r.gmsd, 4),
                cell(r.gmacs, 3),
                r.minutes_per_scan
                    .map_or_else(|| "-".to_string(), |m| format!("{m:.2} min")),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "| {} |", parts.join(" | "));
    };
    line(&mut out, &header.map(String::from));
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
    for row in &body {
        line(&mut out, row);
    }
    out
}
