//! CSV tables, SVG heatmaps and JSON-lines catalog exports.
//!
//! Every renderer is a pure function of its inputs: the same report and
//! style always produce the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{CoverageReport, GapReport};
use crate::matcher::{encode, ProfileVector};
use crate::model::{Assessment, Project, ProjectKind};
use crate::taxonomy::{CellKey, Issue, Purpose, Scale, TaxonomyDocument, ISSUE_COUNT, PURPOSE_COUNT};

#[derive(Error, Debug)]
pub enum ReportError {
    #[error("marker ({row}, {col}) is outside the 12 x 6 grid")]
    InvalidCell { row: usize, col: usize },
    #[error("assessment references unknown project {0:?}")]
    UnknownProject(String),
    #[error("invalid report style: {0}")]
    InvalidStyle(String),
    #[error("catalog line {line}: {source}")]
    CatalogParse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportStyle {
    pub decimals: usize,
    /// Colors for 0, 25, 50, 75 and 100 percent, as `#rrggbb`.
    pub ramp: Vec<String>,
    pub cell_size: f64,
    /// Glyph diameter relative to cell height.
    pub marker_scale: f64,
    pub star_color: String,
    pub circle_color: String,
}

impl Default for ReportStyle {
    fn default() -> Self {
        ReportStyle {
            decimals: 1,
            ramp: ["#f7fbff", "#c6dbef", "#6baed6", "#2171b5", "#08306b"]
                .map(String::from)
                .to_vec(),
            cell_size: 48.0,
            marker_scale: 0.4,
            star_color: "#e6550d".into(),
            circle_color: "#31a354".into(),
        }
    }
}

impl ReportStyle {
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.ramp.len() != 5 {
            return Err(ReportError::InvalidStyle(format!("ramp needs exactly 5 stops, got {}", self.ramp.len())));
        }
        for c in self.ramp.iter().chain([&self.star_color, &self.circle_color]) {
            parse_hex(c).ok_or_else(|| ReportError::InvalidStyle(format!("bad color {c:?}")))?;
        }
        if !(self.cell_size > 0.0) || !(self.marker_scale > 0.0 && self.marker_scale <= 1.0) {
            return Err(ReportError::InvalidStyle("cell_size and marker_scale must be positive".into()));
        }
        Ok(())
    }

    /// Color for a percentage, linearly interpolated between ramp stops.
    pub fn color_for(&self, pct: f64) -> String {
        let stops: Vec<[u8; 3]> = self.ramp.iter().map(|c| parse_hex(c).unwrap_or([0, 0, 0])).collect();
        let t = (pct.clamp(0.0, 100.0) / 100.0) * (stops.len() - 1) as f64;
        let lo = (t.floor() as usize).min(stops.len() - 1);
        let hi = (lo + 1).min(stops.len() - 1);
        let frac = t - lo as f64;
        let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * frac).round() as u8;
        let (a, b) = (stops[lo], stops[hi]);
        format!("#{:02x}{:02x}{:02x}", mix(a[0], b[0]), mix(a[1], b[1]), mix(a[2], b[2]))
    }
}

fn parse_hex(s: &str) -> Option<[u8; 3]> {
    let h = s.strip_prefix('#')?;
    if h.len() != 6 || !h.is_ascii() {
        return None;
    }
    let byte = |i: usize| u8::from_str_radix(&h[i..i + 2], 16).ok();
    Some([byte(0)?, byte(2)?, byte(4)?])
}

fn fmt_pct(v: f64, decimals: usize) -> String {
    // Avoid "-0.0".
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.decimals$}")
}

/// Issue rows by purpose columns, plus a `TOTAL` row of purpose shares.
/// RFC 4180 with CRLF terminators; always 14 lines.
pub fn coverage_csv(r: &CoverageReport, style: &ReportStyle) -> String {
    let mut out = String::from("issue");
    for p in Purpose::ALL {
        out.push(',');
        out.push_str(p.id());
    }
    out.push_str("\r\n");
    for i in Issue::ALL {
        out.push_str(i.id());
        for p in Purpose::ALL {
            out.push(',');
            out.push_str(&fmt_pct(r.cell(CellKey::new(i, p)), style.decimals));
        }
        out.push_str("\r\n");
    }
    out.push_str("TOTAL");
    for p in Purpose::ALL {
        out.push(',');
        out.push_str(&fmt_pct(r.per_purpose.get(&p).copied().unwrap_or(0.0), style.decimals));
    }
    out.push_str("\r\n");
    out
}

/// What the heatmap cells are colored by.
#[derive(Debug, Clone, Copy)]
pub enum HeatmapData<'a> {
    Coverage(&'a CoverageReport),
    /// Deltas map onto the ramp as `(delta + 100) / 2`, so +100 takes the
    /// top stop, 0 the middle one and -100 the bottom one.
    Gap(&'a GapReport),
}

impl HeatmapData<'_> {
    fn cell_value(&self, cell: CellKey) -> (f64, f64) {
        match self {
            HeatmapData::Coverage(r) => {
                let v = r.cell(cell);
                (v, v)
            }
            HeatmapData::Gap(g) => {
                let d = g.cell(cell).delta;
                ((d + 100.0) / 2.0, d)
            }
        }
    }
}

/// Converts (row, column) grid positions into cells.
pub fn markers_from_indices(positions: &[(usize, usize)]) -> Result<Vec<CellKey>, ReportError> {
    positions
        .iter()
        .map(|&(row, col)| CellKey::from_indices(row, col).ok_or(ReportError::InvalidCell { row, col }))
        .collect()
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn star_points(cx: f64, cy: f64, outer: f64) -> String {
    let inner = outer * 0.382;
    (0..10)
        .map(|k| {
            let r = if k % 2 == 0 { outer } else { inner };
            let angle = -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 5.0;
            format!("{:.2},{:.2}", cx + r * angle.cos(), cy + r * angle.sin())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// 12 x 6 heatmap with star glyphs on plan-marked cells and circles on
/// activity-marked cells. Rows and columns follow the canonical order and
/// carry the taxonomy display labels.
pub fn heatmap_svg(
    data: HeatmapData<'_>,
    plan_markers: &[CellKey],
    activity_markers: &[CellKey],
    style: &ReportStyle,
    taxonomy: &TaxonomyDocument,
) -> Result<String, ReportError> {
    style.validate()?;
    let c = style.cell_size;
    let left = 320.0;
    let top = 140.0;
    let width = left + c * PURPOSE_COUNT as f64 + 20.0;
    let height = top + c * ISSUE_COUNT as f64 + 20.0;
    let glyph_r = c * style.marker_scale / 2.0;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let title = match data {
        HeatmapData::Coverage(r) => format!("Coverage of {} projects", r.n_projects),
        HeatmapData::Gap(g) => format!("Plan vs activity gap ({} plans, {} activities)", g.n_plans, g.n_activities),
    };
    let _ = writeln!(svg, r#"  <title>{}</title>"#, escape(&title));

    let _ = writeln!(svg, r#"  <g class="column-labels">"#);
    for p in Purpose::ALL {
        let x = left + c * (p.index() as f64 + 0.5);
        let _ = writeln!(
            svg,
            r#"    <text x="{x:.2}" y="{y:.2}" transform="rotate(-35 {x:.2} {y:.2})">{}</text>"#,
            escape(&taxonomy.purpose(p).label),
            y = top - 8.0
        );
    }
    let _ = writeln!(svg, "  </g>");

    let _ = writeln!(svg, r#"  <g class="row-labels" text-anchor="end">"#);
    for i in Issue::ALL {
        let y = top + c * (i.index() as f64 + 0.5) + 4.0;
        let _ = writeln!(svg, r#"    <text x="{:.2}" y="{y:.2}">{}</text>"#, left - 8.0, escape(&taxonomy.issue(i).label));
    }
    let _ = writeln!(svg, "  </g>");

    let _ = writeln!(svg, r#"  <g class="cells" text-anchor="middle" font-size="10">"#);
    for i in Issue::ALL {
        for p in Purpose::ALL {
            let cell = CellKey::new(i, p);
            let (ramp_value, shown) = data.cell_value(cell);
            let (x, y) = (left + c * p.index() as f64, top + c * i.index() as f64);
            let _ = writeln!(
                svg,
                r##"    <rect x="{x:.2}" y="{y:.2}" width="{c:.2}" height="{c:.2}" fill="{}" stroke="#ffffff" data-cell="{cell}"/>"##,
                style.color_for(ramp_value)
            );
            let _ = writeln!(
                svg,
                r##"    <text x="{:.2}" y="{:.2}" fill="{}">{}</text>"##,
                x + c / 2.0,
                y + c - 4.0,
                if ramp_value > 60.0 { "#ffffff" } else { "#333333" },
                fmt_pct(shown, style.decimals)
            );
        }
    }
    let _ = writeln!(svg, "  </g>");

    let _ = writeln!(svg, r#"  <g class="markers">"#);
    let mut plans: Vec<CellKey> = plan_markers.to_vec();
    plans.sort();
    plans.dedup();
    for cell in plans {
        let cx = left + c * (cell.purpose.index() as f64 + 0.3);
        let cy = top + c * (cell.issue.index() as f64 + 0.4);
        let _ = writeln!(
            svg,
            r##"    <polygon class="plan-marker" points="{}" fill="{}" stroke="#000000" stroke-width="0.5" data-cell="{cell}"/>"##,
            star_points(cx, cy, glyph_r),
            style.star_color
        );
    }
    let mut activities: Vec<CellKey> = activity_markers.to_vec();
    activities.sort();
    activities.dedup();
    for cell in activities {
        let cx = left + c * (cell.purpose.index() as f64 + 0.7);
        let cy = top + c * (cell.issue.index() as f64 + 0.4);
        let _ = writeln!(
            svg,
            r##"    <circle class="activity-marker" cx="{cx:.2}" cy="{cy:.2}" r="{glyph_r:.2}" fill="{}" fill-opacity="0.8" stroke="#000000" stroke-width="0.5" data-cell="{cell}"/>"##,
            style.circle_color
        );
    }
    let _ = writeln!(svg, "  </g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogCell {
    pub issue: Issue,
    pub purpose: Purpose,
    pub scale: Scale,
    pub score: u8,
}

/// One exported project: text, kind and its assessment profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub project_id: String,
    pub title: String,
    pub description: String,
    pub kind: ProjectKind,
    pub vector: ProfileVector,
    pub cells: Vec<CatalogCell>,
}

impl CatalogEntry {
    pub fn new(project: &Project, assessment: &Assessment) -> Self {
        let vector = encode(assessment);
        let cells = vector
            .decode()
            .into_iter()
            .map(|(t, s)| CatalogCell {
                issue: t.cell.issue,
                purpose: t.cell.purpose,
                scale: t.scale,
                score: s.value(),
            })
            .collect();
        CatalogEntry {
            project_id: project.id.clone(),
            title: project.title.clone(),
            description: project.description.clone(),
            kind: project.kind,
            vector,
            cells,
        }
    }
}

/// JSON-lines catalog, one line per assessed project, sorted by id. If a
/// project has several assessments the latest `created_at` wins.
pub fn export_catalog(assessments: &[Assessment], projects: &[Project]) -> Result<String, ReportError> {
    let by_id: BTreeMap<&str, &Project> = projects.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut latest: BTreeMap<&str, &Assessment> = BTreeMap::new();
    for a in assessments {
        if !by_id.contains_key(a.project_id.as_str()) {
            return Err(ReportError::UnknownProject(a.project_id.clone()));
        }
        latest
            .entry(a.project_id.as_str())
            .and_modify(|cur| {
                if a.created_at >= cur.created_at {
                    *cur = a;
                }
            })
            .or_insert(a);
    }
    let mut out = String::new();
    for (id, a) in latest {
        let entry = CatalogEntry::new(by_id[id], a);
        out.push_str(&serde_json::to_string(&entry).expect("catalog entry serializes"));
        out.push('\n');
    }
    Ok(out)
}

pub fn import_catalog(text: &str) -> Result<Vec<CatalogEntry>, ReportError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|source| ReportError::CatalogParse { line: n + 1, source }))
        .collect()
}
