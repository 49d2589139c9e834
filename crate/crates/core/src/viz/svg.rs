use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::chem::Reaction;
use crate::cluster::DistanceMatrix;

use super::color::{hex, ColorMap, Rgb};
use super::VizError;

const CELL: f64 = 14.0;
const LABEL_MARGIN: f64 = 90.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n"
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub order: Vec<usize>,
    pub labels: Vec<String>,
    pub max_distance: f64,
    /// Distances in display order, row-major.
    pub values: Vec<f64>,
    pub colors: Vec<String>,
}

fn check_permutation(order: &[usize], n: usize) -> Result<(), VizError> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(VizError::InvalidPermutation(format!("{} entries for {n} items", order.len())));
    }
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(VizError::InvalidPermutation(format!("entry {i} repeated or out of range")));
        }
    }
    Ok(())
}

/// Distance heatmap with rows and columns in `order`; blue is near, red is
/// far, scaled over `[0, max distance]`.
pub fn render_heatmap_svg(
    dm: &DistanceMatrix,
    order: &[usize],
    labels: &[String],
) -> Result<(String, HeatmapSidecar), VizError> {
    let n = dm.n();
    check_permutation(order, n)?;
    if labels.len() != n {
        return Err(VizError::CountMismatch { expected: n, found: labels.len() });
    }
    let max = dm.max_value();
    let cmap = ColorMap::diverging();
    let size = LABEL_MARGIN + CELL * n as f64 + 10.0;
    let mut svg = header(size, size);
    let mut values = Vec::with_capacity(n * n);
    let mut colors = Vec::with_capacity(n * n);
    for (r, &i) in order.iter().enumerate() {
        let y = LABEL_MARGIN + CELL * r as f64;
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"9\" text-anchor=\"end\">{}</text>",
            LABEL_MARGIN - 4.0,
            y + CELL * 0.7,
            escape(&labels[i])
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.1}\" y=\"{y0:.1}\" font-size=\"9\" transform=\"rotate(-90 {x:.1} {y0:.1})\">{}</text>",
            escape(&labels[i]),
            x = y + CELL * 0.7,
            y0 = LABEL_MARGIN - 4.0,
        );
        for (c, &j) in order.iter().enumerate() {
            let d = dm.get(i, j);
            let color = hex(cmap.color(if max > 0.0 { d / max } else { 0.0 }));
            let _ = writeln!(
                svg,
                "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{CELL:.1}\" height=\"{CELL:.1}\" fill=\"{color}\"/>",
                LABEL_MARGIN + CELL * c as f64
            );
            values.push(d);
            colors.push(color);
        }
    }
    svg.push_str("</svg>\n");
    Ok((svg, HeatmapSidecar { order: order.to_vec(), labels: labels.to_vec(), max_distance: max, values, colors }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomCell {
    pub index: usize,
    pub symbol: String,
    pub intensity: f64,
    pub fill: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRow {
    pub side: String,
    pub component: usize,
    pub atoms: Vec<AtomCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSidecar {
    pub rows: Vec<MoleculeRow>,
}

/// One row of labelled circles per molecule, reactants first, filled on
/// the red scale. `intensities` runs over reactant components and then
/// product components.
pub fn render_attention_svg(rxn: &Reaction, intensities: &[Vec<f64>]) -> Result<(String, AttentionSidecar), VizError> {
    let mols: Vec<(&str, usize, &crate::chem::MolecularGraph)> = rxn
        .reactant_components
        .iter()
        .enumerate()
        .map(|(i, m)| ("reactants", i, m))
        .chain(rxn.product_components.iter().enumerate().map(|(i, m)| ("products", i, m)))
        .collect();
    if intensities.len() != mols.len() {
        return Err(VizError::CountMismatch { expected: mols.len(), found: intensities.len() });
    }
    for ((_, _, m), w) in mols.iter().zip(intensities) {
        if m.atoms.len() != w.len() {
            return Err(VizError::CountMismatch { expected: m.atoms.len(), found: w.len() });
        }
    }
    const STEP: f64 = 36.0;
    const ROW: f64 = 44.0;
    const LEFT: f64 = 80.0;
    let widest = mols.iter().map(|m| m.2.atoms.len()).max().unwrap_or(1);
    let width = LEFT + STEP * widest as f64 + 10.0;
    let n_react = rxn.reactant_components.len();
    // A small gap separates the product rows from the reactant rows.
    let row_y = |r: usize| 30.0 + ROW * r as f64 + if r >= n_react { 8.0 } else { 0.0 };
    let height = row_y(mols.len()) + 10.0;
    let mut svg = header(width, height);
    let mut rows = Vec::with_capacity(mols.len());
    for (r, ((side, comp, mol), w)) in mols.iter().zip(intensities).enumerate() {
        let y = row_y(r);
        let tag = if *side == "reactants" { 'R' } else { 'P' };
        let _ = writeln!(svg, "<text x=\"8\" y=\"{:.1}\" font-size=\"12\">{tag}{}</text>", y + 4.0, comp + 1);
        let mut atoms = Vec::with_capacity(w.len());
        for (a, (atom, &v)) in mol.atoms.iter().zip(w).enumerate() {
            let x = LEFT + STEP * a as f64;
            let fill = hex(super::red_scale(v));
            let symbol = atom.element.symbol().to_string();
            let ink = if v > 0.5 { "#ffffff" } else { "#000000" };
            let _ = writeln!(svg, "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"15\" fill=\"{fill}\" stroke=\"#444444\"/>");
            let _ = writeln!(
                svg,
                "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\" fill=\"{ink}\">{}{a}</text>",
                y + 3.5,
                escape(&symbol)
            );
            atoms.push(AtomCell { index: a, symbol, intensity: v, fill });
        }
        rows.push(MoleculeRow { side: side.to_string(), component: *comp, atoms });
    }
    svg.push_str("</svg>\n");
    Ok((svg, AttentionSidecar { rows }))
}

/// Dataset tag → colour and marker. At most eight entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub entries: Vec<(String, Rgb)>,
}

pub const MAX_DATASETS: usize = 8;
const DEFAULT_COLORS: [Rgb; MAX_DATASETS] = [
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (214, 39, 40),
    (148, 103, 189),
    (140, 86, 75),
    (227, 119, 194),
    (127, 127, 127),
];

impl Palette {
    pub fn new(entries: Vec<(String, Rgb)>) -> Result<Self, VizError> {
        if entries.len() > MAX_DATASETS {
            return Err(VizError::TooManyDatasets(entries.len()));
        }
        Ok(Palette { entries })
    }

    /// Default colours in order of first appearance.
    pub fn for_tags(tags: &[String]) -> Result<Self, VizError> {
        let mut seen: Vec<String> = Vec::new();
        for t in tags {
            if !seen.contains(t) {
                seen.push(t.clone());
            }
        }
        if seen.len() > MAX_DATASETS {
            return Err(VizError::TooManyDatasets(seen.len()));
        }
        Ok(Palette { entries: seen.into_iter().zip(DEFAULT_COLORS).collect() })
    }

    fn index(&self, tag: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.0 == tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterSidecar {
    pub bounds: [f64; 4],
    pub legend: Vec<String>,
    pub counts: Vec<usize>,
}

fn marker(svg: &mut String, shape: usize, x: f64, y: f64, fill: &str) {
    let r = 3.0;
    let _ = match shape % 4 {
        0 => writeln!(svg, "<circle class=\"pt\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r}\" fill=\"{fill}\" fill-opacity=\"0.7\"/>"),
        1 => writeln!(
            svg,
            "<rect class=\"pt\" x=\"{:.2}\" y=\"{:.2}\" width=\"{}\" height=\"{}\" fill=\"{fill}\" fill-opacity=\"0.7\"/>",
            x - r,
            y - r,
            2.0 * r,
            2.0 * r
        ),
        2 => writeln!(
            svg,
            "<polygon class=\"pt\" points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"{fill}\" fill-opacity=\"0.7\"/>",
            x,
            y - r,
            x - r,
            y + r,
            x + r,
            y + r
        ),
        _ => writeln!(
            svg,
            "<polygon class=\"pt\" points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"{fill}\" fill-opacity=\"0.7\"/>",
            x,
            y - r,
            x + r,
            y,
            x,
            y + r,
            x - r,
            y
        ),
    };
}

/// Scatter plot of 2-D points coloured and shaped by dataset, with a
/// legend and axes fitted to the data plus a 5% margin.
pub fn render_scatter_svg(
    points: &[[f32; 2]],
    tags: &[String],
    palette: &Palette,
) -> Result<(String, ScatterSidecar), VizError> {
    if points.len() != tags.len() {
        return Err(VizError::CountMismatch { expected: points.len(), found: tags.len() });
    }
    let idx: Vec<usize> = tags
        .iter()
        .map(|t| palette.index(t).ok_or_else(|| VizError::UnknownTag(t.clone())))
        .collect::<Result<_, _>>()?;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(f64::from(p[0]));
        x1 = x1.max(f64::from(p[0]));
        y0 = y0.min(f64::from(p[1]));
        y1 = y1.max(f64::from(p[1]));
    }
    if points.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        let span = if hi > lo { hi - lo } else { 1.0 };
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let ((x0, x1), (y0, y1)) = (pad(x0, x1), pad(y0, y1));
    const PLOT: f64 = 480.0;
    const LEFT: f64 = 50.0;
    const TOP: f64 = 20.0;
    const LEGEND: f64 = 170.0;
    let mut svg = header(LEFT + PLOT + LEGEND, TOP + PLOT + 40.0);
    let _ = writeln!(
        svg,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{PLOT}\" height=\"{PLOT}\" fill=\"none\" stroke=\"#000000\"/>"
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (LEFT + f * PLOT, TOP + PLOT - f * PLOT);
        let _ = writeln!(
            svg,
            "<text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{xv:.2}</text>",
            TOP + PLOT + 14.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{yv:.2}</text>",
            LEFT - 4.0,
            py + 3.0
        );
    }
    let fills: Vec<String> = palette.entries.iter().map(|e| hex(e.1)).collect();
    let mut counts = vec![0usize; palette.entries.len()];
    for (p, &k) in points.iter().zip(&idx) {
        let px = LEFT + (f64::from(p[0]) - x0) / (x1 - x0) * PLOT;
        let py = TOP + PLOT - (f64::from(p[1]) - y0) / (y1 - y0) * PLOT;
        marker(&mut svg, k, px, py, &fills[k]);
        counts[k] += 1;
    }
    for (k, (tag, _)) in palette.entries.iter().enumerate() {
        let y = TOP + 16.0 + 18.0 * k as f64;
        let x = LEFT + PLOT + 20.0;
        svg.push_str("<g class=\"legend\">\n");
        marker(&mut svg, k, x, y, &fills[k]);
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>", x + 10.0, y + 4.0, escape(tag));
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok((
        svg,
        ScatterSidecar {
            bounds: [x0, x1, y0, y1],
            legend: palette.entries.iter().map(|e| e.0.clone()).collect(),
            counts,
        },
    ))
}
