//! Static SVG and CSV views of a partition: Must, May, unsafe, goal and
//! init cells projected onto two axes, with the control grid on top.

use std::collections::BTreeSet;
use std::fmt::Write;

use thiserror::Error;

use crate::geometry::rational::{int, to_f64};
use crate::geometry::{CellId, Coverage, Partition, Scalar};
use crate::model::{Controller, Problem, RankingFunction};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("projection axes must be two distinct axes below {dim}, got {axes:?}")]
    BadAxes { axes: [usize; 2], dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    None,
    Rank,
    Input,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    pub must: String,
    pub may: String,
    pub unsafe_: String,
    pub goal: String,
    pub init: String,
    pub other: String,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            must: "#c6dbef".into(),
            may: "#4292c6".into(),
            unsafe_: "#d62728".into(),
            goal: "#2ca02c".into(),
            init: "#ffbf00".into(),
            other: "#ffffff".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderSpec {
    pub axes: [usize; 2],
    pub palette: Palette,
    pub labels: LabelMode,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            axes: [0, 1],
            palette: Palette::default(),
            labels: LabelMode::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Unsafe,
    Goal,
    Must,
    May,
    Init,
    Other,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Unsafe => "unsafe",
            Role::Goal => "goal",
            Role::Must => "must",
            Role::May => "may",
            Role::Init => "init",
            Role::Other => "other",
        }
    }
}

/// What to draw: a partition of the problem's state space with optional
/// Must/May sets and certificate data.
#[derive(Debug, Clone, Copy)]
pub struct Scene<'a> {
    pub problem: &'a Problem,
    pub partition: &'a Partition,
    pub must: &'a [CellId],
    pub may: &'a [CellId],
    pub controller: Option<&'a Controller>,
    pub ranking: Option<&'a RankingFunction>,
}

struct CellRow {
    control: CellId,
    role: Role,
    must: bool,
    may: bool,
}

fn rows(scene: &Scene) -> Vec<CellRow> {
    let must: BTreeSet<CellId> = scene.must.iter().copied().collect();
    let may: BTreeSet<CellId> = scene.may.iter().copied().collect();
    let p = scene.problem;
    (0..scene.partition.len())
        .map(|q| {
            let cell = scene.partition.cell(q);
            let control = p
                .control
                .containing_cell(cell)
                .expect("partition refines the control partition");
            let role = if cell.coverage(&p.safe) != Coverage::Inside {
                Role::Unsafe
            } else if cell.coverage(&p.goal) == Coverage::Inside {
                Role::Goal
            } else if must.contains(&q) {
                Role::Must
            } else if may.contains(&q) {
                Role::May
            } else if cell.coverage(&p.init) == Coverage::Inside {
                Role::Init
            } else {
                Role::Other
            };
            CellRow {
                control,
                role,
                must: must.contains(&q),
                may: may.contains(&q),
            }
        })
        .collect()
}

fn check_axes(spec: &RenderSpec, dim: usize) -> Result<(), RenderError> {
    let [a, b] = spec.axes;
    if a == b || a >= dim || b >= dim {
        return Err(RenderError::BadAxes {
            axes: spec.axes,
            dim,
        });
    }
    Ok(())
}

/// One line per partition cell: `cell,control,role,must,may,rank,input`.
/// Rank and input are those of the enclosing control cell, empty when no
/// certificate is given.
pub fn render_csv(scene: &Scene) -> String {
    let mut out = String::from("cell,control,role,must,may,rank,input\n");
    for (q, row) in rows(scene).iter().enumerate() {
        let rank = scene
            .ranking
            .map(|r| r.ranks[row.control].to_string())
            .unwrap_or_default();
        let input = scene
            .controller
            .map(|c| c.input_for(row.control).to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{q},{},{},{},{},{rank},{input}",
            row.control,
            row.role.name(),
            row.must as u8,
            row.may as u8
        );
    }
    out
}

/// Distinct projected control-cell boundaries along `axis`.
pub fn grid_lines(problem: &Problem, axis: usize) -> Vec<Scalar> {
    let mut out = BTreeSet::new();
    for c in problem.control.cells() {
        out.insert(c.lo()[axis].clone());
        out.insert(c.hi()[axis].clone());
    }
    out.into_iter().collect()
}

const SIZE: f64 = 600.0;
const PAD: f64 = 20.0;

pub fn render_svg(scene: &Scene, spec: &RenderSpec) -> Result<String, RenderError> {
    let dom = scene.problem.system.state_space();
    check_axes(spec, dom.dim())?;
    let [ax, ay] = spec.axes;
    let (x0, x1) = (to_f64(&dom.lo()[ax]), to_f64(&dom.hi()[ax]));
    let (y0, y1) = (to_f64(&dom.lo()[ay]), to_f64(&dom.hi()[ay]));
    let scale = (SIZE - 2.0 * PAD) / (x1 - x0).max(y1 - y0);
    let px = |x: f64| PAD + (x - x0) * scale;
    let py = |y: f64| PAD + (y1 - y) * scale;
    let width = 2.0 * PAD + (x1 - x0) * scale;
    let height = 2.0 * PAD + (y1 - y0) * scale;
    let pal = &spec.palette;
    let color = |r: Role| match r {
        Role::Unsafe => &pal.unsafe_,
        Role::Goal => &pal.goal,
        Role::Must => &pal.must,
        Role::May => &pal.may,
        Role::Init => &pal.init,
        Role::Other => &pal.other,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let rows = rows(scene);
    // Paint lower-priority roles first so overlapping projections keep
    // the most important color on top.
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by_key(|&q| std::cmp::Reverse(rows[q].role));
    for q in order {
        let cell = scene.partition.cell(q);
        let row = &rows[q];
        let (cx0, cx1) = (to_f64(&cell.lo()[ax]), to_f64(&cell.hi()[ax]));
        let (cy0, cy1) = (to_f64(&cell.lo()[ay]), to_f64(&cell.hi()[ay]));
        let _ = writeln!(
            svg,
            r##"<rect class="cell {}" data-cell="{q}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="#bbbbbb" stroke-width="0.5"/>"##,
            row.role.name(),
            px(cx0),
            py(cy1),
            (cx1 - cx0) * scale,
            (cy1 - cy0) * scale,
            color(row.role)
        );
        let label = match spec.labels {
            LabelMode::None => None,
            LabelMode::Rank => scene.ranking.map(|r| r.ranks[row.control].to_string()),
            LabelMode::Input => scene
                .controller
                .map(|c| c.input_for(row.control).to_string()),
        };
        if let Some(text) = label {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="middle">{text}</text>"#,
                px((cx0 + cx1) / 2.0),
                py((cy0 + cy1) / 2.0) + 3.0
            );
        }
    }
    for x in grid_lines(scene.problem, ax) {
        let x = px(to_f64(&x));
        let _ = writeln!(
            svg,
            r#"<line class="grid x" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            py(y1),
            py(y0)
        );
    }
    for y in grid_lines(scene.problem, ay) {
        let y = py(to_f64(&y));
        let _ = writeln!(
            svg,
            r#"<line class="grid y" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#,
            px(x0),
            px(x1)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// `true` iff the cells form one component under face adjacency.
pub fn is_connected(partition: &Partition, cells: &[CellId]) -> bool {
    let set: BTreeSet<CellId> = cells.iter().copied().collect();
    let Some(&start) = set.iter().next() else {
        return true;
    };
    let mut seen = BTreeSet::from([start]);
    let mut todo = vec![start];
    while let Some(c) = todo.pop() {
        let cell = partition.cell(c);
        for q in partition.cells_intersecting(cell) {
            if !set.contains(&q) || seen.contains(&q) {
                continue;
            }
            let shared = cell.intersection(partition.cell(q)).expect("intersecting");
            let flat = (0..shared.dim()).filter(|&i| shared.width(i) == int(0));
            if flat.count() <= 1 {
                seen.insert(q);
                todo.push(q);
            }
        }
    }
    seen.len() == set.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{gridworld, Layout};

    fn scene<'a>(p: &'a Problem, must: &'a [CellId], may: &'a [CellId]) -> Scene<'a> {
        Scene {
            problem: p,
            partition: &p.control,
            must,
            may,
            controller: None,
            ranking: None,
        }
    }

    #[test]
    fn grid_lines_match_control_counts() {
        let p = gridworld(4, 3, Layout::Open);
        let svg = render_svg(&scene(&p, &[], &[]), &RenderSpec::default()).unwrap();
        assert_eq!(svg.matches(r#"class="grid x""#).count(), 5);
        assert_eq!(svg.matches(r#"class="grid y""#).count(), 4);
        assert_eq!(svg.matches("<rect").count(), 12);
    }

    #[test]
    fn csv_lists_roles() {
        let p = gridworld(2, 2, Layout::Open);
        let csv = render_csv(&scene(&p, &[0], &[0, 1]));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,0,must,1,1,"), "{csv}");
        assert!(lines[2].starts_with("1,1,may,0,1,"), "{csv}");
    }

    #[test]
    fn bad_axes_rejected() {
        let p = gridworld(2, 2, Layout::Open);
        let spec = RenderSpec {
            axes: [1, 1],
            ..RenderSpec::default()
        };
        assert!(render_svg(&scene(&p, &[], &[]), &spec).is_err());
    }

    #[test]
    fn connectivity_uses_faces() {
        let p = gridworld(3, 3, Layout::Open);
        // Row-major with y fastest: cell 0 = (0,0), 4 = (1,1), 1 = (0,1).
        assert!(is_connected(&p.control, &[0, 1, 4]));
        assert!(!is_connected(&p.control, &[0, 4]));
        assert!(is_connected(&p.control, &[]));
    }
}
