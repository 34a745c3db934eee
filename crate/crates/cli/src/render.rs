//! SVG output. World y points up, so everything goes through `px`.

use std::fmt::Write as _;

use rrt_mppi::controller::{TraceRecord, TrialRecord};
use rrt_mppi::geometry::Vec2;
use rrt_mppi::graph::TreeFile;
use rrt_mppi::planner::extract_min_path;
use rrt_mppi::world::{Configuration, Environment, RobotModel, StaticObstacle};

const SCALE: f64 = 60.0;
const MARGIN: f64 = 10.0;

struct Frame {
    min: Vec2,
    height: f64,
}

impl Frame {
    fn px(&self, p: Vec2) -> (f64, f64) {
        (
            MARGIN + (p.x - self.min.x) * SCALE,
            MARGIN + (self.height - (p.y - self.min.y)) * SCALE,
        )
    }

    fn points(&self, ps: impl IntoIterator<Item = Vec2>) -> String {
        ps.into_iter()
            .map(|p| {
                let (x, y) = self.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn marker(s: &mut String, f: &Frame, q: &Configuration, class: &str, colour: &str) {
    let (x, y) = f.px(q.position());
    let _ = writeln!(s, r#"<circle class="{class}" cx="{x:.2}" cy="{y:.2}" r="6" fill="{colour}"/>"#);
    if q.theta.is_some() {
        let (a, b) = RobotModel::stick_endpoints(RobotModel::DEFAULT_STICK_HALF_LENGTH, q);
        let ((x1, y1), (x2, y2)) = (f.px(a), f.px(b));
        let _ = writeln!(
            s,
            r#"<line class="{class}-pose" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{colour}" stroke-width="3"/>"#
        );
    }
}

/// Renders the environment with an optional tree and trial.
pub fn svg(env: &Environment, tree: Option<&TreeFile>, trial: Option<(&TrialRecord, &[TraceRecord])>) -> Result<String, String> {
    let b = env.bounds;
    let f = Frame {
        min: b.min,
        height: b.max.y - b.min.y,
    };
    let (w, h) = (
        (b.max.x - b.min.x) * SCALE + 2.0 * MARGIN,
        (b.max.y - b.min.y) * SCALE + 2.0 * MARGIN,
    );
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let (x0, y0) = f.px(Vec2::new(b.min.x, b.max.y));
    let _ = writeln!(
        s,
        r#"<rect class="bounds" x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="white" stroke="black"/>"#,
        (b.max.x - b.min.x) * SCALE,
        (b.max.y - b.min.y) * SCALE
    );
    for o in &env.obstacles {
        match o {
            StaticObstacle::Polygon(p) => {
                let _ = writeln!(
                    s,
                    r##"<polygon class="obstacle" points="{}" fill="#555"/>"##,
                    f.points(p.vertices().iter().copied())
                );
            }
            StaticObstacle::Circle(c) => {
                let (cx, cy) = f.px(c.center);
                let _ = writeln!(
                    s,
                    r##"<circle class="obstacle" cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="#555"/>"##,
                    c.radius * SCALE
                );
            }
        }
    }
    let (gx, gy) = f.px(env.goal.position());
    let _ = writeln!(
        s,
        r#"<circle class="goal-region" cx="{gx:.2}" cy="{gy:.2}" r="{:.2}" fill="none" stroke="magenta" stroke-dasharray="4 3"/>"#,
        env.goal_radius * SCALE
    );

    if let Some(t) = tree {
        let g = &t.graph;
        let _ = writeln!(s, r##"<g class="tree" stroke="#9ab" stroke-width="0.6">"##);
        for (i, j, _) in g.edges() {
            let ((x1, y1), (x2, y2)) = (f.px(g.vertex(i).position()), f.px(g.vertex(j).position()));
            let _ = writeln!(s, r#"<line class="edge" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#);
        }
        let _ = writeln!(s, "</g>");
        if let Some(start) = t.start_index {
            let path = extract_min_path(g, start).map_err(|e| e.to_string())?;
            let _ = writeln!(
                s,
                r##"<polyline class="min-path" points="{}" fill="none" stroke="#135" stroke-width="3"/>"##,
                f.points(path.iter().map(|&i| g.vertex(i).position()))
            );
        }
    }

    if let Some((record, trace)) = trial {
        if !record.trajectory.is_empty() {
            let _ = writeln!(
                s,
                r##"<polyline class="trajectory" points="{}" fill="none" stroke="#2a2" stroke-width="2"/>"##,
                f.points(record.trajectory.iter().map(|st| st.q.position()))
            );
        }
        if let Some(t) = tree {
            for line in trace {
                if let Some(n) = line.terminal_node {
                    if n >= t.graph.len() {
                        return Err(format!("trace references vertex {n} outside the tree"));
                    }
                    let (x, y) = f.px(t.graph.vertex(n).position());
                    let _ = writeln!(
                        s,
                        r#"<circle class="terminal-node" data-step="{}" cx="{x:.2}" cy="{y:.2}" r="3" fill="red"/>"#,
                        line.step
                    );
                }
            }
        }
    }
    marker(&mut s, &f, &env.start, "start", "blue");
    marker(&mut s, &f, &env.goal, "goal", "magenta");
    s.push_str("</svg>\n");
    Ok(s)
}
