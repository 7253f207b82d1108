//! Raster plot emission. Every figure is drawn into an RGB canvas with a
//! built-in 5x7 bitmap font and saved as PNG, and the numbers behind it go
//! into a CSV file next to the image so the figure can be regenerated
//! without re-running anything.

use std::io;
use std::path::{Path, PathBuf};

use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::types::Trajectory;

use super::{aggregate, RunEval};

const WIDTH: usize = 640;
const HEIGHT: usize = 480;
const LEFT: usize = 64;
const RIGHT: usize = 20;
const TOP: usize = 34;
const BOTTOM: usize = 44;

const BLACK: [u8; 3] = [20, 20, 20];
const GRAY: [u8; 3] = [190, 190, 190];
const BAR_FILL: [u8; 3] = [90, 140, 210];

/// 5x7 glyphs, one byte per row, low 5 bits used.
const FONT: &[(char, [u8; 7])] = &[
    ('0', [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E]),
    ('1', [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E]),
    ('2', [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F]),
    ('3', [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E]),
    ('4', [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02]),
    ('5', [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E]),
    ('6', [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E]),
    ('7', [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08]),
    ('8', [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E]),
    ('9', [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C]),
    ('A', [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11]),
    ('B', [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E]),
    ('C', [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E]),
    ('D', [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C]),
    ('E', [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F]),
    ('F', [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10]),
    ('G', [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F]),
    ('H', [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11]),
    ('I', [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E]),
    ('J', [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C]),
    ('K', [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11]),
    ('L', [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F]),
    ('M', [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11]),
    ('N', [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11]),
    ('O', [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E]),
    ('P', [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10]),
    ('Q', [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D]),
    ('R', [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11]),
    ('S', [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E]),
    ('T', [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04]),
    ('U', [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E]),
    ('V', [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04]),
    ('W', [0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11]),
    ('X', [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11]),
    ('Y', [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04]),
    ('Z', [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F]),
    ('-', [0x00, 0x00, 0x00, 0x0E, 0x00, 0x00, 0x00]),
    ('.', [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C]),
    ('%', [0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03]),
    ('_', [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F]),
    ('=', [0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00]),
    ('/', [0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10]),
    (':', [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00]),
    (' ', [0x00; 7]),
];

struct Canvas {
    px: Vec<u8>,
}

impl Canvas {
    fn new() -> Self {
        Canvas {
            px: vec![255; WIDTH * HEIGHT * 3],
        }
    }

    fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x < 0 || y < 0 || x as usize >= WIDTH || y as usize >= HEIGHT {
            return;
        }
        let idx = (y as usize * WIDTH + x as usize) * 3;
        self.px[idx..idx + 3].copy_from_slice(&c);
    }

    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, c: [u8; 3]) {
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let x = x0 + t * (x1 - x0);
            let y = y0 + t * (y1 - y0);
            self.set(x.round() as i64, y.round() as i64, c);
        }
    }

    fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: [u8; 3]) {
        for y in y0.min(y1)..=y0.max(y1) {
            for x in x0.min(x1)..=x0.max(x1) {
                self.set(x, y, c);
            }
        }
    }

    fn text(&mut self, x: i64, y: i64, s: &str, c: [u8; 3]) {
        let mut cx = x;
        for ch in s.chars() {
            let up = ch.to_ascii_uppercase();
            let glyph = FONT
                .iter()
                .find(|(g, _)| *g == up)
                .map(|(_, rows)| *rows)
                .unwrap_or([0x00; 7]);
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..5 {
                    if bits & (1 << (4 - col)) != 0 {
                        self.set(cx + col as i64, y + row as i64, c);
                    }
                }
            }
            cx += 6;
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_raw(WIDTH as u32, HEIGHT as u32, self.px.clone())
            .expect("canvas buffer matches its dimensions");
        img.save(path)
            .map_err(|e| Error::io(path, io::Error::other(e)))
    }
}

/// Linear world-to-pixel mapping over the plot area, with the axis frame
/// and tick labels drawn at construction.
struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn draw(canvas: &mut Canvas, title: &str, x0: f64, x1: f64, y0: f64, y1: f64) -> Axes {
        let axes = Axes { x0, x1, y0, y1 };
        canvas.text(LEFT as i64, 12, title, BLACK);
        let (l, r) = (LEFT as i64, (WIDTH - RIGHT) as i64);
        let (t, b) = (TOP as i64, (HEIGHT - BOTTOM) as i64);
        canvas.line(l as f64, t as f64, l as f64, b as f64, BLACK);
        canvas.line(l as f64, b as f64, r as f64, b as f64, BLACK);
        for i in 0..=4 {
            let v = y0 + (y1 - y0) * i as f64 / 4.0;
            let (_, py) = axes.map(x0, v);
            canvas.line(l as f64 - 3.0, py, r as f64, py, if i == 0 { BLACK } else { GRAY });
            let label = fmt_num(v);
            canvas.text(l - 6 - 6 * label.len() as i64, py as i64 - 3, &label, BLACK);
            let vx = x0 + (x1 - x0) * i as f64 / 4.0;
            let (px, _) = axes.map(vx, y0);
            canvas.line(px, b as f64, px, b as f64 + 3.0, BLACK);
            let label = fmt_num(vx);
            canvas.text(px as i64 - 3 * label.len() as i64, b + 8, &label, BLACK);
        }
        axes
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let w = (WIDTH - LEFT - RIGHT) as f64;
        let h = (HEIGHT - TOP - BOTTOM) as f64;
        let px = LEFT as f64 + (x - self.x0) / (self.x1 - self.x0) * w;
        let py = (HEIGHT - BOTTOM) as f64 - (y - self.y0) / (self.y1 - self.y0) * h;
        (px, py)
    }
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn color_wheel(i: usize, n: usize) -> [u8; 3] {
    let h = i as f64 / n.max(1) as f64 * 6.0;
    let x = (1.0 - (h % 2.0 - 1.0).abs()) * 255.0;
    let x = x as u8;
    match h as usize {
        0 => [255, x, 0],
        1 => [x, 255, 0],
        2 => [0, 255, x],
        3 => [0, x, 255],
        4 => [x, 0, 255],
        _ => [255, 0, x],
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, io::Error::other(e)))?;
    w.write_record(header)
        .map_err(|e| Error::io(path, io::Error::other(e)))?;
    for row in rows {
        w.write_record(row)
            .map_err(|e| Error::io(path, io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One bar: its label and the per-seed values behind it.
#[derive(Clone, Debug)]
pub struct BarRow {
    pub label: String,
    pub values: Vec<f64>,
}

fn render_bars(rows: &[BarRow], title: &str, out_png: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("bar chart needs at least one row"));
    }
    let aggs = rows
        .iter()
        .map(|r| aggregate(&r.values))
        .collect::<Result<Vec<_>>>()?;
    let hi = aggs
        .iter()
        .map(|a| a.mean + a.stderr)
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = aggs.iter().map(|a| a.mean - a.stderr).fold(0.0, f64::min);
    let pad = ((hi - lo).abs()).max(1e-9) * 0.1;
    let mut canvas = Canvas::new();
    let axes = Axes::draw(&mut canvas, title, 0.0, rows.len() as f64, lo, hi + pad);

    for (i, (row, agg)) in rows.iter().zip(&aggs).enumerate() {
        let cx = i as f64 + 0.5;
        let half = 0.3;
        let (px0, py0) = axes.map(cx - half, 0.0);
        let (px1, py1) = axes.map(cx + half, agg.mean);
        canvas.fill_rect(
            px0.round() as i64,
            py0.round() as i64,
            px1.round() as i64,
            py1.round() as i64,
            BAR_FILL,
        );
        let (wx, wy0) = axes.map(cx, agg.mean - agg.stderr);
        let (_, wy1) = axes.map(cx, agg.mean + agg.stderr);
        canvas.line(wx, wy0, wx, wy1, BLACK);
        canvas.line(wx - 4.0, wy0, wx + 4.0, wy0, BLACK);
        canvas.line(wx - 4.0, wy1, wx + 4.0, wy1, BLACK);
        let (lx, _) = axes.map(cx, 0.0);
        canvas.text(
            lx as i64 - 3 * row.label.len() as i64,
            (HEIGHT - BOTTOM + 20) as i64,
            &row.label,
            BLACK,
        );
    }
    canvas.save(out_png)
}

/// Bar chart of per-row means with standard-error whiskers. The CSV lists
/// every underlying value as (label, seed_index, value).
pub fn plot_bars(rows: &[BarRow], title: &str, out_png: &Path, out_csv: &Path) -> Result<()> {
    render_bars(rows, title, out_png)?;
    let mut csv_rows = Vec::new();
    for row in rows {
        for (seed_idx, v) in row.values.iter().enumerate() {
            csv_rows.push(vec![row.label.clone(), seed_idx.to_string(), v.to_string()]);
        }
    }
    write_csv(out_csv, &["label", "seed_index", "value"], &csv_rows)
}

/// World-coordinate polylines with fixed axis ranges.
fn render_lines(
    lines: &[Vec<(f64, f64)>],
    x_range: (f64, f64),
    y_range: (f64, f64),
    title: &str,
    out_png: &Path,
) -> Result<()> {
    let mut canvas = Canvas::new();
    let axes = Axes::draw(
        &mut canvas,
        title,
        x_range.0,
        x_range.1,
        y_range.0,
        y_range.1,
    );
    for (i, line) in lines.iter().enumerate() {
        let color = color_wheel(i, lines.len());
        let mut prev: Option<(f64, f64)> = None;
        for &(wx, wy) in line {
            let (px, py) = axes.map(wx, wy);
            if let Some((qx, qy)) = prev {
                canvas.line(qx, qy, px, py, color);
            }
            prev = Some((px, py));
        }
    }
    canvas.save(out_png)
}

fn fan_ranges(lines: &[Vec<(f64, f64)>], planar: bool) -> ((f64, f64), (f64, f64)) {
    if planar {
        ((-15.0, 15.0), (-15.0, 15.0))
    } else {
        let max_t = lines
            .iter()
            .flat_map(|l| l.iter().map(|&(t, _)| t))
            .fold(1.0_f64, f64::max);
        ((0.0, max_t), (-15.0, 15.0))
    }
}

/// One polyline per skill. Room trajectories plot in the plane; cart
/// trajectories plot track position against the step index.
pub fn plot_skill_fan(
    kind: EnvKind,
    trajectories: &[Trajectory],
    title: &str,
    out_png: &Path,
    out_csv: &Path,
) -> Result<()> {
    if trajectories.is_empty() {
        return Err(Error::invalid("skill fan needs at least one trajectory"));
    }
    let planar = kind == EnvKind::PointRoom;
    let mut lines = Vec::with_capacity(trajectories.len());
    let mut csv_rows = Vec::new();
    for (i, traj) in trajectories.iter().enumerate() {
        let mut line = Vec::with_capacity(traj.states.len());
        for (t, s) in traj.states.iter().enumerate() {
            line.push(if planar { (s[0], s[1]) } else { (t as f64, s[0]) });
            let plane_y = if planar { s[1] } else { 0.0 };
            csv_rows.push(vec![
                i.to_string(),
                t.to_string(),
                s[0].to_string(),
                plane_y.to_string(),
            ]);
        }
        lines.push(line);
    }
    let (xr, yr) = fan_ranges(&lines, planar);
    render_lines(&lines, xr, yr, title, out_png)?;
    write_csv(out_csv, &["skill", "step", "x", "y"], &csv_rows)
}

fn render_series(series: &[Vec<(u32, f64)>], title: &str, out_png: &Path) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.is_empty()) {
        return Err(Error::invalid("score plot needs at least one scored step"));
    }
    let max_t = series
        .iter()
        .flat_map(|s| s.iter().map(|&(t, _)| t))
        .max()
        .unwrap_or(1) as f64;
    let lines: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.iter()
                .map(|&(t, v)| (t as f64, v.clamp(0.0, 1.0)))
                .collect()
        })
        .collect();
    render_lines(&lines, (0.0, max_t.max(1.0)), (0.0, 1.0), title, out_png)
}

/// Score-versus-step line per episode.
pub fn plot_score_series(
    series: &[Vec<(u32, f64)>],
    title: &str,
    out_png: &Path,
    out_csv: &Path,
) -> Result<()> {
    render_series(series, title, out_png)?;
    let mut csv_rows = Vec::new();
    for (i, scores) in series.iter().enumerate() {
        for &(t, s) in scores {
            csv_rows.push(vec![i.to_string(), t.to_string(), s.to_string()]);
        }
    }
    write_csv(out_csv, &["episode", "step", "score"], &csv_rows)
}

/// Re-render a previously emitted CSV into its plot family, recognized by
/// the header row. The image lands in `out_dir` under the CSV's stem, and
/// the CSV is copied alongside byte-for-byte when it is not already there.
pub fn replot_csv(input: &Path, out_dir: &Path) -> Result<PathBuf> {
    let mut reader = csv::Reader::from_path(input)
        .map_err(|e| Error::io(input, io::Error::other(e)))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::io(input, io::Error::other(e)))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::io(input, io::Error::other(e)))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::invalid(format!("{} has no usable stem", input.display())))?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let out_png = out_dir.join(format!("{stem}.png"));

    let parse = |row: &[String], col: usize| -> Result<f64> {
        row.get(col)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| {
                Error::invalid(format!("{}: bad number in column {col}", input.display()))
            })
    };
    match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["label", "seed_index", "value"] => {
            let mut bars: Vec<BarRow> = Vec::new();
            for row in &rows {
                let v = parse(row, 2)?;
                match bars.iter_mut().find(|b| b.label == row[0]) {
                    Some(bar) => bar.values.push(v),
                    None => bars.push(BarRow {
                        label: row[0].clone(),
                        values: vec![v],
                    }),
                }
            }
            render_bars(&bars, stem, &out_png)?;
        }
        ["skill", "step", "x", "y"] => {
            let mut lines: Vec<Vec<(f64, f64)>> = Vec::new();
            let mut keys: Vec<String> = Vec::new();
            let planar = rows.iter().any(|r| r[3] != "0");
            for row in &rows {
                let point = if planar {
                    (parse(row, 2)?, parse(row, 3)?)
                } else {
                    (parse(row, 1)?, parse(row, 2)?)
                };
                match keys.iter().position(|k| *k == row[0]) {
                    Some(i) => lines[i].push(point),
                    None => {
                        keys.push(row[0].clone());
                        lines.push(vec![point]);
                    }
                }
            }
            let (xr, yr) = fan_ranges(&lines, planar);
            render_lines(&lines, xr, yr, stem, &out_png)?;
        }
        ["episode", "step", "score"] => {
            let mut series: Vec<Vec<(u32, f64)>> = Vec::new();
            let mut keys: Vec<String> = Vec::new();
            for row in &rows {
                let point = (parse(row, 1)? as u32, parse(row, 2)?);
                match keys.iter().position(|k| *k == row[0]) {
                    Some(i) => series[i].push(point),
                    None => {
                        keys.push(row[0].clone());
                        series.push(vec![point]);
                    }
                }
            }
            render_series(&series, stem, &out_png)?;
        }
        _ => {
            return Err(Error::invalid(format!(
                "{}: unrecognized plot CSV header `{}`",
                input.display(),
                header.join(",")
            )))
        }
    }

    let out_csv = out_dir.join(format!("{stem}.csv"));
    let already_there = out_csv.exists()
        && match (input.canonicalize(), out_csv.canonicalize()) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        };
    if !already_there {
        std::fs::copy(input, &out_csv).map_err(|e| Error::io(&out_csv, e))?;
    }
    Ok(out_png)
}

/// Render every plot family for a set of same-config evaluation runs:
/// per-metric bars over seeds, the first run's skill fan, and its score
/// traces. Returns the created files; every image has a CSV sibling.
pub fn emit_plots(kind: EnvKind, runs: &[RunEval], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if runs.is_empty() {
        return Err(Error::invalid("plot emission needs at least one run"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    let mut pair = |stem: &str| -> (PathBuf, PathBuf) {
        let png = out_dir.join(format!("{stem}.png"));
        let csv = out_dir.join(format!("{stem}.csv"));
        files.push(png.clone());
        files.push(csv.clone());
        (png, csv)
    };

    let metric = |name: &str, f: &dyn Fn(&RunEval) -> f64| -> BarRow {
        BarRow {
            label: name.to_string(),
            values: runs.iter().map(|r| f(r)).collect(),
        }
    };
    let bars = [
        ("flip_pct", metric("flip_pct", &|r| r.report.flip_pct)),
        ("coverage", metric("coverage", &|r| r.report.coverage as f64)),
        (
            "safe_coverage",
            metric("safe_coverage", &|r| r.report.safe_coverage as f64),
        ),
    ];
    for (stem, row) in bars {
        let (png, csv) = pair(stem);
        plot_bars(&[row], stem, &png, &csv)?;
    }

    let (png, csv) = pair("skill_fan");
    plot_skill_fan(kind, &runs[0].trajectories, "skill_fan", &png, &csv)?;

    let series: Vec<Vec<(u32, f64)>> = runs[0]
        .trajectories
        .iter()
        .map(|t| {
            t.scores
                .iter()
                .enumerate()
                .map(|(i, &s)| (i as u32 + 1, s))
                .collect()
        })
        .collect();
    let (png, csv) = pair("score_vs_step");
    plot_score_series(&series, "score_vs_step", &png, &csv)?;

    Ok(files)
}
