//! Static SVG rendering of a mission log.

use plotters::prelude::*;

use twin_core::model::ControlInput;
use twin_core::sim::{MissionLog, MissionRecord};

type PlotResult<T> = Result<T, Box<dyn std::error::Error>>;

/// Health estimates against ground truth (top) and issued load factor (bottom).
pub fn mission_svg(log: &MissionLog) -> PlotResult<String> {
    let mut svg = String::new();
    if log.records.is_empty() {
        return Ok(svg);
    }
    let t0 = log.records[0].t as f64;
    let t1 = log.records.last().unwrap().t as f64 + 1.0;
    {
        let root = SVGBackend::with_string(&mut svg, (900, 640)).into_drawing_area();
        root.fill(&WHITE)?;
        let (top, bottom) = root.split_vertically(440);

        let mut health = ChartBuilder::on(&top)
            .caption("Health: MAP estimate vs ground truth", ("sans-serif", 18))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(45)
            .build_cartesian_2d(t0..t1, -5.0..85.0)?;
        health.configure_mesh().x_desc("t").y_desc("% stiffness loss").draw()?;
        type Field = fn(&MissionRecord) -> f64;
        let series = |f: Field| -> Vec<(f64, f64)> { log.records.iter().map(|r| (r.t as f64, f(r))).collect() };
        let lines: [(&str, RGBColor, Field); 4] = [
            ("truth z1", BLACK, |r| r.truth.z1 as f64),
            ("truth z2", RGBColor(128, 128, 128), |r| r.truth.z2 as f64),
            ("mean z1", BLUE, |r| r.marginal.mean_z1),
            ("mean z2", RED, |r| r.marginal.mean_z2),
        ];
        for (label, color, f) in lines {
            health
                .draw_series(LineSeries::new(series(f), color.stroke_width(2)))?
                .label(label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
        }
        health.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.8)).draw()?;

        let mut control = ChartBuilder::on(&bottom)
            .caption("Issued load factor", ("sans-serif", 18))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(45)
            .build_cartesian_2d(t0..t1, 1.5..3.5)?;
        control.configure_mesh().x_desc("t").y_desc("g").draw()?;
        let steps: Vec<(f64, f64)> = log
            .records
            .iter()
            .flat_map(|r| {
                let g = match r.control {
                    ControlInput::TwoG => 2.0,
                    ControlInput::ThreeG => 3.0,
                };
                [(r.t as f64, g), (r.t as f64 + 1.0, g)]
            })
            .collect();
        control.draw_series(LineSeries::new(steps, BLUE.stroke_width(2)))?;
        root.present()?;
    }
    Ok(svg)
}
