//! Charts for allocation plans and single response curves.

use crate::allocator::{AllocationPlan, ResponseCurve};
use crate::reporting::svg::{self, Canvas, Series};

/// Historical against recommended mean spend, and the matching responses.
pub fn allocation_svg(plan: &AllocationPlan) -> String {
    let spend_rows: Vec<(String, f64, f64, String)> = plan
        .channels
        .iter()
        .map(|c| {
            let change = if c.historical_spend > 0.0 { c.spend / c.historical_spend - 1.0 } else { 0.0 };
            (c.channel.clone(), c.historical_spend, c.spend, format!("{:+.1}%", 100.0 * change))
        })
        .collect();
    let response_rows: Vec<(String, f64, f64, String)> = plan
        .channels
        .iter()
        .map(|c| (c.channel.clone(), c.historical_response, c.response, svg::label(c.response)))
        .collect();
    let spend = svg::paired_bars("Mean spend per period", &spend_rows, ("historical", "recommended"));
    let response = svg::paired_bars("Mean response per period", &response_rows, ("historical", "recommended"));
    let header = vec![
        format!("Allocation for model {} ({:?})", plan.model_id, plan.scenario),
        format!(
            "spend {} -> {}; response {} -> {}; efficiency {} -> {}",
            svg::label(plan.historical_total_spend),
            svg::label(plan.total_spend),
            svg::label(plan.historical_total_response),
            svg::label(plan.total_response),
            svg::label(plan.historical_efficiency),
            svg::label(plan.efficiency),
        ),
    ];
    svg::page(&header, &[&spend, &response], 2)
}

/// One channel's curve from zero to `max_spend`, with `spend` marked.
pub fn response_svg(curve: &ResponseCurve, spend: f64, max_spend: f64, points: usize) -> String {
    let points = points.max(2);
    let series = Series {
        name: &curve.channel,
        points: (0..points)
            .map(|i| {
                let m = max_spend * i as f64 / (points - 1) as f64;
                (m, curve.response(m))
            })
            .collect(),
    };
    let title = format!("Response curve: {}", curve.channel);
    let canvas: Canvas = svg::lines(&title, &[series], &[(spend, curve.response(spend), 1)], &svg::label, false);
    canvas.document()
}
