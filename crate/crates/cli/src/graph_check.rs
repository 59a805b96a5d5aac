use crate::config::Settings;
use crate::error::Result;
use crate::output::Report;

/// Validates a graph specification and reports its shape. Writes nothing.
pub fn run(mut s: Settings) -> Result<Report> {
    let graph = s.resolve_graph()?;
    let degrees = graph.degrees();
    let (_, components) = graph.components();
    let notes = vec![
        format!("regions={}", graph.n_regions()),
        format!("edges={}", graph.n_edges()),
        format!("components={components}"),
        format!(
            "degree_min={} degree_max={}",
            degrees.iter().min().copied().unwrap_or(0),
            degrees.iter().max().copied().unwrap_or(0)
        ),
    ];
    Ok(Report {
        out: None,
        artifacts: Vec::new(),
        notes,
    })
}
