//! Whitespace-separated data files for gnuplot.
//!
//! Each file starts with `#` comment lines naming the series, its columns and
//! the producing run. Blocks inside a file are separated by two blank lines,
//! so `plot 'f.dat' index i` selects block `i`.

use std::fmt::Write;

use super::Pipeline;

/// One figure-worthy data set.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    /// File stem, written as `plot/<name>.dat`.
    pub name: String,
    pub title: String,
    pub columns: Vec<String>,
    /// Labelled blocks of rows; each row has one value per column.
    pub blocks: Vec<(String, Vec<Vec<f64>>)>,
}

impl PlotSeries {
    pub fn new(name: &str, title: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            blocks: Vec::new(),
        }
    }

    pub fn block(mut self, label: impl Into<String>, rows: Vec<Vec<f64>>) -> Self {
        self.blocks.push((label.into(), rows));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFile {
    /// Path relative to the output directory.
    pub name: String,
    pub contents: String,
}

/// Renders each series as a gnuplot data file. Non-finite values are written
/// as `NaN`, which gnuplot skips.
pub fn emit_plot_data(series: &[PlotSeries], pipeline: Pipeline, seed: u64) -> Vec<PlotFile> {
    series
        .iter()
        .map(|s| {
            let mut text = String::new();
            let _ = writeln!(text, "# {}", s.title);
            let _ = writeln!(text, "# columns: {}", s.columns.join(" "));
            let _ = writeln!(
                text,
                "# source: microlocal {} pipeline={pipeline} seed={seed}",
                env!("CARGO_PKG_VERSION")
            );
            for (i, (label, rows)) in s.blocks.iter().enumerate() {
                if i > 0 {
                    text.push_str("\n\n");
                }
                let _ = writeln!(text, "# block {i}: {label}");
                for row in rows {
                    let cells: Vec<String> = row
                        .iter()
                        .map(|v| if v.is_finite() { format!("{v:.17e}") } else { "NaN".into() })
                        .collect();
                    let _ = writeln!(text, "{}", cells.join(" "));
                }
            }
            PlotFile {
                name: format!("plot/{}.dat", s.name),
                contents: text,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_are_indexed() {
        let s = PlotSeries::new("demo", "demo series", &["x", "y"])
            .block("a", vec![vec![1.0, 2.0]])
            .block("b", vec![vec![3.0, f64::NAN]]);
        let f = emit_plot_data(&[s], Pipeline::Eig, 4);
        assert_eq!(f[0].name, "plot/demo.dat");
        let text = &f[0].contents;
        assert!(text.contains("seed=4"));
        assert!(text.contains("\n\n\n# block 1: b\n3.00000000000000000e0 NaN\n"));
    }
}
