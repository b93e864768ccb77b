use std::collections::BTreeMap;

use crate::exit::{CliError, Result};

/// Output format for report documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    #[value(name = "markdown-table")]
    MarkdownTable,
    #[value(name = "json-report")]
    JsonReport,
}

/// One rendered table: preformatted cells so every format emits identical
/// numbers.
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// A report document. Carries everything needed to reproduce the run
/// (tool version, seed, the resolved settings) and no wall-clock state,
/// so identical runs emit identical bytes.
pub struct Report {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub settings: Vec<(String, String)>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn new(command: &str, seed: u64, settings: Vec<(String, String)>) -> Self {
        Report {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            settings,
            tables: Vec::new(),
        }
    }

    pub fn push_table(&mut self, title: &str, columns: &[&str], rows: Vec<Vec<String>>) {
        self.tables.push(Table {
            title: title.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
        });
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.render_csv(),
            Format::MarkdownTable => self.render_markdown(),
            Format::JsonReport => self.render_json(),
        }
    }

    /// Comment preamble with the run identity, then one header+body block
    /// per table separated by a `# table=` marker line.
    fn render_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# command={}\n", self.command));
        out.push_str(&format!("# version={}\n", self.version));
        out.push_str(&format!("# seed={}\n", self.seed));
        for (key, value) in &self.settings {
            out.push_str(&format!("# {key}={value}\n"));
        }
        for table in &self.tables {
            out.push_str(&format!("# table={}\n", table.title));
            out.push_str(&table.columns.join(","));
            out.push('\n');
            for row in &table.rows {
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        out
    }

    fn render_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {} report\n\n", self.command));
        out.push_str(&format!("- version: {}\n", self.version));
        out.push_str(&format!("- seed: {}\n", self.seed));
        for (key, value) in &self.settings {
            out.push_str(&format!("- {key}: {value}\n"));
        }
        for table in &self.tables {
            out.push_str(&format!("\n## {}\n\n", table.title));
            out.push_str(&format!("| {} |\n", table.columns.join(" | ")));
            out.push_str(&format!(
                "|{}\n",
                table.columns.iter().map(|_| " --- |").collect::<String>()
            ));
            for row in &table.rows {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
        }
        out
    }

    fn render_json(&self) -> String {
        let settings: BTreeMap<&str, &str> =
            self.settings.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let tables: Vec<serde_json::Value> = self
            .tables
            .iter()
            .map(|t| {
                serde_json::json!({
                    "title": t.title,
                    "columns": t.columns,
                    "rows": t.rows,
                })
            })
            .collect();
        let doc = serde_json::json!({
            "command": self.command,
            "version": self.version,
            "seed": self.seed,
            "settings": settings,
            "tables": tables,
        });
        let mut rendered = serde_json::to_string_pretty(&doc).expect("report serializes");
        rendered.push('\n');
        rendered
    }

    /// Writes to the path, or to stdout when no path is given.
    pub fn emit(&self, format: Format, out: Option<&std::path::Path>) -> Result<()> {
        let rendered = self.render(format);
        match out {
            Some(path) => std::fs::write(path, rendered)
                .map_err(|e| CliError::io(&format!("writing {}", path.display()), e)),
            None => {
                print!("{rendered}");
                Ok(())
            }
        }
    }
}

/// Shortest decimal text that parses back to exactly the same double.
pub fn number(value: f64) -> String {
    format!("{value}")
}
