use std::collections::BTreeMap;
use std::path::Path;

use hierfactor::dgp::DgpTruth;
use hierfactor::panel::{PanelDataset, PanelLabels};
use nalgebra::{DMatrix, DVector};

use crate::exit::{CliError, Result};
use crate::report::number;

/// Writes a dataset as long-format CSV: one row per (industry, country,
/// period) with columns `industry,country,period,y,x1..xd`. Numbers use
/// shortest round-trip encoding, so export followed by load is exact.
pub fn write_dataset(data: &PanelDataset, path: &Path) -> Result<()> {
    let labels = synthesized_labels(data);
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::io(&format!("creating {}", path.display()), e))?;
    let mut header = vec!["industry".to_string(), "country".to_string(), "period".to_string(), "y".to_string()];
    header.extend(labels.variables.iter().cloned());
    write_row(&mut writer, path, &header)?;
    for i in 0..data.industries() {
        for j in 0..data.countries(i) {
            let y = data.outcome(i, j);
            let x = data.regressor_matrix(i, j);
            for t in 0..data.periods() {
                let mut row = vec![
                    labels.industries[i].clone(),
                    labels.countries[i][j].clone(),
                    labels.periods[t].to_string(),
                    number(y[t]),
                ];
                row.extend((0..x.ncols()).map(|k| number(x[(t, k)])));
                write_row(&mut writer, path, &row)?;
            }
        }
    }
    writer.flush().map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

fn write_row(writer: &mut csv::Writer<std::fs::File>, path: &Path, row: &[String]) -> Result<()> {
    writer.write_record(row).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

fn synthesized_labels(data: &PanelDataset) -> PanelLabels {
    if let Some(labels) = data.labels() {
        return labels.clone();
    }
    PanelLabels {
        industries: (0..data.industries()).map(|i| format!("industry{i:02}")).collect(),
        countries: (0..data.industries())
            .map(|i| (0..data.countries(i)).map(|j| format!("country{j:02}")).collect())
            .collect(),
        variables: (1..=data.regressor_count()).map(|k| format!("x{k}")).collect(),
        periods: (1..=data.periods() as i64).collect(),
    }
}

/// Loads a long-format CSV into a validated panel.
///
/// The first four columns must be `industry,country,period,y`; every
/// further column is a regressor. Industries and countries are ordered
/// lexicographically, periods ascending, and every (industry, country)
/// pair must cover exactly the same period set.
pub fn load_dataset(path: &Path) -> Result<PanelDataset> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
    let header = reader
        .headers()
        .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?
        .clone();
    let fixed = ["industry", "country", "period", "y"];
    if header.len() < 5 || header.iter().take(4).ne(fixed) {
        return Err(CliError::Validation(format!(
            "header must start with industry,country,period,y and carry at least one \
             regressor column, got [{}]",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let variables: Vec<String> = header.iter().skip(4).map(|s| s.to_string()).collect();

    // BTreeMaps keep industries, countries, and periods sorted while rows
    // stream in arbitrary order.
    type UnitCells = BTreeMap<i64, (f64, Vec<f64>)>;
    let mut units: BTreeMap<String, BTreeMap<String, UnitCells>> = BTreeMap::new();
    for (index, record) in reader.records().enumerate() {
        let line = index + 2;
        let record =
            record.map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
        if record.len() != header.len() {
            return Err(CliError::Validation(format!(
                "line {line}: {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        let industry = record[0].to_string();
        let country = record[1].to_string();
        let period: i64 = parse_cell(&record[2], line, "period")?;
        let y: f64 = parse_cell(&record[3], line, "y")?;
        let mut x = Vec::with_capacity(variables.len());
        for (k, name) in variables.iter().enumerate() {
            x.push(parse_cell::<f64>(&record[4 + k], line, name)?);
        }
        let cells = units.entry(industry.clone()).or_default().entry(country.clone()).or_default();
        if cells.insert(period, (y, x)).is_some() {
            return Err(CliError::Validation(format!(
                "duplicate key ({industry}, {country}, {period}) at line {line}"
            )));
        }
    }
    if units.is_empty() {
        return Err(CliError::Validation("no data rows".into()));
    }

    // The panel's period axis is the union of observed periods; any unit
    // missing one of them is reported by coordinate.
    let mut periods: Vec<i64> = Vec::new();
    for countries in units.values() {
        for cells in countries.values() {
            for period in cells.keys() {
                if !periods.contains(period) {
                    periods.push(*period);
                }
            }
        }
    }
    periods.sort_unstable();
    let mut missing = Vec::new();
    for (industry, countries) in &units {
        for (country, cells) in countries {
            for period in &periods {
                if !cells.contains_key(period) {
                    missing.push(format!("({industry}, {country}, {period})"));
                }
            }
        }
    }
    if !missing.is_empty() {
        let shown = missing.iter().take(8).cloned().collect::<Vec<_>>().join(", ");
        let suffix =
            if missing.len() > 8 { format!(" and {} more", missing.len() - 8) } else { String::new() };
        return Err(CliError::Validation(format!("missing cells: {shown}{suffix}")));
    }

    let mut outcomes = Vec::with_capacity(units.len());
    let mut regressors = Vec::with_capacity(units.len());
    let mut industry_names = Vec::with_capacity(units.len());
    let mut country_names = Vec::with_capacity(units.len());
    for (industry, countries) in &units {
        industry_names.push(industry.clone());
        let mut ys = Vec::with_capacity(countries.len());
        let mut xs = Vec::with_capacity(countries.len());
        let mut names = Vec::with_capacity(countries.len());
        for (country, cells) in countries {
            names.push(country.clone());
            let mut y = DVector::zeros(periods.len());
            let mut x = DMatrix::zeros(periods.len(), variables.len());
            for (t, period) in periods.iter().enumerate() {
                let (yv, xv) = &cells[period];
                y[t] = *yv;
                for (k, value) in xv.iter().enumerate() {
                    x[(t, k)] = *value;
                }
            }
            ys.push(y);
            xs.push(x);
        }
        outcomes.push(ys);
        regressors.push(xs);
        country_names.push(names);
    }
    let labels = PanelLabels {
        industries: industry_names,
        countries: country_names,
        variables,
        periods,
    };
    Ok(PanelDataset::new(outcomes, regressors, Some(labels))?)
}

fn parse_cell<T: std::str::FromStr>(text: &str, line: usize, column: &str) -> Result<T> {
    text.trim().parse().map_err(|_| {
        CliError::Validation(format!("line {line}: column {column} has unparseable value {text:?}"))
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

/// Writes the simulation ground truth next to an exported dataset so fits
/// can be scored against it later.
pub fn write_truth(truth: &DgpTruth, path: &Path) -> Result<()> {
    let doc = serde_json::json!({
        "beta": truth.beta.iter().copied().collect::<Vec<f64>>(),
        "global_count": truth.global_count,
        "specific_counts": truth.specific_counts,
        "global_factors": matrix_rows(&truth.global_factors),
        "specific_factors": truth.specific_factors.iter().map(matrix_rows).collect::<Vec<_>>(),
        "loadings_global": truth.loadings_global.iter().map(matrix_rows).collect::<Vec<_>>(),
        "loadings_specific": truth.loadings_specific.iter().map(matrix_rows).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("truth serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}
