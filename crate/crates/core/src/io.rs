//! CSV ingestion and emission, key=value files, and synthetic data generators.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::smoothing::{Covariate, Factor};

/// A named covariate column.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: Covariate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub response: String,
    pub y: Vec<f64>,
    pub columns: Vec<Column>,
    /// Rows skipped at ingestion for missing or unparseable entries.
    pub dropped: usize,
    /// 1-based file line numbers of the skipped rows.
    pub dropped_lines: Vec<u64>,
}

impl Dataset {
    pub fn new(response: impl Into<String>, y: Vec<f64>, columns: Vec<Column>) -> Result<Self> {
        let ds = Self { response: response.into(), y, columns, dropped: 0, dropped_lines: Vec::new() };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.y.len() < 3 {
            return Err(invalid(format!("need at least 3 complete rows, found {}", self.y.len())));
        }
        for c in &self.columns {
            if c.data.len() != self.y.len() {
                return Err(invalid(format!("column {} has {} rows, expected {}", c.name, c.data.len(), self.y.len())));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&Covariate> {
        Ok(&self.columns[self.column_index(name)?].data)
    }

    pub fn covariates(&self) -> Vec<Covariate> {
        self.columns.iter().map(|c| c.data.clone()).collect()
    }

    /// Keeps the rows where `keep` is true.
    pub fn filter(&self, keep: &[bool]) -> Result<Dataset> {
        let pick = |v: &[f64]| v.iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect::<Vec<_>>();
        let columns = self
            .columns
            .iter()
            .map(|c| {
                let data = match &c.data {
                    Covariate::Numeric(v) => Covariate::Numeric(pick(v)),
                    Covariate::Factor(f) => {
                        let labels: Vec<&str> =
                            (0..f.len()).filter(|&i| keep[i]).map(|i| f.label(i)).collect();
                        Covariate::Factor(Factor::from_labels(&labels))
                    }
                };
                Column { name: c.name.clone(), data }
            })
            .collect();
        Dataset::new(self.response.clone(), pick(&self.y), columns)
    }
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("null")
}

fn parse_real(s: &str) -> Option<f64> {
    if is_missing(s) {
        return None;
    }
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        kind => Error::Parse { line, message: format!("{kind:?}") },
    }
}

/// Reads a headed CSV file. Columns listed in `factor_columns` are read as
/// labels, every other column as reals. Rows with a missing or non-numeric
/// entry are dropped and counted.
pub fn load_csv(path: impl AsRef<Path>, response: &str, factor_columns: &[&str]) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(file, response, factor_columns)
}

pub fn read_csv<R: std::io::Read>(reader: R, response: &str, factor_columns: &[&str]) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let yi = header.iter().position(|h| h == response).ok_or_else(|| Error::MissingColumn(response.to_string()))?;
    for f in factor_columns {
        if !header.iter().any(|h| h == f) {
            return Err(Error::MissingColumn(f.to_string()));
        }
    }
    let is_factor: Vec<bool> = header.iter().map(|h| factor_columns.contains(&h.as_str())).collect();
    let mut y = Vec::new();
    let mut nums: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    let mut labels: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    let mut dropped_lines = Vec::new();

    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let yv = parse_real(&rec[yi]);
        let mut row_nums = vec![0.0; header.len()];
        let mut ok = yv.is_some();
        for (j, field) in rec.iter().enumerate() {
            if j == yi || !ok {
                continue;
            }
            if is_factor[j] {
                ok = !is_missing(field);
            } else {
                match parse_real(field) {
                    Some(v) => row_nums[j] = v,
                    None => ok = false,
                }
            }
        }
        if !ok {
            dropped_lines.push(line);
            continue;
        }
        y.push(yv.unwrap_or_default());
        for (j, field) in rec.iter().enumerate() {
            if j == yi {
                continue;
            }
            if is_factor[j] {
                labels[j].push(field.to_string());
            } else {
                nums[j].push(row_nums[j]);
            }
        }
    }
    if !dropped_lines.is_empty() {
        log::warn!("dropped {} rows with missing or non-numeric entries", dropped_lines.len());
    }
    let columns = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != yi)
        .map(|(j, name)| Column {
            name: name.clone(),
            data: if is_factor[j] {
                Covariate::Factor(Factor::from_labels(&labels[j]))
            } else {
                Covariate::Numeric(std::mem::take(&mut nums[j]))
            },
        })
        .collect();
    let mut ds = Dataset::new(response, y, columns)?;
    ds.dropped = dropped_lines.len();
    ds.dropped_lines = dropped_lines;
    Ok(ds)
}

/// 17 significant digits, enough to reproduce every `f64` exactly.
pub fn format_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// A column of an output table.
#[derive(Debug, Clone, PartialEq)]
pub enum TableColumn {
    Real(Vec<f64>),
    Int(Vec<i64>),
    Text(Vec<String>),
}

impl TableColumn {
    fn len(&self) -> usize {
        match self {
            TableColumn::Real(v) => v.len(),
            TableColumn::Int(v) => v.len(),
            TableColumn::Text(v) => v.len(),
        }
    }

    fn cell(&self, i: usize) -> String {
        match self {
            TableColumn::Real(v) => format_real(v[i]),
            TableColumn::Int(v) => v[i].to_string(),
            TableColumn::Text(v) => v[i].clone(),
        }
    }
}

impl From<&Covariate> for TableColumn {
    fn from(c: &Covariate) -> Self {
        match c {
            Covariate::Numeric(v) => TableColumn::Real(v.clone()),
            Covariate::Factor(f) => TableColumn::Text((0..f.len()).map(|i| f.label(i).to_string()).collect()),
        }
    }
}

/// Writes a headed CSV table of equal-length columns.
pub fn write_table(path: impl AsRef<Path>, columns: &[(String, TableColumn)]) -> Result<()> {
    let rows = columns.first().map(|(_, c)| c.len()).unwrap_or(0);
    if let Some((name, _)) = columns.iter().find(|(_, c)| c.len() != rows) {
        return Err(invalid(format!("table column {name} has the wrong length")));
    }
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_error)?;
    w.write_record(columns.iter().map(|(n, _)| n.as_str())).map_err(csv_error)?;
    for i in 0..rows {
        w.write_record(columns.iter().map(|(_, c)| c.cell(i))).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the dataset with the response first, reals at 17 significant digits.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut cols = vec![(ds.response.clone(), TableColumn::Real(ds.y.clone()))];
    cols.extend(ds.columns.iter().map(|c| (c.name.clone(), TableColumn::from(&c.data))));
    write_table(path, &cols)
}

/// Flat `key=value` text, one pair per line in the given order.
pub fn write_key_values(path: impl AsRef<Path>, pairs: &[(String, String)]) -> Result<()> {
    let mut s = String::new();
    for (k, v) in pairs {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    fs::write(path.as_ref(), s)?;
    Ok(())
}

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
/// Repeated keys are joined with `;` so list-valued settings can span lines.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: no as u64 + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        out.entry(k).and_modify(|old| {
            old.push(';');
            old.push_str(&v);
        }).or_insert(v);
    }
    Ok(out)
}

pub fn read_key_values(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_key_values(&text)
}

// ---------------------------------------------------------------------------
// generators

/// GPD quantile function at probability `u`.
pub fn gpd_inverse_cdf(u: f64, sigma: f64, kappa: f64) -> f64 {
    if kappa == 0.0 {
        -sigma * (-u).ln_1p()
    } else {
        sigma * ((-u).ln_1p() * -kappa).exp_m1() / kappa
    }
}

/// `n` GPD draws with observation-specific parameters. The dataset carries
/// the observation index as column `index`.
pub fn simulate_gpd<S, K>(n: usize, sigma_fn: S, kappa_fn: K, seed: u64) -> Result<Dataset>
where
    S: Fn(usize) -> f64,
    K: Fn(usize) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (s, k) = (sigma_fn(i), kappa_fn(i));
        if !(s > 0.0) {
            return Err(invalid(format!("sigma must be positive, got {s} at {i}")));
        }
        let u: f64 = rng.random();
        y.push(gpd_inverse_cdf(u, s, k));
    }
    let index = Column { name: "index".into(), data: Covariate::Numeric((0..n).map(|i| i as f64).collect()) };
    Ok(Dataset { response: "y".into(), y, columns: vec![index], dropped: 0, dropped_lines: Vec::new() })
}

pub const DAY_LABELS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// Mean sales per day (rows, Monday first) and opening hour (columns). The
/// Sunday row has its own late-starting shape.
pub const SALES_PATTERN: [[f64; 12]; 7] = [
    [90.0, 120.0, 170.0, 250.0, 210.0, 150.0, 140.0, 160.0, 200.0, 240.0, 180.0, 110.0],
    [95.0, 125.0, 175.0, 250.0, 215.0, 155.0, 140.0, 165.0, 205.0, 245.0, 185.0, 115.0],
    [90.0, 120.0, 180.0, 260.0, 220.0, 150.0, 145.0, 160.0, 210.0, 250.0, 190.0, 110.0],
    [100.0, 130.0, 185.0, 265.0, 220.0, 160.0, 150.0, 170.0, 215.0, 260.0, 195.0, 120.0],
    [110.0, 140.0, 200.0, 280.0, 240.0, 180.0, 170.0, 200.0, 250.0, 300.0, 230.0, 150.0],
    [130.0, 190.0, 250.0, 300.0, 320.0, 310.0, 290.0, 280.0, 260.0, 230.0, 180.0, 130.0],
    [50.0, 60.0, 80.0, 120.0, 180.0, 220.0, 230.0, 210.0, 170.0, 120.0, 80.0, 60.0],
];

/// Cell mean for `hour` of `hours_per_day`, interpolating the pattern table
/// linearly across the opening day.
pub fn sales_cell_mean(day: usize, hour: usize, hours_per_day: usize) -> f64 {
    let row = &SALES_PATTERN[day % 7];
    let last = (row.len() - 1) as f64;
    let pos = if hours_per_day > 1 { hour as f64 * last / (hours_per_day - 1) as f64 } else { 0.0 };
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(row.len() - 1);
    let frac = pos - lo as f64;
    row[lo] * (1.0 - frac) + row[hi] * frac
}

/// Shape of the gamma mixing distribution in the sales generator; the count
/// variance is `mu + mu^2 / SALES_DISPERSION`.
pub const SALES_DISPERSION: f64 = 50.0;

/// Hourly sales counts over `days` consecutive days starting on a Monday.
/// Columns: `day` and `hour` factors plus the numeric `week`.
pub fn simulate_sales(days: usize, hours_per_day: usize, seed: u64) -> Result<Dataset> {
    if days < 7 || hours_per_day < 2 {
        return Err(invalid("simulate_sales needs days >= 7 and hours_per_day >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = days * hours_per_day;
    let (mut y, mut day, mut hour, mut week) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for d in 0..days {
        for h in 0..hours_per_day {
            let mu = sales_cell_mean(d, h, hours_per_day);
            let gamma = Gamma::new(SALES_DISPERSION, mu / SALES_DISPERSION).map_err(|e| invalid(e.to_string()))?;
            let rate: f64 = gamma.sample(&mut rng);
            let count = if rate > 0.0 {
                Poisson::new(rate).map_err(|e| invalid(e.to_string()))?.sample(&mut rng)
            } else {
                0.0
            };
            y.push(count);
            day.push(DAY_LABELS[d % 7]);
            hour.push(format!("h{h:02}"));
            week.push((d / 7) as f64);
        }
    }
    Dataset::new(
        "sales",
        y,
        vec![
            Column { name: "day".into(), data: Covariate::Factor(Factor::from_labels(&day)) },
            Column { name: "hour".into(), data: Covariate::Factor(Factor::from_labels(&hour)) },
            Column { name: "week".into(), data: Covariate::Numeric(week) },
        ],
    )
}

/// Scale of the noise in [`simulate_heteroscedastic`] at covariate `w`.
pub fn hetero_scale(w: f64) -> f64 {
    0.5 + 0.4 * w
}

/// `y = sin(w) + (0.5 + 0.4 w) e` with `w ~ U(0, 3)` and standard normal `e`.
pub fn simulate_heteroscedastic(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x = 3.0 * rng.random::<f64>();
        let e: f64 = rng.sample(StandardNormal);
        w.push(x);
        y.push(x.sin() + hetero_scale(x) * e);
    }
    Dataset::new("y", y, vec![Column { name: "w".into(), data: Covariate::Numeric(w) }])
}

/// Site-level GPD scale multipliers used by [`simulate_site_trend`].
pub const SITE_SCALES: [f64; 3] = [1.0, 1.5, 2.2];

/// Scale at a site and year for [`simulate_site_trend`].
pub fn site_trend_sigma(site: usize, year: f64, first_year: f64, years: usize) -> f64 {
    let span = (years.max(2) - 1) as f64;
    SITE_SCALES[site % SITE_SCALES.len()] * (1.0 + 0.3 * (3.0 * (year - first_year) / span).sin())
}

/// Exceedances at three sites over `years` consecutive years, `per_cell`
/// observations per site and year, with shape `kappa` and a smooth trend in
/// the scale. Columns: `site` factor and numeric `year`.
pub fn simulate_site_trend(years: usize, per_cell: usize, kappa: f64, seed: u64) -> Result<Dataset> {
    let sites = SITE_SCALES.len();
    let first = 1950.0;
    let n = years * sites * per_cell;
    let cell = |i: usize| (i % sites, (i / sites) % years);
    let sim = simulate_gpd(
        n,
        |i| {
            let (s, t) = cell(i);
            site_trend_sigma(s, first + t as f64, first, years)
        },
        |_| kappa,
        seed,
    )?;
    let labels: Vec<String> = (0..n).map(|i| format!("S{}", cell(i).0 + 1)).collect();
    let year: Vec<f64> = (0..n).map(|i| first + cell(i).1 as f64).collect();
    Dataset::new(
        "y",
        sim.y,
        vec![
            Column { name: "site".into(), data: Covariate::Factor(Factor::from_labels(&labels)) },
            Column { name: "year".into(), data: Covariate::Numeric(year) },
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mean;

    fn load(text: &str, factors: &[&str]) -> Result<Dataset> {
        read_csv(text.as_bytes(), "y", factors)
    }

    #[test]
    fn parses_a_small_file() {
        let ds = load("y,w\n1,0.1\n2,0.2\n3,0.3\n", &[]).unwrap();
        assert_eq!(ds.y, vec![1.0, 2.0, 3.0]);
        assert_eq!(ds.column("w").unwrap(), &Covariate::Numeric(vec![0.1, 0.2, 0.3]));
        assert_eq!(ds.dropped, 0);
    }

    #[test]
    fn drops_rows_with_bad_entries() {
        let ds = load("y,w\n1,0.1\nabc,0.2\n3,0.3\n4,NA\n5,0.5\n", &[]).unwrap();
        assert_eq!(ds.y, vec![1.0, 3.0, 5.0]);
        assert_eq!(ds.dropped, 2);
        assert_eq!(ds.dropped_lines, vec![3, 5]);
    }

    #[test]
    fn factor_levels_in_first_appearance_order() {
        let mut text = String::from("y,day\n");
        for d in ["Wed", "Mon", "Tue", "Thu", "Fri", "Sat", "Sun", "Mon"] {
            text.push_str(&format!("1,{d}\n"));
        }
        let ds = load(&text, &["day"]).unwrap();
        match ds.column("day").unwrap() {
            Covariate::Factor(f) => assert_eq!(f.levels, ["Wed", "Mon", "Tue", "Thu", "Fri", "Sat", "Sun"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(load("w\n1\n2\n3\n", &[]), Err(Error::MissingColumn(c)) if c == "y"));
        assert!(matches!(load("y,w\n1,2\n3\n4,5\n", &[]), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(load("y,w\n1,2\n", &[]), Err(Error::InvalidInput(_))));
        assert!(matches!(load("y,w\n1,2\n", &["day"]), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn key_values() {
        let kv = parse_key_values("# c\nalpha = 0.9\n\nsmoother=w=ll:df=4\nsmoother=day=cell # x\n").unwrap();
        assert_eq!(kv["alpha"], "0.9");
        assert_eq!(kv["smoother"], "w=ll:df=4;day=cell");
        assert!(matches!(parse_key_values("oops\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn inverse_cdf_examples() {
        assert!((gpd_inverse_cdf(0.5, 1.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        let direct = 2.0 * ((1.0 - 0.7f64).powf(-0.2) - 1.0) / 0.2;
        assert!((gpd_inverse_cdf(0.7, 2.0, 0.2) - direct).abs() < 1e-12);
    }

    #[test]
    fn gpd_sample_means() {
        let n = 100_000;
        let ds = simulate_gpd(n, |_| 1.0, |_| 0.0, 1).unwrap();
        assert!((mean(&ds.y) - 1.0).abs() < 3.0 / (n as f64).sqrt());
        let ds = simulate_gpd(n, |_| 2.0, |_| 0.2, 2).unwrap();
        // sd of a GPD(2, 0.2) draw is sigma / ((1 - k) sqrt(1 - 2k))
        let se = 2.0 / (0.8 * 0.6f64.sqrt()) / (n as f64).sqrt();
        assert!((mean(&ds.y) - 2.5).abs() < 3.0 * se);
        assert_eq!(simulate_gpd(10, |_| 2.0, |_| 0.2, 9).unwrap(), simulate_gpd(10, |_| 2.0, |_| 0.2, 9).unwrap());
    }

    #[test]
    fn sales_generator_matches_its_table() {
        let ds = simulate_sales(7 * 200, 12, 3).unwrap();
        let (day, hour) = match (ds.column("day").unwrap(), ds.column("hour").unwrap()) {
            (Covariate::Factor(d), Covariate::Factor(h)) => (d.clone(), h.clone()),
            _ => unreachable!(),
        };
        assert_eq!(day.levels, DAY_LABELS);
        let mut sums = [[0.0; 12]; 7];
        for i in 0..ds.n() {
            sums[day.codes[i]][hour.codes[i]] += ds.y[i];
        }
        for d in 0..7 {
            for h in 0..12 {
                let m = sums[d][h] / 200.0;
                assert!((m / SALES_PATTERN[d][h] - 1.0).abs() < 0.05, "{d} {h} {m}");
            }
        }
        assert_eq!(simulate_sales(7, 3, 5).unwrap(), simulate_sales(7, 3, 5).unwrap());
        assert_ne!(SALES_PATTERN[6], SALES_PATTERN[5]);
    }
}
