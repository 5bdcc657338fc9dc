//! On-disk formats: the dataset pair (CSV + JSON sidecar) and the result
//! bundle a fit produces. All tabular data is CSV with a header row, comma
//! separator, '.' decimal, LF line endings; floats carry 17 significant
//! digits so a reload reproduces every value exactly. Metadata is JSON.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

/// Write one CSV table: a header line and rows of pre-formatted cells.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut text = String::new();
    text.push_str(header);
    text.push('\n');
    for row in rows {
        let mut first = true;
        for cell in row {
            if !first {
                text.push(',');
            }
            text.push_str(cell);
            first = false;
        }
        text.push('\n');
    }
    write_file(path, &text)
}

/// Parse a CSV produced by [`write_csv`]; returns (header, rows).
pub fn read_csv(path: &Path) -> Result<(String, Vec<Vec<String>>), CliError> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::config(format!("{} is empty", path.display())))?
        .to_string();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.to_string()).collect())
        .collect();
    Ok((header, rows))
}

fn parse_f64(cell: &str, path: &Path) -> Result<f64, CliError> {
    cell.parse()
        .map_err(|e| CliError::config(format!("bad number {cell:?} in {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetMeta {
    pub kind: String,
    pub seed: u64,
    pub sigma: f64,
    pub config_hash: String,
    #[serde(default)]
    pub family: Option<usize>,
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default)]
    pub fermi_half_radius: Option<f64>,
    #[serde(default)]
    pub fermi_diffuseness: Option<f64>,
    #[serde(default)]
    pub fermi_charge: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFiles {
    pub q: Vec<f64>,
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
    pub meta: DatasetMeta,
}

impl DatasetFiles {
    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        let rows: Vec<Vec<String>> = (0..self.q.len())
            .map(|i| {
                vec![
                    fmt_f64(self.q[i]),
                    fmt_f64(self.clean[i]),
                    fmt_f64(self.noisy[i]),
                ]
            })
            .collect();
        write_csv(&dir.join("dataset.csv"), "q,y_clean,y_noisy", &rows)?;
        let json = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        write_file(&dir.join("dataset.json"), &json)
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join("dataset.csv");
        let (header, rows) = read_csv(&path)?;
        if header != "q,y_clean,y_noisy" {
            return Err(CliError::config(format!(
                "unexpected dataset header {header:?} in {}",
                path.display()
            )));
        }
        let mut q = Vec::new();
        let mut clean = Vec::new();
        let mut noisy = Vec::new();
        for row in &rows {
            if row.len() != 3 {
                return Err(CliError::config(format!(
                    "dataset row with {} cells in {}",
                    row.len(),
                    path.display()
                )));
            }
            q.push(parse_f64(&row[0], &path)?);
            clean.push(parse_f64(&row[1], &path)?);
            noisy.push(parse_f64(&row[2], &path)?);
        }
        let meta_path = dir.join("dataset.json");
        let meta: DatasetMeta = serde_json::from_str(&read_file(&meta_path)?)
            .map_err(|e| CliError::config(format!("invalid {}: {e}", meta_path.display())))?;
        Ok(Self { q, clean, noisy, meta })
    }
}

// ---------------------------------------------------------------------------
// result bundle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SelectionSummary {
    pub algorithm: String,
    pub family_index: usize,
    pub family_name: String,
    pub order: usize,
    pub phi: f64,
    pub psi: f64,
    pub lambda: f64,
    pub criterion: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunMeta {
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_s: f64,
    /// Full configuration, embedded so a bundle is self-describing.
    pub config: serde_json::Value,
}

/// One row of the joint-scan criterion table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub family_index: usize,
    pub order: usize,
    pub criterion: f64,
    pub lambda: f64,
    pub converged: bool,
}

/// One (lambda, criterion) trace step of one scan cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub family_index: usize,
    pub order: usize,
    pub step: usize,
    pub lambda: f64,
    pub criterion: f64,
}

/// Marginal score tables flattened for emission. `p_phi`/`p_psi` are the
/// slices at the selected cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableFiles {
    /// (family index, p_l)
    pub p_l: Vec<(usize, f64)>,
    /// (family index, order, p_k, joint p_kl)
    pub p_k: Vec<(usize, usize, f64, f64)>,
    /// (sample index, phi, p) at the selected (order, family)
    pub p_phi: Vec<(usize, f64, f64)>,
    /// (sample index, psi, p) at the selected (phi, order, family)
    pub p_psi: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub selection: SelectionSummary,
    pub meta: RunMeta,
    pub coefficients: Vec<f64>,
    /// (r, rho_true, rho_hat)
    pub curves: Vec<(f64, f64, f64)>,
    /// (q, f_true, f_data, f_hat)
    pub spectrum: Vec<(f64, f64, f64, f64)>,
    /// Joint algorithms: the per-cell criterion table.
    pub scan: Vec<ScanRow>,
    /// Joint algorithms: per-cell (lambda, criterion) traces.
    pub trace: Vec<TraceRow>,
    /// Marginal algorithm: the normalized score tables.
    pub tables: Option<TableFiles>,
}

impl ResultBundle {
    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        write_file(
            &dir.join("selection.json"),
            &serde_json::to_string_pretty(&self.selection).expect("selection serializes"),
        )?;
        write_file(
            &dir.join("meta.json"),
            &serde_json::to_string_pretty(&self.meta).expect("meta serializes"),
        )?;
        let rows: Vec<Vec<String>> = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(j, x)| vec![(j + 1).to_string(), fmt_f64(*x)])
            .collect();
        write_csv(&dir.join("coefficients.csv"), "j,x_hat", &rows)?;
        let rows: Vec<Vec<String>> = self
            .curves
            .iter()
            .map(|(r, t, h)| vec![fmt_f64(*r), fmt_f64(*t), fmt_f64(*h)])
            .collect();
        write_csv(&dir.join("curves.csv"), "r,rho_true,rho_hat", &rows)?;
        let rows: Vec<Vec<String>> = self
            .spectrum
            .iter()
            .map(|(q, t, d, h)| vec![fmt_f64(*q), fmt_f64(*t), fmt_f64(*d), fmt_f64(*h)])
            .collect();
        write_csv(&dir.join("spectrum.csv"), "q,f_true,f_data,f_hat", &rows)?;

        if !self.scan.is_empty() {
            let rows: Vec<Vec<String>> = self
                .scan
                .iter()
                .map(|r| {
                    vec![
                        r.family_index.to_string(),
                        r.order.to_string(),
                        fmt_f64(r.criterion),
                        fmt_f64(r.lambda),
                        r.converged.to_string(),
                    ]
                })
                .collect();
            write_csv(&dir.join("j_table.csv"), "l,k,criterion,lambda,converged", &rows)?;
        }
        if !self.trace.is_empty() {
            let rows: Vec<Vec<String>> = self
                .trace
                .iter()
                .map(|r| {
                    vec![
                        r.family_index.to_string(),
                        r.order.to_string(),
                        r.step.to_string(),
                        fmt_f64(r.lambda),
                        fmt_f64(r.criterion),
                    ]
                })
                .collect();
            write_csv(&dir.join("trace.csv"), "l,k,step,lambda,criterion", &rows)?;
        }
        if let Some(tables) = &self.tables {
            let rows: Vec<Vec<String>> = tables
                .p_l
                .iter()
                .map(|(l, p)| vec![l.to_string(), fmt_f64(*p)])
                .collect();
            write_csv(&dir.join("p_l.csv"), "l,p", &rows)?;
            let rows: Vec<Vec<String>> = tables
                .p_k
                .iter()
                .map(|(l, k, p, joint)| {
                    vec![l.to_string(), k.to_string(), fmt_f64(*p), fmt_f64(*joint)]
                })
                .collect();
            write_csv(&dir.join("p_k.csv"), "l,k,p,p_joint", &rows)?;
            let rows: Vec<Vec<String>> = tables
                .p_phi
                .iter()
                .map(|(j, phi, p)| vec![j.to_string(), fmt_f64(*phi), fmt_f64(*p)])
                .collect();
            write_csv(&dir.join("p_phi.csv"), "j,phi,p", &rows)?;
            let rows: Vec<Vec<String>> = tables
                .p_psi
                .iter()
                .map(|(i, psi, p)| vec![i.to_string(), fmt_f64(*psi), fmt_f64(*p)])
                .collect();
            write_csv(&dir.join("p_psi.csv"), "i,psi,p", &rows)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let selection: SelectionSummary =
            serde_json::from_str(&read_file(&dir.join("selection.json"))?)
                .map_err(|e| CliError::config(format!("invalid selection.json: {e}")))?;
        let meta: RunMeta = serde_json::from_str(&read_file(&dir.join("meta.json"))?)
            .map_err(|e| CliError::config(format!("invalid meta.json: {e}")))?;

        let path = dir.join("coefficients.csv");
        let (_, rows) = read_csv(&path)?;
        let mut coefficients = Vec::new();
        for row in &rows {
            coefficients.push(parse_f64(&row[1], &path)?);
        }

        let path = dir.join("curves.csv");
        let (_, rows) = read_csv(&path)?;
        let mut curves = Vec::new();
        for row in &rows {
            curves.push((
                parse_f64(&row[0], &path)?,
                parse_f64(&row[1], &path)?,
                parse_f64(&row[2], &path)?,
            ));
        }

        let path = dir.join("spectrum.csv");
        let (_, rows) = read_csv(&path)?;
        let mut spectrum = Vec::new();
        for row in &rows {
            spectrum.push((
                parse_f64(&row[0], &path)?,
                parse_f64(&row[1], &path)?,
                parse_f64(&row[2], &path)?,
                parse_f64(&row[3], &path)?,
            ));
        }

        let mut scan = Vec::new();
        let path = dir.join("j_table.csv");
        if path.exists() {
            let (_, rows) = read_csv(&path)?;
            for row in &rows {
                scan.push(ScanRow {
                    family_index: row[0].parse().map_err(|e| {
                        CliError::config(format!("bad index in {}: {e}", path.display()))
                    })?,
                    order: row[1].parse().map_err(|e| {
                        CliError::config(format!("bad index in {}: {e}", path.display()))
                    })?,
                    criterion: parse_f64(&row[2], &path)?,
                    lambda: parse_f64(&row[3], &path)?,
                    converged: row[4] == "true",
                });
            }
        }

        let mut trace = Vec::new();
        let path = dir.join("trace.csv");
        if path.exists() {
            let (_, rows) = read_csv(&path)?;
            for row in &rows {
                trace.push(TraceRow {
                    family_index: row[0].parse().unwrap_or(0),
                    order: row[1].parse().unwrap_or(0),
                    step: row[2].parse().unwrap_or(0),
                    lambda: parse_f64(&row[3], &path)?,
                    criterion: parse_f64(&row[4], &path)?,
                });
            }
        }

        let tables = if dir.join("p_l.csv").exists() {
            let mut t = TableFiles::default();
            let path = dir.join("p_l.csv");
            let (_, rows) = read_csv(&path)?;
            for row in &rows {
                t.p_l.push((row[0].parse().unwrap_or(0), parse_f64(&row[1], &path)?));
            }
            let path = dir.join("p_k.csv");
            let (_, rows) = read_csv(&path)?;
            for row in &rows {
                t.p_k.push((
                    row[0].parse().unwrap_or(0),
                    row[1].parse().unwrap_or(0),
                    parse_f64(&row[2], &path)?,
                    parse_f64(&row[3], &path)?,
                ));
            }
            let path = dir.join("p_phi.csv");
            let (_, rows) = read_csv(&path)?;
            for row in &rows {
                t.p_phi.push((
                    row[0].parse().unwrap_or(0),
                    parse_f64(&row[1], &path)?,
                    parse_f64(&row[2], &path)?,
                ));
            }
            let path = dir.join("p_psi.csv");
            let (_, rows) = read_csv(&path)?;
            for row in &rows {
                t.p_psi.push((
                    row[0].parse().unwrap_or(0),
                    parse_f64(&row[1], &path)?,
                    parse_f64(&row[2], &path)?,
                ));
            }
            Some(t)
        } else {
            None
        };

        Ok(Self {
            selection,
            meta,
            coefficients,
            curves,
            spectrum,
            scan,
            trace,
            tables,
        })
    }
}

/// Long-format figure emission from a saved bundle.
pub fn write_report(bundle: &ResultBundle, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();

    // basis curves b_j(r) for the selected cell, on the radial grid
    let config: crate::config::RunConfig = serde_json::from_value(bundle.meta.config.clone())
        .map_err(|e| CliError::config(format!("bundle meta carries an invalid config: {e}")))?;
    let family = bayesinv::basis::Family::from_index(bundle.selection.family_index)
        .map_err(|e| CliError::config(format!("bundle selection: {e}")))?;
    let grid = bayesinv::basis::RadialGrid::new(config.grid.n, config.grid.r_c)
        .map_err(|e| CliError::config(format!("bundle grid: {e}")))?;
    let basis = bayesinv::basis::BasisSet::new(family, bundle.selection.order, config.grid.r_c)
        .map_err(|e| CliError::config(format!("bundle basis: {e}")))?;
    let mut rows = Vec::new();
    for n in 0..grid.len() {
        let r = grid.point(n);
        for j in 0..basis.order() {
            rows.push(vec![fmt_f64(r), (j + 1).to_string(), fmt_f64(basis.eval(j, r))]);
        }
    }
    let path = dir.join("basis_curves.csv");
    write_csv(&path, "r,j,b", &rows)?;
    written.push(path);

    // score map over (order, family): joint criterion or marginal joint
    // probability
    let mut rows = Vec::new();
    if let Some(tables) = &bundle.tables {
        for &(l, k, _p, joint) in &tables.p_k {
            rows.push(vec![l.to_string(), k.to_string(), fmt_f64(joint)]);
        }
    } else {
        for r in &bundle.scan {
            rows.push(vec![
                r.family_index.to_string(),
                r.order.to_string(),
                fmt_f64(r.criterion),
            ]);
        }
    }
    let path = dir.join("score_map.csv");
    write_csv(&path, "l,k,value", &rows)?;
    written.push(path);

    // posterior bars over families and over orders at the selected family.
    // Joint scans expose exp(-criterion) renormalized; the marginal tables
    // are used as-is.
    let (family_bars, order_bars) = posterior_bars(bundle)?;
    let rows: Vec<Vec<String>> = family_bars
        .iter()
        .map(|(l, p)| vec![l.to_string(), fmt_f64(*p)])
        .collect();
    let path = dir.join("family_posterior.csv");
    write_csv(&path, "l,p", &rows)?;
    written.push(path);
    let rows: Vec<Vec<String>> = order_bars
        .iter()
        .map(|(k, p)| vec![k.to_string(), fmt_f64(*p)])
        .collect();
    let path = dir.join("order_posterior.csv");
    write_csv(&path, "k,p", &rows)?;
    written.push(path);

    // overlays
    let rows: Vec<Vec<String>> = bundle
        .curves
        .iter()
        .map(|(r, t, h)| vec![fmt_f64(*r), fmt_f64(*t), fmt_f64(*h)])
        .collect();
    let path = dir.join("density_overlay.csv");
    write_csv(&path, "r,rho_true,rho_hat", &rows)?;
    written.push(path);

    let rows: Vec<Vec<String>> = bundle
        .spectrum
        .iter()
        .map(|(q, t, d, h)| {
            vec![
                fmt_f64(*q),
                fmt_f64(*t),
                fmt_f64(*d),
                fmt_f64(*h),
                fmt_f64(t.abs().log10()),
                fmt_f64(h.abs().log10()),
            ]
        })
        .collect();
    let path = dir.join("form_factor_overlay.csv");
    write_csv(
        &path,
        "q,f_true,f_data,f_hat,log10_abs_f_true,log10_abs_f_hat",
        &rows,
    )?;
    written.push(path);
    Ok(written)
}

/// (index, probability) pairs for one bar chart.
type Bars = Vec<(usize, f64)>;

/// Normalized (family, p) and (order, p at selected family) bars.
fn posterior_bars(bundle: &ResultBundle) -> Result<(Bars, Bars), CliError> {
    if let Some(tables) = &bundle.tables {
        let family_bars = tables.p_l.clone();
        let order_bars = tables
            .p_k
            .iter()
            .filter(|(l, _, _, _)| *l == bundle.selection.family_index)
            .map(|(_, k, p, _)| (*k, *p))
            .collect();
        Ok((family_bars, order_bars))
    } else {
        if bundle.scan.is_empty() {
            return Err(CliError::config(
                "bundle has neither score tables nor a criterion table".into(),
            ));
        }
        // softmax of -criterion over the scanned cells
        let min = bundle
            .scan
            .iter()
            .map(|r| r.criterion)
            .fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = bundle
            .scan
            .iter()
            .map(|r| (-(r.criterion - min)).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut families: Vec<usize> = bundle.scan.iter().map(|r| r.family_index).collect();
        families.sort_unstable();
        families.dedup();
        let family_bars = families
            .iter()
            .map(|&l| {
                let mass: f64 = bundle
                    .scan
                    .iter()
                    .zip(&weights)
                    .filter(|(r, _)| r.family_index == l)
                    .map(|(_, w)| w)
                    .sum();
                (l, mass / total)
            })
            .collect();
        let sel_weights: Vec<(usize, f64)> = bundle
            .scan
            .iter()
            .zip(&weights)
            .filter(|(r, _)| r.family_index == bundle.selection.family_index)
            .map(|(r, w)| (r.order, *w))
            .collect();
        let sel_total: f64 = sel_weights.iter().map(|(_, w)| w).sum();
        let order_bars = sel_weights
            .into_iter()
            .map(|(k, w)| (k, w / sel_total))
            .collect();
        Ok((family_bars, order_bars))
    }
}

/// Render a short human-readable summary of a saved bundle.
pub fn describe(bundle: &ResultBundle) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "algorithm {}: selected family {} ({}), order {}",
        bundle.selection.algorithm,
        bundle.selection.family_index,
        bundle.selection.family_name,
        bundle.selection.order
    );
    let _ = writeln!(
        s,
        "phi {:.6e}, psi {:.6e}, lambda {:.6e}",
        bundle.selection.phi, bundle.selection.psi, bundle.selection.lambda
    );
    if !bundle.selection.warnings.is_empty() {
        let _ = writeln!(s, "warnings: {}", bundle.selection.warnings.join("; "));
    }
    s
}
