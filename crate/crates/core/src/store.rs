//! Verified equilibria: admission, translation-invariant deduplication,
//! reflection symmetries, persistence and table export.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::dynamics::{Integrator, SimState};
use crate::error::{KseError, Result};
use crate::spectral::{leading_coefficients, LeadingCoefficients, PhysicalField, SpectralField};

/// Admission bound on `‖Φ^T(u) − u‖/‖u‖`.
pub const VERIFY_TOLERANCE: f64 = 1e-10;
/// Relative fingerprint distance below which two records are the same solution.
pub const DEDUP_TOLERANCE: f64 = 1e-6;
/// Reflection residual below which a symmetry flag is set.
pub const SYMMETRY_TOLERANCE: f64 = 1e-6;
/// Leading-magnitude triples this close share a table row pattern and get
/// the extended columns.
pub const TABLE_COINCIDENCE: f64 = 0.05;
/// Verification horizon.
pub const VERIFY_HORIZON: f64 = 1.0;

pub const MANIFEST: &str = "manifest.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Jfnk,
    DrlJfnk,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Jfnk => "jfnk",
            Method::DrlJfnk => "drl+jfnk",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "jfnk" => Some(Method::Jfnk),
            "drl+jfnk" => Some(Method::DrlJfnk),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub method: Method,
    pub seed: u64,
    pub episode: u64,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Symmetry {
    pub x_reflection: bool,
    pub y_reflection: bool,
    pub diagonal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointRecord {
    pub id: String,
    pub spec: SpectralField,
    pub relative_residual: f64,
    pub leading: LeadingCoefficients,
    pub symmetry: Symmetry,
    pub provenance: Provenance,
}

/// Relative residual over the verification horizon; errors above `tolerance`.
pub fn verify(spec: &SpectralField, integ: &Integrator, tolerance: f64) -> Result<f64> {
    let steps = integ.steps_for(VERIFY_HORIZON)?;
    let out = integ.advance(&SimState::new(spec.clone()), steps)?;
    let diff = out.spec.axpy(-1.0, spec)?;
    let residual = diff.norm() / spec.norm().max(crate::jfnk::NORM_FLOOR);
    if !(residual <= tolerance) {
        return Err(KseError::Verification {
            residual,
            tolerance,
        });
    }
    Ok(residual)
}

/// `{|ê_pq|}`; invariant under periodic translation.
pub fn fingerprint(spec: &SpectralField) -> Vec<f64> {
    spec.coeffs().iter().map(|c| c.norm()).collect()
}

pub fn fingerprint_distance(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if scale == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / scale
    }
}

fn norm_of(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn min_residual(phi: &PhysicalField, map: impl Fn(usize, usize, usize) -> (usize, usize)) -> f64 {
    let n = phi.grid().n;
    let scale = norm_of(phi.values());
    if scale == 0.0 {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for s in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (a, b) = map(i, j, s);
                acc += (phi.at(i, j) - phi.at(a, b)).powi(2);
            }
            if acc >= (best * scale).powi(2) {
                break;
            }
        }
        best = best.min(acc.sqrt() / scale);
    }
    best
}

/// Reflection symmetries about any lattice line, and the diagonal swap
/// `(x, y) → (y + c, x − c)` for any lattice offset `c`.
pub fn classify_symmetry(phi: &PhysicalField) -> Symmetry {
    let n = phi.grid().n;
    Symmetry {
        x_reflection: min_residual(phi, |i, j, s| ((s + n - i) % n, j)) < SYMMETRY_TOLERANCE,
        y_reflection: min_residual(phi, |i, j, s| (i, (s + n - j) % n)) < SYMMETRY_TOLERANCE,
        diagonal: min_residual(phi, |i, j, s| ((j + s) % n, (i + n - s) % n)) < SYMMETRY_TOLERANCE,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Admission {
    New(String),
    Duplicate(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixedPointStore {
    records: Vec<FixedPointRecord>,
    fingerprints: Vec<Vec<f64>>,
}

impl FixedPointStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[FixedPointRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&FixedPointRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Id of a stored record whose fingerprint lies within `tol_rel`.
    pub fn dedup(&self, candidate: &SpectralField, tol_rel: f64) -> Option<&str> {
        let fp = fingerprint(candidate);
        self.records
            .iter()
            .zip(&self.fingerprints)
            .find(|(_, f)| fingerprint_distance(&fp, f) < tol_rel)
            .map(|(r, _)| r.id.as_str())
    }

    /// Verifies, deduplicates and, if new, appends with the next E-number.
    pub fn admit(
        &mut self,
        spec: SpectralField,
        integ: &Integrator,
        provenance: Provenance,
    ) -> Result<Admission> {
        let relative_residual = verify(&spec, integ, VERIFY_TOLERANCE)?;
        if let Some(id) = self.dedup(&spec, DEDUP_TOLERANCE) {
            return Ok(Admission::Duplicate(id.to_string()));
        }
        let id = format!("E{}", self.records.len() + 1);
        let symmetry = classify_symmetry(&integ.to_physical(&spec));
        self.fingerprints.push(fingerprint(&spec));
        self.records.push(FixedPointRecord {
            id: id.clone(),
            leading: leading_coefficients(&spec),
            spec,
            relative_residual,
            symmetry,
            provenance,
        });
        Ok(Admission::New(id))
    }

    /// Writes one `.kse` file per record plus `manifest.csv`.
    pub fn persist(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut manifest = String::from(
            "id,file,relative_residual,method,seed,episode,newton_iterations,x_reflection,y_reflection,diagonal",
        );
        for name in LeadingCoefficients::NAMES {
            write!(manifest, ",{name}").expect("string write");
        }
        manifest.push('\n');
        for r in &self.records {
            let file = format!("{}.kse", r.id);
            r.spec.save(dir.join(&file))?;
            let p = &r.provenance;
            let s = &r.symmetry;
            write!(
                manifest,
                "{},{},{:e},{},{},{},{},{},{},{}",
                r.id,
                file,
                r.relative_residual,
                p.method.as_str(),
                p.seed,
                p.episode,
                p.newton_iterations,
                s.x_reflection,
                s.y_reflection,
                s.diagonal
            )
            .expect("string write");
            for v in r.leading.as_array() {
                write!(manifest, ",{v:e}").expect("string write");
            }
            manifest.push('\n');
        }
        std::fs::write(dir.join(MANIFEST), manifest)?;
        Ok(())
    }

    /// Loads a persisted store, re-verifying every record.
    pub fn load(dir: impl AsRef<Path>, integ: &Integrator) -> Result<Self> {
        let dir = dir.as_ref();
        let text = std::fs::read_to_string(dir.join(MANIFEST))?;
        let mut store = FixedPointStore::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let id = f.first().copied().unwrap_or("").to_string();
            let bad = |reason: String| KseError::Ingest {
                id: id.clone(),
                reason,
            };
            if f.len() != 10 + LeadingCoefficients::NAMES.len() {
                return Err(bad(format!(
                    "manifest line {} has {} fields",
                    lineno + 1,
                    f.len()
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("bad number {s:?}")))
            };
            let int = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| bad(format!("bad integer {s:?}")))
            };
            let flag = |s: &str| {
                s.parse::<bool>()
                    .map_err(|_| bad(format!("bad flag {s:?}")))
            };
            let spec = SpectralField::load(dir.join(f[1]))
                .map_err(|e| bad(format!("field file {}: {e}", f[1])))?;
            if spec.grid() != integ.grid() {
                return Err(bad("grid differs from the verifying integrator".into()));
            }
            let relative_residual = match verify(&spec, integ, VERIFY_TOLERANCE) {
                Ok(r) => r,
                Err(KseError::Verification { residual, .. }) => {
                    return Err(bad(format!(
                        "residual regression: {residual:.3e} above {VERIFY_TOLERANCE:.0e}"
                    )))
                }
                Err(e) => return Err(bad(e.to_string())),
            };
            let leading = leading_coefficients(&spec);
            for (k, (&stored, actual)) in f[10..].iter().zip(leading.as_array()).enumerate() {
                let stored = num(stored)?;
                if (stored - actual).abs() > 1e-9 * actual.abs().max(1.0) {
                    return Err(bad(format!(
                        "{} is {actual}, manifest says {stored}",
                        LeadingCoefficients::NAMES[k]
                    )));
                }
            }
            let method =
                Method::parse(f[3]).ok_or_else(|| bad(format!("unknown method {:?}", f[3])))?;
            let record = FixedPointRecord {
                id: id.clone(),
                relative_residual,
                leading,
                symmetry: Symmetry {
                    x_reflection: flag(f[7])?,
                    y_reflection: flag(f[8])?,
                    diagonal: flag(f[9])?,
                },
                provenance: Provenance {
                    method,
                    seed: int(f[4])?,
                    episode: int(f[5])?,
                    newton_iterations: int(f[6])? as usize,
                },
                spec,
            };
            num(f[2])?;
            store.fingerprints.push(fingerprint(&record.spec));
            store.records.push(record);
        }
        Ok(store)
    }

    /// Table of leading magnitudes, one decimal, sorted by `(e01, e11, e10)`.
    pub fn export_table(&self, mut w: impl Write) -> Result<()> {
        let mut order: Vec<&FixedPointRecord> = self.records.iter().collect();
        let key = |r: &FixedPointRecord| [r.leading.e01, r.leading.e11, r.leading.e10];
        order.sort_by(|a, b| {
            key(a)
                .iter()
                .zip(key(b).iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        write!(w, "id")?;
        for name in LeadingCoefficients::NAMES {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for r in &order {
            let k = key(r);
            let coincides = k.iter().all(|v| format!("{v:.1}") == "0.0")
                || self.records.iter().any(|o| {
                    o.id != r.id
                        && key(o)
                            .iter()
                            .zip(k.iter())
                            .all(|(a, b)| (a - b).abs() <= TABLE_COINCIDENCE)
                });
            write!(w, "{}", r.id)?;
            for (i, v) in r.leading.as_array().iter().enumerate() {
                if i < 3 || coincides {
                    write!(w, ",{v:.1}")?;
                } else {
                    write!(w, ",")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Binary graymap (P5) of a physical field, min→0 and max→255, optionally
/// tiled 2×2.
pub fn write_pgm(phi: &PhysicalField, tile: bool, mut w: impl Write) -> Result<()> {
    let n = phi.grid().n;
    let reps = if tile { 2 } else { 1 };
    let (lo, hi) = phi
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let side = n * reps;
    write!(w, "P5\n{side} {side}\n255\n")?;
    let mut row = Vec::with_capacity(side);
    // image rows run along y (top = largest y), columns along x
    for jj in (0..side).rev() {
        row.clear();
        for ii in 0..side {
            let v = phi.at(ii % n, jj % n);
            row.push(((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8);
        }
        w.write_all(&row)?;
    }
    Ok(())
}
