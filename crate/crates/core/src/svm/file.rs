//! Line-oriented text format for trained models.
//!
//! ```text
//! ripplesense-svm 1
//! kernel polynomial
//! degree 3
//! c 10
//! bias -0.25
//! dim 9
//! meta hysteresis 0.4
//! support 2
//! sv 0.5 1 0 0.25 ...
//! sv -0.5 0 1 0.75 ...
//! ```
//!
//! Floats are written in shortest round-trip form, so a save/load cycle is
//! lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::kernel::KernelSpec;
use super::model::{SupportVector, SvmModel};
use crate::error::{Error, Result};

const MAGIC: &str = "ripplesense-svm";
const VERSION: u32 = 1;

pub fn to_string(model: &SvmModel) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "kernel {}", model.kernel.name()).unwrap();
    match model.kernel {
        KernelSpec::Linear => {}
        KernelSpec::Polynomial { degree } => writeln!(out, "degree {degree}").unwrap(),
        KernelSpec::GaussianRbf { sigma } => writeln!(out, "sigma {sigma:?}").unwrap(),
        KernelSpec::Sigmoid { gamma, r } => {
            writeln!(out, "gamma {gamma:?}").unwrap();
            writeln!(out, "r {r:?}").unwrap();
        }
    }
    writeln!(out, "c {:?}", model.c).unwrap();
    writeln!(out, "bias {:?}", model.bias).unwrap();
    writeln!(out, "dim {}", model.dim).unwrap();
    for (k, v) in &model.meta {
        writeln!(out, "meta {k} {v}").unwrap();
    }
    writeln!(out, "support {}", model.support.len()).unwrap();
    for sv in &model.support {
        write!(out, "sv {:?}", sv.coef).unwrap();
        for v in &sv.x {
            write!(out, " {v:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn save(model: &SvmModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<SvmModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}

pub fn parse(text: &str, origin: &Path) -> Result<SvmModel> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line: line as u64,
        msg,
    };
    let num = |line: usize, s: Option<&str>, what: &str| -> Result<f64> {
        s.ok_or_else(|| err(line, format!("missing {what}")))?
            .parse::<f64>()
            .map_err(|e| err(line, format!("bad {what}: {e}")))
    };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (ln, header) = lines.next().ok_or_else(|| err(1, "empty model file".into()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(err(ln, format!("expected `{MAGIC}` header")));
    }
    let version = num(ln, parts.next(), "version")?;
    if version != VERSION as f64 {
        return Err(err(ln, format!("unsupported model version {version}")));
    }

    let mut kind: Option<String> = None;
    let mut params: BTreeMap<&str, f64> = BTreeMap::new();
    let mut c = None;
    let mut bias = None;
    let mut dim: Option<usize> = None;
    let mut declared: Option<usize> = None;
    let mut meta = BTreeMap::new();
    let mut support = Vec::new();

    for (ln, line) in lines {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        match key {
            "kernel" => kind = parts.next().map(str::to_owned),
            "degree" | "sigma" | "gamma" | "r" => {
                params.insert(key, num(ln, parts.next(), key)?);
            }
            "c" => c = Some(num(ln, parts.next(), "c")?),
            "bias" => bias = Some(num(ln, parts.next(), "bias")?),
            "dim" => dim = Some(num(ln, parts.next(), "dim")? as usize),
            "support" => declared = Some(num(ln, parts.next(), "support count")? as usize),
            "meta" => {
                let k = parts.next().ok_or_else(|| err(ln, "meta without key".into()))?;
                let v: Vec<&str> = parts.collect();
                meta.insert(k.to_owned(), v.join(" "));
            }
            "sv" => {
                let coef = num(ln, parts.next(), "coefficient")?;
                let x = parts
                    .map(|p| p.parse::<f64>().map_err(|e| err(ln, format!("bad component: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                let d = dim.ok_or_else(|| err(ln, "`dim` must precede support vectors".into()))?;
                if x.len() != d {
                    return Err(err(ln, format!("support vector has {} components, expected {d}", x.len())));
                }
                support.push(SupportVector { coef, x });
            }
            other => return Err(err(ln, format!("unknown key `{other}`"))),
        }
    }

    let need = |p: &str| params.get(p).copied().ok_or_else(|| err(0, format!("missing kernel parameter `{p}`")));
    let kernel = match kind.as_deref() {
        Some("linear") => KernelSpec::Linear,
        Some("polynomial") => KernelSpec::Polynomial {
            degree: need("degree")? as u32,
        },
        Some("gaussian_rbf") => KernelSpec::GaussianRbf { sigma: need("sigma")? },
        Some("sigmoid") => KernelSpec::Sigmoid {
            gamma: need("gamma")?,
            r: need("r")?,
        },
        Some(other) => return Err(err(0, format!("unknown kernel `{other}`"))),
        None => return Err(err(0, "missing `kernel`".into())),
    };
    kernel.validate()?;
    if let Some(n) = declared {
        if n != support.len() {
            return Err(err(0, format!("declared {n} support vectors, found {}", support.len())));
        }
    }
    Ok(SvmModel {
        kernel,
        c: c.ok_or_else(|| err(0, "missing `c`".into()))?,
        bias: bias.ok_or_else(|| err(0, "missing `bias`".into()))?,
        dim: dim.ok_or_else(|| err(0, "missing `dim`".into()))?,
        support,
        meta,
    })
}
