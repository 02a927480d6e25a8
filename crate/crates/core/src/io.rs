//! File formats: FASTA sequences, TSV ontology/annotations/predictions,
//! JSON models, and long-format sample tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::cnn::{Model, PredictionMatrix, Sequence};
use crate::error::Error;
use crate::metrics::{Namespace, Ontology};

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write through a sibling temporary file and rename over the target.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 over `parts`, each prefixed by its length.
pub fn digest_bytes(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for bytes in parts {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// [`digest_bytes`] over the contents of `paths`.
pub fn digest_files(paths: &[&Path]) -> Result<String, Error> {
    let contents = paths
        .iter()
        .map(|p| fs::read(p).map_err(|e| Error::io(*p, e)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(digest_bytes(&contents.iter().map(Vec::as_slice).collect::<Vec<_>>()))
}

/// Lines that are neither blank nor `#` comments, with 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

pub fn parse_fasta(text: &str, path: &Path) -> Result<Vec<Sequence>, Error> {
    let mut out: Vec<Sequence> = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(Error::parse(path, n + 1, "empty sequence id"));
            }
            if !seen.insert(id.to_string()) {
                return Err(Error::parse(path, n + 1, format!("duplicate sequence id `{id}`")));
            }
            out.push(Sequence {
                id: id.to_string(),
                residues: String::new(),
            });
        } else {
            let Some(seq) = out.last_mut() else {
                return Err(Error::parse(path, n + 1, "sequence data before first header"));
            };
            seq.residues
                .extend(line.chars().filter(|c| !c.is_whitespace()).map(|c| c.to_ascii_uppercase()));
        }
    }
    Ok(out)
}

pub fn read_fasta(path: &Path) -> Result<Vec<Sequence>, Error> {
    parse_fasta(&read_text(path)?, path)
}

pub fn format_fasta(seqs: &[Sequence]) -> String {
    let mut s = String::new();
    for seq in seqs {
        let _ = writeln!(s, ">{}", seq.id);
        let chars: Vec<char> = seq.residues.chars().collect();
        for chunk in chars.chunks(60) {
            s.extend(chunk);
            s.push('\n');
        }
    }
    s
}

pub fn write_fasta(path: &Path, seqs: &[Sequence]) -> Result<(), Error> {
    write_atomic(path, format_fasta(seqs).as_bytes())
}

/// Root declarations and child/parent edges.
pub type OntologyParts = (Vec<(String, Namespace)>, Vec<(String, String)>);

/// `root<TAB>class<TAB>namespace` declares a root; any other line is
/// `child<TAB>parent`.
pub fn parse_ontology(text: &str, path: &Path) -> Result<OntologyParts, Error> {
    let (mut roots, mut edges) = (Vec::new(), Vec::new());
    for (n, line) in content_lines(text) {
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        match f.as_slice() {
            ["root", id, ns] => {
                let ns: Namespace = ns.parse().map_err(|e: Error| Error::parse(path, n, e.to_string()))?;
                roots.push((id.to_string(), ns));
            }
            [child, parent] if !child.is_empty() && !parent.is_empty() => {
                edges.push((child.to_string(), parent.to_string()))
            }
            _ => return Err(Error::parse(path, n, "expected `child<TAB>parent` or `root<TAB>id<TAB>namespace`")),
        }
    }
    Ok((roots, edges))
}

pub fn read_ontology(path: &Path) -> Result<Ontology, Error> {
    let (roots, edges) = parse_ontology(&read_text(path)?, path)?;
    Ontology::new(&roots, &edges)
}

pub fn format_ontology(roots: &[(String, Namespace)], edges: &[(String, String)]) -> String {
    let mut s = String::from("# child\tparent\n");
    for (id, ns) in roots {
        let _ = writeln!(s, "root\t{id}\t{ns}");
    }
    for (c, p) in edges {
        let _ = writeln!(s, "{c}\t{p}");
    }
    s
}

/// `protein<TAB>class` pairs.
pub fn parse_annotations(text: &str, path: &Path) -> Result<Vec<(String, String)>, Error> {
    content_lines(text)
        .map(|(n, line)| match line.split('\t').map(str::trim).collect::<Vec<_>>().as_slice() {
            [p, c] if !p.is_empty() && !c.is_empty() => Ok((p.to_string(), c.to_string())),
            _ => Err(Error::parse(path, n, "expected `protein<TAB>class`")),
        })
        .collect()
}

pub fn read_annotations(path: &Path) -> Result<Vec<(String, String)>, Error> {
    parse_annotations(&read_text(path)?, path)
}

pub fn format_annotations(pairs: &[(String, String)]) -> String {
    let mut s = String::from("# protein\tclass\n");
    for (p, c) in pairs {
        let _ = writeln!(s, "{p}\t{c}");
    }
    s
}

/// Direct annotation sets in the order of `proteins`, as ontology indices.
/// Annotations of proteins not listed are ignored with a warning.
pub fn annotation_sets(
    ontology: &Ontology,
    proteins: &[String],
    pairs: &[(String, String)],
) -> Result<Vec<BTreeSet<usize>>, Error> {
    let row: HashMap<&str, usize> = proteins.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut sets = vec![BTreeSet::new(); proteins.len()];
    let mut skipped = 0usize;
    for (p, c) in pairs {
        let class = ontology.index_of(c)?;
        match row.get(p.as_str()) {
            Some(&i) => {
                sets[i].insert(class);
            }
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} annotations refer to proteins without a sequence");
    }
    Ok(sets)
}

pub fn read_model(path: &Path) -> Result<Model, Error> {
    let text = read_text(path)?;
    let model: Model = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    model.validate()?;
    Ok(model)
}

pub fn format_model(model: &Model) -> String {
    serde_json::to_string(model).expect("models serialize")
}

pub fn write_model(path: &Path, model: &Model) -> Result<(), Error> {
    write_atomic(path, format_model(model).as_bytes())
}

/// Header `protein<TAB>class...`, then one row per protein. Values use the
/// shortest representation that reads back to the same double.
pub fn format_predictions(m: &PredictionMatrix) -> String {
    let mut s = String::from("protein");
    for c in &m.class_ids {
        let _ = write!(s, "\t{c}");
    }
    s.push('\n');
    for (i, p) in m.proteins.iter().enumerate() {
        s.push_str(p);
        for v in m.row(i) {
            let _ = write!(s, "\t{v}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_predictions(text: &str, path: &Path) -> Result<PredictionMatrix, Error> {
    let mut lines = content_lines(text);
    let Some((_, header)) = lines.next() else {
        return Err(Error::parse(path, 1, "missing header"));
    };
    let class_ids: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();
    let (mut proteins, mut values) = (Vec::new(), Vec::new());
    for (n, line) in lines {
        let mut f = line.split('\t');
        proteins.push(f.next().unwrap_or("").to_string());
        let row = f
            .map(|v| v.trim().parse::<f64>().map_err(|e| Error::parse(path, n, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != class_ids.len() {
            return Err(Error::parse(path, n, format!("expected {} values", class_ids.len())));
        }
        values.extend(row);
    }
    Ok(PredictionMatrix::new(proteins, class_ids, values))
}

pub fn read_predictions(path: &Path) -> Result<PredictionMatrix, Error> {
    parse_predictions(&read_text(path)?, path)
}

/// Long table `iteration<TAB>protein<TAB>class<TAB>value`.
pub fn format_samples<'a>(runs: impl IntoIterator<Item = (usize, &'a PredictionMatrix)>) -> String {
    let mut s = String::from("iteration\tprotein\tclass\tvalue\n");
    for (it, m) in runs {
        for (i, p) in m.proteins.iter().enumerate() {
            for (j, c) in m.class_ids.iter().enumerate() {
                let _ = writeln!(s, "{it}\t{p}\t{c}\t{}", m.get(i, j));
            }
        }
    }
    s
}

/// Inverse of [`format_samples`]; every iteration must cover the same
/// protein/class grid.
pub fn parse_samples(text: &str, path: &Path) -> Result<BTreeMap<usize, PredictionMatrix>, Error> {
    let mut proteins: Vec<String> = Vec::new();
    let mut classes: Vec<String> = Vec::new();
    let (mut p_idx, mut c_idx) = (HashMap::new(), HashMap::new());
    let mut cells: BTreeMap<usize, HashMap<(usize, usize), f64>> = BTreeMap::new();
    for (n, line) in content_lines(text).skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        let [it, p, c, v] = f.as_slice() else {
            return Err(Error::parse(path, n, "expected 4 columns"));
        };
        let it: usize = it.trim().parse().map_err(|_| Error::parse(path, n, "bad iteration"))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::parse(path, n, "bad value"))?;
        let pi = *p_idx.entry(p.to_string()).or_insert_with(|| {
            proteins.push(p.to_string());
            proteins.len() - 1
        });
        let ci = *c_idx.entry(c.to_string()).or_insert_with(|| {
            classes.push(c.to_string());
            classes.len() - 1
        });
        if cells.entry(it).or_default().insert((pi, ci), v).is_some() {
            return Err(Error::parse(path, n, "duplicate cell"));
        }
    }
    let (np, nc) = (proteins.len(), classes.len());
    cells
        .into_iter()
        .map(|(it, map)| {
            let mut values = vec![0.0; np * nc];
            if map.len() != np * nc {
                return Err(Error::Samples(format!("iteration {it} has {} of {} cells", map.len(), np * nc)));
            }
            for ((pi, ci), v) in map {
                values[pi * nc + ci] = v;
            }
            Ok((it, PredictionMatrix::new(proteins.clone(), classes.clone(), values)))
        })
        .collect()
}

pub fn read_samples(path: &Path) -> Result<BTreeMap<usize, PredictionMatrix>, Error> {
    parse_samples(&read_text(path)?, path)
}
