//! Expression matrices, cell-type labels, normalization, marker-gene
//! panels and gene alignment.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use indexmap::IndexMap;
use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::tsv::{self, Table};

/// Dense, nonnegative rows × genes grid with unique row IDs and gene names.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    row_ids: Vec<String>,
    gene_names: Vec<String>,
    values: Array2<f64>,
}

impl ExpressionMatrix {
    pub fn new(row_ids: Vec<String>, gene_names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != row_ids.len() || values.ncols() != gene_names.len() {
            return Err(Error::shape(
                "expression matrix",
                format!("{}x{}", row_ids.len(), gene_names.len()),
                format!("{}x{}", values.nrows(), values.ncols()),
            ));
        }
        if let Some(dup) = first_duplicate(&gene_names) {
            return Err(Error::DuplicateGene(dup.to_string()));
        }
        if let Some(dup) = first_duplicate(&row_ids) {
            return Err(Error::DuplicateId(dup.to_string()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "expression values must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self {
            row_ids,
            gene_names,
            values,
        })
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn gene_names(&self) -> &[String] {
        &self.gene_names
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Restricts to `genes`, in that order. Every gene must be present.
    pub fn select_genes(&self, genes: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = self
            .gene_names
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();
        let missing: Vec<String> = genes
            .iter()
            .filter(|g| !index.contains_key(g.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingGenes(missing));
        }
        let cols: Vec<usize> = genes.iter().map(|g| index[g.as_str()]).collect();
        Self::new(
            self.row_ids.clone(),
            genes.to_vec(),
            self.values.select(Axis(1), &cols),
        )
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::new(
            rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            self.gene_names.clone(),
            self.values.select(Axis(0), rows),
        )
    }

    pub fn from_tsv_str(source: &str, text: &str) -> Result<Self> {
        let table = Table::parse(source, text)?;
        table.expect_shape("id")?;
        let genes: Vec<String> = table.header[1..].to_vec();
        if let Some(dup) = first_duplicate(&genes) {
            return Err(Error::DuplicateGene(dup.to_string()));
        }
        let mut ids = Vec::with_capacity(table.rows.len());
        let mut seen = HashSet::new();
        let mut values = Array2::zeros((table.rows.len(), genes.len()));
        for (r, (line, cells)) in table.rows.iter().enumerate() {
            if !seen.insert(cells[0].as_str()) {
                return Err(table.error(*line, format!("duplicate row id `{}`", cells[0])));
            }
            ids.push(cells[0].clone());
            for (c, cell) in cells[1..].iter().enumerate() {
                let v = table.parse_number(*line, cell)?;
                if v < 0.0 {
                    return Err(table.error(*line, format!("negative value `{cell}`")));
                }
                values[[r, c]] = v;
            }
        }
        Self::new(ids, genes, values)
    }

    pub fn to_tsv_string(&self) -> String {
        tsv::render(
            std::iter::once("id").chain(self.gene_names.iter().map(String::as_str)),
            self.row_ids
                .iter()
                .zip(self.values.rows())
                .map(|(id, row)| (id.as_str(), row.to_vec())),
        )
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        tsv::write(path, &self.to_tsv_string())
    }
}

/// Reads an expression TSV (`id<TAB>gene...` header, one row per cell/spot).
pub fn load_expression_matrix(path: &Path) -> Result<ExpressionMatrix> {
    let table_text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExpressionMatrix::from_tsv_str(&path.display().to_string(), &table_text)
}

fn first_duplicate(names: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(names.len());
    names.iter().find(|n| !seen.insert(n.as_str())).map(String::as_str)
}

/// Cell → cell-type assignments. `type_order` follows first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTypeLabels {
    assignments: IndexMap<String, String>,
    type_order: Vec<String>,
}

impl CellTypeLabels {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut assignments = IndexMap::new();
        let mut type_order: Vec<String> = Vec::new();
        for (cell, ty) in pairs {
            let (cell, ty) = (cell.into(), ty.into());
            if !type_order.contains(&ty) {
                type_order.push(ty.clone());
            }
            if assignments.insert(cell.clone(), ty).is_some() {
                return Err(Error::DuplicateId(cell));
            }
        }
        Ok(Self {
            assignments,
            type_order,
        })
    }

    pub fn from_tsv_str(source: &str, text: &str) -> Result<Self> {
        let table = Table::parse(source, text)?;
        table.expect_shape("id")?;
        if table.header.len() != 2 {
            return Err(table.error(1, "labels header must be `id<TAB>cell_type`"));
        }
        Self::from_pairs(
            table
                .rows
                .iter()
                .map(|(_, cells)| (cells[0].clone(), cells[1].clone())),
        )
    }

    pub fn label(&self, cell: &str) -> Option<&str> {
        self.assignments.get(cell).map(String::as_str)
    }

    pub fn type_order(&self) -> &[String] {
        &self.type_order
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Type index (into `type_order`) for every row of `matrix`.
    pub fn type_indices(&self, matrix: &ExpressionMatrix) -> Result<Vec<usize>> {
        let position: HashMap<&str, usize> = self
            .type_order
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        matrix
            .row_ids()
            .iter()
            .map(|id| {
                self.label(id)
                    .map(|t| position[t])
                    .ok_or_else(|| Error::MissingLabel(id.clone()))
            })
            .collect()
    }

    pub fn to_tsv_string(&self) -> String {
        let mut out = String::from("id\tcell_type\n");
        for (cell, ty) in &self.assignments {
            out.push_str(&format!("{cell}\t{ty}\n"));
        }
        out
    }
}

pub fn load_labels(path: &Path) -> Result<CellTypeLabels> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CellTypeLabels::from_tsv_str(&path.display().to_string(), &text)
}

/// Row-scales each nonzero row to sum to `target_sum`, then applies `ln(1+x)`.
pub fn normalize_log1p(x: &ExpressionMatrix, target_sum: f64) -> Result<ExpressionMatrix> {
    if !(target_sum > 0.0 && target_sum.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target_sum must be positive, got {target_sum}"
        )));
    }
    let mut values = x.values.clone();
    for mut row in values.rows_mut() {
        let total: f64 = row.sum();
        if total > 0.0 {
            let scale = target_sum / total;
            row.mapv_inplace(|v| (v * scale).ln_1p());
        }
    }
    ExpressionMatrix::new(x.row_ids.clone(), x.gene_names.clone(), values)
}

/// Marker genes per cell type plus their deduplicated union.
#[derive(Debug, Clone, PartialEq)]
pub struct GenePanel {
    pub genes: Vec<String>,
    pub per_type_markers: IndexMap<String, Vec<String>>,
    /// Set when `top_k` exceeded the gene count and every gene was taken.
    pub truncated: bool,
}

/// One-vs-rest marker selection: genes ranked by
/// `mean(in type) - mean(rest)`, ties broken by gene name.
pub fn select_marker_genes(
    sc: &ExpressionMatrix,
    labels: &CellTypeLabels,
    top_k: usize,
) -> Result<GenePanel> {
    if top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be positive".into()));
    }
    let types = labels.type_indices(sc)?;
    let n_types = labels.type_order().len();
    let n_genes = sc.n_genes();

    let mut counts = vec![0usize; n_types];
    let mut sums = Array2::<f64>::zeros((n_types, n_genes));
    for (row, &t) in sc.values.rows().into_iter().zip(&types) {
        counts[t] += 1;
        sums.row_mut(t).scaled_add(1.0, &row);
    }
    if let Some(t) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyCellType(labels.type_order()[t].clone()));
    }
    let total = sums.sum_axis(Axis(0));
    let n_cells = sc.n_rows();

    let truncated = top_k > n_genes;
    let k = top_k.min(n_genes);
    let mut per_type_markers = IndexMap::new();
    for (t, name) in labels.type_order().iter().enumerate() {
        let n_in = counts[t] as f64;
        let n_out = (n_cells - counts[t]) as f64;
        let mut scored: Vec<(f64, &String)> = (0..n_genes)
            .map(|g| {
                let mean_in = sums[[t, g]] / n_in;
                let mean_out = if n_out > 0.0 {
                    (total[g] - sums[[t, g]]) / n_out
                } else {
                    0.0
                };
                (mean_in - mean_out, &sc.gene_names[g])
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        per_type_markers.insert(
            name.clone(),
            scored[..k].iter().map(|(_, g)| (*g).clone()).collect::<Vec<_>>(),
        );
    }

    let mut seen = HashSet::new();
    let genes = per_type_markers
        .values()
        .flatten()
        .filter(|g| seen.insert(g.as_str()))
        .cloned()
        .collect();
    Ok(GenePanel {
        genes,
        per_type_markers,
        truncated,
    })
}

/// Restricts both matrices to their shared genes in lexicographic order.
pub fn align_genes(
    a: &ExpressionMatrix,
    b: &ExpressionMatrix,
) -> Result<(ExpressionMatrix, ExpressionMatrix)> {
    let in_b: HashSet<&str> = b.gene_names.iter().map(String::as_str).collect();
    let shared: Vec<String> = a
        .gene_names
        .iter()
        .filter(|g| in_b.contains(g.as_str()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .cloned()
        .collect();
    if shared.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok((a.select_genes(&shared)?, b.select_genes(&shared)?))
}

/// Fraction of entries that are exactly zero.
pub fn dropout_rate(x: &ExpressionMatrix) -> Result<f64> {
    let n = x.values.len();
    if n == 0 {
        return Err(Error::InvalidArgument("dropout rate of an empty matrix".into()));
    }
    let zeros = x.values.iter().filter(|v| **v == 0.0).count();
    Ok(zeros as f64 / n as f64)
}
