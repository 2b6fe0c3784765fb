//! JSON file formats for games and graphs, and the generator tokens accepted
//! wherever a file path is.
//!
//! Game file:
//!
//! ```json
//! {
//!   "N": 2,
//!   "dims": [1, 1],
//!   "blocks": [{"i": 0, "j": 0, "matrix": [[1.0]]}, {"i": 0, "j": 1, "matrix": [[0.5]]}],
//!   "linear": [[0.0], [1.0]],
//!   "box": {"lower": [0.0, null], "upper": [1.0, null]}
//! }
//! ```
//!
//! `blocks` are the cost coefficients `A_ij` (agent `i`'s cost contains
//! `x_iᵀ A_ii x_i + Σ_{j≠i} x_iᵀ A_ij x_j`), `linear` the vectors `b_i`. Box
//! bounds are stacked over all agents; `null` means unbounded and `"box": null`
//! leaves every coordinate free.
//!
//! Graph file: `{"N": 3, "edges": [[0, 1], [1, 2]]}` with 0-indexed nodes and an
//! optional `"weights"` N×N matrix used by the degree-variant coupling.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NepError, Result};
use crate::game::{offsets_of, BoxSet, Game, QuadraticGame};
use crate::harness::generate_connectivity_game;
use crate::network::Graph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub i: usize,
    pub j: usize,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    #[serde(rename = "N")]
    pub n_agents: usize,
    pub dims: Vec<usize>,
    pub blocks: Vec<BlockSpec>,
    pub linear: Vec<Vec<f64>>,
    #[serde(rename = "box", default)]
    pub bounds: Option<BoxSpec>,
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(NepError::Input("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl GameFile {
    pub fn into_game(self) -> Result<QuadraticGame> {
        if self.dims.len() != self.n_agents {
            return Err(NepError::Dimension {
                what: "dims entries",
                expected: self.n_agents,
                got: self.dims.len(),
            });
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| Ok((b.i, b.j, rows_to_matrix(&b.matrix)?)))
            .collect::<Result<Vec<_>>>()?;
        let linear: Vec<DVector<f64>> = self
            .linear
            .iter()
            .map(|b| DVector::from_vec(b.clone()))
            .collect();
        let (offsets, n) = offsets_of(&self.dims);
        let sets = match &self.bounds {
            None => self.dims.iter().map(|d| BoxSet::unbounded(*d)).collect(),
            Some(b) => {
                if b.lower.len() != n || b.upper.len() != n {
                    return Err(NepError::Dimension {
                        what: "box bounds",
                        expected: n,
                        got: b.lower.len().min(b.upper.len()),
                    });
                }
                offsets
                    .iter()
                    .zip(&self.dims)
                    .map(|(&o, &d)| {
                        BoxSet::new(
                            b.lower[o..o + d]
                                .iter()
                                .map(|v| v.unwrap_or(f64::NEG_INFINITY))
                                .collect(),
                            b.upper[o..o + d]
                                .iter()
                                .map(|v| v.unwrap_or(f64::INFINITY))
                                .collect(),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        QuadraticGame::from_blocks(self.dims, &blocks, &linear, sets)
    }

    pub fn from_game(game: &QuadraticGame) -> Self {
        let dims = game.dims().to_vec();
        let offsets = game.offsets();
        let cost = game.cost_matrix();
        let mut blocks = Vec::new();
        for (i, (&oi, &di)) in offsets.iter().zip(&dims).enumerate() {
            for (j, (&oj, &dj)) in offsets.iter().zip(&dims).enumerate() {
                let m = cost.view((oi, oj), (di, dj)).into_owned();
                if i == j || m.iter().any(|v| *v != 0.0) {
                    blocks.push(BlockSpec {
                        i,
                        j,
                        matrix: matrix_to_rows(&m),
                    });
                }
            }
        }
        let linear = offsets
            .iter()
            .zip(&dims)
            .map(|(&o, &d)| game.offset().rows(o, d).iter().copied().collect())
            .collect();
        let bounds = (!game.is_unconstrained()).then(|| {
            let finite = |v: f64| v.is_finite().then_some(v);
            BoxSpec {
                lower: game
                    .sets()
                    .iter()
                    .flat_map(|s| s.lower().iter().map(|v| finite(*v)))
                    .collect(),
                upper: game
                    .sets()
                    .iter()
                    .flat_map(|s| s.upper().iter().map(|v| finite(*v)))
                    .collect(),
            }
        });
        Self {
            n_agents: dims.len(),
            dims,
            blocks,
            linear,
            bounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    #[serde(rename = "N")]
    pub n_nodes: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
}

impl GraphFile {
    pub fn graph(&self) -> Result<Graph> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        Graph::connected(self.n_nodes, &edges)
    }

    pub fn weight_matrix(&self) -> Result<Option<DMatrix<f64>>> {
        self.weights.as_deref().map(rows_to_matrix).transpose()
    }

    pub fn from_graph(g: &Graph) -> Self {
        Self {
            n_nodes: g.num_nodes(),
            edges: g.edges().iter().map(|&(i, j)| [i, j]).collect(),
            weights: None,
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn parse_field<T: std::str::FromStr>(token: &str, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| NepError::Input(format!("cannot parse `{field}` in `{token}`")))
}

/// A game argument: `connectivity:<N>:<seed>[:box]` or a path to a game file.
pub fn load_game(source: &str) -> Result<QuadraticGame> {
    if let Some(rest) = source.strip_prefix("connectivity:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let boxed = match parts.as_slice() {
            [_, _] => false,
            [_, _, "box"] => true,
            _ => {
                return Err(NepError::Input(format!(
                    "expected connectivity:<N>:<seed>[:box], got `{source}`"
                )))
            }
        };
        let n = parse_field(source, parts[0])?;
        let seed = parse_field(source, parts[1])?;
        return generate_connectivity_game(n, seed, boxed);
    }
    read_json::<GameFile>(Path::new(source))?.into_game()
}

/// A graph argument: `er:<N>:<p>:<seed>`, `path:<N>`, `cycle:<N>`,
/// `complete:<N>`, `star:<N>` or a path to a graph file. Returns the graph and
/// any explicit weights carried by the file.
pub fn load_graph(source: &str) -> Result<(Graph, Option<DMatrix<f64>>)> {
    let parts: Vec<&str> = source.split(':').collect();
    let graph = match parts.as_slice() {
        ["er", n, p, seed] => Graph::erdos_renyi(
            parse_field(source, n)?,
            parse_field(source, p)?,
            parse_field(source, seed)?,
        )?,
        ["path", n] => Graph::path(parse_field(source, n)?)?,
        ["cycle", n] => Graph::cycle(parse_field(source, n)?)?,
        ["complete", n] => Graph::complete(parse_field(source, n)?)?,
        ["star", n] => Graph::star(parse_field(source, n)?)?,
        _ => {
            let file: GraphFile = read_json(Path::new(source))?;
            return Ok((file.graph()?, file.weight_matrix()?));
        }
    };
    Ok((graph, None))
}
