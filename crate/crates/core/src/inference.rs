//! Query embedding, exact k-nearest-neighbor ranking and placement of the
//! query bubble in the final projection frame.

use std::cmp::Ordering;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_ppm, write_ppm, Image, LabeledDataset};
use crate::error::{Error, Result};
use crate::fingerprint;
use crate::losses::euclidean_distance;
use crate::matrix::Matrix;
use crate::net::EmbeddingNet;
use crate::projection::ProjectionFrame;
use crate::trainer::embed_dataset;

pub const DEFAULT_K: usize = 5;
/// Neighbors interpolated when placing the query bubble.
pub const PLACEMENT_NEIGHBORS: usize = 3;
const PLACEMENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub format_version: u32,
    pub dataset_fingerprint: String,
    pub query_id: String,
    /// The query image as base64 PPM, so the file is self-contained.
    pub query_image: String,
    pub query_embedding: Vec<f64>,
    pub k: usize,
    pub query_coords_2d: [f64; 2],
    pub radius_2d: f64,
    pub neighbors: Vec<Neighbor>,
}

impl InferenceResult {
    pub fn fingerprint(&self) -> Result<u64> {
        fingerprint::from_hex(&self.dataset_fingerprint)
            .ok_or_else(|| Error::Config("malformed dataset_fingerprint".into()))
    }

    /// Decodes the embedded query image; its id is `query_id`.
    pub fn query(&self) -> Result<Image> {
        let bytes = BASE64
            .decode(&self.query_image)
            .map_err(|e| Error::Config(format!("query_image: {e}")))?;
        let mut img = read_ppm(&bytes)?;
        img.id = self.query_id.clone();
        Ok(img)
    }
}

pub fn embed_query(net: &EmbeddingNet, img: &Image) -> Result<Vec<f64>> {
    Ok(net.embed(&[img])?.row(0).to_vec())
}

/// `(distance, row)` for every gallery row.
fn distances(q: &[f64], gallery: &Matrix) -> Result<Vec<(f64, usize)>> {
    if gallery.rows() == 0 {
        return Err(Error::Dataset("empty gallery".into()));
    }
    gallery
        .iter_rows()
        .enumerate()
        .map(|(i, row)| Ok((euclidean_distance(q, row)?, i)))
        .collect()
}

/// Smallest `k` entries under `cmp`, sorted.
fn smallest<T>(mut all: Vec<T>, k: usize, cmp: impl Fn(&T, &T) -> Ordering) -> Vec<T> {
    let k = k.min(all.len());
    if k < all.len() {
        all.select_nth_unstable_by(k, &cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    all
}

/// The `min(k, N)` closest gallery rows, ascending by distance, ties by id.
pub fn nearest_neighbors<S: AsRef<str>>(
    q: &[f64],
    gallery: &Matrix,
    ids: &[S],
    k: usize,
) -> Result<Vec<Neighbor>> {
    if ids.len() != gallery.rows() {
        return Err(Error::Shape(format!(
            "{} ids for {} gallery rows",
            ids.len(),
            gallery.rows()
        )));
    }
    if k == 0 {
        return Err(Error::Config("k must be ≥ 1".into()));
    }
    let ranked = smallest(distances(q, gallery)?, k, |a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| ids[a.1].as_ref().cmp(ids[b.1].as_ref()))
    });
    Ok(ranked
        .into_iter()
        .map(|(distance, i)| Neighbor {
            id: ids[i].as_ref().to_owned(),
            distance,
        })
        .collect())
}

/// Inverse-distance weighted mean of the frame coordinates of the three
/// nearest gallery rows (ties by row order), weights `1 / (d + 1e-9)`.
pub fn place_query_2d(q: &[f64], snapshot: &Matrix, frame: &ProjectionFrame) -> Result<[f64; 2]> {
    if snapshot.rows() != frame.coords.rows() {
        return Err(Error::Shape(format!(
            "snapshot has {} rows, frame has {}",
            snapshot.rows(),
            frame.coords.rows()
        )));
    }
    let near = smallest(distances(q, snapshot)?, PLACEMENT_NEIGHBORS, |a, b| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    });
    let mut acc = [0.0; 2];
    let mut total = 0.0;
    for (d, i) in near {
        let w = 1.0 / (d + PLACEMENT_EPS);
        acc[0] += w * frame.coords.get(i, 0);
        acc[1] += w * frame.coords.get(i, 1);
        total += w;
    }
    Ok([acc[0] / total, acc[1] / total])
}

/// Ranks the gallery against `query`, places the query bubble in the last
/// frame and sets the radius to the 2D distance of the k-th neighbor.
pub fn build_inference(
    net: &EmbeddingNet,
    data: &LabeledDataset,
    frames: &[ProjectionFrame],
    query: &Image,
    k: usize,
) -> Result<InferenceResult> {
    let frame = frames
        .last()
        .ok_or_else(|| Error::Config("no projection frames".into()))?;
    let gallery = embed_dataset(net, data)?;
    let q = embed_query(net, query)?;
    let ids = data.ids();
    let neighbors = nearest_neighbors(&q, &gallery, &ids, k)?;
    let coords = place_query_2d(&q, &gallery, frame)?;
    let radius_2d = radius_for(&neighbors, data, frame, coords)?;
    Ok(InferenceResult {
        format_version: 1,
        dataset_fingerprint: fingerprint::to_hex(data.fingerprint()),
        query_id: if query.id.is_empty() {
            "query".into()
        } else {
            query.id.clone()
        },
        query_image: BASE64.encode(write_ppm(query)),
        query_embedding: q,
        k,
        query_coords_2d: coords,
        radius_2d,
        neighbors,
    })
}

/// 2D distance from `center` to the frame position of the last neighbor.
pub fn radius_for(
    neighbors: &[Neighbor],
    data: &LabeledDataset,
    frame: &ProjectionFrame,
    center: [f64; 2],
) -> Result<f64> {
    let last = neighbors
        .last()
        .ok_or_else(|| Error::Config("no neighbors".into()))?;
    let i = data
        .index_of(&last.id)
        .ok_or_else(|| Error::Dataset(format!("unknown neighbor id {}", last.id)))?;
    euclidean_distance(&center, frame.coords.row(i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn frame(rows: &[[f64; 2]]) -> ProjectionFrame {
        ProjectionFrame {
            epoch: 0,
            kl: 0.0,
            coords: Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
                .unwrap(),
        }
    }

    #[test]
    fn exact_match_ranks_first() {
        let g = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![3.0, 0.0]]).unwrap();
        let n = nearest_neighbors(&[1.0, 1.0], &g, &["a", "b", "c"], 2).unwrap();
        assert_eq!(
            n[0],
            Neighbor {
                id: "b".into(),
                distance: 0.0
            }
        );
        assert_eq!(n[1].id, "a");
    }

    #[test]
    fn k_clamps_to_gallery() {
        let g = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(
            nearest_neighbors(&[0.5], &g, &["a", "b"], 10)
                .unwrap()
                .len(),
            2
        );
        assert!(nearest_neighbors(&[0.5], &Matrix::zeros(0, 1), &[] as &[&str], 1).is_err());
        assert!(nearest_neighbors(&[0.5], &g, &["a", "b"], 0).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let g = Matrix::from_rows(&[vec![1.0], vec![-1.0], vec![1.0]]).unwrap();
        let n = nearest_neighbors(&[0.0], &g, &["z", "m", "a"], 3).unwrap();
        let ids: Vec<_> = n.iter().map(|x| x.id.as_str()).collect();
        assert_eq!(ids, ["a", "m", "z"]);
    }

    #[test]
    fn matches_brute_force() {
        for seed in 0..100u64 {
            let mut r = rng::seeded(seed);
            let n = 1 + rng::index(&mut r, 64);
            let d = 1 + rng::index(&mut r, 8);
            let k = 1 + rng::index(&mut r, 70);
            // coarse grid so exact ties occur
            let mut v = || rng::index(&mut r, 5) as f64;
            let g = Matrix::from_vec(n, d, (0..n * d).map(|_| v()).collect()).unwrap();
            let q: Vec<f64> = (0..d).map(|_| v()).collect();
            let ids: Vec<String> = (0..n).map(|i| format!("id{:02}", (i * 37) % 101)).collect();

            let mut oracle: Vec<(f64, String)> = (0..n)
                .map(|i| {
                    let s: f64 = g
                        .row(i)
                        .iter()
                        .zip(&q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (s.sqrt(), ids[i].clone())
                })
                .collect();
            oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
            oracle.truncate(k);

            let got = nearest_neighbors(&q, &g, &ids, k).unwrap();
            let got: Vec<(f64, String)> = got.into_iter().map(|x| (x.distance, x.id)).collect();
            assert_eq!(got, oracle, "seed {seed}");
        }
    }

    #[test]
    fn placement_coincident_query() {
        let snap = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![5.0, 0.0],
            vec![0.0, 5.0],
            vec![9.0, 9.0],
        ])
        .unwrap();
        let f = frame(&[[0.1, 0.2], [0.9, -0.4], [-0.5, 0.5], [1.0, 1.0]]);
        let p = place_query_2d(&[5.0, 0.0], &snap, &f).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.4).abs() < 1e-6);
    }

    #[test]
    fn placement_equidistant_pair() {
        // items 0 and 1 at distance 1, item 2 at distance 100
        let snap = Matrix::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0], vec![100.0, 0.0]]).unwrap();
        let f = frame(&[[-0.5, 0.0], [0.5, 0.4], [0.0, -1.0]]);
        let p = place_query_2d(&[0.0, 0.0], &snap, &f).unwrap();
        let (w1, w3) = (1.0 / (1.0 + 1e-9), 1.0 / (100.0 + 1e-9));
        let total = 2.0 * w1 + w3;
        let ex = (w1 * -0.5 + w1 * 0.5 + w3 * 0.0) / total;
        let ey = (w1 * 0.0 + w1 * 0.4 - w3) / total;
        assert!((p[0] - ex).abs() < 1e-12 && (p[1] - ey).abs() < 1e-12);
        assert!(p[0].abs() < 1e-2 && (p[1] - 0.2).abs() < 1e-2);
    }

    #[test]
    fn placement_in_convex_hull() {
        let mut r = rng::seeded(5);
        for _ in 0..50 {
            let snap =
                Matrix::from_vec(10, 3, (0..30).map(|_| rng::gaussian(&mut r, 1.0)).collect())
                    .unwrap();
            let f = frame(
                &(0..10)
                    .map(|_| [rng::gaussian(&mut r, 1.0), rng::gaussian(&mut r, 1.0)])
                    .collect::<Vec<_>>(),
            );
            let q: Vec<f64> = (0..3).map(|_| rng::gaussian(&mut r, 1.0)).collect();
            let p = place_query_2d(&q, &snap, &f).unwrap();
            let ids: Vec<String> = (0..10).map(|i| format!("{i:02}")).collect();
            let near = nearest_neighbors(&q, &snap, &ids, 3).unwrap();
            let idx: Vec<usize> = near.iter().map(|n| n.id.parse().unwrap()).collect();
            // barycentric sign test against the triangle
            let v = |i: usize| f.coords.row(idx[i]);
            let cross = |a: &[f64], b: &[f64], c: [f64; 2]| {
                (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            };
            let s = [
                cross(v(0), v(1), p),
                cross(v(1), v(2), p),
                cross(v(2), v(0), p),
            ];
            assert!(s.iter().all(|&x| x >= -1e-12) || s.iter().all(|&x| x <= 1e-12));
        }
    }

    #[test]
    fn placement_shape_mismatch() {
        let snap = Matrix::zeros(3, 2);
        assert!(place_query_2d(&[0.0, 0.0], &snap, &frame(&[[0.0, 0.0]])).is_err());
    }
}
