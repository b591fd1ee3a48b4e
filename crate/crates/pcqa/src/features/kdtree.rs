//! Static 3D kd-tree for exact k-nearest-neighbor queries.
//!
//! Built once per cloud; queries are read-only and safe to run in parallel.
//! Distance ties are broken by ascending point index, which makes query
//! results fully deterministic and lets tests compare member sets against a
//! brute-force scan.

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf { lo: u32, hi: u32 },
    Inner { dim: u8, split: f64, left: u32, right: u32 },
}

pub struct KdTree {
    pts: Vec<[f64; 3]>,
    idx: Vec<u32>,
    nodes: Vec<Node>,
    root: u32,
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Candidate ordering key: non-negative finite floats compare identically by
/// value and by bit pattern, so (bits, index) gives the exact (distance,
/// index) lexicographic order without any float wrapper.
#[inline]
fn key(d2: f64, index: u32) -> (u64, u32) {
    (d2.to_bits(), index)
}

impl KdTree {
    pub fn build(points: &[[f64; 3]]) -> Self {
        assert!(!points.is_empty(), "kd-tree needs at least one point");
        let mut tree = KdTree {
            pts: points.to_vec(),
            idx: (0..points.len() as u32).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
            root: 0,
        };
        tree.root = tree.build_range(0, points.len());
        tree
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    fn build_range(&mut self, lo: usize, hi: usize) -> u32 {
        if hi - lo <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                lo: lo as u32,
                hi: hi as u32,
            });
            return (self.nodes.len() - 1) as u32;
        }
        // Split along the widest axis of this range.
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for &i in &self.idx[lo..hi] {
            let p = &self.pts[i as usize];
            for d in 0..3 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        let mut dim = 0;
        for d in 1..3 {
            if max[d] - min[d] > max[dim] - min[dim] {
                dim = d;
            }
        }
        let mid = lo + (hi - lo) / 2;
        let pts = &self.pts;
        self.idx[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a as usize][dim]
                .total_cmp(&pts[b as usize][dim])
                .then(a.cmp(&b))
        });
        let split = self.pts[self.idx[mid] as usize][dim];
        let left = self.build_range(lo, mid);
        let right = self.build_range(mid, hi);
        self.nodes.push(Node::Inner {
            dim: dim as u8,
            split,
            left,
            right,
        });
        (self.nodes.len() - 1) as u32
    }

    /// The k nearest points to `q`, sorted by (distance, index) ascending.
    /// Requires `k <= len()`. Returns `(squared distance, point index)`.
    pub fn knn(&self, q: &[f64; 3], k: usize) -> Vec<(f64, u32)> {
        assert!(k >= 1 && k <= self.pts.len());
        // Bounded max-heap over (d2 bits, index).
        let mut heap: std::collections::BinaryHeap<(u64, u32)> =
            std::collections::BinaryHeap::with_capacity(k + 1);
        self.search(self.root, q, k, &mut heap);
        let sorted = heap.into_sorted_vec();
        sorted
            .into_iter()
            .map(|(bits, i)| (f64::from_bits(bits), i))
            .collect()
    }

    fn search(
        &self,
        node: u32,
        q: &[f64; 3],
        k: usize,
        heap: &mut std::collections::BinaryHeap<(u64, u32)>,
    ) {
        match &self.nodes[node as usize] {
            Node::Leaf { lo, hi } => {
                for &i in &self.idx[*lo as usize..*hi as usize] {
                    let cand = key(dist2(q, &self.pts[i as usize]), i);
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Inner {
                dim,
                split,
                left,
                right,
            } => {
                let d = *dim as usize;
                let delta = q[d] - split;
                let (near, far) = if delta < 0.0 { (*left, *right) } else { (*right, *left) };
                self.search(near, q, k, heap);
                let plane_d2 = delta * delta;
                // Descend on equality too: the far side can hold an
                // equidistant point with a smaller index.
                let must_visit = heap.len() < k || plane_d2 <= f64::from_bits(heap.peek().unwrap().0);
                if must_visit {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn brute_knn(points: &[[f64; 3]], q: &[f64; 3], k: usize) -> Vec<(f64, u32)> {
        let mut all: Vec<(u64, u32)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| key(dist2(q, p), i as u32))
            .collect();
        all.sort_unstable();
        all.truncate(k);
        all.into_iter()
            .map(|(bits, i)| (f64::from_bits(bits), i))
            .collect()
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in [1usize, 5, 17, 120, 500] {
            let pts: Vec<[f64; 3]> = (0..n)
                .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
                .collect();
            let tree = KdTree::build(&pts);
            for k in [1usize, 2, 10] {
                if k > n {
                    continue;
                }
                for qi in (0..n).step_by((n / 13).max(1)) {
                    let got = tree.knn(&pts[qi], k);
                    let want = brute_knn(&pts, &pts[qi], k);
                    assert_eq!(got, want, "n={n} k={k} qi={qi}");
                }
            }
        }
    }

    #[test]
    fn coincident_points_tie_break_by_index() {
        let pts = vec![[1.0, 1.0, 1.0]; 9];
        let tree = KdTree::build(&pts);
        let got = tree.knn(&pts[4], 3);
        assert_eq!(
            got.iter().map(|&(_, i)| i).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn negative_coordinates_split_correctly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<[f64; 3]> = (0..300)
            .map(|_| {
                [
                    rng.gen_range(-100.0..-1.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(50.0..60.0),
                ]
            })
            .collect();
        let tree = KdTree::build(&pts);
        for qi in [0usize, 77, 299] {
            assert_eq!(tree.knn(&pts[qi], 7), brute_knn(&pts, &pts[qi], 7));
        }
    }
}
