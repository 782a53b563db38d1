use crate::numerics::Tensor;

/// Symmetrically normalised KNN adjacency with self-loops,
/// `D^{-1/2}(A + I)D^{-1/2}`, where `A[i][j] = 1` when either row is among
/// the other's `k` nearest (Euclidean) neighbours. Neighbour ties go to the
/// lower row index; `k` is clamped to `rows − 1`.
pub fn knn_adjacency(x: &Tensor, k: usize) -> Tensor {
    let n = x.rows();
    let mut a = Tensor::identity(n);
    if n <= 1 {
        return a;
    }
    let k = k.clamp(1, n - 1);
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2: f64 = x.row_slice(i).iter().zip(x.row_slice(j)).map(|(p, q)| (p - q) * (p - q)).sum();
                (d2, j)
            })
            .collect();
        others.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        for &(_, j) in others.iter().take(k) {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row_slice(i).iter().sum::<f64>()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j);
            if v != 0.0 {
                a.set(i, j, v / (deg[i] * deg[j]).sqrt());
            }
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows_fully_connected() {
        let x = Tensor::matrix(2, 2, vec![0.0, 0.0, 3.0, 1.0]).unwrap();
        let a = knn_adjacency(&x, 1);
        for &v in a.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn single_row_is_one() {
        let x = Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(knn_adjacency(&x, 5).data(), &[1.0]);
    }

    #[test]
    fn three_points_by_hand() {
        // 0 at 0, 1 at 1, 2 at 5 on a line; k = 1:
        // knn(0)=1, knn(1)=0, knn(2)=1 → edges {0-1, 1-2}
        // A+I rows: [1,1,0], [1,1,1], [0,1,1]; degrees 2, 3, 2
        let x = Tensor::matrix(3, 1, vec![0.0, 1.0, 5.0]).unwrap();
        let a = knn_adjacency(&x, 1);
        let s6 = 1.0 / 6f64.sqrt();
        let expected = [0.5, s6, 0.0, s6, 1.0 / 3.0, s6, 0.0, s6, 0.5];
        for (v, e) in a.data().iter().zip(expected) {
            assert!((v - e).abs() < 1e-15, "{v} vs {e}");
        }
    }

    #[test]
    fn k_is_clamped() {
        let x = Tensor::matrix(3, 1, vec![0.0, 1.0, 5.0]).unwrap();
        assert_eq!(knn_adjacency(&x, 10), knn_adjacency(&x, 2));
    }
}
