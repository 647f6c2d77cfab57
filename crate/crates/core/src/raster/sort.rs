/// Stable ascending permutation of `depths`; equal depths keep their input order.
pub fn depth_sort(depths: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..depths.len()).collect();
    order.sort_by(|&a, &b| depths[a].total_cmp(&depths[b]));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sorts_ascending() {
        assert_eq!(depth_sort(&[3.0, 1.0, 2.0]), vec![1, 2, 0]);
    }

    #[test]
    fn ties_keep_input_order() {
        assert_eq!(depth_sort(&[2.0, 1.0, 2.0, 1.0, 2.0]), vec![1, 3, 0, 2, 4]);
        assert_eq!(depth_sort(&[5.0; 4]), vec![0, 1, 2, 3]);
    }

    proptest! {
        #[test]
        fn composes_with_inverse_to_identity(depths in proptest::collection::vec(0.01f64..100.0, 0..64)) {
            let order = depth_sort(&depths);
            let mut inverse = vec![0; order.len()];
            for (rank, &idx) in order.iter().enumerate() {
                inverse[idx] = rank;
            }
            for (i, &rank) in inverse.iter().enumerate() {
                prop_assert_eq!(order[rank], i);
            }
            prop_assert!(order.windows(2).all(|w| depths[w[0]] <= depths[w[1]]));
        }
    }
}
