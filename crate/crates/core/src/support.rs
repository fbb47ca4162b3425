//! Support-set enumeration helpers.

/// Number of size-`k` subsets of `{0..p}`, saturating at `u128::MAX`.
pub fn binomial(p: usize, k: usize) -> u128 {
    if k > p {
        return 0;
    }
    let k = k.min(p - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((p - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Visits every size-`k` subset of `{0..p}` in lexicographic order.
///
/// The buffer passed to `f` is the current subset, sorted ascending.
pub fn for_each_support<F: FnMut(&[usize])>(p: usize, k: usize, mut f: F) {
    assert!(k <= p, "subset size exceeds ground set");
    if k == 0 {
        f(&[]);
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + p - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(10, 3), 120);
        assert_eq!(binomial(128, 2), 8128);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn enumerates_all_subsets_once() {
        let mut seen = Vec::new();
        for_each_support(5, 2, |j| seen.push(j.to_vec()));
        assert_eq!(seen.len() as u128, binomial(5, 2));
        let mut sorted = seen.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), seen.len());
        for j in &seen {
            assert!(j[0] < j[1] && j[1] < 5);
        }
    }
}
