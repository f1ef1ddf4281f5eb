//! Suffix array construction by prefix doubling with counting sorts.
//!
//! Suffixes compare by raw token value; running off the end of the stream
//! sorts before any token, so a suffix that is a proper prefix of another
//! sorts first. No sentinel is appended.

use crate::Token;

/// Returns the start offsets of all suffixes of `tokens` in lexicographic order.
pub fn build_suffix_array(tokens: &[Token]) -> Vec<u64> {
    let n = tokens.len();
    if n == 0 {
        return Vec::new();
    }
    // Dense ranks from 1; 0 is reserved for "past the end".
    let mut sa: Vec<usize> = (0..n).collect();
    sa.sort_unstable_by_key(|&i| tokens[i]);
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for (k, &i) in sa.iter().enumerate() {
        if k == 0 || tokens[i] != tokens[sa[k - 1]] {
            r += 1;
        }
        rank[i] = r;
    }
    let mut classes = r;
    let mut tmp = vec![0usize; n];
    let mut count = vec![0usize; n + 1];
    let mut next_rank = vec![0usize; n];
    let mut k = 1;
    while classes < n {
        // Order by second key: suffixes with nothing at i+k first, then the
        // current order shifted back by k.
        let mut w = 0;
        for i in n.saturating_sub(k)..n {
            tmp[w] = i;
            w += 1;
        }
        for &p in &sa {
            if p >= k {
                tmp[w] = p - k;
                w += 1;
            }
        }
        // Stable counting sort by first key.
        count.iter_mut().for_each(|c| *c = 0);
        for &i in &tmp {
            count[rank[i]] += 1;
        }
        let mut sum = 0;
        for c in count.iter_mut() {
            let v = *c;
            *c = sum;
            sum += v;
        }
        for &i in &tmp {
            sa[count[rank[i]]] = i;
            count[rank[i]] += 1;
        }
        let second = |i: usize| if i + k < n { rank[i + k] } else { 0 };
        let mut r = 1;
        next_rank[sa[0]] = 1;
        for t in 1..n {
            let (a, b) = (sa[t - 1], sa[t]);
            if rank[a] != rank[b] || second(a) != second(b) {
                r += 1;
            }
            next_rank[b] = r;
        }
        std::mem::swap(&mut rank, &mut next_rank);
        classes = r;
        k *= 2;
    }
    sa.into_iter().map(|i| i as u64).collect()
}
