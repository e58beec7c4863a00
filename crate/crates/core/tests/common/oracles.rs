use std::collections::{HashMap, HashSet, VecDeque};

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Minimal number of block moves plus edit distance, by breadth-first search
/// over every reordering reachable by moving blocks that occur in the
/// reference.
pub fn exhaustive_ter_edits(hyp: &[String], reference: &[String]) -> usize {
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(hyp.to_vec());
    queue.push_back((hyp.to_vec(), 0usize));
    let mut best = usize::MAX;
    while let Some((cur, shifts)) = queue.pop_front() {
        if shifts >= best {
            continue;
        }
        best = best.min(shifts + naive_levenshtein(&cur, reference));
        let n = cur.len();
        for start in 0..n {
            for end in start + 1..=n {
                let block = &cur[start..end];
                if !reference.windows(block.len()).any(|w| w == block) {
                    continue;
                }
                let rest: Vec<String> = cur[..start].iter().chain(&cur[end..]).cloned().collect();
                for dest in 0..=rest.len() {
                    let mut next = rest[..dest].to_vec();
                    next.extend_from_slice(block);
                    next.extend_from_slice(&rest[dest..]);
                    if seen.insert(next.clone()) {
                        queue.push_back((next, shifts + 1));
                    }
                }
            }
        }
    }
    best
}

/// Recursive edit distance with memoization.
pub fn naive_levenshtein(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        if let Some(&v) = memo.get(&(a.len(), b.len())) {
            return v;
        }
        let sub = go(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
        let del = go(&a[1..], b, memo) + 1;
        let ins = go(a, &b[1..], memo) + 1;
        let v = sub.min(del).min(ins);
        memo.insert((a.len(), b.len()), v);
        v
    }
    go(a, b, &mut HashMap::new())
}


/// Longest common subsequence length by enumerating every subsequence of
/// the shorter side.
pub fn brute_force_lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 16, "brute force is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let count = mask.count_ones() as usize;
        if count <= best {
            continue;
        }
        let picked: Vec<&T> = (0..short.len()).filter(|i| mask >> i & 1 == 1).map(|i| &short[i]).collect();
        let mut it = long.iter();
        if picked.iter().all(|p| it.any(|x| x == *p)) {
            best = count;
        }
    }
    best
}

/// Edit distance allowing only insertions and deletions, by quadratic DP.
pub fn indel_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            d[i][j] = if a[i - 1] == b[j - 1] {
                d[i - 1][j - 1]
            } else {
                1 + d[i - 1][j].min(d[i][j - 1])
            };
        }
    }
    d[a.len()][b.len()]
}

pub fn random_sentence<R: rand::Rng>(rng: &mut R, vocab: usize, min: usize, max: usize) -> Vec<String> {
    let len = rng.gen_range(min..=max);
    (0..len).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect()
}

/// Adjusted mutual information (arithmetic-mean normalization) between two
/// labelings of the same items.
pub fn adjusted_mutual_info(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ra: HashMap<usize, usize> = HashMap::new();
    let mut rb: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let nf = n as f64;
    let entropy = |m: &HashMap<usize, usize>| -m.values().map(|&c| c as f64 / nf * (c as f64 / nf).ln()).sum::<f64>();
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let c = c as f64;
            c / nf * (nf * c / (ra[&x] as f64 * rb[&y] as f64)).ln()
        })
        .sum();
    let mut lnfact = vec![0.0f64; n + 1];
    for i in 1..=n {
        lnfact[i] = lnfact[i - 1] + (i as f64).ln();
    }
    let mut emi = 0.0;
    for &ai in ra.values() {
        for &bj in rb.values() {
            let lo = (ai + bj).saturating_sub(n).max(1);
            for k in lo..=ai.min(bj) {
                let kf = k as f64;
                let term = kf / nf * (nf * kf / (ai as f64 * bj as f64)).ln();
                let ln_p = lnfact[ai] + lnfact[bj] + lnfact[n - ai] + lnfact[n - bj]
                    - lnfact[n]
                    - lnfact[k]
                    - lnfact[ai - k]
                    - lnfact[bj - k]
                    - lnfact[n + k - ai - bj];
                emi += term * ln_p.exp();
            }
        }
    }
    let mean_h = (entropy(&ra) + entropy(&rb)) / 2.0;
    if (mean_h - emi).abs() < 1e-15 {
        return 1.0;
    }
    (mi - emi) / (mean_h - emi)
}
