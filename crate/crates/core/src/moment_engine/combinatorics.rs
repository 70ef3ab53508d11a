/// Rising factorial `x (x + 1) ... (x + n - 1)`; `1` for `n = 0`.
pub fn rising_factorial(x: f64, n: u32) -> f64 {
    (0..n).fold(1.0, |acc, i| acc * (x + i as f64))
}

/// Stirling number of the second kind `S(n, i)`: partitions of an `n`-set
/// into `i` nonempty blocks.
pub fn stirling2(n: u32, i: u32) -> u128 {
    if i > n {
        return 0;
    }
    // row[j] holds S(m, j) for the current m
    let mut row = vec![0u128; i as usize + 1];
    row[0] = 1;
    for m in 1..=n as usize {
        for j in (1..=i.min(m as u32) as usize).rev() {
            row[j] = j as u128 * row[j] + row[j - 1];
        }
        row[0] = 0;
    }
    row[i as usize]
}

/// Binomial coefficient as a float. Exact for the small arguments used here.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k as u128 {
        acc = acc * (n as u128 - i) / (i + 1);
    }
    acc as f64
}
