//! Row-summing loops of the recommendation scan, compiled twice: once for
//! the baseline target and once with AVX2 enabled, picked at run time.
//! Both versions perform the same IEEE operations in the same order (no
//! fused multiply-add), so results do not depend on the CPU.

/// `acc[a] += row[a]` over each dense row of `counts` listed in `rows`.
#[inline]
pub(crate) fn sum_rows_i32(counts: &[u32], n: usize, rows: &[u32], acc: &mut [i32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            unsafe { sum_rows_i32_avx2(counts, n, rows, acc) };
            return;
        }
    }
    sum_rows_i32_generic(counts, n, rows, acc);
}

#[inline(always)]
fn sum_rows_i32_generic(counts: &[u32], n: usize, rows: &[u32], acc: &mut [i32]) {
    let acc = &mut acc[..n];
    for &r in rows {
        let row = &counts[r as usize * n..(r as usize + 1) * n];
        for (a, &c) in acc.iter_mut().zip(row) {
            *a += c as i32;
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn sum_rows_i32_avx2(counts: &[u32], n: usize, rows: &[u32], acc: &mut [i32]) {
    sum_rows_i32_generic(counts, n, rows, acc);
}

/// `acc[a] += coef * row[a]` for one dense row.
#[inline]
pub(crate) fn add_scaled_row(row: &[u32], coef: f64, acc: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            unsafe { add_scaled_row_avx2(row, coef, acc) };
            return;
        }
    }
    add_scaled_row_generic(row, coef, acc);
}

#[inline(always)]
fn add_scaled_row_generic(row: &[u32], coef: f64, acc: &mut [f64]) {
    // counts never exceed the user count, so the i32 cast is exact and lets
    // the conversion vectorise
    for (a, &c) in acc.iter_mut().zip(row) {
        *a += coef * f64::from(c as i32);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn add_scaled_row_avx2(row: &[u32], coef: f64, acc: &mut [f64]) {
    add_scaled_row_generic(row, coef, acc);
}

/// `acc[a] += coef * row[a]` for an `f64` row.
#[inline]
pub(crate) fn add_scaled_row_f64(row: &[f64], coef: f64, acc: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            unsafe { add_scaled_row_f64_avx2(row, coef, acc) };
            return;
        }
    }
    add_scaled_row_f64_generic(row, coef, acc);
}

#[inline(always)]
fn add_scaled_row_f64_generic(row: &[f64], coef: f64, acc: &mut [f64]) {
    for (a, &v) in acc.iter_mut().zip(row) {
        *a += coef * v;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn add_scaled_row_f64_avx2(row: &[f64], coef: f64, acc: &mut [f64]) {
    add_scaled_row_f64_generic(row, coef, acc);
}

/// Maximum of `v` and how many entries equal it.
#[inline]
pub(crate) fn max_and_count_i32(v: &[i32]) -> (i32, usize) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            return unsafe { max_and_count_i32_avx2(v) };
        }
    }
    max_and_count_i32_generic(v)
}

#[inline(always)]
fn max_and_count_i32_generic(v: &[i32]) -> (i32, usize) {
    let best = v.iter().copied().fold(i32::MIN, i32::max);
    (best, v.iter().filter(|&&c| c == best).count())
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn max_and_count_i32_avx2(v: &[i32]) -> (i32, usize) {
    max_and_count_i32_generic(v)
}

/// Maximum of `v` (no NaNs) and how many entries equal it.
#[inline]
pub(crate) fn max_and_count_f64(v: &[f64]) -> (f64, usize) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            return unsafe { max_and_count_f64_avx2(v) };
        }
    }
    max_and_count_f64_generic(v)
}

#[inline(always)]
fn max_and_count_f64_generic(v: &[f64]) -> (f64, usize) {
    let best = v
        .iter()
        .fold(f64::NEG_INFINITY, |m, &s| if s > m { s } else { m });
    (best, v.iter().filter(|&&s| s == best).count())
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn max_and_count_f64_avx2(v: &[f64]) -> (f64, usize) {
    max_and_count_f64_generic(v)
}

/// Index of the `rank`-th (0-based) entry equal to `target`.
/// Panics if there are not that many.
pub(crate) fn nth_equal<T: PartialEq + Copy>(v: &[T], target: T, mut rank: usize) -> usize {
    const LANES: usize = 8;
    let mut base = 0;
    for chunk in v.chunks(LANES) {
        let hits = chunk.iter().filter(|&&x| x == target).count();
        if rank < hits {
            for (i, &x) in chunk.iter().enumerate() {
                if x == target {
                    if rank == 0 {
                        return base + i;
                    }
                    rank -= 1;
                }
            }
        }
        rank -= hits;
        base += chunk.len();
    }
    panic!("fewer matches than requested rank");
}
