use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Cohen's kappa between two categorical labelings of the same nodes.
///
/// When chance agreement is total (`p_e = 1`) the coefficient is undefined;
/// 0 is returned and a warning logged.
pub fn kappa_coefficient(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "labelings have {} and {} entries",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Data("kappa of empty labelings".into()));
    }
    let k = a.iter().chain(b).copied().max().unwrap_or(0) + 1;
    let n = a.len() as f64;
    let mut ca = vec![0.0; k];
    let mut cb = vec![0.0; k];
    let mut agree = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        ca[x] += 1.0;
        cb[y] += 1.0;
        if x == y {
            agree += 1.0;
        }
    }
    let p_o = agree / n;
    let p_e: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum::<f64>() / (n * n);
    if (1.0 - p_e).abs() < 1e-15 {
        log::warn!("kappa undefined: chance agreement is 1; returning 0");
        return Ok(0.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Mean and sample standard deviation (`n − 1`); `(NaN, NaN)` when empty.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn mean(values: &[f64]) -> f64 {
    mean_sd(values).0
}

/// Ranks starting at 1 with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation with a two-sided p-value from the
/// t-approximation `t = ρ √((n−2)/(1−ρ²))` on `n − 2` degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} observations", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Data("spearman needs at least 3 observations".into()));
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y));
    if rho.is_nan() {
        return Err(Error::Numeric("spearman of a constant sample".into()));
    }
    let df = (x.len() - 2) as f64;
    if rho.abs() >= 1.0 {
        return Ok((rho.clamp(-1.0, 1.0), 0.0));
    }
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok((rho, 2.0 * dist.sf(t.abs())))
}
