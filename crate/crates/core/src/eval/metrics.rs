use rayon::prelude::*;

use super::pools::EncodedPool;
use crate::embed::{EncodedExample, FeatureVectors};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// True when the positive's score is strictly above every other score.
pub fn is_win(scores: &[f64], positive_index: usize) -> bool {
    let target = scores[positive_index];
    scores
        .iter()
        .enumerate()
        .all(|(i, &s)| i == positive_index || target > s)
}

/// Final-head score of every candidate in a pool.
pub fn pool_scores(model: &ModelParams, pool: &EncodedPool) -> Result<Vec<f64>> {
    let ngram = &model.tables.ngram;
    let user = &model.tables.user;
    if pool.author as usize >= user.rows() {
        return Err(Error::Dimension {
            what: "author index",
            expected: user.rows(),
            actual: pool.author as usize,
        });
    }
    let mut fv = FeatureVectors {
        input: pool.input.embed(ngram),
        context: pool.context.embed(ngram),
        author: user.row(pool.author).to_vec(),
        response: Vec::new(),
    };
    pool.candidates
        .iter()
        .map(|c| {
            fv.response = c.embed(ngram);
            Ok(model.forward(&fv)?.score())
        })
        .collect()
}

/// Number of pools won, evaluated in parallel.
pub fn count_wins(model: &ModelParams, pools: &[EncodedPool]) -> Result<usize> {
    let wins = pools
        .par_iter()
        .map(|p| Ok(is_win(&pool_scores(model, p)?, p.positive_index)))
        .collect::<Result<Vec<bool>>>()?;
    Ok(wins.into_iter().filter(|&w| w).count())
}

pub fn precision_at_1(model: &ModelParams, pools: &[EncodedPool]) -> Result<f64> {
    if pools.is_empty() {
        return Err(Error::Empty("pool list"));
    }
    Ok(count_wins(model, pools)? as f64 / pools.len() as f64)
}

/// P@1 from precomputed (scores, positive index) pairs.
pub fn precision_from_scores(pools: &[(Vec<f64>, usize)]) -> Result<f64> {
    if pools.is_empty() {
        return Err(Error::Empty("pool list"));
    }
    let wins = pools.iter().filter(|(s, i)| is_win(s, *i)).count();
    Ok(wins as f64 / pools.len() as f64)
}

/// Fraction of examples where `score >= 0.5` agrees with the label.
pub fn accuracy_from_scores(scored: &[(f64, bool)]) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::Empty("labeled example set"));
    }
    let right = scored.iter().filter(|&&(s, pos)| (s >= 0.5) == pos).count();
    Ok(right as f64 / scored.len() as f64)
}

pub fn classifier_accuracy(model: &ModelParams, examples: &[EncodedExample]) -> Result<f64> {
    let scored = examples
        .par_iter()
        .map(|e| Ok((model.score(e)?, e.label.is_positive())))
        .collect::<Result<Vec<_>>>()?;
    accuracy_from_scores(&scored)
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension {
            what: "paired series",
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::Undefined("correlation needs at least two pairs".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("a series has zero variance".into()));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

pub const MIN_CORRELATION_POINTS: usize = 5;

/// Pearson r between dev accuracy and test P@1 across checkpoints.
pub fn accuracy_precision_correlation(series: &[(f64, f64)]) -> Result<f64> {
    if series.len() < MIN_CORRELATION_POINTS {
        return Err(Error::Undefined(format!(
            "correlation needs at least {MIN_CORRELATION_POINTS} checkpoints, got {}",
            series.len()
        )));
    }
    let (acc, p1): (Vec<f64>, Vec<f64>) = series.iter().copied().unzip();
    pearson(&acc, &p1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_lose() {
        assert!(is_win(&[0.9, 0.1, 0.2], 0));
        assert!(!is_win(&[0.5, 0.5], 0));
        assert!(!is_win(&[0.1, 0.9], 0));
        assert!(is_win(&[0.3], 0));
    }

    #[test]
    fn precision_counts() {
        let pools = vec![
            (vec![0.9, 0.1], 0),
            (vec![0.2, 0.8], 0),
            (vec![0.7], 0),
            (vec![0.4, 0.4], 1),
        ];
        assert_eq!(precision_from_scores(&pools).unwrap(), 0.5);
        assert!(precision_from_scores(&[]).is_err());
    }

    #[test]
    fn constant_model_on_positives() {
        let scored = vec![(0.9, true); 7];
        assert_eq!(accuracy_from_scores(&scored).unwrap(), 1.0);
        assert_eq!(accuracy_from_scores(&[(0.5, false), (0.49, false)]).unwrap(), 0.5);
        assert!(accuracy_from_scores(&[]).is_err());
    }

    #[test]
    fn pearson_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -0.5 * v).collect();
        assert!((pearson(&x, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &down).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&x, &[1.0; 5]), Err(Error::Undefined(_))));
    }

    #[test]
    fn correlation_needs_five_points() {
        let s = [(0.1, 0.2), (0.2, 0.3), (0.3, 0.5), (0.4, 0.4)];
        assert!(matches!(accuracy_precision_correlation(&s), Err(Error::Undefined(_))));
        let s = [(0.1, 0.2), (0.2, 0.3), (0.3, 0.5), (0.4, 0.4), (0.5, 0.6)];
        assert!(accuracy_precision_correlation(&s).unwrap() > 0.8);
    }
}
