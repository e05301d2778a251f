//! Sequential/parallel dispatch for per-pixel loops.
//!
//! Every data-parallel loop in the crate goes through [`Exec`], so results
//! are collected in index order and reductions break ties by index. The
//! output of a computation therefore does not depend on the execution mode
//! or on the number of worker threads.
//!
//! Without the `parallel` feature, [`Exec::Parallel`] runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            #[cfg(not(feature = "parallel"))]
            Exec::Parallel => (0..n).map(f).collect(),
        }
    }

    /// Like [`Exec::map`] but fallible; the error reported is the one with
    /// the lowest index.
    pub fn try_map<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }

    /// Applies `f` to every element of `items` in place.
    pub fn for_each_mut<T, F>(self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
            #[cfg(not(feature = "parallel"))]
            Exec::Parallel => items.iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
        }
    }

    /// Index and value of the maximum of `f` over `0..n`. Ties go to the
    /// lowest index; NaN values never win.
    pub fn argmax<F>(self, n: usize, f: F) -> Option<(usize, f64)>
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        fn better(a: Option<(usize, f64)>, b: Option<(usize, f64)>) -> Option<(usize, f64)> {
            match (a, b) {
                (None, x) | (x, None) => x,
                (Some(x), Some(y)) => {
                    if y.1 > x.1 || (y.1 == x.1 && y.0 < x.0) {
                        Some(y)
                    } else {
                        Some(x)
                    }
                }
            }
        }
        let lift = |i: usize| {
            let v = f(i);
            if v.is_nan() {
                None
            } else {
                Some((i, v))
            }
        };
        match self {
            Exec::Sequential => (0..n).map(lift).fold(None, better),
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(lift).reduce(|| None, better),
            #[cfg(not(feature = "parallel"))]
            Exec::Parallel => (0..n).map(lift).fold(None, better),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        for exec in [Exec::Sequential, Exec::Parallel] {
            let v = exec.map(1000, |i| i * 2);
            assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let vals = [1.0, 3.0, 2.0, 3.0, f64::NAN, 3.0];
        for exec in [Exec::Sequential, Exec::Parallel] {
            assert_eq!(exec.argmax(vals.len(), |i| vals[i]), Some((1, 3.0)));
        }
        assert_eq!(Exec::Parallel.argmax(0, |_| 0.0), None);
    }

    #[test]
    fn try_map_reports_lowest_error() {
        let r: Result<Vec<usize>, usize> =
            Exec::Parallel.try_map(500, |i| if i % 97 == 13 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(13));
    }
}
