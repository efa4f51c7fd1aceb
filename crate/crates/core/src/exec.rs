//! Sequential / data-parallel dispatch.
//!
//! Every parallel routine in this crate has a sequential twin that produces
//! bit-identical output. `Execution::Parallel` silently degrades to the
//! sequential path when the crate is built without the `parallel` feature.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Fill `out` chunk by chunk; `fill(offset, chunk)` receives the index of
/// the chunk's first element.
pub(crate) fn fill_chunks<T, F>(exec: Execution, out: &mut [T], chunk_len: usize, fill: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| fill(i * chunk_len, chunk));
        return;
    }
    let _ = exec;
    for (i, chunk) in out.chunks_mut(chunk_len).enumerate() {
        fill(i * chunk_len, chunk);
    }
}

/// Order-preserving map over a slice.
pub(crate) fn map_slice<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_fill_matches_across_modes() {
        let mut a = vec![0usize; 1003];
        let mut b = vec![0usize; 1003];
        fill_chunks(Execution::Sequential, &mut a, 64, |off, c| {
            for (i, v) in c.iter_mut().enumerate() {
                *v = (off + i) * 3;
            }
        });
        fill_chunks(Execution::Parallel, &mut b, 64, |off, c| {
            for (i, v) in c.iter_mut().enumerate() {
                *v = (off + i) * 3;
            }
        });
        assert_eq!(a, b);
        assert_eq!(a[1002], 3006);
    }

    #[test]
    fn map_preserves_order() {
        let xs: Vec<u32> = (0..500).collect();
        let ys = map_slice(Execution::Parallel, &xs, |x| x * 2);
        assert_eq!(ys, xs.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
