//! Data-parallel helpers.
//!
//! With the `parallel` feature these dispatch to rayon; without it they are
//! ordinary iterator chains. Output order always follows input order, and
//! callers reduce collected results sequentially, so floating-point results do
//! not depend on thread count.
//!
//! [`sequential`] forces the iterator path on the current thread even when
//! rayon is compiled in. The benches use it to compare both paths in one
//! binary.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Run `f` with parallel dispatch disabled on this thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    FORCE_SEQUENTIAL.with(|flag| {
        let prev = flag.replace(true);
        let out = f();
        flag.set(prev);
        out
    })
}

fn forced_sequential() -> bool {
    FORCE_SEQUENTIAL.with(|flag| flag.get())
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !forced_sequential() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !forced_sequential() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Whether calls on this thread will use rayon.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !forced_sequential()
}
