use nalgebra::DMatrix;

/// Smallest `|K_m|` entry, relative to the largest, for which the next suffix
/// product is recovered from the previous one by elementwise division.
const RATIO_FLOOR: f64 = 1e-3;

enum State {
    /// Holds `M_{j−1}`; `M_j = M_{j−1} ⊘ K_j`.
    Ratio(DMatrix<f64>),
    /// Every `M_j` in reverse order, popped as the sweep advances.
    Stored(Vec<DMatrix<f64>>),
    Recompute,
}

/// Suffix Hadamard products `M_j = ⊙_{m>j} K_m` for `j = 0..d−1`, yielded in
/// the order a left sweep consumes them.
///
/// Keeps either every product (within `budget` entries) or one resident
/// product updated by division when every `K_m` stays away from zero, trying
/// them in the order `store_first` selects; otherwise recomputes each product.
pub(crate) struct SuffixProducts<'a> {
    kernel: Box<dyn Fn(usize) -> DMatrix<f64> + 'a>,
    d: usize,
    next: usize,
    state: State,
}

impl<'a> SuffixProducts<'a> {
    /// `entries` is the size of one product; `budget` caps the stored total.
    pub fn new(
        d: usize,
        entries: usize,
        budget: usize,
        store_first: bool,
        kernel: impl Fn(usize) -> DMatrix<f64> + 'a,
    ) -> Self {
        let mut state = State::Recompute;
        let fits = entries.saturating_mul(d.saturating_sub(1)) <= budget;
        if d > 1 && store_first && fits {
            state = State::Stored(Self::all_products(d, &kernel));
        } else if d > 1 {
            let mut acc = kernel(d - 1);
            let mut divisible = true;
            for m in (1..d - 1).rev() {
                let k = kernel(m);
                let (lo, hi) = k
                    .iter()
                    .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
                divisible &= lo > 0.0 && lo >= RATIO_FLOOR * hi;
                acc.component_mul_assign(&k);
            }
            state = if divisible {
                State::Ratio(acc)
            } else if fits {
                drop(acc);
                State::Stored(Self::all_products(d, &kernel))
            } else {
                State::Recompute
            };
        }
        Self {
            kernel: Box::new(kernel),
            d,
            next: 0,
            state,
        }
    }

    fn all_products(d: usize, kernel: &impl Fn(usize) -> DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut m: Vec<DMatrix<f64>> = Vec::with_capacity(d - 1);
        for j in (1..d).rev() {
            let k = kernel(j);
            let next = match m.last() {
                Some(prev) => prev.component_mul(&k),
                None => k,
            };
            m.push(next);
        }
        m
    }

    #[cfg(test)]
    fn mode(&self) -> &'static str {
        match self.state {
            State::Ratio(_) => "ratio",
            State::Stored(_) => "stored",
            State::Recompute => "recompute",
        }
    }
}

impl SuffixProducts<'_> {
    /// Calls `f` on the next product, or returns `None` past the last cut.
    pub fn with_next<R>(&mut self, f: impl FnOnce(&DMatrix<f64>) -> R) -> Option<R> {
        let j = self.next;
        if j + 1 >= self.d {
            return None;
        }
        self.next += 1;
        Some(match &mut self.state {
            State::Ratio(acc) => {
                if j > 0 {
                    acc.component_div_assign(&(self.kernel)(j));
                }
                f(acc)
            }
            State::Stored(m) => f(&m.pop().expect("one per cut")),
            State::Recompute => {
                let mut acc = (self.kernel)(j + 1);
                for m in j + 2..self.d {
                    acc.component_mul_assign(&(self.kernel)(m));
                }
                f(&acc)
            }
        })
    }
}

impl Iterator for SuffixProducts<'_> {
    type Item = DMatrix<f64>;

    fn next(&mut self) -> Option<DMatrix<f64>> {
        self.with_next(|m| m.clone())
    }
}
