//! Reverse-mode autodiff tape over dynamic-dimension arrays.
//!
//! Ops append nodes to the tape; `Tape::backward` walks the nodes in reverse
//! id order (construction order is topological by design) and accumulates
//! parent gradients. Only leaf gradients survive the walk; interior gradients
//! are dropped as soon as they have been consumed. Subgraphs that cannot reach
//! a differentiable leaf skip their backward closures entirely.

use crate::real::Real;
use ndarray::{ArrayD, IxDyn};
use std::cell::RefCell;
use std::rc::Rc;

pub type Arr<F> = ArrayD<F>;

/// Backward closure: upstream gradient + per-parent need mask -> per-parent
/// gradients (None where not needed).
pub type BackFn<F> = Box<dyn Fn(&Arr<F>, &[bool]) -> Vec<Option<Arr<F>>>>;

pub(crate) struct Node<F: Real> {
    pub value: Rc<Arr<F>>,
    pub parents: Vec<usize>,
    pub requires: bool,
    pub backward: Option<BackFn<F>>,
}

pub struct Tape<F: Real> {
    pub(crate) nodes: RefCell<Vec<Node<F>>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t, F: Real> {
    pub(crate) tape: &'t Tape<F>,
    pub id: usize,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Non-differentiable input.
    pub fn constant(&self, value: Arr<F>) -> Var<'_, F> {
        self.insert(value, Vec::new(), false, None)
    }

    /// Differentiable input; its gradient is retained by `backward`.
    pub fn leaf(&self, value: Arr<F>) -> Var<'_, F> {
        self.insert(value, Vec::new(), true, None)
    }

    pub(crate) fn insert(
        &self,
        value: Arr<F>,
        parents: Vec<usize>,
        requires: bool,
        backward: Option<BackFn<F>>,
    ) -> Var<'_, F> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value: Rc::new(value), parents, requires, backward });
        Var { tape: self, id }
    }

    pub(crate) fn push_op(
        &self,
        value: Arr<F>,
        parents: Vec<usize>,
        backward: BackFn<F>,
    ) -> Var<'_, F> {
        let requires = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[*p].requires)
        };
        self.insert(value, parents, requires, requires.then_some(backward))
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Arr<F>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Runs reverse accumulation from a scalar loss. Returns the gradients of
    /// every differentiable leaf.
    pub fn backward(&self, loss: Var<'_, F>) -> Grads<F> {
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[loss.id].value.len(),
            1,
            "backward requires a scalar loss, got shape {:?}",
            nodes[loss.id].value.shape()
        );
        let mut grads: Vec<Option<Arr<F>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(ArrayD::ones(nodes[loss.id].value.raw_dim()));

        for id in (0..=loss.id).rev() {
            if grads[id].is_none() {
                continue;
            }
            let node = &nodes[id];
            let Some(back) = &node.backward else {
                continue; // leaf or constant: keep gradient
            };
            let g = grads[id].take().expect("checked above");
            let need: Vec<bool> = node.parents.iter().map(|p| nodes[*p].requires).collect();
            let parent_grads = back(&g, &need);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                debug_assert_eq!(
                    pg.shape(),
                    nodes[*p].value.shape(),
                    "gradient shape mismatch into node {p}"
                );
                match &mut grads[*p] {
                    Some(acc) => *acc += &pg,
                    slot => *slot = Some(pg),
                }
            }
        }
        Grads { grads }
    }
}

pub struct Grads<F: Real> {
    grads: Vec<Option<Arr<F>>>,
}

impl<F: Real> Grads<F> {
    pub fn get(&self, v: Var<'_, F>) -> Option<&Arr<F>> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var<'_, F>) -> Option<Arr<F>> {
        self.grads.get_mut(v.id).and_then(|g| g.take())
    }
}

impl<'t, F: Real> Var<'t, F> {
    pub fn value(&self) -> Rc<Arr<F>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn scalar_f64(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.len(), 1, "scalar_f64 on shape {:?}", v.shape());
        v.iter().next().unwrap().as_f64()
    }

    fn unary(&self, value: Arr<F>, back: impl Fn(&Arr<F>) -> Arr<F> + 'static) -> Var<'t, F> {
        self.tape.push_op(
            value,
            vec![self.id],
            Box::new(move |g, _need| vec![Some(back(g))]),
        )
    }

    // ---- elementwise binary ----

    pub fn add(&self, other: Var<'t, F>) -> Var<'t, F> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape(), b.shape(), "add shapes");
        self.tape.push_op(
            (&*a + &*b).into_dyn(),
            vec![self.id, other.id],
            Box::new(move |g, need| {
                vec![
                    need[0].then(|| g.clone()),
                    need[1].then(|| g.clone()),
                ]
            }),
        )
    }

    pub fn sub(&self, other: Var<'t, F>) -> Var<'t, F> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape(), b.shape(), "sub shapes");
        self.tape.push_op(
            (&*a - &*b).into_dyn(),
            vec![self.id, other.id],
            Box::new(move |g, need| {
                vec![need[0].then(|| g.clone()), need[1].then(|| g.mapv(|x| -x))]
            }),
        )
    }

    pub fn mul(&self, other: Var<'t, F>) -> Var<'t, F> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.shape(), b.shape(), "mul shapes");
        let (ac, bc) = (Rc::clone(&a), Rc::clone(&b));
        self.tape.push_op(
            (&*a * &*b).into_dyn(),
            vec![self.id, other.id],
            Box::new(move |g, need| {
                vec![
                    need[0].then(|| g * &*bc),
                    need[1].then(|| g * &*ac),
                ]
            }),
        )
    }

    // ---- elementwise with constants ----

    pub fn add_scalar(&self, c: f64) -> Var<'t, F> {
        let c = F::from_f64(c);
        self.unary(self.value().mapv(|x| x + c), |g| g.clone())
    }

    pub fn mul_scalar(&self, c: f64) -> Var<'t, F> {
        let c = F::from_f64(c);
        self.unary(self.value().mapv(|x| x * c), move |g| g.mapv(|x| x * c))
    }

    /// Elementwise multiply by a constant array (masks, targets).
    pub fn mul_const(&self, c: &Arr<F>) -> Var<'t, F> {
        assert_eq!(self.shape(), c.shape().to_vec(), "mul_const shapes");
        let c = c.clone();
        self.unary((&*self.value() * &c).into_dyn(), move |g| g * &c)
    }

    pub fn sub_const(&self, c: &Arr<F>) -> Var<'t, F> {
        assert_eq!(self.shape(), c.shape().to_vec(), "sub_const shapes");
        self.unary((&*self.value() - c).into_dyn(), |g| g.clone())
    }

    // ---- elementwise nonlinear ----

    pub fn square(&self) -> Var<'t, F> {
        let a = self.value();
        let ac = Rc::clone(&a);
        let two = F::from_f64(2.0);
        self.unary(a.mapv(|x| x * x), move |g| {
            let mut out = g * &*ac;
            out.mapv_inplace(|x| x * two);
            out
        })
    }

    pub fn abs(&self) -> Var<'t, F> {
        let a = self.value();
        let ac = Rc::clone(&a);
        self.unary(a.mapv(|x| x.abs()), move |g| {
            let mut out = g.clone();
            out.zip_mut_with(&ac, |gv, av| {
                *gv = if *av > F::zero() {
                    *gv
                } else if *av < F::zero() {
                    -*gv
                } else {
                    F::zero()
                };
            });
            out
        })
    }

    /// `(x + eps)^(-1/2)`.
    pub fn rsqrt_eps(&self, eps: f64) -> Var<'t, F> {
        let e = F::from_f64(eps);
        let y = self.value().mapv(|x| (x + e).sqrt().recip());
        let yc = y.clone();
        let half = F::from_f64(-0.5);
        self.unary(y, move |g| {
            let mut out = g.clone();
            out.zip_mut_with(&yc, |gv, yv| *gv = *gv * half * *yv * *yv * *yv);
            out
        })
    }

    pub fn sqrt(&self) -> Var<'t, F> {
        let y = self.value().mapv(|x| x.sqrt());
        let yc = y.clone();
        let half = F::from_f64(0.5);
        self.unary(y, move |g| {
            let mut out = g.clone();
            out.zip_mut_with(&yc, |gv, yv| *gv = *gv * half / *yv);
            out
        })
    }

    pub fn leaky_relu(&self, alpha: f64) -> Var<'t, F> {
        let a = F::from_f64(alpha);
        let x = self.value();
        let xc = Rc::clone(&x);
        self.unary(
            x.mapv(|v| if v >= F::zero() { v } else { v * a }),
            move |g| {
                let mut out = g.clone();
                out.zip_mut_with(&xc, |gv, xv| {
                    if *xv < F::zero() {
                        *gv = *gv * a;
                    }
                });
                out
            },
        )
    }

    pub fn sigmoid(&self) -> Var<'t, F> {
        let one = F::one();
        let y = self.value().mapv(|v| one / (one + (-v).exp()));
        let yc = y.clone();
        self.unary(y, move |g| {
            let mut out = g.clone();
            out.zip_mut_with(&yc, |gv, yv| *gv = *gv * *yv * (one - *yv));
            out
        })
    }

    /// Numerically stable `ln(1 + e^x)`.
    pub fn softplus(&self) -> Var<'t, F> {
        let x = self.value();
        let xc = Rc::clone(&x);
        let one = F::one();
        let y = x.mapv(|v| v.max(F::zero()) + (-(v.abs())).exp().ln_1p());
        self.unary(y, move |g| {
            let mut out = g.clone();
            out.zip_mut_with(&xc, |gv, xv| {
                let s = one / (one + (-*xv).exp());
                *gv = *gv * s;
            });
            out
        })
    }

    // ---- reductions & reshape ----

    pub fn sum(&self) -> Var<'t, F> {
        let a = self.value();
        let shape = a.raw_dim();
        let total = a.sum();
        self.unary(
            ArrayD::from_elem(IxDyn(&[]), total),
            move |g| {
                let gv = g[IxDyn(&[])];
                ArrayD::from_elem(shape.clone(), gv)
            },
        )
    }

    pub fn mean(&self) -> Var<'t, F> {
        let n = self.value().len().max(1);
        self.sum().mul_scalar(1.0 / n as f64)
    }

    pub fn reshape(&self, shape: &[usize]) -> Var<'t, F> {
        let a = self.value();
        let orig = a.raw_dim();
        assert_eq!(a.len(), shape.iter().product::<usize>(), "reshape size");
        let reshaped = a
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape after standardizing layout");
        self.unary(reshaped, move |g| {
            g.as_standard_layout()
                .to_owned()
                .into_shape_with_order(orig.clone())
                .expect("reshape back after standardizing layout")
        })
    }

    /// [B, ...] -> [B, prod(rest)]
    pub fn flatten_batch(&self) -> Var<'t, F> {
        let s = self.shape();
        let rest: usize = s[1..].iter().product();
        self.reshape(&[s[0], rest])
    }

    // ---- linear algebra ----

    /// 2-D matrix product [M,K]x[K,N].
    pub fn matmul(&self, other: Var<'t, F>) -> Var<'t, F> {
        let a = self.value();
        let b = other.value();
        let a2 = a.view().into_dimensionality::<ndarray::Ix2>().expect("matmul lhs 2-d");
        let b2 = b.view().into_dimensionality::<ndarray::Ix2>().expect("matmul rhs 2-d");
        assert_eq!(a2.ncols(), b2.nrows(), "matmul inner dims");
        let y = a2.dot(&b2).into_dyn();
        let (ac, bc) = (Rc::clone(&a), Rc::clone(&b));
        self.tape.push_op(
            y,
            vec![self.id, other.id],
            Box::new(move |g, need| {
                let g2 = g.view().into_dimensionality::<ndarray::Ix2>().unwrap();
                let a2 = ac.view().into_dimensionality::<ndarray::Ix2>().unwrap();
                let b2 = bc.view().into_dimensionality::<ndarray::Ix2>().unwrap();
                // dot on transposed views may hand back column-major arrays;
                // gradients are kept standard layout throughout
                vec![
                    need[0].then(|| g2.dot(&b2.t()).as_standard_layout().to_owned().into_dyn()),
                    need[1].then(|| a2.t().dot(&g2).as_standard_layout().to_owned().into_dyn()),
                ]
            }),
        )
    }

    /// Normalizes each row of [B, D] onto the sqrt(D)-radius hypersphere.
    /// Exactly scale-invariant up to floating-point rounding.
    pub fn hypersphere_norm(&self) -> Var<'t, F> {
        let a = self.value();
        let s = a.shape().to_vec();
        assert_eq!(s.len(), 2, "hypersphere_norm expects [B, D]");
        let (bs, d) = (s[0], s[1]);
        let scale = F::from_f64((d as f64).sqrt());
        let tiny = F::from_f64(1e-30);
        let a2 = a.view().into_dimensionality::<ndarray::Ix2>().unwrap();
        let mut y = a2.to_owned();
        let mut norms = Vec::with_capacity(bs);
        for mut row in y.rows_mut() {
            let n = row.iter().fold(F::zero(), |acc, v| acc + *v * *v).sqrt().max(tiny);
            norms.push(n);
            row.mapv_inplace(|v| v * scale / n);
        }
        let ac = Rc::clone(&a);
        self.unary(y.into_dyn(), move |g| {
            let g2 = g.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            let a2 = ac.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            let mut out = ndarray::Array2::<F>::zeros((bs, d));
            for b in 0..bs {
                let r = norms[b];
                let dot = (0..d).fold(F::zero(), |acc, j| acc + a2[[b, j]] * g2[[b, j]]);
                for j in 0..d {
                    out[[b, j]] = scale * (g2[[b, j]] / r - a2[[b, j]] * dot / (r * r * r));
                }
            }
            out.into_dyn()
        })
    }
}
