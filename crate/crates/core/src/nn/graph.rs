//! Reverse-mode tape. Values live in an arena; each op pushes a backward
//! closure that reads parent values and accumulates parent gradients.
//!
//! All reductions inside ops run in a fixed order, so a full forward+backward
//! is bit-reproducible for a given platform and thread-free by construction.

use std::collections::HashMap;

use crate::scalar::Scalar;
use crate::tensor::{kernels, Tensor};

use super::params::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(super) usize);

impl NodeId {
    #[inline]
    pub(crate) fn index(self) -> usize {
        self.0
    }
}

type BackFn<T> = Box<dyn Fn(&[T], &[Tensor<T>], &mut Grads<T>)>;

struct BackRecord<T> {
    out: usize,
    back: BackFn<T>,
}

/// Gradient arena produced by [`Graph::backward_seeded`].
pub struct Grads<T> {
    slots: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Grads<T> {
    fn new(n: usize) -> Self {
        Grads { slots: (0..n).map(|_| None).collect() }
    }

    pub fn get(&self, id: NodeId) -> Option<&[T]> {
        self.slots[id.0].as_deref()
    }

    pub(super) fn accum(&mut self, id: usize, len: usize, f: impl FnOnce(&mut [T])) {
        let slot = self.slots[id].get_or_insert_with(|| vec![T::zero(); len]);
        debug_assert_eq!(slot.len(), len);
        f(slot);
    }

    pub(super) fn accum_slice(&mut self, id: usize, src: &[T]) {
        self.accum(id, src.len(), |dst| {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *d + *s;
            }
        });
    }

    fn take(&mut self, id: usize) -> Option<Vec<T>> {
        self.slots[id].take()
    }
}

/// The tape. `recording = false` (inference) skips all closure allocation.
pub struct Graph<T> {
    pub(super) values: Vec<Tensor<T>>,
    pub(super) needs_grad: Vec<bool>,
    records: Vec<BackRecord<T>>,
    recording: bool,
    param_binds: HashMap<ParamId, NodeId>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            values: Vec::new(),
            needs_grad: Vec::new(),
            records: Vec::new(),
            recording: true,
            param_binds: HashMap::new(),
        }
    }

    /// Forward-only graph: values are computed, no tape is kept.
    pub fn inference() -> Self {
        let mut g = Self::new();
        g.recording = false;
        g
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.values[id.0].shape()
    }

    #[inline]
    pub(super) fn needs_grad_of(&self, id: NodeId) -> bool {
        self.needs_grad[id.0]
    }

    fn push_value(&mut self, t: Tensor<T>, needs_grad: bool) -> NodeId {
        let id = NodeId(self.values.len());
        self.values.push(t);
        self.needs_grad.push(needs_grad && self.recording);
        id
    }

    pub(super) fn push_op(
        &mut self,
        out: Tensor<T>,
        parents: &[NodeId],
        make_back: impl FnOnce() -> BackFn<T>,
    ) -> NodeId {
        let needs = self.recording && parents.iter().any(|p| self.needs_grad[p.0]);
        let id = self.push_value(out, needs);
        if needs {
            self.records.push(BackRecord { out: id.0, back: make_back() });
        }
        id
    }

    pub fn leaf(&mut self, t: Tensor<T>, needs_grad: bool) -> NodeId {
        self.push_value(t, needs_grad)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> NodeId {
        self.push_value(t, false)
    }

    /// Bind a parameter as a leaf (cached: one node per parameter per graph).
    pub fn param(&mut self, store: &ParamStore<T>, pid: ParamId) -> NodeId {
        if let Some(&id) = self.param_binds.get(&pid) {
            return id;
        }
        let id = self.push_value(store.value(pid).clone(), true);
        self.param_binds.insert(pid, id);
        id
    }

    /// Copy a node's value out as a fresh constant (stop-gradient).
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let t = self.values[x.0].clone();
        self.constant(t)
    }

    /// Run the tape backwards from external seeds.
    pub fn backward_seeded(&self, seeds: &[(NodeId, &[T])]) -> Grads<T> {
        let mut grads = Grads::new(self.values.len());
        for (id, g) in seeds {
            assert_eq!(self.values[id.0].len(), g.len(), "seed length mismatch");
            grads.accum_slice(id.0, g);
        }
        for rec in self.records.iter().rev() {
            if let Some(gout) = grads.take(rec.out) {
                (rec.back)(&gout, &self.values, &mut grads);
            }
        }
        grads
    }

    /// Backward from a scalar loss (seed 1).
    pub fn backward_scalar(&self, loss: NodeId) -> Grads<T> {
        let one = [T::one()];
        self.backward_seeded(&[(loss, &one)])
    }

    /// Push gradients of all bound parameters into the store.
    pub fn accumulate_param_grads(&self, grads: &Grads<T>, store: &mut ParamStore<T>) {
        let mut binds: Vec<(&ParamId, &NodeId)> = self.param_binds.iter().collect();
        binds.sort_by_key(|(p, _)| p.index());
        for (pid, nid) in binds {
            if let Some(g) = grads.get(*nid) {
                store.accum_grad(*pid, g);
            }
        }
    }

    // ---- elementwise ----

    fn binary_same_shape(
        &mut self,
        a: NodeId,
        b: NodeId,
        f: impl Fn(T, T) -> T,
        back: impl Fn(&[T], &[T], &[T]) -> (Vec<T>, Vec<T>) + 'static,
    ) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "elementwise shape mismatch");
        let out = Tensor::new(
            self.shape(a),
            self.values[a.0]
                .data()
                .iter()
                .zip(self.values[b.0].data())
                .map(|(&x, &y)| f(x, y))
                .collect(),
        );
        let na = self.needs_grad[a.0];
        let nb = self.needs_grad[b.0];
        self.push_op(out, &[a, b], move || {
            Box::new(move |gout, vals, grads| {
                let (da, db) = back(gout, vals[a.0].data(), vals[b.0].data());
                if na {
                    grads.accum_slice(a.0, &da);
                }
                if nb {
                    grads.accum_slice(b.0, &db);
                }
            })
        })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(
            a,
            b,
            |x, y| x + y,
            |g, _, _| (g.to_vec(), g.to_vec()),
        )
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(
            a,
            b,
            |x, y| x - y,
            |g, _, _| (g.to_vec(), g.iter().map(|&v| -v).collect()),
        )
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(
            a,
            b,
            |x, y| x * y,
            |g, av, bv| {
                (
                    g.iter().zip(bv).map(|(&gi, &y)| gi * y).collect(),
                    g.iter().zip(av).map(|(&gi, &x)| gi * x).collect(),
                )
            },
        )
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(
            a,
            b,
            |x, y| x / y,
            |g, av, bv| {
                let da: Vec<T> = g.iter().zip(bv).map(|(&gi, &y)| gi / y).collect();
                let db: Vec<T> = g
                    .iter()
                    .zip(av.iter().zip(bv))
                    .map(|(&gi, (&x, &y))| -gi * x / (y * y))
                    .collect();
                (da, db)
            },
        )
    }

    fn unary(
        &mut self,
        a: NodeId,
        f: impl Fn(T) -> T,
        dfdx: impl Fn(T, T) -> T + 'static, // (x, y) -> dy/dx
    ) -> NodeId {
        let out = self.values[a.0].map(&f);
        let out_idx = self.values.len();
        self.push_op(out, &[a], move || {
            Box::new(move |gout, vals, grads| {
                let xv = vals[a.0].data();
                let yv = vals[out_idx].data();
                let da: Vec<T> = gout
                    .iter()
                    .zip(xv.iter().zip(yv))
                    .map(|(&gi, (&x, &y))| gi * dfdx(x, y))
                    .collect();
                grads.accum_slice(a.0, &da);
            })
        })
    }

    pub fn silu(&mut self, a: NodeId) -> NodeId {
        self.unary(
            a,
            |x| {
                let s = T::one() / (T::one() + (-x).exp());
                x * s
            },
            |x, _| {
                let s = T::one() / (T::one() + (-x).exp());
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(
            a,
            |x| T::one() / (T::one() + (-x).exp()),
            |_, y| y * (T::one() - y),
        )
    }

    pub fn tanh_op(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn exp_op(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.exp(), |_, y| y)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: T) -> NodeId {
        self.unary(a, |x| x + c, |_, _| T::one())
    }

    pub fn mul_scalar(&mut self, a: NodeId, c: T) -> NodeId {
        self.unary(a, |x| x * c, move |_, _| c)
    }

    // ---- shape ----

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        let out = self.values[a.0].clone().reshaped(shape);
        self.push_op(out, &[a], || {
            Box::new(move |gout, _, grads| {
                grads.accum_slice(a.0, gout);
            })
        })
    }

    /// Concatenate along dim 1 of tensors shaped `[d0, d1, rest...]`.
    pub fn concat_dim1(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        assert!(sa.len() >= 2 && sa.len() == sb.len());
        assert_eq!(sa[0], sb[0], "concat_dim1: d0 mismatch");
        assert_eq!(&sa[2..], &sb[2..], "concat_dim1: trailing dims mismatch");
        let d0 = sa[0];
        let rest: usize = sa[2..].iter().product();
        let (la, lb) = (sa[1] * rest, sb[1] * rest);
        let mut shape = sa.clone();
        shape[1] = sa[1] + sb[1];
        let mut data = Vec::with_capacity(d0 * (la + lb));
        let av = self.values[a.0].data();
        let bv = self.values[b.0].data();
        for i in 0..d0 {
            data.extend_from_slice(&av[i * la..(i + 1) * la]);
            data.extend_from_slice(&bv[i * lb..(i + 1) * lb]);
        }
        let out = Tensor::new(&shape, data);
        let na = self.needs_grad[a.0];
        let nb = self.needs_grad[b.0];
        self.push_op(out, &[a, b], move || {
            Box::new(move |gout, _, grads| {
                let stride = la + lb;
                if na {
                    grads.accum(a.0, d0 * la, |dst| {
                        for i in 0..d0 {
                            let src = &gout[i * stride..i * stride + la];
                            for (d, s) in dst[i * la..(i + 1) * la].iter_mut().zip(src) {
                                *d = *d + *s;
                            }
                        }
                    });
                }
                if nb {
                    grads.accum(b.0, d0 * lb, |dst| {
                        for i in 0..d0 {
                            let src = &gout[i * stride + la..(i + 1) * stride];
                            for (d, s) in dst[i * lb..(i + 1) * lb].iter_mut().zip(src) {
                                *d = *d + *s;
                            }
                        }
                    });
                }
            })
        })
    }

    /// Concatenate along the last dim; leading dims must match.
    pub fn concat_last(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        assert_eq!(sa[..sa.len() - 1], sb[..sb.len() - 1]);
        let rows: usize = sa[..sa.len() - 1].iter().product();
        let (da, db) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = da + db;
        let mut data = Vec::with_capacity(rows * (da + db));
        let av = self.values[a.0].data();
        let bv = self.values[b.0].data();
        for i in 0..rows {
            data.extend_from_slice(&av[i * da..(i + 1) * da]);
            data.extend_from_slice(&bv[i * db..(i + 1) * db]);
        }
        let out = Tensor::new(&shape, data);
        let na = self.needs_grad[a.0];
        let nb = self.needs_grad[b.0];
        self.push_op(out, &[a, b], move || {
            Box::new(move |gout, _, grads| {
                let stride = da + db;
                if na {
                    grads.accum(a.0, rows * da, |dst| {
                        for i in 0..rows {
                            for j in 0..da {
                                dst[i * da + j] = dst[i * da + j] + gout[i * stride + j];
                            }
                        }
                    });
                }
                if nb {
                    grads.accum(b.0, rows * db, |dst| {
                        for i in 0..rows {
                            for j in 0..db {
                                dst[i * db + j] = dst[i * db + j] + gout[i * stride + da + j];
                            }
                        }
                    });
                }
            })
        })
    }

    /// Slice channels: `[N, C, H, W] -> [N, len, H, W]` starting at `start`.
    pub fn narrow_dim1(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let sa = self.shape(a).to_vec();
        assert!(sa.len() >= 2 && start + len <= sa[1]);
        let d0 = sa[0];
        let rest: usize = sa[2..].iter().product();
        let mut shape = sa.clone();
        shape[1] = len;
        let av = self.values[a.0].data();
        let mut data = Vec::with_capacity(d0 * len * rest);
        for i in 0..d0 {
            let base = (i * sa[1] + start) * rest;
            data.extend_from_slice(&av[base..base + len * rest]);
        }
        let full_c = sa[1];
        let out = Tensor::new(&shape, data);
        self.push_op(out, &[a], move || {
            Box::new(move |gout, _, grads| {
                grads.accum(a.0, d0 * full_c * rest, |dst| {
                    for i in 0..d0 {
                        let base = (i * full_c + start) * rest;
                        let src = &gout[i * len * rest..(i + 1) * len * rest];
                        for (d, s) in dst[base..base + len * rest].iter_mut().zip(src) {
                            *d = *d + *s;
                        }
                    }
                });
            })
        })
    }

    /// Broadcast `[T, D]` to `[B, T, D]`.
    pub fn repeat_rows(&mut self, a: NodeId, batch: usize) -> NodeId {
        let sa = self.shape(a).to_vec();
        let len = self.values[a.0].len();
        let mut shape = vec![batch];
        shape.extend_from_slice(&sa);
        let av = self.values[a.0].data();
        let mut data = Vec::with_capacity(batch * len);
        for _ in 0..batch {
            data.extend_from_slice(av);
        }
        let out = Tensor::new(&shape, data);
        self.push_op(out, &[a], move || {
            Box::new(move |gout, _, grads| {
                grads.accum(a.0, len, |dst| {
                    for bi in 0..batch {
                        for (d, s) in dst.iter_mut().zip(&gout[bi * len..(bi + 1) * len]) {
                            *d = *d + *s;
                        }
                    }
                });
            })
        })
    }

    // ---- linear algebra ----

    /// `[m, k] · [k, n] -> [m, n]`
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        assert_eq!(sa.len(), 2);
        assert_eq!(sb.len(), 2);
        assert_eq!(sa[1], sb[0], "matmul inner dims {:?} x {:?}", sa, sb);
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = Tensor::new(
            &[m, n],
            kernels::matmul(self.values[a.0].data(), self.values[b.0].data(), m, k, n),
        );
        let na = self.needs_grad[a.0];
        let nb = self.needs_grad[b.0];
        self.push_op(out, &[a, b], move || {
            Box::new(move |gout, vals, grads| {
                if na {
                    // dA = dC · Bᵀ
                    let da = kernels::matmul_nt(gout, vals[b.0].data(), m, n, k);
                    grads.accum_slice(a.0, &da);
                }
                if nb {
                    // dB = Aᵀ · dC
                    let db = kernels::matmul_tn(vals[a.0].data(), gout, m, k, n);
                    grads.accum_slice(b.0, &db);
                }
            })
        })
    }

    /// Rows of `x` (`[..., D]`) get `bias` (`[D]`) added.
    pub fn add_bias_rows(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let sx = self.shape(x).to_vec();
        let d = *sx.last().unwrap();
        assert_eq!(self.shape(bias), &[d]);
        let rows = self.values[x.0].len() / d;
        let bv = self.values[bias.0].data().to_vec();
        let mut data = self.values[x.0].data().to_vec();
        for i in 0..rows {
            for j in 0..d {
                data[i * d + j] = data[i * d + j] + bv[j];
            }
        }
        let out = Tensor::new(&sx, data);
        let nx = self.needs_grad[x.0];
        let nb = self.needs_grad[bias.0];
        self.push_op(out, &[x, bias], move || {
            Box::new(move |gout, _, grads| {
                if nx {
                    grads.accum_slice(x.0, gout);
                }
                if nb {
                    grads.accum(bias.0, d, |dst| {
                        for i in 0..rows {
                            for j in 0..d {
                                dst[j] = dst[j] + gout[i * d + j];
                            }
                        }
                    });
                }
            })
        })
    }

    /// Mean over all elements -> scalar node.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let len = self.values[a.0].len();
        let inv = T::of_usize(len).recip();
        let mut acc = T::zero();
        for &v in self.values[a.0].data() {
            acc = acc + v;
        }
        let out = Tensor::scalar(acc * inv);
        self.push_op(out, &[a], move || {
            Box::new(move |gout, _, grads| {
                let g = gout[0] * inv;
                grads.accum(a.0, len, |dst| {
                    for d in dst.iter_mut() {
                        *d = *d + g;
                    }
                });
            })
        })
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}
