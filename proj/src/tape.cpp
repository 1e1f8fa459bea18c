#include "pmdx/tape.hpp"

#include <algorithm>
#include <cmath>

namespace pmdx {
namespace ad {

namespace {

void check_same_tape(Var a, Var b, const char* where) {
    if (a.tape != b.tape) throw ShapeError(std::string(where) + ": vars from different tapes");
}

void check_vector(const Tensor& t, const char* where) {
    if (t.rank() != 1) throw ShapeError(std::string(where) + ": expected vector, got " + t.shape_str());
}

void check_matrix(const Tensor& t, const char* where) {
    if (t.rank() != 2) throw ShapeError(std::string(where) + ": expected matrix, got " + t.shape_str());
}

} // namespace

Var make_leaf(Tape& t, const Tensor& v) { return Var(t, t.leaf(v)); }
Var make_const(Tape& t, const Tensor& v) { return Var(t, t.constant(v)); }
Var make_scalar(Tape& t, double v) { return Var(t, t.constant(Tensor::scalar(v))); }

// Every op computes its own node id up front (nodes are append-only) so the
// backward closure can read the output gradient.

// ---- elementwise / reductions -------------------------------------------

Var add(Var a, Var b) {
    check_same_tape(a, b, "add");
    require_same_shape(a.val(), b.val(), "add");
    Tape& T = *a.tape;
    Tensor out = a.val();
    for (int i = 0; i < out.size(); ++i) out[i] += b.val()[i];
    const int self = static_cast<int>(T.size());
    const int aid = a.id, bid = b.id;
    T.push(std::move(out), [self, aid, bid](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(aid);
        Tensor& gb = t.grad(bid);
        for (int i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
    return Var(T, self);
}

Var sub(Var a, Var b) {
    check_same_tape(a, b, "sub");
    require_same_shape(a.val(), b.val(), "sub");
    Tape& T = *a.tape;
    Tensor out = a.val();
    for (int i = 0; i < out.size(); ++i) out[i] -= b.val()[i];
    const int self = static_cast<int>(T.size());
    const int aid = a.id, bid = b.id;
    T.push(std::move(out), [self, aid, bid](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(aid);
        Tensor& gb = t.grad(bid);
        for (int i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
    return Var(T, self);
}

Var mul(Var a, Var b) {
    check_same_tape(a, b, "mul");
    require_same_shape(a.val(), b.val(), "mul");
    Tape& T = *a.tape;
    Tensor out = a.val();
    for (int i = 0; i < out.size(); ++i) out[i] *= b.val()[i];
    const int self = static_cast<int>(T.size());
    const int aid = a.id, bid = b.id;
    T.push(std::move(out), [self, aid, bid](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.val(aid);
        const Tensor& bv = t.val(bid);
        Tensor& ga = t.grad(aid);
        Tensor& gb = t.grad(bid);
        for (int i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * bv[i];
            gb[i] += g[i] * av[i];
        }
    });
    return Var(T, self);
}

Var scale(Var a, double c) {
    Tape& T = *a.tape;
    Tensor out = a.val();
    for (double& v : out.data) v *= c;
    const int self = static_cast<int>(T.size());
    const int aid = a.id;
    T.push(std::move(out), [self, aid, c](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(aid);
        for (int i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
    return Var(T, self);
}

Var relu(Var a) {
    Tape& T = *a.tape;
    Tensor out = a.val();
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    const int self = static_cast<int>(T.size());
    const int aid = a.id;
    T.push(std::move(out), [self, aid](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& x = t.val(aid);
        Tensor& ga = t.grad(aid);
        for (int i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];
    });
    return Var(T, self);
}

Var vabs(Var a) {
    Tape& T = *a.tape;
    Tensor out = a.val();
    for (double& v : out.data) v = std::fabs(v);
    const int self = static_cast<int>(T.size());
    const int aid = a.id;
    T.push(std::move(out), [self, aid](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& x = t.val(aid);
        Tensor& ga = t.grad(aid);
        for (int i = 0; i < g.size(); ++i) {
            if (x[i] > 0.0)
                ga[i] += g[i];
            else if (x[i] < 0.0)
                ga[i] -= g[i];
        }
    });
    return Var(T, self);
}

Var vsum(Var a) {
    Tape& T = *a.tape;
    double s = 0.0;
    for (double v : a.val().data) s += v;
    const int self = static_cast<int>(T.size());
    const int aid = a.id;
    T.push(Tensor::scalar(s), [self, aid](Tape& t) {
        const double g = t.grad(self)[0];
        Tensor& ga = t.grad(aid);
        for (int i = 0; i < ga.size(); ++i) ga[i] += g;
    });
    return Var(T, self);
}

Var vmean(Var a) {
    Tape& T = *a.tape;
    const int n = a.val().size();
    if (n == 0) throw ShapeError("vmean: empty tensor");
    double s = 0.0;
    for (double v : a.val().data) s += v;
    const int self = static_cast<int>(T.size());
    const int aid = a.id;
    T.push(Tensor::scalar(s / n), [self, aid, n](Tape& t) {
        const double g = t.grad(self)[0] / n;
        Tensor& ga = t.grad(aid);
        for (int i = 0; i < ga.size(); ++i) ga[i] += g;
    });
    return Var(T, self);
}

Var sum_sq(Var a) {
    Tape& T = *a.tape;
    double s = 0.0;
    for (double v : a.val().data) s += v * v;
    const int self = static_cast<int>(T.size());
    const int aid = a.id;
    T.push(Tensor::scalar(s), [self, aid](Tape& t) {
        const double g = t.grad(self)[0];
        const Tensor& x = t.val(aid);
        Tensor& ga = t.grad(aid);
        for (int i = 0; i < ga.size(); ++i) ga[i] += 2.0 * x[i] * g;
    });
    return Var(T, self);
}

Var dot(Var a, Var b) {
    check_same_tape(a, b, "dot");
    require_same_shape(a.val(), b.val(), "dot");
    Tape& T = *a.tape;
    double s = 0.0;
    for (int i = 0; i < a.val().size(); ++i) s += a.val()[i] * b.val()[i];
    const int self = static_cast<int>(T.size());
    const int aid = a.id, bid = b.id;
    T.push(Tensor::scalar(s), [self, aid, bid](Tape& t) {
        const double g = t.grad(self)[0];
        const Tensor& av = t.val(aid);
        const Tensor& bv = t.val(bid);
        Tensor& ga = t.grad(aid);
        Tensor& gb = t.grad(bid);
        for (int i = 0; i < av.size(); ++i) {
            ga[i] += g * bv[i];
            gb[i] += g * av[i];
        }
    });
    return Var(T, self);
}

Var detach(Var a) {
    // Constant copy: gradient stops here.
    return make_const(*a.tape, a.val());
}

// ---- vector / matrix ------------------------------------------------------

Var linear(Var x, Var W, Var b) {
    check_same_tape(x, W, "linear");
    check_same_tape(x, b, "linear");
    check_vector(x.val(), "linear x");
    check_matrix(W.val(), "linear W");
    const int out_dim = W.val().dim(0);
    const int in_dim = W.val().dim(1);
    if (x.val().size() != in_dim)
        throw ShapeError("linear: input size " + std::to_string(x.val().size()) +
                         " != weight columns " + std::to_string(in_dim));
    if (b.val().size() != out_dim) throw ShapeError("linear: bias size mismatch");
    Tape& T = *x.tape;
    Tensor out({out_dim});
    for (int i = 0; i < out_dim; ++i) {
        double s = b.val()[i];
        const double* wr = &W.val().data[static_cast<size_t>(i) * in_dim];
        for (int j = 0; j < in_dim; ++j) s += wr[j] * x.val()[j];
        out[i] = s;
    }
    const int self = static_cast<int>(T.size());
    const int xid = x.id, wid = W.id, bid = b.id;
    T.push(std::move(out), [self, xid, wid, bid, out_dim, in_dim](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.val(xid);
        const Tensor& wv = t.val(wid);
        Tensor& gx = t.grad(xid);
        Tensor& gw = t.grad(wid);
        Tensor& gb = t.grad(bid);
        for (int i = 0; i < out_dim; ++i) {
            const double gi = g[i];
            gb[i] += gi;
            const double* wr = &wv.data[static_cast<size_t>(i) * in_dim];
            double* gwr = &gw.data[static_cast<size_t>(i) * in_dim];
            for (int j = 0; j < in_dim; ++j) {
                gx[j] += gi * wr[j];
                gwr[j] += gi * xv[j];
            }
        }
    });
    return Var(T, self);
}

Var linear_rows(Var X, Var W, Var b) {
    check_same_tape(X, W, "linear_rows");
    check_matrix(X.val(), "linear_rows X");
    check_matrix(W.val(), "linear_rows W");
    const int n = X.val().dim(0);
    const int in_dim = X.val().dim(1);
    const int out_dim = W.val().dim(0);
    if (W.val().dim(1) != in_dim) throw ShapeError("linear_rows: weight shape mismatch");
    if (b.val().size() != out_dim) throw ShapeError("linear_rows: bias size mismatch");
    Tape& T = *X.tape;
    Tensor out({n, out_dim});
    for (int r = 0; r < n; ++r) {
        for (int i = 0; i < out_dim; ++i) {
            double s = b.val()[i];
            const double* wr = &W.val().data[static_cast<size_t>(i) * in_dim];
            const double* xr = &X.val().data[static_cast<size_t>(r) * in_dim];
            for (int j = 0; j < in_dim; ++j) s += wr[j] * xr[j];
            out.at(r, i) = s;
        }
    }
    const int self = static_cast<int>(T.size());
    const int xid = X.id, wid = W.id, bid = b.id;
    T.push(std::move(out), [self, xid, wid, bid, n, in_dim, out_dim](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.val(xid);
        const Tensor& wv = t.val(wid);
        Tensor& gx = t.grad(xid);
        Tensor& gw = t.grad(wid);
        Tensor& gb = t.grad(bid);
        for (int r = 0; r < n; ++r) {
            const double* xr = &xv.data[static_cast<size_t>(r) * in_dim];
            double* gxr = &gx.data[static_cast<size_t>(r) * in_dim];
            for (int i = 0; i < out_dim; ++i) {
                const double gi = g.at(r, i);
                gb[i] += gi;
                const double* wr = &wv.data[static_cast<size_t>(i) * in_dim];
                double* gwr = &gw.data[static_cast<size_t>(i) * in_dim];
                for (int j = 0; j < in_dim; ++j) {
                    gxr[j] += gi * wr[j];
                    gwr[j] += gi * xr[j];
                }
            }
        }
    });
    return Var(T, self);
}

Var matvec(Var M, Var x) {
    check_same_tape(M, x, "matvec");
    check_matrix(M.val(), "matvec M");
    check_vector(x.val(), "matvec x");
    const int n = M.val().dim(0), m = M.val().dim(1);
    if (x.val().size() != m) throw ShapeError("matvec: size mismatch");
    Tape& T = *M.tape;
    Tensor out({n});
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        const double* mr = &M.val().data[static_cast<size_t>(i) * m];
        for (int j = 0; j < m; ++j) s += mr[j] * x.val()[j];
        out[i] = s;
    }
    const int self = static_cast<int>(T.size());
    const int mid = M.id, xid = x.id;
    T.push(std::move(out), [self, mid, xid, n, m](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& mv = t.val(mid);
        const Tensor& xv = t.val(xid);
        Tensor& gm = t.grad(mid);
        Tensor& gx = t.grad(xid);
        for (int i = 0; i < n; ++i) {
            const double gi = g[i];
            const double* mr = &mv.data[static_cast<size_t>(i) * m];
            double* gmr = &gm.data[static_cast<size_t>(i) * m];
            for (int j = 0; j < m; ++j) {
                gmr[j] += gi * xv[j];
                gx[j] += gi * mr[j];
            }
        }
    });
    return Var(T, self);
}

Var matvec_t(Var M, Var x) {
    check_same_tape(M, x, "matvec_t");
    check_matrix(M.val(), "matvec_t M");
    check_vector(x.val(), "matvec_t x");
    const int n = M.val().dim(0), m = M.val().dim(1);
    if (x.val().size() != n) throw ShapeError("matvec_t: size mismatch");
    Tape& T = *M.tape;
    Tensor out({m});
    for (int i = 0; i < n; ++i) {
        const double xi = x.val()[i];
        const double* mr = &M.val().data[static_cast<size_t>(i) * m];
        for (int j = 0; j < m; ++j) out[j] += xi * mr[j];
    }
    const int self = static_cast<int>(T.size());
    const int mid = M.id, xid = x.id;
    T.push(std::move(out), [self, mid, xid, n, m](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& mv = t.val(mid);
        const Tensor& xv = t.val(xid);
        Tensor& gm = t.grad(mid);
        Tensor& gx = t.grad(xid);
        for (int i = 0; i < n; ++i) {
            const double* mr = &mv.data[static_cast<size_t>(i) * m];
            double* gmr = &gm.data[static_cast<size_t>(i) * m];
            double acc = 0.0;
            for (int j = 0; j < m; ++j) {
                gmr[j] += xv[i] * g[j];
                acc += mr[j] * g[j];
            }
            gx[i] += acc;
        }
    });
    return Var(T, self);
}

Var matmul_at_b(Var A, Var B, double alpha) {
    check_same_tape(A, B, "matmul_at_b");
    check_matrix(A.val(), "matmul_at_b A");
    check_matrix(B.val(), "matmul_at_b B");
    const int n = A.val().dim(0), p = A.val().dim(1), q = B.val().dim(1);
    if (B.val().dim(0) != n) throw ShapeError("matmul_at_b: row count mismatch");
    Tape& T = *A.tape;
    Tensor out({p, q});
    for (int k = 0; k < n; ++k) {
        const double* ar = &A.val().data[static_cast<size_t>(k) * p];
        const double* br = &B.val().data[static_cast<size_t>(k) * q];
        for (int i = 0; i < p; ++i) {
            const double a = alpha * ar[i];
            double* orow = &out.data[static_cast<size_t>(i) * q];
            for (int j = 0; j < q; ++j) orow[j] += a * br[j];
        }
    }
    const int self = static_cast<int>(T.size());
    const int aid = A.id, bid = B.id;
    T.push(std::move(out), [self, aid, bid, n, p, q, alpha](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.val(aid);
        const Tensor& bv = t.val(bid);
        Tensor& ga = t.grad(aid);
        Tensor& gb = t.grad(bid);
        for (int k = 0; k < n; ++k) {
            const double* ar = &av.data[static_cast<size_t>(k) * p];
            const double* br = &bv.data[static_cast<size_t>(k) * q];
            double* gar = &ga.data[static_cast<size_t>(k) * p];
            double* gbr = &gb.data[static_cast<size_t>(k) * q];
            for (int i = 0; i < p; ++i) {
                const double* grow = &g.data[static_cast<size_t>(i) * q];
                double acc = 0.0;
                for (int j = 0; j < q; ++j) {
                    acc += grow[j] * br[j];
                    gbr[j] += alpha * ar[i] * grow[j];
                }
                gar[i] += alpha * acc;
            }
        }
    });
    return Var(T, self);
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw InputError("concat: empty list");
    Tape& T = *parts[0].tape;
    int total = 0;
    std::vector<int> ids, sizes;
    for (const Var& p : parts) {
        check_same_tape(parts[0], p, "concat");
        check_vector(p.val(), "concat");
        ids.push_back(p.id);
        sizes.push_back(p.val().size());
        total += p.val().size();
    }
    Tensor out({total});
    int off = 0;
    for (const Var& p : parts) {
        std::copy(p.val().data.begin(), p.val().data.end(), out.data.begin() + off);
        off += p.val().size();
    }
    const int self = static_cast<int>(T.size());
    T.push(std::move(out), [self, ids, sizes](Tape& t) {
        const Tensor& g = t.grad(self);
        int off2 = 0;
        for (size_t k = 0; k < ids.size(); ++k) {
            Tensor& gp = t.grad(ids[k]);
            for (int i = 0; i < sizes[k]; ++i) gp[i] += g[off2 + i];
            off2 += sizes[k];
        }
    });
    return Var(T, self);
}

Var slice(Var v, int from, int len) {
    check_vector(v.val(), "slice");
    if (from < 0 || len < 0 || from + len > v.val().size()) throw ShapeError("slice: out of range");
    Tape& T = *v.tape;
    Tensor out({len});
    std::copy(v.val().data.begin() + from, v.val().data.begin() + from + len, out.data.begin());
    const int self = static_cast<int>(T.size());
    const int vid = v.id;
    T.push(std::move(out), [self, vid, from, len](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gv = t.grad(vid);
        for (int i = 0; i < len; ++i) gv[from + i] += g[i];
    });
    return Var(T, self);
}

Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw InputError("stack_rows: empty list");
    Tape& T = *rows[0].tape;
    const int m = rows[0].val().size();
    std::vector<int> ids;
    for (const Var& r : rows) {
        check_same_tape(rows[0], r, "stack_rows");
        check_vector(r.val(), "stack_rows");
        if (r.val().size() != m) throw ShapeError("stack_rows: ragged rows");
        ids.push_back(r.id);
    }
    const int n = static_cast<int>(rows.size());
    Tensor out({n, m});
    for (int r = 0; r < n; ++r)
        std::copy(rows[r].val().data.begin(), rows[r].val().data.end(),
                  out.data.begin() + static_cast<size_t>(r) * m);
    const int self = static_cast<int>(T.size());
    T.push(std::move(out), [self, ids, m](Tape& t) {
        const Tensor& g = t.grad(self);
        for (size_t r = 0; r < ids.size(); ++r) {
            Tensor& gr = t.grad(ids[r]);
            const double* grow = &g.data[r * m];
            for (int i = 0; i < m; ++i) gr[i] += grow[i];
        }
    });
    return Var(T, self);
}

Var row(Var M, int r) {
    check_matrix(M.val(), "row");
    const int n = M.val().dim(0), m = M.val().dim(1);
    if (r < 0 || r >= n) throw ShapeError("row: index out of range");
    Tape& T = *M.tape;
    Tensor out({m});
    std::copy(M.val().data.begin() + static_cast<size_t>(r) * m,
              M.val().data.begin() + static_cast<size_t>(r + 1) * m, out.data.begin());
    const int self = static_cast<int>(T.size());
    const int mid = M.id;
    T.push(std::move(out), [self, mid, r, m](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gm = t.grad(mid);
        double* grow = &gm.data[static_cast<size_t>(r) * m];
        for (int i = 0; i < m; ++i) grow[i] += g[i];
    });
    return Var(T, self);
}

Var slice_cols(Var M, int from, int len) {
    check_matrix(M.val(), "slice_cols");
    const int n = M.val().dim(0), m = M.val().dim(1);
    if (from < 0 || len < 0 || from + len > m) throw ShapeError("slice_cols: out of range");
    Tape& T = *M.tape;
    Tensor out({n, len});
    for (int r = 0; r < n; ++r)
        for (int j = 0; j < len; ++j) out.at(r, j) = M.val().at(r, from + j);
    const int self = static_cast<int>(T.size());
    const int mid = M.id;
    T.push(std::move(out), [self, mid, from, len, n, m](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gm = t.grad(mid);
        for (int r = 0; r < n; ++r)
            for (int j = 0; j < len; ++j) gm.data[static_cast<size_t>(r) * m + from + j] += g.at(r, j);
    });
    return Var(T, self);
}

// ---- normalization / losses ----------------------------------------------

Var l2_normalize(Var x, double eps) {
    check_vector(x.val(), "l2_normalize");
    Tape& T = *x.tape;
    const double r = x.val().norm2();
    Tensor out({x.val().size()});
    if (r >= eps)
        for (int i = 0; i < out.size(); ++i) out[i] = x.val()[i] / r;
    const int self = static_cast<int>(T.size());
    const int xid = x.id;
    T.push(std::move(out), [self, xid, r, eps](Tape& t) {
        if (r < eps) return; // zero-vector guard: no gradient
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.val(xid);
        Tensor& gx = t.grad(xid);
        double xg = 0.0;
        for (int i = 0; i < xv.size(); ++i) xg += xv[i] * g[i];
        const double r3 = r * r * r;
        for (int i = 0; i < xv.size(); ++i) gx[i] += g[i] / r - xv[i] * xg / r3;
    });
    return Var(T, self);
}

Var cosine(Var a, Var b, double eps) {
    check_same_tape(a, b, "cosine");
    require_same_shape(a.val(), b.val(), "cosine");
    check_vector(a.val(), "cosine");
    Tape& T = *a.tape;
    const double ra = a.val().norm2();
    const double rb = b.val().norm2();
    double c = 0.0;
    const bool live = ra >= eps && rb >= eps;
    if (live) {
        double d = 0.0;
        for (int i = 0; i < a.val().size(); ++i) d += a.val()[i] * b.val()[i];
        c = d / (ra * rb);
    }
    const int self = static_cast<int>(T.size());
    const int aid = a.id, bid = b.id;
    T.push(Tensor::scalar(c), [self, aid, bid, ra, rb, c, live](Tape& t) {
        if (!live) return;
        const double g = t.grad(self)[0];
        const Tensor& av = t.val(aid);
        const Tensor& bv = t.val(bid);
        Tensor& ga = t.grad(aid);
        Tensor& gb = t.grad(bid);
        const double inv = 1.0 / (ra * rb);
        for (int i = 0; i < av.size(); ++i) {
            ga[i] += g * (bv[i] * inv - c * av[i] / (ra * ra));
            gb[i] += g * (av[i] * inv - c * bv[i] / (rb * rb));
        }
    });
    return Var(T, self);
}

Var softmax(Var x) {
    check_vector(x.val(), "softmax");
    Tape& T = *x.tape;
    const Tensor& xv = x.val();
    double mx = xv[0];
    for (double v : xv.data) mx = std::max(mx, v);
    Tensor out({xv.size()});
    double z = 0.0;
    for (int i = 0; i < xv.size(); ++i) {
        out[i] = std::exp(xv[i] - mx);
        z += out[i];
    }
    for (double& v : out.data) v /= z;
    const int self = static_cast<int>(T.size());
    const int xid = x.id;
    T.push(std::move(out), [self, xid](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& p = t.val(self);
        Tensor& gx = t.grad(xid);
        double gp = 0.0;
        for (int i = 0; i < p.size(); ++i) gp += g[i] * p[i];
        for (int i = 0; i < p.size(); ++i) gx[i] += p[i] * (g[i] - gp);
    });
    return Var(T, self);
}

Var logsumexp(Var x) {
    check_vector(x.val(), "logsumexp");
    Tape& T = *x.tape;
    const Tensor& xv = x.val();
    double mx = xv[0];
    for (double v : xv.data) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : xv.data) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    const int self = static_cast<int>(T.size());
    const int xid = x.id;
    T.push(Tensor::scalar(lse), [self, xid, lse](Tape& t) {
        const double g = t.grad(self)[0];
        const Tensor& xv2 = t.val(xid);
        Tensor& gx = t.grad(xid);
        for (int i = 0; i < xv2.size(); ++i) gx[i] += g * std::exp(xv2[i] - lse);
    });
    return Var(T, self);
}

Var pick(Var x, int index) {
    check_vector(x.val(), "pick");
    if (index < 0 || index >= x.val().size()) throw ShapeError("pick: index out of range");
    Tape& T = *x.tape;
    const int self = static_cast<int>(T.size());
    const int xid = x.id;
    T.push(Tensor::scalar(x.val()[index]), [self, xid, index](Tape& t) {
        t.grad(xid)[index] += t.grad(self)[0];
    });
    return Var(T, self);
}

Var mse(Var a, Var b) {
    check_same_tape(a, b, "mse");
    require_same_shape(a.val(), b.val(), "mse");
    Tape& T = *a.tape;
    const int n = a.val().size();
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = a.val()[i] - b.val()[i];
        s += d * d;
    }
    const int self = static_cast<int>(T.size());
    const int aid = a.id, bid = b.id;
    T.push(Tensor::scalar(s / n), [self, aid, bid, n](Tape& t) {
        const double g = t.grad(self)[0] * 2.0 / n;
        const Tensor& av = t.val(aid);
        const Tensor& bv = t.val(bid);
        Tensor& ga = t.grad(aid);
        Tensor& gb = t.grad(bid);
        for (int i = 0; i < n; ++i) {
            const double d = g * (av[i] - bv[i]);
            ga[i] += d;
            gb[i] -= d;
        }
    });
    return Var(T, self);
}

// ---- batch statistics ------------------------------------------------------

Var col_mean(Var M) {
    check_matrix(M.val(), "col_mean");
    const int n = M.val().dim(0), m = M.val().dim(1);
    Tape& T = *M.tape;
    Tensor out({m});
    for (int r = 0; r < n; ++r)
        for (int j = 0; j < m; ++j) out[j] += M.val().at(r, j);
    for (double& v : out.data) v /= n;
    const int self = static_cast<int>(T.size());
    const int mid = M.id;
    T.push(std::move(out), [self, mid, n, m](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gm = t.grad(mid);
        for (int r = 0; r < n; ++r)
            for (int j = 0; j < m; ++j) gm.data[static_cast<size_t>(r) * m + j] += g[j] / n;
    });
    return Var(T, self);
}

Var sub_row(Var M, Var r) {
    check_same_tape(M, r, "sub_row");
    check_matrix(M.val(), "sub_row M");
    check_vector(r.val(), "sub_row r");
    const int n = M.val().dim(0), m = M.val().dim(1);
    if (r.val().size() != m) throw ShapeError("sub_row: size mismatch");
    Tape& T = *M.tape;
    Tensor out = M.val();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(i, j) -= r.val()[j];
    const int self = static_cast<int>(T.size());
    const int mid = M.id, rid = r.id;
    T.push(std::move(out), [self, mid, rid, n, m](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gm = t.grad(mid);
        Tensor& gr = t.grad(rid);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                const double gv = g.at(i, j);
                gm.data[static_cast<size_t>(i) * m + j] += gv;
                gr[j] -= gv;
            }
    });
    return Var(T, self);
}

Var mul_row(Var M, Var r) {
    check_same_tape(M, r, "mul_row");
    check_matrix(M.val(), "mul_row M");
    check_vector(r.val(), "mul_row r");
    const int n = M.val().dim(0), m = M.val().dim(1);
    if (r.val().size() != m) throw ShapeError("mul_row: size mismatch");
    Tape& T = *M.tape;
    Tensor out = M.val();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(i, j) *= r.val()[j];
    const int self = static_cast<int>(T.size());
    const int mid = M.id, rid = r.id;
    T.push(std::move(out), [self, mid, rid, n, m](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& mv = t.val(mid);
        const Tensor& rv = t.val(rid);
        Tensor& gm = t.grad(mid);
        Tensor& gr = t.grad(rid);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                const double gv = g.at(i, j);
                gm.data[static_cast<size_t>(i) * m + j] += gv * rv[j];
                gr[j] += gv * mv.at(i, j);
            }
    });
    return Var(T, self);
}

Var rsqrt_guard(Var x, double tau) {
    Tape& T = *x.tape;
    Tensor out = x.val();
    for (double& v : out.data) v = v > tau ? 1.0 / std::sqrt(v) : 0.0;
    const int self = static_cast<int>(T.size());
    const int xid = x.id;
    T.push(std::move(out), [self, xid, tau](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.val(xid);
        Tensor& gx = t.grad(xid);
        for (int i = 0; i < xv.size(); ++i)
            if (xv[i] > tau) gx[i] += g[i] * (-0.5 * std::pow(xv[i], -1.5));
    });
    return Var(T, self);
}

// ---- 3-D conv stack --------------------------------------------------------

namespace {

struct VolShape {
    int c, d, h, w;
};

VolShape vol_shape(const Tensor& t, const char* where) {
    if (t.rank() != 4) throw ShapeError(std::string(where) + ": expected [C,D,H,W], got " + t.shape_str());
    return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
}

inline size_t vidx(const VolShape& s, int c, int z, int y, int x) {
    return ((static_cast<size_t>(c) * s.d + z) * s.h + y) * s.w + x;
}

} // namespace

Var conv3d(Var x, Var W, Var b) {
    check_same_tape(x, W, "conv3d");
    const VolShape in = vol_shape(x.val(), "conv3d x");
    const Tensor& wv = W.val();
    if (wv.rank() != 5 || wv.dim(2) != 3 || wv.dim(3) != 3 || wv.dim(4) != 3)
        throw ShapeError("conv3d: weights must be [Cout,Cin,3,3,3]");
    const int cout = wv.dim(0), cin = wv.dim(1);
    if (cin != in.c) throw ShapeError("conv3d: channel mismatch");
    if (b.val().size() != cout) throw ShapeError("conv3d: bias size mismatch");
    Tape& T = *x.tape;
    const VolShape os{cout, in.d, in.h, in.w};
    Tensor out({cout, in.d, in.h, in.w});
    const auto widx = [cin](int co, int ci, int dz, int dy, int dx) {
        return (((static_cast<size_t>(co) * cin + ci) * 3 + dz) * 3 + dy) * 3 + dx;
    };
    for (int co = 0; co < cout; ++co) {
        for (int z = 0; z < in.d; ++z)
            for (int y = 0; y < in.h; ++y)
                for (int xx = 0; xx < in.w; ++xx) {
                    double s = b.val()[co];
                    for (int ci = 0; ci < cin; ++ci)
                        for (int dz = 0; dz < 3; ++dz) {
                            const int iz = z + dz - 1;
                            if (iz < 0 || iz >= in.d) continue;
                            for (int dy = 0; dy < 3; ++dy) {
                                const int iy = y + dy - 1;
                                if (iy < 0 || iy >= in.h) continue;
                                for (int dx = 0; dx < 3; ++dx) {
                                    const int ix = xx + dx - 1;
                                    if (ix < 0 || ix >= in.w) continue;
                                    s += wv.data[widx(co, ci, dz, dy, dx)] *
                                         x.val().data[vidx(in, ci, iz, iy, ix)];
                                }
                            }
                        }
                    out.data[vidx(os, co, z, y, xx)] = s;
                }
    }
    const int self = static_cast<int>(T.size());
    const int xid = x.id, wid = W.id, bid = b.id;
    T.push(std::move(out), [self, xid, wid, bid, in, os, cout, cin, widx](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.val(xid);
        const Tensor& wv2 = t.val(wid);
        Tensor& gx = t.grad(xid);
        Tensor& gw = t.grad(wid);
        Tensor& gb = t.grad(bid);
        for (int co = 0; co < cout; ++co) {
            for (int z = 0; z < in.d; ++z)
                for (int y = 0; y < in.h; ++y)
                    for (int xx = 0; xx < in.w; ++xx) {
                        const double gv = g.data[vidx(os, co, z, y, xx)];
                        if (gv == 0.0) continue;
                        gb[co] += gv;
                        for (int ci = 0; ci < cin; ++ci)
                            for (int dz = 0; dz < 3; ++dz) {
                                const int iz = z + dz - 1;
                                if (iz < 0 || iz >= in.d) continue;
                                for (int dy = 0; dy < 3; ++dy) {
                                    const int iy = y + dy - 1;
                                    if (iy < 0 || iy >= in.h) continue;
                                    for (int dx = 0; dx < 3; ++dx) {
                                        const int ix = xx + dx - 1;
                                        if (ix < 0 || ix >= in.w) continue;
                                        const size_t xi = vidx(in, ci, iz, iy, ix);
                                        gw.data[widx(co, ci, dz, dy, dx)] += gv * xv.data[xi];
                                        gx.data[xi] += gv * wv2.data[widx(co, ci, dz, dy, dx)];
                                    }
                                }
                            }
                    }
        }
    });
    return Var(T, self);
}

Var avgpool3d(Var x) {
    const VolShape in = vol_shape(x.val(), "avgpool3d");
    const int od = (in.d + 1) / 2, oh = (in.h + 1) / 2, ow = (in.w + 1) / 2;
    Tape& T = *x.tape;
    const VolShape os{in.c, od, oh, ow};
    Tensor out({in.c, od, oh, ow});
    for (int c = 0; c < in.c; ++c)
        for (int z = 0; z < od; ++z)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) {
                    const int z1 = std::min(2 * z + 1, in.d - 1);
                    const int y1 = std::min(2 * y + 1, in.h - 1);
                    const int x1 = std::min(2 * xx + 1, in.w - 1);
                    double s = 0.0;
                    int cnt = 0;
                    for (int iz = 2 * z; iz <= z1; ++iz)
                        for (int iy = 2 * y; iy <= y1; ++iy)
                            for (int ix = 2 * xx; ix <= x1; ++ix) {
                                s += x.val().data[vidx(in, c, iz, iy, ix)];
                                ++cnt;
                            }
                    out.data[vidx(os, c, z, y, xx)] = s / cnt;
                }
    const int self = static_cast<int>(T.size());
    const int xid = x.id;
    T.push(std::move(out), [self, xid, in, os, od, oh, ow](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad(xid);
        for (int c = 0; c < in.c; ++c)
            for (int z = 0; z < od; ++z)
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx) {
                        const int z1 = std::min(2 * z + 1, in.d - 1);
                        const int y1 = std::min(2 * y + 1, in.h - 1);
                        const int x1 = std::min(2 * xx + 1, in.w - 1);
                        const int cnt = (z1 - 2 * z + 1) * (y1 - 2 * y + 1) * (x1 - 2 * xx + 1);
                        const double gv = g.data[vidx(os, c, z, y, xx)] / cnt;
                        for (int iz = 2 * z; iz <= z1; ++iz)
                            for (int iy = 2 * y; iy <= y1; ++iy)
                                for (int ix = 2 * xx; ix <= x1; ++ix)
                                    gx.data[vidx(in, c, iz, iy, ix)] += gv;
                    }
    });
    return Var(T, self);
}

Var instance_norm(Var x, double eps) {
    const VolShape in = vol_shape(x.val(), "instance_norm");
    const int spatial = in.d * in.h * in.w;
    Tape& T = *x.tape;
    Tensor out({in.c, in.d, in.h, in.w});
    std::vector<double> mean(in.c), inv_std(in.c);
    for (int c = 0; c < in.c; ++c) {
        const double* src = &x.val().data[static_cast<size_t>(c) * spatial];
        double mu = 0.0;
        for (int i = 0; i < spatial; ++i) mu += src[i];
        mu /= spatial;
        double var = 0.0;
        for (int i = 0; i < spatial; ++i) {
            const double d = src[i] - mu;
            var += d * d;
        }
        var /= spatial;
        mean[c] = mu;
        inv_std[c] = 1.0 / std::sqrt(var + eps);
        double* dst = &out.data[static_cast<size_t>(c) * spatial];
        for (int i = 0; i < spatial; ++i) dst[i] = (src[i] - mu) * inv_std[c];
    }
    const int self = static_cast<int>(T.size());
    const int xid = x.id;
    T.push(std::move(out), [self, xid, in, spatial, inv_std](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.val(self); // normalized values
        Tensor& gx = t.grad(xid);
        for (int c = 0; c < in.c; ++c) {
            const double* gc = &g.data[static_cast<size_t>(c) * spatial];
            const double* yc = &y.data[static_cast<size_t>(c) * spatial];
            double* gxc = &gx.data[static_cast<size_t>(c) * spatial];
            double sum_g = 0.0, sum_gy = 0.0;
            for (int i = 0; i < spatial; ++i) {
                sum_g += gc[i];
                sum_gy += gc[i] * yc[i];
            }
            const double k = inv_std[c] / spatial;
            for (int i = 0; i < spatial; ++i)
                gxc[i] += k * (spatial * gc[i] - sum_g - yc[i] * sum_gy);
        }
    });
    return Var(T, self);
}

Var global_avg_pool(Var x) {
    const VolShape in = vol_shape(x.val(), "global_avg_pool");
    const int spatial = in.d * in.h * in.w;
    Tape& T = *x.tape;
    Tensor out({in.c});
    for (int c = 0; c < in.c; ++c) {
        const double* src = &x.val().data[static_cast<size_t>(c) * spatial];
        double s = 0.0;
        for (int i = 0; i < spatial; ++i) s += src[i];
        out[c] = s / spatial;
    }
    const int self = static_cast<int>(T.size());
    const int xid = x.id;
    T.push(std::move(out), [self, xid, in, spatial](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad(xid);
        for (int c = 0; c < in.c; ++c) {
            const double gv = g[c] / spatial;
            double* dst = &gx.data[static_cast<size_t>(c) * spatial];
            for (int i = 0; i < spatial; ++i) dst[i] += gv;
        }
    });
    return Var(T, self);
}

} // namespace ad
} // namespace pmdx
