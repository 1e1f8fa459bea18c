#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"

using namespace pmdx;
using namespace pmdx_test;
namespace ad = pmdx::ad;

namespace {

// Attach a fixed random linear functional so op outputs reduce to a scalar.
ad::Var reduce(ad::Tape& t, ad::Var v, uint64_t seed) {
    Rng rng(seed);
    Tensor w(v.val().shape);
    for (double& x : w.data) x = rng.normal();
    return ad::dot(v, ad::make_const(t, w));
}

} // namespace

TEST_CASE("elementwise and reduction gradients") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        std::vector<Tensor> params{random_tensor({7}, rng), random_tensor({7}, rng)};
        // keep relu/abs away from the kink
        for (auto& p : params)
            for (double& v : p.data) v += (v >= 0 ? 0.5 : -0.5);

        auto build = [seed](ad::Tape& t, const std::vector<ad::Var>& L) {
            ad::Var s1 = ad::add(L[0], L[1]);
            ad::Var s2 = ad::mul(ad::sub(L[0], L[1]), ad::relu(L[0]));
            ad::Var s3 = ad::vabs(L[1]);
            ad::Var mix = ad::add(ad::scale(s1, 0.7), ad::add(s2, s3));
            ad::Var a = ad::vsum(mix);
            ad::Var b = ad::vmean(ad::mul(mix, mix));
            ad::Var c = ad::sum_sq(L[0]);
            ad::Var d = ad::dot(L[0], L[1]);
            ad::Var r = ad::add(ad::add(a, b), ad::add(c, d));
            (void)seed;
            return r;
        };
        CHECK(max_grad_rel_error(params, build) < 1e-6);
    }
}

TEST_CASE("linear layers and matrix op gradients") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed * 11);
        std::vector<Tensor> params{
            random_tensor({5}, rng),       // x
            random_tensor({4, 5}, rng),    // W
            random_tensor({4}, rng),       // b
            random_tensor({3, 5}, rng),    // X rows
            random_tensor({3, 4}, rng),    // M2 for matmul_at_b (rows=3)
        };
        auto build = [seed](ad::Tape& t, const std::vector<ad::Var>& L) {
            ad::Var y = ad::linear(L[0], L[1], L[2]);
            ad::Var Y = ad::linear_rows(L[3], L[1], L[2]); // [3,4]
            ad::Var mv = ad::matvec(L[1], L[0]);           // [4]
            ad::Var mt = ad::matvec_t(L[1], y);            // [5]
            ad::Var C = ad::matmul_at_b(L[4], Y, 0.5);     // [4,4]
            ad::Var r = ad::add(reduce(t, y, seed), reduce(t, mv, seed + 1));
            r = ad::add(r, reduce(t, mt, seed + 2));
            r = ad::add(r, ad::sum_sq(C));
            r = ad::add(r, ad::vmean(Y));
            return r;
        };
        CHECK(max_grad_rel_error(params, build) < 1e-6);
    }
}

TEST_CASE("structural op gradients (concat/slice/stack/row/slice_cols)") {
    Rng rng(99);
    std::vector<Tensor> params{random_tensor({4}, rng), random_tensor({3}, rng),
                               random_tensor({4}, rng)};
    auto build = [](ad::Tape& t, const std::vector<ad::Var>& L) {
        ad::Var c = ad::concat({L[0], L[1], L[2]});          // [11]
        ad::Var s = ad::slice(c, 2, 6);                      // [6]
        ad::Var M = ad::stack_rows({L[0], L[2]});            // [2,4]
        ad::Var r0 = ad::row(M, 1);                          // [4]
        ad::Var sc = ad::slice_cols(M, 1, 2);                // [2,2]
        ad::Var r = ad::add(reduce(t, s, 5), reduce(t, r0, 6));
        r = ad::add(r, ad::sum_sq(sc));
        return r;
    };
    CHECK(max_grad_rel_error(params, build) < 1e-6);
}

TEST_CASE("normalization and loss gradients") {
    for (uint64_t seed = 3; seed <= 8; ++seed) {
        Rng rng(seed * 7);
        std::vector<Tensor> params{random_tensor({6}, rng), random_tensor({6}, rng)};
        auto build = [seed](ad::Tape& t, const std::vector<ad::Var>& L) {
            ad::Var n = ad::l2_normalize(L[0]);
            ad::Var cs = ad::cosine(L[0], L[1]);
            ad::Var sm = ad::softmax(L[1]);
            ad::Var lse = ad::logsumexp(ad::scale(L[0], 0.8));
            ad::Var pk = ad::pick(sm, 2);
            ad::Var e = ad::mse(L[0], L[1]);
            ad::Var r = ad::add(reduce(t, n, seed), cs);
            r = ad::add(r, ad::add(lse, pk));
            r = ad::add(r, e);
            return r;
        };
        CHECK(max_grad_rel_error(params, build) < 1e-6);
    }
}

TEST_CASE("zero-vector guards return zero without gradient blowups") {
    ad::Tape t;
    ad::Var z = ad::make_leaf(t, Tensor({4}));
    ad::Var o = ad::make_leaf(t, Tensor::vec({1, 0, 0, 0}));
    ad::Var n = ad::l2_normalize(z);
    ad::Var c = ad::cosine(z, o);
    for (double v : n.val().data) CHECK(v == 0.0);
    CHECK(c.val()[0] == 0.0);
    ad::Var root = ad::add(ad::vsum(n), c);
    t.backward(root.id);
    for (double v : t.grad(z.id).data) CHECK(v == 0.0);
}

TEST_CASE("detach stops gradient flow exactly") {
    ad::Tape t;
    Rng rng(5);
    Tensor a = random_tensor({5}, rng);
    ad::Var x = ad::make_leaf(t, a);
    ad::Var y = ad::make_leaf(t, random_tensor({5}, rng));
    ad::Var loss = ad::mse(x, ad::detach(y));
    t.backward(loss.id);
    bool xs_nonzero = false;
    for (double v : t.grad(x.id).data) xs_nonzero |= v != 0.0;
    CHECK(xs_nonzero);
    for (double v : t.grad(y.id).data) CHECK(v == 0.0);
}

TEST_CASE("batch statistics gradients") {
    for (uint64_t seed = 1; seed <= 4; ++seed) {
        Rng rng(seed * 13);
        std::vector<Tensor> params{random_tensor({6, 3}, rng), random_tensor({6, 2}, rng)};
        auto build = [](ad::Tape& t, const std::vector<ad::Var>& L) {
            ad::Var mu = ad::col_mean(L[0]);
            ad::Var X = ad::sub_row(L[0], mu);
            ad::Var v = ad::col_mean(ad::mul(X, X));
            ad::Var inv = ad::rsqrt_guard(v);
            ad::Var Z = ad::mul_row(X, inv);
            ad::Var mu2 = ad::col_mean(L[1]);
            ad::Var X2 = ad::sub_row(L[1], mu2);
            ad::Var C = ad::matmul_at_b(Z, X2, 1.0 / 6.0);
            return ad::sum_sq(C);
        };
        CHECK(max_grad_rel_error(params, build) < 1e-5);
    }
}

TEST_CASE("conv stack gradients on tiny volumes") {
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        Rng rng(seed * 17);
        std::vector<Tensor> params{
            random_tensor({2, 4, 4, 4}, rng),    // input volume, 2 channels
            random_tensor({3, 2, 3, 3, 3}, rng, 0.3), // conv weights
            random_tensor({3}, rng, 0.1),        // conv bias
        };
        auto build = [seed](ad::Tape& t, const std::vector<ad::Var>& L) {
            ad::Var c = ad::conv3d(L[0], L[1], L[2]);
            ad::Var n = ad::instance_norm(c);
            ad::Var r = ad::relu(n);
            ad::Var p = ad::avgpool3d(r);
            ad::Var g = ad::global_avg_pool(p);
            return reduce(t, g, seed + 100);
        };
        CHECK(max_grad_rel_error(params, build, /*stride=*/3) < 1e-5);
    }
}

TEST_CASE("avgpool handles odd and unit axes") {
    ad::Tape t;
    Tensor v({1, 3, 1, 5});
    for (int i = 0; i < v.size(); ++i) v[i] = i + 1;
    ad::Var x = ad::make_leaf(t, v);
    ad::Var p = ad::avgpool3d(x);
    CHECK(p.val().shape == std::vector<int>{1, 2, 1, 3});
    // first output cell averages over z in {0,1}, y {0}, x {0,1}
    CHECK(p.val()[0] == doctest::Approx((1 + 2 + 6 + 7) / 4.0));
    // last cell: z {2}, y {0}, x {4} -> single element 15
    CHECK(p.val()[p.val().size() - 1] == doctest::Approx(15.0));
}

TEST_CASE("softmax output sums to one and shifts are invariant") {
    ad::Tape t;
    ad::Var x = ad::make_leaf(t, Tensor::vec({0.3, -1.2, 2.0, 0.0}));
    ad::Var y = ad::make_leaf(t, Tensor::vec({0.3 + 7, -1.2 + 7, 2.0 + 7, 0.0 + 7}));
    ad::Var p = ad::softmax(x);
    ad::Var q = ad::softmax(y);
    double s = 0.0;
    for (double v : p.val().data) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < 4; ++i) CHECK(p.val()[i] == doctest::Approx(q.val()[i]).epsilon(1e-12));
}
