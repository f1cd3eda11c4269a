#include <cmath>

#include "doctest.h"
#include "videogoal/gradcheck.hpp"
#include "videogoal/tape.hpp"

using namespace videogoal;
using nn::ParamStore;
using nn::Rng;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

Tensor<double> random_tensor(int r, int c, Rng& rng, double scale = 1.0) {
    Tensor<double> t(r, c);
    for (auto& x : t.v) x = rng.uniform_sym(scale);
    return t;
}

// grad-checks a scalar-valued graph builder over named inputs
double check_op(const std::function<Var(Tape<double>&, ParamStore<double>&)>& build,
                ParamStore<double>& point, double eps = 1e-5) {
    nn::GradCheckFn f = [&](ParamStore<double>& p,
                            std::map<std::string, Tensor<double>>* grads) -> double {
        Tape<double> tape;
        Var root = build(tape, p);
        if (grads) {
            tape.backward(root);
            tape.export_grads(*grads);
        }
        return tape.val(root).v[0];
    };
    return nn::grad_check(f, point, eps);
}

}  // namespace

TEST_CASE("op gradients pass finite-difference checks on random shapes") {
    Rng shape_rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 1 + static_cast<int>(shape_rng.uniform_int(4));
        int k = 1 + static_cast<int>(shape_rng.uniform_int(4));
        int d = 1 + static_cast<int>(shape_rng.uniform_int(4));
        Rng rng(500 + trial);

        SUBCASE("") {}  // keep one body; subcases not needed per trial

        {
            ParamStore<double> p;
            p.add("a", random_tensor(n, k, rng));
            p.add("b", random_tensor(k, d, rng));
            double err = check_op(
                [](Tape<double>& t, ParamStore<double>& s) {
                    return t.sum(t.matmul(t.param("a", s.get("a")), t.param("b", s.get("b"))));
                },
                p);
            CHECK(err < 1e-6);
        }
        {
            ParamStore<double> p;
            p.add("a", random_tensor(n, d, rng));
            p.add("b", random_tensor(n, d, rng));
            double err = check_op(
                [](Tape<double>& t, ParamStore<double>& s) {
                    Var a = t.param("a", s.get("a"));
                    Var b = t.param("b", s.get("b"));
                    return t.sum(t.mul(t.add(a, b), t.tanh_op(a)));
                },
                p);
            CHECK(err < 1e-6);
        }
        {
            ParamStore<double> p;
            p.add("a", random_tensor(n, d, rng));
            p.add("g", random_tensor(1, d, rng));
            p.add("be", random_tensor(1, d, rng));
            double err = check_op(
                [](Tape<double>& t, ParamStore<double>& s) {
                    return t.sum(t.layer_norm(t.param("a", s.get("a")), t.param("g", s.get("g")),
                                              t.param("be", s.get("be"))));
                },
                p);
            CHECK(err < 1e-6);
        }
        {
            ParamStore<double> p;
            p.add("a", random_tensor(n, d, rng));
            double err = check_op(
                [](Tape<double>& t, ParamStore<double>& s) {
                    return t.mean(t.softplus(t.param("a", s.get("a"))));
                },
                p);
            CHECK(err < 1e-6);
        }
        {
            // attention with a random mask (every query keeps at least one key)
            int m = 1 + static_cast<int>(shape_rng.uniform_int(4));
            ParamStore<double> p;
            p.add("q", random_tensor(n, d, rng));
            p.add("k", random_tensor(m, d, rng));
            p.add("v", random_tensor(m, k, rng));
            p.add("bias", random_tensor(n, m, rng, 0.3));
            std::vector<uint8_t> mask(static_cast<size_t>(n) * m, 0);
            for (int i = 0; i < n; ++i) {
                mask[static_cast<size_t>(i) * m + rng.uniform_int(m)] = 1;
                for (int j = 0; j < m; ++j)
                    if (rng.uniform() < 0.6) mask[static_cast<size_t>(i) * m + j] = 1;
            }
            double err = check_op(
                [&mask](Tape<double>& t, ParamStore<double>& s) {
                    return t.sum(t.attention(t.param("q", s.get("q")), t.param("k", s.get("k")),
                                             t.param("v", s.get("v")), mask,
                                             t.param("bias", s.get("bias"))));
                },
                p);
            CHECK(err < 1e-6);
        }
        {
            ParamStore<double> p;
            p.add("a", random_tensor(n, 3 + d, rng));
            std::vector<int> targets(n);
            for (int i = 0; i < n; ++i) targets[i] = static_cast<int>(rng.uniform_int(3 + d));
            double err = check_op(
                [&targets](Tape<double>& t, ParamStore<double>& s) {
                    return t.cross_entropy(t.param("a", s.get("a")), targets);
                },
                p);
            CHECK(err < 1e-6);
        }
        {
            ParamStore<double> p;
            p.add("a", random_tensor(n, d, rng));
            double err = check_op(
                [](Tape<double>& t, ParamStore<double>& s) {
                    return t.sum(t.log_softmax(t.param("a", s.get("a"))));
                },
                p);
            CHECK(err < 1e-6);
        }
        {
            ParamStore<double> p;
            p.add("tab", random_tensor(4, d, rng));
            std::vector<int> idx(n + 2);
            for (auto& i : idx) i = static_cast<int>(rng.uniform_int(4));
            double err = check_op(
                [&idx](Tape<double>& t, ParamStore<double>& s) {
                    return t.sum(t.tanh_op(t.embedding(t.param("tab", s.get("tab")), idx)));
                },
                p);
            CHECK(err < 1e-6);
        }
        {
            // reparameterize + gaussian_kl + softmax + slicing/concat/reductions
            ParamStore<double> p;
            p.add("mu_q", random_tensor(2, d, rng));
            Tensor<double> sq = random_tensor(2, d, rng);
            for (auto& x : sq.v) x = 0.3 + std::abs(x);
            p.add("sig_q", sq);
            p.add("mu_p", random_tensor(2, d, rng));
            Tensor<double> sp = random_tensor(2, d, rng);
            for (auto& x : sp.v) x = 0.3 + std::abs(x);
            p.add("sig_p", sp);
            Tensor<double> noise = random_tensor(2, d, rng);
            double err = check_op(
                [&noise](Tape<double>& t, ParamStore<double>& s) {
                    Var mu_q = t.param("mu_q", s.get("mu_q"));
                    Var sig_q = t.param("sig_q", s.get("sig_q"));
                    Var mu_p = t.param("mu_p", s.get("mu_p"));
                    Var sig_p = t.param("sig_p", s.get("sig_p"));
                    Var g = t.reparameterize(mu_q, sig_q, noise);
                    Var kl = t.gaussian_kl(mu_q, sig_q, mu_p, sig_p);
                    Var sm = t.softmax(t.concat_rows({t.slice_rows(g, 0, 1), mu_p}));
                    return t.add(t.mean(sm), kl);
                },
                p);
            CHECK(err < 1e-6);
        }
        {
            ParamStore<double> p;
            p.add("a", random_tensor(n, d, rng));
            p.add("s", random_tensor(1, 1, rng));
            double err = check_op(
                [](Tape<double>& t, ParamStore<double>& s) {
                    Var a = t.param("a", s.get("a"));
                    Var sc = t.param("s", s.get("s"));
                    return t.sum(t.scale_var(t.mean_rows(a), t.tanh_op(sc)));
                },
                p);
            CHECK(err < 1e-6);
        }
    }
}

TEST_CASE("grad_check of sum of squares is near exact") {
    ParamStore<double> p;
    Rng rng(7);
    p.add("x", random_tensor(3, 4, rng));
    double err = check_op(
        [](Tape<double>& t, ParamStore<double>& s) {
            Var x = t.param("x", s.get("x"));
            return t.sum(t.mul(x, x));
        },
        p);
    CHECK(err <= 1e-7);
}

TEST_CASE("constant function has exactly zero analytic gradient") {
    ParamStore<double> p;
    Rng rng(8);
    p.add("x", random_tensor(2, 2, rng));
    nn::GradCheckFn f = [](ParamStore<double>& s,
                           std::map<std::string, Tensor<double>>* grads) -> double {
        Tape<double> tape;
        tape.param("x", s.get("x"));
        Var c = tape.constant(Tensor<double>::full(1, 1, 3.0));
        if (grads) {
            tape.backward(c);
            tape.export_grads(*grads);
        }
        return tape.val(c).v[0];
    };
    std::map<std::string, Tensor<double>> grads;
    f(p, &grads);
    for (const auto& [name, g] : grads)
        for (double x : g.v) CHECK(x == 0.0);
}

TEST_CASE("softmax of a constant vector is uniform and rows sum to one") {
    Tape<double> tape;
    Var a = tape.constant(Tensor<double>::full(1, 5, 2.5));
    Var sm = tape.softmax(a);
    for (int i = 0; i < 5; ++i) CHECK(tape.val(sm).v[i] == doctest::Approx(0.2).epsilon(1e-12));

    Rng rng(9);
    Tensor<double> r = random_tensor(6, 7, rng, 4.0);
    Tape<double> tape2;
    Var sm2 = tape2.softmax(tape2.constant(r));
    for (int row = 0; row < 6; ++row) {
        double sum = 0;
        for (int c = 0; c < 7; ++c) sum += tape2.val(sm2).at(row, c);
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("layer norm output has per-row mean 0 and variance 1 before affine") {
    Rng rng(10);
    Tensor<double> x = random_tensor(4, 8, rng, 3.0);
    Tape<double> tape;
    Var out = tape.layer_norm(tape.constant(x), tape.constant(Tensor<double>::full(1, 8, 1.0)),
                              tape.constant(Tensor<double>(1, 8)), 1e-12);
    for (int r = 0; r < 4; ++r) {
        double mean = 0, var = 0;
        for (int c = 0; c < 8; ++c) mean += tape.val(out).at(r, c);
        mean /= 8;
        for (int c = 0; c < 8; ++c) {
            double d = tape.val(out).at(r, c) - mean;
            var += d * d;
        }
        var /= 8;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("attention with a single query=key returns the value row") {
    Tape<double> tape;
    Rng rng(11);
    Tensor<double> q = random_tensor(1, 4, rng);
    Tensor<double> v = random_tensor(1, 6, rng);
    Var out = tape.attention(tape.constant(q), tape.constant(q), tape.constant(v), {1});
    for (int i = 0; i < 6; ++i) CHECK(tape.val(out).v[i] == doctest::Approx(v.v[i]));
}

TEST_CASE("attention output is invariant to value rows at masked-out positions") {
    Rng rng(12);
    Tensor<double> q = random_tensor(3, 4, rng);
    Tensor<double> k = random_tensor(5, 4, rng);
    Tensor<double> v1 = random_tensor(5, 4, rng);
    Tensor<double> v2 = v1;
    // mask out key rows 1 and 3 for every query, then perturb those value rows
    std::vector<uint8_t> mask(15, 1);
    for (int r = 0; r < 3; ++r) {
        mask[static_cast<size_t>(r) * 5 + 1] = 0;
        mask[static_cast<size_t>(r) * 5 + 3] = 0;
    }
    for (int c = 0; c < 4; ++c) {
        v2.at(1, c) += 100.0;
        v2.at(3, c) -= 42.0;
    }
    Tape<double> t1, t2;
    Var o1 = t1.attention(t1.constant(q), t1.constant(k), t1.constant(v1), mask);
    Var o2 = t2.attention(t2.constant(q), t2.constant(k), t2.constant(v2), mask);
    for (size_t i = 0; i < t1.val(o1).v.size(); ++i)
        CHECK(t1.val(o1).v[i] == t2.val(o2).v[i]);
}

TEST_CASE("gaussian_kl closed-form values") {
    auto kl_1d = [](double mq, double sq, double mp, double sp) {
        Tape<double> tape;
        Var v = tape.gaussian_kl(tape.constant(Tensor<double>::full(1, 1, mq)),
                                 tape.constant(Tensor<double>::full(1, 1, sq)),
                                 tape.constant(Tensor<double>::full(1, 1, mp)),
                                 tape.constant(Tensor<double>::full(1, 1, sp)));
        return tape.val(v).v[0];
    };
    CHECK(kl_1d(0.7, 1.3, 0.7, 1.3) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl_1d(1.0, 1.0, 0.0, 1.0) == doctest::Approx(0.5));
    CHECK(kl_1d(0.0, 2.0, 0.0, 1.0) == doctest::Approx(0.80685).epsilon(1e-4));
}

TEST_CASE("gaussian_kl is nonnegative and zero only at identical distributions") {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        int d = 1 + static_cast<int>(rng.uniform_int(5));
        Tensor<double> mq = random_tensor(1, d, rng, 2.0);
        Tensor<double> mp = random_tensor(1, d, rng, 2.0);
        Tensor<double> sq(1, d), sp(1, d);
        for (int i = 0; i < d; ++i) {
            sq.v[i] = 0.05 + rng.uniform() * 3;
            sp.v[i] = 0.05 + rng.uniform() * 3;
        }
        Tape<double> tape;
        Var v = tape.gaussian_kl(tape.constant(mq), tape.constant(sq), tape.constant(mp),
                                 tape.constant(sp));
        CHECK(tape.val(v).v[0] >= 0.0);
    }
}

TEST_CASE("gaussian_kl rejects nonpositive sigma") {
    Tape<double> tape;
    Var mu = tape.constant(Tensor<double>::full(1, 1, 0.0));
    Var bad = tape.constant(Tensor<double>::full(1, 1, 0.0));
    Var good = tape.constant(Tensor<double>::full(1, 1, 1.0));
    CHECK_THROWS_AS((void)tape.gaussian_kl(mu, bad, mu, good), DimensionError);
    CHECK_THROWS_AS((void)tape.gaussian_kl(mu, good, mu, bad), DimensionError);
}

TEST_CASE("gaussian_kl matches a Monte-Carlo estimate within 3 standard errors") {
    // log q(x) - log p(x) averaged over reparameterized draws from q.
    Rng rng(14);
    for (int trial = 0; trial < 5; ++trial) {
        double mq = rng.uniform_sym(2), sq = 0.5 + rng.uniform() * 2;
        double mp = rng.uniform_sym(2), sp = 0.5 + rng.uniform() * 2;
        Tape<double> tape;
        Var v = tape.gaussian_kl(tape.constant(Tensor<double>::full(1, 1, mq)),
                                 tape.constant(Tensor<double>::full(1, 1, sq)),
                                 tape.constant(Tensor<double>::full(1, 1, mp)),
                                 tape.constant(Tensor<double>::full(1, 1, sp)));
        double analytic = tape.val(v).v[0];

        const int n = 200000;
        double sum = 0, sum2 = 0;
        for (int i = 0; i < n; ++i) {
            double x = mq + sq * rng.gaussian();
            double lq = -0.5 * std::pow((x - mq) / sq, 2) - std::log(sq);
            double lp = -0.5 * std::pow((x - mp) / sp, 2) - std::log(sp);
            double s = lq - lp;
            sum += s;
            sum2 += s * s;
        }
        double mean = sum / n;
        double se = std::sqrt((sum2 / n - mean * mean) / n);
        CHECK(std::abs(analytic - mean) < 3 * se + 1e-9);
    }
}

TEST_CASE("reparameterize basics") {
    Tape<double> tape;
    Rng rng(15);
    Tensor<double> mu = random_tensor(2, 3, rng);
    Tensor<double> sigma = random_tensor(2, 3, rng, 0.5);
    for (auto& x : sigma.v) x = std::abs(x) + 0.1;

    Var g0 = tape.reparameterize(tape.constant(mu), tape.constant(sigma), Tensor<double>(2, 3));
    for (size_t i = 0; i < mu.v.size(); ++i) CHECK(tape.val(g0).v[i] == mu.v[i]);

    Var g1 = tape.reparameterize(tape.constant(mu), tape.constant(Tensor<double>(2, 3)),
                                 random_tensor(2, 3, rng, 5.0));
    for (size_t i = 0; i < mu.v.size(); ++i) CHECK(tape.val(g1).v[i] == mu.v[i]);
}

TEST_CASE("reparameterized sample mean approaches mu") {
    Rng rng(16);
    const int n = 100000;
    double mu = 0.8, sigma = 1.7;
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += mu + sigma * rng.gaussian();
    double mean = sum / n;
    CHECK(std::abs(mean - mu) < 3 * sigma / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("shape mismatches raise dimension errors naming both shapes") {
    Tape<double> tape;
    Var a = tape.constant(Tensor<double>(2, 3));
    Var b = tape.constant(Tensor<double>(4, 5));
    try {
        (void)tape.add(a, b);
        CHECK(false);
    } catch (const DimensionError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x5]") != std::string::npos);
    }
    CHECK_THROWS_AS((void)tape.matmul(a, b), DimensionError);
}

TEST_CASE("deterministic rng is platform-stable") {
    Rng rng(42);
    CHECK(rng.next_u64() == Rng(42).next_u64());
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.uniform() == b.uniform());
        CHECK(a.uniform_int(17) == b.uniform_int(17));
    }
}
