#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "videogoal/tensor.hpp"

namespace videogoal::nn {

// Reverse-mode tape. Every operation appends a node holding its output value and
// a backward closure; nodes are created in topological order so backward() is a
// single reverse sweep. Instantiated with S=float for training and S=double for
// finite-difference verification.
using Var = int32_t;

template <typename S>
using EMat = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ECMat =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename S>
class Tape {
  public:
    struct Node {
        Tensor<S> val;
        Tensor<S> grad;  // allocated lazily during backward
        std::function<void(Tape&)> back;
        bool needs_grad = false;
    };

    Var constant(Tensor<S> t) { return push(std::move(t), false, nullptr); }

    Var leaf(Tensor<S> t) { return push(std::move(t), true, nullptr); }

    // Named leaf whose gradient can be exported after backward.
    Var param(const std::string& name, const Tensor<S>& t) {
        Var id = leaf(t);
        param_vars_.emplace_back(name, id);
        return id;
    }

    const Tensor<S>& val(Var id) const { return nodes_[id].val; }
    const Tensor<S>& grad(Var id) const { return nodes_[id].grad; }
    size_t num_nodes() const { return nodes_.size(); }

    // ---- arithmetic ----

    Var add(Var a, Var b) {
        check_same_shape(val(a), val(b), "add");
        Tensor<S> out = val(a);
        const auto& bv = val(b).v;
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += bv[i];
        return unary_or_binary(std::move(out), a, b, [a, b](Tape& t) {
            t.accumulate(a, t.out_grad());
            t.accumulate(b, t.out_grad());
        });
    }

    Var mul(Var a, Var b) {
        check_same_shape(val(a), val(b), "mul");
        Tensor<S> out = val(a);
        const auto& bv = val(b).v;
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= bv[i];
        return unary_or_binary(std::move(out), a, b, [a, b](Tape& t) {
            const auto& g = t.out_grad();
            const auto& av = t.val(a).v;
            const auto& bv2 = t.val(b).v;
            Tensor<S> ga = t.val(a);
            Tensor<S> gb = t.val(b);
            for (size_t i = 0; i < g.v.size(); ++i) {
                ga.v[i] = g.v[i] * bv2[i];
                gb.v[i] = g.v[i] * av[i];
            }
            t.accumulate(a, ga);
            t.accumulate(b, gb);
        });
    }

    Var scale(Var a, S c) {
        Tensor<S> out = val(a);
        for (auto& x : out.v) x *= c;
        return unary_or_binary(std::move(out), a, -1, [a, c](Tape& t) {
            Tensor<S> g = t.out_grad();
            for (auto& x : g.v) x *= c;
            t.accumulate(a, g);
        });
    }

    Var add_const(Var a, S c) {
        Tensor<S> out = val(a);
        for (auto& x : out.v) x += c;
        return unary_or_binary(std::move(out), a, -1,
                               [a](Tape& t) { t.accumulate(a, t.out_grad()); });
    }

    // (n x d) + (1 x d), bias broadcast over rows.
    Var add_row(Var a, Var bias) {
        const auto& av = val(a);
        const auto& bv = val(bias);
        if (bv.rows != 1 || bv.cols != av.cols)
            throw DimensionError("add_row: " + av.shape_str() + " vs " + bv.shape_str());
        Tensor<S> out = av;
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) out.at(r, c) += bv.at(0, c);
        return unary_or_binary(std::move(out), a, bias, [a, bias](Tape& t) {
            const auto& g = t.out_grad();
            t.accumulate(a, g);
            Tensor<S> gb(1, g.cols);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) gb.at(0, c) += g.at(r, c);
            t.accumulate(bias, gb);
        });
    }

    Var matmul(Var a, Var b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        if (av.cols != bv.rows)
            throw DimensionError("matmul: " + av.shape_str() + " x " + bv.shape_str());
        Tensor<S> out(av.rows, bv.cols);
        EMat<S>(out.v.data(), out.rows, out.cols).noalias() =
            ECMat<S>(av.v.data(), av.rows, av.cols) * ECMat<S>(bv.v.data(), bv.rows, bv.cols);
        return unary_or_binary(std::move(out), a, b, [a, b](Tape& t) {
            const auto& g = t.out_grad();
            const auto& av2 = t.val(a);
            const auto& bv2 = t.val(b);
            ECMat<S> G(g.v.data(), g.rows, g.cols);
            ECMat<S> A(av2.v.data(), av2.rows, av2.cols);
            ECMat<S> B(bv2.v.data(), bv2.rows, bv2.cols);
            Tensor<S> ga(av2.rows, av2.cols);
            Tensor<S> gb(bv2.rows, bv2.cols);
            EMat<S>(ga.v.data(), ga.rows, ga.cols).noalias() = G * B.transpose();
            EMat<S>(gb.v.data(), gb.rows, gb.cols).noalias() = A.transpose() * G;
            t.accumulate(a, ga);
            t.accumulate(b, gb);
        });
    }

    // ---- nonlinearities ----

    Var tanh_op(Var a) {
        Tensor<S> out = val(a);
        for (auto& x : out.v) x = std::tanh(x);
        Var id = unary_or_binary(std::move(out), a, -1, nullptr);
        set_back(id, [a, id](Tape& t) {
            const auto& g = t.out_grad();
            const auto& y = t.val(id).v;
            Tensor<S> ga = t.val(a);
            for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] = g.v[i] * (S(1) - y[i] * y[i]);
            t.accumulate(a, ga);
        });
        return id;
    }

    Var softplus(Var a) {
        Tensor<S> out = val(a);
        for (auto& x : out.v) x = softplus_scalar(x);
        return unary_or_binary(std::move(out), a, -1, [a](Tape& t) {
            const auto& g = t.out_grad();
            const auto& x = t.val(a).v;
            Tensor<S> ga = t.val(a);
            for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] = g.v[i] * sigmoid_scalar(x[i]);
            t.accumulate(a, ga);
        });
    }

    // Row-wise layer normalization with affine gamma/beta (each 1 x d).
    Var layer_norm(Var a, Var gamma, Var beta, S eps = S(1e-5)) {
        const auto& av = val(a);
        const auto& gv = val(gamma);
        const auto& bv = val(beta);
        if (gv.rows != 1 || gv.cols != av.cols || bv.rows != 1 || bv.cols != av.cols)
            throw DimensionError("layer_norm: " + av.shape_str() + " gamma " + gv.shape_str() +
                                 " beta " + bv.shape_str());
        const int n = av.rows, d = av.cols;
        Tensor<S> out(n, d);
        Tensor<S> xhat(n, d);
        std::vector<S> inv_std(n);
        for (int r = 0; r < n; ++r) {
            S mean = 0;
            for (int c = 0; c < d; ++c) mean += av.at(r, c);
            mean /= S(d);
            S var = 0;
            for (int c = 0; c < d; ++c) {
                S dx = av.at(r, c) - mean;
                var += dx * dx;
            }
            var /= S(d);
            S is = S(1) / std::sqrt(var + eps);
            inv_std[r] = is;
            for (int c = 0; c < d; ++c) {
                S xh = (av.at(r, c) - mean) * is;
                xhat.at(r, c) = xh;
                out.at(r, c) = xh * gv.at(0, c) + bv.at(0, c);
            }
        }
        Var id = push(std::move(out), needs(a) || needs(gamma) || needs(beta), nullptr);
        if (!nodes_[id].needs_grad) return id;
        set_back(id, [a, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                         Tape& t) {
            const auto& g = t.out_grad();
            const auto& gv2 = t.val(gamma);
            const int n2 = g.rows, d2 = g.cols;
            Tensor<S> ggamma(1, d2), gbeta(1, d2), ga(n2, d2);
            for (int r = 0; r < n2; ++r) {
                S sum_gy = 0, sum_gyx = 0;
                for (int c = 0; c < d2; ++c) {
                    S gy = g.at(r, c) * gv2.at(0, c);
                    sum_gy += gy;
                    sum_gyx += gy * xhat.at(r, c);
                    ggamma.at(0, c) += g.at(r, c) * xhat.at(r, c);
                    gbeta.at(0, c) += g.at(r, c);
                }
                for (int c = 0; c < d2; ++c) {
                    S gy = g.at(r, c) * gv2.at(0, c);
                    ga.at(r, c) = inv_std[r] * (gy - (sum_gy + xhat.at(r, c) * sum_gyx) / S(d2));
                }
            }
            t.accumulate(a, ga);
            t.accumulate(gamma, ggamma);
            t.accumulate(beta, gbeta);
        });
        return id;
    }

    // Gather rows from a table; backward scatter-adds.
    Var embedding(Var table, const std::vector<int>& indices) {
        const auto& tv = val(table);
        for (int ix : indices)
            if (ix < 0 || ix >= tv.rows)
                throw DimensionError("embedding: index " + std::to_string(ix) +
                                     " out of range for table " + tv.shape_str());
        Tensor<S> out(static_cast<int>(indices.size()), tv.cols);
        for (size_t r = 0; r < indices.size(); ++r)
            std::copy(tv.row(indices[r]), tv.row(indices[r]) + tv.cols, out.row(static_cast<int>(r)));
        return unary_or_binary(std::move(out), table, -1, [table, indices](Tape& t) {
            const auto& g = t.out_grad();
            Tensor<S> gt(t.val(table).rows, t.val(table).cols);
            for (size_t r = 0; r < indices.size(); ++r)
                for (int c = 0; c < g.cols; ++c) gt.at(indices[r], c) += g.at(static_cast<int>(r), c);
            t.accumulate(table, gt);
        });
    }

    // ---- attention ----

    // Scaled dot-product attention. q: n x d, k: m x d, v: m x dv, mask: n*m bools
    // (true = may attend), optional additive score bias (n x m). Scores at masked
    // positions are excluded exactly; each query row must have at least one
    // allowed key.
    Var attention(Var q, Var k, Var v, const std::vector<uint8_t>& mask, Var bias = -1) {
        const auto& qv = val(q);
        const auto& kv = val(k);
        const auto& vv = val(v);
        if (qv.cols != kv.cols || kv.rows != vv.rows)
            throw DimensionError("attention: q " + qv.shape_str() + " k " + kv.shape_str() +
                                 " v " + vv.shape_str());
        const int n = qv.rows, m = kv.rows, d = qv.cols, dv = vv.cols;
        if (mask.size() != static_cast<size_t>(n) * m)
            throw DimensionError("attention: mask size " + std::to_string(mask.size()) +
                                 " != " + std::to_string(n * m));
        if (bias >= 0 && (val(bias).rows != n || val(bias).cols != m))
            throw DimensionError("attention: bias " + val(bias).shape_str());
        const S inv_sqrt_d = S(1) / std::sqrt(S(d));

        Tensor<S> scores(n, m);
        EMat<S>(scores.v.data(), n, m).noalias() =
            ECMat<S>(qv.v.data(), n, d) * ECMat<S>(kv.v.data(), m, d).transpose() * inv_sqrt_d;
        if (bias >= 0) {
            const auto& bv = val(bias);
            for (size_t i = 0; i < scores.v.size(); ++i) scores.v[i] += bv.v[i];
        }
        Tensor<S> probs(n, m);
        for (int r = 0; r < n; ++r) {
            S mx = -std::numeric_limits<S>::infinity();
            for (int c = 0; c < m; ++c)
                if (mask[static_cast<size_t>(r) * m + c]) mx = std::max(mx, scores.at(r, c));
            if (mx == -std::numeric_limits<S>::infinity())
                throw DimensionError("attention: query row " + std::to_string(r) +
                                     " has no allowed keys");
            S sum = 0;
            for (int c = 0; c < m; ++c) {
                if (mask[static_cast<size_t>(r) * m + c]) {
                    S e = std::exp(scores.at(r, c) - mx);
                    probs.at(r, c) = e;
                    sum += e;
                } else {
                    probs.at(r, c) = 0;
                }
            }
            for (int c = 0; c < m; ++c) probs.at(r, c) /= sum;
        }
        Tensor<S> out(n, dv);
        EMat<S>(out.v.data(), n, dv).noalias() =
            ECMat<S>(probs.v.data(), n, m) * ECMat<S>(vv.v.data(), m, dv);

        bool ng = needs(q) || needs(k) || needs(v) || (bias >= 0 && needs(bias));
        Var id = push(std::move(out), ng, nullptr);
        if (!ng) return id;
        set_back(id, [q, k, v, bias, probs = std::move(probs), inv_sqrt_d](Tape& t) {
            const auto& g = t.out_grad();
            const auto& qv2 = t.val(q);
            const auto& kv2 = t.val(k);
            const auto& vv2 = t.val(v);
            const int n2 = qv2.rows, m2 = kv2.rows, d2 = qv2.cols, dv2 = vv2.cols;
            ECMat<S> G(g.v.data(), n2, dv2);
            ECMat<S> P(probs.v.data(), n2, m2);
            ECMat<S> V(vv2.v.data(), m2, dv2);
            Tensor<S> gv_(m2, dv2);
            EMat<S>(gv_.v.data(), m2, dv2).noalias() = P.transpose() * G;
            // dP then dS = P .* (dP - rowsum(dP .* P))
            Tensor<S> dp(n2, m2);
            EMat<S>(dp.v.data(), n2, m2).noalias() = G * V.transpose();
            Tensor<S> ds(n2, m2);
            for (int r = 0; r < n2; ++r) {
                S dot = 0;
                for (int c = 0; c < m2; ++c) dot += dp.at(r, c) * probs.at(r, c);
                for (int c = 0; c < m2; ++c)
                    ds.at(r, c) = probs.at(r, c) * (dp.at(r, c) - dot);
            }
            Tensor<S> gq(n2, d2), gk(m2, d2);
            ECMat<S> DS(ds.v.data(), n2, m2);
            ECMat<S> Q(qv2.v.data(), n2, d2);
            ECMat<S> K(kv2.v.data(), m2, d2);
            EMat<S>(gq.v.data(), n2, d2).noalias() = DS * K * inv_sqrt_d;
            EMat<S>(gk.v.data(), m2, d2).noalias() = DS.transpose() * Q * inv_sqrt_d;
            t.accumulate(q, gq);
            t.accumulate(k, gk);
            t.accumulate(v, gv_);
            if (bias >= 0) t.accumulate(bias, ds);
        });
        return id;
    }

    // ---- softmax family ----

    Var softmax(Var a) {
        const auto& av = val(a);
        Tensor<S> out(av.rows, av.cols);
        for (int r = 0; r < av.rows; ++r) {
            S mx = av.at(r, 0);
            for (int c = 1; c < av.cols; ++c) mx = std::max(mx, av.at(r, c));
            S sum = 0;
            for (int c = 0; c < av.cols; ++c) {
                S e = std::exp(av.at(r, c) - mx);
                out.at(r, c) = e;
                sum += e;
            }
            for (int c = 0; c < av.cols; ++c) out.at(r, c) /= sum;
        }
        Var id = unary_or_binary(std::move(out), a, -1, nullptr);
        set_back(id, [a, id](Tape& t) {
            const auto& g = t.out_grad();
            const auto& y = t.val(id);
            Tensor<S> ga(g.rows, g.cols);
            for (int r = 0; r < g.rows; ++r) {
                S dot = 0;
                for (int c = 0; c < g.cols; ++c) dot += g.at(r, c) * y.at(r, c);
                for (int c = 0; c < g.cols; ++c)
                    ga.at(r, c) = y.at(r, c) * (g.at(r, c) - dot);
            }
            t.accumulate(a, ga);
        });
        return id;
    }

    Var log_softmax(Var a) {
        const auto& av = val(a);
        Tensor<S> out(av.rows, av.cols);
        for (int r = 0; r < av.rows; ++r) {
            S mx = av.at(r, 0);
            for (int c = 1; c < av.cols; ++c) mx = std::max(mx, av.at(r, c));
            S sum = 0;
            for (int c = 0; c < av.cols; ++c) sum += std::exp(av.at(r, c) - mx);
            S lse = mx + std::log(sum);
            for (int c = 0; c < av.cols; ++c) out.at(r, c) = av.at(r, c) - lse;
        }
        Var id = unary_or_binary(std::move(out), a, -1, nullptr);
        set_back(id, [a, id](Tape& t) {
            const auto& g = t.out_grad();
            const auto& ls = t.val(id);
            Tensor<S> ga(g.rows, g.cols);
            for (int r = 0; r < g.rows; ++r) {
                S gsum = 0;
                for (int c = 0; c < g.cols; ++c) gsum += g.at(r, c);
                for (int c = 0; c < g.cols; ++c)
                    ga.at(r, c) = g.at(r, c) - std::exp(ls.at(r, c)) * gsum;
            }
            t.accumulate(a, ga);
        });
        return id;
    }

    enum class Reduce { Sum, Mean };

    // Categorical cross-entropy of logits (n x k) against integer targets.
    Var cross_entropy(Var logits, const std::vector<int>& targets, Reduce red = Reduce::Mean) {
        const auto& lv = val(logits);
        if (static_cast<int>(targets.size()) != lv.rows)
            throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                                 " targets for " + lv.shape_str());
        for (int tg : targets)
            if (tg < 0 || tg >= lv.cols)
                throw DimensionError("cross_entropy: target out of range");
        const int n = lv.rows, k = lv.cols;
        Tensor<S> probs(n, k);
        S total = 0;
        for (int r = 0; r < n; ++r) {
            S mx = lv.at(r, 0);
            for (int c = 1; c < k; ++c) mx = std::max(mx, lv.at(r, c));
            S sum = 0;
            for (int c = 0; c < k; ++c) {
                S e = std::exp(lv.at(r, c) - mx);
                probs.at(r, c) = e;
                sum += e;
            }
            for (int c = 0; c < k; ++c) probs.at(r, c) /= sum;
            total -= lv.at(r, targets[r]) - mx - std::log(sum);
        }
        S denom = red == Reduce::Mean ? S(n) : S(1);
        Tensor<S> out(1, 1);
        out.v[0] = total / denom;
        return unary_or_binary(std::move(out), logits, -1,
                               [logits, targets, probs = std::move(probs), denom](Tape& t) {
                                   S g = t.out_grad().v[0] / denom;
                                   Tensor<S> gl = probs;
                                   for (int r = 0; r < gl.rows; ++r) gl.at(r, targets[r]) -= S(1);
                                   for (auto& x : gl.v) x *= g;
                                   t.accumulate(logits, gl);
                               });
    }

    // Multiply a tensor by a 1x1 tape scalar.
    Var scale_var(Var a, Var s) {
        if (val(s).size() != 1) throw DimensionError("scale_var: scale must be 1x1");
        const S c = val(s).v[0];
        Tensor<S> out = val(a);
        for (auto& x : out.v) x *= c;
        return unary_or_binary(std::move(out), a, s, [a, s, c](Tape& t) {
            const auto& g = t.out_grad();
            Tensor<S> ga = g;
            for (auto& x : ga.v) x *= c;
            t.accumulate(a, ga);
            const auto& av = t.val(a).v;
            S dot = 0;
            for (size_t i = 0; i < g.v.size(); ++i) dot += g.v[i] * av[i];
            Tensor<S> gs(1, 1);
            gs.v[0] = dot;
            t.accumulate(s, gs);
        });
    }

    // ---- reductions / reshaping ----

    Var sum(Var a) { return reduce(a, Reduce::Sum); }
    Var mean(Var a) { return reduce(a, Reduce::Mean); }

    // Column-wise mean over rows: (n x d) -> (1 x d).
    Var mean_rows(Var a) {
        const auto& av = val(a);
        Tensor<S> out(1, av.cols);
        for (int r = 0; r < av.rows; ++r)
            for (int c = 0; c < av.cols; ++c) out.at(0, c) += av.at(r, c);
        const S inv = S(1) / S(av.rows);
        for (auto& x : out.v) x *= inv;
        return unary_or_binary(std::move(out), a, -1, [a, inv](Tape& t) {
            const auto& g = t.out_grad();
            const auto& av2 = t.val(a);
            Tensor<S> ga(av2.rows, av2.cols);
            for (int r = 0; r < av2.rows; ++r)
                for (int c = 0; c < av2.cols; ++c) ga.at(r, c) = g.at(0, c) * inv;
            t.accumulate(a, ga);
        });
    }

    Var slice_rows(Var a, int r0, int r1) {
        const auto& av = val(a);
        if (r0 < 0 || r1 > av.rows || r0 >= r1)
            throw DimensionError("slice_rows: [" + std::to_string(r0) + "," +
                                 std::to_string(r1) + ") of " + av.shape_str());
        Tensor<S> out(r1 - r0, av.cols);
        std::copy(av.row(r0), av.row(r0) + out.size(), out.v.data());
        return unary_or_binary(std::move(out), a, -1, [a, r0](Tape& t) {
            const auto& g = t.out_grad();
            Tensor<S> ga(t.val(a).rows, t.val(a).cols);
            std::copy(g.v.begin(), g.v.end(), ga.row(r0));
            t.accumulate(a, ga);
        });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) throw DimensionError("concat_rows: empty");
        int cols = val(parts[0]).cols;
        int rows = 0;
        for (Var p : parts) {
            if (val(p).cols != cols) throw DimensionError("concat_rows: column mismatch");
            rows += val(p).rows;
        }
        Tensor<S> out(rows, cols);
        int r = 0;
        bool ng = false;
        for (Var p : parts) {
            const auto& pv = val(p);
            std::copy(pv.v.begin(), pv.v.end(), out.row(r));
            r += pv.rows;
            ng = ng || needs(p);
        }
        Var id = push(std::move(out), ng, nullptr);
        if (!ng) return id;
        set_back(id, [parts](Tape& t) {
            const auto& g = t.out_grad();
            int rr = 0;
            for (Var p : parts) {
                const auto& pv = t.val(p);
                Tensor<S> gp(pv.rows, pv.cols);
                std::copy(g.row(rr), g.row(rr) + gp.size(), gp.v.data());
                t.accumulate(p, gp);
                rr += pv.rows;
            }
        });
        return id;
    }

    Var reshape(Var a, int rows, int cols) {
        const auto& av = val(a);
        if (static_cast<size_t>(rows) * cols != av.size())
            throw DimensionError("reshape: " + av.shape_str() + " to [" + std::to_string(rows) +
                                 "x" + std::to_string(cols) + "]");
        Tensor<S> out(rows, cols, av.v);
        return unary_or_binary(std::move(out), a, -1, [a](Tape& t) {
            const auto& g = t.out_grad();
            Tensor<S> ga(t.val(a).rows, t.val(a).cols, g.v);
            t.accumulate(a, ga);
        });
    }

    // ---- distribution ops ----

    // mu + sigma .* noise; gradient flows to mu and sigma only.
    Var reparameterize(Var mu, Var sigma, const Tensor<S>& noise) {
        const auto& mv = val(mu);
        const auto& sv = val(sigma);
        check_same_shape(mv, sv, "reparameterize");
        check_same_shape(mv, noise, "reparameterize(noise)");
        Tensor<S> out = mv;
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += sv.v[i] * noise.v[i];
        return unary_or_binary(std::move(out), mu, sigma, [mu, sigma, noise](Tape& t) {
            const auto& g = t.out_grad();
            t.accumulate(mu, g);
            Tensor<S> gs = g;
            for (size_t i = 0; i < gs.v.size(); ++i) gs.v[i] *= noise.v[i];
            t.accumulate(sigma, gs);
        });
    }

    // KL(N(mu_q, sigma_q) || N(mu_p, sigma_p)) for diagonal Gaussians, summed over
    // columns (dimensions) and averaged over rows (condition slots).
    Var gaussian_kl(Var mu_q, Var sigma_q, Var mu_p, Var sigma_p) {
        const auto& mq = val(mu_q);
        const auto& sq = val(sigma_q);
        const auto& mp = val(mu_p);
        const auto& sp = val(sigma_p);
        check_same_shape(mq, sq, "gaussian_kl");
        check_same_shape(mq, mp, "gaussian_kl");
        check_same_shape(mq, sp, "gaussian_kl");
        for (S s : sq.v)
            if (!(s > S(0))) throw DimensionError("gaussian_kl: nonpositive sigma_q");
        for (S s : sp.v)
            if (!(s > S(0))) throw DimensionError("gaussian_kl: nonpositive sigma_p");
        const S inv_rows = S(1) / S(mq.rows);
        S acc = 0;
        for (size_t i = 0; i < mq.v.size(); ++i) {
            S dq = mq.v[i] - mp.v[i];
            S r2 = sp.v[i] * sp.v[i];
            acc += std::log(sp.v[i] / sq.v[i]) + (sq.v[i] * sq.v[i] + dq * dq) / (2 * r2) -
                   S(0.5);
        }
        Tensor<S> out(1, 1);
        out.v[0] = acc * inv_rows;
        bool ng = needs(mu_q) || needs(sigma_q) || needs(mu_p) || needs(sigma_p);
        Var id = push(std::move(out), ng, nullptr);
        if (!ng) return id;
        set_back(id, [mu_q, sigma_q, mu_p, sigma_p, inv_rows](Tape& t) {
            S g = t.out_grad().v[0] * inv_rows;
            const auto& mq2 = t.val(mu_q);
            const auto& sq2 = t.val(sigma_q);
            const auto& mp2 = t.val(mu_p);
            const auto& sp2 = t.val(sigma_p);
            Tensor<S> gmq(mq2.rows, mq2.cols), gsq(mq2.rows, mq2.cols), gmp(mq2.rows, mq2.cols),
                gsp(mq2.rows, mq2.cols);
            for (size_t i = 0; i < mq2.v.size(); ++i) {
                S dq = mq2.v[i] - mp2.v[i];
                S p2 = sp2.v[i] * sp2.v[i];
                gmq.v[i] = g * dq / p2;
                gmp.v[i] = -g * dq / p2;
                gsq.v[i] = g * (sq2.v[i] / p2 - S(1) / sq2.v[i]);
                gsp.v[i] = g * (S(1) / sp2.v[i] - (sq2.v[i] * sq2.v[i] + dq * dq) /
                                                      (p2 * sp2.v[i]));
            }
            t.accumulate(mu_q, gmq);
            t.accumulate(sigma_q, gsq);
            t.accumulate(mu_p, gmp);
            t.accumulate(sigma_p, gsp);
        });
        return id;
    }

    // ---- backward ----

    void backward(Var root) {
        const auto& rv = nodes_[root].val;
        if (rv.size() != 1) throw DimensionError("backward: root must be scalar");
        for (auto& n : nodes_) n.grad = Tensor<S>();
        nodes_[root].grad = Tensor<S>::full(1, 1, S(1));
        for (Var id = root; id >= 0; --id) {
            auto& n = nodes_[id];
            if (n.grad.size() == 0 || !n.back) continue;
            cur_node_ = id;
            n.back(*this);
        }
    }

    // Add computed parameter gradients into an external accumulator map.
    void export_grads(std::map<std::string, Tensor<S>>& into) const {
        for (const auto& [name, id] : param_vars_) {
            const auto& g = nodes_[id].grad;
            const auto& v = nodes_[id].val;
            auto it = into.find(name);
            if (it == into.end())
                it = into.emplace(name, Tensor<S>(v.rows, v.cols)).first;
            if (g.size() == 0) continue;
            for (size_t i = 0; i < g.v.size(); ++i) it->second.v[i] += g.v[i];
        }
    }

    static S softplus_scalar(S x) { return x > S(20) ? x : std::log1p(std::exp(x)); }
    static S sigmoid_scalar(S x) {
        return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
    }

  private:
    friend struct Node;

    bool needs(Var id) const { return nodes_[id].needs_grad; }
    const Tensor<S>& out_grad() const { return nodes_[cur_node_].grad; }

    void accumulate(Var id, const Tensor<S>& g) {
        auto& n = nodes_[id];
        if (!n.needs_grad) return;
        if (n.grad.size() == 0) n.grad = Tensor<S>(n.val.rows, n.val.cols);
        for (size_t i = 0; i < g.v.size(); ++i) n.grad.v[i] += g.v[i];
    }

    Var push(Tensor<S> t, bool needs_grad, std::function<void(Tape&)> back) {
        nodes_.push_back(Node{std::move(t), Tensor<S>(), std::move(back), needs_grad});
        return static_cast<Var>(nodes_.size() - 1);
    }

    Var unary_or_binary(Tensor<S> out, Var a, Var b, std::function<void(Tape&)> back) {
        bool ng = needs(a) || (b >= 0 && needs(b));
        Var id = push(std::move(out), ng, nullptr);
        if (ng) nodes_[id].back = std::move(back);
        return id;
    }

    void set_back(Var id, std::function<void(Tape&)> back) {
        if (nodes_[id].needs_grad) nodes_[id].back = std::move(back);
    }

    Var reduce(Var a, Reduce red) {
        const auto& av = val(a);
        S denom = red == Reduce::Mean ? S(av.size()) : S(1);
        S acc = 0;
        for (S x : av.v) acc += x;
        Tensor<S> out(1, 1);
        out.v[0] = acc / denom;
        return unary_or_binary(std::move(out), a, -1, [a, denom](Tape& t) {
            S g = t.out_grad().v[0] / denom;
            Tensor<S> ga = Tensor<S>::full(t.val(a).rows, t.val(a).cols, g);
            t.accumulate(a, ga);
        });
    }

    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, Var>> param_vars_;
    Var cur_node_ = -1;
};

}  // namespace videogoal::nn
