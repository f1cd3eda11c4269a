#pragma once

#include <map>
#include <string>
#include <vector>

#include "videogoal/tensor.hpp"

namespace videogoal::nn {

using videogoal::Rng;

// Named parameter tensors plus gradient accumulators. std::map keeps iteration
// order deterministic for the optimizer and serialization.
template <typename S>
struct ParamStore {
    std::map<std::string, Tensor<S>> params;
    std::map<std::string, Tensor<S>> grads;

    Tensor<S>& add(const std::string& name, Tensor<S> t) {
        if (params.count(name)) throw ConfigError("duplicate parameter name: " + name);
        auto [it, ok] = params.emplace(name, std::move(t));
        (void)ok;
        return it->second;
    }

    const Tensor<S>& get(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return params.count(name) > 0; }

    void zero_grads() {
        for (auto& [name, p] : params) {
            auto it = grads.find(name);
            if (it == grads.end())
                grads.emplace(name, Tensor<S>(p.rows, p.cols));
            else
                std::fill(it->second.v.begin(), it->second.v.end(), S(0));
        }
    }

    void add_grads(const std::map<std::string, Tensor<S>>& g) {
        for (const auto& [name, t] : g) {
            auto it = grads.find(name);
            if (it == grads.end()) it = grads.emplace(name, Tensor<S>(t.rows, t.cols)).first;
            for (size_t i = 0; i < t.v.size(); ++i) it->second.v[i] += t.v[i];
        }
    }

    size_t total_size() const {
        size_t n = 0;
        for (const auto& [k, p] : params) n += p.size();
        return n;
    }

    template <typename T>
    ParamStore<T> cast() const {
        ParamStore<T> out;
        for (const auto& [k, p] : params) out.params.emplace(k, p.template cast<T>());
        return out;
    }
};

template <typename S>
inline Tensor<S> glorot(int rows, int cols, Rng& rng) {
    Tensor<S> t(rows, cols);
    double a = std::sqrt(6.0 / (rows + cols));
    for (auto& x : t.v) x = static_cast<S>(rng.uniform_sym(a));
    return t;
}

template <typename S>
inline Tensor<S> normal_init(int rows, int cols, double std, Rng& rng) {
    Tensor<S> t(rows, cols);
    for (auto& x : t.v) x = static_cast<S>(rng.gaussian() * std);
    return t;
}

// AdamW with decoupled weight decay and linear warmup.
struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-3;
    int warmup_steps = 200;
};

template <typename S>
class AdamW {
  public:
    explicit AdamW(AdamConfig cfg) : cfg_(cfg) {}

    void step(ParamStore<S>& store) {
        ++t_;
        double lr = cfg_.lr;
        if (cfg_.warmup_steps > 0 && t_ < cfg_.warmup_steps)
            lr *= static_cast<double>(t_) / cfg_.warmup_steps;
        double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (auto& [name, p] : store.params) {
            auto& g = store.grads.at(name);
            auto& m = slot(m_, name, p);
            auto& v = slot(v_, name, p);
            for (size_t i = 0; i < p.v.size(); ++i) {
                double gi = g.v[i];
                double mi = cfg_.beta1 * m.v[i] + (1 - cfg_.beta1) * gi;
                double vi = cfg_.beta2 * v.v[i] + (1 - cfg_.beta2) * gi * gi;
                m.v[i] = static_cast<S>(mi);
                v.v[i] = static_cast<S>(vi);
                double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
                p.v[i] = static_cast<S>(p.v[i] - lr * (update + cfg_.weight_decay * p.v[i]));
            }
        }
    }

    int steps_taken() const { return t_; }
    void set_steps_taken(int t) { t_ = t; }
    std::map<std::string, Tensor<S>>& first_moments() { return m_; }
    std::map<std::string, Tensor<S>>& second_moments() { return v_; }

  private:
    Tensor<S>& slot(std::map<std::string, Tensor<S>>& m, const std::string& name,
                    const Tensor<S>& p) {
        auto it = m.find(name);
        if (it == m.end()) it = m.emplace(name, Tensor<S>(p.rows, p.cols)).first;
        return it->second;
    }

    AdamConfig cfg_;
    int t_ = 0;
    std::map<std::string, Tensor<S>> m_;
    std::map<std::string, Tensor<S>> v_;
};

}  // namespace videogoal::nn
