#include "videogoal/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <thread>

#include "videogoal/gradcheck.hpp"

namespace videogoal::train {

using nn::AdamConfig;
using nn::AdamW;
using nn::Rng;

std::vector<Chunk> chunk_dataset(const std::vector<Trajectory>& trajs, int T, uint64_t seed,
                                 int* skipped_episodes) {
    if (T < 1) throw ConfigError("chunk_dataset: T must be >= 1");
    int skipped = 0;
    std::vector<Chunk> chunks;
    for (const auto& traj : trajs) {
        if (!traj.has_actions)
            throw ConfigError("chunk_dataset: trajectory lacks actions (pseudo-label first)");
        const int T_ep = static_cast<int>(traj.frames.size());
        if (T_ep < T) {
            ++skipped;
            continue;
        }
        for (int start = 0; start + T <= T_ep; start += T) {
            Chunk c;
            c.skill_label = traj.skill_label;
            c.frames.assign(traj.frames.begin() + start, traj.frames.begin() + start + T);
            c.actions.assign(traj.actions.begin() + start, traj.actions.begin() + start + T);
            c.prev_actions.resize(T);
            c.prev_actions[0] = env::kStartAction;
            for (int t = 1; t < T; ++t) c.prev_actions[t] = c.actions[t - 1];
            chunks.push_back(std::move(c));
        }
    }
    Rng rng(derive_seed(seed, 0xC4C));
    for (size_t i = chunks.size(); i > 1; --i)
        std::swap(chunks[i - 1], chunks[rng.uniform_int(i)]);
    if (skipped_episodes) *skipped_episodes = skipped;
    return chunks;
}

std::vector<int> draw_taus(const std::string& tau_mode, int T, Rng& rng) {
    auto clamp_tau = [T](int tau) { return std::max(1, std::min(T - 1, tau)); };
    if (tau_mode == "fixed_set") {
        std::vector<int> taus = {clamp_tau(T / 4), clamp_tau(T / 2), clamp_tau(3 * T / 4)};
        taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
        return taus;
    }
    int lo = clamp_tau(T / 4), hi = clamp_tau(3 * T / 4);
    return {lo + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(hi - lo + 1)))};
}

Tensor<float> gaussian_noise(int rows, int cols, uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t(rows, cols);
    for (auto& x : t.v) x = static_cast<float>(rng.gaussian());
    return t;
}

LossBreakdown compute_loss(const Chunk& chunk, const ParamStore<float>& store,
                           const RunConfig& cfg, uint64_t noise_seed, int tau) {
    ModelDims m = ModelDims::from(cfg);
    LossOptions opt;
    opt.lambda_bc = cfg.train.lambda_bc;
    opt.lambda_kl = cfg.train.lambda_kl;
    opt.unconditional = cfg.train.unconditional;
    opt.taus = {tau};
    Tensor<float> noise = gaussian_noise(m.slots, m.d, noise_seed);
    if (cfg.train.precision == "f64") {
        ParamStore<double> store64 = store.cast<double>();
        Tensor<double> noise64 = noise.cast<double>();
        Tape<double> tape;
        auto vars = build_chunk_loss<double>(tape, store64, chunk, m, opt, &noise64, false);
        return extract_breakdown(tape, vars);
    }
    Tape<float> tape;
    auto vars = build_chunk_loss<float>(tape, store, chunk, m, opt, &noise, false);
    return extract_breakdown(tape, vars);
}

namespace {

struct BatchStats {
    LossBreakdown sum;
    int count = 0;
    void add(const LossBreakdown& b) {
        sum.total += b.total;
        sum.bc += b.bc;
        sum.kl += b.kl;
        sum.move_nll += b.move_nll;
        sum.turn_nll += b.turn_nll;
        ++count;
    }
};

// Runs fn(i) for i in [0, n) over `threads` workers with a static partition, so
// results are deterministic for a fixed thread count.
void parallel_for(int n, int threads, const std::function<void(int, int)>& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
        int lo = n * w / threads, hi = n * (w + 1) / threads;
        pool.emplace_back([lo, hi, w, &fn]() {
            for (int i = lo; i < hi; ++i) fn(i, w);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace

TrainResult train_agent(const std::vector<Trajectory>& dataset, const RunConfig& cfg,
                        const std::string& metrics_path) {
    const ModelDims m = ModelDims::from(cfg);
    const int T = cfg.train.chunk_len;
    int skipped = 0;
    std::vector<Chunk> chunks = chunk_dataset(dataset, T, cfg.train.seed, &skipped);
    if (chunks.empty()) throw ConfigError("train_agent: no usable chunks in dataset");

    ParamStore<float> store = model::init_agent<float>(m, cfg.encoder.init_seed);
    AdamConfig ac;
    ac.lr = cfg.train.lr;
    ac.weight_decay = cfg.train.weight_decay;
    ac.warmup_steps = cfg.train.warmup_steps;
    AdamW<float> opt(ac);

    const int threads = cfg.train.threads > 0 ? cfg.train.threads
                                              : static_cast<int>(std::thread::hardware_concurrency());
    const int B = cfg.train.batch;
    TrainResult result;
    int64_t global_step = 0;
    auto t_start = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        std::vector<int> order(chunks.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(cfg.train.seed, 0xE90C, static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        BatchStats epoch_stats;
        for (size_t b0 = 0; b0 < order.size(); b0 += B) {
            const int bs = static_cast<int>(std::min<size_t>(B, order.size() - b0));
            std::vector<std::map<std::string, Tensor<float>>> worker_grads(bs);
            std::vector<LossBreakdown> worker_loss(bs);
            parallel_for(bs, threads, [&](int i, int) {
                const Chunk& chunk = chunks[order[b0 + i]];
                Rng draw_rng(derive_seed(cfg.train.seed, 0xD0A,
                                         static_cast<uint64_t>(global_step),
                                         static_cast<uint64_t>(i)));
                LossOptions lo;
                lo.lambda_bc = cfg.train.lambda_bc;
                lo.lambda_kl = cfg.train.lambda_kl;
                lo.unconditional = cfg.train.unconditional;
                if (!lo.unconditional) lo.taus = draw_taus(cfg.train.tau_mode, T, draw_rng);
                Tensor<float> noise = gaussian_noise(m.slots, m.d, draw_rng.next_u64());
                Tape<float> tape;
                auto vars = build_chunk_loss<float>(tape, store, chunk, m, lo, &noise);
                worker_loss[i] = extract_breakdown(tape, vars);
                tape.backward(vars.total);
                tape.export_grads(worker_grads[i]);
            });
            LossBreakdown step_mean;
            store.zero_grads();
            for (int i = 0; i < bs; ++i) {
                const auto& lb = worker_loss[i];
                if (!std::isfinite(lb.total))
                    throw EvalError("train_agent: non-finite loss at step " +
                                    std::to_string(global_step));
                store.add_grads(worker_grads[i]);
                epoch_stats.add(lb);
                step_mean.total += lb.total;
            }
            const float inv_bs = 1.0f / static_cast<float>(bs);
            for (auto& [name, g] : store.grads)
                for (auto& x : g.v) x *= inv_bs;
            opt.step(store);
            ++global_step;
        }

        double n = epoch_stats.count;
        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                          .count();
        nlohmann::json line = {{"epoch", epoch},
                               {"step", global_step},
                               {"bc", epoch_stats.sum.bc / n},
                               {"kl", epoch_stats.sum.kl / n},
                               {"total", epoch_stats.sum.total / n},
                               {"move_nll", epoch_stats.sum.move_nll / n},
                               {"turn_nll", epoch_stats.sum.turn_nll / n},
                               {"skipped_episodes", skipped},
                               {"wall_time", wall}};
        result.metrics.push_back(line);
        if (!metrics_path.empty()) io::append_jsonl(metrics_path, line);
    }

    result.checkpoint.params = std::move(store);
    result.checkpoint.opt_m.params = std::move(opt.first_moments());
    result.checkpoint.opt_v.params = std::move(opt.second_moments());
    result.checkpoint.config = cfg.to_json();
    result.checkpoint.step = global_step;
    result.checkpoint.opt_steps = opt.steps_taken();
    return result;
}

namespace {

struct WindowRef {
    int traj = 0;
    int t = 0;
};

std::vector<FrameTensor> idm_window(const Trajectory& traj, int t, int W) {
    const int T_ep = static_cast<int>(traj.frames.size());
    const int half = W / 2;
    std::vector<FrameTensor> win;
    win.reserve(W);
    for (int i = t - half; i <= t + half; ++i) {
        int j = std::clamp(i, 0, T_ep - 1);  // pad episode ends by repeating
        win.push_back(traj.frames[j]);
    }
    return win;
}

int argmax_lowest(const float* v, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace

double idm_accuracy(const ParamStore<float>& store, const std::vector<Trajectory>& trajs,
                    const RunConfig& cfg) {
    const ModelDims m = ModelDims::from(cfg);
    int64_t correct = 0, total = 0;
    for (const auto& traj : trajs) {
        for (int t = 0; t < static_cast<int>(traj.frames.size()); ++t) {
            auto logits = model::idm_predict(store, idm_window(traj, t, m.idm_window), m);
            int mv = argmax_lowest(logits.move.data(), env::kMoveArity);
            int tv = argmax_lowest(logits.turn.data(), env::kTurnArity);
            correct += (mv == traj.actions[t].move && tv == traj.actions[t].turn) ? 1 : 0;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

IdmResult train_idm(const std::vector<Trajectory>& labeled, const RunConfig& cfg) {
    const ModelDims m = ModelDims::from(cfg);
    const int W = m.idm_window;
    for (const auto& t : labeled)
        if (!t.has_actions) throw ConfigError("train_idm: trajectory lacks action labels");
    size_t total_steps = 0;
    for (const auto& t : labeled) total_steps += t.frames.size();
    if (labeled.empty() || total_steps < static_cast<size_t>(W))
        throw ConfigError("train_idm: dataset smaller than one window");

    // Hold out whole episodes for the accuracy report.
    int holdout = static_cast<int>(labeled.size() * cfg.idm.holdout_fraction);
    holdout = std::min<int>(std::max(holdout, labeled.size() > 1 ? 1 : 0),
                            static_cast<int>(labeled.size()) - 1);
    std::vector<Trajectory> train_set(labeled.begin(), labeled.end() - holdout);
    std::vector<Trajectory> held(labeled.end() - holdout, labeled.end());

    std::vector<WindowRef> refs;
    for (int i = 0; i < static_cast<int>(train_set.size()); ++i)
        for (int t = 0; t < static_cast<int>(train_set[i].frames.size()); ++t)
            refs.push_back({i, t});

    ParamStore<float> store = model::init_idm_store<float>(m, cfg.idm.seed);
    AdamConfig ac;
    ac.lr = cfg.idm.lr;
    ac.weight_decay = cfg.idm.weight_decay;
    ac.warmup_steps = cfg.idm.warmup_steps;
    AdamW<float> opt(ac);
    const int threads = cfg.train.threads > 0 ? cfg.train.threads
                                              : static_cast<int>(std::thread::hardware_concurrency());

    int64_t global_step = 0;
    for (int epoch = 0; epoch < cfg.idm.epochs; ++epoch) {
        std::vector<int> order(refs.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(cfg.idm.seed, 0x1D8, static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);
        for (size_t b0 = 0; b0 < order.size(); b0 += cfg.idm.batch) {
            const int bs = static_cast<int>(std::min<size_t>(cfg.idm.batch, order.size() - b0));
            std::vector<std::map<std::string, Tensor<float>>> worker_grads(bs);
            std::vector<double> worker_loss(bs);
            parallel_for(bs, threads, [&](int i, int) {
                const WindowRef& ref = refs[order[b0 + i]];
                const Trajectory& traj = train_set[ref.traj];
                Tape<float> tape;
                model::Module<float> mod{&tape, &store, true};
                auto vars = model::idm_predict_vars(mod, idm_window(traj, ref.t, W), m);
                Var loss = tape.add(
                    tape.cross_entropy(vars.move, {traj.actions[ref.t].move}),
                    tape.cross_entropy(vars.turn, {traj.actions[ref.t].turn}));
                worker_loss[i] = tape.val(loss).v[0];
                tape.backward(loss);
                tape.export_grads(worker_grads[i]);
            });
            store.zero_grads();
            for (int i = 0; i < bs; ++i) {
                if (!std::isfinite(worker_loss[i]))
                    throw EvalError("train_idm: non-finite loss at step " +
                                    std::to_string(global_step));
                store.add_grads(worker_grads[i]);
            }
            const float inv_bs = 1.0f / static_cast<float>(bs);
            for (auto& [name, g] : store.grads)
                for (auto& x : g.v) x *= inv_bs;
            opt.step(store);
            ++global_step;
        }
    }

    IdmResult out;
    out.accuracy = idm_accuracy(store, held.empty() ? train_set : held, cfg);
    out.report = {{"accuracy", out.accuracy},
                  {"held_out_episodes", static_cast<int>(held.size())},
                  {"train_windows", static_cast<int>(refs.size())},
                  {"steps", global_step}};
    out.checkpoint.params = std::move(store);
    out.checkpoint.opt_m.params = std::move(opt.first_moments());
    out.checkpoint.opt_v.params = std::move(opt.second_moments());
    out.checkpoint.config = cfg.to_json();
    out.checkpoint.step = global_step;
    out.checkpoint.opt_steps = opt.steps_taken();
    return out;
}

std::vector<Trajectory> pseudo_label(const std::vector<Trajectory>& unlabeled,
                                     const ParamStore<float>& idm_params, const RunConfig& cfg) {
    const ModelDims m = ModelDims::from(cfg);
    for (const auto& t : unlabeled)
        if (t.has_actions)
            throw ConfigError("pseudo_label: input already has actions; refusing to overwrite");
    std::vector<Trajectory> out = unlabeled;
    const int threads = cfg.train.threads > 0 ? cfg.train.threads
                                              : static_cast<int>(std::thread::hardware_concurrency());
    parallel_for(static_cast<int>(out.size()), threads, [&](int i, int) {
        Trajectory& traj = out[i];
        traj.actions.resize(traj.frames.size());
        for (int t = 0; t < static_cast<int>(traj.frames.size()); ++t) {
            auto logits = model::idm_predict(idm_params, idm_window(traj, t, m.idm_window), m);
            traj.actions[t].move = argmax_lowest(logits.move.data(), env::kMoveArity);
            traj.actions[t].turn = argmax_lowest(logits.turn.data(), env::kTurnArity);
        }
        traj.has_actions = true;
        traj.pseudo_labeled = true;
    });
    return out;
}

std::vector<std::pair<std::string, Chunk>> make_text_pairs(const std::vector<Trajectory>& trajs,
                                                           int T, int max_pairs, uint64_t seed) {
    std::vector<std::pair<std::string, Chunk>> pairs;
    for (const auto& traj : trajs) {
        if (!traj.has_actions) continue;
        for (const auto& ev : traj.events) {
            if (ev.tick < T - 1) continue;
            const int start = ev.tick - T + 1;
            Chunk c;
            c.skill_label = traj.skill_label;
            c.frames.assign(traj.frames.begin() + start, traj.frames.begin() + start + T);
            c.actions.assign(traj.actions.begin() + start, traj.actions.begin() + start + T);
            c.prev_actions.resize(T);
            c.prev_actions[0] = env::kStartAction;
            for (int t = 1; t < T; ++t) c.prev_actions[t] = c.actions[t - 1];
            std::string text = ev.tag;
            for (char& ch : text)
                if (ch == ':' || ch == '_') ch = ' ';
            pairs.emplace_back(text, std::move(c));
        }
    }
    Rng rng(derive_seed(seed, 0x7EA));
    for (size_t i = pairs.size(); i > 1; --i)
        std::swap(pairs[i - 1], pairs[rng.uniform_int(i)]);
    if (max_pairs > 0 && static_cast<int>(pairs.size()) > max_pairs) pairs.resize(max_pairs);
    return pairs;
}

io::Checkpoint align_text_encoder(const std::vector<std::pair<std::string, Chunk>>& pairs,
                                  const io::Checkpoint& frozen, const RunConfig& cfg) {
    if (pairs.empty()) throw ConfigError("align_text_encoder: empty pair list");
    const ModelDims m = ModelDims::from(cfg);
    ParamStore<float> text_store;
    model::init_text_encoder(text_store, m, cfg.train.text_seed);
    AdamConfig ac;
    ac.lr = cfg.train.text_lr;
    ac.weight_decay = cfg.train.weight_decay;
    ac.warmup_steps = 50;
    AdamW<float> opt(ac);
    const int threads = cfg.train.threads > 0 ? cfg.train.threads
                                              : static_cast<int>(std::thread::hardware_concurrency());

    int64_t global_step = 0;
    for (int epoch = 0; epoch < cfg.train.text_epochs; ++epoch) {
        std::vector<int> order(pairs.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(cfg.train.text_seed, 0xA11, static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);
        const int B = cfg.train.batch;
        for (size_t b0 = 0; b0 < order.size(); b0 += B) {
            const int bs = static_cast<int>(std::min<size_t>(B, order.size() - b0));
            std::vector<std::map<std::string, Tensor<float>>> worker_grads(bs);
            std::vector<double> worker_loss(bs);
            parallel_for(bs, threads, [&](int i, int) {
                const auto& [text, chunk] = pairs[order[b0 + i]];
                Tape<float> tape;
                // Frozen decoder and visual stack; only the text encoder trains.
                model::Module<float> frozen_mod{&tape, &frozen.params, false};
                model::Module<float> text_mod{&tape, &text_store, true};
                Var x = model::embed_frames(frozen_mod, "enc.", chunk.frames, m);
                Var g = model::text_goal(text_mod, model::tokenize_text(text), m);
                auto logits = model::policy_sequence(frozen_mod, x, chunk.prev_actions, g, m);
                std::vector<int> mv, tv;
                for (const auto& a : chunk.actions) {
                    mv.push_back(a.move);
                    tv.push_back(a.turn);
                }
                Var loss = tape.add(tape.cross_entropy(logits.move, mv),
                                    tape.cross_entropy(logits.turn, tv));
                worker_loss[i] = tape.val(loss).v[0];
                tape.backward(loss);
                tape.export_grads(worker_grads[i]);
            });
            text_store.zero_grads();
            for (int i = 0; i < bs; ++i) {
                if (!std::isfinite(worker_loss[i]))
                    throw EvalError("align_text_encoder: non-finite loss at step " +
                                    std::to_string(global_step));
                text_store.add_grads(worker_grads[i]);
            }
            const float inv_bs = 1.0f / static_cast<float>(bs);
            for (auto& [name, g] : text_store.grads)
                for (auto& x : g.v) x *= inv_bs;
            opt.step(text_store);
            ++global_step;
        }
    }

    io::Checkpoint out;
    out.params = std::move(text_store);
    out.config = cfg.to_json();
    out.step = global_step;
    out.opt_steps = opt.steps_taken();
    return out;
}

double loss_grad_check(const RunConfig& cfg, double eps) {
    const ModelDims m = ModelDims::from(cfg);
    // Tiny synthetic chunk from the real environment.
    env::EnvConfig ec = cfg.env;
    auto trajs = env::generate_dataset({"chop_trees"}, 1, std::max(cfg.train.chunk_len, 2), 3, ec);
    Chunk chunk;
    const auto& traj = trajs[0];
    const int T = cfg.train.chunk_len;
    chunk.frames.assign(traj.frames.begin(), traj.frames.begin() + T);
    chunk.actions.assign(traj.actions.begin(), traj.actions.begin() + T);
    chunk.prev_actions.resize(T);
    chunk.prev_actions[0] = env::kStartAction;
    for (int t = 1; t < T; ++t) chunk.prev_actions[t] = chunk.actions[t - 1];

    ParamStore<double> point = model::init_agent<double>(m, cfg.encoder.init_seed);
    // Zero-initialized heads make the loss locally flat in several directions;
    // perturb them so the check exercises every path.
    Rng rng(derive_seed(cfg.encoder.init_seed, 0x6C));
    for (auto& [name, p] : point.params)
        if (name.find("head.") != std::string::npos || name.find("gate") != std::string::npos)
            for (auto& x : p.v) x += rng.uniform_sym(0.05);

    LossOptions opt;
    opt.lambda_bc = cfg.train.lambda_bc;
    opt.lambda_kl = cfg.train.lambda_kl;
    opt.unconditional = false;
    opt.taus = {std::max(1, T / 2)};
    Tensor<double> noise = gaussian_noise(m.slots, m.d, 77).cast<double>();

    nn::GradCheckFn f = [&](ParamStore<double>& p,
                            std::map<std::string, Tensor<double>>* grads) -> double {
        Tape<double> tape;
        auto vars = build_chunk_loss<double>(tape, p, chunk, m, opt, &noise, grads != nullptr);
        if (grads) {
            tape.backward(vars.total);
            tape.export_grads(*grads);
        }
        return tape.val(vars.total).v[0];
    };
    return nn::grad_check(f, point, eps);
}

}  // namespace videogoal::train
