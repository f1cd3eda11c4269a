#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "videogoal/formats.hpp"
#include "videogoal/model.hpp"

namespace videogoal::train {

using env::Action;
using env::FrameTensor;
using env::Trajectory;
using model::ModelDims;
using nn::ParamStore;
using nn::Tape;
using nn::Tensor;
using nn::Var;

// A fixed-length training segment. prev_actions[0] is START (noop/none).
struct Chunk {
    std::vector<FrameTensor> frames;
    std::vector<Action> actions;
    std::vector<Action> prev_actions;
    std::string skill_label;
};

// Non-overlapping contiguous windows of length T, remainder dropped, order
// shuffled by seed. Episodes shorter than T are skipped and counted.
std::vector<Chunk> chunk_dataset(const std::vector<Trajectory>& trajs, int T, uint64_t seed,
                                 int* skipped_episodes = nullptr);

struct LossBreakdown {
    double total = 0;
    double bc = 0;
    double kl = 0;
    double move_nll = 0;
    double turn_nll = 0;
};

struct LossOptions {
    double lambda_bc = 1.0;
    double lambda_kl = 0.01;
    bool unconditional = false;
    std::vector<int> taus;  // prefix lengths for the prior KL, each in [1, T)
};

template <typename S>
struct ChunkLossVars {
    Var total = -1;
    Var bc = -1;
    Var kl = -1;
    Var move_nll = -1;
    Var turn_nll = -1;
};

// The joint objective on one chunk: goal sampled once from the posterior over
// the full chunk, behavior cloning at every position, KL against the
// prefix-prior averaged over the requested taus.
template <typename S>
ChunkLossVars<S> build_chunk_loss(Tape<S>& tape, const ParamStore<S>& store, const Chunk& chunk,
                                  const ModelDims& m, const LossOptions& opt,
                                  const Tensor<S>* noise, bool trainable = true) {
    const int T = static_cast<int>(chunk.frames.size());
    if (static_cast<int>(chunk.actions.size()) != T ||
        static_cast<int>(chunk.prev_actions.size()) != T)
        throw DimensionError("build_chunk_loss: chunk frames/actions misaligned");
    for (int tau : opt.taus)
        if (tau < 1 || tau >= T)
            throw DimensionError("build_chunk_loss: tau " + std::to_string(tau) +
                                 " outside [1," + std::to_string(T) + ")");
    model::Module<S> mod{&tape, &store, trainable};
    Var x = model::embed_frames(mod, "enc.", chunk.frames, m);

    ChunkLossVars<S> out;
    Var goal;
    if (opt.unconditional) {
        goal = tape.constant(Tensor<S>(m.slots, m.d));
        out.kl = tape.constant(Tensor<S>(1, 1));
    } else {
        auto post = model::encode_goal_distribution(mod, "enc.", x, m);
        goal = model::sample_goal(tape, post, model::GoalMode::Train, noise);
        if (opt.taus.empty()) {
            out.kl = tape.constant(Tensor<S>(1, 1));
        } else {
            Var acc = -1;
            for (int tau : opt.taus) {
                std::vector<FrameTensor> prefix(chunk.frames.begin(), chunk.frames.begin() + tau);
                Var xp = model::embed_frames(mod, "prior.", prefix, m);
                auto prior = model::encode_goal_distribution(mod, "prior.", xp, m);
                Var kl_tau = tape.gaussian_kl(post.mu, post.sigma, prior.mu, prior.sigma);
                acc = acc < 0 ? kl_tau : tape.add(acc, kl_tau);
            }
            out.kl = tape.scale(acc, S(1) / S(opt.taus.size()));
        }
    }

    auto logits = model::policy_sequence(mod, x, chunk.prev_actions, goal, m);
    std::vector<int> mv, tv;
    for (const auto& a : chunk.actions) {
        mv.push_back(a.move);
        tv.push_back(a.turn);
    }
    out.move_nll = tape.cross_entropy(logits.move, mv, Tape<S>::Reduce::Mean);
    out.turn_nll = tape.cross_entropy(logits.turn, tv, Tape<S>::Reduce::Mean);
    out.bc = tape.add(out.move_nll, out.turn_nll);
    out.total = tape.add(tape.scale(out.bc, static_cast<S>(opt.lambda_bc)),
                         tape.scale(out.kl, static_cast<S>(opt.lambda_kl)));
    return out;
}

template <typename S>
LossBreakdown extract_breakdown(const Tape<S>& tape, const ChunkLossVars<S>& v) {
    LossBreakdown b;
    b.total = tape.val(v.total).v[0];
    b.bc = tape.val(v.bc).v[0];
    b.kl = tape.val(v.kl).v[0];
    b.move_nll = tape.val(v.move_nll).v[0];
    b.turn_nll = tape.val(v.turn_nll).v[0];
    return b;
}

// Single-chunk loss evaluation (no parameter update), in the requested precision.
LossBreakdown compute_loss(const Chunk& chunk, const ParamStore<float>& store,
                           const RunConfig& cfg, uint64_t noise_seed, int tau);

// Draw the tau set for one chunk according to tau_mode.
std::vector<int> draw_taus(const std::string& tau_mode, int T, nn::Rng& rng);

Tensor<float> gaussian_noise(int rows, int cols, uint64_t seed);

struct TrainResult {
    io::Checkpoint checkpoint;
    std::vector<nlohmann::json> metrics;  // one JSON object per epoch
};

// Full training run: AdamW with decoupled weight decay and linear warmup,
// deterministic given seed and a fixed thread count.
TrainResult train_agent(const std::vector<Trajectory>& dataset, const RunConfig& cfg,
                        const std::string& metrics_path = "");

struct IdmResult {
    io::Checkpoint checkpoint;
    double accuracy = 0;  // held-out exact-match accuracy (both heads)
    nlohmann::json report;
};

IdmResult train_idm(const std::vector<Trajectory>& labeled, const RunConfig& cfg);

// Held-out exact-match accuracy of an IDM on labeled trajectories.
double idm_accuracy(const ParamStore<float>& store, const std::vector<Trajectory>& trajs,
                    const RunConfig& cfg);

// Fill missing actions with IDM argmax predictions. Refuses labeled input.
std::vector<Trajectory> pseudo_label(const std::vector<Trajectory>& unlabeled,
                                     const ParamStore<float>& idm_params, const RunConfig& cfg);

// Build (text, demonstration chunk) pairs keyed by events: the chunk covers
// [event_tick - T + 1, event_tick] and the text is the event tag's token form.
std::vector<std::pair<std::string, Chunk>> make_text_pairs(const std::vector<Trajectory>& trajs,
                                                           int T, int max_pairs, uint64_t seed);

// Align a text encoder to the learned goal space with the decoder frozen.
io::Checkpoint align_text_encoder(const std::vector<std::pair<std::string, Chunk>>& pairs,
                                  const io::Checkpoint& frozen, const RunConfig& cfg);

// Max relative gradient error of the full training loss on a micro
// configuration, 64-bit.
double loss_grad_check(const RunConfig& cfg, double eps);

}  // namespace videogoal::train
