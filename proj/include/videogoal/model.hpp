#pragma once

#include <array>
#include <deque>
#include <string>
#include <vector>

#include "videogoal/config.hpp"
#include "videogoal/env.hpp"
#include "videogoal/params.hpp"
#include "videogoal/tape.hpp"

namespace videogoal::model {

using env::Action;
using env::FrameTensor;
using nn::ParamStore;
using videogoal::Rng;
using nn::Tape;
using nn::Tensor;
using nn::Var;

struct ModelDims {
    int d = 64;
    int slots = 1;
    int enc_blocks = 2;
    int enc_ffn = 2;
    int chunk_len = 32;
    int pol_blocks = 2;
    int pol_ffn = 2;
    int mem_len = 64;
    int idm_blocks = 2;
    int idm_ffn = 2;
    int idm_window = 9;
    int view = 7;
    int channels = env::kFrameChannels;
    double sigma_floor = 1e-4;

    int cells() const { return view * view; }

    static ModelDims from(const RunConfig& cfg) {
        ModelDims m;
        m.d = cfg.encoder.d;
        m.slots = cfg.encoder.slots;
        m.enc_blocks = cfg.encoder.blocks;
        m.enc_ffn = cfg.encoder.ffn_mult;
        m.chunk_len = cfg.train.chunk_len;
        m.pol_blocks = cfg.policy.blocks;
        m.pol_ffn = cfg.policy.ffn_mult;
        m.mem_len = cfg.policy.mem_len;
        m.idm_blocks = cfg.idm.blocks;
        m.idm_ffn = cfg.idm.ffn_mult;
        m.idm_window = cfg.idm.window;
        m.view = cfg.env.view;
        m.sigma_floor = cfg.encoder.sigma_floor;
        return m;
    }
};

// ---- parameter initialization ----

template <typename S>
void init_frame_embedder(ParamStore<S>& p, const std::string& pre, const ModelDims& m, Rng& rng) {
    const int d = m.d;
    p.add(pre + "bb.w0", nn::glorot<S>(m.channels, d, rng));
    p.add(pre + "bb.b0", Tensor<S>(1, d));
    p.add(pre + "bb.w1", nn::glorot<S>(d, d, rng));
    p.add(pre + "bb.b1", Tensor<S>(1, d));
    p.add(pre + "bb.pos", nn::normal_init<S>(m.cells(), d, 0.02, rng));
    p.add(pre + "sp.token", nn::normal_init<S>(1, d, 0.02, rng));
    p.add(pre + "sp.ln_g", Tensor<S>::full(1, d, S(1)));
    p.add(pre + "sp.ln_b", Tensor<S>(1, d));
    p.add(pre + "sp.wq", nn::glorot<S>(d, d, rng));
    p.add(pre + "sp.wk", nn::glorot<S>(d, d, rng));
    p.add(pre + "sp.wv", nn::glorot<S>(d, d, rng));
    p.add(pre + "sp.wo", nn::glorot<S>(d, d, rng));
    p.add(pre + "sp.bo", Tensor<S>(1, d));
}

template <typename S>
void init_transformer(ParamStore<S>& p, const std::string& pre, int blocks, int ffn_mult,
                      int max_len, const ModelDims& m, Rng& rng) {
    const int d = m.d;
    p.add(pre + "pos", nn::normal_init<S>(max_len, d, 0.02, rng));
    for (int b = 0; b < blocks; ++b) {
        std::string bp = pre + std::to_string(b) + ".";
        p.add(bp + "ln1_g", Tensor<S>::full(1, d, S(1)));
        p.add(bp + "ln1_b", Tensor<S>(1, d));
        p.add(bp + "wq", nn::glorot<S>(d, d, rng));
        p.add(bp + "wk", nn::glorot<S>(d, d, rng));
        p.add(bp + "wv", nn::glorot<S>(d, d, rng));
        p.add(bp + "wo", nn::glorot<S>(d, d, rng));
        p.add(bp + "bo", Tensor<S>(1, d));
        p.add(bp + "ln2_g", Tensor<S>::full(1, d, S(1)));
        p.add(bp + "ln2_b", Tensor<S>(1, d));
        p.add(bp + "ffn.w1", nn::glorot<S>(d, d * ffn_mult, rng));
        p.add(bp + "ffn.b1", Tensor<S>(1, d * ffn_mult));
        p.add(bp + "ffn.w2", nn::glorot<S>(d * ffn_mult, d, rng));
        p.add(bp + "ffn.b2", Tensor<S>(1, d));
    }
    p.add(pre + "lnf_g", Tensor<S>::full(1, d, S(1)));
    p.add(pre + "lnf_b", Tensor<S>(1, d));
}

// Posterior or prior video encoder: frame embedder + non-causal transformer with
// summary tokens and Gaussian heads. Same architecture, separate parameters.
template <typename S>
void init_video_encoder(ParamStore<S>& p, const std::string& pre, const ModelDims& m, Rng& rng) {
    init_frame_embedder(p, pre, m, rng);
    init_transformer(p, pre + "tf.", m.enc_blocks, m.enc_ffn, m.chunk_len, m, rng);
    p.add(pre + "summary", nn::normal_init<S>(m.slots, m.d, 0.02, rng));
    p.add(pre + "mu.w", nn::glorot<S>(m.d, m.d, rng));
    p.add(pre + "mu.b", Tensor<S>(1, m.d));
    p.add(pre + "sig.w", nn::glorot<S>(m.d, m.d, rng));
    p.add(pre + "sig.b", Tensor<S>(1, m.d));
}

template <typename S>
void init_policy(ParamStore<S>& p, const ModelDims& m, Rng& rng) {
    const int d = m.d;
    p.add("policy.actemb.move", nn::normal_init<S>(env::kMoveArity, d, 0.02, rng));
    p.add("policy.actemb.turn", nn::normal_init<S>(env::kTurnArity, d, 0.02, rng));
    for (int b = 0; b < m.pol_blocks; ++b) {
        std::string bp = "policy." + std::to_string(b) + ".";
        p.add(bp + "x.ln_g", Tensor<S>::full(1, d, S(1)));
        p.add(bp + "x.ln_b", Tensor<S>(1, d));
        p.add(bp + "x.wq", nn::glorot<S>(d, d, rng));
        p.add(bp + "x.wk", nn::glorot<S>(d, d, rng));
        p.add(bp + "x.wv", nn::glorot<S>(d, d, rng));
        p.add(bp + "x.wo", nn::glorot<S>(d, d, rng));
        p.add(bp + "x.bo", Tensor<S>(1, d));
        p.add(bp + "x.gate", Tensor<S>(1, 1));  // tanh(0) = 0: goal ignored at init
        p.add(bp + "s.ln_g", Tensor<S>::full(1, d, S(1)));
        p.add(bp + "s.ln_b", Tensor<S>(1, d));
        p.add(bp + "s.wq", nn::glorot<S>(d, d, rng));
        p.add(bp + "s.wk", nn::glorot<S>(d, d, rng));
        p.add(bp + "s.wv", nn::glorot<S>(d, d, rng));
        p.add(bp + "s.wo", nn::glorot<S>(d, d, rng));
        p.add(bp + "s.bo", Tensor<S>(1, d));
        p.add(bp + "s.relbias", Tensor<S>(m.mem_len + 1, 1));
        p.add(bp + "f.ln_g", Tensor<S>::full(1, d, S(1)));
        p.add(bp + "f.ln_b", Tensor<S>(1, d));
        p.add(bp + "f.w1", nn::glorot<S>(d, d * m.pol_ffn, rng));
        p.add(bp + "f.b1", Tensor<S>(1, d * m.pol_ffn));
        p.add(bp + "f.w2", nn::glorot<S>(d * m.pol_ffn, d, rng));
        p.add(bp + "f.b2", Tensor<S>(1, d));
    }
    p.add("policy.lnf_g", Tensor<S>::full(1, d, S(1)));
    p.add("policy.lnf_b", Tensor<S>(1, d));
    // Zero heads give exactly uniform logits before training.
    p.add("policy.head.move.w", Tensor<S>(d, env::kMoveArity));
    p.add("policy.head.move.b", Tensor<S>(1, env::kMoveArity));
    p.add("policy.head.turn.w", Tensor<S>(d, env::kTurnArity));
    p.add("policy.head.turn.b", Tensor<S>(1, env::kTurnArity));
}

template <typename S>
void init_idm(ParamStore<S>& p, const ModelDims& m, Rng& rng) {
    init_frame_embedder(p, "idm.", m, rng);
    init_transformer(p, "idm.tf.", m.idm_blocks, m.idm_ffn, m.idm_window, m, rng);
    p.add("idm.head.move.w", Tensor<S>(m.d, env::kMoveArity));
    p.add("idm.head.move.b", Tensor<S>(1, env::kMoveArity));
    p.add("idm.head.turn.w", Tensor<S>(m.d, env::kTurnArity));
    p.add("idm.head.turn.b", Tensor<S>(1, env::kTurnArity));
}

// Agent parameter set: posterior encoder, prior encoder, policy.
template <typename S>
ParamStore<S> init_agent(const ModelDims& m, uint64_t seed) {
    ParamStore<S> p;
    Rng rng(derive_seed(seed, 0x1A1));
    init_video_encoder(p, "enc.", m, rng);
    init_video_encoder(p, "prior.", m, rng);
    init_policy(p, m, rng);
    return p;
}

template <typename S>
ParamStore<S> init_idm_store(const ModelDims& m, uint64_t seed) {
    ParamStore<S> p;
    Rng rng(derive_seed(seed, 0x1D3));
    init_idm(p, m, rng);
    return p;
}

// ---- forward passes ----

template <typename S>
Tensor<S> frame_as_tokens(const FrameTensor& f) {
    Tensor<S> t(f.h * f.w, f.c);
    for (size_t i = 0; i < f.values.size(); ++i) t.v[i] = static_cast<S>(f.values[i]);
    return t;
}

namespace detail {

template <typename S>
Var pstore(Tape<S>& tape, const ParamStore<S>& p, const std::string& name, bool trainable) {
    return trainable ? tape.param(name, p.get(name)) : tape.constant(p.get(name));
}

}  // namespace detail

// Parameter access mode: trainable leaves (training) or constants (inference /
// frozen modules).
template <typename S>
struct Module {
    Tape<S>* tape;
    const ParamStore<S>* store;
    bool trainable = true;
    Var operator()(const std::string& name) const {
        return detail::pstore(*tape, *store, name, trainable);
    }
};

// Per-frame embedding: two patch-linear backbone layers over the 49 cells, plus
// a learnable [sp] token attention-pooled over [cells, sp]. Only the [sp] query
// row of the pooling pass is materialized; with a single attention layer this
// equals the [sp] output of the full pass. Frames are processed independently.
template <typename S>
Var embed_frames(const Module<S>& mod, const std::string& pre,
                 const std::vector<FrameTensor>& frames, const ModelDims& m) {
    if (frames.empty()) throw DimensionError("embed_frames: empty frame list");
    Tape<S>& tape = *mod.tape;
    const int cells = m.cells();
    Var w0 = mod(pre + "bb.w0"), b0 = mod(pre + "bb.b0");
    Var w1 = mod(pre + "bb.w1"), b1 = mod(pre + "bb.b1");
    Var pos = mod(pre + "bb.pos");
    Var sp = mod(pre + "sp.token");
    Var ln_g = mod(pre + "sp.ln_g"), ln_b = mod(pre + "sp.ln_b");
    Var wq = mod(pre + "sp.wq"), wk = mod(pre + "sp.wk"), wv = mod(pre + "sp.wv");
    Var wo = mod(pre + "sp.wo"), bo = mod(pre + "sp.bo");

    std::vector<uint8_t> full_mask(static_cast<size_t>(cells) + 1, 1);
    std::vector<Var> rows;
    rows.reserve(frames.size());
    for (const auto& f : frames) {
        if (f.h * f.w != cells || f.c != m.channels)
            throw DimensionError("embed_frames: frame shape " + std::to_string(f.h) + "x" +
                                 std::to_string(f.w) + "x" + std::to_string(f.c) +
                                 " does not match config");
        Var x = tape.constant(frame_as_tokens<S>(f));
        x = tape.tanh_op(tape.add_row(tape.matmul(x, w0), b0));
        x = tape.tanh_op(tape.add_row(tape.matmul(x, w1), b1));
        x = tape.add(x, pos);
        Var seq = tape.concat_rows({x, sp});
        Var n = tape.layer_norm(seq, ln_g, ln_b);
        Var q = tape.matmul(tape.slice_rows(n, cells, cells + 1), wq);
        Var k = tape.matmul(n, wk);
        Var v = tape.matmul(n, wv);
        Var att = tape.attention(q, k, v, full_mask);
        Var out = tape.add(sp, tape.add_row(tape.matmul(att, wo), bo));
        rows.push_back(out);
    }
    return rows.size() == 1 ? rows[0] : tape.concat_rows(rows);
}

namespace detail {

template <typename S>
Var transformer_block(Tape<S>& tape, const Module<S>& mod, const std::string& bp, Var h,
                      const std::vector<uint8_t>& mask, Var bias = -1) {
    Var n1 = tape.layer_norm(h, mod(bp + "ln1_g"), mod(bp + "ln1_b"));
    Var att = tape.attention(tape.matmul(n1, mod(bp + "wq")), tape.matmul(n1, mod(bp + "wk")),
                             tape.matmul(n1, mod(bp + "wv")), mask, bias);
    h = tape.add(h, tape.add_row(tape.matmul(att, mod(bp + "wo")), mod(bp + "bo")));
    Var n2 = tape.layer_norm(h, mod(bp + "ln2_g"), mod(bp + "ln2_b"));
    Var f = tape.tanh_op(tape.add_row(tape.matmul(n2, mod(bp + "ffn.w1")), mod(bp + "ffn.b1")));
    return tape.add(h, tape.add_row(tape.matmul(f, mod(bp + "ffn.w2")), mod(bp + "ffn.b2")));
}

}  // namespace detail

template <typename S>
struct GoalDistributionVars {
    Var mu = -1;
    Var sigma = -1;
};

// Non-causal temporal transformer over frame embeddings plus summary tokens;
// Gaussian heads applied to the summary outputs. Works for any prefix length
// 1 <= T' <= chunk_len; the prior encoder consumes prefixes only.
template <typename S>
GoalDistributionVars<S> encode_goal_distribution(const Module<S>& mod, const std::string& pre,
                                                 Var frame_embs, const ModelDims& m) {
    Tape<S>& tape = *mod.tape;
    const int t = tape.val(frame_embs).rows;
    if (t < 1 || t > m.chunk_len)
        throw DimensionError("encode_goal_distribution: sequence length " + std::to_string(t) +
                             " outside [1," + std::to_string(m.chunk_len) + "]");
    Var pos = tape.slice_rows(mod(pre + "tf.pos"), 0, t);
    Var h = tape.concat_rows({tape.add(frame_embs, pos), mod(pre + "summary")});
    const int n = t + m.slots;
    std::vector<uint8_t> mask(static_cast<size_t>(n) * n, 1);
    for (int b = 0; b < m.enc_blocks; ++b)
        h = detail::transformer_block(tape, mod, pre + "tf." + std::to_string(b) + ".", h, mask);
    h = tape.layer_norm(h, mod(pre + "tf.lnf_g"), mod(pre + "tf.lnf_b"));
    Var c_hat = tape.slice_rows(h, t, n);
    GoalDistributionVars<S> out;
    out.mu = tape.add_row(tape.matmul(c_hat, mod(pre + "mu.w")), mod(pre + "mu.b"));
    out.sigma = tape.add_const(
        tape.softplus(tape.add_row(tape.matmul(c_hat, mod(pre + "sig.w")), mod(pre + "sig.b"))),
        static_cast<S>(m.sigma_floor));
    return out;
}

enum class GoalMode { Train, Inference };

template <typename S>
Var sample_goal(Tape<S>& tape, const GoalDistributionVars<S>& dist, GoalMode mode,
                const Tensor<S>* noise) {
    if (mode == GoalMode::Inference) return dist.mu;
    if (noise == nullptr) throw DimensionError("sample_goal: train mode requires noise");
    return tape.reparameterize(dist.mu, dist.sigma, *noise);
}

template <typename S>
struct PolicyLogitsVars {
    Var move = -1;
    Var turn = -1;
};

namespace detail {

// Distance-indexed additive attention bias, clipped at mem_len.
template <typename S>
Var rel_bias(Tape<S>& tape, Var table, const std::vector<int64_t>& qpos,
             const std::vector<int64_t>& kpos, int clip) {
    std::vector<int> idx;
    idx.reserve(qpos.size() * kpos.size());
    for (int64_t q : qpos)
        for (int64_t k : kpos) {
            int64_t dist = q - k;
            if (dist < 0) dist = 0;
            if (dist > clip) dist = clip;
            idx.push_back(static_cast<int>(dist));
        }
    Var flat = tape.embedding(table, idx);
    return tape.reshape(flat, static_cast<int>(qpos.size()), static_cast<int>(kpos.size()));
}

template <typename S>
Var gated_cross_attention(Tape<S>& tape, const Module<S>& mod, const std::string& bp, Var h,
                          Var goal, int t, int slots) {
    std::vector<uint8_t> mask(static_cast<size_t>(t) * slots, 1);
    Var n = tape.layer_norm(h, mod(bp + "ln_g"), mod(bp + "ln_b"));
    Var att = tape.attention(tape.matmul(n, mod(bp + "wq")), tape.matmul(goal, mod(bp + "wk")),
                             tape.matmul(goal, mod(bp + "wv")), mask);
    Var out = tape.add_row(tape.matmul(att, mod(bp + "wo")), mod(bp + "bo"));
    Var gate = tape.tanh_op(mod(bp + "gate"));
    return tape.add(h, tape.scale_var(out, gate));
}

}  // namespace detail

// Goal-conditioned causal decoder over a full sequence. Position t sees frames
// and previous actions up to t plus the goal. prev_actions[0] must be the START
// action.
template <typename S>
PolicyLogitsVars<S> policy_sequence(const Module<S>& mod, Var frame_embs,
                                    const std::vector<Action>& prev_actions, Var goal,
                                    const ModelDims& m, int64_t pos_offset = 0) {
    Tape<S>& tape = *mod.tape;
    const int t = tape.val(frame_embs).rows;
    if (static_cast<int>(prev_actions.size()) != t)
        throw DimensionError("policy_sequence: " + std::to_string(prev_actions.size()) +
                             " prev_actions for " + std::to_string(t) + " frames");
    std::vector<int> mv, tv;
    for (const auto& a : prev_actions) {
        mv.push_back(a.move);
        tv.push_back(a.turn);
    }
    Var h = tape.add(frame_embs, tape.add(tape.embedding(mod("policy.actemb.move"), mv),
                                          tape.embedding(mod("policy.actemb.turn"), tv)));
    std::vector<uint8_t> causal(static_cast<size_t>(t) * t, 0);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j <= i; ++j) causal[static_cast<size_t>(i) * t + j] = 1;
    std::vector<int64_t> posv(t);
    for (int i = 0; i < t; ++i) posv[i] = pos_offset + i;

    for (int b = 0; b < m.pol_blocks; ++b) {
        std::string bp = "policy." + std::to_string(b) + ".";
        h = detail::gated_cross_attention(tape, mod, bp + "x.", h, goal, t, m.slots);
        Var n = tape.layer_norm(h, mod(bp + "s.ln_g"), mod(bp + "s.ln_b"));
        Var bias = detail::rel_bias(tape, mod(bp + "s.relbias"), posv, posv, m.mem_len);
        Var att =
            tape.attention(tape.matmul(n, mod(bp + "s.wq")), tape.matmul(n, mod(bp + "s.wk")),
                           tape.matmul(n, mod(bp + "s.wv")), causal, bias);
        h = tape.add(h, tape.add_row(tape.matmul(att, mod(bp + "s.wo")), mod(bp + "s.bo")));
        Var n2 = tape.layer_norm(h, mod(bp + "f.ln_g"), mod(bp + "f.ln_b"));
        Var f = tape.tanh_op(tape.add_row(tape.matmul(n2, mod(bp + "f.w1")), mod(bp + "f.b1")));
        h = tape.add(h, tape.add_row(tape.matmul(f, mod(bp + "f.w2")), mod(bp + "f.b2")));
    }
    h = tape.layer_norm(h, mod("policy.lnf_g"), mod("policy.lnf_b"));
    PolicyLogitsVars<S> out;
    out.move = tape.add_row(tape.matmul(h, mod("policy.head.move.w")), mod("policy.head.move.b"));
    out.turn = tape.add_row(tape.matmul(h, mod("policy.head.turn.w")), mod("policy.head.turn.b"));
    return out;
}

// ---- incremental inference ----

struct ActionLogits {
    std::array<float, env::kMoveArity> move{};
    std::array<float, env::kTurnArity> turn{};
};

// Per-block cached key/value rows of the last mem_len timesteps.
struct RecurrenceMemory {
    int mem_len = 0;
    int d = 0;
    int64_t steps_seen = 0;
    std::vector<std::deque<std::vector<float>>> keys;
    std::vector<std::deque<std::vector<float>>> values;

    RecurrenceMemory() = default;
    RecurrenceMemory(int blocks, int mem, int dim)
        : mem_len(mem), d(dim), keys(blocks), values(blocks) {}
    int length() const { return keys.empty() ? 0 : static_cast<int>(keys[0].size()); }
};

// One decoder step with recurrence memory. Equal to policy_sequence on the
// suffix window while the window fits in mem_len. Returns logits and updates
// the memory in place.
ActionLogits policy_step(const ParamStore<float>& store, const std::vector<float>& frame_embedding,
                         const Action& prev_action, const Tensor<float>& goal,
                         RecurrenceMemory& memory, const ModelDims& m);

// Sum of the two per-head categorical cross-entropies for a single step.
double action_nll(const ActionLogits& logits, const Action& action);

// Non-causal inverse dynamics prediction for the centre transition of a window.
template <typename S>
PolicyLogitsVars<S> idm_predict_vars(const Module<S>& mod, const std::vector<FrameTensor>& window,
                                     const ModelDims& m) {
    if (static_cast<int>(window.size()) != m.idm_window)
        throw DimensionError("idm_predict: window length " + std::to_string(window.size()) +
                             " != " + std::to_string(m.idm_window));
    Tape<S>& tape = *mod.tape;
    Var x = embed_frames(mod, "idm.", window, m);
    Var pos = tape.slice_rows(mod("idm.tf.pos"), 0, m.idm_window);
    Var h = tape.add(x, pos);
    std::vector<uint8_t> mask(static_cast<size_t>(m.idm_window) * m.idm_window, 1);
    for (int b = 0; b < m.idm_blocks; ++b)
        h = detail::transformer_block(tape, mod, "idm.tf." + std::to_string(b) + ".", h, mask);
    h = tape.layer_norm(h, mod("idm.tf.lnf_g"), mod("idm.tf.lnf_b"));
    Var center = tape.slice_rows(h, m.idm_window / 2, m.idm_window / 2 + 1);
    PolicyLogitsVars<S> out;
    out.move =
        tape.add_row(tape.matmul(center, mod("idm.head.move.w")), mod("idm.head.move.b"));
    out.turn =
        tape.add_row(tape.matmul(center, mod("idm.head.turn.w")), mod("idm.head.turn.b"));
    return out;
}

ActionLogits idm_predict(const ParamStore<float>& store, const std::vector<FrameTensor>& window,
                         const ModelDims& m);

// Frame embedding without gradients, for rollouts.
std::vector<float> embed_single_frame(const ParamStore<float>& store, const std::string& prefix,
                                      const FrameTensor& frame, const ModelDims& m);

// Mean-mode goal from a reference video of exactly chunk_len frames.
Tensor<float> encode_goal_mean(const ParamStore<float>& store, const std::string& prefix,
                               const std::vector<FrameTensor>& frames, const ModelDims& m);

// ---- text encoder (alignment stage) ----

std::vector<std::string> text_vocabulary();
std::vector<int> tokenize_text(const std::string& text);

template <typename S>
void init_text_encoder(ParamStore<S>& p, const ModelDims& m, uint64_t seed) {
    Rng rng(derive_seed(seed, 0x7E7));
    const int vocab = static_cast<int>(text_vocabulary().size());
    p.add("text.vocab", nn::normal_init<S>(vocab, m.d, 0.02, rng));
    p.add("text.w1", nn::glorot<S>(m.d, m.d, rng));
    p.add("text.b1", Tensor<S>(1, m.d));
    p.add("text.w2", nn::glorot<S>(m.d, m.d * m.slots, rng));
    p.add("text.b2", Tensor<S>(1, m.d * m.slots));
}

// Token embeddings mean-pooled then mapped to an N x d goal embedding.
template <typename S>
Var text_goal(const Module<S>& mod, const std::vector<int>& tokens, const ModelDims& m) {
    Tape<S>& tape = *mod.tape;
    if (tokens.empty()) throw DimensionError("text_goal: empty token list");
    Var e = tape.embedding(mod("text.vocab"), tokens);
    Var pooled = tape.mean_rows(e);
    Var h = tape.tanh_op(tape.add_row(tape.matmul(pooled, mod("text.w1")), mod("text.b1")));
    Var g = tape.add_row(tape.matmul(h, mod("text.w2")), mod("text.b2"));
    return tape.reshape(g, m.slots, m.d);
}

Tensor<float> text_goal_mean(const ParamStore<float>& store, const std::string& text,
                             const ModelDims& m);

}  // namespace videogoal::model
