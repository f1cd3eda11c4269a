#include "videogoal/model.hpp"

#include <algorithm>
#include <set>

namespace videogoal::model {

ActionLogits policy_step(const ParamStore<float>& store, const std::vector<float>& frame_embedding,
                         const Action& prev_action, const Tensor<float>& goal,
                         RecurrenceMemory& memory, const ModelDims& m) {
    if (static_cast<int>(frame_embedding.size()) != m.d)
        throw DimensionError("policy_step: frame embedding size " +
                             std::to_string(frame_embedding.size()) + " != d");
    if (memory.keys.empty()) memory = RecurrenceMemory(m.pol_blocks, m.mem_len, m.d);
    if (static_cast<int>(memory.keys.size()) != m.pol_blocks || memory.d != m.d)
        throw DimensionError("policy_step: memory does not match policy dimensions");

    Tape<float> tape;
    Module<float> mod{&tape, &store, false};
    Var h = tape.constant(Tensor<float>(1, m.d, frame_embedding));
    h = tape.add(h, tape.add(tape.embedding(mod("policy.actemb.move"), {prev_action.move}),
                             tape.embedding(mod("policy.actemb.turn"), {prev_action.turn})));
    Var goal_v = tape.constant(goal);

    const int64_t t = memory.steps_seen;
    std::vector<std::vector<float>> new_k(m.pol_blocks), new_v(m.pol_blocks);
    for (int b = 0; b < m.pol_blocks; ++b) {
        std::string bp = "policy." + std::to_string(b) + ".";
        h = detail::gated_cross_attention(tape, mod, bp + "x.", h, goal_v, 1, m.slots);
        Var n = tape.layer_norm(h, mod(bp + "s.ln_g"), mod(bp + "s.ln_b"));
        Var q = tape.matmul(n, mod(bp + "s.wq"));
        Var k_cur = tape.matmul(n, mod(bp + "s.wk"));
        Var v_cur = tape.matmul(n, mod(bp + "s.wv"));
        const int len = static_cast<int>(memory.keys[b].size());
        Var k_all = k_cur, v_all = v_cur;
        if (len > 0) {
            Tensor<float> mk(len, m.d), mv(len, m.d);
            for (int i = 0; i < len; ++i) {
                std::copy(memory.keys[b][i].begin(), memory.keys[b][i].end(), mk.row(i));
                std::copy(memory.values[b][i].begin(), memory.values[b][i].end(), mv.row(i));
            }
            k_all = tape.concat_rows({tape.constant(std::move(mk)), k_cur});
            v_all = tape.concat_rows({tape.constant(std::move(mv)), v_cur});
        }
        std::vector<int64_t> kpos(len + 1);
        for (int i = 0; i <= len; ++i) kpos[i] = t - len + i;
        Var bias = detail::rel_bias(tape, mod(bp + "s.relbias"), {t}, kpos, m.mem_len);
        std::vector<uint8_t> mask(static_cast<size_t>(len) + 1, 1);
        Var att = tape.attention(q, k_all, v_all, mask, bias);
        h = tape.add(h, tape.add_row(tape.matmul(att, mod(bp + "s.wo")), mod(bp + "s.bo")));
        Var n2 = tape.layer_norm(h, mod(bp + "f.ln_g"), mod(bp + "f.ln_b"));
        Var f = tape.tanh_op(tape.add_row(tape.matmul(n2, mod(bp + "f.w1")), mod(bp + "f.b1")));
        h = tape.add(h, tape.add_row(tape.matmul(f, mod(bp + "f.w2")), mod(bp + "f.b2")));
        new_k[b] = tape.val(k_cur).v;
        new_v[b] = tape.val(v_cur).v;
    }
    h = tape.layer_norm(h, mod("policy.lnf_g"), mod("policy.lnf_b"));
    Var mo = tape.add_row(tape.matmul(h, mod("policy.head.move.w")), mod("policy.head.move.b"));
    Var tu = tape.add_row(tape.matmul(h, mod("policy.head.turn.w")), mod("policy.head.turn.b"));

    ActionLogits out;
    for (int i = 0; i < env::kMoveArity; ++i) out.move[i] = tape.val(mo).v[i];
    for (int i = 0; i < env::kTurnArity; ++i) out.turn[i] = tape.val(tu).v[i];

    for (int b = 0; b < m.pol_blocks; ++b) {
        memory.keys[b].push_back(std::move(new_k[b]));
        memory.values[b].push_back(std::move(new_v[b]));
        while (static_cast<int>(memory.keys[b].size()) > m.mem_len) {
            memory.keys[b].pop_front();
            memory.values[b].pop_front();
        }
    }
    ++memory.steps_seen;
    return out;
}

namespace {

double nll_of(const float* logits, int n, int index) {
    if (index < 0 || index >= n) throw DimensionError("action_nll: index out of range");
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += std::exp(logits[i] - mx);
    return -(logits[index] - mx - std::log(sum));
}

}  // namespace

double action_nll(const ActionLogits& logits, const Action& action) {
    return nll_of(logits.move.data(), env::kMoveArity, action.move) +
           nll_of(logits.turn.data(), env::kTurnArity, action.turn);
}

ActionLogits idm_predict(const ParamStore<float>& store, const std::vector<FrameTensor>& window,
                         const ModelDims& m) {
    Tape<float> tape;
    Module<float> mod{&tape, &store, false};
    auto vars = idm_predict_vars(mod, window, m);
    ActionLogits out;
    for (int i = 0; i < env::kMoveArity; ++i) out.move[i] = tape.val(vars.move).v[i];
    for (int i = 0; i < env::kTurnArity; ++i) out.turn[i] = tape.val(vars.turn).v[i];
    return out;
}

std::vector<float> embed_single_frame(const ParamStore<float>& store, const std::string& prefix,
                                      const FrameTensor& frame, const ModelDims& m) {
    Tape<float> tape;
    Module<float> mod{&tape, &store, false};
    Var e = embed_frames(mod, prefix, {frame}, m);
    return tape.val(e).v;
}

Tensor<float> encode_goal_mean(const ParamStore<float>& store, const std::string& prefix,
                               const std::vector<FrameTensor>& frames, const ModelDims& m) {
    Tape<float> tape;
    Module<float> mod{&tape, &store, false};
    Var e = embed_frames(mod, prefix, frames, m);
    auto dist = encode_goal_distribution(mod, prefix, e, m);
    return tape.val(dist.mu);
}

std::vector<std::string> text_vocabulary() {
    std::set<std::string> vocab;
    for (const auto& tag : env::event_tag_set()) {
        std::string tok;
        for (char ch : tag + ":") {
            if (ch == ':' || ch == '_') {
                if (!tok.empty()) vocab.insert(tok);
                tok.clear();
            } else {
                tok.push_back(ch);
            }
        }
    }
    return {vocab.begin(), vocab.end()};
}

std::vector<int> tokenize_text(const std::string& text) {
    static const std::vector<std::string> vocab = text_vocabulary();
    std::vector<int> ids;
    std::string tok;
    auto flush = [&]() {
        if (tok.empty()) return;
        auto it = std::lower_bound(vocab.begin(), vocab.end(), tok);
        if (it == vocab.end() || *it != tok) throw ConfigError("unknown token: " + tok);
        ids.push_back(static_cast<int>(it - vocab.begin()));
        tok.clear();
    };
    for (char ch : text) {
        if (ch == ' ' || ch == '_' || ch == ':')
            flush();
        else
            tok.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    flush();
    if (ids.empty()) throw ConfigError("tokenize_text: empty text");
    return ids;
}

Tensor<float> text_goal_mean(const ParamStore<float>& store, const std::string& text,
                             const ModelDims& m) {
    Tape<float> tape;
    Module<float> mod{&tape, &store, false};
    Var g = text_goal(mod, tokenize_text(text), m);
    return tape.val(g);
}

}  // namespace videogoal::model
