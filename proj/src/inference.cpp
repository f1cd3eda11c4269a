#include "videogoal/inference.hpp"

#include <algorithm>
#include <iostream>

namespace videogoal::infer {

using model::ModelDims;
using model::RecurrenceMemory;

int EpisodeLog::event_count(const std::string& tag) const {
    int n = 0;
    for (const auto& e : events)
        if (e.tag == tag) ++n;
    return n;
}

nlohmann::json EpisodeLog::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["total_steps"] = total_steps;
    nlohmann::json acts = nlohmann::json::array();
    for (const auto& a : actions) acts.push_back({a.move, a.turn});
    j["actions"] = acts;
    nlohmann::json evs = nlohmann::json::array();
    for (const auto& e : events) evs.push_back({{"tick", e.tick}, {"tag", e.tag}});
    j["events"] = evs;
    j["final_inventory"] = final_inventory;
    j["switch_ticks"] = switch_ticks;
    return j;
}

EpisodeLog EpisodeLog::from_json(const nlohmann::json& j) {
    EpisodeLog log;
    log.seed = j.at("seed").get<uint64_t>();
    log.total_steps = j.at("total_steps").get<int>();
    for (const auto& a : j.at("actions")) log.actions.push_back({a.at(0).get<int>(), a.at(1).get<int>()});
    for (const auto& e : j.at("events"))
        log.events.push_back({e.at("tag").get<std::string>(), e.at("tick").get<int>()});
    log.final_inventory = j.at("final_inventory").get<std::map<std::string, int>>();
    log.switch_ticks = j.at("switch_ticks").get<std::vector<int>>();
    return log;
}

ActionLogits guided_logits(const ActionLogits& logits_goal, const ActionLogits& logits_bias,
                           double lambda) {
    ActionLogits out;
    for (int i = 0; i < env::kMoveArity; ++i)
        out.move[i] = static_cast<float>((1.0 + lambda) * logits_goal.move[i] -
                                         lambda * logits_bias.move[i]);
    for (int i = 0; i < env::kTurnArity; ++i)
        out.turn[i] = static_cast<float>((1.0 + lambda) * logits_goal.turn[i] -
                                         lambda * logits_bias.turn[i]);
    return out;
}

namespace {

int sample_categorical(const float* logits, int n, double temperature, nn::Rng& rng) {
    double mx = logits[0] / temperature;
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i] / temperature);
    double sum = 0;
    std::vector<double> p(n);
    for (int i = 0; i < n; ++i) {
        p[i] = std::exp(logits[i] / temperature - mx);
        sum += p[i];
    }
    double u = rng.uniform() * sum;
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        acc += p[i];
        if (u < acc) return i;
    }
    return n - 1;
}

}  // namespace

Action sample_action(const ActionLogits& logits, double temperature, nn::Rng& noise) {
    if (!(temperature > 0)) throw ConfigError("sample_action: temperature must be > 0");
    Action a;
    a.move = sample_categorical(logits.move.data(), env::kMoveArity, temperature, noise);
    a.turn = sample_categorical(logits.turn.data(), env::kTurnArity, temperature, noise);
    return a;
}

Action greedy_action(const ActionLogits& logits) {
    Action a;
    a.move = static_cast<int>(std::max_element(logits.move.begin(), logits.move.end()) -
                              logits.move.begin());
    a.turn = static_cast<int>(std::max_element(logits.turn.begin(), logits.turn.end()) -
                              logits.turn.begin());
    return a;
}

std::vector<FrameTensor> resample_reference(const std::vector<FrameTensor>& video, int T) {
    if (video.empty()) throw ConfigError("resample_reference: empty video");
    const int len = static_cast<int>(video.size());
    if (len == T) return video;
    std::vector<FrameTensor> out;
    out.reserve(T);
    if (len > T) {
        for (int i = 0; i < T; ++i)
            out.push_back(video[static_cast<size_t>(i) * len / T]);
    } else {
        std::cerr << "warning: reference video shorter than chunk length (" << len << " < " << T
                  << "); padding by repeating the last frame\n";
        out = video;
        while (static_cast<int>(out.size()) < T) out.push_back(video.back());
    }
    return out;
}

Tensor<float> encode_reference(const std::vector<FrameTensor>& video, const io::Checkpoint& ck,
                               const RunConfig& cfg) {
    const ModelDims m = ModelDims::from(cfg);
    auto frames = resample_reference(video, m.chunk_len);
    return model::encode_goal_mean(ck.params, "enc.", frames, m);
}

std::vector<FrameTensor> concat_videos(const std::vector<FrameTensor>& v1,
                                       const std::vector<FrameTensor>& v2, int T) {
    if (static_cast<int>(v1.size()) != T || static_cast<int>(v2.size()) != T)
        throw ConfigError("concat_videos: both inputs must have length " + std::to_string(T));
    std::vector<FrameTensor> out;
    out.reserve(T);
    for (int i = 0; i < T; i += 2) out.push_back(v1[i]);
    for (int i = 0; i < T; i += 2) out.push_back(v2[i]);
    return out;
}

namespace {

std::map<std::string, int> inventory_map(const env::WorldState& s) {
    std::map<std::string, int> inv;
    for (int i = 0; i < env::kResourceCount; ++i)
        inv[env::resource_name(static_cast<env::Resource>(i))] = s.inventory[i];
    return inv;
}

struct StreamState {
    RecurrenceMemory memory;
};

}  // namespace

EpisodeLog rollout(uint64_t env_seed, const Tensor<float>& goal, const io::Checkpoint& ck,
                   const RolloutOptions& opt, const RunConfig& cfg) {
    ChainSpec chain;
    chain.stages.push_back({"goal", goal, "", opt.steps});
    return chain_rollout(env_seed, chain, ck, opt, cfg);
}

bool Predicate::eval(const env::WorldState& state, const std::vector<Event>& events,
                     int steps_in_stage) const {
    int lhs = 0;
    switch (source) {
        case Source::Inventory: {
            int idx = -1;
            for (int i = 0; i < env::kResourceCount; ++i)
                if (key == env::resource_name(static_cast<env::Resource>(i))) idx = i;
            lhs = state.inventory[idx];
            break;
        }
        case Source::Events: {
            for (const auto& e : events)
                if (e.tag == key) ++lhs;
            break;
        }
        case Source::Steps: lhs = steps_in_stage; break;
    }
    switch (op) {
        case Op::Lt: return lhs < value;
        case Op::Le: return lhs <= value;
        case Op::Gt: return lhs > value;
        case Op::Ge: return lhs >= value;
        case Op::Eq: return lhs == value;
        case Op::Ne: return lhs != value;
    }
    return false;
}

Predicate parse_predicate(const std::string& text) {
    // Grammar: <field> <op> <int>, field = inventory.<resource> | events.<tag> | steps
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : text) {
        if (ch == ' ') {
            if (!cur.empty()) parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) parts.push_back(cur);
    if (parts.size() != 3)
        throw ConfigError("malformed predicate '" + text + "': expected '<field> <op> <int>'");

    Predicate p;
    const std::string& field = parts[0];
    if (field == "steps") {
        p.source = Predicate::Source::Steps;
    } else if (field.rfind("inventory.", 0) == 0) {
        p.source = Predicate::Source::Inventory;
        p.key = field.substr(10);
        bool known = false;
        for (int i = 0; i < env::kResourceCount; ++i)
            if (p.key == env::resource_name(static_cast<env::Resource>(i))) known = true;
        if (!known) throw ConfigError("malformed predicate: unknown resource '" + p.key + "'");
    } else if (field.rfind("events.", 0) == 0) {
        p.source = Predicate::Source::Events;
        p.key = field.substr(7);
        auto tags = env::event_tag_set();
        if (std::find(tags.begin(), tags.end(), p.key) == tags.end())
            throw ConfigError("malformed predicate: unknown event tag '" + p.key + "'");
    } else {
        throw ConfigError("malformed predicate: unknown field '" + field + "'");
    }

    const std::string& ops = parts[1];
    if (ops == "<") p.op = Predicate::Op::Lt;
    else if (ops == "<=") p.op = Predicate::Op::Le;
    else if (ops == ">") p.op = Predicate::Op::Gt;
    else if (ops == ">=") p.op = Predicate::Op::Ge;
    else if (ops == "==") p.op = Predicate::Op::Eq;
    else if (ops == "!=") p.op = Predicate::Op::Ne;
    else throw ConfigError("malformed predicate: unknown operator '" + ops + "'");

    try {
        size_t used = 0;
        p.value = std::stoi(parts[2], &used);
        if (used != parts[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError("malformed predicate: bad integer '" + parts[2] + "'");
    }
    return p;
}

EpisodeLog chain_rollout(uint64_t env_seed, const ChainSpec& chain, const io::Checkpoint& ck,
                         const RolloutOptions& opt, const RunConfig& cfg) {
    if (chain.stages.empty()) throw ConfigError("chain_rollout: chain must have >= 1 stage");
    for (const auto& st : chain.stages) {
        if (st.max_steps <= 0) throw ConfigError("chain_rollout: step budget 0");
        if (!st.switch_predicate.empty()) parse_predicate(st.switch_predicate);
    }
    const ModelDims m = ModelDims::from(cfg);

    EpisodeLog log;
    log.seed = env_seed;
    env::WorldState state = env::generate_world(env_seed, cfg.env);
    FrameTensor frame = env::render(state, cfg.env);
    Action prev = env::kStartAction;
    nn::Rng noise(derive_seed(opt.noise_seed, 0x5A5, env_seed));

    StreamState goal_stream, bias_stream;
    int tick = 0;
    for (size_t si = 0; si < chain.stages.size(); ++si) {
        const ChainStage& stage = chain.stages[si];
        std::optional<Predicate> pred;
        if (!stage.switch_predicate.empty()) pred = parse_predicate(stage.switch_predicate);
        for (int s = 0; s < stage.max_steps; ++s) {
            auto emb = model::embed_single_frame(ck.params, "enc.", frame, m);
            ActionLogits logits =
                model::policy_step(ck.params, emb, prev, stage.goal, goal_stream.memory, m);
            if (opt.guidance) {
                ActionLogits bias_logits = model::policy_step(
                    ck.params, emb, prev, opt.guidance->bias_goal, bias_stream.memory, m);
                logits = guided_logits(logits, bias_logits, opt.guidance->lambda);
            }
            Action a = opt.greedy ? greedy_action(logits)
                                  : sample_action(logits, opt.temperature, noise);
            env::StepResult res = env::step(state, a, cfg.env);
            log.actions.push_back(a);
            for (auto ev : res.events) {
                ev.tick = tick;
                log.events.push_back(ev);
            }
            state = std::move(res.state);
            frame = std::move(res.frame);
            prev = a;
            ++tick;
            if (pred && pred->eval(state, log.events, s + 1)) break;
        }
        if (si + 1 < chain.stages.size()) log.switch_ticks.push_back(tick);
    }
    log.total_steps = tick;
    log.final_inventory = inventory_map(state);
    return log;
}

bool replay_matches(const EpisodeLog& log, const RunConfig& cfg) {
    env::WorldState state = env::generate_world(log.seed, cfg.env);
    std::vector<Event> events;
    int tick = 0;
    for (const auto& a : log.actions) {
        env::StepResult res = env::step(state, a, cfg.env);
        for (auto ev : res.events) {
            ev.tick = tick;
            events.push_back(ev);
        }
        state = std::move(res.state);
        ++tick;
    }
    if (events.size() != log.events.size()) return false;
    for (size_t i = 0; i < events.size(); ++i)
        if (!(events[i] == log.events[i])) return false;
    return inventory_map(state) == log.final_inventory;
}

}  // namespace videogoal::infer
