#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "videogoal/formats.hpp"
#include "videogoal/model.hpp"

namespace videogoal::infer {

using env::Action;
using env::Event;
using env::FrameTensor;
using model::ActionLogits;
using nn::Tensor;

struct EpisodeLog {
    uint64_t seed = 0;
    std::vector<Action> actions;
    std::vector<Event> events;
    std::map<std::string, int> final_inventory;
    std::vector<int> switch_ticks;
    int total_steps = 0;

    int event_count(const std::string& tag) const;
    nlohmann::json to_json() const;
    static EpisodeLog from_json(const nlohmann::json& j);
};

// Condition-scale guidance: (1 + lambda) * goal_logits - lambda * bias_logits,
// per head.
ActionLogits guided_logits(const ActionLogits& logits_goal, const ActionLogits& logits_bias,
                           double lambda);

// Independent temperature-scaled categorical draws per head.
Action sample_action(const ActionLogits& logits, double temperature, nn::Rng& noise);
Action greedy_action(const ActionLogits& logits);

// Reference videos are resampled to exactly T frames: uniform subsampling when
// longer, repeat-last-frame padding when shorter (warns on stderr).
std::vector<FrameTensor> resample_reference(const std::vector<FrameTensor>& video, int T);

Tensor<float> encode_reference(const std::vector<FrameTensor>& video, const io::Checkpoint& ck,
                               const RunConfig& cfg);

// Each source is downsampled by 2 (even indices) and the halves concatenated.
std::vector<FrameTensor> concat_videos(const std::vector<FrameTensor>& v1,
                                       const std::vector<FrameTensor>& v2, int T);

struct GuidanceSpec {
    Tensor<float> bias_goal;
    double lambda = 1.5;
};

struct RolloutOptions {
    int steps = 200;
    double temperature = 1.0;
    bool greedy = false;
    uint64_t noise_seed = 0;
    std::optional<GuidanceSpec> guidance;
};

EpisodeLog rollout(uint64_t env_seed, const Tensor<float>& goal, const io::Checkpoint& ck,
                   const RolloutOptions& opt, const RunConfig& cfg);

// Declarative stage-switch predicates: "inventory.<resource> OP <int>",
// "events.<tag> OP <int>", or "steps OP <int>" with OP in {<,<=,>,>=,==,!=}.
struct Predicate {
    enum class Source { Inventory, Events, Steps } source = Source::Steps;
    std::string key;
    enum class Op { Lt, Le, Gt, Ge, Eq, Ne } op = Op::Ge;
    int value = 0;

    bool eval(const env::WorldState& state, const std::vector<Event>& events,
              int steps_in_stage) const;
};

Predicate parse_predicate(const std::string& text);

struct ChainStage {
    std::string name;
    Tensor<float> goal;
    std::string switch_predicate;  // advance when satisfied (or at max_steps)
    int max_steps = 200;
};

struct ChainSpec {
    std::vector<ChainStage> stages;
};

// Goal switching on predicates; recurrence memory persists across stages.
EpisodeLog chain_rollout(uint64_t env_seed, const ChainSpec& chain, const io::Checkpoint& ck,
                         const RolloutOptions& opt, const RunConfig& cfg);

// Replays (seed, action list) through the environment and checks the events
// match; used by the log-replay invariant.
bool replay_matches(const EpisodeLog& log, const RunConfig& cfg);

}  // namespace videogoal::infer
