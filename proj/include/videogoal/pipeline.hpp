#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "videogoal/evaluation.hpp"
#include "videogoal/inference.hpp"
#include "videogoal/trainer.hpp"

namespace videogoal::pipeline {

using env::FrameTensor;
using eval::EpisodePool;
using eval::TaskSpec;
using infer::EpisodeLog;
using infer::GuidanceSpec;
using nn::Tensor;

// Reference clips per task, cut from expert episodes generated on the reference
// seed pool: the clip starts at the first defining-event tick minus chunk_len,
// clamped to 0, and spans chunk_len frames.
std::map<std::string, std::vector<FrameTensor>> make_references(const RunConfig& cfg);

// A free-roam random-walk clip (no attack/use), the bias reference for guidance.
std::vector<FrameTensor> make_bias_reference(const RunConfig& cfg);

// Policy rollouts over the eval seed pool.
std::vector<EpisodeLog> eval_rollouts(const Tensor<float>& goal, const io::Checkpoint& ck,
                                      const RunConfig& cfg, int episodes, uint64_t seed_salt,
                                      const std::optional<GuidanceSpec>& guidance = std::nullopt);

double success_rate(const TaskSpec& task, const std::vector<EpisodeLog>& logs);
double mean_event_count(const std::string& tag, const std::vector<EpisodeLog>& logs);

// Scripted-expert and uniform-random episodes recorded as EpisodeLogs.
EpisodeLog expert_episode(const std::string& skill, uint64_t env_seed, int steps,
                          const RunConfig& cfg);
EpisodeLog random_episode(uint64_t env_seed, int steps, uint64_t noise_seed,
                          const RunConfig& cfg);

// Episode pools for the four tournament agents: scripted expert, the trained
// goal-conditioned model, the unconditional BC baseline, and uniform random.
EpisodePool make_tournament_pool(const io::Checkpoint& trained, const io::Checkpoint& uncond,
                                 const RunConfig& cfg);

inline const char* kExpertAgent = "expert";
inline const char* kTrainedAgent = "trained";
inline const char* kUncondAgent = "bc_uncond";
inline const char* kRandomAgent = "random";

std::vector<TaskSpec> task_specs(const RunConfig& cfg);

// Category list (name, event tag) for the goal-space report.
std::vector<std::pair<std::string, std::string>> report_categories(const RunConfig& cfg);

// Fresh single-skill expert episodes for analytics/evaluation, on a seed pool
// disjoint from training.
std::vector<env::Trajectory> make_eval_dataset(const RunConfig& cfg, uint64_t seed,
                                               int episodes_per_skill);

}  // namespace videogoal::pipeline
