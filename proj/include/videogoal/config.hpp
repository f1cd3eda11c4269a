#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "videogoal/env.hpp"

namespace videogoal {

struct EncoderConfig {
    int d = 64;
    int blocks = 2;
    int slots = 1;  // condition slots N
    int ffn_mult = 2;
    double sigma_floor = 1e-4;
    uint64_t init_seed = 11;
};

struct PolicyConfig {
    int blocks = 2;
    int mem_len = 64;  // recurrence memory K_mem
    int ffn_mult = 2;
};

struct IdmConfig {
    int window = 9;
    int blocks = 2;
    int ffn_mult = 2;
    double labeled_fraction = 0.2;
    double holdout_fraction = 0.25;
    int epochs = 4;
    int batch = 32;
    double lr = 1e-3;
    int warmup_steps = 100;
    double weight_decay = 1e-3;
    uint64_t seed = 13;
};

struct TrainConfig {
    double lambda_bc = 1.0;
    double lambda_kl = 0.01;
    int chunk_len = 32;
    int batch = 16;
    double lr = 1e-3;
    int warmup_steps = 200;
    double weight_decay = 1e-3;
    int epochs = 24;
    uint64_t seed = 1;
    std::string tau_mode = "sampled";  // sampled | fixed_set
    std::string precision = "f32";     // f32 | f64
    int threads = 2;
    bool unconditional = false;
    // Text alignment stage.
    int text_epochs = 6;
    double text_lr = 2e-3;
    uint64_t text_seed = 17;
};

struct InferenceConfig {
    double temperature = 1.0;
    bool greedy = false;
    double guidance_lambda = 1.5;
    int steps = 200;
    uint64_t seed = 23;
};

struct TaskConfig {
    std::string name;
    std::string skill;       // expert skill producing reference clips
    std::string event;       // defining event tag
    int success_count = 1;   // events needed for success
};

struct EvalConfig {
    std::vector<TaskConfig> tasks;
    uint64_t ref_seed = 1234;    // world seeds for reference clips
    uint64_t eval_seed = 5678;   // world seeds for evaluation rollouts
    int eval_episodes = 10;      // seeds per task
    double elo_k = 8.0;
    int matches = 1500;
    int episodes_per_task = 10;
    uint64_t tournament_seed = 99;
    int clips_per_category = 24;
    uint64_t report_seed = 4321;

    void validate() const;
};

std::vector<TaskConfig> default_tasks();

struct RunConfig {
    env::EnvConfig env;
    EncoderConfig encoder;
    PolicyConfig policy;
    IdmConfig idm;
    TrainConfig train;
    InferenceConfig inference;
    EvalConfig eval;

    void validate() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
};

}  // namespace videogoal
