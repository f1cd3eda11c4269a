#include "videogoal/pipeline.hpp"

#include <algorithm>

namespace videogoal::pipeline {

std::vector<TaskSpec> task_specs(const RunConfig& cfg) {
    std::vector<TaskSpec> out;
    for (const auto& t : cfg.eval.tasks) out.push_back(TaskSpec::from(t));
    return out;
}

std::vector<std::pair<std::string, std::string>> report_categories(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& t : cfg.eval.tasks) out.emplace_back(t.name, t.event);
    return out;
}

std::vector<env::Trajectory> make_eval_dataset(const RunConfig& cfg, uint64_t seed,
                                               int episodes_per_skill) {
    return env::generate_dataset(cfg.env.skills, episodes_per_skill, cfg.env.episode_len, seed,
                                 cfg.env);
}

std::map<std::string, std::vector<FrameTensor>> make_references(const RunConfig& cfg) {
    const int T = cfg.train.chunk_len;
    std::map<std::string, std::vector<FrameTensor>> refs;
    for (const auto& task : cfg.eval.tasks) {
        // Generate expert episodes on the reference seed pool until the defining
        // event shows up.
        for (int attempt = 0; attempt < 16 && !refs.count(task.name); ++attempt) {
            uint64_t wseed = derive_seed(cfg.eval.ref_seed, std::hash<std::string>{}(task.name),
                                         static_cast<uint64_t>(attempt));
            auto trajs = env::generate_dataset({task.skill}, 1, cfg.env.episode_len, wseed, cfg.env);
            const auto& traj = trajs[0];
            for (const auto& ev : traj.events) {
                if (ev.tag != task.event) continue;
                int start = std::max(0, ev.tick - T);
                if (start + T > static_cast<int>(traj.frames.size())) break;
                refs[task.name] = std::vector<FrameTensor>(traj.frames.begin() + start,
                                                           traj.frames.begin() + start + T);
                break;
            }
        }
        if (!refs.count(task.name))
            throw ConfigError("make_references: no '" + task.event +
                              "' event found in reference episodes for task " + task.name);
    }
    return refs;
}

std::vector<FrameTensor> make_bias_reference(const RunConfig& cfg) {
    const int T = cfg.train.chunk_len;
    uint64_t wseed = derive_seed(cfg.eval.ref_seed, 0xB1A5);
    env::WorldState state = env::generate_world(wseed, cfg.env);
    nn::Rng rng(derive_seed(cfg.eval.ref_seed, 0xB1A6));
    std::vector<FrameTensor> frames;
    frames.push_back(env::render(state, cfg.env));
    while (static_cast<int>(frames.size()) < T) {
        env::Action a;
        a.move = 1 + static_cast<int>(rng.uniform_int(4));  // forward/back/strafes, no attack
        a.turn = static_cast<int>(rng.uniform_int(3));
        auto res = env::step(state, a, cfg.env);
        state = std::move(res.state);
        frames.push_back(std::move(res.frame));
    }
    frames.resize(T);
    return frames;
}

std::vector<EpisodeLog> eval_rollouts(const Tensor<float>& goal, const io::Checkpoint& ck,
                                      const RunConfig& cfg, int episodes, uint64_t seed_salt,
                                      const std::optional<GuidanceSpec>& guidance) {
    std::vector<EpisodeLog> logs;
    for (int i = 0; i < episodes; ++i) {
        infer::RolloutOptions opt;
        opt.steps = cfg.inference.steps;
        opt.temperature = cfg.inference.temperature;
        opt.greedy = cfg.inference.greedy;
        opt.noise_seed = derive_seed(cfg.inference.seed, seed_salt, static_cast<uint64_t>(i));
        opt.guidance = guidance;
        uint64_t env_seed = derive_seed(cfg.eval.eval_seed, static_cast<uint64_t>(i));
        logs.push_back(infer::rollout(env_seed, goal, ck, opt, cfg));
    }
    return logs;
}

double success_rate(const TaskSpec& task, const std::vector<EpisodeLog>& logs) {
    if (logs.empty()) return 0;
    int ok = 0;
    for (const auto& l : logs) ok += eval::task_success(task, l) ? 1 : 0;
    return static_cast<double>(ok) / logs.size();
}

double mean_event_count(const std::string& tag, const std::vector<EpisodeLog>& logs) {
    if (logs.empty()) return 0;
    double n = 0;
    for (const auto& l : logs) n += l.event_count(tag);
    return n / logs.size();
}

EpisodeLog expert_episode(const std::string& skill, uint64_t env_seed, int steps,
                          const RunConfig& cfg) {
    EpisodeLog log;
    log.seed = env_seed;
    env::WorldState state = env::generate_world(env_seed, cfg.env);
    for (int t = 0; t < steps; ++t) {
        env::Action a = env::scripted_policy(skill, state, cfg.env);
        auto res = env::step(state, a, cfg.env);
        log.actions.push_back(a);
        for (auto& ev : res.events) log.events.push_back(ev);
        state = std::move(res.state);
    }
    log.total_steps = steps;
    for (int i = 0; i < env::kResourceCount; ++i)
        log.final_inventory[env::resource_name(static_cast<env::Resource>(i))] =
            state.inventory[i];
    return log;
}

EpisodeLog random_episode(uint64_t env_seed, int steps, uint64_t noise_seed,
                          const RunConfig& cfg) {
    EpisodeLog log;
    log.seed = env_seed;
    env::WorldState state = env::generate_world(env_seed, cfg.env);
    nn::Rng rng(derive_seed(noise_seed, 0xAD0, env_seed));
    for (int t = 0; t < steps; ++t) {
        env::Action a{static_cast<int>(rng.uniform_int(env::kMoveArity)),
                      static_cast<int>(rng.uniform_int(env::kTurnArity))};
        auto res = env::step(state, a, cfg.env);
        log.actions.push_back(a);
        for (auto& ev : res.events) log.events.push_back(ev);
        state = std::move(res.state);
    }
    log.total_steps = steps;
    for (int i = 0; i < env::kResourceCount; ++i)
        log.final_inventory[env::resource_name(static_cast<env::Resource>(i))] =
            state.inventory[i];
    return log;
}

EpisodePool make_tournament_pool(const io::Checkpoint& trained, const io::Checkpoint& uncond,
                                 const RunConfig& cfg) {
    const model::ModelDims m = model::ModelDims::from(cfg);
    auto refs = make_references(cfg);
    EpisodePool pool;
    Tensor<float> zero_goal(m.slots, m.d);
    for (const auto& task : cfg.eval.tasks) {
        Tensor<float> goal = infer::encode_reference(refs.at(task.name), trained, cfg);
        for (int i = 0; i < cfg.eval.episodes_per_task; ++i) {
            uint64_t env_seed = derive_seed(cfg.eval.eval_seed, static_cast<uint64_t>(i));
            infer::RolloutOptions opt;
            opt.steps = cfg.inference.steps;
            opt.temperature = cfg.inference.temperature;
            opt.greedy = cfg.inference.greedy;

            opt.noise_seed = derive_seed(cfg.eval.tournament_seed, 1, static_cast<uint64_t>(i));
            pool[kTrainedAgent][task.name].push_back(
                infer::rollout(env_seed, goal, trained, opt, cfg));

            opt.noise_seed = derive_seed(cfg.eval.tournament_seed, 2, static_cast<uint64_t>(i));
            pool[kUncondAgent][task.name].push_back(
                infer::rollout(env_seed, zero_goal, uncond, opt, cfg));

            pool[kExpertAgent][task.name].push_back(
                expert_episode(task.skill, env_seed, cfg.inference.steps, cfg));

            pool[kRandomAgent][task.name].push_back(random_episode(
                env_seed, cfg.inference.steps,
                derive_seed(cfg.eval.tournament_seed, 3, static_cast<uint64_t>(i)), cfg));
        }
    }
    return pool;
}

}  // namespace videogoal::pipeline
