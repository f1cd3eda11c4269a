#include "videogoal/config.hpp"

#include <fstream>
#include <set>

namespace videogoal {

using nlohmann::json;

namespace {

// Strict field reader: every key present in the JSON object must be consumed.
class Section {
  public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    }

    template <typename T>
    void field(const char* key, T& into) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;  // keep default
        try {
            into = it->get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config " + name_ + "." + key + ": " + e.what());
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("unknown config key: " + name_ + "." + it.key());
    }

  private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

json section_or_empty(const json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? json::object() : *it;
}

}  // namespace

std::vector<TaskConfig> default_tasks() {
    return {
        {"chop", "chop_trees", "mine_block:tree", 1},
        {"mine", "mine_stone", "mine_block:stone", 1},
        {"hunt", "hunt_animal", "kill:animal", 1},
        {"water", "collect_water", "use:water", 1},
        {"build", "build_dirt", "place:dirt", 1},
    };
}

void EvalConfig::validate() const {
    if (tasks.empty()) throw ConfigError("eval.tasks must not be empty");
    if (elo_k <= 0) throw ConfigError("eval.elo_k must be > 0");
    if (episodes_per_task < 1) throw ConfigError("eval.episodes_per_task must be >= 1");
}

void RunConfig::validate() const {
    env.validate();
    eval.validate();
    if (encoder.d < 2) throw ConfigError("encoder.d must be >= 2");
    if (encoder.slots < 1) throw ConfigError("encoder.slots must be >= 1");
    if (idm.window < 1 || idm.window % 2 == 0)
        throw ConfigError("idm.window must be odd (symmetric context)");
    if (train.lambda_bc < 0 || train.lambda_kl < 0)
        throw ConfigError("train.lambda_bc and train.lambda_kl must be >= 0");
    if (train.chunk_len < 2) throw ConfigError("train.chunk_len must be >= 2");
    if (train.chunk_len > env.episode_len)
        throw ConfigError("train.chunk_len must be <= env.episode_len");
    if (train.tau_mode != "sampled" && train.tau_mode != "fixed_set")
        throw ConfigError("train.tau_mode must be 'sampled' or 'fixed_set'");
    if (train.precision != "f32" && train.precision != "f64")
        throw ConfigError("train.precision must be 'f32' or 'f64'");
    if (inference.temperature <= 0 && !inference.greedy)
        throw ConfigError("inference.temperature must be > 0");
    if (policy.mem_len < 1) throw ConfigError("policy.mem_len must be >= 1");
}

json RunConfig::to_json() const {
    json j;
    j["env"] = {{"grid_size", env.grid_size},
                {"tree_density", env.tree_density},
                {"stone_density", env.stone_density},
                {"dirt_density", env.dirt_density},
                {"water_density", env.water_density},
                {"crop_density", env.crop_density},
                {"animal_count", env.animal_count},
                {"animal_move_prob", env.animal_move_prob},
                {"tree_hits", env.tree_hits},
                {"stone_hits", env.stone_hits},
                {"animal_hits", env.animal_hits},
                {"dirt_hits", env.dirt_hits},
                {"crop_hits", env.crop_hits},
                {"view", env.view},
                {"inventory_divisor", env.inventory_divisor},
                {"initial_inventory_max", env.initial_inventory_max},
                {"episode_len", env.episode_len},
                {"episodes_per_skill", env.episodes_per_skill},
                {"data_seed", env.data_seed},
                {"skills", env.skills}};
    j["encoder"] = {{"d", encoder.d},
                    {"blocks", encoder.blocks},
                    {"slots", encoder.slots},
                    {"ffn_mult", encoder.ffn_mult},
                    {"sigma_floor", encoder.sigma_floor},
                    {"init_seed", encoder.init_seed}};
    j["policy"] = {{"blocks", policy.blocks},
                   {"mem_len", policy.mem_len},
                   {"ffn_mult", policy.ffn_mult}};
    j["idm"] = {{"window", idm.window},
                {"blocks", idm.blocks},
                {"ffn_mult", idm.ffn_mult},
                {"labeled_fraction", idm.labeled_fraction},
                {"holdout_fraction", idm.holdout_fraction},
                {"epochs", idm.epochs},
                {"batch", idm.batch},
                {"lr", idm.lr},
                {"warmup_steps", idm.warmup_steps},
                {"weight_decay", idm.weight_decay},
                {"seed", idm.seed}};
    j["train"] = {{"lambda_bc", train.lambda_bc},
                  {"lambda_kl", train.lambda_kl},
                  {"chunk_len", train.chunk_len},
                  {"batch", train.batch},
                  {"lr", train.lr},
                  {"warmup_steps", train.warmup_steps},
                  {"weight_decay", train.weight_decay},
                  {"epochs", train.epochs},
                  {"seed", train.seed},
                  {"tau_mode", train.tau_mode},
                  {"precision", train.precision},
                  {"threads", train.threads},
                  {"unconditional", train.unconditional},
                  {"text_epochs", train.text_epochs},
                  {"text_lr", train.text_lr},
                  {"text_seed", train.text_seed}};
    j["inference"] = {{"temperature", inference.temperature},
                      {"greedy", inference.greedy},
                      {"guidance_lambda", inference.guidance_lambda},
                      {"steps", inference.steps},
                      {"seed", inference.seed}};
    json tasks = json::array();
    for (const auto& t : eval.tasks)
        tasks.push_back({{"name", t.name},
                         {"skill", t.skill},
                         {"event", t.event},
                         {"success_count", t.success_count}});
    j["eval"] = {{"tasks", tasks},
                 {"ref_seed", eval.ref_seed},
                 {"eval_seed", eval.eval_seed},
                 {"eval_episodes", eval.eval_episodes},
                 {"elo_k", eval.elo_k},
                 {"matches", eval.matches},
                 {"episodes_per_task", eval.episodes_per_task},
                 {"tournament_seed", eval.tournament_seed},
                 {"clips_per_category", eval.clips_per_category},
                 {"report_seed", eval.report_seed}};
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    static const std::set<std::string> known = {"env",   "encoder",   "policy", "idm",
                                                "train", "inference", "eval"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("unknown config key: " + it.key());

    RunConfig c;
    c.eval.tasks = default_tasks();
    {
        Section s(section_or_empty(j, "env"), "env");
        s.field("grid_size", c.env.grid_size);
        s.field("tree_density", c.env.tree_density);
        s.field("stone_density", c.env.stone_density);
        s.field("dirt_density", c.env.dirt_density);
        s.field("water_density", c.env.water_density);
        s.field("crop_density", c.env.crop_density);
        s.field("animal_count", c.env.animal_count);
        s.field("animal_move_prob", c.env.animal_move_prob);
        s.field("tree_hits", c.env.tree_hits);
        s.field("stone_hits", c.env.stone_hits);
        s.field("animal_hits", c.env.animal_hits);
        s.field("dirt_hits", c.env.dirt_hits);
        s.field("crop_hits", c.env.crop_hits);
        s.field("view", c.env.view);
        s.field("inventory_divisor", c.env.inventory_divisor);
        s.field("initial_inventory_max", c.env.initial_inventory_max);
        s.field("episode_len", c.env.episode_len);
        s.field("episodes_per_skill", c.env.episodes_per_skill);
        s.field("data_seed", c.env.data_seed);
        s.field("skills", c.env.skills);
        s.finish();
    }
    {
        Section s(section_or_empty(j, "encoder"), "encoder");
        s.field("d", c.encoder.d);
        s.field("blocks", c.encoder.blocks);
        s.field("slots", c.encoder.slots);
        s.field("ffn_mult", c.encoder.ffn_mult);
        s.field("sigma_floor", c.encoder.sigma_floor);
        s.field("init_seed", c.encoder.init_seed);
        s.finish();
    }
    {
        Section s(section_or_empty(j, "policy"), "policy");
        s.field("blocks", c.policy.blocks);
        s.field("mem_len", c.policy.mem_len);
        s.field("ffn_mult", c.policy.ffn_mult);
        s.finish();
    }
    {
        Section s(section_or_empty(j, "idm"), "idm");
        s.field("window", c.idm.window);
        s.field("blocks", c.idm.blocks);
        s.field("ffn_mult", c.idm.ffn_mult);
        s.field("labeled_fraction", c.idm.labeled_fraction);
        s.field("holdout_fraction", c.idm.holdout_fraction);
        s.field("epochs", c.idm.epochs);
        s.field("batch", c.idm.batch);
        s.field("lr", c.idm.lr);
        s.field("warmup_steps", c.idm.warmup_steps);
        s.field("weight_decay", c.idm.weight_decay);
        s.field("seed", c.idm.seed);
        s.finish();
    }
    {
        Section s(section_or_empty(j, "train"), "train");
        s.field("lambda_bc", c.train.lambda_bc);
        s.field("lambda_kl", c.train.lambda_kl);
        s.field("chunk_len", c.train.chunk_len);
        s.field("batch", c.train.batch);
        s.field("lr", c.train.lr);
        s.field("warmup_steps", c.train.warmup_steps);
        s.field("weight_decay", c.train.weight_decay);
        s.field("epochs", c.train.epochs);
        s.field("seed", c.train.seed);
        s.field("tau_mode", c.train.tau_mode);
        s.field("precision", c.train.precision);
        s.field("threads", c.train.threads);
        s.field("unconditional", c.train.unconditional);
        s.field("text_epochs", c.train.text_epochs);
        s.field("text_lr", c.train.text_lr);
        s.field("text_seed", c.train.text_seed);
        s.finish();
    }
    {
        Section s(section_or_empty(j, "inference"), "inference");
        s.field("temperature", c.inference.temperature);
        s.field("greedy", c.inference.greedy);
        s.field("guidance_lambda", c.inference.guidance_lambda);
        s.field("steps", c.inference.steps);
        s.field("seed", c.inference.seed);
        s.finish();
    }
    {
        const json ej = section_or_empty(j, "eval");
        Section s(ej, "eval");
        std::vector<json> dummy;
        if (ej.contains("tasks")) {
            c.eval.tasks.clear();
            for (const auto& tj : ej.at("tasks")) {
                Section ts(tj, "eval.tasks[]");
                TaskConfig t;
                ts.field("name", t.name);
                ts.field("skill", t.skill);
                ts.field("event", t.event);
                ts.field("success_count", t.success_count);
                ts.finish();
                c.eval.tasks.push_back(t);
            }
        }
        s.field("tasks", dummy);
        s.field("ref_seed", c.eval.ref_seed);
        s.field("eval_seed", c.eval.eval_seed);
        s.field("eval_episodes", c.eval.eval_episodes);
        s.field("elo_k", c.eval.elo_k);
        s.field("matches", c.eval.matches);
        s.field("episodes_per_task", c.eval.episodes_per_task);
        s.field("tournament_seed", c.eval.tournament_seed);
        s.field("clips_per_category", c.eval.clips_per_category);
        s.field("report_seed", c.eval.report_seed);
        s.finish();
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace videogoal
