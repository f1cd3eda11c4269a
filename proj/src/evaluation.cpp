#include "videogoal/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace videogoal::eval {

int ladder_rank(const TaskSpec& task, const EpisodeLog& log) {
    int count = log.event_count(task.event);
    if (count == 0) return 0;
    if (count < task.success_count) return 1;
    if (count < task.success_count + 2) return 2;
    return 3;
}

Winner judge(const TaskSpec& task, const EpisodeLog& log_a, const EpisodeLog& log_b) {
    int ra = ladder_rank(task, log_a), rb = ladder_rank(task, log_b);
    if (ra != rb) return ra > rb ? Winner::A : Winner::B;
    int ca = log_a.event_count(task.event), cb = log_b.event_count(task.event);
    if (ca != cb) return ca > cb ? Winner::A : Winner::B;
    return Winner::Tie;
}

bool task_success(const TaskSpec& task, const EpisodeLog& log) {
    return log.event_count(task.event) >= task.success_count;
}

double win_probability(double r_a, double r_b) {
    return 1.0 / (1.0 + std::pow(10.0, (r_b - r_a) / 400.0));
}

std::pair<double, double> elo_update(double r_a, double r_b, double k, bool a_wins) {
    if (!(k > 0)) throw ConfigError("elo_update: k must be > 0");
    if (a_wins) {
        double delta = k / (1.0 + std::pow(10.0, (r_a - r_b) / 400.0));
        return {r_a + delta, r_b - delta};
    }
    double delta = k / (1.0 + std::pow(10.0, (r_b - r_a) / 400.0));
    return {r_a - delta, r_b + delta};
}

std::pair<double, double> elo_update_tie(double r_a, double r_b, double k) {
    if (!(k > 0)) throw ConfigError("elo_update: k must be > 0");
    double expected_b = 1.0 / (1.0 + std::pow(10.0, (r_a - r_b) / 400.0));
    double delta = k * (expected_b - 0.5);
    return {r_a + delta, r_b - delta};
}

nlohmann::json EloTable::to_json() const {
    nlohmann::json j;
    j["ratings"] = ratings;
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& m : history)
        hist.push_back({{"task", m.task},
                        {"a", m.agent_a},
                        {"b", m.agent_b},
                        {"winner", std::string(1, m.winner)}});
    j["matches"] = hist;
    return j;
}

EloTable run_tournament(const EpisodePool& pool, const std::vector<TaskSpec>& tasks, int matches,
                        double k, uint64_t seed, const std::string& anchor_agent) {
    if (pool.size() < 2) throw ConfigError("run_tournament: need at least 2 agents");
    if (!pool.count(anchor_agent))
        throw ConfigError("run_tournament: anchor agent '" + anchor_agent + "' missing");
    std::vector<std::string> agents;
    for (const auto& [name, eps] : pool) agents.push_back(name);

    EloTable table;
    for (const auto& a : agents) table.ratings[a] = 1500.0;

    nn::Rng rng(derive_seed(seed, 0xE10));
    for (int match = 0; match < matches; ++match) {
        const TaskSpec& task = tasks[rng.uniform_int(tasks.size())];
        size_t ia = rng.uniform_int(agents.size());
        size_t ib = rng.uniform_int(agents.size() - 1);
        if (ib >= ia) ++ib;
        const std::string& a = agents[ia];
        const std::string& b = agents[ib];
        auto pick = [&](const std::string& agent) -> const EpisodeLog& {
            const auto& by_task = pool.at(agent);
            auto it = by_task.find(task.name);
            if (it == by_task.end() || it->second.empty())
                throw ConfigError("run_tournament: agent '" + agent +
                                  "' has no episodes for task '" + task.name + "'");
            return it->second[rng.uniform_int(it->second.size())];
        };
        const EpisodeLog& ea = pick(a);
        const EpisodeLog& eb = pick(b);
        Winner w = judge(task, ea, eb);
        double ra = table.ratings[a], rb = table.ratings[b];
        if (w == Winner::Tie) {
            std::tie(table.ratings[a], table.ratings[b]) = elo_update_tie(ra, rb, k);
        } else {
            std::tie(table.ratings[a], table.ratings[b]) = elo_update(ra, rb, k, w == Winner::A);
        }
        table.history.push_back({task.name, a, b, w == Winner::A ? 'A' : (w == Winner::B ? 'B' : 'T')});
    }

    // Shift so the anchor sits at exactly 1500.
    double shift = 1500.0 - table.ratings[anchor_agent];
    for (auto& [name, r] : table.ratings) r += shift;
    table.ratings[anchor_agent] = 1500.0;
    return table;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    double denom = std::sqrt(na) * std::sqrt(nb);
    return denom > 0 ? dot / denom : 0.0;
}

ClusterReport goal_space_report(const io::Checkpoint& ck, const std::vector<env::Trajectory>& data,
                                const std::vector<std::pair<std::string, std::string>>& categories,
                                int clips_per_category, uint64_t seed, const RunConfig& cfg) {
    if (categories.size() < 2) throw ConfigError("goal_space_report: need >= 2 categories");
    const model::ModelDims m = model::ModelDims::from(cfg);
    const int T = m.chunk_len;

    ClusterReport rep;
    std::vector<std::vector<std::vector<env::FrameTensor>>> clips_by_cat(categories.size());
    for (size_t c = 0; c < categories.size(); ++c) {
        rep.categories.push_back(categories[c].first);
        const std::string& tag = categories[c].second;
        for (const auto& traj : data) {
            for (const auto& ev : traj.events) {
                if (ev.tag != tag || ev.tick < T - 1) continue;
                clips_by_cat[c].emplace_back(traj.frames.begin() + (ev.tick - T + 1),
                                             traj.frames.begin() + ev.tick + 1);
            }
        }
        if (clips_by_cat[c].empty())
            throw ConfigError("goal_space_report: no events matching category '" +
                              categories[c].first + "' (" + tag + ")");
    }

    nn::Rng rng(derive_seed(seed, 0x6E0));
    double sigma_sum = 0;
    int64_t sigma_n = 0;
    for (size_t c = 0; c < categories.size(); ++c) {
        auto& clips = clips_by_cat[c];
        for (size_t i = clips.size(); i > 1; --i)
            std::swap(clips[i - 1], clips[rng.uniform_int(i)]);
        if (static_cast<int>(clips.size()) > clips_per_category) clips.resize(clips_per_category);
        for (const auto& clip : clips) {
            nn::Tape<float> tape;
            model::Module<float> mod{&tape, &ck.params, false};
            nn::Var e = model::embed_frames(mod, "enc.", clip, m);
            auto dist = model::encode_goal_distribution(mod, "enc.", e, m);
            const auto& mu = tape.val(dist.mu);
            const auto& sigma = tape.val(dist.sigma);
            std::vector<double> emb(mu.v.begin(), mu.v.end());
            rep.clips.emplace_back(static_cast<int>(c), std::move(emb));
            for (float s : sigma.v) sigma_sum += s;
            sigma_n += static_cast<int64_t>(sigma.v.size());
        }
    }
    rep.mean_sigma = sigma_n > 0 ? sigma_sum / static_cast<double>(sigma_n) : 0.0;

    const size_t dim = rep.clips[0].second.size();
    std::vector<std::vector<double>> sums(categories.size(), std::vector<double>(dim, 0.0));
    std::vector<int> counts(categories.size(), 0);
    for (const auto& [c, emb] : rep.clips) {
        for (size_t i = 0; i < dim; ++i) sums[c][i] += emb[i];
        ++counts[c];
    }
    for (size_t c = 0; c < categories.size(); ++c) {
        std::vector<double> centroid(dim);
        for (size_t i = 0; i < dim; ++i) centroid[i] = sums[c][i] / std::max(1, counts[c]);
        rep.centroids.push_back(std::move(centroid));
    }
    rep.cosine.assign(categories.size(), std::vector<double>(categories.size(), 0.0));
    for (size_t a = 0; a < categories.size(); ++a)
        for (size_t b = 0; b < categories.size(); ++b)
            rep.cosine[a][b] = a == b ? 1.0 : cosine_similarity(rep.centroids[a], rep.centroids[b]);

    // Leave-one-out nearest-centroid accuracy under cosine similarity.
    int correct = 0;
    for (const auto& [c, emb] : rep.clips) {
        int best = -1;
        double best_sim = -2;
        for (size_t k = 0; k < categories.size(); ++k) {
            std::vector<double> centroid(dim);
            if (static_cast<int>(k) == c) {
                if (counts[c] < 2) continue;
                for (size_t i = 0; i < dim; ++i)
                    centroid[i] = (sums[c][i] - emb[i]) / (counts[c] - 1);
            } else {
                centroid = rep.centroids[k];
            }
            double sim = cosine_similarity(emb, centroid);
            if (sim > best_sim) {
                best_sim = sim;
                best = static_cast<int>(k);
            }
        }
        if (best == c) ++correct;
    }
    rep.accuracy = rep.clips.empty() ? 0.0 : static_cast<double>(correct) / rep.clips.size();
    return rep;
}

nlohmann::json ClusterReport::to_json() const {
    nlohmann::json j;
    j["categories"] = categories;
    j["accuracy"] = accuracy;
    j["mean_sigma"] = mean_sigma;
    j["centroids"] = centroids;
    j["cosine"] = cosine;
    j["n_clips"] = clips.size();
    return j;
}

std::string ClusterReport::to_csv() const {
    std::ostringstream os;
    os << "category";
    const size_t dim = clips.empty() ? 0 : clips[0].second.size();
    for (size_t i = 0; i < dim; ++i) os << ",g_" << i;
    os << "\n";
    for (const auto& [c, emb] : clips) {
        os << categories[c];
        for (double v : emb) os << "," << v;
        os << "\n";
    }
    return os.str();
}

}  // namespace videogoal::eval
