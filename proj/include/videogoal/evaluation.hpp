#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "videogoal/config.hpp"
#include "videogoal/formats.hpp"
#include "videogoal/inference.hpp"

namespace videogoal::eval {

using infer::EpisodeLog;

// Programmatic stand-in for the human judging ladder: episodes are ranked by
// how far they progressed on the task, then tie-broken on the raw defining
// event count.
struct TaskSpec {
    std::string name;
    std::string skill;
    std::string event;        // defining event tag
    int success_count = 1;    // events needed for task success

    static TaskSpec from(const TaskConfig& c) { return {c.name, c.skill, c.event, c.success_count}; }
};

// Quality ladder rank in {0,1,2,3}: none < one < a few < many.
int ladder_rank(const TaskSpec& task, const EpisodeLog& log);

enum class Winner { A, B, Tie };
Winner judge(const TaskSpec& task, const EpisodeLog& log_a, const EpisodeLog& log_b);

bool task_success(const TaskSpec& task, const EpisodeLog& log);

// ---- Elo ----

double win_probability(double r_a, double r_b);

// Winner gains k / (1 + 10^((R_winner - R_loser)/400)); the loser loses the
// same amount. Ties apply the expected-score update with S = 1/2.
std::pair<double, double> elo_update(double r_a, double r_b, double k, bool a_wins);
std::pair<double, double> elo_update_tie(double r_a, double r_b, double k);

struct EloMatch {
    std::string task;
    std::string agent_a;
    std::string agent_b;
    char winner = 'T';  // 'A', 'B', 'T'
};

struct EloTable {
    std::map<std::string, double> ratings;
    std::vector<EloMatch> history;
    nlohmann::json to_json() const;
};

// Pre-generated episodes per agent per task.
using EpisodePool = std::map<std::string, std::map<std::string, std::vector<EpisodeLog>>>;

EloTable run_tournament(const EpisodePool& pool, const std::vector<TaskSpec>& tasks, int matches,
                        double k, uint64_t seed, const std::string& anchor_agent);

// ---- goal space analytics ----

struct ClusterReport {
    std::vector<std::string> categories;
    std::vector<std::vector<double>> centroids;          // per category, flattened N*d
    std::vector<std::vector<double>> cosine;             // pairwise centroid cosine
    double accuracy = 0;                                 // leave-one-out nearest centroid
    std::vector<std::pair<int, std::vector<double>>> clips;  // (category index, embedding)
    double mean_sigma = 0;                               // mean posterior sigma over clips

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

// Event-keyed clips [event_tick - T + 1, event_tick] embedded in mean mode.
ClusterReport goal_space_report(const io::Checkpoint& ck, const std::vector<env::Trajectory>& data,
                                const std::vector<std::pair<std::string, std::string>>& categories,
                                int clips_per_category, uint64_t seed, const RunConfig& cfg);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace videogoal::eval
