#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "videogoal/common.hpp"

namespace videogoal::env {

// Cell kinds double as the one-hot channel layout of rendered frames. Animal is
// never stored in the grid; it overlays the cell an animal stands on.
enum class CellKind : uint8_t { Empty = 0, Tree, Stone, Dirt, Water, Crop, Animal, Wall };
inline constexpr int kCellChannels = 8;

enum class Facing : uint8_t { N = 0, E, S, W };

// Inventory resources; the first four are rendered as frame channels.
enum class Resource : uint8_t { Wood = 0, Stone, Meat, Bucket, Dirt };
inline constexpr int kResourceCount = 5;
inline constexpr int kRenderedResources = 4;
inline constexpr int kFrameChannels = kCellChannels + kRenderedResources;

const char* resource_name(Resource r);

// Factored action: a 6-way move head and a 3-way turn head. Index 0 on both
// heads is the neutral START convention.
inline constexpr int kMoveArity = 6;
inline constexpr int kTurnArity = 3;
enum class MoveOp : uint8_t { Noop = 0, Forward, Back, StrafeLeft, StrafeRight, AttackOrUse };
enum class TurnOp : uint8_t { None = 0, Left, Right };

struct Action {
    int move = 0;
    int turn = 0;
    bool operator==(const Action&) const = default;
};
inline const Action kStartAction{0, 0};

struct EnvConfig {
    int grid_size = 16;
    double tree_density = 0.12;
    double stone_density = 0.08;
    double dirt_density = 0.08;
    double water_density = 0.06;
    double crop_density = 0.04;
    int animal_count = 6;
    double animal_move_prob = 0.5;
    int tree_hits = 3;
    int stone_hits = 5;
    int animal_hits = 2;
    int dirt_hits = 1;
    int crop_hits = 1;
    int view = 7;
    int inventory_divisor = 8;
    int initial_inventory_max = 3;
    int episode_len = 256;
    int episodes_per_skill = 16;
    uint64_t data_seed = 7;
    std::vector<std::string> skills = {"chop_trees", "mine_stone", "hunt_animal",
                                       "collect_water", "build_dirt"};
    void validate() const;
};

// The closed event-tag set.
std::vector<std::string> event_tag_set();

struct Event {
    std::string tag;
    int tick = 0;
    bool operator==(const Event&) const = default;
};

struct WorldState {
    int size = 0;
    std::vector<CellKind> grid;
    int agent_r = 0;
    int agent_c = 0;
    Facing facing = Facing::N;
    std::array<int, kResourceCount> inventory{};
    std::vector<std::pair<int, int>> animal_positions;
    std::vector<int> animal_hits;
    std::map<int, int> cell_hits;  // flat cell index -> accumulated hits
    int64_t tick = 0;
    uint64_t rng_state = 0;

    CellKind cell(int r, int c) const { return grid[static_cast<size_t>(r) * size + c]; }
    void set_cell(int r, int c, CellKind k) { grid[static_cast<size_t>(r) * size + c] = k; }
    bool in_bounds(int r, int c) const { return r >= 0 && r < size && c >= 0 && c < size; }
    bool has_animal_at(int r, int c) const;
    int inv(Resource r) const { return inventory[static_cast<size_t>(r)]; }

    // Deterministic byte serialization, used by the replay-identity tests.
    std::vector<uint8_t> serialize() const;
};

// H x W x C float frame, row-major (h, w, c).
struct FrameTensor {
    int h = 0, w = 0, c = 0;
    std::vector<float> values;
    float at(int r, int col, int ch) const {
        return values[(static_cast<size_t>(r) * w + col) * c + ch];
    }
    bool operator==(const FrameTensor&) const = default;
};

struct Trajectory {
    std::vector<FrameTensor> frames;
    std::vector<Action> actions;  // empty when action-free
    bool has_actions = false;
    bool pseudo_labeled = false;
    std::vector<Event> events;
    std::string skill_label;
    uint64_t seed = 0;
};

struct StepResult {
    WorldState state;
    FrameTensor frame;
    std::vector<Event> events;
};

WorldState generate_world(uint64_t seed, const EnvConfig& cfg);
StepResult step(const WorldState& state, const Action& action, const EnvConfig& cfg);
FrameTensor render(const WorldState& state, const EnvConfig& cfg);
Action scripted_policy(const std::string& skill, const WorldState& state, const EnvConfig& cfg);

std::vector<Trajectory> generate_dataset(const std::vector<std::string>& skills,
                                         int episodes_per_skill, int episode_len, uint64_t seed,
                                         const EnvConfig& cfg);

// Copy with the action labels removed (the raw-video variant to be pseudo-labeled).
std::vector<Trajectory> strip_actions(const std::vector<Trajectory>& trajs);

// Facing/grid helpers shared with the inference rollout code.
std::pair<int, int> facing_delta(Facing f);
bool passable(CellKind k);

}  // namespace videogoal::env
