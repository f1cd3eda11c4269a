#include "videogoal/env.hpp"

#include <algorithm>
#include <cstring>
#include <deque>

namespace videogoal::env {

const char* resource_name(Resource r) {
    switch (r) {
        case Resource::Wood: return "wood";
        case Resource::Stone: return "stone";
        case Resource::Meat: return "meat";
        case Resource::Bucket: return "bucket";
        case Resource::Dirt: return "dirt";
    }
    return "?";
}

std::vector<std::string> event_tag_set() {
    return {"mine_block:tree", "pickup:wood",  "mine_block:stone", "pickup:stone",
            "kill:animal",     "pickup:meat",  "use:water",        "mine_block:dirt",
            "pickup:dirt",     "place:dirt",   "mine_block:crop"};
}

void EnvConfig::validate() const {
    if (grid_size < 8) throw ConfigError("env.grid_size must be >= 8");
    if (view < 3 || view % 2 == 0) throw ConfigError("env.view must be odd and >= 3");
    const double ds[] = {tree_density, stone_density, dirt_density, water_density, crop_density};
    const char* names[] = {"tree", "stone", "dirt", "water", "crop"};
    double sum = 0;
    for (int i = 0; i < 5; ++i) {
        if (ds[i] < 0) throw ConfigError("env density invalid: negative " + std::string(names[i]));
        if (ds[i] == 0) throw ConfigError("resource kind absent: " + std::string(names[i]));
        sum += ds[i];
    }
    if (sum >= 1.0) throw ConfigError("env density invalid: densities sum to >= 1");
    if (animal_count < 1) throw ConfigError("resource kind absent: animal");
    if (episode_len < 1) throw ConfigError("env.episode_len must be >= 1");
}

bool WorldState::has_animal_at(int r, int c) const {
    for (const auto& [ar, ac] : animal_positions)
        if (ar == r && ac == c) return true;
    return false;
}

std::vector<uint8_t> WorldState::serialize() const {
    std::vector<uint8_t> out;
    auto put64 = [&out](uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
    };
    put64(static_cast<uint64_t>(size));
    for (CellKind k : grid) out.push_back(static_cast<uint8_t>(k));
    put64(static_cast<uint64_t>(agent_r));
    put64(static_cast<uint64_t>(agent_c));
    out.push_back(static_cast<uint8_t>(facing));
    for (int v : inventory) put64(static_cast<uint64_t>(v));
    put64(animal_positions.size());
    for (size_t i = 0; i < animal_positions.size(); ++i) {
        put64(static_cast<uint64_t>(animal_positions[i].first));
        put64(static_cast<uint64_t>(animal_positions[i].second));
        put64(static_cast<uint64_t>(animal_hits[i]));
    }
    put64(cell_hits.size());
    for (const auto& [idx, hits] : cell_hits) {
        put64(static_cast<uint64_t>(idx));
        put64(static_cast<uint64_t>(hits));
    }
    put64(static_cast<uint64_t>(tick));
    put64(rng_state);
    return out;
}

std::pair<int, int> facing_delta(Facing f) {
    switch (f) {
        case Facing::N: return {-1, 0};
        case Facing::E: return {0, 1};
        case Facing::S: return {1, 0};
        case Facing::W: return {0, -1};
    }
    return {0, 0};
}

bool passable(CellKind k) {
    return k != CellKind::Wall && k != CellKind::Tree && k != CellKind::Stone;
}

WorldState generate_world(uint64_t seed, const EnvConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0xE17));
    WorldState s;
    s.size = cfg.grid_size;
    s.grid.assign(static_cast<size_t>(s.size) * s.size, CellKind::Empty);

    for (int r = 0; r < s.size; ++r)
        for (int c = 0; c < s.size; ++c)
            if (r == 0 || c == 0 || r == s.size - 1 || c == s.size - 1)
                s.set_cell(r, c, CellKind::Wall);

    const CellKind kinds[] = {CellKind::Tree, CellKind::Stone, CellKind::Dirt, CellKind::Water,
                              CellKind::Crop};
    const double ds[] = {cfg.tree_density, cfg.stone_density, cfg.dirt_density,
                         cfg.water_density, cfg.crop_density};
    for (int r = 1; r < s.size - 1; ++r) {
        for (int c = 1; c < s.size - 1; ++c) {
            double u = rng.uniform();
            double acc = 0;
            for (int k = 0; k < 5; ++k) {
                acc += ds[k];
                if (u < acc) {
                    s.set_cell(r, c, kinds[k]);
                    break;
                }
            }
        }
    }

    auto pick_empty = [&](auto&& extra_ok) {
        // Seeded scan from a random offset keeps placement deterministic.
        int interior = (s.size - 2) * (s.size - 2);
        int start = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(interior)));
        for (int i = 0; i < interior; ++i) {
            int idx = (start + i) % interior;
            int r = 1 + idx / (s.size - 2);
            int c = 1 + idx % (s.size - 2);
            if (s.cell(r, c) == CellKind::Empty && extra_ok(r, c)) return std::pair<int, int>{r, c};
        }
        throw ConfigError("generate_world: no empty cell available");
    };

    for (int k = 0; k < 5; ++k) {
        bool present = false;
        for (CellKind g : s.grid)
            if (g == kinds[k]) present = true;
        if (!present) {
            auto [r, c] = pick_empty([](int, int) { return true; });
            s.set_cell(r, c, kinds[k]);
        }
    }

    auto [ar, ac] = pick_empty([](int, int) { return true; });
    s.agent_r = ar;
    s.agent_c = ac;
    s.facing = static_cast<Facing>(rng.uniform_int(4));

    for (int a = 0; a < cfg.animal_count; ++a) {
        auto [r, c] = pick_empty([&](int r2, int c2) {
            return !(r2 == s.agent_r && c2 == s.agent_c) && !s.has_animal_at(r2, c2);
        });
        s.animal_positions.emplace_back(r, c);
        s.animal_hits.push_back(0);
    }

    for (int i = 0; i < kResourceCount; ++i)
        s.inventory[i] =
            static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.initial_inventory_max + 1)));

    s.tick = 0;
    s.rng_state = derive_seed(seed, 0xA21);
    return s;
}

namespace {

Facing rotate(Facing f, int turn) {
    int v = static_cast<int>(f);
    if (turn == static_cast<int>(TurnOp::Left)) v = (v + 3) % 4;
    if (turn == static_cast<int>(TurnOp::Right)) v = (v + 1) % 4;
    return static_cast<Facing>(v);
}

std::pair<int, int> move_delta(int move, Facing f) {
    auto [dr, dc] = facing_delta(f);
    switch (static_cast<MoveOp>(move)) {
        case MoveOp::Forward: return {dr, dc};
        case MoveOp::Back: return {-dr, -dc};
        case MoveOp::StrafeLeft: return {-dc, dr};
        case MoveOp::StrafeRight: return {dc, -dr};
        default: return {0, 0};
    }
}

}  // namespace

StepResult step(const WorldState& state, const Action& action, const EnvConfig& cfg) {
    if (action.move < 0 || action.move >= kMoveArity || action.turn < 0 ||
        action.turn >= kTurnArity)
        throw ConfigError("step: action index out of range");
    StepResult out;
    WorldState& s = out.state;
    s = state;
    const int tick_now = static_cast<int>(state.tick);
    auto emit = [&](const std::string& tag) { out.events.push_back({tag, tick_now}); };

    // Turn applies first; the move head then acts in the new facing.
    s.facing = rotate(s.facing, action.turn);

    const MoveOp mv = static_cast<MoveOp>(action.move);
    if (mv == MoveOp::Forward || mv == MoveOp::Back || mv == MoveOp::StrafeLeft ||
        mv == MoveOp::StrafeRight) {
        auto [dr, dc] = move_delta(action.move, s.facing);
        int nr = s.agent_r + dr, nc = s.agent_c + dc;
        if (s.in_bounds(nr, nc) && passable(s.cell(nr, nc))) {
            s.agent_r = nr;
            s.agent_c = nc;
        }
    } else if (mv == MoveOp::AttackOrUse) {
        auto [dr, dc] = facing_delta(s.facing);
        int fr = s.agent_r + dr, fc = s.agent_c + dc;
        if (s.in_bounds(fr, fc)) {
            int animal_idx = -1;
            for (size_t i = 0; i < s.animal_positions.size(); ++i)
                if (s.animal_positions[i] == std::pair<int, int>{fr, fc}) animal_idx = static_cast<int>(i);
            if (animal_idx >= 0) {
                if (++s.animal_hits[animal_idx] >= cfg.animal_hits) {
                    s.animal_positions.erase(s.animal_positions.begin() + animal_idx);
                    s.animal_hits.erase(s.animal_hits.begin() + animal_idx);
                    emit("kill:animal");
                    emit("pickup:meat");
                    ++s.inventory[static_cast<int>(Resource::Meat)];
                }
            } else {
                int flat = fr * s.size + fc;
                auto hit_until = [&](int needed) {
                    int h = ++s.cell_hits[flat];
                    if (h >= needed) {
                        s.cell_hits.erase(flat);
                        return true;
                    }
                    return false;
                };
                switch (s.cell(fr, fc)) {
                    case CellKind::Tree:
                        if (hit_until(cfg.tree_hits)) {
                            s.set_cell(fr, fc, CellKind::Empty);
                            emit("mine_block:tree");
                            emit("pickup:wood");
                            ++s.inventory[static_cast<int>(Resource::Wood)];
                        }
                        break;
                    case CellKind::Stone:
                        if (hit_until(cfg.stone_hits)) {
                            s.set_cell(fr, fc, CellKind::Empty);
                            emit("mine_block:stone");
                            emit("pickup:stone");
                            ++s.inventory[static_cast<int>(Resource::Stone)];
                        }
                        break;
                    case CellKind::Dirt:
                        if (hit_until(cfg.dirt_hits)) {
                            s.set_cell(fr, fc, CellKind::Empty);
                            emit("mine_block:dirt");
                            emit("pickup:dirt");
                            ++s.inventory[static_cast<int>(Resource::Dirt)];
                        }
                        break;
                    case CellKind::Crop:
                        if (hit_until(cfg.crop_hits)) {
                            s.set_cell(fr, fc, CellKind::Empty);
                            emit("mine_block:crop");
                        }
                        break;
                    case CellKind::Water:
                        emit("use:water");
                        ++s.inventory[static_cast<int>(Resource::Bucket)];
                        break;
                    case CellKind::Empty:
                        if (s.inv(Resource::Dirt) > 0 && !s.has_animal_at(fr, fc) &&
                            !(fr == s.agent_r && fc == s.agent_c)) {
                            s.set_cell(fr, fc, CellKind::Dirt);
                            --s.inventory[static_cast<int>(Resource::Dirt)];
                            emit("place:dirt");
                        }
                        break;
                    default: break;
                }
            }
        }
    }

    // Seeded animal walk.
    Rng rng(0);
    rng.set_state(s.rng_state);
    for (size_t i = 0; i < s.animal_positions.size(); ++i) {
        if (rng.uniform() >= cfg.animal_move_prob) continue;
        auto [r, c] = s.animal_positions[i];
        static const int dr[] = {-1, 0, 1, 0};
        static const int dc[] = {0, 1, 0, -1};
        std::vector<std::pair<int, int>> cand;
        for (int k = 0; k < 4; ++k) {
            int nr = r + dr[k], nc = c + dc[k];
            if (!s.in_bounds(nr, nc)) continue;
            if (s.cell(nr, nc) != CellKind::Empty) continue;
            if (s.has_animal_at(nr, nc)) continue;
            if (nr == s.agent_r && nc == s.agent_c) continue;
            cand.emplace_back(nr, nc);
        }
        if (!cand.empty())
            s.animal_positions[i] = cand[rng.uniform_int(cand.size())];
    }
    s.rng_state = rng.state();

    ++s.tick;
    out.frame = render(s, cfg);
    return out;
}

FrameTensor render(const WorldState& state, const EnvConfig& cfg) {
    const int n = cfg.view;
    const int half = n / 2;
    FrameTensor f;
    f.h = n;
    f.w = n;
    f.c = kFrameChannels;
    f.values.assign(static_cast<size_t>(n) * n * kFrameChannels, 0.0f);

    // Unrotated window, then rotate counterclockwise once per 90 degrees of facing
    // so the faced cell sits directly above the center.
    std::vector<CellKind> window(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            int r = state.agent_r + i - half;
            int c = state.agent_c + j - half;
            CellKind k = CellKind::Wall;
            if (state.in_bounds(r, c)) {
                k = state.cell(r, c);
                if (state.has_animal_at(r, c)) k = CellKind::Animal;
            }
            window[static_cast<size_t>(i) * n + j] = k;
        }
    }
    int rot = static_cast<int>(state.facing);
    for (int t = 0; t < rot; ++t) {
        std::vector<CellKind> next(window.size());
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                next[static_cast<size_t>(i) * n + j] = window[static_cast<size_t>(j) * n + (n - 1 - i)];
        window = std::move(next);
    }

    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            int ch = static_cast<int>(window[static_cast<size_t>(i) * n + j]);
            f.values[(static_cast<size_t>(i) * n + j) * kFrameChannels + ch] = 1.0f;
        }

    for (int rsc = 0; rsc < kRenderedResources; ++rsc) {
        float level = std::min(1.0f, static_cast<float>(state.inventory[rsc]) /
                                         static_cast<float>(cfg.inventory_divisor));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                f.values[(static_cast<size_t>(i) * n + j) * kFrameChannels + kCellChannels + rsc] =
                    level;
    }
    return f;
}

namespace {

struct NavTarget {
    bool found = false;
    bool at_standing_cell = false;
    Facing desired = Facing::N;
    std::pair<int, int> next_step{0, 0};
};

// BFS over passable cells to the nearest cell adjacent to a target, neighbor
// order N < E < S < W.
NavTarget navigate(const WorldState& s, const std::vector<std::pair<int, int>>& targets) {
    NavTarget out;
    if (targets.empty()) return out;
    const int n = s.size;
    std::vector<uint8_t> is_target(static_cast<size_t>(n) * n, 0);
    for (auto [r, c] : targets) is_target[static_cast<size_t>(r) * n + c] = 1;

    static const int dr[] = {-1, 0, 1, 0};
    static const int dc[] = {0, 1, 0, -1};
    auto adjacent_target_dir = [&](int r, int c) -> int {
        for (int k = 0; k < 4; ++k) {
            int ar = r + dr[k], ac = c + dc[k];
            if (s.in_bounds(ar, ac) && is_target[static_cast<size_t>(ar) * n + ac]) return k;
        }
        return -1;
    };

    std::vector<int> parent(static_cast<size_t>(n) * n, -2);
    std::deque<int> queue;
    int start = s.agent_r * n + s.agent_c;
    parent[start] = -1;
    queue.push_back(start);
    int goal = -1;
    while (!queue.empty()) {
        int cur = queue.front();
        queue.pop_front();
        int r = cur / n, c = cur % n;
        int dir = adjacent_target_dir(r, c);
        if (dir >= 0) {
            goal = cur;
            out.desired = static_cast<Facing>(dir);
            break;
        }
        for (int k = 0; k < 4; ++k) {
            int nr = r + dr[k], nc = c + dc[k];
            if (!s.in_bounds(nr, nc)) continue;
            int nxt = nr * n + nc;
            if (parent[nxt] != -2) continue;
            if (!passable(s.cell(nr, nc))) continue;
            parent[nxt] = cur;
            queue.push_back(nxt);
        }
    }
    if (goal < 0) return out;
    out.found = true;
    if (goal == start) {
        out.at_standing_cell = true;
        return out;
    }
    int cur = goal;
    while (parent[cur] != start) cur = parent[cur];
    out.next_step = {cur / n, cur % n};
    return out;
}

Action turn_toward(Facing current, Facing desired) {
    int diff = (static_cast<int>(desired) - static_cast<int>(current) + 4) % 4;
    if (diff == 1) return {0, static_cast<int>(TurnOp::Right)};
    return {0, static_cast<int>(TurnOp::Left)};  // diff 2 or 3: turn left
}

Action move_toward(const WorldState& s, std::pair<int, int> next) {
    int dr = next.first - s.agent_r;
    int dc = next.second - s.agent_c;
    auto [fr, fc] = facing_delta(s.facing);
    if (dr == fr && dc == fc) return {static_cast<int>(MoveOp::Forward), 0};
    if (dr == -fr && dc == -fc) return {static_cast<int>(MoveOp::Back), 0};
    if (dr == -fc && dc == fr) return {static_cast<int>(MoveOp::StrafeLeft), 0};
    return {static_cast<int>(MoveOp::StrafeRight), 0};
}

}  // namespace

Action scripted_policy(const std::string& skill, const WorldState& state, const EnvConfig& cfg) {
    (void)cfg;
    CellKind want = CellKind::Empty;
    bool hunt = false;
    if (skill == "chop_trees") want = CellKind::Tree;
    else if (skill == "mine_stone") want = CellKind::Stone;
    else if (skill == "hunt_animal") hunt = true;
    else if (skill == "collect_water") want = CellKind::Water;
    else if (skill == "build_dirt") want = CellKind::Dirt;
    else throw ConfigError("unknown skill: " + skill);

    auto [fr, fc] = facing_delta(state.facing);
    int far_r = state.agent_r + fr, far_c = state.agent_c + fc;
    bool faced_in = state.in_bounds(far_r, far_c);

    // The dig-and-fill cycle: with dirt in hand and an empty faced cell, place it.
    if (skill == "build_dirt" && state.inv(Resource::Dirt) > 0 && faced_in &&
        state.cell(far_r, far_c) == CellKind::Empty && !state.has_animal_at(far_r, far_c))
        return {static_cast<int>(MoveOp::AttackOrUse), 0};

    std::vector<std::pair<int, int>> targets;
    if (hunt) {
        targets = state.animal_positions;
    } else {
        for (int r = 0; r < state.size; ++r)
            for (int c = 0; c < state.size; ++c)
                if (state.cell(r, c) == want) targets.emplace_back(r, c);
    }
    if (targets.empty()) return {static_cast<int>(MoveOp::Noop), 0};

    if (faced_in) {
        bool faced_is_target = hunt ? state.has_animal_at(far_r, far_c)
                                    : state.cell(far_r, far_c) == want;
        if (faced_is_target) return {static_cast<int>(MoveOp::AttackOrUse), 0};
    }

    NavTarget nav = navigate(state, targets);
    if (!nav.found) return {static_cast<int>(MoveOp::Noop), 0};
    if (nav.at_standing_cell) return turn_toward(state.facing, nav.desired);
    return move_toward(state, nav.next_step);
}

std::vector<Trajectory> generate_dataset(const std::vector<std::string>& skills,
                                         int episodes_per_skill, int episode_len, uint64_t seed,
                                         const EnvConfig& cfg) {
    std::vector<Trajectory> out;
    out.reserve(skills.size() * static_cast<size_t>(episodes_per_skill));
    for (size_t si = 0; si < skills.size(); ++si) {
        for (int e = 0; e < episodes_per_skill; ++e) {
            uint64_t wseed = derive_seed(seed, si + 1, static_cast<uint64_t>(e) + 1);
            Trajectory traj;
            traj.skill_label = skills[si];
            traj.seed = wseed;
            traj.has_actions = true;
            WorldState s = generate_world(wseed, cfg);
            FrameTensor frame = render(s, cfg);
            for (int t = 0; t < episode_len; ++t) {
                traj.frames.push_back(frame);
                Action a = scripted_policy(skills[si], s, cfg);
                StepResult res = step(s, a, cfg);
                traj.actions.push_back(a);
                for (auto& ev : res.events) traj.events.push_back(ev);
                s = std::move(res.state);
                frame = std::move(res.frame);
            }
            out.push_back(std::move(traj));
        }
    }
    return out;
}

std::vector<Trajectory> strip_actions(const std::vector<Trajectory>& trajs) {
    std::vector<Trajectory> out = trajs;
    for (auto& t : out) {
        t.actions.clear();
        t.has_actions = false;
        t.pseudo_labeled = false;
    }
    return out;
}

}  // namespace videogoal::env
