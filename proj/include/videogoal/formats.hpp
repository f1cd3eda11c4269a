#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "videogoal/env.hpp"
#include "videogoal/params.hpp"

namespace videogoal::io {

// ---- trajectory files ----
// magic "MTRJ1"; little-endian header {format_version u32, n_trajectories u32};
// per trajectory: T_ep u32, H u16, W u16, C u16, has_actions u8, pseudo u8,
// seed u64, skill_label (u32 length + UTF-8), frames f32 row-major T*H*W*C,
// actions as (move u8, turn u8) pairs when present, n_events u32 then events
// as {tick u32, tag (u32 length + UTF-8)}.

inline constexpr uint32_t kTrajectoryVersion = 1;

std::vector<uint8_t> encode_trajectories(const std::vector<env::Trajectory>& trajs);
std::vector<env::Trajectory> decode_trajectories(const std::vector<uint8_t>& bytes);

void write_trajectories(const std::string& path, const std::vector<env::Trajectory>& trajs);
std::vector<env::Trajectory> read_trajectories(const std::string& path);

// ---- checkpoint files ----
// magic "MCKP1"; u64 manifest length; JSON manifest (format_version, step,
// config snapshot, parameter index name -> {shape, dtype, offset}); then a
// contiguous little-endian f32 blob. Optimizer moments are stored as parameters
// under "opt.m." / "opt.v." prefixes.

inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    nn::ParamStore<float> params;      // model parameters
    nn::ParamStore<float> opt_m;       // Adam first moments (may be empty)
    nn::ParamStore<float> opt_v;       // Adam second moments
    nlohmann::json config;             // resolved config snapshot
    int64_t step = 0;
    int opt_steps = 0;
};

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes);

void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

// ---- small helpers ----

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
void write_text(const std::string& path, const std::string& text);
void append_jsonl(const std::string& path, const nlohmann::json& obj);

// Every CLI run writes out_dir/manifest.json with the resolved config.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const nlohmann::json& resolved_config,
                    const std::vector<std::string>& outputs);

}  // namespace videogoal::io
