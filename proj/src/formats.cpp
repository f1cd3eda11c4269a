#include "videogoal/formats.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace videogoal::io {

using nlohmann::json;

namespace {

// Little-endian byte cursor with positioned error reporting.
struct Writer {
    std::vector<uint8_t> out;
    void u8(uint8_t v) { out.push_back(v); }
    void u16(uint16_t v) {
        for (int i = 0; i < 2; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        out.insert(out.end(), s.begin(), s.end());
    }
    void raw(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
};

struct Reader {
    const std::vector<uint8_t>& in;
    size_t pos = 0;

    void need(size_t n, const char* what) const {
        if (pos + n > in.size())
            throw IoError(std::string("truncated file: needed ") + std::to_string(n) +
                          " bytes for " + what + " at byte offset " + std::to_string(pos));
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return in[pos++];
    }
    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(in[pos++]) << (8 * i);
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(in[pos++]) << (8 * i);
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(in[pos++]) << (8 * i);
        return v;
    }
    float f32(const char* what) {
        uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(const char* what) {
        uint32_t n = u32(what);
        need(n, what);
        std::string s(reinterpret_cast<const char*>(in.data() + pos), n);
        pos += n;
        return s;
    }
};

void check_magic(Reader& r, const char* magic, const char* kind) {
    r.need(5, "magic");
    if (std::memcmp(r.in.data() + r.pos, magic, 5) != 0)
        throw IoError(std::string("bad magic for ") + kind + " file");
    r.pos += 5;
}

}  // namespace

std::vector<uint8_t> encode_trajectories(const std::vector<env::Trajectory>& trajs) {
    Writer w;
    w.raw("MTRJ1", 5);
    w.u32(kTrajectoryVersion);
    w.u32(static_cast<uint32_t>(trajs.size()));
    for (const auto& t : trajs) {
        if (t.has_actions && t.actions.size() != t.frames.size())
            throw IoError("trajectory has_actions but actions/frames lengths differ");
        const int T = static_cast<int>(t.frames.size());
        int H = T > 0 ? t.frames[0].h : 0;
        int W = T > 0 ? t.frames[0].w : 0;
        int C = T > 0 ? t.frames[0].c : 0;
        w.u32(static_cast<uint32_t>(T));
        w.u16(static_cast<uint16_t>(H));
        w.u16(static_cast<uint16_t>(W));
        w.u16(static_cast<uint16_t>(C));
        w.u8(t.has_actions ? 1 : 0);
        w.u8(t.pseudo_labeled ? 1 : 0);
        w.u64(t.seed);
        w.str(t.skill_label);
        for (const auto& f : t.frames) {
            if (f.h != H || f.w != W || f.c != C)
                throw IoError("trajectory frames have inconsistent shapes");
            w.raw(f.values.data(), f.values.size() * 4);
        }
        if (t.has_actions)
            for (const auto& a : t.actions) {
                w.u8(static_cast<uint8_t>(a.move));
                w.u8(static_cast<uint8_t>(a.turn));
            }
        w.u32(static_cast<uint32_t>(t.events.size()));
        for (const auto& e : t.events) {
            w.u32(static_cast<uint32_t>(e.tick));
            w.str(e.tag);
        }
    }
    return w.out;
}

std::vector<env::Trajectory> decode_trajectories(const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    check_magic(r, "MTRJ1", "trajectory");
    uint32_t version = r.u32("format_version");
    if (version != kTrajectoryVersion)
        throw IoError("unsupported trajectory format_version " + std::to_string(version));
    uint32_t n = r.u32("n_trajectories");
    std::vector<env::Trajectory> out;
    out.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        env::Trajectory t;
        uint32_t T = r.u32("T_ep");
        uint16_t H = r.u16("H"), W = r.u16("W"), C = r.u16("C");
        t.has_actions = r.u8("has_actions") != 0;
        t.pseudo_labeled = r.u8("pseudo") != 0;
        t.seed = r.u64("seed");
        t.skill_label = r.str("skill_label");
        t.frames.reserve(T);
        const size_t frame_elems = static_cast<size_t>(H) * W * C;
        for (uint32_t f = 0; f < T; ++f) {
            env::FrameTensor ft;
            ft.h = H;
            ft.w = W;
            ft.c = C;
            ft.values.resize(frame_elems);
            r.need(frame_elems * 4, "frame data");
            std::memcpy(ft.values.data(), bytes.data() + r.pos, frame_elems * 4);
            r.pos += frame_elems * 4;
            t.frames.push_back(std::move(ft));
        }
        if (t.has_actions) {
            t.actions.reserve(T);
            for (uint32_t a = 0; a < T; ++a) {
                env::Action act;
                act.move = r.u8("action.move");
                act.turn = r.u8("action.turn");
                t.actions.push_back(act);
            }
        }
        uint32_t ne = r.u32("n_events");
        t.events.reserve(ne);
        for (uint32_t e = 0; e < ne; ++e) {
            env::Event ev;
            ev.tick = static_cast<int>(r.u32("event.tick"));
            ev.tag = r.str("event.tag");
            t.events.push_back(std::move(ev));
        }
        out.push_back(std::move(t));
    }
    if (r.pos != bytes.size())
        throw IoError("trailing bytes after trajectory data at byte offset " +
                      std::to_string(r.pos));
    return out;
}

void write_trajectories(const std::string& path, const std::vector<env::Trajectory>& trajs) {
    write_file(path, encode_trajectories(trajs));
}

std::vector<env::Trajectory> read_trajectories(const std::string& path) {
    return decode_trajectories(read_file(path));
}

namespace {

void index_store(json& index, Writer& blob, const nn::ParamStore<float>& store,
                 const std::string& prefix) {
    for (const auto& [name, t] : store.params) {
        json entry;
        entry["name"] = prefix + name;
        entry["shape"] = {t.rows, t.cols};
        entry["dtype"] = "f32";
        entry["offset"] = blob.out.size();
        index.push_back(entry);
        blob.raw(t.v.data(), t.v.size() * 4);
    }
}

}  // namespace

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ck) {
    Writer blob;
    json index = json::array();
    index_store(index, blob, ck.params, "");
    index_store(index, blob, ck.opt_m, "opt.m.");
    index_store(index, blob, ck.opt_v, "opt.v.");

    json manifest;
    manifest["format_version"] = kCheckpointVersion;
    manifest["step"] = ck.step;
    manifest["opt_steps"] = ck.opt_steps;
    manifest["config"] = ck.config;
    manifest["params"] = index;
    std::string mstr = manifest.dump();

    Writer w;
    w.raw("MCKP1", 5);
    w.u64(mstr.size());
    w.raw(mstr.data(), mstr.size());
    w.raw(blob.out.data(), blob.out.size());
    return w.out;
}

Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    check_magic(r, "MCKP1", "checkpoint");
    uint64_t mlen = r.u64("manifest length");
    r.need(mlen, "manifest");
    json manifest;
    try {
        manifest = json::parse(bytes.begin() + r.pos, bytes.begin() + r.pos + mlen);
    } catch (const json::exception& e) {
        throw IoError(std::string("checkpoint manifest parse error: ") + e.what());
    }
    r.pos += mlen;
    if (manifest.at("format_version").get<uint32_t>() != kCheckpointVersion)
        throw IoError("unsupported checkpoint format_version");

    Checkpoint ck;
    ck.step = manifest.at("step").get<int64_t>();
    ck.opt_steps = manifest.value("opt_steps", 0);
    ck.config = manifest.at("config");
    const size_t blob_start = r.pos;
    for (const auto& entry : manifest.at("params")) {
        std::string name = entry.at("name").get<std::string>();
        auto shape = entry.at("shape").get<std::vector<int>>();
        if (shape.size() != 2) throw IoError("checkpoint param " + name + ": bad shape");
        if (entry.at("dtype").get<std::string>() != "f32")
            throw IoError("checkpoint param " + name + ": unsupported dtype");
        size_t offset = entry.at("offset").get<size_t>();
        size_t elems = static_cast<size_t>(shape[0]) * shape[1];
        if (blob_start + offset + elems * 4 > bytes.size())
            throw IoError("truncated checkpoint blob: param " + name + " at byte offset " +
                          std::to_string(blob_start + offset));
        nn::Tensor<float> t(shape[0], shape[1]);
        std::memcpy(t.v.data(), bytes.data() + blob_start + offset, elems * 4);
        if (name.rfind("opt.m.", 0) == 0)
            ck.opt_m.params.emplace(name.substr(6), std::move(t));
        else if (name.rfind("opt.v.", 0) == 0)
            ck.opt_v.params.emplace(name.substr(6), std::move(t));
        else
            ck.params.params.emplace(name, std::move(t));
    }
    return ck;
}

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
    write_file(path, encode_checkpoint(ck));
}

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    std::vector<uint8_t> bytes(static_cast<size_t>(f.tellg()));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("read failed: " + path);
    return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write file: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write file: " + path);
    f << text;
}

void append_jsonl(const std::string& path, const json& obj) {
    std::ofstream f(path, std::ios::app);
    if (!f) throw IoError("cannot append to file: " + path);
    f << obj.dump() << "\n";
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const json& resolved_config, const std::vector<std::string>& outputs) {
    json m;
    m["command"] = command;
    m["config"] = resolved_config;
    m["outputs"] = outputs;
    write_text(out_dir + "/manifest.json", m.dump(2) + "\n");
}

}  // namespace videogoal::io
