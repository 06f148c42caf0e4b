#include "uwie/datastore.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace uwie {

namespace fs = std::filesystem;
using nlohmann::json;

std::string split_for_scene(const std::string& scene_id) {
    // Map the scene hash to [0,1): <0.8 train, <0.9 val, else test.
    const double u = static_cast<double>(fnv1a64(scene_id) >> 11) * 0x1.0p-53;
    if (u < 0.8) return "train";
    if (u < 0.9) return "val";
    return "test";
}

namespace {

json entry_to_json(const ManifestEntry& e) {
    return json{{"degraded_path", e.degraded_path},
                {"clear_path", e.clear_path},
                {"depth_path", e.depth_path},
                {"class_id", e.class_id},
                {"params",
                 {{"background", e.params.background},
                  {"depth_scale", e.params.depth_scale},
                  {"depth_offset", e.params.depth_offset}}},
                {"scene_id", e.scene_id},
                {"draw_index", e.draw_index},
                {"split", e.split}};
}

ManifestEntry entry_from_json(const json& j) {
    ManifestEntry e;
    e.degraded_path = j.at("degraded_path").get<std::string>();
    e.clear_path = j.at("clear_path").get<std::string>();
    e.depth_path = j.at("depth_path").get<std::string>();
    e.class_id = j.at("class_id").get<int>();
    const json& p = j.at("params");
    e.params.background = p.at("background").get<std::array<double, 3>>();
    e.params.depth_scale = p.at("depth_scale").get<double>();
    e.params.depth_offset = p.at("depth_offset").get<double>();
    e.scene_id = j.at("scene_id").get<std::string>();
    e.draw_index = j.at("draw_index").get<int>();
    e.split = j.at("split").get<std::string>();
    return e;
}

void validate_entry(const ManifestEntry& e, const fs::path& base) {
    if (e.class_id < 0 || e.class_id >= kNumWaterClasses)
        throw InvalidInputError("manifest entry '" + e.scene_id + "': class_id out of range");
    if (e.split != "train" && e.split != "val" && e.split != "test")
        throw InvalidInputError("manifest entry '" + e.scene_id + "': bad split '" + e.split + "'");
    e.params.validate();
    std::vector<std::string> missing;
    for (const std::string& rel : {e.degraded_path, e.clear_path, e.depth_path})
        if (!fs::exists(base / rel)) missing.push_back(rel);
    if (!missing.empty()) {
        std::string msg = "dangling manifest references:";
        for (const auto& m : missing) msg += " " + m;
        throw DataError(msg);
    }
}

}  // namespace

void write_manifest(const std::string& path, std::span<const ManifestEntry> entries) {
    const fs::path base = fs::path(path).parent_path();
    for (const auto& e : entries) validate_entry(e, base);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp);
        for (const auto& e : entries) out << entry_to_json(e).dump() << '\n';
    }
    fs::rename(tmp, path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open manifest: " + path);
    const fs::path base = fs::path(path).parent_path();

    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw FormatError(path + ":" + std::to_string(lineno) + ": manifest line is not valid JSON");
        ManifestEntry e;
        try {
            e = entry_from_json(j);
        } catch (const json::exception& ex) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": " + ex.what());
        }
        validate_entry(e, base);
        entries.push_back(std::move(e));
    }
    return entries;
}

namespace {

constexpr char kMagic[8] = {'U', 'I', 'E', 'D', 'A', 'L', '0', '1'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Cursor {
    const unsigned char* p;
    std::size_t remaining;
    const std::string& path;

    void need(std::size_t n) const {
        if (remaining < n) throw CorruptionError("truncated checkpoint: " + path);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        remaining -= 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        remaining -= 8;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        remaining -= n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const CheckpointData& ckpt, const std::string& path) {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));

    const std::string cfg = ckpt.config.dump();
    put_u64(buf, cfg.size());
    buf.append(cfg);

    put_u32(buf, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const NamedTensor& t : ckpt.tensors) {
        if (t.values.size() != shape_numel(t.shape))
            throw InvalidInputError("tensor '" + t.name + "': payload does not match shape");
        put_u32(buf, static_cast<std::uint32_t>(t.name.size()));
        buf.append(t.name);
        put_u32(buf, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(buf, static_cast<std::uint32_t>(d));
        for (float v : t.values) put_u32(buf, std::bit_cast<std::uint32_t>(v));
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    fs::rename(tmp, path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (raw.size() < sizeof(kMagic) || std::memcmp(raw.data(), kMagic, sizeof(kMagic)) != 0)
        throw FormatError("bad checkpoint magic: " + path);

    Cursor cur{reinterpret_cast<const unsigned char*>(raw.data()) + sizeof(kMagic),
               raw.size() - sizeof(kMagic), path};

    CheckpointData ckpt;
    const std::uint64_t cfg_len = cur.u64();
    const std::string cfg = cur.bytes(cfg_len);
    ckpt.config = json::parse(cfg, nullptr, false);
    if (ckpt.config.is_discarded()) throw FormatError("checkpoint config is not valid JSON: " + path);

    const std::uint32_t count = cur.u32();
    ckpt.tensors.reserve(count);
    for (std::uint32_t ti = 0; ti < count; ++ti) {
        NamedTensor t;
        t.name = cur.bytes(cur.u32());
        const std::uint32_t ndim = cur.u32();
        t.shape.resize(ndim);
        for (std::uint32_t d = 0; d < ndim; ++d) t.shape[d] = static_cast<int>(cur.u32());
        const std::size_t n = shape_numel(t.shape);
        t.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) t.values[i] = std::bit_cast<float>(cur.u32());
        ckpt.tensors.push_back(std::move(t));
    }
    if (cur.remaining != 0) throw CorruptionError("trailing bytes in checkpoint: " + path);
    return ckpt;
}

std::uint64_t double_to_bits(double v) { return std::bit_cast<std::uint64_t>(v); }
double bits_to_double(std::uint64_t bits) { return std::bit_cast<double>(bits); }

}  // namespace uwie
