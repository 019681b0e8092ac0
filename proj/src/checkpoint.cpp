#include "spr/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "spr/fsio.hpp"

namespace spr {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f32_le(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32_le(out, bits);
}

float get_f32_le(const unsigned char* p) {
    std::uint32_t bits = get_u32_le(p);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

nlohmann::json layer_to_json(const Layer& l) {
    nlohmann::json j;
    j["kind"] = layer_kind_name(l.kind);
    if (l.has_params()) {
        j["in_ch"] = l.in_ch;
        j["out_ch"] = l.out_ch;
    }
    if (l.kind == LayerKind::conv2d) {
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["pad"] = l.pad;
    }
    if (l.kind == LayerKind::maxpool2d) {
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
    }
    return j;
}

Layer layer_from_json(const nlohmann::json& j) {
    Layer l = make_layer(layer_kind_from_name(j.at("kind").get<std::string>()));
    if (l.kind == LayerKind::dense) {
        l.in_ch = j.at("in_ch").get<int>();
        l.out_ch = j.at("out_ch").get<int>();
        l.weights = Tensor({l.out_ch, l.in_ch});
        l.bias = Tensor({l.out_ch});
    } else if (l.kind == LayerKind::conv2d) {
        l.in_ch = j.at("in_ch").get<int>();
        l.out_ch = j.at("out_ch").get<int>();
        l.kernel = j.at("kernel").get<int>();
        l.stride = j.at("stride").get<int>();
        l.pad = j.at("pad").get<int>();
        l.weights = Tensor({l.out_ch, l.in_ch, l.kernel, l.kernel});
        l.bias = Tensor({l.out_ch});
    } else if (l.kind == LayerKind::maxpool2d) {
        l.kernel = j.at("kernel").get<int>();
        l.stride = j.at("stride").get<int>();
    }
    return l;
}

/// Byte length of the top-level JSON object starting at `begin` (brace
/// counting, string-aware). Lets the reader locate the payload without
/// trusting anything but the header itself.
std::size_t json_extent(const std::string& buf, std::size_t begin) {
    int depth = 0;
    bool in_str = false, esc = false;
    for (std::size_t i = begin; i < buf.size(); ++i) {
        char c = buf[i];
        if (in_str) {
            if (esc)
                esc = false;
            else if (c == '\\')
                esc = true;
            else if (c == '"')
                in_str = false;
            continue;
        }
        if (c == '"')
            in_str = true;
        else if (c == '{')
            ++depth;
        else if (c == '}') {
            --depth;
            if (depth == 0) return i + 1 - begin;
        }
    }
    throw Error("checkpoint header JSON is truncated");
}

}  // namespace

void save_checkpoint(const std::string& path, const Network& net,
                     const nlohmann::json& extra) {
    nlohmann::json header;
    header["schema_version"] = 1;
    header["input_shape"] = net.input_shape;
    header["param_count"] = net.param_count();
    header["layers"] = nlohmann::json::array();
    for (const Layer& l : net.layers) header["layers"].push_back(layer_to_json(l));
    if (!net.frozen.empty()) {
        std::vector<std::size_t> frozen_idx;
        for (std::size_t j = 0; j < net.frozen.size(); ++j)
            if (net.frozen[j]) frozen_idx.push_back(j);
        header["frozen_indices"] = frozen_idx;
    }
    if (!extra.is_null() && !extra.empty()) header["extra"] = extra;

    // The payload offset lives inside the header, so the length is found by
    // fixed point: writing the offset may change the header length.
    std::size_t offset = 0;
    std::string header_text;
    for (int pass = 0; pass < 4; ++pass) {
        header["payload_offset"] = offset;
        header_text = header.dump();
        std::size_t want = 8 + header_text.size();
        if (want == offset) break;
        offset = want;
    }
    header["payload_offset"] = offset;
    header_text = header.dump();
    require(8 + header_text.size() == offset, "checkpoint header offset did not settle");

    std::string out;
    out.append(kMagic, 4);
    put_u32_le(out, kVersion);
    out += header_text;
    std::vector<double> flat = get_params(net);
    out.reserve(out.size() + 4 * flat.size());
    for (double v : flat) put_f32_le(out, static_cast<float>(v));

    atomic_write_file(path, out);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::string buf = read_file(path);
    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw ConfigError("bad checkpoint magic in " + path);
    const auto* bytes = reinterpret_cast<const unsigned char*>(buf.data());
    std::uint32_t version = get_u32_le(bytes + 4);
    if (version != kVersion)
        throw ConfigError("unsupported checkpoint version " + std::to_string(version));

    std::size_t hlen = json_extent(buf, 8);
    nlohmann::json header = nlohmann::json::parse(buf.substr(8, hlen));

    LoadedCheckpoint out;
    out.header = header;
    out.net.input_shape = header.at("input_shape").get<std::vector<int>>();
    for (const auto& lj : header.at("layers")) out.net.layers.push_back(layer_from_json(lj));

    std::size_t n = out.net.param_count();
    if (header.at("param_count").get<std::size_t>() != n)
        throw ConfigError("checkpoint param_count disagrees with layer shapes");
    std::size_t offset = header.at("payload_offset").get<std::size_t>();
    if (offset + 4 * n > buf.size()) throw ConfigError("checkpoint payload truncated");

    std::vector<double> flat(n);
    for (std::size_t j = 0; j < n; ++j)
        flat[j] = static_cast<double>(get_f32_le(bytes + offset + 4 * j));
    set_params(out.net, flat);

    if (header.contains("frozen_indices")) {
        out.net.frozen.assign(n, 0);
        for (std::size_t j : header["frozen_indices"].get<std::vector<std::size_t>>())
            if (j < n) out.net.frozen[j] = 1;
    }
    return out;
}

}  // namespace spr
