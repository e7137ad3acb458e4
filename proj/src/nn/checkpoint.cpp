#include "advunlearn/nn/checkpoint.hpp"

#include <sstream>

#include <nlohmann/json.hpp>

#include "advunlearn/errors.hpp"
#include "advunlearn/util/io.hpp"

namespace advunlearn {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'U', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct Parsed {
    nlohmann::json manifest;
    Vector values;
    std::optional<std::vector<std::uint8_t>> mask;
};

Parsed parse(const std::filesystem::path& path) {
    std::istringstream in(io::read_file(path));
    char magic[8];
    if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) {
        throw ParseError(path.string() + ": not a checkpoint (bad magic)");
    }
    const auto version = io::read_le<std::uint32_t>(in, "checkpoint version");
    if (version != kVersion) {
        throw ParseError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto mlen = io::read_le<std::uint64_t>(in, "manifest length");
    std::string text(mlen, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(mlen))) {
        throw ParseError(path.string() + ": truncated manifest");
    }
    Parsed p;
    try {
        p.manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": bad manifest: " + e.what());
    }
    if (p.manifest.value("dtype", "") != "f64le") {
        throw ParseError(path.string() + ": unsupported dtype");
    }
    const auto total = p.manifest.at("total").get<std::size_t>();
    p.values.resize(static_cast<Eigen::Index>(total));
    for (std::size_t i = 0; i < total; ++i) {
        p.values[static_cast<Eigen::Index>(i)] = io::read_f64(in, "parameter payload");
    }
    if (p.manifest.value("has_mask", false)) {
        std::vector<std::uint8_t> mask(total);
        if (!in.read(reinterpret_cast<char*>(mask.data()), static_cast<std::streamsize>(total))) {
            throw ParseError(path.string() + ": truncated mask");
        }
        p.mask = std::move(mask);
    }
    return p;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
    nlohmann::json manifest;
    manifest["dtype"] = "f64le";
    manifest["total"] = params.size();
    manifest["has_mask"] = params.mask().has_value();
    auto& entries = manifest["entries"] = nlohmann::json::array();
    for (const auto& e : params.entries()) {
        entries.push_back(
            {{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}, {"prunable", e.prunable}});
    }
    const std::string text = manifest.dump();

    std::ostringstream out;
    out.write(kMagic, 8);
    io::write_le(out, kVersion);
    io::write_le(out, static_cast<std::uint64_t>(text.size()));
    out << text;
    for (Eigen::Index i = 0; i < params.values().size(); ++i) {
        io::write_f64(out, params.values()[i]);
    }
    if (const auto& mask = params.mask()) {
        out.write(reinterpret_cast<const char*>(mask->data()), static_cast<std::streamsize>(mask->size()));
    }
    io::write_file_atomic(path, out.str());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
    Parsed p = parse(path);
    ParamStore store;
    for (const auto& e : p.manifest.at("entries")) {
        store.add(e.at("name").get<std::string>(), e.at("shape").get<std::vector<std::size_t>>(),
                  e.at("prunable").get<bool>());
    }
    if (store.size() != static_cast<std::size_t>(p.values.size())) {
        throw ParseError(path.string() + ": entry shapes do not add up to the payload size");
    }
    store.values() = p.values;
    if (p.mask) {
        store.set_mask(std::move(*p.mask));
    }
    return store;
}

void load_checkpoint_into(ParamStore& params, const std::filesystem::path& path) {
    ParamStore loaded = load_checkpoint(path);
    if (!params.same_layout(loaded)) {
        throw ParseError(path.string() + ": checkpoint layout does not match the model");
    }
    params.values() = loaded.values();
    if (loaded.mask()) {
        params.set_mask(*loaded.mask());
    } else {
        params.clear_mask();
    }
}

}  // namespace advunlearn
