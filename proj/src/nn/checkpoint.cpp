#include "urbansolar/checkpoint.hpp"

#include <cstring>

#include "urbansolar/dataset.hpp"
#include "urbansolar/error.hpp"
#include "urbansolar/png_io.hpp"

namespace urbansolar {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'C', 'K'};

std::vector<std::uint8_t> payload(const std::vector<std::pair<std::string, torch::Tensor>>& tensors) {
    std::vector<std::uint8_t> out;
    for (const auto& [name, t] : tensors) {
        const auto flat = t.detach().to(torch::kFloat32).contiguous().view({-1});
        const auto bytes = to_le_bytes(std::span<const float>(flat.data_ptr<float>(), static_cast<std::size_t>(flat.numel())));
        out.insert(out.end(), bytes.begin(), bytes.end());
    }
    return out;
}

}  // namespace

std::string Checkpoint::fingerprint() const { return sha256_hex(payload(tensors)); }

std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& module) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& p : module.named_parameters(true)) out.emplace_back(p.key(), p.value());
    for (const auto& b : module.named_buffers(true)) out.emplace_back(b.key(), b.value());
    return out;
}

void load_state(torch::nn::Module& module, const std::vector<std::pair<std::string, torch::Tensor>>& state) {
    std::map<std::string, torch::Tensor> by_name(state.begin(), state.end());
    torch::NoGradGuard guard;
    const auto assign = [&](const std::string& name, torch::Tensor& target) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw CorruptionError("checkpoint lacks tensor " + name);
        if (it->second.sizes() != target.sizes()) throw CorruptionError("shape mismatch for tensor " + name);
        target.copy_(it->second.to(target.dtype()));
    };
    for (auto& p : module.named_parameters(true)) assign(p.key(), p.value());
    for (auto& b : module.named_buffers(true)) assign(b.key(), b.value());
}

std::string state_fingerprint(const torch::nn::Module& module) {
    return sha256_hex(payload(named_state(module)));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    nlohmann::json header = ck.header;
    nlohmann::json entries = nlohmann::json::array();
    std::int64_t offset = 0;
    for (const auto& [name, t] : ck.tensors) {
        entries.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"offset", offset}});
        offset += t.numel();
    }
    header["tensors"] = entries;
    header["fingerprint"] = ck.fingerprint();
    const std::string text = header.dump();
    std::vector<std::uint8_t> bytes(kMagic, kMagic + 4);
    const auto len = static_cast<std::uint32_t>(text.size());
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(len >> (8 * b)));
    bytes.insert(bytes.end(), text.begin(), text.end());
    const auto body = payload(ck.tensors);
    bytes.insert(bytes.end(), body.begin(), body.end());
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_bytes(path, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InputError("checkpoint not found: " + path.string());
    const auto bytes = read_bytes(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw CorruptionError(path.string() + " is not a checkpoint");
    }
    std::uint32_t len = 0;
    for (int b = 0; b < 4; ++b) len |= static_cast<std::uint32_t>(bytes[4 + static_cast<std::size_t>(b)]) << (8 * b);
    if (8 + static_cast<std::size_t>(len) > bytes.size()) throw CorruptionError("truncated checkpoint header");
    Checkpoint ck;
    try {
        ck.header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
        const std::size_t base = 8 + len;
        const auto values = from_le_bytes(std::span(bytes).subspan(base));
        for (const auto& e : ck.header.at("tensors")) {
            const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
            const auto offset = e.at("offset").get<std::int64_t>();
            std::int64_t n = 1;
            for (auto s : shape) n *= s;
            if (offset < 0 || static_cast<std::size_t>(offset + n) > values.size()) {
                throw CorruptionError("truncated checkpoint payload");
            }
            auto t = torch::from_blob(const_cast<float*>(values.data()) + offset, {n}, torch::kFloat32).clone();
            ck.tensors.emplace_back(e.at("name").get<std::string>(), t.view(shape));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(std::string("malformed checkpoint header: ") + e.what());
    }
    if (ck.header.contains("fingerprint") && ck.header["fingerprint"].get<std::string>() != ck.fingerprint()) {
        throw CorruptionError("checkpoint payload does not match its fingerprint");
    }
    return ck;
}

}  // namespace urbansolar
