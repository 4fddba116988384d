#include "ultra/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ultra/errors.hpp"

namespace ultra {
namespace {

constexpr char kMagic[4] = {'U', 'K', 'G', 'R'};
constexpr std::string_view kFirstMomentPrefix = "adamw.m:";
constexpr std::string_view kSecondMomentPrefix = "adamw.v:";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= std::uint64_t{static_cast<unsigned char>(in[pos + i])} << (8 * i);
  }
  return v;
}

struct NamedTensor {
  std::string name;
  const nd::Tensor* tensor;
};

}  // namespace

void round_to_float32(nd::OptimizerState& state) {
  for (auto* group : {&state.first_moment, &state.second_moment}) {
    for (auto& t : *group) {
      for (auto& v : t.values()) v = static_cast<double>(static_cast<float>(v));
    }
  }
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<NamedTensor> tensors;
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    tensors.push_back({ckpt.params.name(i), &ckpt.params.value(i)});
  }
  nlohmann::json header;
  if (ckpt.optimizer) {
    const auto& opt = *ckpt.optimizer;
    if (opt.first_moment.size() != ckpt.params.size() || opt.second_moment.size() != ckpt.params.size()) {
      throw ContractViolation("optimizer state does not match the parameters");
    }
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      tensors.push_back({std::string(kFirstMomentPrefix) + ckpt.params.name(i), &opt.first_moment[i]});
    }
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      tensors.push_back({std::string(kSecondMomentPrefix) + ckpt.params.name(i), &opt.second_moment[i]});
    }
    header["optimizer"] = {
        {"step", opt.step},
        {"learning_rate", opt.config.learning_rate},
        {"beta1", opt.config.beta1},
        {"beta2", opt.config.beta2},
        {"epsilon", opt.config.epsilon},
        {"weight_decay", opt.config.weight_decay},
    };
  } else {
    header["optimizer"] = nullptr;
  }
  header["model"] = {
      {"dim", ckpt.model.dim},
      {"relation_layers", ckpt.model.relation_layers},
      {"entity_layers", ckpt.model.entity_layers},
      {"ablation", to_string(ckpt.model.ablation)},
  };
  header["provenance"] = {
      {"mixture", ckpt.provenance.mixture},
      {"step", ckpt.provenance.step},
      {"seed", ckpt.provenance.seed},
  };
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& nt : tensors) {
    manifest.push_back({{"name", nt.name},
                        {"shape", {nt.tensor->rows(), nt.tensor->cols()}},
                        {"offset", offset}});
    offset += 4 * nt.tensor->size();
  }
  header["tensors"] = manifest;

  const std::string text = header.dump();
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& nt : tensors) {
    for (double v : nt.tensor->values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source) {
  auto fail = [&](const std::string& what) { return DataError(source + ": " + what); };
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw fail("not a checkpoint file (bad magic)");
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kCheckpointVersion) {
    throw fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
               std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t header_len = get_le(bytes, 8, 8);
  if (header_len > bytes.size() - 16) throw fail("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  }
  const std::size_t payload = 16 + header_len;

  Checkpoint ckpt;
  try {
    const auto& m = header.at("model");
    ckpt.model.dim = m.at("dim").get<std::size_t>();
    ckpt.model.relation_layers = m.at("relation_layers").get<std::size_t>();
    ckpt.model.entity_layers = m.at("entity_layers").get<std::size_t>();
    ckpt.model.ablation = parse_ablation(m.at("ablation").get<std::string>());
    const auto& p = header.at("provenance");
    ckpt.provenance.mixture = p.at("mixture").get<std::vector<std::string>>();
    ckpt.provenance.step = p.at("step").get<std::uint64_t>();
    ckpt.provenance.seed = p.at("seed").get<std::uint64_t>();

    std::vector<nd::Tensor> first, second;
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      if (shape.size() != 2) throw fail("tensor " + name + " is not 2-dimensional");
      const std::size_t count = shape[0] * shape[1];
      if (offset + 4 * count > bytes.size() - payload) throw fail("tensor " + name + " exceeds the file");
      nd::Tensor t(shape[0], shape[1]);
      auto values = t.values();
      for (std::size_t i = 0; i < count; ++i) {
        const auto raw = static_cast<std::uint32_t>(get_le(bytes, payload + offset + 4 * i, 4));
        values[i] = static_cast<double>(std::bit_cast<float>(raw));
      }
      if (name.starts_with(kFirstMomentPrefix)) {
        first.push_back(std::move(t));
      } else if (name.starts_with(kSecondMomentPrefix)) {
        second.push_back(std::move(t));
      } else {
        ckpt.params.add(name, std::move(t));
      }
    }
    const auto& opt = header.at("optimizer");
    if (!opt.is_null()) {
      if (first.size() != ckpt.params.size() || second.size() != ckpt.params.size()) {
        throw fail("optimizer moments do not match the parameters");
      }
      nd::OptimizerState state;
      state.step = opt.at("step").get<std::uint64_t>();
      state.config.learning_rate = opt.at("learning_rate").get<double>();
      state.config.beta1 = opt.at("beta1").get<double>();
      state.config.beta2 = opt.at("beta2").get<double>();
      state.config.epsilon = opt.at("epsilon").get<double>();
      state.config.weight_decay = opt.at("weight_decay").get<double>();
      state.first_moment = std::move(first);
      state.second_moment = std::move(second);
      ckpt.optimizer = std::move(state);
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    throw fail(e.what());
  } catch (const ContractViolation& e) {
    throw fail(e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str(), path.string());
}

}  // namespace ultra
