#include "tgvlm/checkpoint.hpp"

#include <algorithm>
#include <map>

#include "tgvlm/errors.hpp"
#include "tgvlm/io.hpp"

namespace tgvlm {

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params) {
  io::ByteWriter w;
  w.bytes("TGVM");
  w.u32(kCheckpointVersion);
  for (const auto& [name, tensor] : params) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) w.u64(d);
    w.f64s(tensor.data());
  }
  io::write_file_atomic(path, w.buffer());
}

void load_checkpoint(const std::filesystem::path& path, ParameterList& params) {
  const std::string blob = io::read_file(path);
  io::ByteReader r(blob, "checkpoint " + path.string());
  if (r.bytes(4) != "TGVM") throw FormatError("checkpoint " + path.string() + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  }

  std::map<std::string, std::pair<Shape, std::vector<double>>> stored;
  while (!r.at_end()) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    std::vector<double> values = r.f64s(shape_numel(shape));
    if (!stored.emplace(name, std::make_pair(std::move(shape), std::move(values))).second) {
      throw FormatError("checkpoint " + path.string() + ": duplicate parameter " + name);
    }
  }

  for (auto& [name, tensor] : params) {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError("checkpoint is missing parameter " + name);
    if (it->second.first != tensor.shape()) {
      throw FormatError("parameter " + name + " has shape " + shape_string(it->second.first) +
                        " in checkpoint but the model config expects " + shape_string(tensor.shape()));
    }
  }
  if (stored.size() != params.size()) {
    for (const auto& [name, entry] : stored) {
      bool known = std::any_of(params.begin(), params.end(), [&](const NamedParameter& p) { return p.name == name; });
      if (!known) throw FormatError("checkpoint has parameter " + name + " that the model config does not define");
    }
  }
  for (auto& [name, tensor] : params) {
    const std::vector<double>& values = stored.at(name).second;
    std::copy(values.begin(), values.end(), tensor.data().begin());
  }
}

}  // namespace tgvlm
