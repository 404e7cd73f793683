#include "coderain/container.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

namespace coderain {

using nlohmann::json;

const char* container_error_name(ContainerErrorCode code) {
  switch (code) {
    case ContainerErrorCode::bad_magic:
      return "bad magic";
    case ContainerErrorCode::truncated_payload:
      return "truncated payload";
    case ContainerErrorCode::shape_mismatch:
      return "shape mismatch";
    case ContainerErrorCode::duplicate_tensor:
      return "duplicate tensor";
    case ContainerErrorCode::misaligned_offset:
      return "misaligned offset";
    case ContainerErrorCode::bad_header:
      return "bad header";
    case ContainerErrorCode::bad_version:
      return "bad version";
    case ContainerErrorCode::unknown_arch:
      return "unknown arch";
    default:
      return "io error";
  }
}

namespace {

std::size_t align_up(std::size_t n, std::size_t a) { return (n + a - 1) / a * a; }

struct TensorEntry {
  std::string name;
  std::vector<int> shape;
  std::size_t byte_offset = 0;
  std::size_t numel = 0;
};

json hyper_json(const ModelParams& m) {
  return json{{"p", m.p}, {"c", m.c}, {"s", m.ksize}, {"T", m.T}, {"rho", m.rho}};
}

json hyper_json(const MsModelParams& m) {
  return json{{"p", m.p},           {"c", m.c},           {"s1", m.scale_sizes[0]},
              {"s2", m.scale_sizes[1]}, {"s3", m.scale_sizes[2]}, {"T", m.T},
              {"rho", m.rho}};
}

json toggles_json(const Toggles& t) {
  return json{{"grl", t.grl}, {"lrl", t.lrl}, {"pa", t.pa}, {"rw", t.rw}};
}

Toggles toggles_from_json(const json& j) {
  Toggles t;
  t.grl = j.at("grl").get<bool>();
  t.lrl = j.at("lrl").get<bool>();
  t.pa = j.at("pa").get<bool>();
  t.rw = j.at("rw").get<bool>();
  return t;
}

template <typename Model>
void save_impl(const Model& m, const std::string& arch, const std::string& path) {
  auto refs = tensor_refs(const_cast<Model&>(m));
  json tensors = json::array();
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& ref : refs) {
    offsets.push_back(offset);
    tensors.push_back(
        {{"name", ref.name}, {"shape", ref.shape}, {"byte_offset", offset}});
    offset = align_up(offset + ref.data->size() * sizeof(float), kContainerAlignment);
  }
  json header{{"format_version", kContainerFormatVersion},
              {"arch", arch},
              {"hyper", hyper_json(m)},
              {"toggles", toggles_json(m.toggles)},
              {"tensors", tensors}};
  std::string header_text = header.dump();
  while ((12 + header_text.size()) % kContainerAlignment != 0) header_text.push_back('\n');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContainerError(ContainerErrorCode::io_error, "cannot write " + path);
  out.write(kContainerMagic, 8);
  const std::uint32_t header_len = static_cast<std::uint32_t>(header_text.size());
  out.write(reinterpret_cast<const char*>(&header_len), 4);
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

  std::size_t written = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    while (written < offsets[i]) {
      out.put('\0');
      ++written;
    }
    for (double v : *refs[i].data) {
      const float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
    written += refs[i].data->size() * sizeof(float);
  }
  if (!out) throw ContainerError(ContainerErrorCode::io_error, "write failed for " + path);
}

int require_int(const json& j, const char* key) {
  if (!j.contains(key))
    throw ContainerError(ContainerErrorCode::bad_header,
                         std::string("missing hyper field ") + key);
  return j.at(key).get<int>();
}

}  // namespace

void save_model(const ModelParams& m, const std::string& path) { save_impl(m, "code", path); }

void save_model(const MsModelParams& m, const std::string& path) { save_impl(m, "mcode", path); }

AnyModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError(ContainerErrorCode::io_error, "cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 8 || std::memcmp(bytes.data(), kContainerMagic, 8) != 0)
    throw ContainerError(ContainerErrorCode::bad_magic, "bad magic in " + path);
  if (bytes.size() < 12)
    throw ContainerError(ContainerErrorCode::bad_header, "header length missing");
  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 8, 4);
  if (12 + static_cast<std::size_t>(header_len) > bytes.size())
    throw ContainerError(ContainerErrorCode::bad_header, "header extends past end of file");

  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const json::exception& e) {
    throw ContainerError(ContainerErrorCode::bad_header, std::string("header parse: ") + e.what());
  }

  AnyModel model = [&]() -> AnyModel {
    try {
      if (header.at("format_version").get<int>() != kContainerFormatVersion)
        throw ContainerError(ContainerErrorCode::bad_version, "unsupported format version");
      const std::string arch = header.at("arch").get<std::string>();
      const json& hyper = header.at("hyper");
      const json& toggles = header.at("toggles");
      if (arch == "code") {
        ModelParams m(require_int(hyper, "p"), require_int(hyper, "c"), require_int(hyper, "s"),
                      require_int(hyper, "T"), require_int(hyper, "rho"),
                      toggles_from_json(toggles));
        return m;
      }
      if (arch == "mcode") {
        MsModelParams m(require_int(hyper, "p"), require_int(hyper, "c"),
                        {require_int(hyper, "s1"), require_int(hyper, "s2"),
                         require_int(hyper, "s3")},
                        require_int(hyper, "T"), require_int(hyper, "rho"),
                        toggles_from_json(toggles));
        return m;
      }
      throw ContainerError(ContainerErrorCode::unknown_arch, "unknown arch '" + arch + "'");
    } catch (const json::exception& e) {
      throw ContainerError(ContainerErrorCode::bad_header,
                           std::string("header fields: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw ContainerError(ContainerErrorCode::bad_header,
                           std::string("invalid hyperparameters: ") + e.what());
    }
  }();

  auto refs = std::visit([](auto& m) { return tensor_refs(m); }, model);

  if (!header.contains("tensors") || !header["tensors"].is_array())
    throw ContainerError(ContainerErrorCode::bad_header, "missing tensor table");
  std::vector<TensorEntry> entries;
  std::set<std::string> seen;
  for (const auto& t : header["tensors"]) {
    TensorEntry e;
    try {
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<std::vector<int>>();
      e.byte_offset = t.at("byte_offset").get<std::size_t>();
    } catch (const json::exception& ex) {
      throw ContainerError(ContainerErrorCode::bad_header,
                           std::string("tensor entry: ") + ex.what());
    }
    if (!seen.insert(e.name).second)
      throw ContainerError(ContainerErrorCode::duplicate_tensor,
                           "duplicate tensor '" + e.name + "'");
    e.numel = 1;
    for (int d : e.shape) {
      if (d <= 0)
        throw ContainerError(ContainerErrorCode::shape_mismatch,
                             "non-positive dimension in tensor '" + e.name + "'");
      e.numel *= static_cast<std::size_t>(d);
    }
    if (e.byte_offset % kContainerAlignment != 0)
      throw ContainerError(ContainerErrorCode::misaligned_offset,
                           "tensor '" + e.name + "' offset " + std::to_string(e.byte_offset) +
                               " is not 64-byte aligned");
    entries.push_back(std::move(e));
  }

  if (entries.size() != refs.size())
    throw ContainerError(ContainerErrorCode::shape_mismatch,
                         "tensor table has " + std::to_string(entries.size()) + " entries, model needs " +
                             std::to_string(refs.size()));

  const std::size_t payload_start = 12 + header_len;
  std::vector<std::pair<std::size_t, std::size_t>> runs;  // offset, bytes
  for (auto& ref : refs) {
    const TensorEntry* entry = nullptr;
    for (const auto& e : entries)
      if (e.name == ref.name) {
        entry = &e;
        break;
      }
    if (!entry)
      throw ContainerError(ContainerErrorCode::shape_mismatch,
                           "tensor '" + ref.name + "' missing from container");
    if (entry->shape != ref.shape)
      throw ContainerError(ContainerErrorCode::shape_mismatch,
                           "tensor '" + ref.name + "' has unexpected shape");
    const std::size_t byte_len = entry->numel * sizeof(float);
    if (payload_start + entry->byte_offset + byte_len > bytes.size())
      throw ContainerError(ContainerErrorCode::truncated_payload,
                           "payload truncated at tensor '" + ref.name + "'");
    runs.emplace_back(entry->byte_offset, byte_len);

    const char* src = bytes.data() + payload_start + entry->byte_offset;
    for (std::size_t i = 0; i < ref.data->size(); ++i) {
      float f = 0.0f;
      std::memcpy(&f, src + i * sizeof(float), sizeof(float));
      (*ref.data)[i] = static_cast<double>(f);
    }
  }

  std::sort(runs.begin(), runs.end());
  for (std::size_t i = 1; i < runs.size(); ++i)
    if (runs[i].first < runs[i - 1].first + runs[i - 1].second)
      throw ContainerError(ContainerErrorCode::bad_header, "overlapping payload runs");

  return model;
}

int model_iterations(const AnyModel& m) {
  return std::visit([](const auto& model) { return model.T; }, m);
}

DerainResult run_model(const Tensor& y, const AnyModel& m) {
  if (std::holds_alternative<ModelParams>(m)) return derain(y, std::get<ModelParams>(m));
  return derain_multiscale(y, std::get<MsModelParams>(m));
}

}  // namespace coderain
