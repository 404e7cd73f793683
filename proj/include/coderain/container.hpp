#pragma once

#include "coderain/model.hpp"

#include <stdexcept>
#include <string>
#include <variant>

namespace coderain {

enum class ContainerErrorCode {
  bad_magic,
  truncated_payload,
  shape_mismatch,
  duplicate_tensor,
  misaligned_offset,
  bad_header,
  bad_version,
  unknown_arch,
  io_error,
};

class ContainerError : public std::runtime_error {
 public:
  ContainerError(ContainerErrorCode code_, const std::string& msg)
      : std::runtime_error(msg), code(code_) {}
  ContainerErrorCode code;
};

const char* container_error_name(ContainerErrorCode code);

// Model container layout:
//   bytes 0..7   magic "CODEMDL1"
//   bytes 8..11  header length, little-endian u32
//   header       JSON (format_version, arch, hyper, toggles, tensor table),
//                padded with trailing newlines so the payload starts on a
//                64-byte file boundary
//   payload      per-tensor little-endian float32 runs, each tensor offset
//                a multiple of 64, gaps zero-filled
inline constexpr char kContainerMagic[9] = "CODEMDL1";
inline constexpr int kContainerFormatVersion = 1;
inline constexpr int kContainerAlignment = 64;

using AnyModel = std::variant<ModelParams, MsModelParams>;

void save_model(const ModelParams& m, const std::string& path);
void save_model(const MsModelParams& m, const std::string& path);

/// Validates magic, version, architecture, tensor table and payload bounds
/// before materializing the model. save_model(load_model(p)) is
/// byte-identical to the original file.
AnyModel load_model(const std::string& path);

int model_iterations(const AnyModel& m);
DerainResult run_model(const Tensor& y, const AnyModel& m);

}  // namespace coderain
