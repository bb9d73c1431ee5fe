#ifndef UWE_CHECKPOINT_HPP
#define UWE_CHECKPOINT_HPP

#include "uwe/network.hpp"
#include "uwe/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace uwe {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  NetworkConfig network;
  int epoch = 0;        // completed epochs
  long long step = 0;   // completed optimiser steps
  std::uint64_t seed = 0;
  std::string tag;      // "epoch" or "final"
};

/// Binary layout (little-endian):
///   "UWECKPT\0", uint32 version, uint32 sizeof(scalar),
///   uint64 n + n bytes of JSON metadata,
///   uint32 count + tensors for parameters, then buffers, then Adam first and
///   second moments (count 0 without optimiser state).
/// A tensor is uint32 name length, name, uint64 rows, uint64 cols and the
/// column-major values. The file is written to a temporary name and renamed.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, Model<Scalar>& model, const Adam<Scalar>* optimizer,
                     const CheckpointMeta& meta);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

/// Restores parameters, buffers and (when `optimizer` is given and the file has
/// it) the Adam state. The model must have been built with the checkpoint's
/// network configuration; any difference is reported as a CheckpointError.
template <typename Scalar>
CheckpointMeta load_checkpoint(const std::filesystem::path& path, Model<Scalar>& model, Adam<Scalar>* optimizer = nullptr);

/// Human-readable list of configuration differences, empty when equal.
std::string network_mismatch(const NetworkConfig& expected, const NetworkConfig& found);

}  // namespace uwe

#endif  // UWE_CHECKPOINT_HPP
