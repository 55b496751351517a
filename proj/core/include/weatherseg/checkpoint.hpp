#pragma once

#include <filesystem>

#include "weatherseg/config.hpp"
#include "weatherseg/optim.hpp"
#include "weatherseg/segnet.hpp"

// Binary checkpoint container:
//
//   bytes 0..7    magic "WSEGCKPT"
//   u32           format version (1)
//   u64           header length in bytes
//   header        UTF-8 JSON: {"dtype", "meta", "tensors": [{name, rows, cols,
//                 offset}], "optimizer": {kind, steps, first, second}}
//   payload       raw little-endian arrays, row-major, at the listed byte
//                 offsets relative to the end of the header
//
// Reloading restores parameter and optimizer arrays bit for bit.
namespace weatherseg::ckpt {

inline constexpr int kFormatVersion = 1;

template <class T>
void save(const std::filesystem::path& path, seg::SegNet<T>& net,
          train::Optimizer<T>* optimizer, const config::Json& meta);

// Header JSON only; DataError on a missing or malformed file.
config::Json read_header(const std::filesystem::path& path);

// Loads arrays into `net` (and `optimizer` when given). Parameter names and
// shapes must match exactly. Returns the stored "meta" object.
template <class T>
config::Json load(const std::filesystem::path& path, seg::SegNet<T>& net,
                  train::Optimizer<T>* optimizer);

}  // namespace weatherseg::ckpt
