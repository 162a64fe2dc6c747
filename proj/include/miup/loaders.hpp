#pragma once

#include <string>

#include "miup/dataset.hpp"

namespace miup {

// IDX (MNIST-family) binary pair. Magic numbers are big-endian:
//   images 0x00000803 (u8 tensor, dims = count x rows x cols)
//   labels 0x00000801 (u8 vector)
// Pixels are scaled to [0,1] and flattened row-major to d = rows*cols.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// CSV with a header row; the named label column is treated as categorical
// and re-indexed densely 0..K-1 in first-appearance order. All remaining
// columns must be numeric.
Dataset load_csv(const std::string& path, const std::string& label_column);

// Writes features plus a trailing integer `label` column, loadable again
// via load_csv(path, "label").
void save_csv(const Dataset& data, const std::string& path);

// Columnar binary snapshot (exact round trip):
//   magic "MIDS" | u32 version | u64 n | u64 d | u32 K |
//   features row-major f64 | labels i32 | u32 tag length | tag bytes
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace miup
