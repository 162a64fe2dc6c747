#include "miup/loaders.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace miup {
namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;
constexpr char kSnapshotMagic[4] = {'M', 'I', 'D', 'S'};
constexpr std::uint32_t kSnapshotVersion = 1;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), 4);
  if (!in) throw std::runtime_error("truncated IDX header in " + path);
  return (static_cast<std::uint32_t>(buf[0]) << 24) |
         (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) |
         static_cast<std::uint32_t>(buf[3]);
}

std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return in;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images = open_binary(images_path);
  const std::uint32_t image_magic = read_be32(images, images_path);
  if (image_magic != kImagesMagic) {
    std::ostringstream msg;
    msg << "bad IDX image magic 0x" << std::hex << std::setw(8) << std::setfill('0')
        << image_magic << " in " << images_path;
    throw std::runtime_error(msg.str());
  }
  const std::uint32_t count = read_be32(images, images_path);
  const std::uint32_t rows = read_be32(images, images_path);
  const std::uint32_t cols = read_be32(images, images_path);

  std::ifstream labels = open_binary(labels_path);
  const std::uint32_t label_magic = read_be32(labels, labels_path);
  if (label_magic != kLabelsMagic) {
    std::ostringstream msg;
    msg << "bad IDX label magic 0x" << std::hex << std::setw(8) << std::setfill('0')
        << label_magic << " in " << labels_path;
    throw std::runtime_error(msg.str());
  }
  const std::uint32_t label_count = read_be32(labels, labels_path);
  if (label_count != count) {
    std::ostringstream msg;
    msg << "IDX count mismatch: " << count << " images vs " << label_count
        << " labels";
    throw std::runtime_error(msg.str());
  }

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(count),
                      static_cast<Eigen::Index>(pixels));
  out.labels.resize(count);
  out.source_tag = images_path;

  std::vector<unsigned char> row(pixels);
  for (std::uint32_t i = 0; i < count; ++i) {
    images.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(pixels));
    if (!images) {
      throw std::runtime_error("truncated IDX image data in " + images_path);
    }
    for (std::size_t j = 0; j < pixels; ++j) {
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<double>(row[j]) / 255.0;
    }
  }
  std::vector<unsigned char> raw_labels(count);
  labels.read(reinterpret_cast<char*>(raw_labels.data()),
              static_cast<std::streamsize>(count));
  if (!labels) throw std::runtime_error("truncated IDX label data in " + labels_path);

  int max_label = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    out.labels[i] = static_cast<int>(raw_labels[i]);
    max_label = std::max(max_label, out.labels[i]);
  }
  out.num_classes = max_label + 1;
  validate_dataset(out);
  return out;
}

Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV: " + path);

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };

  const std::vector<std::string> header = split(line);
  int label_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) {
      label_idx = static_cast<int>(i);
      break;
    }
  }
  if (label_idx < 0) {
    throw std::runtime_error("CSV label column not found: " + label_column);
  }
  const std::size_t n_cols = header.size();
  const std::size_t d = n_cols - 1;
  if (d == 0) throw std::runtime_error("CSV has no feature columns: " + path);

  std::vector<double> values;
  std::vector<std::string> raw_labels;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != n_cols) {
      std::ostringstream msg;
      msg << "CSV row " << row_no << " has " << cells.size() << " cells, expected "
          << n_cols;
      throw std::runtime_error(msg.str());
    }
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (static_cast<int>(c) == label_idx) {
        raw_labels.push_back(cells[c]);
        continue;
      }
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[c], &used);
        if (used != cells[c].size()) throw std::invalid_argument("trailing chars");
        values.push_back(v);
      } catch (const std::exception&) {
        std::ostringstream msg;
        msg << "CSV parse error at row " << row_no << ", column '" << header[c]
            << "': non-numeric cell '" << cells[c] << "'";
        throw std::runtime_error(msg.str());
      }
    }
  }

  const std::size_t n = raw_labels.size();
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          values[i * d + j];
    }
  }
  // Dense re-index in first-appearance order.
  std::unordered_map<std::string, int> index;
  out.labels.reserve(n);
  for (const auto& raw : raw_labels) {
    auto [it, inserted] = index.try_emplace(raw, static_cast<int>(index.size()));
    out.labels.push_back(it->second);
  }
  out.num_classes = static_cast<int>(index.size());
  out.source_tag = path;
  validate_dataset(out);
  return out;
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (Eigen::Index j = 0; j < data.dim(); ++j) out << "f" << j << ",";
  out << "label\n";
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) out << data.features(i, j) << ",";
    out << data.labels[static_cast<std::size_t>(i)] << "\n";
  }
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write(kSnapshotMagic, 4);
  auto write_u32 = [&](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  auto write_u64 = [&](std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  write_u32(kSnapshotVersion);
  write_u64(static_cast<std::uint64_t>(data.size()));
  write_u64(static_cast<std::uint64_t>(data.dim()));
  write_u32(static_cast<std::uint32_t>(data.num_classes));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      const double v = data.features(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  for (int label : data.labels) {
    const std::int32_t v = label;
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  write_u32(static_cast<std::uint32_t>(data.source_tag.size()));
  out.write(data.source_tag.data(),
            static_cast<std::streamsize>(data.source_tag.size()));
  if (!out) throw std::runtime_error("failed writing dataset snapshot: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in = open_binary(path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kSnapshotMagic, 4) != 0) {
    throw std::runtime_error("bad dataset snapshot magic in " + path);
  }
  auto read_u32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  };
  auto read_u64 = [&]() {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  };
  const std::uint32_t version = read_u32();
  if (version != kSnapshotVersion) {
    throw std::runtime_error("unsupported dataset snapshot version in " + path);
  }
  const std::uint64_t n = read_u64();
  const std::uint64_t d = read_u64();
  const std::uint32_t k = read_u32();
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t j = 0; j < d; ++j) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  out.labels.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::int32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    out.labels[i] = v;
  }
  out.num_classes = static_cast<int>(k);
  const std::uint32_t tag_len = read_u32();
  std::string tag(tag_len, '\0');
  in.read(tag.data(), tag_len);
  out.source_tag = tag;
  if (!in) throw std::runtime_error("truncated dataset snapshot: " + path);
  validate_dataset(out);
  return out;
}

}  // namespace miup
